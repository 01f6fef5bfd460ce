"""Command-line front end.

Every command reads declared inputs, writes its outputs atomically (staged in a
temp directory, then renamed into place), embeds the resolved config hash in
the files it owns, and appends one line to ``run.log`` in the output directory.
Identical config + seed always reproduces byte-identical outputs; the run log
is the only file that records wall time and is not part of that contract.

Exit codes: 0 success, 2 bad configuration, 3 data validation failure,
4 numerical failure. Failures print a single machine-parseable JSON line to
stderr. ``--seed`` falls back to the TSCOPE_SEED environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import characterize as chz
from . import interpret, preprocess, report, stats
from .core import CorpusError, load_corpus
from .evaluate import plan_folds, run_cv, save_metrics
from .forest import ForestModel, ForestParams, train_forest
from .pipeline import (
    RunConfig,
    ForestTrainer,
    ResnetTrainer,
    build_feature_matrix,
    build_task_windows,
    build_tensor_data,
    cv_evaluator,
    evaluate_run,
    holdout_split,
    make_dataset,
    make_trainer,
)
from .preprocess import LabelConfig, build_windowset, load_windowset, save_windowset
from .resnet import ResnetConfig, ResnetModel, TrainingDivergedError, train_resnet_arrays
from .synth import config_from_json, generate


class ConfigError(ValueError):
    """Bad command-line or config-file input (exit 2)."""


EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


# ---------------------------------------------------------------------------
# Output staging: write everything to a scratch dir, then rename into place.
# ---------------------------------------------------------------------------

class OutputStage:
    def __init__(self, out_dir: str | Path):
        self.out_dir = Path(out_dir)
        self.stage_dir = self.out_dir / f".stage-{os.getpid()}"
        self.stage_dir.mkdir(parents=True, exist_ok=True)

    def path(self, *parts: str) -> Path:
        p = self.stage_dir.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def publish(self) -> list[str]:
        published = []
        for src in sorted(self.stage_dir.rglob("*")):
            if src.is_dir():
                continue
            rel = src.relative_to(self.stage_dir)
            dest = self.out_dir / rel
            dest.parent.mkdir(parents=True, exist_ok=True)
            os.replace(src, dest)
            published.append(str(rel))
        self._cleanup()
        return published

    def _cleanup(self) -> None:
        for d in sorted(self.stage_dir.rglob("*"), reverse=True):
            if d.is_dir():
                d.rmdir()
        if self.stage_dir.exists():
            self.stage_dir.rmdir()


def _append_run_log(out_dir: Path, command: str, config_hash: str, seed: int, t0: float,
                    outputs: list[str]) -> None:
    line = json.dumps(
        {
            "command": command,
            "config_hash": config_hash,
            "seed": seed,
            "wall_time_s": round(time.monotonic() - t0, 3),
            "outputs": outputs,
        }
    )
    with open(out_dir / "run.log", "a") as fh:
        fh.write(line + "\n")


def _resolve_seed(args, config_seed: int | None = None) -> int:
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    env = os.environ.get("TSCOPE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"TSCOPE_SEED is not an integer: {env!r}") from exc
    if config_seed is not None:
        return int(config_seed)
    return 0


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc


def _label_config(args) -> LabelConfig:
    if getattr(args, "label_config", None):
        cfg = LabelConfig.from_json(args.label_config)
    else:
        cfg = LabelConfig()
    if getattr(args, "tau", None) is not None:
        cfg.tau = float(args.tau)
    return cfg


def _run_config(args) -> RunConfig:
    """RunConfig from --config JSON (if given) with flag overrides on top."""
    raw = _load_json(args.config) if getattr(args, "config", None) else {}
    for key in ("task", "tau", "agg", "model", "cv", "k", "group_by", "select_fdr"):
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = value
    if getattr(args, "features", None):
        raw["features"] = [f.strip() for f in args.features.split(",") if f.strip()]
    forest_raw = dict(raw.get("forest", {}))
    if getattr(args, "trees", None) is not None:
        forest_raw["n_trees"] = args.trees
    if getattr(args, "max_depth", None) is not None:
        forest_raw["max_depth"] = args.max_depth
    raw["forest"] = forest_raw
    resnet_raw = dict(raw.get("resnet", {}))
    for flag, key in (("epochs", "epochs"), ("batch_size", "batch_size"),
                      ("lr", "lr"), ("patience", "patience"), ("dtype", "dtype")):
        value = getattr(args, flag, None)
        if value is not None:
            resnet_raw[key] = value
    raw["resnet"] = resnet_raw
    raw["seed"] = _resolve_seed(args, raw.get("seed"))
    if getattr(args, "label_config", None):
        with open(args.label_config) as fh:
            raw["label_config"] = json.load(fh)
    try:
        return RunConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _load_corpus(path: str):
    if not path:
        raise ConfigError("--corpus is required")
    return load_corpus(path)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    t0 = time.monotonic()
    raw = _load_json(args.config) if args.config else {}
    raw["seed"] = _resolve_seed(args, raw.get("seed"))
    try:
        config = config_from_json(raw)
        config.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    config_hash = _hash_dict({"command": "synth", **raw})
    stage = OutputStage(args.out)
    _, truth = generate(config, out_dir=stage.stage_dir)
    manifest_path = stage.stage_dir / "corpus.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["config_hash"] = config_hash
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    truth_path = stage.stage_dir / "ground_truth.json"
    truth_raw = json.loads(truth_path.read_text())
    truth_raw["config_hash"] = config_hash
    truth_path.write_text(json.dumps(truth_raw, indent=2) + "\n")
    outputs = stage.publish()
    _append_run_log(Path(args.out), "synth", config_hash, config.seed, t0, outputs)
    return 0


def cmd_window(args) -> int:
    t0 = time.monotonic()
    corpus = _load_corpus(args.corpus)
    cfg = _label_config(args)
    seed = _resolve_seed(args)
    task = args.task.lower()
    config_hash = _hash_dict(
        {
            "command": "window",
            "task": task,
            "tau": cfg.tau,
            "w_steps": cfg.w_steps,
            "layout": args.layout,
            "seed": seed,
        }
    )
    ws = build_windowset(corpus, task, cfg, include_annotations=True)
    stage = OutputStage(args.out)
    save_windowset(ws, stage.path(f"windows_{task}"), layout=args.layout)
    sidecar_path = stage.stage_dir / f"windows_{task}.json"
    sidecar = json.loads(sidecar_path.read_text())
    sidecar["config_hash"] = config_hash
    sidecar_path.write_text(json.dumps(sidecar, indent=2) + "\n")
    outputs = stage.publish()
    _append_run_log(Path(args.out), "window", config_hash, seed, t0, outputs)
    return 0


def cmd_featurize(args) -> int:
    t0 = time.monotonic()
    ws = load_windowset(args.windows)
    seed = _resolve_seed(args)
    aggset = chz.aggregate_set(args.agg)
    config_hash = _hash_dict(
        {
            "command": "featurize",
            "agg": aggset.name,
            "annotations": not args.no_annotations,
            "seed": seed,
        }
    )
    matrix = chz.characterize(ws, aggset, include_annotations=not args.no_annotations)
    stage = OutputStage(args.out)
    base = stage.path(f"features_{ws.task.lower()}_{args.agg}")
    chz.save_feature_matrix(matrix, base, header_comment=f"config={config_hash}")
    outputs = stage.publish()
    _append_run_log(Path(args.out), "featurize", config_hash, seed, t0, outputs)
    return 0


def cmd_train(args) -> int:
    t0 = time.monotonic()
    seed = _resolve_seed(args)
    stage = OutputStage(args.out)
    if args.model == "forest":
        if not args.features:
            raise ConfigError("forest training needs --features (a featurize output base)")
        matrix = chz.load_feature_matrix(args.features)
        if matrix.labels is None:
            raise ValueError("feature matrix has no labels")
        params = ForestParams(
            n_trees=args.trees or 200,
            max_depth=args.max_depth,
            seed=seed,
        )
        config_hash = _hash_dict({"command": "train", "model": "forest",
                                  "trees": params.n_trees, "max_depth": params.max_depth,
                                  "seed": seed})
        model = train_forest(matrix, params=params, jobs=args.jobs)
        path = stage.path("model_forest.json")
        model.save(path)
        payload = json.loads(path.read_text())
        payload["config_hash"] = config_hash
        path.write_text(json.dumps(payload) + "\n")
    else:
        if not args.windows:
            raise ConfigError("resnet training needs --windows (a window output base)")
        ws = load_windowset(args.windows)
        rc = ResnetConfig(
            epochs=args.epochs or 100,
            batch_size=args.batch_size or 16,
            lr=args.lr or 1e-3,
            dtype=args.dtype or "float64",
        )
        config_hash = _hash_dict({"command": "train", "model": "resnet",
                                  "epochs": rc.epochs, "batch_size": rc.batch_size,
                                  "lr": rc.lr, "dtype": rc.dtype, "seed": seed})
        statics = ws.aggregates() if ws.dummy_names else None
        model = train_resnet_arrays(
            ws.tensor(),
            statics,
            ws.labels(),
            config=rc,
            seed=seed,
            channel_names=list(ws.channel_names),
            static_names=list(ws.dummy_names),
            class_names=ws.class_names(),
        )
        model.save(stage.path("model_resnet"))
        sidecar = stage.stage_dir / "model_resnet.json"
        payload = json.loads(sidecar.read_text())
        payload["config_hash"] = config_hash
        sidecar.write_text(json.dumps(payload, indent=2) + "\n")
    outputs = stage.publish()
    _append_run_log(Path(args.out), "train", config_hash, seed, t0, outputs)
    return 0


def cmd_evaluate(args) -> int:
    t0 = time.monotonic()
    config = _run_config(args)
    corpus = _load_corpus(args.corpus)
    result = evaluate_run(corpus, config, jobs=args.jobs)
    config_hash = config.config_hash()
    stage = OutputStage(args.out)
    save_metrics(
        result,
        stage.path("metrics"),
        extra={"config_hash": config_hash, "config": config.canonical()},
    )
    outputs = stage.publish()
    _append_run_log(Path(args.out), "evaluate", config_hash, config.seed, t0, outputs)
    return 0


def cmd_importance(args) -> int:
    t0 = time.monotonic()
    config = _run_config(args)
    corpus = _load_corpus(args.corpus)
    config_hash = config.config_hash()
    data = make_dataset(corpus, config)
    train_rows, test_rows = holdout_split(data, fraction=args.test_fraction, seed=config.seed)
    trainer = make_trainer(config, jobs=args.jobs)
    fitted = trainer.fit(data.take(train_rows), config.seed)
    test = data.take(test_rows)
    if config.model == "forest":
        matrix = test if fitted.columns is None else test.select_columns(fitted.columns)
        rep = interpret.mda_2d(
            fitted.model,
            matrix,
            labels=matrix.labels,
            metric=args.metric,
            runs=args.runs,
            seed=config.seed,
        )
    else:
        rep = interpret.perm_importance_3d(
            fitted,
            test.tensor,
            test.statics if test.statics.shape[1] else None,
            test.labels,
            metric=args.metric,
            runs=args.runs,
            seed=config.seed,
        )
    stage = OutputStage(args.out)
    rep.write_csv(stage.path("importance.csv"), comment=f"config={config_hash}")
    rep.write_summary(stage.path("importance_summary.json"), extra={"config_hash": config_hash})
    if args.plot:
        report.render_importance(
            stage.stage_dir / "importance.csv",
            stage.path("importance.png"),
            title=f"{config.task.upper()} {config.model} permutation importance",
        )
    outputs = stage.publish()
    _append_run_log(Path(args.out), "importance", config_hash, config.seed, t0, outputs)
    return 0


def cmd_ts_importance(args) -> int:
    t0 = time.monotonic()
    config = _run_config(args)
    if config.model != "resnet":
        config = replace(config, model="resnet")
    corpus = _load_corpus(args.corpus)
    config_hash = config.config_hash()
    data = build_tensor_data(corpus, config)
    plan = plan_folds(data, config.cv, seed=config.seed, k=config.k, group_by=config.group_by)
    evaluator = cv_evaluator(data, config, plan, metric=args.metric)
    statics = data.statics if data.statics.shape[1] else None

    # Select the top-eta channels with the 3-D permutation importance of a
    # model trained on a listener-grouped holdout.
    train_rows, test_rows = holdout_split(data, fraction=0.3, seed=config.seed)
    trainer = ResnetTrainer(config.resnet)
    probe = trainer.fit(data.take(train_rows), config.seed)
    test = data.take(test_rows)
    probe_rep = interpret.perm_importance_3d(
        probe,
        test.tensor,
        test.statics if test.statics.shape[1] else None,
        test.labels,
        metric=args.metric,
        runs=args.probe_runs,
        seed=config.seed,
    )
    channel_rank = [
        data.channel_names.index(f)
        for f in probe_rep.ranking()
        if f in data.channel_names
    ]
    top_channels = channel_rank[: min(args.eta, len(channel_rank))]

    ts = interpret.time_series_importance(
        evaluator,
        data.tensor,
        statics,
        top_channels,
        channel_names=[data.channel_names[c] for c in top_channels],
        iterations=args.iterations,
        seed=config.seed,
        metric=args.metric,
    )
    stage = OutputStage(args.out)
    ts.write_csv(stage.path("ts_importance.csv"), comment=f"config={config_hash}")
    with open(stage.path("ts_importance.json"), "w") as fh:
        json.dump(
            {
                "config_hash": config_hash,
                "metric": ts.metric,
                "eta": args.eta,
                "iterations": args.iterations,
                "channels": ts.channels,
                "baseline_score": ts.baseline_score,
                "mean_permuted_score": float(ts.permuted_scores.mean()),
                "mean_drop": ts.mean_drop(),
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    if args.plot:
        report.render_ts_importance(
            stage.stage_dir / "ts_importance.csv",
            stage.path("ts_importance.png"),
            title=f"{config.task.upper()} temporal-shuffle importance",
        )
    outputs = stage.publish()
    _append_run_log(Path(args.out), "ts-importance", config_hash, config.seed, t0, outputs)
    return 0


def cmd_pdp(args) -> int:
    t0 = time.monotonic()
    config = _run_config(args)
    corpus = _load_corpus(args.corpus)
    config_hash = config.config_hash()
    features = [args.feature] + ([args.feature2] if args.feature2 else [])
    data = make_dataset(corpus, config)
    trainer = make_trainer(config, jobs=args.jobs)
    fitted = trainer.fit(data, config.seed)
    if config.model == "forest":
        matrix = data if fitted.columns is None else data.select_columns(fitted.columns)
        pd = interpret.partial_dependence(
            fitted.model, matrix, features, grid_points=args.grid_points
        )
    else:
        statics = data.statics if data.statics.shape[1] else None
        pd = interpret.partial_dependence(
            fitted, data.tensor, features, grid_points=args.grid_points, statics=statics
        )
    stage = OutputStage(args.out)
    pd.write_csv(stage.path("pdp.csv"), comment=f"config={config_hash}")
    if args.plot:
        report.render_pdp(
            stage.stage_dir / "pdp.csv",
            stage.path("pdp.png"),
            title=" x ".join(pd.feature_names),
        )
    outputs = stage.publish()
    _append_run_log(Path(args.out), "pdp", config_hash, config.seed, t0, outputs)
    return 0


def cmd_kstest(args) -> int:
    t0 = time.monotonic()
    corpus = _load_corpus(args.corpus)
    cfg = _label_config(args)
    seed = _resolve_seed(args)
    factors = (
        _load_json(args.factors)["factors"] if args.factors else stats.default_screen_factors()
    )
    config_hash = _hash_dict(
        {"command": "kstest", "factors": factors, "n_perm": args.n_perm,
         "tau": cfg.tau, "seed": seed}
    )
    cells = stats.demographic_screen(corpus, factors, cfg, n_perm=args.n_perm, seed=seed)
    stage = OutputStage(args.out)
    stats.write_screen_csv(cells, stage.path("ks_screen.csv"), comment=f"config={config_hash}")
    ecdf_groups: dict[str, list[Path]] = {}
    for cell in cells:
        if not cell.testable:
            continue
        stem = f"{'bc' if cell.proportion == 'backchanneling' else 'listen'}_{cell.label}_{cell.role}"
        paths = []
        for g, sample in zip(cell.groups, cell.samples):
            safe_group = _safe_name(g)
            path = stage.path("ecdf", f"ecdf_{stem}_{safe_group}.csv")
            stats.write_ecdf_points(sample, path, comment=f"config={config_hash}")
            paths.append(path)
        ecdf_groups[stem] = paths
    if args.plot:
        for stem, paths in ecdf_groups.items():
            report.render_ecdf(paths, stage.path("ecdf", f"ecdf_{stem}.png"), title=stem)
    outputs = stage.publish()
    _append_run_log(Path(args.out), "kstest", config_hash, seed, t0, outputs)
    return 0


def cmd_plot(args) -> int:
    kind = args.kind
    out = Path(args.out)
    if kind == "ecdf":
        report.render_ecdf(args.data, out)
    elif kind == "pdp":
        report.render_pdp(args.data[0], out)
    elif kind == "importance":
        report.render_importance(args.data[0], out)
    elif kind == "ts-importance":
        report.render_ts_importance(args.data[0], out)
    else:
        raise ConfigError(f"unknown plot kind '{kind}'")
    return 0


def _safe_name(text: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in text)[:60]


def _hash_dict(payload: dict) -> str:
    import hashlib

    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, corpus: bool = True) -> None:
    if corpus:
        p.add_argument("--corpus", help="corpus directory (corpus.json root)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None,
                   help="RNG seed (default: TSCOPE_SEED env var, then 0)")
    p.add_argument("--jobs", type=int, default=1, help="internal parallelism bound")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="run config JSON; flags override its fields")
    p.add_argument("--task", choices=["ldp", "bep"], default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--agg", choices=["mean", "meanstdev", "basic", "tsfresh"], default=None)
    p.add_argument("--features", default=None,
                   help="comma list from: annotated,prosodic,visual,demographic")
    p.add_argument("--model", choices=["forest", "resnet"], default=None)
    p.add_argument("--cv", choices=["loso", "loeo", "stratified"], default=None)
    p.add_argument("--k", type=int, default=None, help="stratified fold count")
    p.add_argument("--group-by", dest="group_by", choices=["listener", "speaker"], default=None)
    p.add_argument("--select-fdr", dest="select_fdr", type=float, default=None)
    p.add_argument("--label-config", dest="label_config", default=None)
    p.add_argument("--trees", type=int, default=None)
    p.add_argument("--max-depth", dest="max_depth", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--dtype", choices=["float64", "float32"], default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tscope",
        description="Windowed behavioral time-series classification and interpretability",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus with ground truth")
    p.add_argument("--config", help="SynthConfig JSON")
    _add_common(p, corpus=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("window", help="cut episodes into labeled windows")
    _add_common(p)
    p.add_argument("--task", choices=["ldp", "bep"], required=True)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--label-config", dest="label_config", default=None)
    p.add_argument("--layout", choices=["binary", "csv"], default="binary")
    p.set_defaults(func=cmd_window)

    p = sub.add_parser("featurize", help="characterize windows into a feature matrix")
    p.add_argument("--windows", required=True, help="window output base path (no extension)")
    p.add_argument("--agg", choices=["mean", "meanstdev", "basic", "tsfresh"], required=True)
    p.add_argument("--no-annotations", action="store_true")
    _add_common(p, corpus=False)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train one model on prepared data")
    p.add_argument("--model", choices=["forest", "resnet"], required=True)
    p.add_argument("--features", help="featurize output base (forest)")
    p.add_argument("--windows", help="window output base (resnet)")
    p.add_argument("--trees", type=int, default=None)
    p.add_argument("--max-depth", dest="max_depth", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--dtype", choices=["float64", "float32"], default=None)
    _add_common(p, corpus=False)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="cross-validated metrics for one run config")
    _add_common(p)
    _add_run_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("importance", help="permutation feature importance (MDA)")
    _add_common(p)
    _add_run_flags(p)
    p.add_argument("--metric", choices=["accuracy", "auc", "log_loss"], default="auc")
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--test-fraction", dest="test_fraction", type=float, default=0.3)
    p.add_argument("--plot", action="store_true", help="also render a box-plot PNG")
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("ts-importance", help="temporal-shuffle importance (retraining)")
    _add_common(p)
    _add_run_flags(p)
    p.add_argument("--metric", choices=["auc", "f1"], default="auc")
    p.add_argument("--eta", type=int, default=10, help="number of top channels to shuffle")
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--probe-runs", dest="probe_runs", type=int, default=10,
                   help="importance runs used to pick the top channels")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_ts_importance)

    p = sub.add_parser("pdp", help="partial dependence of 1 or 2 features")
    _add_common(p)
    _add_run_flags(p)
    p.add_argument("--feature", required=True)
    p.add_argument("--feature2", default=None)
    p.add_argument("--grid-points", dest="grid_points", type=int, default=20)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_pdp)

    p = sub.add_parser("kstest", help="socio-demographic K-S screen")
    _add_common(p)
    p.add_argument("--factors", help="JSON file: {\"factors\": [{label, factor, rule}...]}")
    p.add_argument("--n-perm", dest="n_perm", type=int, default=1000)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--label-config", dest="label_config", default=None)
    p.add_argument("--plot", action="store_true", help="render ECDF overlays per cell")
    p.set_defaults(func=cmd_kstest)

    p = sub.add_parser("plot", help="render a data file produced by another command")
    p.add_argument("--kind", choices=["ecdf", "pdp", "importance", "ts-importance"],
                   required=True)
    p.add_argument("--data", nargs="+", required=True)
    p.add_argument("--out", required=True, help="output PNG path")
    p.set_defaults(func=cmd_plot)

    return parser


def _fail(code: int, exc: BaseException) -> int:
    print(json.dumps({"error": str(exc), "exit": code}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except (CorpusError, ValueError, FileNotFoundError, KeyError) as exc:
        return _fail(EXIT_DATA, exc)
    except (TrainingDivergedError, FloatingPointError, ArithmeticError) as exc:
        return _fail(EXIT_NUMERICAL, exc)


if __name__ == "__main__":
    sys.exit(main())
