"""Derivatives, mixed-rate alignment, disjoint windowing, and task labeling.

Episodes are cut into disjoint fixed-length windows (default 90 steps = 3 s at
30 Hz). Annotation tracks sampled at 5 Hz are upsampled to the channel rate by
sample-and-hold before slicing, then collapsed to per-window dummy-variable
proportions. Two binary targets are derived per window:

* engagement ("LDP"): the listener's binarized engagement state at the final
  step of the window, predicted from the first 89 steps;
* backchanneling extent ("BEP"): whether the listener's backchannel coverage
  in the *next* window exceeds the threshold tau.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Corpus, EpisodeTable

LDP_CLASSES = ("listening", "not-listening")   # index 1 is the reported class
BEP_CLASSES = ("low", "high")                  # index 1 is the reported class

DEFAULT_W_STEPS = 90


@dataclass
class LabelConfig:
    """Labeling parameters; serializable so runs are reproducible from JSON."""

    tau: float = 0.25
    w_steps: int = DEFAULT_W_STEPS
    engagement_track: str = "engagement"
    # annotation code -> "listening" | "not-listening"
    engagement_map: dict[str, str] = field(
        default_factory=lambda: {"attentive": "listening", "not-listening": "not-listening"}
    )
    # track -> codes that count as an active backchannel response
    bc_tracks: dict[str, list[str]] = field(
        default_factory=lambda: {"nod": ["nod"], "smile": ["smile"]}
    )

    def to_json(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(
                {
                    "tau": self.tau,
                    "w_steps": self.w_steps,
                    "engagement_track": self.engagement_track,
                    "engagement_map": self.engagement_map,
                    "bc_tracks": self.bc_tracks,
                },
                fh,
                indent=2,
            )
            fh.write("\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "LabelConfig":
        with open(path) as fh:
            raw = json.load(fh)
        return cls(
            tau=float(raw.get("tau", 0.25)),
            w_steps=int(raw.get("w_steps", DEFAULT_W_STEPS)),
            engagement_track=raw.get("engagement_track", "engagement"),
            engagement_map=dict(raw.get("engagement_map", {})),
            bc_tracks={k: list(v) for k, v in raw.get("bc_tracks", {}).items()},
        )


@dataclass(eq=False)
class Window:
    """One disjoint window of an episode. Labels are filled by the task assembly."""

    window_index: int
    episode_id: str
    speaker_id: str
    listener_id: str
    raw: np.ndarray                     # (w_steps, n_channels), full window
    annotations: dict[str, np.ndarray]  # track -> upsampled codes, length w_steps
    aggregated_annotations: np.ndarray | None = None
    label_ldp: int | None = None
    label_bep: int | None = None
    bc_proportion: float | None = None


@dataclass(eq=False)
class WindowSet:
    """Homogeneous collection of labeled windows for one task."""

    windows: list[Window]
    channel_names: list[str]
    dummy_names: list[str]
    w_steps: int
    task: str  # "LDP" | "BEP"

    def __len__(self) -> int:
        return len(self.windows)

    @property
    def feature_steps(self) -> int:
        # Engagement is predicted at step 90 from the preceding 89 steps only.
        return self.w_steps - 1 if self.task == "LDP" else self.w_steps

    def tensor(self) -> np.ndarray:
        """Raw view (windows x timesteps x channels); 89 steps for LDP, 90 for BEP."""
        steps = self.feature_steps
        return np.stack([w.raw[:steps, :] for w in self.windows], axis=0)

    def aggregates(self) -> np.ndarray:
        """Dummy-proportion matrix (windows x dummies); empty second axis if none."""
        if not self.dummy_names:
            return np.zeros((len(self.windows), 0), dtype=np.float64)
        return np.stack([w.aggregated_annotations for w in self.windows], axis=0)

    def labels(self) -> np.ndarray:
        key = "label_ldp" if self.task == "LDP" else "label_bep"
        return np.array([getattr(w, key) for w in self.windows], dtype=np.int64)

    def window_ids(self) -> list[str]:
        return [f"{w.episode_id}:{w.window_index}" for w in self.windows]

    def episode_ids(self) -> list[str]:
        return [w.episode_id for w in self.windows]

    def listener_ids(self) -> list[str]:
        return [w.listener_id for w in self.windows]

    def speaker_ids(self) -> list[str]:
        return [w.speaker_id for w in self.windows]

    def class_names(self) -> tuple[str, str]:
        return LDP_CLASSES if self.task == "LDP" else BEP_CLASSES


def derivative(series) -> np.ndarray:
    """First differences at the boundaries, central differences in the interior.

    Unit sample spacing; output length equals input length, so derivative
    channels align step-for-step with their source.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.size < 2:
        raise ValueError("series too short: derivative needs at least 2 samples")
    return np.gradient(series)


def derive_channels(
    episode: EpisodeTable, spec: list[tuple[str, int]]
) -> EpisodeTable:
    """Extend an episode with derivative channels named ``<src>'`` / ``<src>''``."""
    extra: dict[str, np.ndarray] = {}
    for source, order in spec:
        if source not in episode.continuous:
            raise ValueError(f"unknown source channel '{source}'")
        if order not in (1, 2):
            raise ValueError(f"derivative order must be 1 or 2, got {order}")
        values = derivative(episode.continuous[source])
        if order == 2:
            values = derivative(values)
        extra[source + "'" * order] = values
    return episode.with_channels(extra)


def upsample_track(codes: np.ndarray, factor: int) -> np.ndarray:
    """Sample-and-hold upsampling of an annotation track to the channel rate."""
    return np.repeat(codes, factor)


def make_windows(episode: EpisodeTable, w_steps: int = DEFAULT_W_STEPS) -> list[Window]:
    """Cut an episode into floor(L / w_steps) disjoint windows, remainder discarded."""
    if w_steps < 2:
        raise ValueError(f"w_steps must be >= 2, got {w_steps}")
    channels = episode.channel_names()
    length = episode.n_steps
    n_windows = length // w_steps
    if n_windows == 0:
        return []
    raw_all = np.column_stack([episode.continuous[c][:length] for c in channels])
    factor = episode.upsample_factor
    upsampled = {name: upsample_track(track, factor) for name, track in episode.annotations.items()}
    windows = []
    for i in range(n_windows):
        lo, hi = i * w_steps, (i + 1) * w_steps
        windows.append(
            Window(
                window_index=i,
                episode_id=episode.episode_id,
                speaker_id=episode.speaker_id,
                listener_id=episode.listener_id,
                raw=raw_all[lo:hi, :].copy(),
                annotations={name: up[lo:hi] for name, up in upsampled.items()},
            )
        )
    return windows


def aggregate_annotations(
    window: Window,
    vocab: dict[str, tuple[str, ...]],
    steps_used: int,
    tracks: list[str] | None = None,
) -> tuple[list[str], np.ndarray]:
    """Dummy-variable proportions over the first ``steps_used`` steps of a window.

    One dummy per vocabulary value per track; each track's dummies partition the
    counted steps and therefore sum to 1.
    """
    if tracks is None:
        tracks = list(vocab)
    names: list[str] = []
    values: list[float] = []
    for track in tracks:
        codes = window.annotations[track][:steps_used]
        for value in vocab[track]:
            names.append(f"{track}_{value}")
            values.append(float(np.count_nonzero(codes == value)) / steps_used)
    return names, np.asarray(values, dtype=np.float64)


def label_ldp(window: Window, engagement_track: str, engagement_map: dict[str, str]) -> int:
    """Binarized engagement state at the window's final step (1 = not-listening)."""
    code = window.annotations[engagement_track][-1]
    if code not in engagement_map:
        raise ValueError(
            f"engagement code '{code}' not in binarization map "
            f"(episode {window.episode_id}, window {window.window_index})"
        )
    return LDP_CLASSES.index(engagement_map[code])


def bc_active_mask(window: Window, bc_tracks: dict[str, list[str]]) -> np.ndarray:
    """Boolean mask of steps where at least one configured backchannel is active."""
    w = window.raw.shape[0]
    active = np.zeros(w, dtype=bool)
    for track, codes in bc_tracks.items():
        if track not in window.annotations:
            raise ValueError(f"unknown track '{track}' in backchannel configuration")
        track_codes = window.annotations[track]
        for code in codes:
            active |= track_codes == code
    return active


def bc_proportion(next_window: Window, bc_tracks: dict[str, list[str]]) -> float:
    """Fraction of steps in a window with one or more active backchannel responses."""
    active = bc_active_mask(next_window, bc_tracks)
    return float(np.count_nonzero(active)) / active.size


def label_bep(p: float, tau: float) -> int:
    """1 (high backchanneling) iff p > tau; the boundary p == tau is low."""
    return int(p > tau)


def episode_proportions(episode: EpisodeTable, cfg: LabelConfig) -> tuple[float, float]:
    """Per-episode (backchanneling, listening) fractions over all annotated steps."""
    n = episode.n_annot_steps
    active = np.zeros(n, dtype=bool)
    for track, codes in cfg.bc_tracks.items():
        if track not in episode.annotations:
            raise ValueError(
                f"episode {episode.episode_id}: missing annotation track '{track}'"
            )
        track_codes = episode.annotations[track]
        for code in codes:
            active |= track_codes == code
    if cfg.engagement_track not in episode.annotations:
        raise ValueError(
            f"episode {episode.episode_id}: missing annotation track '{cfg.engagement_track}'"
        )
    engagement = episode.annotations[cfg.engagement_track]
    listening = np.zeros(n, dtype=bool)
    for code, cls in cfg.engagement_map.items():
        if cls == "listening":
            listening |= engagement == code
    return float(np.count_nonzero(active)) / n, float(np.count_nonzero(listening)) / n


def _dummy_tracks_for_task(corpus: Corpus, cfg: LabelConfig, task: str) -> list[str]:
    # The engagement track is the LDP target; its dummies would leak the label.
    return [t for t in corpus.annotation_vocab if t != cfg.engagement_track]


def build_windowset(
    corpus: Corpus,
    task: str,
    cfg: LabelConfig,
    channels: list[str] | None = None,
    include_annotations: bool = True,
) -> WindowSet:
    """Assemble the labeled WindowSet for one task across all episodes.

    For BEP the final window of each episode has no next-window target and is
    dropped. ``channels`` restricts the raw tensor to a subset (manifest order).
    """
    task = task.upper()
    if task not in ("LDP", "BEP"):
        raise ValueError(f"unknown task '{task}'")
    tracks = _dummy_tracks_for_task(corpus, cfg, task) if include_annotations else []
    steps_used = cfg.w_steps - 1 if task == "LDP" else cfg.w_steps

    all_windows: list[Window] = []
    dummy_names: list[str] = []
    channel_order: list[str] = []
    for episode in corpus.episodes:
        ep_channels = episode.channel_names()
        selected = [c for c in (channels or ep_channels) if c in ep_channels]
        if channels is not None and len(selected) != len(channels):
            missing = sorted(set(channels) - set(ep_channels))
            raise ValueError(
                f"episode {episode.episode_id}: unknown channels {missing}"
            )
        windows = make_windows(episode, cfg.w_steps)
        col_idx = [ep_channels.index(c) for c in selected]
        for w in windows:
            w.raw = w.raw[:, col_idx]
        channel_order = selected
        for i, w in enumerate(windows):
            if tracks:
                dummy_names, aggregated = aggregate_annotations(
                    w, corpus.annotation_vocab, steps_used, tracks
                )
                w.aggregated_annotations = aggregated
            if task == "LDP":
                w.label_ldp = label_ldp(w, cfg.engagement_track, cfg.engagement_map)
                all_windows.append(w)
            else:
                if i + 1 >= len(windows):
                    continue  # final window: next-window behavior unobserved
                p = bc_proportion(windows[i + 1], cfg.bc_tracks)
                w.bc_proportion = p
                w.label_bep = label_bep(p, cfg.tau)
                all_windows.append(w)

    return WindowSet(
        windows=all_windows,
        channel_names=channel_order,
        dummy_names=dummy_names,
        w_steps=cfg.w_steps,
        task=task,
    )


# ---------------------------------------------------------------------------
# Window-table serialization: dense binary tensor + JSON sidecar, or long CSV.
# Both layouts round-trip exactly (binary bit-for-bit, CSV via repr floats).
# ---------------------------------------------------------------------------

WINDOWS_FORMAT = "tscope-windows"
WINDOWS_VERSION = 1


def _sidecar(ws: WindowSet, layout: str) -> dict:
    records = []
    for w in ws.windows:
        records.append(
            {
                "episode_id": w.episode_id,
                "window_index": w.window_index,
                "speaker_id": w.speaker_id,
                "listener_id": w.listener_id,
                "label_ldp": w.label_ldp,
                "label_bep": w.label_bep,
                "bc_proportion": w.bc_proportion,
                "aggregated_annotations": (
                    None
                    if w.aggregated_annotations is None
                    else w.aggregated_annotations.tolist()
                ),
            }
        )
    return {
        "format": WINDOWS_FORMAT,
        "version": WINDOWS_VERSION,
        "layout": layout,
        "task": ws.task,
        "w_steps": ws.w_steps,
        "channel_names": ws.channel_names,
        "dummy_names": ws.dummy_names,
        "dims": [len(ws.windows), ws.w_steps, len(ws.channel_names)],
        "dtype": "<f8",
        "windows": records,
    }


def save_windowset(ws: WindowSet, basepath: str | Path, layout: str = "binary") -> list[Path]:
    """Write ``<base>.json`` plus ``<base>.bin`` (dense tensor) or ``<base>.csv`` (long form)."""
    base = Path(basepath)
    sidecar = _sidecar(ws, layout)
    written = []
    tensor = np.stack([w.raw for w in ws.windows], axis=0) if ws.windows else np.zeros(
        (0, ws.w_steps, len(ws.channel_names))
    )
    if layout == "binary":
        path = base.with_suffix(".bin")
        tensor.astype("<f8").tofile(path)
        written.append(path)
    elif layout == "csv":
        path = base.with_suffix(".csv")
        with open(path, "w", newline="") as fh:
            fh.write("window,channel,timestep,value\n")
            for i in range(tensor.shape[0]):
                for c, name in enumerate(ws.channel_names):
                    col = tensor[i, :, c]
                    for t in range(ws.w_steps):
                        fh.write(f"{i},{name},{t},{float(col[t])!r}\n")
        written.append(path)
    else:
        raise ValueError(f"unknown layout '{layout}'")
    json_path = base.with_suffix(".json")
    with open(json_path, "w") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")
    written.append(json_path)
    return written


def load_windowset(basepath: str | Path) -> WindowSet:
    base = Path(basepath)
    with open(base.with_suffix(".json")) as fh:
        sidecar = json.load(fh)
    if sidecar.get("format") != WINDOWS_FORMAT:
        raise ValueError(f"{base}: not a {WINDOWS_FORMAT} sidecar")
    n, w_steps, n_channels = sidecar["dims"]
    layout = sidecar["layout"]
    if layout == "binary":
        tensor = np.fromfile(base.with_suffix(".bin"), dtype="<f8").reshape(
            n, w_steps, n_channels
        )
    else:
        tensor = np.zeros((n, w_steps, n_channels), dtype=np.float64)
        channel_idx = {name: c for c, name in enumerate(sidecar["channel_names"])}
        with open(base.with_suffix(".csv")) as fh:
            header = fh.readline()
            assert header.strip() == "window,channel,timestep,value"
            for line in fh:
                i, name, t, value = line.rstrip("\n").split(",")
                tensor[int(i), int(t), channel_idx[name]] = float(value)
    windows = []
    for i, rec in enumerate(sidecar["windows"]):
        agg = rec["aggregated_annotations"]
        windows.append(
            Window(
                window_index=rec["window_index"],
                episode_id=rec["episode_id"],
                speaker_id=rec["speaker_id"],
                listener_id=rec["listener_id"],
                raw=tensor[i],
                annotations={},
                aggregated_annotations=None if agg is None else np.asarray(agg),
                label_ldp=rec["label_ldp"],
                label_bep=rec["label_bep"],
                bc_proportion=rec["bc_proportion"],
            )
        )
    return WindowSet(
        windows=windows,
        channel_names=list(sidecar["channel_names"]),
        dummy_names=list(sidecar["dummy_names"]),
        w_steps=w_steps,
        task=sidecar["task"],
    )
