"""Deterministic synthetic dyadic-interaction corpus with known ground truth.

Stands in for the (private) source data during verification. Continuous
channels are Gaussian AR(1) processes (autocorrelation 0.9, unit marginal
variance) with an optional label-coded effect added per window:

* ``mean``: +-effect/2 shift of the window mean;
* ``trend``: a centered linear ramp with total rise +-effect (window means
  match across classes, slopes separate them);
* ``oscillation``: a 1 Hz vs 3 Hz sinusoid of equal amplitude - whole cycles
  fit the window, so the classes have matched order-independent statistics
  and only the dynamics carry the label;
* ``noise``: no coding; ``constant``: identically zero.

Engagement and backchannel annotation tracks are valid 5 Hz closed-vocabulary
streams; backchannel coverage per window is scripted so BEP labels and episode
proportions are known exactly. Socio-demographic factors can be wired to shift
episode-level proportions, giving the statistical screen a known target.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .core import Corpus, EpisodeTable, SubjectProfile, write_corpus

ENGAGEMENT_VOCAB = ("attentive", "not-listening")
DEFAULT_VOCAB = {
    "engagement": ENGAGEMENT_VOCAB,
    "nod": ("none", "nod"),
    "smile": ("none", "smile"),
    "eyebrows": ("neutral", "raised", "furrow"),
}

CHANNEL_KINDS = ("mean", "trend", "oscillation", "noise", "constant")


@dataclass(frozen=True)
class ChannelSpec:
    name: str
    kind: str = "noise"
    effect: float = 0.0
    target: str = "bep"   # which label process codes the channel: "ldp" | "bep"
    tag: str = "visual"   # feature family for ablation groups: "prosodic" | "visual"


@dataclass(frozen=True)
class FactorEffect:
    factor: str
    role: str             # "listener" | "storyteller"
    on: str               # "backchanneling" | "listening"
    shifts: dict          # factor value -> additive shift of the episode level


@dataclass
class SynthConfig:
    n_subjects: int = 10
    episodes_per_subject: int = 2     # episodes with this subject as listener
    episode_length_s: float = 30.0
    length_jitter_s: float = 0.0
    rate_hz: int = 30
    annot_rate_hz: int = 5
    w_steps: int = 90
    channels: list[ChannelSpec] = field(
        default_factory=lambda: [
            ChannelSpec("f0", kind="mean", effect=2.0, target="bep", tag="prosodic"),
            ChannelSpec("pupil", kind="noise", tag="visual"),
        ]
    )
    tau: float = 0.25
    p_listen_base: float = 0.5        # per-window engagement Bernoulli
    listen_level_sd: float = 0.0      # across-episode spread of the listening level
    bc_base: float = 0.25             # center of the per-episode backchannel level
    bc_spread: float = 0.2            # half-width of per-window coverage draws
    bc_level_sd: float = 0.0          # across-episode spread of the backchannel level
    ar_phi: float = 0.9
    factor_effects: list[FactorEffect] = field(default_factory=list)
    seed: int = 0

    def validate(self) -> None:
        if self.n_subjects < 2:
            raise ValueError("need at least 2 subjects to form dyads")
        if self.rate_hz % self.annot_rate_hz != 0:
            raise ValueError("rate_hz must be a multiple of annot_rate_hz")
        if not self.channels:
            raise ValueError("need at least one channel")
        for spec in self.channels:
            if spec.kind not in CHANNEL_KINDS:
                raise ValueError(f"unknown channel kind '{spec.kind}'")
            if spec.effect < 0:
                raise ValueError("effect sizes must be >= 0")
            if spec.target not in ("ldp", "bep"):
                raise ValueError(f"unknown channel target '{spec.target}'")
        if not 0 < self.tau < 1:
            raise ValueError("tau must be in (0, 1)")


@dataclass
class GroundTruth:
    config: dict
    coded_channels: list[dict]
    noise_channels: list[str]
    factor_effects: list[dict]
    tau: float
    episodes: dict  # episode_id -> {"bc_level": ..., "p_listen": ...}

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "GroundTruth":
        with open(path) as fh:
            raw = json.load(fh)
        return cls(**raw)


# Default socio-demographic factor pool (value lists and sampling weights).
FACTOR_POOL = {
    "gender": (["F", "M"], [0.5, 0.5]),
    "asq_score": None,  # numeric, uniform integers 12..38
    "income": (
        ["Over $100,000", "$50,000-$75,000", "$30,000-$49,999", "$80,000-$99,999"],
        [0.4, 0.3, 0.2, 0.1],
    ),
    "mother_education": (
        [
            "Graduate or professional training",
            "College Graduate",
            "Some college or vocational school",
            "High school graduate/GED",
            "Some high school",
        ],
        [0.35, 0.35, 0.15, 0.1, 0.05],
    ),
    "has_siblings": (["yes", "no"], [0.6, 0.4]),
    "uses_words_for_feelings": (["often", "sometimes", "rarely"], [0.4, 0.4, 0.2]),
    "looks_at_parent": (["often", "sometimes", "rarely"], [0.4, 0.4, 0.2]),
}


def _draw_subjects(config: SynthConfig) -> dict[str, SubjectProfile]:
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(0,)))
    subjects = {}
    for i in range(config.n_subjects):
        sid = f"s{i:02d}"
        factors: dict[str, object] = {}
        for name, pool in FACTOR_POOL.items():
            if pool is None:
                factors[name] = float(rng.integers(12, 39))
            else:
                values, weights = pool
                factors[name] = str(rng.choice(values, p=weights))
        subjects[sid] = SubjectProfile(subject_id=sid, factors=factors)
    return subjects


def _episode_level(
    base: float,
    sd: float,
    on: str,
    listener: SubjectProfile,
    speaker: SubjectProfile,
    effects: list[FactorEffect],
    rng: np.random.Generator,
    lo: float,
    hi: float,
) -> float:
    level = base + (rng.normal(0.0, sd) if sd > 0 else 0.0)
    for eff in effects:
        if eff.on != on:
            continue
        profile = listener if eff.role == "listener" else speaker
        value = profile.get(eff.factor)
        if value is None:
            continue
        key = str(value) if not isinstance(value, float) else "%g" % value
        if key in eff.shifts:
            level += float(eff.shifts[key])
    return float(np.clip(level, lo, hi))


def _ar1(rng: np.random.Generator, n: int, phi: float) -> np.ndarray:
    x = np.empty(n, dtype=np.float64)
    x[0] = rng.normal()
    innovation_sd = np.sqrt(1.0 - phi * phi)
    eps = rng.normal(size=n - 1) * innovation_sd
    for t in range(1, n):
        x[t] = phi * x[t - 1] + eps[t - 1]
    return x


def _coded_addition(
    spec: ChannelSpec,
    w_steps: int,
    rate_hz: int,
    positive: bool,
    rng: np.random.Generator,
) -> np.ndarray:
    sign = 1.0 if positive else -1.0
    t = np.arange(w_steps, dtype=np.float64)
    if spec.kind == "mean":
        return np.full(w_steps, sign * spec.effect / 2.0)
    if spec.kind == "trend":
        centered = (t - (w_steps - 1) / 2.0) / (w_steps - 1)
        return sign * spec.effect * centered
    if spec.kind == "oscillation":
        freq = 3.0 if positive else 1.0
        phase = rng.uniform(0.0, 2.0 * np.pi)
        return spec.effect * np.sin(2.0 * np.pi * freq * t / rate_hz + phase)
    return np.zeros(w_steps)


def generate(config: SynthConfig, out_dir: str | Path | None = None) -> tuple[Corpus, GroundTruth]:
    """Generate (and optionally write) a corpus plus its ground truth record."""
    config.validate()
    factor_hold = config.rate_hz // config.annot_rate_hz  # channel steps per annot step
    annot_per_window = config.w_steps // factor_hold
    if config.w_steps % factor_hold != 0:
        raise ValueError("w_steps must align with whole annotation samples")

    subjects = _draw_subjects(config)
    subject_ids = sorted(subjects)
    episodes: list[EpisodeTable] = []
    per_episode_truth: dict[str, dict] = {}

    k = 0
    for li, listener_id in enumerate(subject_ids):
        for e in range(config.episodes_per_subject):
            speaker_id = subject_ids[(li + 1 + e) % len(subject_ids)]
            eid = f"e{k:03d}"
            rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(1, k)))

            length_s = config.episode_length_s
            if config.length_jitter_s > 0:
                length_s += rng.uniform(-config.length_jitter_s, config.length_jitter_s)
            n_annot = max(int(round(length_s * config.annot_rate_hz)), 2 * annot_per_window)
            length_s = n_annot / config.annot_rate_hz
            n_steps = n_annot * factor_hold
            n_windows = n_steps // config.w_steps

            listener = subjects[listener_id]
            speaker = subjects[speaker_id]
            p_listen = _episode_level(
                config.p_listen_base, config.listen_level_sd, "listening",
                listener, speaker, config.factor_effects, rng, 0.05, 0.95,
            )
            bc_level = _episode_level(
                config.bc_base, config.bc_level_sd, "backchanneling",
                listener, speaker, config.factor_effects, rng, 0.02, 0.98,
            )

            # Window-level label processes.
            listening_state = rng.random(n_windows) < p_listen  # True = listening
            if config.bc_spread > 0:
                coverage = rng.uniform(
                    bc_level - config.bc_spread, bc_level + config.bc_spread, size=n_windows
                )
            else:
                coverage = np.full(n_windows, bc_level)
            coverage = np.clip(coverage, 0.0, 1.0)
            active_counts = np.round(coverage * annot_per_window).astype(np.int64)

            # Annotation tracks at the native 5 Hz rate.
            engagement = np.full(n_annot, ENGAGEMENT_VOCAB[0], dtype=object)
            nod = np.full(n_annot, "none", dtype=object)
            smile = np.full(n_annot, "none", dtype=object)
            eyebrows = np.array(
                [DEFAULT_VOCAB["eyebrows"][j] for j in rng.integers(0, 3, size=n_annot)],
                dtype=object,
            )
            for w in range(n_windows):
                lo = w * annot_per_window
                hi = lo + annot_per_window
                if not listening_state[w]:
                    engagement[lo:hi] = ENGAGEMENT_VOCAB[1]
                count = int(active_counts[w])
                if count > 0:
                    offset = int(rng.integers(0, annot_per_window - count + 1))
                    block = slice(lo + offset, lo + offset + count)
                    nod[block] = "nod"
                    # Smile overlaps a random subset of the nod block so the
                    # backchannel union stays exactly the scripted coverage.
                    overlap = rng.random(count) < 0.5
                    smile_idx = np.nonzero(overlap)[0] + lo + offset
                    smile[smile_idx] = "smile"
            tail = slice(n_windows * annot_per_window, n_annot)
            tail_count = int(round(bc_level * (n_annot - n_windows * annot_per_window)))
            if tail_count > 0:
                nod[tail][:tail_count] = "nod"
            if n_windows > 0 and not listening_state[-1]:
                engagement[tail] = ENGAGEMENT_VOCAB[1]

            # BEP label of window w comes from window w+1's coverage.
            bep_positive = np.zeros(n_windows, dtype=bool)
            bep_positive[:-1] = (
                active_counts[1:] / annot_per_window > config.tau
            )
            ldp_positive = ~listening_state  # class 1 = not-listening at window end

            continuous: dict[str, np.ndarray] = {}
            for spec in config.channels:
                if spec.kind == "constant":
                    continuous[spec.name] = np.zeros(n_steps)
                    continue
                series = _ar1(rng, n_steps, config.ar_phi)
                if spec.kind in ("mean", "trend", "oscillation") and spec.effect > 0:
                    for w in range(n_windows):
                        if spec.target == "bep" and w == n_windows - 1:
                            continue  # final window carries no BEP label
                        positive = bool(
                            bep_positive[w] if spec.target == "bep" else ldp_positive[w]
                        )
                        lo = w * config.w_steps
                        series[lo : lo + config.w_steps] += _coded_addition(
                            spec, config.w_steps, config.rate_hz, positive, rng
                        )
                continuous[spec.name] = series

            episodes.append(
                EpisodeTable(
                    episode_id=eid,
                    speaker_id=speaker_id,
                    listener_id=listener_id,
                    continuous=continuous,
                    annotations={
                        "engagement": engagement,
                        "nod": nod,
                        "smile": smile,
                        "eyebrows": eyebrows,
                    },
                    rate_hz=config.rate_hz,
                    annot_rate_hz=config.annot_rate_hz,
                    length_s=length_s,
                )
            )
            per_episode_truth[eid] = {
                "bc_level": bc_level,
                "p_listen": p_listen,
                "n_windows": int(n_windows),
            }
            k += 1

    corpus = Corpus(
        episodes=episodes,
        subjects=subjects,
        channel_names=[spec.name for spec in config.channels],
        channel_tags={spec.name: spec.tag for spec in config.channels},
        annotation_vocab=dict(DEFAULT_VOCAB),
        factor_names=list(FACTOR_POOL),
    )

    truth = GroundTruth(
        config=asdict(config),
        coded_channels=[
            {"name": s.name, "kind": s.kind, "effect": s.effect, "target": s.target}
            for s in config.channels
            if s.kind in ("mean", "trend", "oscillation") and s.effect > 0
        ],
        noise_channels=[s.name for s in config.channels if s.kind == "noise"],
        factor_effects=[asdict(e) for e in config.factor_effects],
        tau=config.tau,
        episodes=per_episode_truth,
    )

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_corpus(corpus, out)
        truth.save(out / "ground_truth.json")
    return corpus, truth


def config_from_json(path_or_dict) -> SynthConfig:
    if isinstance(path_or_dict, (str, Path)):
        with open(path_or_dict) as fh:
            raw = json.load(fh)
    else:
        raw = dict(path_or_dict)
    channels = [ChannelSpec(**c) for c in raw.pop("channels", [])]
    effects = [FactorEffect(**e) for e in raw.pop("factor_effects", [])]
    cfg = SynthConfig(**raw)
    if channels:
        cfg.channels = channels
    cfg.factor_effects = effects
    return cfg
