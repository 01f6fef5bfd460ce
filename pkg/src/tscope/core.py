"""Dataset object model and validated ingestion.

A corpus lives on disk as a JSON manifest (``corpus.json``), one continuous-channel
CSV and one annotation CSV per episode, and a ``subjects.csv`` of per-subject
factors. Continuous channels are sampled at ``rate_hz`` (default 30), annotation
tracks at ``annot_rate_hz`` (default 5); the two rates must divide evenly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MANIFEST_NAME = "corpus.json"
SUBJECTS_NAME = "subjects.csv"
CORPUS_FORMAT = "tscope-corpus"
CORPUS_VERSION = 1

# Text form used for missing numeric samples (tracker dropouts) in channel CSVs.
MISSING_TOKENS = ("", "nan", "NaN", "NA")


class CorpusError(ValueError):
    """A corpus file is missing, malformed, or violates a schema invariant."""


@dataclass(frozen=True, eq=False)
class EpisodeTable:
    """One recording: dense continuous channels plus categorical annotation tracks."""

    episode_id: str
    speaker_id: str
    listener_id: str
    continuous: dict[str, np.ndarray]      # channel name -> float64, length n_steps
    annotations: dict[str, np.ndarray]     # track name -> str array, length n_annot_steps
    rate_hz: int = 30
    annot_rate_hz: int = 5
    length_s: float = 0.0

    @property
    def n_steps(self) -> int:
        return int(round(self.length_s * self.rate_hz))

    @property
    def n_annot_steps(self) -> int:
        return int(round(self.length_s * self.annot_rate_hz))

    @property
    def upsample_factor(self) -> int:
        return self.rate_hz // self.annot_rate_hz

    def channel_names(self) -> list[str]:
        return list(self.continuous)

    def with_channels(self, extra: dict[str, np.ndarray]) -> "EpisodeTable":
        """Copy of this episode with additional continuous channels appended."""
        merged = dict(self.continuous)
        for name, values in extra.items():
            merged[name] = np.asarray(values, dtype=np.float64)
        return EpisodeTable(
            episode_id=self.episode_id,
            speaker_id=self.speaker_id,
            listener_id=self.listener_id,
            continuous=merged,
            annotations=self.annotations,
            rate_hz=self.rate_hz,
            annot_rate_hz=self.annot_rate_hz,
            length_s=self.length_s,
        )


@dataclass(frozen=True, eq=False)
class SubjectProfile:
    """Per-subject socio-demographic factors; missing values are stored as None."""

    subject_id: str
    factors: dict[str, object] = field(default_factory=dict)

    def get(self, name: str):
        return self.factors.get(name)


@dataclass(frozen=True, eq=False)
class Corpus:
    episodes: list[EpisodeTable]
    subjects: dict[str, SubjectProfile]
    channel_names: list[str] = field(default_factory=list)
    channel_tags: dict[str, str] = field(default_factory=dict)
    annotation_vocab: dict[str, tuple[str, ...]] = field(default_factory=dict)
    factor_names: list[str] = field(default_factory=list)

    def episode(self, episode_id: str) -> EpisodeTable:
        for ep in self.episodes:
            if ep.episode_id == episode_id:
                return ep
        raise KeyError(episode_id)


def _parse_factor(text: str):
    if text == "":
        return None
    try:
        return float(text)
    except ValueError:
        return text


def _format_factor(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "%.9g" % value
    return str(value)


def interpolate_missing(values: np.ndarray, *, episode_id: str = "?", channel: str = "?") -> np.ndarray:
    """Fill NaN samples by linear interpolation; leading/trailing gaps hold the nearest value."""
    values = np.asarray(values, dtype=np.float64)
    missing = np.isnan(values)
    if not missing.any():
        return values
    if missing.all():
        raise CorpusError(
            f"episode {episode_id}: channel '{channel}' has no observed samples"
        )
    idx = np.arange(values.size)
    filled = values.copy()
    filled[missing] = np.interp(idx[missing], idx[~missing], values[~missing])
    return filled


def _read_continuous_csv(path: Path, episode_id: str) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise CorpusError(f"episode {episode_id}: empty continuous file {path}")
        rows = list(reader)
    data = np.empty((len(rows), len(header)), dtype=np.float64)
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise CorpusError(
                f"episode {episode_id}: ragged row {i} in continuous file {path}"
            )
        for j, cell in enumerate(row):
            data[i, j] = np.nan if cell in MISSING_TOKENS else float(cell)
    return {
        name: interpolate_missing(data[:, j], episode_id=episode_id, channel=name)
        for j, name in enumerate(header)
    }


def _read_annotations_csv(path: Path, episode_id: str) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise CorpusError(f"episode {episode_id}: empty annotation file {path}")
        rows = list(reader)
    tracks = {}
    for j, name in enumerate(header):
        tracks[name] = np.array([row[j] for row in rows], dtype=object)
    return tracks


def load_corpus(root_path: str | Path) -> Corpus:
    """Load and validate a corpus directory written in the manifest format above."""
    root = Path(root_path)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.exists():
        raise CorpusError(f"missing file {manifest_path}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != CORPUS_FORMAT:
        raise CorpusError(f"{manifest_path}: not a {CORPUS_FORMAT} manifest")

    rate_hz = int(manifest.get("rate_hz", 30))
    annot_rate_hz = int(manifest.get("annot_rate_hz", 5))
    channel_names = list(manifest.get("channels", []))
    vocab = {k: tuple(v) for k, v in manifest.get("annotation_vocab", {}).items()}

    subjects: dict[str, SubjectProfile] = {}
    subjects_path = root / SUBJECTS_NAME
    factor_names = list(manifest.get("factor_names", []))
    if subjects_path.exists():
        with open(subjects_path, newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                sid = row.pop("subject_id")
                subjects[sid] = SubjectProfile(
                    subject_id=sid,
                    factors={k: _parse_factor(v) for k, v in row.items()},
                )

    episodes = []
    for entry in manifest.get("episodes", []):
        eid = entry["episode_id"]
        cont_path = root / entry["continuous"]
        annot_path = root / entry["annotations"]
        if not cont_path.exists():
            raise CorpusError(f"episode {eid}: missing file {cont_path}")
        if not annot_path.exists():
            raise CorpusError(f"episode {eid}: missing file {annot_path}")
        continuous = _read_continuous_csv(cont_path, eid)
        annotations = _read_annotations_csv(annot_path, eid)
        episodes.append(
            EpisodeTable(
                episode_id=eid,
                speaker_id=entry["speaker_id"],
                listener_id=entry["listener_id"],
                continuous=continuous,
                annotations=annotations,
                rate_hz=rate_hz,
                annot_rate_hz=annot_rate_hz,
                length_s=float(entry["length_s"]),
            )
        )
    episodes.sort(key=lambda ep: ep.episode_id)

    corpus = Corpus(
        episodes=episodes,
        subjects=subjects,
        channel_names=channel_names or (episodes[0].channel_names() if episodes else []),
        channel_tags=dict(manifest.get("channel_tags", {})),
        annotation_vocab=vocab,
        factor_names=factor_names,
    )
    diagnostics = validate_corpus(corpus)
    if diagnostics:
        raise CorpusError("; ".join(diagnostics))
    return corpus


def validate_corpus(corpus: Corpus) -> list[str]:
    """Return one diagnostic per invariant violation; empty list means valid."""
    diags: list[str] = []
    seen_ids: set[str] = set()
    for ep in corpus.episodes:
        loc = f"episode {ep.episode_id}"
        if ep.episode_id in seen_ids:
            diags.append(f"{loc}: duplicate episode_id")
        seen_ids.add(ep.episode_id)
        if ep.rate_hz % ep.annot_rate_hz != 0:
            diags.append(
                f"{loc}: rate_hz {ep.rate_hz} not a multiple of annot_rate_hz {ep.annot_rate_hz}"
            )
        if ep.speaker_id == ep.listener_id:
            diags.append(f"{loc}: speaker_id equals listener_id ({ep.speaker_id})")
        for role, sid in (("speaker", ep.speaker_id), ("listener", ep.listener_id)):
            if sid not in corpus.subjects:
                diags.append(f"{loc}: {role} '{sid}' absent from subjects")
        for name, values in ep.continuous.items():
            if values.size != ep.n_steps:
                diags.append(
                    f"{loc}: channel-length mismatch for '{name}': "
                    f"got {values.size}, expected {ep.n_steps}"
                )
        for name, values in ep.annotations.items():
            if values.size != ep.n_annot_steps:
                diags.append(
                    f"{loc}: annotation-length mismatch for '{name}': "
                    f"got {values.size}, expected {ep.n_annot_steps}"
                )
            allowed = corpus.annotation_vocab.get(name)
            if allowed is not None:
                bad = sorted(set(values.tolist()) - set(allowed))
                for code in bad:
                    diags.append(
                        f"{loc}: unknown category code '{code}' in annotation track '{name}'"
                    )
    return diags


def write_corpus(corpus: Corpus, root_path: str | Path) -> None:
    """Write a corpus in the on-disk manifest format (floats at 9 significant digits)."""
    root = Path(root_path)
    (root / "episodes").mkdir(parents=True, exist_ok=True)

    episodes = sorted(corpus.episodes, key=lambda ep: ep.episode_id)
    entries = []
    for ep in episodes:
        cont_rel = f"episodes/{ep.episode_id}_continuous.csv"
        annot_rel = f"episodes/{ep.episode_id}_annotations.csv"
        entries.append(
            {
                "episode_id": ep.episode_id,
                "speaker_id": ep.speaker_id,
                "listener_id": ep.listener_id,
                "length_s": ep.length_s,
                "continuous": cont_rel,
                "annotations": annot_rel,
            }
        )
        channels = corpus.channel_names or ep.channel_names()
        with open(root / cont_rel, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(channels)
            cols = [ep.continuous[name] for name in channels]
            for i in range(ep.n_steps):
                writer.writerow(["%.9g" % col[i] for col in cols])
        tracks = list(corpus.annotation_vocab) or list(ep.annotations)
        with open(root / annot_rel, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(tracks)
            cols = [ep.annotations[name] for name in tracks]
            for i in range(ep.n_annot_steps):
                writer.writerow([str(col[i]) for col in cols])

    manifest = {
        "format": CORPUS_FORMAT,
        "version": CORPUS_VERSION,
        "rate_hz": episodes[0].rate_hz if episodes else 30,
        "annot_rate_hz": episodes[0].annot_rate_hz if episodes else 5,
        "channels": list(corpus.channel_names),
        "channel_tags": dict(corpus.channel_tags),
        "annotation_vocab": {k: list(v) for k, v in corpus.annotation_vocab.items()},
        "factor_names": list(corpus.factor_names),
        "episodes": entries,
    }
    with open(root / MANIFEST_NAME, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=False)
        fh.write("\n")

    factor_names = corpus.factor_names or sorted(
        {name for prof in corpus.subjects.values() for name in prof.factors}
    )
    with open(root / SUBJECTS_NAME, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id"] + factor_names)
        for sid in sorted(corpus.subjects):
            prof = corpus.subjects[sid]
            writer.writerow([sid] + [_format_factor(prof.get(name)) for name in factor_names])


def episodes_allclose(a: EpisodeTable, b: EpisodeTable, rtol: float = 1e-8) -> bool:
    """Value equality for episodes up to the 9-significant-digit text round-trip."""
    if (a.episode_id, a.speaker_id, a.listener_id) != (b.episode_id, b.speaker_id, b.listener_id):
        return False
    if (a.rate_hz, a.annot_rate_hz) != (b.rate_hz, b.annot_rate_hz):
        return False
    if abs(a.length_s - b.length_s) > 1e-9:
        return False
    if set(a.continuous) != set(b.continuous) or set(a.annotations) != set(b.annotations):
        return False
    for name in a.continuous:
        if not np.allclose(a.continuous[name], b.continuous[name], rtol=rtol, atol=1e-12):
            return False
    for name in a.annotations:
        if not np.array_equal(a.annotations[name], b.annotations[name]):
            return False
    return True
