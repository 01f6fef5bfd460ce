import numpy as np
import pytest

from tscope.core import Corpus, EpisodeTable, SubjectProfile
from tscope.synth import ChannelSpec, SynthConfig, generate


def make_episode(
    eid="e000",
    speaker="s00",
    listener="s01",
    n_annot=15,
    channels=None,
    annotations=None,
    rate_hz=30,
    annot_rate_hz=5,
):
    """Hand-built episode; channels default to a ramp and a constant."""
    n = n_annot * (rate_hz // annot_rate_hz)
    if channels is None:
        channels = {
            "ramp": np.arange(n, dtype=np.float64),
            "flat": np.full(n, 3.0),
        }
    if annotations is None:
        annotations = {
            "engagement": np.array(["attentive"] * n_annot, dtype=object),
            "nod": np.array(["none"] * n_annot, dtype=object),
            "smile": np.array(["none"] * n_annot, dtype=object),
        }
    return EpisodeTable(
        episode_id=eid,
        speaker_id=speaker,
        listener_id=listener,
        continuous=channels,
        annotations=annotations,
        rate_hz=rate_hz,
        annot_rate_hz=annot_rate_hz,
        length_s=n_annot / annot_rate_hz,
    )


def make_corpus(episodes, extra_subjects=(), vocab=None):
    subject_ids = set(extra_subjects)
    for ep in episodes:
        subject_ids.add(ep.speaker_id)
        subject_ids.add(ep.listener_id)
    subjects = {
        sid: SubjectProfile(subject_id=sid, factors={"gender": "F"}) for sid in sorted(subject_ids)
    }
    if vocab is None:
        vocab = {
            "engagement": ("attentive", "not-listening"),
            "nod": ("none", "nod"),
            "smile": ("none", "smile"),
        }
    channel_names = episodes[0].channel_names() if episodes else []
    return Corpus(
        episodes=sorted(episodes, key=lambda e: e.episode_id),
        subjects=subjects,
        channel_names=channel_names,
        channel_tags={c: "visual" for c in channel_names},
        annotation_vocab=vocab,
        factor_names=["gender"],
    )


@pytest.fixture(scope="session")
def mean_coded_corpus():
    """BEP task: one strongly mean-coded channel plus one noise channel."""
    cfg = SynthConfig(
        n_subjects=6,
        episodes_per_subject=2,
        episode_length_s=21.0,
        channels=[
            ChannelSpec("coded", kind="mean", effect=2.0, target="bep", tag="prosodic"),
            ChannelSpec("noise", kind="noise", tag="visual"),
        ],
        seed=11,
    )
    corpus, truth = generate(cfg)
    return corpus, truth, cfg


@pytest.fixture(scope="session")
def dynamics_coded_corpus():
    """BEP task coded only in oscillation frequency (matched marginals)."""
    cfg = SynthConfig(
        n_subjects=6,
        episodes_per_subject=2,
        episode_length_s=21.0,
        channels=[
            ChannelSpec("dyn", kind="oscillation", effect=1.5, target="bep", tag="prosodic"),
            ChannelSpec("noise", kind="noise", tag="visual"),
        ],
        seed=13,
    )
    corpus, truth = generate(cfg)
    return corpus, truth, cfg
