import numpy as np
import pytest

from tscope.core import (
    CorpusError,
    episodes_allclose,
    interpolate_missing,
    load_corpus,
    validate_corpus,
    write_corpus,
)
from tscope.synth import SynthConfig, generate

from conftest import make_corpus, make_episode


def test_write_load_round_trip_two_episodes(tmp_path):
    corpus = make_corpus(
        [make_episode("e000"), make_episode("e001", speaker="s02", listener="s03")]
    )
    write_corpus(corpus, tmp_path)
    loaded = load_corpus(tmp_path)
    assert len(loaded.episodes) == 2
    assert [ep.episode_id for ep in loaded.episodes] == ["e000", "e001"]
    for a, b in zip(corpus.episodes, loaded.episodes):
        assert episodes_allclose(a, b)
    assert set(loaded.subjects) == set(corpus.subjects)


def test_load_rejects_short_channel(tmp_path):
    corpus = make_corpus([make_episode("e000")])
    write_corpus(corpus, tmp_path)
    cont = tmp_path / "episodes" / "e000_continuous.csv"
    lines = cont.read_text().splitlines()
    cont.write_text("\n".join(lines[:-5]) + "\n")
    with pytest.raises(CorpusError, match="channel-length mismatch"):
        load_corpus(tmp_path)


def test_load_rejects_unknown_category_code(tmp_path):
    corpus = make_corpus([make_episode("e000")])
    write_corpus(corpus, tmp_path)
    annot = tmp_path / "episodes" / "e000_annotations.csv"
    text = annot.read_text().replace("attentive", "daydreaming", 1)
    annot.write_text(text)
    with pytest.raises(CorpusError, match="unknown category code 'daydreaming'"):
        load_corpus(tmp_path)


def test_load_missing_file(tmp_path):
    corpus = make_corpus([make_episode("e000")])
    write_corpus(corpus, tmp_path)
    (tmp_path / "episodes" / "e000_continuous.csv").unlink()
    with pytest.raises(CorpusError, match="missing file"):
        load_corpus(tmp_path)


def test_synth_round_trip_is_identity(tmp_path):
    # Oracle: the in-memory corpus produced by the generator itself.
    cfg = SynthConfig(n_subjects=3, episodes_per_subject=1, episode_length_s=9.0, seed=5)
    corpus, _ = generate(cfg, out_dir=tmp_path)
    loaded = load_corpus(tmp_path)
    assert len(loaded.episodes) == len(corpus.episodes)
    for a, b in zip(corpus.episodes, loaded.episodes):
        assert episodes_allclose(a, b, rtol=1e-8)
    for sid, prof in corpus.subjects.items():
        assert loaded.subjects[sid].factors == prof.factors


def test_validate_ok_empty_diagnostics():
    corpus = make_corpus([make_episode("e000")])
    assert validate_corpus(corpus) == []


def test_validate_missing_subject_named():
    corpus = make_corpus([make_episode("e000")])
    corpus.subjects.pop("s00")
    diags = validate_corpus(corpus)
    assert len(diags) == 1
    assert "e000" in diags[0] and "s00" in diags[0]


def test_validate_two_violations_two_diagnostics():
    bad = make_episode("e000", speaker="s00", listener="s00")  # speaker == listener
    bad.continuous["ramp"].resize(10, refcheck=False)          # length mismatch
    corpus = make_corpus([bad])
    diags = validate_corpus(corpus)
    assert len(diags) == 2


def test_validate_is_pure():
    corpus = make_corpus([make_episode("e000", speaker="s00", listener="s00")])
    first = validate_corpus(corpus)
    second = validate_corpus(corpus)
    assert first == second and len(first) == 1


def test_interpolate_missing_linear_and_held_edges():
    raw = np.array([np.nan, 1.0, np.nan, 3.0, np.nan])
    filled = interpolate_missing(raw)
    assert np.allclose(filled, [1.0, 1.0, 2.0, 3.0, 3.0])


def test_interpolate_all_missing_is_error():
    with pytest.raises(CorpusError, match="no observed samples"):
        interpolate_missing(np.full(4, np.nan), episode_id="e000", channel="pupil")


def test_missing_samples_interpolated_at_ingestion(tmp_path):
    corpus = make_corpus([make_episode("e000")])
    write_corpus(corpus, tmp_path)
    cont = tmp_path / "episodes" / "e000_continuous.csv"
    lines = cont.read_text().splitlines()
    cells = lines[3].split(",")
    cells[0] = ""  # tracker dropout
    lines[3] = ",".join(cells)
    cont.write_text("\n".join(lines) + "\n")
    loaded = load_corpus(tmp_path)
    ramp = loaded.episodes[0].continuous["ramp"]
    assert ramp[2] == pytest.approx(2.0)  # linear interpolation of the gap
    assert np.isfinite(ramp).all()
