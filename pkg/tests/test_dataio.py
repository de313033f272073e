import numpy as np
import pytest

from emotiongan.dataio import (
    FRAME_TO_FRAME, NEUTRAL_APEX, CorpusConfig, SynthesisConfig, build_paired_samples, cache_key_for, load_corpus,
    load_dataset, make_folds, pair_frame_to_frame, pair_neutral_apex, rotate_frame, synthesize_nonfrontal,
    toy_paired_sequences, toy_sequences, write_corpus, write_sequences,
)
from emotiongan.dataio.manifest import dump_manifest
from emotiongan.errors import DataError
from emotiongan.flowcore import ExpressionLabel, FaceFrame, epe


# Synthesis -----------------------------------------------------------------------

def test_zero_rotation_zero_noise_is_identity(rng):
    f = FaceFrame(rng.random((32, 32, 3)))
    out = synthesize_nonfrontal(f, max_rotation=0, noise_scale=0, seed=1)
    assert np.array_equal(out.pixels, f.pixels)
    assert out.meta["rotation_deg"] == 0.0


def test_synthesis_is_seeded_and_bounded(rng):
    f = FaceFrame(rng.random((32, 32, 3)))
    a = synthesize_nonfrontal(f, 20, 0.02, seed=5)
    b = synthesize_nonfrontal(f, 20, 0.02, seed=5)
    assert np.array_equal(a.pixels, b.pixels)
    assert abs(a.meta["rotation_deg"]) <= 20
    assert a.pixels.min() >= 0 and a.pixels.max() <= 1


def test_rotation_flow_matches_rigid_motion():
    seq = toy_sequences(1, n_frames=2, size=128, seed=0)[0]
    frame = seq.load_frames()[0]
    from emotiongan.flowcore import compute_flow

    moved = FaceFrame(rotate_frame(frame.pixels, 5.0))
    flow = compute_flow(frame, moved)
    # rotating counter-clockwise on screen by θ about the center moves p to R(-θ)(p - c) + c in (x, y-down)
    th = np.deg2rad(5.0)
    ys, xs = np.mgrid[0:128, 0:128].astype(np.float64)
    c = 63.5
    dx, dy = xs - c, ys - c
    u = np.cos(th) * dx + np.sin(th) * dy - dx
    v = -np.sin(th) * dx + np.cos(th) * dy - dy
    inner = (slice(32, 96), slice(32, 96))
    err = np.hypot(flow.u[inner] - u[inner], flow.v[inner] - v[inner])
    assert np.median(err) < 0.5


# Pairing ------------------------------------------------------------------------

def test_pairing_rules():
    assert pair_neutral_apex([0, 1, 2, 3]) == [(0, 3)]
    assert pair_frame_to_frame([0, 1, 2, 3]) == [(0, 1), (1, 2), (2, 3)]
    assert pair_neutral_apex([0]) == [] and pair_frame_to_frame([0]) == []


# Folds --------------------------------------------------------------------------

class _S:
    def __init__(self, i, label, subject, dataset="d"):
        self.sample_id, self.label, self.subject_id, self.dataset = f"s{i:03d}", label, subject, dataset


def _fake(n=70):
    return [_S(i, i % 7, f"p{i // 7}") for i in range(n)]


def test_folds_partition_and_determinism():
    samples = _fake(73)
    a = make_folds(samples, k=10, seed=4)
    b = make_folds(samples, k=10, seed=4)
    assert a.assignment == b.assignment
    all_test = [sid for f in range(10) for sid in a.test_ids(f)]
    assert sorted(all_test) == sorted(s.sample_id for s in samples)
    sizes = [len(a.test_ids(f)) for f in range(10)]
    assert max(sizes) - min(sizes) <= 1
    for f in range(10):
        assert set(a.train_ids(f)).isdisjoint(a.test_ids(f))


def test_folds_stratified():
    split = make_folds(_fake(140), k=10, seed=0)
    for f in range(10):
        labels = [int(s[1:]) % 7 for s in split.test_ids(f)]
        # 20 samples per class dealt round-robin over 10 folds
        assert np.bincount(labels, minlength=7).tolist() == [2] * 7


def test_folds_subject_disjoint():
    split = make_folds(_fake(140), k=10, seed=0, subject_disjoint=True)
    subj = {f"s{i:03d}": f"p{i // 7}" for i in range(140)}
    for f in range(10):
        test_subj = {subj[s] for s in split.test_ids(f)}
        train_subj = {subj[s] for s in split.train_ids(f)}
        assert test_subj.isdisjoint(train_subj)


def test_folds_errors_and_roundtrip():
    with pytest.raises(DataError):
        make_folds(_fake(5), k=10)
    with pytest.raises(DataError):
        make_folds(_fake(20), k=1)
    split = make_folds(_fake(30), k=3, seed=2)
    from emotiongan.dataio import FoldSplit

    assert FoldSplit.from_dict(split.to_dict()) == split


# Manifests ----------------------------------------------------------------------

def _write_frames(tmp_path, n_seq=2, n_frames=3):
    return write_sequences(tmp_path / "src", toy_sequences(n_seq, n_frames=n_frames, size=64, seed=1))


def test_manifest_roundtrip(tmp_path):
    m = _write_frames(tmp_path)
    ds = load_dataset(m)
    assert len(ds) == 2 and not ds.errors
    assert ds.sequences[1].expression is ExpressionLabel.HAPPINESS
    assert len(ds.sequences[0].load_frames()) == 3


def test_manifest_missing_frames_reported(tmp_path):
    m = dump_manifest(tmp_path / "m.yaml", "x", [
        {"id": "a", "subject": "p", "expression": "anger", "frames": ["nope0.png", "nope1.png"]}])
    ds = load_dataset(m)
    assert len(ds) == 0
    assert ds.errors[0][0] == "a" and ds.errors[0][1] == 3 and "missing" in ds.errors[0][2]


@pytest.mark.parametrize("body, needle", [
    ("dataset: x\nsequences:\n  - id: a\n    subject: p\n    expression: smug\n    frames: []\n", "line 5"),
    ("dataset: x\nsequences:\n  - id: a\n    subject: p\n    frames: []\n", "line 3"),
    ("dataset: x\nbogus: 1\n", "line 2"),
    ("dataset: x\nsequences:\n  - id: a\n    subject: p\n    expression: fear\n    frames: []\n    camera: drone\n",
     "line 7"),
    ("dataset: [unclosed\n", "line"),
])
def test_manifest_schema_errors_have_lines(tmp_path, body, needle):
    p = tmp_path / "bad.yaml"
    p.write_text(body)
    with pytest.raises(DataError, match=needle):
        load_dataset(p)


def test_empty_manifest(tmp_path):
    p = tmp_path / "empty.yaml"
    p.write_text("")
    assert len(load_dataset(p)) == 0


def test_unpaired_unconstrained_flagged(tmp_path):
    m = _write_frames(tmp_path, n_seq=1)
    text = m.read_text().replace("camera: frontal", "camera: unconstrained\n  pair: ghost")
    m.write_text(text)
    ds = load_dataset(m)
    assert len(ds) == 0 and "ghost" in ds.errors[0][2]


# Corpus ------------------------------------------------------------------------

def test_frontal_only_without_perturbation_gives_identical_flows():
    seqs = toy_sequences(2, n_frames=3, size=96, seed=2)
    cfg = CorpusConfig(synthesis=SynthesisConfig(max_rotation=0, noise_scale=0))
    samples = build_paired_samples(seqs, cfg)
    assert samples
    for s in samples:
        assert np.array_equal(s.input_flow.u, s.target_flow.u)
        assert s.pose_category == "nothing"


def test_pair_counts_follow_strategies():
    seqs = toy_sequences(3, n_frames=4, size=96, seed=0)
    apex = build_paired_samples(seqs, CorpusConfig(strategies=(NEUTRAL_APEX,)))
    assert len(apex) == 3
    f2f = build_paired_samples(seqs, CorpusConfig(strategies=(FRAME_TO_FRAME,), min_motion=0.0))
    assert len(f2f) == 3 * 3
    # the neutral sequence (index 4) has no motion and is dropped by the motion floor
    seqs5 = toy_sequences(5, n_frames=4, size=96, seed=0)
    kept = build_paired_samples(seqs5, CorpusConfig(strategies=(FRAME_TO_FRAME,)))
    assert not any("neutral" in s.sample_id for s in kept)


def test_sample_fields_and_determinism():
    seqs = toy_sequences(2, n_frames=2, size=96, seed=0)
    a = build_paired_samples(seqs, CorpusConfig(strategies=(NEUTRAL_APEX,)))
    b = build_paired_samples(seqs, CorpusConfig(strategies=(NEUTRAL_APEX,)))
    s = a[1]
    assert s.input_flow.shape == (128, 128) and s.neutral_face.pixels.shape == (128, 128, 3)
    assert s.neutral_face.expression is ExpressionLabel.NEUTRAL
    assert s.label is ExpressionLabel.HAPPINESS
    assert "rotation_deg" in s.provenance
    assert all(np.array_equal(x.input_flow.u, y.input_flow.u) for x, y in zip(a, b))
    assert epe(s.input_flow, s.target_flow) > 0.5


def test_paired_twins_and_misalignment():
    seqs = toy_paired_sequences(2, n_frames=3, size=96, seed=0)
    samples = build_paired_samples(seqs, CorpusConfig(strategies=(NEUTRAL_APEX,)))
    assert len(samples) == 2
    static = [s for s in samples if s.pose_category == "nothing"]
    assert static and all(np.allclose(s.input_flow.u, s.target_flow.u) for s in static)
    broken = toy_paired_sequences(1, n_frames=3, size=96, seed=0)
    broken[1].frames = broken[1].frames[:2]
    errors = []
    assert build_paired_samples(broken, CorpusConfig(), errors=errors) == []
    assert "not aligned" in errors[0][1]


def test_parallel_build_matches_serial():
    seqs = toy_sequences(3, n_frames=2, size=96, seed=0)
    cfg = CorpusConfig(strategies=(NEUTRAL_APEX,))
    a = build_paired_samples(seqs, cfg, workers=1)
    b = build_paired_samples(seqs, cfg, workers=2)
    assert [s.sample_id for s in a] == [s.sample_id for s in b]
    assert all(np.array_equal(x.input_flow.u, y.input_flow.u) for x, y in zip(a, b))


def test_corpus_cache_roundtrip(tmp_path, small_corpus):
    write_corpus(small_corpus, tmp_path / "c", "key")
    back = load_corpus(tmp_path / "c")
    assert [s.sample_id for s in back] == [s.sample_id for s in small_corpus]
    for x, y in zip(back, small_corpus):
        assert np.array_equal(x.input_flow.u, y.input_flow.u)
        assert np.abs(x.target_face.pixels - y.target_face.pixels).max() <= 0.5 / 255 + 1e-6
        assert x.label == y.label and x.neutral_face.expression == y.neutral_face.expression
    with pytest.raises(DataError):
        load_corpus(tmp_path / "nowhere")


def test_cache_key_tracks_config(tmp_path):
    m = _write_frames(tmp_path)
    k1 = cache_key_for([m], CorpusConfig())
    assert k1 == cache_key_for([m], CorpusConfig())
    assert k1 != cache_key_for([m], CorpusConfig(seed=1))
