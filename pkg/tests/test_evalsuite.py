import dataclasses

import numpy as np
import pytest
from skimage.metrics import structural_similarity

from emotiongan.errors import ConfigError, DataError, NotFittedError
from emotiongan.evalsuite import (
    EvalReport, IdentityFrontalizer, ablation_table, accuracy_table, average_face, check_variants, evaluate_fold,
    reconstruction_table, rmse, sample_mosaic, ssim, transfer_expression, write_eval_report,
)
from emotiongan.flowcore import FaceFrame, FlowField
from emotiongan.losses import LossWeights
from emotiongan.nets import NetSpec
from emotiongan.trainer import ScorerConfig, TensorCorpus, build_models, toy_config, train_fold


def _mid_contrast(seed=0, size=64):
    r = np.random.default_rng(seed)
    base = r.random((size // 8, size // 8, 3))
    import cv2

    return (0.3 + 0.4 * cv2.resize(base, (size, size), interpolation=cv2.INTER_CUBIC)).clip(0, 1)


# SSIM / RMSE ----------------------------------------------------------------------

def test_ssim_identical_and_symmetric():
    a = _mid_contrast(0)
    b = (a + 0.05 * np.random.default_rng(1).normal(size=a.shape)).clip(0, 1)
    assert ssim(a, a) == pytest.approx(1.0)
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_ssim_matches_reference_implementation(seed):
    a = _mid_contrast(seed)
    b = (a + 0.08 * np.random.default_rng(seed + 10).normal(size=a.shape)).clip(0, 1)
    ref = structural_similarity(a, b, channel_axis=-1, data_range=1.0, gaussian_weights=True, sigma=1.5,
                                use_sample_covariance=False)
    assert ssim(a, b) == pytest.approx(ref, abs=1e-6)


def test_ssim_image_vs_negative():
    a = _mid_contrast(3)
    ref = structural_similarity(a, 1 - a, channel_axis=-1, data_range=1.0, gaussian_weights=True, sigma=1.5,
                                use_sample_covariance=False)
    assert ssim(a, 1 - a) < 0.5
    assert ssim(a, 1 - a) == pytest.approx(ref, abs=1e-6)


def test_rmse_examples():
    a = np.zeros((4, 4, 3))
    assert rmse(a, a) == 0.0
    assert rmse(a, a + 1 / 255) == pytest.approx(1.0)
    board = (np.indices((4, 4)).sum(0) % 2).astype(float)
    assert rmse(board, 1 - board) == pytest.approx(255.0)
    with pytest.raises(DataError):
        rmse(a, np.zeros((4, 5, 3)))
    with pytest.raises(DataError):
        ssim(a, np.zeros((4, 5, 3)))


# Protocol ----------------------------------------------------------------------------

def _tiny_cfg():
    return toy_config(epochs=1, nets=NetSpec().scaled(8), scorer=ScorerConfig(pretrain_epochs=1),
                      weights=LossWeights(connection_epoch=0))


@pytest.fixture(scope="module")
def tiny_run(small_corpus):
    cfg = _tiny_cfg()
    corpus = TensorCorpus(small_corpus, cfg.clip_threshold)
    return train_fold(corpus, [s.sample_id for s in small_corpus[:10]], cfg), cfg


def test_unfitted_models_rejected(small_corpus):
    m = build_models(_tiny_cfg())
    with pytest.raises(NotFittedError):
        evaluate_fold(m, small_corpus[:2])
    with pytest.raises(NotFittedError):
        transfer_expression(small_corpus[0].input_flow, small_corpus[0].neutral_face, m)


def test_identity_frontalizer_gives_zero_delta(tiny_run, small_corpus):
    run, cfg = tiny_run
    res = evaluate_fold(run.models, small_corpus, frontalizer=IdentityFrontalizer())["toy"]
    assert res.flow_delta == 0.0 and res.image_delta == 0.0
    assert res.epe["baseline"] == res.epe["frontalized"]
    assert res.ssim["baseline"] == res.ssim["frontalized"]
    assert res.rmse["baseline"] == res.rmse["frontalized"]


def test_evaluate_fold_fields(tiny_run, small_corpus):
    run, cfg = tiny_run
    test = small_corpus[10:]
    res = evaluate_fold(run.models, test, fold=3)
    r = res["toy"]
    assert r.n == len(test) and r.fold == 3
    for dom in (r.flow_accuracy, r.image_accuracy):
        assert all(0.0 <= v <= 100.0 for v in dom.values())
    assert r.epe["baseline"]["std"] >= 0
    assert set(r.per_sample) == {s.sample_id for s in test}


def test_evaluate_splits_by_dataset(tiny_run, small_corpus):
    run, _ = tiny_run
    mixed = [dataclasses.replace(s, dataset="other") if i % 2 else s for i, s in enumerate(small_corpus[:6])]
    res = evaluate_fold(run.models, mixed)
    assert sorted(res) == ["other", "toy"]
    assert res["other"].n == 3 and res["toy"].n == 3


def test_report_aggregation_and_tables(tmp_path, tiny_run, small_corpus):
    run, _ = tiny_run
    folds = {0: evaluate_fold(run.models, small_corpus[:7], fold=0),
             1: evaluate_fold(run.models, small_corpus[7:], fold=1)}
    report = EvalReport(folds, {"run": "unit"})
    agg = report.aggregate()["toy"]
    pooled = np.mean([v for f in folds.values() for v in
                      (x["epe_frontalized"] for x in f["toy"].per_sample.values())])
    assert agg["epe"]["frontalized"]["mean"] == pytest.approx(pooled)
    assert agg["n_samples"] == len(small_corpus)
    assert agg["flow_delta"]["std"] >= 0
    d = report.to_dict()
    assert d["metadata"]["accuracy_units"] == "percent" and "epe_convention" in d["metadata"]
    assert "EPE" in reconstruction_table(report) and "Δ" in accuracy_table(report)
    paths = write_eval_report(report, tmp_path)
    assert all(p.exists() for p in paths.values())


def test_ablation_variants_validated():
    assert check_variants(None) == ["full", "no_recon", "no_expression", "no_warping"]
    with pytest.raises(ConfigError):
        check_variants(["full", "no_gan"])
    with pytest.raises(ConfigError):
        check_variants(["full", "full"])


def test_ablation_table_layout(tiny_run, small_corpus):
    run, _ = tiny_run
    reports = {v: EvalReport({0: evaluate_fold(run.models, small_corpus[:4])}) for v in
               ("no_warping", "full", "no_recon", "no_expression")}
    lines = ablation_table(reports).splitlines()
    assert len(lines) == 5
    assert lines[1].startswith("full model") and lines[2].startswith("without EPE")


def test_transfer_contract(tiny_run, small_corpus):
    run, cfg = tiny_run
    out = transfer_expression(small_corpus[0].input_flow, small_corpus[1].neutral_face, run.models)
    assert out.pixels.shape == (128, 128, 3) and out.pixels.min() >= 0 and out.pixels.max() <= 1
    again = transfer_expression(small_corpus[0].input_flow, small_corpus[1].neutral_face, run.models)
    assert np.array_equal(out.pixels, again.pixels)
    with pytest.raises(DataError):
        transfer_expression(small_corpus[0].input_flow, FaceFrame(np.zeros((64, 64, 3))), run.models)


def test_average_face(small_corpus):
    avg = average_face(small_corpus)
    expect = np.mean([s.neutral_face.pixels for s in small_corpus], axis=0)
    assert np.allclose(avg.pixels, expect, atol=1e-6)
    with pytest.raises(DataError):
        average_face([])


def test_sample_mosaic(tmp_path, small_corpus):
    s = small_corpus[1]
    rows = [{"input": s.input_flow, "target": s.target_flow, "frontalized": FlowField.zeros(128, 128),
             "warped": s.target_face.pixels}]
    img = sample_mosaic(rows, tmp_path / "m.png")
    assert img.shape[1] > 4 * 128 and (tmp_path / "m.png").exists()
