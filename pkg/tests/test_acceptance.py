"""Acceptance checks, one test per criterion.

Each test records a single PASS/FAIL line; the lines are printed together in the
pytest terminal summary (see conftest.py). Criteria 5, 6, 8 and 10 share one toy
training of the four ablation variants on a 200-sample synthetic corpus.
"""
import dataclasses
import math
import time

import numpy as np
import pytest
import torch

from emotiongan.dataio import make_folds, toy_corpus
from emotiongan.evalsuite import (
    IdentityFrontalizer, ablation_table, accuracy_table, check_variants, evaluate_fold,
    frontalize_flow, reconstruction_table, run_ablation, transfer_expression,
)
from emotiongan.flowcore import FlowField, clip_normalize, denormalize, epe, read_flo, write_flo
from emotiongan.losses import (
    ABLATIONS, LossWeights, charbonnier_loss, discriminator_adversarial, epe_loss, expression_ce, flow_reconstruction_terms,
    l1_loss, perceptual_loss,
)
from emotiongan.nets import (
    ExpressionClassifier, FlowGenerator, ImageGenerator, NetSpec, PatchDiscriminator, random_extractor,
)
from emotiongan.trainer import (
    ScorerConfig, TensorCorpus, build_models, build_optimizers, load_models, reference_config, toy_config, train_fold,
    train_step_frontalization, train_step_warping,
)

RESULTS = []


def verdict(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def _field(u, v):
    t = torch.zeros(1, 2, 4, 4, dtype=torch.float64)
    t[:, 0], t[:, 1] = u, v
    return t


def _latest(out, variant):
    return sorted((out / variant / "fold_00" / "checkpoints").glob("epoch_*.pt"))[-1]


# 1-4: unit-scale criteria ------------------------------------------------------------

def test_criterion_01_analytic_losses():
    t = time.perf_counter()
    z = torch.zeros(1, 2, 4, 4, dtype=torch.float64)
    x = torch.randn(2, 2, 4, 4, dtype=torch.float64)
    eps = 1e-3
    got = {
        "epe (1,0)": (epe_loss(_field(1, 0), z).item(), 1.0),
        "epe (3,4)": (epe_loss(_field(3, 4), z).item(), 5.0),
        "charbonnier(x,x)": (charbonnier_loss(x, x, eps).item(), eps),
        "CE uniform": (expression_ce(torch.zeros(4, 7, dtype=torch.float64), torch.arange(4)).item(), math.log(7)),
        "cGAN D at 0.5": (discriminator_adversarial(torch.zeros(1, 1, 8, 8), torch.zeros(1, 1, 8, 8)).item(),
                          math.log(2)),
    }
    elapsed = time.perf_counter() - t
    worst = max(abs(a - b) for a, b in got.values())
    verdict(1, worst <= 1e-6 and elapsed < 5, f"max abs error {worst:.2e} (tol 1e-6), {elapsed:.2f} s (< 5 s)")


def test_criterion_02_gradient_checks():
    t = time.perf_counter()
    torch.manual_seed(0)
    ext = random_extractor(seed=0, widths=(4, 4, 4)).double()
    labels = torch.tensor([0, 3, 6])
    cases = {
        "epe": (epe_loss, [(2, 2, 8, 8), (2, 2, 8, 8)]),
        "charbonnier": (lambda a, b: charbonnier_loss(a, b, 1e-3), [(2, 2, 8, 8), (2, 2, 8, 8)]),
        "l1": (l1_loss, [(2, 3, 8, 8), (2, 3, 8, 8)]),
        "perceptual": (lambda a, b: perceptual_loss(a, b, ext), [(1, 3, 8, 8), (1, 3, 8, 8)]),
        "cross-entropy": (lambda zl: expression_ce(zl, labels), [(3, 7)]),
    }
    passed = []
    for name, (fn, shapes) in cases.items():
        # random inputs keep the L1 differences away from the kink at zero
        inputs = [torch.randn(*s, dtype=torch.float64, requires_grad=True) for s in shapes]
        ok = torch.autograd.gradcheck(fn, inputs, eps=1e-6, atol=1e-8, rtol=1e-4, raise_exception=False)
        if ok:
            passed.append(name)
    elapsed = time.perf_counter() - t
    verdict(2, len(passed) == len(cases) and elapsed < 60,
            f"{len(passed)}/{len(cases)} losses pass finite differences (rtol 1e-4), {elapsed:.1f} s (< 60 s)")


def test_criterion_03_shape_and_range_contracts():
    t = time.perf_counter()
    torch.manual_seed(0)
    spec = NetSpec()
    checks = []
    with torch.no_grad():
        g_f = FlowGenerator(spec.flow_generator).eval()
        x = torch.rand(1, 2, 128, 128) * 2 - 1
        x[:, 0] = x[:, 0].abs()
        y = g_f(x)
        checks.append(y.shape == (1, 2, 128, 128) and y[:, 0].min() >= 0 and y[:, 0].max() <= 1
                      and y[:, 1].abs().max() <= 1)
        d_p = PatchDiscriminator(spec.patch_discriminator).eval()
        checks.append(d_p(x, y).shape == (1, 1, 8, 8))
        for cin, s in ((2, spec.expression_discriminator), (3, spec.expression_scorer)):
            p = torch.softmax(ExpressionClassifier(s, in_channels=cin).eval()(torch.rand(2, cin, 128, 128)).double(), 1)
            checks.append(p.shape == (2, 7) and bool(torch.allclose(p.sum(1), torch.ones(2, dtype=p.dtype), atol=1e-6)))
        g_w = ImageGenerator(spec.image_generator).eval()
        face = g_w(torch.rand(1, 3, 128, 128), y)
        checks.append(face.shape == (1, 3, 128, 128) and face.min() >= 0 and face.max() <= 1)
    elapsed = time.perf_counter() - t
    verdict(3, all(checks) and elapsed < 30,
            f"{sum(checks)}/{len(checks)} contracts hold at full network size, {elapsed:.1f} s (< 30 s)")


def test_criterion_04_tiny_overfit():
    t = time.perf_counter()
    samples = toy_corpus(8, seed=5)
    cfg = toy_config()
    corpus = TensorCorpus(samples, cfg.clip_threshold)
    everything = corpus.batch(range(8))
    models = build_models(cfg)
    opts = build_optimizers(models, cfg)

    def epe_term():
        models.g_f.eval()
        with torch.no_grad():
            return flow_reconstruction_terms(models.g_f(everything.inputs), everything.targets,
                                             cfg.clip_threshold, cfg.weights)[0].item()

    start = epe_term()
    for step in range(300):
        batch = corpus.batch([(4 * step + i) % 8 for i in range(4)])
        train_step_frontalization(batch, models, opts, cfg, epoch=0, step_id=step)
    end = epe_term()
    drop = 1 - end / start

    models = build_models(cfg)
    opts = build_optimizers(models, cfg)
    one = corpus.batch([3])
    reached = None
    for step in range(500):
        rec = train_step_warping(one, models, opts, cfg, step)
        if rec["l1"] < 0.02:
            reached = step + 1
            break
    elapsed = time.perf_counter() - t
    verdict(4, drop >= 0.8 and reached is not None and elapsed <= 600,
            f"EPE term {start:.2f} -> {end:.3f} px ({100 * drop:.1f}% drop, need >= 80%); "
            f"G_W L1 < 0.02 after {reached} steps (need <= 500); {elapsed:.0f} s (<= 600 s)")


# 7, 9: round-trips and protocol layout ----------------------------------------------------

def test_criterion_07_round_trips(tmp_path, small_corpus):
    rng = np.random.default_rng(7)
    clip = 10.0
    ang = rng.uniform(-np.pi, np.pi, (64, 64))
    mag = rng.uniform(0, clip, (64, 64))
    f = np.stack([mag * np.cos(ang), mag * np.sin(ang)], axis=-1)
    field = FlowField.from_array(f)
    back_field = denormalize(clip_normalize(field, clip))
    norm_err = float(max(np.abs(back_field.u - field.u).max(), np.abs(back_field.v - field.v).max()))

    flow = FlowField(rng.normal(size=(37, 53)).astype(np.float32), rng.normal(size=(37, 53)).astype(np.float32))
    write_flo(tmp_path / "a.flo", flow)
    back = read_flo(tmp_path / "a.flo")
    flo_exact = np.array_equal(back.u, flow.u) and np.array_equal(back.v, flow.v)
    write_flo(tmp_path / "b.flo", back)
    flo_exact = flo_exact and (tmp_path / "a.flo").read_bytes() == (tmp_path / "b.flo").read_bytes()

    cfg = toy_config(epochs=2, nets=NetSpec().scaled(8), scorer=ScorerConfig(pretrain_epochs=1),
                     weights=LossWeights(connection_epoch=1))
    corpus = TensorCorpus(small_corpus[:8], cfg.clip_threshold)
    ids = corpus.ids
    straight = train_fold(corpus, ids, cfg, 0, tmp_path / "straight")
    train_fold(corpus, ids, cfg, 0, tmp_path / "split", stop_after_epoch=0)
    resumed = train_fold(corpus, ids, cfg, 0, tmp_path / "split", resume=True)
    a = {n: m.state_dict() for n, m in straight.models.trainable().items()}
    b = {n: m.state_dict() for n, m in resumed.models.trainable().items()}
    ckpt_equal = all(torch.equal(a[n][k], b[n][k]) for n in a for k in a[n])
    loaded = load_models(straight.checkpoint, cfg)
    c = {n: m.state_dict() for n, m in loaded.trainable().items()}
    ckpt_equal = ckpt_equal and all(torch.equal(a[n][k], c[n][k]) for n in a for k in a[n])
    verdict(7, norm_err <= 1e-6 and flo_exact and ckpt_equal,
            f"normalization max error {norm_err:.1e} (tol 1e-6); .flo bit-exact {flo_exact}; "
            f"save/resume/reload bit-equal {ckpt_equal}")


def test_criterion_09_protocol_layout_only():
    # Real-data numbers need licensed datasets and are not a numeric gate; only check that
    # the reference preset carries the original training settings.
    cfg = reference_config()
    settings = (cfg.epochs, cfg.batch_size, cfg.folds.k, cfg.clip_threshold) == (15, 4, 10, 10.0)
    verdict(9, settings, "documentation only: real-data tables are not desk-reproducible; "
                         "reference preset settings present")


# 5, 6, 8, 10: shared toy training --------------------------------------------------------

@pytest.fixture(scope="session")
def toy_study(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy_study")
    t = time.perf_counter()
    samples = toy_corpus(200, seed=0, max_rotation=20.0, noise_scale=0.02)
    folds = make_folds(samples, k=10, seed=0)
    cfg = toy_config()
    reports = run_ablation(samples, folds, cfg, ["full"], fold_indices=[0], out_dir=out)
    full_seconds = time.perf_counter() - t
    reports.update(run_ablation(samples, folds, cfg, ["no_recon", "no_expression", "no_warping"],
                                fold_indices=[0], out_dir=out))
    return {"samples": samples, "folds": folds, "cfg": cfg, "out": out, "reports": reports,
            "full_seconds": full_seconds}


def test_criterion_05_synthetic_frontalization(toy_study):
    res = toy_study["reports"]["full"].folds[0]["toy"]
    base, front = res.epe["baseline"]["mean"], res.epe["frontalized"]["mean"]
    drop = 1 - front / base
    acc_in, acc_fr = res.flow_accuracy["baseline"], res.flow_accuracy["frontalized"]
    secs = toy_study["full_seconds"]
    verdict(5, drop >= 0.3 and acc_fr > acc_in and secs <= 3600,
            f"held-out EPE {base:.2f} -> {front:.2f} px ({100 * drop:.0f}% lower, need >= 30%); "
            f"D_E accuracy input {acc_in:.0f}% -> frontalized {acc_fr:.0f}%; build+train+eval {secs / 60:.1f} min")


def test_criterion_06_frontal_invariance(toy_study):
    cfg = dataclasses.replace(toy_study["cfg"], ablation="full")
    models = load_models(_latest(toy_study["out"], "full"), cfg)
    frontal = toy_corpus(20, seed=99, max_rotation=0.0, noise_scale=0.0)
    err = float(np.mean([epe(frontalize_flow(s.input_flow, models, cfg.clip_threshold), s.input_flow)
                         for s in frontal]))
    verdict(6, err < 1.0, f"output-to-input EPE on 20 frontal samples {err:.3f} px (< 1.0)")


def test_criterion_08_protocol_accounting(toy_study):
    samples = toy_study["samples"]
    a = make_folds(samples, k=10, seed=0)
    b = make_folds(samples, k=10, seed=0)
    tests = [sid for f in range(10) for sid in a.test_ids(f)]
    partition = sorted(tests) == sorted(s.sample_id for s in samples) and len(set(tests)) == len(tests)
    deterministic = a.assignment == b.assignment
    reports = toy_study["reports"]
    rows = ablation_table(reports).splitlines()[1:]
    four = check_variants(None) == list(ABLATIONS) and len(rows) == 4 and set(reports) == set(ABLATIONS)
    cfg = dataclasses.replace(toy_study["cfg"], ablation="full")
    models = load_models(_latest(toy_study["out"], "full"), cfg)
    test = [s for s in samples if s.sample_id in set(a.test_ids(0))]
    ident = evaluate_fold(models, test, frontalizer=IdentityFrontalizer())["toy"]
    zero = ident.flow_delta == 0.0 and ident.image_delta == 0.0
    verdict(8, partition and deterministic and four and zero,
            f"10 folds partition {partition}, deterministic {deterministic}; ablation rows {len(rows)}; "
            f"identity frontalizer delta flow {ident.flow_delta:.1f} / image {ident.image_delta:.1f}")


def test_criterion_10_ablation_ordering(toy_study):
    # A 20-sample test fold moves accuracy in 5-point steps, so the ordering is judged on a
    # larger held-out draw of 140 samples from unseen subjects; fold-0 numbers are shown too.
    fresh = toy_corpus(140, seed=123, max_rotation=20.0, noise_scale=0.02)
    acc, fold0 = {}, {}
    for v in ABLATIONS:
        cfg = dataclasses.replace(toy_study["cfg"], ablation=v)
        models = load_models(_latest(toy_study["out"], v), cfg)
        acc[v] = evaluate_fold(models, fresh)["toy"].flow_accuracy["frontalized"]
        fold0[v] = toy_study["reports"][v].folds[0]["toy"].flow_accuracy["frontalized"]
    ok = all(acc["full"] >= acc[v] for v in ABLATIONS if v != "full")
    print(ablation_table(toy_study["reports"]))
    print(reconstruction_table(toy_study["reports"]["full"]))
    print(accuracy_table(toy_study["reports"]["full"]))
    verdict(10, ok, "held-out flow accuracy " + ", ".join(f"{v} {acc[v]:.1f}%" for v in ABLATIONS)
            + " (fold 0: " + ", ".join(f"{fold0[v]:.0f}%" for v in ABLATIONS) + ")")


def test_transfer_keeps_expression_across_identities(toy_study):
    # not a numbered criterion: warping one flow onto two identities should mostly yield the
    # same scorer class
    cfg = dataclasses.replace(toy_study["cfg"], ablation="full")
    models = load_models(_latest(toy_study["out"], "full"), cfg)
    samples = toy_study["samples"]
    faces = {}
    for s in samples:
        faces.setdefault(s.subject_id, s.neutral_face)
    pair = list(faces.values())[:2]
    test = [s for s in samples if s.sample_id in set(toy_study["folds"].test_ids(0))]
    agree = 0
    for s in test:
        preds = []
        for face in pair:
            out = transfer_expression(s.input_flow, face, models, cfg.clip_threshold)
            x = torch.from_numpy(out.pixels.transpose(2, 0, 1).copy())[None].float()
            with torch.no_grad():
                preds.append(int(models.scorer(x).argmax()))
        agree += preds[0] == preds[1]
    print(f"same class on both identities for {agree}/{len(test)} held-out flows")
    assert agree > len(test) / 2
