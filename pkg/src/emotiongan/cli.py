"""Command-line entry point: ``emotiongan <subcommand> [options]``.

Hyperparameters come from a YAML config (on top of a preset); ``--set key=value``
and ``EMOTIONGAN_CFG__SECTION__KEY=value`` environment variables override it.
Exit codes: 0 success, 2 config error, 3 data error, 4 numeric abort.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .errors import (CheckpointError, ConfigError, DataError, EmotionGANError, ExtractorUnavailableError,
                     NotFittedError, NumericAbort, ScorerMissingError)

log = logging.getLogger("emotiongan")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


# Config resolution ------------------------------------------------------------

def _deep_merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def _read_yaml(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def resolve_train_config(args):
    from .trainer.config import apply_overrides, config_from_dict, config_to_dict, env_overrides, reference_config, toy_config

    base = config_to_dict(toy_config() if args.preset == "toy" else reference_config())
    if args.config:
        base = _deep_merge(base, _read_yaml(args.config))
    data = apply_overrides(base, env_overrides() + list(args.set or []))
    if args.seed is not None:
        data["seed"] = args.seed
    return config_from_dict(data)


def resolve_corpus_config(args):
    from .dataio.corpus import CorpusConfig
    from .trainer.config import apply_overrides, env_overrides

    data = CorpusConfig().to_dict()
    if args.config:
        data = _deep_merge(data, _read_yaml(args.config))
    data = apply_overrides(data, env_overrides() + list(args.set or []))
    if args.seed is not None:
        data["seed"] = args.seed
    try:
        return CorpusConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"corpus config: {exc}") from None


def _run_config(run_dir: Path, args):
    """Training config of a run: its snapshot, unless the user passes one explicitly."""
    if args.config or args.set:
        return resolve_train_config(args)
    from .trainer.config import load_config

    snap = run_dir / "resolved_config.yaml"
    if not snap.exists():
        raise ConfigError(f"{run_dir}: no resolved_config.yaml; pass --config")
    return load_config(snap)


def _find_run_dir(checkpoint: Path) -> Path:
    for parent in checkpoint.resolve().parents:
        if (parent / "resolved_config.yaml").exists():
            return parent
    return checkpoint.resolve().parent


def _load_checkpoint_models(args):
    from .trainer.loop import load_models

    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        raise CheckpointError(f"checkpoint not found: {ckpt}")
    cfg = _run_config(_find_run_dir(ckpt), args)
    return load_models(ckpt, cfg, verify_hash=not args.no_verify), cfg


def _fold_checkpoint(run_dir: Path, fold: int) -> Path:
    found = sorted((run_dir / f"fold_{fold:02d}" / "checkpoints").glob("epoch_*.pt"))
    if not found:
        raise CheckpointError(f"{run_dir}: no checkpoint for fold {fold}")
    return found[-1]


def _snapshot(out: Path, name: str, payload: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(yaml.safe_dump(payload, sort_keys=False))


def _read_flow_input(args):
    from .flowcore import FaceFrame, compute_flow, read_flo, read_image

    if args.flow:
        return read_flo(args.flow)
    if args.images:
        a, b = (FaceFrame(read_image(p)) for p in args.images)
        return compute_flow(a, b)
    raise ConfigError("give --flow FILE.flo or --images NEUTRAL EXPRESSIVE")


# Subcommands ------------------------------------------------------------------

def cmd_prepare(args) -> int:
    from .dataio.corpus import build_paired_samples, cache_key_for, write_corpus, INDEX_NAME, KEY_NAME
    from .dataio.manifest import load_dataset
    from .dataio.toy import toy_sequences, write_sequences

    cfg = resolve_corpus_config(args)
    out = Path(args.out)
    manifests = [Path(m) for m in args.manifest or []]
    if args.synthetic:
        src = out / f"synthetic_n{args.synthetic}_f{args.synthetic_frames}_s{cfg.seed}"
        manifest = src / "manifest.yaml"
        if not manifest.exists():
            # written once so that re-runs see unchanged files and hit the cache
            manifest = write_sequences(src, toy_sequences(args.synthetic, n_frames=args.synthetic_frames,
                                                          seed=cfg.seed))
        manifests.append(manifest)
    if not manifests:
        raise ConfigError("prepare needs --manifest or --synthetic N")
    key = cache_key_for(manifests, cfg)
    if (out / KEY_NAME).exists() and (out / INDEX_NAME).exists() and (out / KEY_NAME).read_text() == key:
        print(f"cache hit: {out} ({key})")
        return EXIT_OK
    sequences, problems = [], []
    for m in manifests:
        ds = load_dataset(m)
        for seq_id, line, msg in ds.errors:
            problems.append(f"{m}: line {line}: {seq_id}: {msg}")
        sequences.extend(s for s in ds.sequences if s.seq_id not in ds.flagged)
    rejected = []
    samples = build_paired_samples(sequences, cfg, errors=rejected, workers=args.workers)
    problems.extend(f"{seq_id}: {msg}" for seq_id, msg in rejected)
    for p in problems:
        print(f"warning: {p}", file=sys.stderr)
    _snapshot(out, "corpus_config.yaml", {"manifests": [str(m) for m in manifests], **cfg.to_dict()})
    write_corpus(samples, out, key)
    print(f"wrote {len(samples)} samples to {out} ({key}); {len(problems)} entries skipped")
    return EXIT_OK


def cmd_train(args) -> int:
    from .dataio.corpus import load_corpus
    from .dataio.folds import FoldSplit, make_folds
    from .trainer.loop import run_training

    cfg = resolve_train_config(args)
    samples = load_corpus(args.corpus)
    out = Path(args.out)
    folds_path = out / "folds.json"
    if args.resume and folds_path.exists():
        folds = FoldSplit.from_dict(json.loads(folds_path.read_text()))
    else:
        folds = make_folds(samples, k=cfg.folds.k, seed=cfg.folds.seed, subject_disjoint=cfg.folds.subject_disjoint)

    def progress(rec):
        if rec["model"] == "frontalization" and args.verbose:
            log.info("fold %d epoch %d step %d total %.4f", rec["fold"], rec["epoch"], rec["step"], rec["total"])

    runs = run_training(samples, folds, cfg, out, fold_indices=args.folds, resume=args.resume,
                        stop_after_epoch=args.stop_after_epoch, progress=progress)
    for fold, run in runs.items():
        print(f"fold {fold}: {run.checkpoint}")
    return EXIT_OK


def cmd_frontalize(args) -> int:
    from .evalsuite import frontalize_flow
    from .flowcore import flow_to_color, write_flo, write_image

    models, cfg = _load_checkpoint_models(args)
    flow = _read_flow_input(args)
    if flow.shape != (128, 128):
        from .flowcore import resize_flow
        flow = resize_flow(flow, 128, 128)
    result = frontalize_flow(flow, models, cfg.clip_threshold)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_flo(out / "frontalized.flo", result)
    write_image(out / "frontalized.png", flow_to_color(result).pixels)
    write_image(out / "input.png", flow_to_color(flow).pixels)
    _snapshot(out, "resolved_config.yaml", {"command": "frontalize", "checkpoint": str(args.checkpoint),
                                            "train_config_hash": _hash(cfg)})
    print(f"wrote {out / 'frontalized.flo'}")
    return EXIT_OK


def _hash(cfg) -> str:
    from .trainer.config import config_hash
    return config_hash(cfg)


def _neutral_face(path):
    from .flowcore import FaceFrame, read_image, resize_image

    px = read_image(path)
    if px.shape[:2] != (128, 128):
        px = resize_image(px, 128)
    return FaceFrame(np.clip(px, 0, 1))


def _warp_like(args, frontalize: bool, command: str) -> int:
    from .dataio.corpus import load_corpus
    from .evalsuite import average_face, transfer_expression
    from .flowcore import resize_flow, write_image

    models, cfg = _load_checkpoint_models(args)
    flow = _read_flow_input(args)
    if flow.shape != (128, 128):
        flow = resize_flow(flow, 128, 128)
    if getattr(args, "average_face", None):
        target = average_face(load_corpus(args.average_face))
    elif args.neutral:
        target = _neutral_face(args.neutral)
    else:
        raise ConfigError(f"{command} needs --neutral IMAGE" + (" or --average-face CORPUS" if command == "transfer" else ""))
    face = transfer_expression(flow, target, models, cfg.clip_threshold, frontalize=frontalize)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_image(out / f"{command}.png", face.pixels)
    _snapshot(out, "resolved_config.yaml", {"command": command, "checkpoint": str(args.checkpoint),
                                            "frontalize": frontalize, "train_config_hash": _hash(cfg)})
    print(f"wrote {out / (command + '.png')}")
    return EXIT_OK


def cmd_warp(args) -> int:
    return _warp_like(args, frontalize=False, command="warp")


def cmd_transfer(args) -> int:
    return _warp_like(args, frontalize=not args.no_frontalize, command="transfer")


def cmd_evaluate(args) -> int:
    from .dataio.corpus import load_corpus
    from .dataio.folds import FoldSplit
    from .evalsuite import EvalReport, IdentityFrontalizer, evaluate_fold, write_eval_report
    from .trainer.loop import load_models

    run_dir = Path(args.run)
    cfg = _run_config(run_dir, args)
    samples = load_corpus(args.corpus)
    by_id = {s.sample_id: s for s in samples}
    folds_path = run_dir / "folds.json"
    if not folds_path.exists():
        raise DataError(f"{run_dir}: no folds.json")
    folds = FoldSplit.from_dict(json.loads(folds_path.read_text()))
    indices = args.folds if args.folds is not None else [
        f for f in range(folds.k) if (run_dir / f"fold_{f:02d}" / "checkpoints").is_dir()]
    if not indices:
        raise CheckpointError(f"{run_dir}: no trained folds")
    per_fold = {}
    for f in indices:
        models = load_models(_fold_checkpoint(run_dir, f), cfg, verify_hash=not args.no_verify)
        test = [by_id[i] for i in folds.test_ids(f) if i in by_id]
        per_fold[f] = evaluate_fold(models, test, clip_threshold=cfg.clip_threshold, fold=f,
                                    frontalizer=IdentityFrontalizer() if args.identity else None)
    report = EvalReport(per_fold, {"run": str(run_dir), "identity_frontalizer": bool(args.identity),
                                   "config_hash": _hash(cfg), "folds": list(indices)})
    out = Path(args.out)
    paths = write_eval_report(report, out)
    _snapshot(out, "resolved_config.yaml", {"command": "evaluate", "run": str(run_dir),
                                            "identity": bool(args.identity), "train_config_hash": _hash(cfg)})
    print(paths["accuracy"].read_text(), end="")
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .dataio.corpus import load_corpus
    from .dataio.folds import make_folds
    from .evalsuite import check_variants, run_ablation, write_ablation_report
    from .trainer.config import config_to_dict

    cfg = resolve_train_config(args)
    variants = check_variants(args.variants)
    samples = load_corpus(args.corpus)
    folds = make_folds(samples, k=cfg.folds.k, seed=cfg.folds.seed, subject_disjoint=cfg.folds.subject_disjoint)
    out = Path(args.out)
    _snapshot(out, "resolved_config.yaml", config_to_dict(cfg))
    reports = run_ablation(samples, folds, cfg, variants, fold_indices=args.folds, out_dir=out)
    paths = write_ablation_report(reports, out)
    print(paths["table"].read_text(), end="")
    return EXIT_OK


def cmd_visualize(args) -> int:
    from .flowcore import flow_to_color, read_flo, write_image

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.flow:
        for p in args.flow:
            dest = out / (Path(p).stem + ".png")
            write_image(dest, flow_to_color(read_flo(p)).pixels)
            print(f"wrote {dest}")
    if args.run:
        _visualize_run(args, out)
    if not args.flow and not args.run:
        raise ConfigError("visualize needs --flow FILES or --run DIR --corpus DIR")
    return EXIT_OK


def _visualize_run(args, out: Path) -> None:
    import torch

    from .dataio.corpus import load_corpus
    from .dataio.folds import FoldSplit
    from .evalsuite import frontalize_flow, sample_mosaic
    from .flowcore import normalize_array
    from .trainer.loop import load_models

    if not args.corpus:
        raise ConfigError("--run needs --corpus")
    run_dir = Path(args.run)
    cfg = _run_config(run_dir, args)
    folds = FoldSplit.from_dict(json.loads((run_dir / "folds.json").read_text()))
    fold = args.fold
    models = load_models(_fold_checkpoint(run_dir, fold), cfg, verify_hash=not args.no_verify)
    by_id = {s.sample_id: s for s in load_corpus(args.corpus)}
    test = [by_id[i] for i in folds.test_ids(fold) if i in by_id][: args.count]
    rows = []
    for s in test:
        fr = frontalize_flow(s.input_flow, models, cfg.clip_threshold)
        nflow = torch.from_numpy(normalize_array(fr.to_array(), cfg.clip_threshold))[None]
        face = torch.from_numpy(np.ascontiguousarray(s.neutral_face.pixels.transpose(2, 0, 1)))[None].float()
        with torch.no_grad():
            warped = models.g_w(face, nflow)[0].permute(1, 2, 0).numpy()
        rows.append({"input": s.input_flow, "target": s.target_flow, "frontalized": fr, "warped": warped})
    if not rows:
        raise DataError(f"fold {fold} has no test samples in {args.corpus}")
    dest = out / f"fold_{fold:02d}_mosaic.png"
    sample_mosaic(rows, dest)
    print(f"wrote {dest}")


# Parser -----------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, train_config: bool = True) -> None:
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value (repeatable)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output directory")
    if train_config:
        p.add_argument("--preset", choices=("reference", "toy"), default="reference",
                       help="defaults the config file is layered on")


def _checkpointed(p: argparse.ArgumentParser) -> None:
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--no-verify", action="store_true", help="skip the config-hash check")
    p.add_argument("--flow", help="input .flo file")
    p.add_argument("--images", nargs=2, metavar=("NEUTRAL", "EXPRESSIVE"), help="estimate the input flow")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emotiongan", description="Motion-domain face frontalization toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build the paired flow corpus cache from manifests")
    _common(p, train_config=False)
    p.add_argument("--manifest", nargs="+")
    p.add_argument("--synthetic", type=int, default=0, metavar="N", help="add N synthetic toy sequences")
    p.add_argument("--synthetic-frames", type=int, default=2)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train every fold (or --folds) on a prepared corpus")
    _common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--folds", type=int, nargs="+")
    p.add_argument("--stop-after-epoch", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("frontalize", help="frontalize one flow field")
    _common(p)
    _checkpointed(p)
    p.set_defaults(func=cmd_frontalize)

    for name, func in (("warp", cmd_warp), ("transfer", cmd_transfer)):
        p = sub.add_parser(name, help="warp a flow onto a neutral face" if name == "warp"
                           else "transfer (frontalized) motion onto another identity")
        _common(p)
        _checkpointed(p)
        p.add_argument("--neutral", help="target neutral face image")
        if name == "transfer":
            p.add_argument("--average-face", metavar="CORPUS", help="use the mean neutral face of a corpus")
            p.add_argument("--no-frontalize", action="store_true")
        p.set_defaults(func=func)

    p = sub.add_parser("evaluate", help="cross-validated reconstruction and FER evaluation")
    _common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--run", required=True, help="training output directory")
    p.add_argument("--folds", type=int, nargs="+")
    p.add_argument("--identity", action="store_true", help="evaluate the identity frontalizer")
    p.add_argument("--no-verify", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="train and evaluate the drop-one-loss variants")
    _common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--variants", nargs="+")
    p.add_argument("--folds", type=int, nargs="+")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("visualize", help="colour-code flows or render a test-fold mosaic")
    _common(p)
    p.add_argument("--flow", nargs="+")
    p.add_argument("--run")
    p.add_argument("--corpus")
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--no-verify", action="store_true")
    p.set_defaults(func=cmd_visualize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on unknown flags, matching the config-error code
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ExtractorUnavailableError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericAbort as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        for k, v in exc.diagnostics.items():
            print(f"  {k}: {v}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, CheckpointError, NotFittedError, ScorerMissingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EmotionGANError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
