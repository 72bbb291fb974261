"""Operator entry point: `vocdet build|train|eval|ablate|plot`.

Exit codes: 0 success, 2 usage/configuration error, 1 runtime failure.
Environment overrides: VOCDET_WORKDIR (default output root),
VOCDET_WORKERS (builder worker count).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_run_config
from .corpus import Manifest, augment_for_eval, build_corpus, split_manifest
from .detector import load_checkpoint
from .errors import ConfigurationError, VocdetError
from .evaluation import ScoreSet, compute_eer, confusion_matrix, det_curve, score_manifest
from .training import run_lambda_ablation, train

DEFAULT_ABLATION_GRID = [1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1]


def _load_config(args) -> RunConfig:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "profile", None) is not None:
        cfg.profile = args.profile
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
    elif os.environ.get("VOCDET_WORKERS"):
        cfg.workers = int(os.environ["VOCDET_WORKERS"])
    return cfg


def _workdir(args) -> Path:
    if getattr(args, "workdir", None):
        return Path(args.workdir)
    return Path(os.environ.get("VOCDET_WORKDIR", "runs"))


def cmd_build(args) -> int:
    cfg = _load_config(args)
    out_dir = Path(args.out)
    manifest = build_corpus(
        args.source, cfg.registry(), cfg.mel_params(), cfg.seed, out_dir,
        n_workers=cfg.workers,
    )
    manifest = split_manifest(manifest, cfg.split_fractions, cfg.seed)
    path = manifest.save(out_dir / "manifest.tsv")
    cfg.echo(out_dir)

    by_class: dict[int, int] = {}
    for r in manifest.records:
        by_class[r.vocoder_class] = by_class.get(r.vocoder_class, 0) + 1
    names = {v: k for k, v in manifest.registry_snapshot.items()}
    names[0] = "real"
    print(f"manifest: {path}")
    print(f"records: {len(manifest.records)} "
          f"(real {by_class.get(0, 0)}, fake {len(manifest.records) - by_class.get(0, 0)})")
    for c in sorted(by_class):
        print(f"  class {c} [{names.get(c, '?')}]: {by_class[c]}")
    for split in ("train", "dev", "test"):
        print(f"  {split}: {len(manifest.subset(split))} records, "
              f"{len(manifest.speakers(split))} speakers")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    if args.lam is not None:
        cfg.train_overrides["lam"] = args.lam
    if args.steps is not None:
        cfg.train_overrides["max_steps"] = args.steps
    manifest = Manifest.load(args.manifest)
    workdir = _workdir(args)
    mcfg = cfg.model_config(num_vocoder_classes=len(manifest.registry_snapshot) + 1)
    tcfg = cfg.train_config()
    cfg.echo(workdir)
    state = train(manifest, mcfg, tcfg, workdir)
    print(f"trained {state.step} steps; best dev EER {state.best_dev_eer:.4f}")
    print(f"checkpoints: {workdir / 'best.ckpt.npz'} , {workdir / 'last.ckpt.npz'}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    model, _, _ = load_checkpoint(args.checkpoint)
    manifest = Manifest.load(args.manifest)
    out_dir = _workdir(args)
    out_dir.mkdir(parents=True, exist_ok=True)

    augment = None
    branch_counts: dict[str, int] = {}
    if args.augment:
        augment = cfg.augment_policy()
        # audit the branch draws with the same seed the scoring pass will use
        rng = np.random.default_rng(cfg.seed)
        from .audio import load_audio  # local import to keep CLI start fast

        records = sorted(manifest.subset(args.split), key=lambda r: r.utterance_id)
        for rec in records:
            w = load_audio(manifest.resolve(rec))
            _, applied = augment_for_eval(w, augment, rng)
            branch_counts[applied.kind] = branch_counts.get(applied.kind, 0) + 1

    scores = score_manifest(model, manifest, args.split, augment=augment, seed=cfg.seed)
    score_path = scores.save(out_dir / "scores.tsv")
    eer, threshold = compute_eer(scores)
    cm = confusion_matrix(scores, num_classes=len(manifest.registry_snapshot) + 1)
    cm_path = cm.save(out_dir / "confusion.tsv")

    lines = [
        f"split\t{args.split}",
        f"utterances\t{len(scores)}",
        f"eer\t{eer:.6f}",
        f"threshold\t{threshold:.6f}",
        f"vocoder_id_accuracy\t{cm.accuracy():.6f}",
        f"augmented\t{int(bool(args.augment))}",
    ]
    for kind in sorted(branch_counts):
        lines.append(f"branch_{kind}\t{branch_counts[kind]}")
    summary = out_dir / "summary.tsv"
    summary.write_text("\n".join(lines) + "\n")
    cfg.echo(out_dir)
    print("\n".join(lines))
    print(f"scores: {score_path}")
    print(f"confusion: {cm_path}")
    print(f"summary: {summary}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    manifest = Manifest.load(args.manifest)
    workdir = _workdir(args)
    lambdas = (
        [float(x) for x in args.lambdas.split(",")]
        if args.lambdas else list(DEFAULT_ABLATION_GRID)
    )
    mcfg = cfg.model_config(num_vocoder_classes=len(manifest.registry_snapshot) + 1)
    tcfg = cfg.train_config()
    cfg.echo(workdir)
    rows = run_lambda_ablation(manifest, mcfg, tcfg, lambdas, workdir)
    for lam, eer in rows:
        print(f"lambda {lam:g}\ttest EER {eer:.4f}")
    print(f"table: {workdir / 'ablation.tsv'}")
    return 0


def cmd_plot(args) -> int:
    from . import plots
    from .audio import load_audio

    cfg = _load_config(args)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.artifact == "specdiff":
        if len(args.inputs) != 2:
            raise ConfigurationError("specdiff needs ORIGINAL.wav VOCODED.wav")
        original = load_audio(args.inputs[0])
        vocoded = load_audio(args.inputs[1])
        plots.render_specdiff(original, vocoded, cfg.mel_params(), out)
    elif args.artifact == "confusion":
        if len(args.inputs) != 1:
            raise ConfigurationError("confusion needs one confusion.tsv")
        from .evaluation import ConfusionMatrix

        plots.render_confusion(ConfusionMatrix.load(args.inputs[0]), out)
    elif args.artifact == "det":
        if len(args.inputs) != 1:
            raise ConfigurationError("det needs one scores.tsv")
        plots.render_det(det_curve(ScoreSet.load(args.inputs[0])), out)
    elif args.artifact == "ablation":
        if len(args.inputs) != 1:
            raise ConfigurationError("ablation needs one ablation.tsv")
        rows = []
        for line in Path(args.inputs[0]).read_text().splitlines():
            lam, eer = line.split("\t")
            rows.append((float(lam), float(eer)))
        plots.render_ablation(rows, out)
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vocdet",
        description="Detect synthetic voices via vocoder reconstruction artifacts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, workdir=True):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override config seed")
        p.add_argument("--profile", choices=("tiny", "paper"), help="model size profile")
        p.add_argument("--workers", type=int, help="builder worker count")
        if workdir:
            p.add_argument("--workdir", help="output directory (default $VOCDET_WORKDIR or ./runs)")

    p = sub.add_parser("build", help="build a self-vocoded corpus + manifest")
    common(p, workdir=False)
    p.add_argument("--source", required=True, help="directory of <speaker>/*.wav")
    p.add_argument("--out", required=True, help="corpus output directory")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("train", help="train the detector on a manifest")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--lambda", dest="lam", type=float, help="binary-loss weight")
    p.add_argument("--steps", type=int, help="override max training steps")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a split and report EER + confusion")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test", choices=("train", "dev", "test"))
    p.add_argument("--augment", action="store_true",
                   help="apply the degradation policy before scoring")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="loss-weight sweep with per-weight test EER")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--lambdas", help="comma-separated weights (default 1.0..0.1)")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("plot", help="render a figure from run artifacts")
    common(p, workdir=False)
    p.add_argument("artifact", choices=("specdiff", "confusion", "det", "ablation"))
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out", required=True, help="output image path")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors already
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigurationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except VocdetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - unexpected runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
