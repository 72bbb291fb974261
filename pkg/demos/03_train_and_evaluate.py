#!/usr/bin/env python3
"""Train the raw-waveform detector on a toy corpus and evaluate it.

The model shares one encoder (sinc band-pass front end, residual blocks with
feature-map scaling, GRU) between two heads: a binary real/fake logit and a
vocoder-class softmax. The vocoder-identification task is a pretext: it
forces the shared features to carry vocoder-level detail, which is exactly
what the binary decision needs.

Runs the tiny profile on CPU in a couple of minutes.

Run:  python demos/03_train_and_evaluate.py [outdir]
"""

import sys
from pathlib import Path

from vocdet import MelParams, TrainConfig, build_corpus, split_manifest, synth, train
from vocdet.detector import load_checkpoint, tiny_config
from vocdet.evaluation import compute_eer, confusion_matrix, det_curve, score_manifest
from vocdet.plots import render_confusion, render_det
from vocdet.training import read_metrics
from vocdet.vocoders import VocoderRegistry, toy_artifact_backend

out_dir = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/03_train")
p = MelParams()

print("== corpus ==")
source = out_dir / "source"
synth.make_toy_source(source, n_speakers=8, utterances_per_speaker=12,
                      duration=1.5, seed=7)
registry = VocoderRegistry([
    toy_artifact_backend(p, "comb", delay=16, gain=0.9, n_iters=8),
    toy_artifact_backend(p, "quantize", bits=4, n_iters=8),
])
manifest = build_corpus(source, registry, p, seed=11, out_dir=out_dir / "corpus")
manifest = split_manifest(manifest, (0.5, 0.25, 0.25), seed=1)
print(f"train/dev/test: {len(manifest.subset('train'))}/"
      f"{len(manifest.subset('dev'))}/{len(manifest.subset('test'))} clips")

print("== training (tiny profile, 350 steps) ==")
mcfg = tiny_config(num_vocoder_classes=registry.num_classes, seed=0)
tcfg = TrainConfig(lam=0.5, learning_rate=1e-3, batch_size=16,
                   max_steps=350, seed=0, eval_interval=50)
state = train(manifest, mcfg, tcfg, out_dir / "run")
rows = read_metrics(out_dir / "run" / "metrics.tsv")
print(f"loss: {rows[0]['total']:.3f} -> {rows[-1]['total']:.3f}; "
      f"best dev EER {state.best_dev_eer:.3f}")

print("== held-out evaluation ==")
model = load_checkpoint(out_dir / "run" / "best.ckpt.npz")[0]
scores = score_manifest(model, manifest, "test", seed=0)
eer, threshold = compute_eer(scores)
cm = confusion_matrix(scores, num_classes=registry.num_classes)
print(f"test EER: {eer:.3f} at threshold {threshold:.3f}")
print(f"vocoder-ID accuracy: {cm.accuracy():.3f} (chance 1/3)")
print("confusion (rows = truth: real, comb, quantize):")
print(cm.counts)

render_confusion(cm, out_dir / "confusion.png",
                 class_names=["real", "comb16", "quant4"])
render_det(det_curve(scores), out_dir / "det.png")
print(f"figures: {out_dir / 'confusion.png'}, {out_dir / 'det.png'}")
