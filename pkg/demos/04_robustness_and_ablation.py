#!/usr/bin/env python3
"""Robustness protocol and the loss-weight ablation.

Robustness: score the held-out split after pushing each clip through the
degradation policy (40% untouched, 40% resample-roundtripped through one of
{8, 16, 22.05, 32, 44.1} kHz, 20% mixed with crowd-like noise at 8/10/20 dB
SNR) and compare the EER against the clean run.

Ablation: retrain at several loss weights; weight 1.0 is the plain binary
model with the vocoder-identification term switched off.

Expect ~10 minutes on CPU (it retrains per weight).

Run:  python demos/04_robustness_and_ablation.py [outdir]
"""

import sys
from collections import Counter
from pathlib import Path

import numpy as np

from vocdet import (
    AugmentPolicy, MelParams, TrainConfig, augment_for_eval, build_corpus,
    load_audio, split_manifest, synth, train,
)
from vocdet.detector import load_checkpoint, tiny_config
from vocdet.evaluation import compute_eer, score_manifest
from vocdet.plots import render_ablation
from vocdet.training import run_lambda_ablation
from vocdet.vocoders import VocoderRegistry, toy_artifact_backend

out_dir = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/04_robustness")
p = MelParams()

source = out_dir / "source"
synth.make_toy_source(source, n_speakers=8, utterances_per_speaker=12,
                      duration=1.5, seed=7)
registry = VocoderRegistry([
    toy_artifact_backend(p, "comb", delay=16, gain=0.9, n_iters=8),
    toy_artifact_backend(p, "quantize", bits=4, n_iters=8),
])
manifest = build_corpus(source, registry, p, seed=11, out_dir=out_dir / "corpus")
manifest = split_manifest(manifest, (0.5, 0.25, 0.25), seed=1)

print("== train one multi-task model ==")
mcfg = tiny_config(num_vocoder_classes=registry.num_classes, seed=0)
tcfg = TrainConfig(lam=0.5, learning_rate=1e-3, batch_size=16,
                   max_steps=350, seed=0, eval_interval=50)
train(manifest, mcfg, tcfg, out_dir / "run")
model = load_checkpoint(out_dir / "run" / "best.ckpt.npz")[0]

print("== robustness: clean vs degraded test split ==")
noise = synth.toy_noise(4.0, p.sample_rate, np.random.default_rng(123))
policy = AugmentPolicy(noise=noise)  # 40/40/20 with the standard rate/SNR sets

clean_eer, _ = compute_eer(score_manifest(model, manifest, "test", seed=0))
degraded_eer, _ = compute_eer(
    score_manifest(model, manifest, "test", augment=policy, seed=0))
print(f"clean EER {clean_eer:.3f} -> degraded EER {degraded_eer:.3f} "
      "(same model, same split)")

branches = Counter()
rng = np.random.default_rng(0)
for rec in manifest.subset("test"):
    _, applied = augment_for_eval(load_audio(manifest.resolve(rec)), policy, rng)
    branches[applied.kind] += 1
print(f"branch draw example over the test split: {dict(branches)}")

print("== loss-weight ablation (retrains per weight) ==")
rows = run_lambda_ablation(manifest, mcfg, tcfg, [1.0, 0.5, 0.2], out_dir / "ablation")
for lam, eer in rows:
    tag = " (binary-only)" if lam == 1.0 else ""
    print(f"  weight {lam:.1f}{tag}: test EER {eer:.3f}")
render_ablation(rows, out_dir / "ablation.png")
print(f"figure: {out_dir / 'ablation.png'}")
