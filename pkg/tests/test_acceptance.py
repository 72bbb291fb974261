"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s`. The training-backed
criteria (4 and 9) are marked slow but still run by default.
"""

import statistics
import struct
import time

import numpy as np
import pytest

from vocdet import audio, corpus, detector, plots, synth, training, vocoders
from vocdet.detector import load_checkpoint
from vocdet.evaluation import compute_eer, confusion_matrix, score_manifest
from vocdet.training import Adam, ClipLoader, TrainConfig, joint_loss, joint_loss_grads

from conftest import toy_registry
from oracles import eer_midpoint_oracle, measured_snr_db

CHI2_99_2DOF = 9.21034


def _png_size(path):
    header = path.read_bytes()[:24]
    assert header[:8] == b"\x89PNG\r\n\x1a\n"
    width, height = struct.unpack(">II", header[16:24])
    return width, height


# ---------------------------------------------------------------------------
# 1. EER oracle parity
# ---------------------------------------------------------------------------

def test_criterion_1_eer_oracle_parity():
    t0 = time.monotonic()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(500):
        n = int(rng.integers(2, 201))
        labels = rng.integers(0, 2, n)
        if labels.sum() == 0:
            labels[0] = 1
        if labels.sum() == n:
            labels[0] = 0
        if rng.random() < 0.3:
            scores = rng.integers(0, max(2, n // 3), n) / max(2, n // 3)  # ties
        else:
            scores = rng.random(n)
        got, _ = compute_eer(scores=scores, labels=labels)
        want = eer_midpoint_oracle(scores, labels)
        worst = max(worst, abs(got - want))
        assert abs(got - want) <= 1e-9

    scores = np.random.default_rng(77).random(10_000)
    labels = np.r_[np.zeros(5000, int), np.ones(5000, int)]
    eer_random, _ = compute_eer(scores=scores, labels=labels)
    assert abs(eer_random - 0.5) <= 0.02

    elapsed = time.monotonic() - t0
    assert elapsed < 30.0
    print(f"\nACCEPTANCE 1 PASS - EER oracle parity: worst |diff| {worst:.2e} over 500 "
          f"sets; random-score EER {eer_random:.4f}; {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 2. Gradient check through the tiny model
# ---------------------------------------------------------------------------

def test_criterion_2_gradient_check():
    t0 = time.monotonic()
    mcfg = detector.tiny_config(num_vocoder_classes=3, seed=5)
    model = detector.init_model(mcfg)
    rng = np.random.default_rng(6)
    x = rng.uniform(-0.8, 0.8, (4, mcfg.input_length))
    y = np.array([0, 1, 1, 0])
    c = np.array([0, 1, 2, 0])
    lam = 0.5

    def loss():
        bl, vl = model.forward(x, train=True)
        return joint_loss(bl, vl, y, c, lam)[0]

    bl, vl = model.forward(x, train=True)
    d_bl, d_vl = joint_loss_grads(bl, vl, y, c, lam)
    model.zero_grad()
    model.backward(d_bl, d_vl)
    analytic = {k: v.copy() for k, v in model.grads().items()}
    params = model.params()

    # Forward evaluation is deterministic float64, so tiny steps stay clean;
    # larger steps (1e-5) straddle maxpool argmax ties and read as FD noise.
    h = 1e-7
    checked = 0
    worst_rel = 0.0
    pick = np.random.default_rng(7)
    for name, p in params.items():
        flat = list(np.ndindex(*p.shape))
        count = 2 if len(flat) >= 2 else 1
        for i in pick.choice(len(flat), size=count, replace=False):
            idx = flat[int(i)]
            orig = p[idx]
            p[idx] = orig + h
            lp = loss()
            p[idx] = orig - h
            lm = loss()
            p[idx] = orig
            num = (lp - lm) / (2 * h)
            an = analytic[name][idx]
            diff = abs(num - an)
            tol = max(1e-3 * max(abs(num), abs(an)), 1e-5)
            assert diff <= tol, (
                f"{name}[{idx}]: analytic {an:.3e} vs fd {num:.3e} (diff {diff:.2e})"
            )
            if max(abs(num), abs(an)) > 1e-5:
                worst_rel = max(worst_rel, diff / max(abs(num), abs(an)))
            checked += 1
    assert checked >= 50
    elapsed = time.monotonic() - t0
    assert elapsed < 120.0
    print(f"\nACCEPTANCE 2 PASS - gradient check: {checked} parameters across "
          f"{len(params)} tensors, worst rel err {worst_rel:.2e}; {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 3. Lambda linearity and the binary-only degenerate case
# ---------------------------------------------------------------------------

def test_criterion_3_lambda_linearity_and_degeneracy(toy_manifest, tmp_path):
    rng = np.random.default_rng(8)
    bl = rng.normal(0, 2, (10, 1))
    vl = rng.normal(0, 2, (10, 3))
    y = rng.integers(0, 2, 10)
    c = rng.integers(0, 3, 10)
    _, l_bin, l_mult = joint_loss(bl, vl, y, c, 0.5)
    for lam in (0.0, 0.25, 0.5, 1.0):
        total, lb, lm = joint_loss(bl, vl, y, c, lam)
        assert lb == l_bin and lm == l_mult
        assert total == lam * l_bin + (1.0 - lam) * l_mult  # exact equality

    # lambda = 1 training trajectory == hand-rolled binary-only training
    steps = 25
    mcfg = detector.tiny_config(num_vocoder_classes=3, seed=4)
    tcfg = TrainConfig(lam=1.0, learning_rate=1e-3, batch_size=8, max_steps=steps,
                       seed=4, eval_interval=1000)
    state = training.train(toy_manifest, mcfg, tcfg, tmp_path / "lam1")

    ref = detector.init_model(mcfg)
    init_params = {k: v.copy() for k, v in ref.params().items()}
    opt = Adam(ref.params(), tcfg.learning_rate, tcfg.beta1, tcfg.beta2, tcfg.eps)
    loader = ClipLoader(toy_manifest, "train", mcfg.input_length)
    data_rng = np.random.default_rng(tcfg.seed)
    for _ in range(steps):
        x, y_b, c_b = loader.sample_batch(tcfg.batch_size, data_rng)
        bl_b, vl_b = ref.forward(x, train=True)
        d_bl, _ = joint_loss_grads(bl_b, vl_b, y_b, c_b, 1.0)
        ref.zero_grad()
        ref.backward(d_bl, np.zeros_like(vl_b))  # no vocoder term at all
        opt.step(ref.grads())

    trained = state.model.params()
    binary_only = ref.params()
    for k in trained:
        assert np.array_equal(trained[k], binary_only[k]), f"trajectory diverged at {k}"
    for k in ("head_vocoder.W", "head_vocoder.b"):
        assert np.array_equal(trained[k], init_params[k]), f"{k} moved under lam=1"
    print("\nACCEPTANCE 3 PASS - loss linear in lambda (exact at 0/0.25/0.5/1); "
          f"lambda=1 trajectory identical to binary-only training over {steps} steps")


# ---------------------------------------------------------------------------
# 4. Toy end-to-end detection quality
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_4_toy_end_to_end(toy_manifest, tmp_path):
    t0 = time.monotonic()
    eers, accs = [], []
    for seed in range(3):
        mcfg = detector.tiny_config(num_vocoder_classes=3, seed=seed)
        tcfg = TrainConfig(lam=0.5, learning_rate=1e-3, batch_size=16, max_steps=350,
                           seed=seed, eval_interval=50)
        training.train(toy_manifest, mcfg, tcfg, tmp_path / f"seed{seed}")
        model = load_checkpoint(tmp_path / f"seed{seed}" / "best.ckpt.npz")[0]
        scores = score_manifest(model, toy_manifest, "test", seed=0)
        eer, _ = compute_eer(scores)
        acc = confusion_matrix(scores, num_classes=3).accuracy()
        eers.append(eer)
        accs.append(acc)
    med_eer = statistics.median(eers)
    med_acc = statistics.median(accs)
    elapsed = time.monotonic() - t0
    assert med_eer <= 0.20, f"median EER {med_eer} (per-seed {eers})"
    assert med_acc >= 0.60, f"median vocoder-ID accuracy {med_acc} (per-seed {accs})"
    assert elapsed < 600.0
    print(f"\nACCEPTANCE 4 PASS - toy end-to-end: median EER {med_eer:.3f} "
          f"(<= 0.20), median vocoder-ID accuracy {med_acc:.3f} (>= 0.60), "
          f"{elapsed:.0f}s for 3 seeds x 350 steps")


# ---------------------------------------------------------------------------
# 5. Self-vocoding artifact visibility
# ---------------------------------------------------------------------------

def test_criterion_5_artifact_visibility(mel_params, tmp_path):
    rng = np.random.default_rng(12)
    profile = synth.speaker_profile(rng)
    w = synth.toy_utterance(profile, 1.5, mel_params.sample_rate, rng)
    backend = vocoders.griffin_lim_backend(mel_params, 8)
    vocoded = vocoders.self_vocode(w, mel_params, backend)

    residual_self = vocoders.spectrogram_difference(w, w, mel_params)
    residual_voc = vocoders.spectrogram_difference(w, vocoded, mel_params)
    mean_self = float(np.mean(np.abs(residual_self)))
    mean_voc = float(np.mean(np.abs(residual_voc)))
    assert mean_self == 0.0
    assert mean_voc > 10.0 * mean_self
    assert mean_voc > 1e-3  # visible, not float dust

    out = plots.render_specdiff(w, vocoded, mel_params, tmp_path / "specdiff.png")
    width, height = _png_size(out)
    assert out.stat().st_size > 10_000
    assert width > 2.5 * height  # three side-by-side panels
    print(f"\nACCEPTANCE 5 PASS - artifact visibility: mean |mel residual| "
          f"{mean_voc:.3f} vs 0.0 for (w, w); three-panel figure rendered "
          f"({width}x{height})")


# ---------------------------------------------------------------------------
# 6. Augmentation protocol
# ---------------------------------------------------------------------------

def test_criterion_6_augmentation_protocol(toy_noise):
    policy = corpus.AugmentPolicy(noise=toy_noise)
    assert policy.resample_rates == (8000, 16000, 22050, 32000, 44100)
    assert policy.snrs_db == (8.0, 10.0, 20.0)

    rng = np.random.default_rng(31)
    clip_rng = np.random.default_rng(1)
    w = audio.Waveform(0.3 * clip_rng.standard_normal(4800), 24000)

    n = 10_000
    counts = {"original": 0, "resampled": 0, "noisy": 0}
    rates_seen = set()
    snr_errors = []
    for _ in range(n):
        out, applied = corpus.augment_for_eval(w, policy, rng)
        counts[applied.kind] += 1
        assert out.sample_rate == w.sample_rate
        if applied.kind == "resampled":
            rates_seen.add(applied.rate)
        elif applied.kind == "noisy":
            snr = measured_snr_db(out.samples, w.samples)
            nearest = min((8.0, 10.0, 20.0), key=lambda s: abs(s - snr))
            snr_errors.append(abs(snr - nearest))

    expected = {"original": 0.4 * n, "resampled": 0.4 * n, "noisy": 0.2 * n}
    chi2 = sum((counts[k] - expected[k]) ** 2 / expected[k] for k in counts)
    assert chi2 <= CHI2_99_2DOF, f"chi-square {chi2:.2f} with counts {counts}"
    assert rates_seen == {8000, 16000, 22050, 32000, 44100}
    assert max(snr_errors) <= 0.1
    print(f"\nACCEPTANCE 6 PASS - augmentation: counts {counts} (chi2 {chi2:.2f} "
          f"<= {CHI2_99_2DOF}), rates {sorted(rates_seen)}, max SNR error "
          f"{max(snr_errors):.2e} dB over {len(snr_errors)} noisy draws")


# ---------------------------------------------------------------------------
# 7. Dataset invariants
# ---------------------------------------------------------------------------

def test_criterion_7_dataset_invariants(toy_manifest, mel_params, tmp_path):
    for n in (8, 12, 100):
        alloc = corpus.allocate_speakers([f"s{i:03d}" for i in range(n)], seed=n)
        assert len(alloc.real_only) == n // 4
        assert len(alloc.fake_only) == n // 4
        assert len(alloc.mixed) == n // 2

    train = toy_manifest.speakers("train")
    dev = toy_manifest.speakers("dev")
    test = toy_manifest.speakers("test")
    assert not (train & dev) and not (train & test) and not (dev & test)

    n_classes = len(toy_manifest.registry_snapshot)
    for rec in toy_manifest.records:
        assert (rec.label == 1) == (1 <= rec.vocoder_class <= n_classes)

    src = synth.make_toy_source(tmp_path / "src", n_speakers=4,
                                utterances_per_speaker=6, duration=0.7, seed=33)
    reg = toy_registry(mel_params)
    corpus.build_corpus(src, reg, mel_params, seed=44, out_dir=tmp_path / "a")
    corpus.build_corpus(src, reg, mel_params, seed=44, out_dir=tmp_path / "b")
    a = (tmp_path / "a" / "manifest.tsv").read_bytes()
    b = (tmp_path / "b" / "manifest.tsv").read_bytes()
    assert a == b
    print("\nACCEPTANCE 7 PASS - dataset invariants: 25/25/50 exact for n in "
          "{8,12,100}; splits speaker-disjoint; label<->class consistent; "
          "rebuild byte-identical")


# ---------------------------------------------------------------------------
# 8. Checkpoint round-trip
# ---------------------------------------------------------------------------

def test_criterion_8_checkpoint_roundtrip(tmp_path):
    mcfg = detector.tiny_config(num_vocoder_classes=3, seed=9)
    model = detector.init_model(mcfg)
    model.registry_snapshot = {"comb16": 1, "quant4": 2}
    rng = np.random.default_rng(10)
    x = rng.uniform(-0.5, 0.5, (4, mcfg.input_length))
    model.forward(x, train=True)  # move BN running stats off init
    before = model.forward(x)

    opt = Adam(model.params(), lr=1e-3)
    path = detector.save_checkpoint(tmp_path / "rt.ckpt.npz", model, opt.state(), step=1)
    loaded, _, _ = load_checkpoint(path)
    after = loaded.forward(x)
    assert np.array_equal(before[0], after[0])
    assert np.array_equal(before[1], after[1])
    assert loaded.registry_snapshot == {"comb16": 1, "quant4": 2}
    print("\nACCEPTANCE 8 PASS - checkpoint round-trip: forward outputs "
          "bit-identical; registry snapshot preserved")


# ---------------------------------------------------------------------------
# 9. Ablation trend
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_9_ablation_trend(toy_manifest, tmp_path):
    t0 = time.monotonic()
    eers = {0.5: [], 1.0: []}
    for seed in range(5):
        for lam in (0.5, 1.0):
            mcfg = detector.tiny_config(num_vocoder_classes=3, seed=seed)
            tcfg = TrainConfig(lam=lam, learning_rate=1e-3, batch_size=16,
                               max_steps=350, seed=seed, eval_interval=50)
            run = tmp_path / f"s{seed}_l{lam:g}"
            training.train(toy_manifest, mcfg, tcfg, run)
            model = load_checkpoint(run / "best.ckpt.npz")[0]
            eer, _ = compute_eer(score_manifest(model, toy_manifest, "test", seed=0))
            eers[lam].append(eer)
    med_half = statistics.median(eers[0.5])
    med_one = statistics.median(eers[1.0])
    assert med_half <= med_one, f"lam=0.5 median {med_half} vs lam=1.0 median {med_one}"
    print(f"\nACCEPTANCE 9 PASS - ablation trend: median test EER lam=0.5 "
          f"{med_half:.3f} <= lam=1.0 {med_one:.3f} over 5 seeds "
          f"(per-seed 0.5: {eers[0.5]}, 1.0: {eers[1.0]}); "
          f"{time.monotonic() - t0:.0f}s")
