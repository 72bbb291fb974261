"""Self-vocoding backends, registry, and residual contracts."""

import os
import stat

import numpy as np
import pytest

from vocdet import audio, vocoders
from vocdet.errors import VocoderBackendError

from oracles import band_energy, cepstral_peak_lag, dft_peak_hz

SR = 24000


def speechlike(duration=1.5, seed=2):
    rng = np.random.default_rng(seed)
    t = np.arange(int(duration * SR)) / SR
    f0 = 140.0 * (1 + 0.05 * np.sin(2 * np.pi * 5 * t))
    phase = np.cumsum(2 * np.pi * f0 / SR)
    x = sum((0.5 / k) * np.sin(k * phase + rng.uniform(0, 2 * np.pi)) for k in range(1, 9))
    x = 0.5 * x / np.max(np.abs(x))
    return audio.Waveform(x, SR)


@pytest.fixture(scope="module")
def p():
    return audio.MelParams()


@pytest.fixture(scope="module")
def gl(p):
    return vocoders.griffin_lim_backend(p, n_iters=8)


# ---------------------------------------------------------------------------
# Griffin-Lim backend
# ---------------------------------------------------------------------------

def test_griffin_lim_sine_peak(p, gl):
    t = np.arange(int(1.5 * SR)) / SR
    w = audio.Waveform(0.4 * np.sin(2 * np.pi * 440.0 * t), SR)
    out = vocoders.self_vocode(w, p, gl)
    # frequency information passes through the mel bottleneck to within one
    # analysis bin (sr / n_fft)
    assert dft_peak_hz(out.samples, SR) == pytest.approx(440.0, abs=SR / p.n_fft)


def test_griffin_lim_silence(p, gl):
    w = audio.Waveform(np.zeros(SR), SR)
    out = vocoders.self_vocode(w, p, gl)
    assert np.sqrt(np.mean(out.samples ** 2)) < 1e-3


def test_griffin_lim_deterministic(p, gl):
    w = speechlike()
    a = vocoders.self_vocode(w, p, gl)
    b = vocoders.self_vocode(w, p, gl)
    assert np.array_equal(a.samples, b.samples)


def test_griffin_lim_more_iters_reduce_mel_error(p):
    w = speechlike(seed=3)
    target = audio.mel_spectrogram(w, p).values

    def mel_err(n_iters):
        out = vocoders.self_vocode(w, p, vocoders.griffin_lim_backend(p, n_iters))
        got = audio.mel_spectrogram(out, p).values
        n = min(len(got), len(target))
        return float(np.mean(np.abs(got[:n] - target[:n])))

    assert mel_err(32) <= mel_err(1)


def test_griffin_lim_rejects_bad_iters(p):
    with pytest.raises(ValueError):
        vocoders.griffin_lim_backend(p, n_iters=0)


# ---------------------------------------------------------------------------
# self_vocode contract
# ---------------------------------------------------------------------------

def test_self_vocode_preserves_rate_and_length(p, gl):
    for dur in (0.7, 1.0, 1.37):
        w = speechlike(duration=dur)
        out = vocoders.self_vocode(w, p, gl)
        assert out.sample_rate == w.sample_rate
        assert len(out) == len(w)


def test_self_vocode_leaves_visible_mel_residual(p, gl):
    w = speechlike(seed=4)
    out = vocoders.self_vocode(w, p, gl)
    residual = vocoders.spectrogram_difference(w, out, p)
    assert float(np.mean(np.abs(residual))) > 0.0


def test_self_vocode_wraps_backend_failures(p):
    def broken(mel):
        raise RuntimeError("synth exploded")

    backend = vocoders.VocoderBackend(name="broken", vocode=broken)
    with pytest.raises(VocoderBackendError, match="broken"):
        vocoders.self_vocode(speechlike(), p, backend)


# ---------------------------------------------------------------------------
# Toy artifact signatures
# ---------------------------------------------------------------------------

def test_quantize_level_count(p):
    backend = vocoders.toy_artifact_backend(p, "quantize", bits=8, n_iters=2)
    out = vocoders.self_vocode(speechlike(), p, backend)
    assert len(np.unique(out.samples)) <= 2 ** 8


def test_comb_ripple_period(p):
    delay = 16
    backend = vocoders.toy_artifact_backend(p, "comb", delay=delay, gain=0.9, n_iters=2)
    rng = np.random.default_rng(0)
    w = audio.Waveform(0.3 * rng.standard_normal(SR), SR)
    out = vocoders.self_vocode(w, p, backend)
    # log-magnitude ripple with period sr/delay shows as a cepstral peak at
    # the delay lag
    assert cepstral_peak_lag(out.samples, 8, 64) == delay


def test_band_notch_depth(p):
    backend = vocoders.toy_artifact_backend(p, "notch", freq=3000.0, q=5.0, n_iters=2)
    rng = np.random.default_rng(1)
    w = audio.Waveform(0.3 * rng.standard_normal(SR), SR)
    out = vocoders.self_vocode(w, p, backend)
    gl_only = vocoders.self_vocode(w, p, vocoders.griffin_lim_backend(p, 2))
    before = band_energy(gl_only.samples, SR, 2900, 3100)
    after = band_energy(out.samples, SR, 2900, 3100)
    assert 10 * np.log10(before / after) >= 10.0


@pytest.mark.parametrize("kwargs", [
    {"signature": "comb", "delay": 0},
    {"signature": "notch", "freq": -10.0},
    {"signature": "notch", "freq": 13000.0},
    {"signature": "quantize", "bits": 1},
    {"signature": "quantize", "bits": 13},
    {"signature": "wobble"},
])
def test_toy_backend_rejects_bad_signatures(p, kwargs):
    with pytest.raises(ValueError):
        vocoders.toy_artifact_backend(p, **kwargs)


def test_toy_signatures_statistically_separable(p):
    """Each designed signature statistic separates its class from the others
    with a plain threshold (>= 95% over 100 samples/class)."""
    backends = {
        "comb": vocoders.toy_artifact_backend(p, "comb", delay=16, gain=0.9, n_iters=2),
        "notch": vocoders.toy_artifact_backend(p, "notch", freq=3000.0, q=2.0, n_iters=2),
        "quantize": vocoders.toy_artifact_backend(p, "quantize", bits=5, n_iters=2),
    }
    rng = np.random.default_rng(7)
    n_per_class = 100

    def stats(samples):
        spec = np.abs(np.fft.rfft(samples))
        cep = np.fft.irfft(np.log(spec + 1e-12))
        comb_stat = cep[16]
        notch_stat = band_energy(samples, SR, 2600, 3400) / band_energy(samples, SR, 1600, 2400)
        quant_stat = len(np.unique(np.round(samples * 1e9))) / len(samples)
        return comb_stat, notch_stat, quant_stat

    values = {name: [] for name in backends}
    for name, backend in backends.items():
        for _ in range(n_per_class):
            w = audio.Waveform(0.3 * rng.standard_normal(SR // 2), SR)
            out = vocoders.self_vocode(w, p, backend)
            values[name].append(stats(out.samples))

    arr = {k: np.array(v) for k, v in values.items()}
    checks = [
        # (statistic index, positive class, separating rule)
        (0, "comb", max),    # comb: high cepstral peak at the delay lag
        (1, "notch", min),   # notch: low 3 kHz band ratio
        (2, "quantize", min),  # quantize: few distinct values
    ]
    for idx, positive, direction in checks:
        pos = arr[positive][:, idx]
        neg = np.concatenate([arr[k][:, idx] for k in backends if k != positive])
        if direction is max:
            threshold = (pos.min() + neg.max()) / 2.0
            correct = (pos > threshold).sum() + (neg <= threshold).sum()
        else:
            threshold = (pos.max() + neg.min()) / 2.0
            correct = (pos < threshold).sum() + (neg >= threshold).sum()
        accuracy = correct / (len(pos) + len(neg))
        assert accuracy >= 0.95, f"{positive} statistic separates only {accuracy:.2%}"


# ---------------------------------------------------------------------------
# spectrogram_difference
# ---------------------------------------------------------------------------

def test_residual_identical_inputs_is_zero(p):
    w = speechlike()
    res = vocoders.spectrogram_difference(w, w, p)
    assert np.all(res == 0.0)


def test_residual_antisymmetry(p, gl):
    w = speechlike(seed=5)
    v = vocoders.self_vocode(w, p, gl)
    assert np.array_equal(
        vocoders.spectrogram_difference(w, v, p),
        -vocoders.spectrogram_difference(v, w, p),
    )


def test_residual_rejects_rate_mismatch(p):
    a = speechlike()
    b = audio.Waveform(a.samples.copy(), 16000)
    with pytest.raises(ValueError):
        vocoders.spectrogram_difference(a, b, p)


def test_residual_rejects_big_length_gap(p):
    a = speechlike()
    b = audio.Waveform(a.samples[: len(a) - 2 * p.hop_length], SR)
    with pytest.raises(ValueError):
        vocoders.spectrogram_difference(a, b, p)


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

def test_registry_assigns_contiguous_ids(p):
    reg = vocoders.VocoderRegistry([
        vocoders.griffin_lim_backend(p, 2),
        vocoders.toy_artifact_backend(p, "quantize", bits=4, n_iters=2),
    ])
    assert [b.class_id for b in reg] == [1, 2]
    assert reg.num_classes == 3
    assert reg.by_class(2).name == "quant4"


def test_registry_snapshot_roundtrip(p):
    reg = vocoders.VocoderRegistry([
        vocoders.toy_artifact_backend(p, "comb", delay=8, n_iters=2),
        vocoders.toy_artifact_backend(p, "quantize", bits=4, n_iters=2),
    ])
    snap = reg.snapshot()
    assert snap == {"comb8": 1, "quant4": 2}
    # the mapping is a bijection: names and ids both unique
    assert len(set(snap.values())) == len(snap)


def test_registry_requires_two_backends_for_multiclass(p):
    reg = vocoders.VocoderRegistry([vocoders.griffin_lim_backend(p, 2)])
    with pytest.raises(ValueError, match=">= 2"):
        reg.require_multiclass()


def test_registry_rejects_duplicates_and_gaps(p):
    a = vocoders.griffin_lim_backend(p, 2)
    with pytest.raises(ValueError):
        vocoders.VocoderRegistry([a, a])
    b = vocoders.toy_artifact_backend(p, "quantize", bits=4, n_iters=2)
    with pytest.raises(ValueError):
        vocoders.VocoderRegistry([a.with_class_id(1), b.with_class_id(3)])


# ---------------------------------------------------------------------------
# External command protocol
# ---------------------------------------------------------------------------

ECHO_VOCODER = """#!/usr/bin/env python3
import sys
from scipy.io import wavfile
rate, data = wavfile.read(sys.argv[1])
wavfile.write(sys.argv[2], rate, (data * 0.5).astype(data.dtype))
"""


def _write_script(path, body):
    path.write_text(body)
    path.chmod(path.stat().st_mode | stat.S_IEXEC)
    return path


def test_external_command_backend_roundtrip(tmp_path, p):
    prog = _write_script(tmp_path / "halver.py", ECHO_VOCODER)
    backend = vocoders.external_command_backend(p, ["python3", str(prog)], name="halver")
    w = speechlike(duration=0.8)
    out = vocoders.self_vocode(w, p, backend)
    assert out.sample_rate == SR
    assert len(out) == len(w)
    # program halves amplitudes; allow for the pcm16 handoff quantization
    assert np.max(np.abs(out.samples - 0.5 * w.samples)) < 2e-4


def test_external_command_failure_carries_name(tmp_path, p):
    prog = _write_script(tmp_path / "boom.py", "import sys; sys.exit(3)\n")
    backend = vocoders.external_command_backend(p, ["python3", str(prog)], name="boom")
    with pytest.raises(VocoderBackendError, match="boom"):
        vocoders.self_vocode(speechlike(duration=0.5), p, backend)


def test_external_command_missing_output(tmp_path, p):
    prog = _write_script(tmp_path / "noop.py", "import sys\n")
    backend = vocoders.external_command_backend(p, ["python3", str(prog)])
    with pytest.raises(VocoderBackendError, match="no output"):
        vocoders.self_vocode(speechlike(duration=0.5), p, backend)
