"""Self-vocoding: mel transform + inverse behind a pluggable backend interface.

A backend turns a mel spectrogram back into a waveform. `self_vocode` runs a
real recording through analysis and a backend's synthesis, producing a
synthetic twin whose only differences are the backend's reconstruction
artifacts. Desk-scale reference backends (Griffin-Lim phase reconstruction,
plus deterministic artifact signatures) stand in for heavyweight neural
vocoders; an external-command backend lets those plug in later.
"""

from __future__ import annotations

import math
import subprocess
import tempfile
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .audio import (
    MelParams,
    MelSpectrogram,
    Waveform,
    istft,
    load_audio,
    mel_filterbank,
    mel_spectrogram,
    save_audio,
    stft,
)
from .errors import VocoderBackendError


@dataclass(frozen=True)
class VocoderBackend:
    """A named waveform synthesizer with a class id for the identification task.

    `vocode` maps a mel spectrogram to a waveform at the mel sample rate.
    Backends that consume audio directly (external vocoder programs bundle
    their own analysis) set `vocode_waveform`; `self_vocode` then feeds them
    the original recording instead of the mel.
    """

    name: str
    vocode: Callable[[MelSpectrogram], Waveform]
    class_id: int = 0  # 0 = unregistered; a registry assigns 1..C
    vocode_waveform: Callable[[Waveform], Waveform] | None = None

    def with_class_id(self, class_id: int) -> "VocoderBackend":
        return VocoderBackend(self.name, self.vocode, class_id, self.vocode_waveform)


REAL_CLASS_ID = 0  # reserved: "real / no vocoder"


class VocoderRegistry:
    """Ordered set of backends with contiguous class ids 1..C (0 is real).

    Multi-class training needs at least two backends; `require_multiclass`
    enforces that where the corpus builder and model config depend on it.
    """

    def __init__(self, backends: Sequence[VocoderBackend]):
        if len(backends) == 0:
            raise ValueError("registry needs at least one backend")
        names = [b.name for b in backends]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate backend names: {names}")
        given = [b.class_id for b in backends]
        if any(given):  # ids supplied: must already be 1..C in order
            if given != list(range(1, len(backends) + 1)):
                raise ValueError(f"class ids must be contiguous 1..C, got {given}")
            self.backends = list(backends)
        else:
            self.backends = [b.with_class_id(i + 1) for i, b in enumerate(backends)]

    def __len__(self) -> int:
        return len(self.backends)

    def __iter__(self):
        return iter(self.backends)

    def require_multiclass(self) -> None:
        if len(self.backends) < 2:
            raise ValueError(
                f"vocoder identification needs >= 2 backends, got {len(self.backends)}"
            )

    def by_class(self, class_id: int) -> VocoderBackend:
        for b in self.backends:
            if b.class_id == class_id:
                return b
        raise KeyError(f"no backend with class id {class_id}")

    def snapshot(self) -> dict[str, int]:
        """name -> class_id map, suitable for manifests and checkpoints."""
        return {b.name: b.class_id for b in self.backends}

    @property
    def num_classes(self) -> int:
        """Class count including the reserved real class."""
        return len(self.backends) + 1


def self_vocode(w: Waveform, p: MelParams, backend: VocoderBackend) -> Waveform:
    """Synthesize the vocoded twin of a real recording.

    Mel-route backends get mel_spectrogram(w, p); waveform-route backends get
    w itself. The output is trimmed/padded to exactly len(w).
    """
    try:
        if backend.vocode_waveform is not None:
            out = backend.vocode_waveform(w)
        else:
            out = backend.vocode(mel_spectrogram(w, p))
    except VocoderBackendError:
        raise
    except Exception as exc:
        raise VocoderBackendError(backend.name, str(exc)) from exc
    if out.sample_rate != w.sample_rate:
        raise VocoderBackendError(
            backend.name,
            f"returned rate {out.sample_rate}, expected {w.sample_rate}",
        )
    samples = out.samples
    if len(samples) > len(w):
        samples = samples[: len(w)]
    elif len(samples) < len(w):
        samples = np.pad(samples, (0, len(w) - len(samples)))
    return Waveform(samples, w.sample_rate)


def spectrogram_difference(original: Waveform, vocoded: Waveform, p: MelParams) -> np.ndarray:
    """Frame-aligned mel residual mel(original) - mel(vocoded).

    Inputs must share a sample rate and differ in length by at most one hop;
    frames are trimmed to the shorter spectrogram.
    """
    if original.sample_rate != vocoded.sample_rate:
        raise ValueError(
            f"sample rate mismatch: {original.sample_rate} vs {vocoded.sample_rate}"
        )
    if abs(len(original) - len(vocoded)) > p.hop_length:
        raise ValueError(
            f"length mismatch {len(original)} vs {len(vocoded)} exceeds one hop"
        )
    a = mel_spectrogram(original, p).values
    b = mel_spectrogram(vocoded, p).values
    n = min(a.shape[0], b.shape[0])
    return a[:n] - b[:n]


# ---------------------------------------------------------------------------
# Griffin-Lim reference backend
# ---------------------------------------------------------------------------

def _mel_pinv(p: MelParams) -> np.ndarray:
    return np.linalg.pinv(mel_filterbank(p))


def griffin_lim_backend(p: MelParams, n_iters: int = 32) -> VocoderBackend:
    """Mel inversion via clamped filterbank pseudo-inverse, then n_iters
    alternating-STFT-projection phase reconstruction (zero initial phase,
    fully deterministic)."""
    if n_iters < 1:
        raise ValueError(f"n_iters must be >= 1, got {n_iters}")
    pinv = _mel_pinv(p)

    def vocode(mel: MelSpectrogram) -> Waveform:
        power = np.maximum(np.exp(mel.values) @ pinv.T, 0.0)
        mag = np.sqrt(power)
        length = mel.n_frames * p.hop_length
        spec = mag.astype(complex)
        x = istft(spec, p, length)
        for _ in range(n_iters - 1):
            phase = np.angle(stft(x, p)[: mel.n_frames])
            x = istft(mag * np.exp(1j * phase), p, length)
        return Waveform(x, p.sample_rate)

    return VocoderBackend(name=f"glim{n_iters}", vocode=vocode)


# ---------------------------------------------------------------------------
# Toy artifact backends: Griffin-Lim plus a deterministic signature filter.
# Each signature is designed to be separable by a simple statistic, which
# makes the vocoder-identification pretext task learnable at desk scale.
# ---------------------------------------------------------------------------

def _comb_filter(x: np.ndarray, delay: int, gain: float) -> np.ndarray:
    # y[n] = (x[n] + gain * x[n - delay]) / (1 + gain): magnitude ripple with
    # period sr/delay Hz; normalized so the output stays in range
    y = x.copy()
    y[delay:] += gain * x[:-delay]
    return y / (1.0 + gain)


def _notch_coeffs(f0: float, q: float, sr: int) -> tuple[np.ndarray, np.ndarray]:
    # RBJ cookbook band-reject biquad
    w0 = 2.0 * math.pi * f0 / sr
    alpha = math.sin(w0) / (2.0 * q)
    b = np.array([1.0, -2.0 * math.cos(w0), 1.0])
    a = np.array([1.0 + alpha, -2.0 * math.cos(w0), 1.0 - alpha])
    return b / a[0], a / a[0]


def _quantize(x: np.ndarray, bits: int) -> np.ndarray:
    levels = 2 ** (bits - 1)
    return np.clip(np.round(x * levels), -levels, levels - 1) / levels


def toy_artifact_backend(
    p: MelParams,
    signature: str,
    *,
    delay: int = 16,
    gain: float = 0.8,
    freq: float = 3000.0,
    q: float = 5.0,
    bits: int = 6,
    n_iters: int = 32,
) -> VocoderBackend:
    """Griffin-Lim followed by a signature filter acting as a vocoder fingerprint.

    signature 'comb': feedforward comb, delay samples >= 1 (ripple sr/delay Hz);
    'notch': biquad band-reject at freq Hz with quality q;
    'quantize': mid-tread amplitude quantizer, 2..12 bits (<= 2^bits levels).
    """
    gl = griffin_lim_backend(p, n_iters)
    if signature == "comb":
        if delay < 1:
            raise ValueError(f"comb delay must be >= 1 sample, got {delay}")
        post = lambda x: _comb_filter(x, delay, gain)
        name = f"comb{delay}"
    elif signature == "notch":
        if not (0.0 < freq < p.sample_rate / 2):
            raise ValueError(f"notch freq must be in (0, Nyquist), got {freq}")
        if q <= 0:
            raise ValueError(f"notch q must be positive, got {q}")
        b, a = _notch_coeffs(freq, q, p.sample_rate)
        post = lambda x: lfilter(b, a, x)
        name = f"notch{int(freq)}q{q:g}"
    elif signature == "quantize":
        if not (2 <= bits <= 12):
            raise ValueError(f"quantize bits must be in 2..12, got {bits}")
        post = lambda x: _quantize(x, bits)
        name = f"quant{bits}"
    else:
        raise ValueError(f"unknown signature {signature!r}")

    def vocode(mel: MelSpectrogram) -> Waveform:
        base = gl.vocode(mel)
        return Waveform(post(base.samples), base.sample_rate)

    return VocoderBackend(name=name, vocode=vocode)


# ---------------------------------------------------------------------------
# External command backend
# ---------------------------------------------------------------------------

def external_command_backend(
    p: MelParams, argv: Sequence[str], name: str | None = None
) -> VocoderBackend:
    """Wrap a user-provided vocoder program.

    Protocol: the program is invoked as `argv... input.wav output.wav` and
    must exit 0 after writing a WAV at the original sample rate. One process
    is spawned per call, so the backend is safe to use concurrently.
    """
    argv = [str(a) for a in argv]
    if not argv:
        raise ValueError("argv must name a program")
    backend_name = name or Path(argv[0]).stem

    def vocode_waveform(w: Waveform) -> Waveform:
        with tempfile.TemporaryDirectory(prefix="vocdet-ext-") as tmp:
            in_path = Path(tmp) / "in.wav"
            out_path = Path(tmp) / "out.wav"
            save_audio(w, in_path)
            proc = subprocess.run(
                argv + [str(in_path), str(out_path)],
                capture_output=True,
                text=True,
            )
            if proc.returncode != 0:
                raise VocoderBackendError(
                    backend_name,
                    f"exit code {proc.returncode}: {proc.stderr.strip()[:500]}",
                )
            if not out_path.exists():
                raise VocoderBackendError(backend_name, "program wrote no output WAV")
            return load_audio(out_path)

    def vocode(mel: MelSpectrogram) -> Waveform:
        raise VocoderBackendError(
            backend_name, "external backends consume waveforms, not mel input"
        )

    return VocoderBackend(
        name=backend_name, vocode=vocode, vocode_waveform=vocode_waveform
    )


def backend_from_spec(p: MelParams, spec: dict) -> VocoderBackend:
    """Instantiate a backend from a declarative config entry (see RunConfig)."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "griffin_lim":
        return griffin_lim_backend(p, n_iters=int(spec.pop("iters", 32)))
    if kind in ("comb", "notch", "quantize"):
        return toy_artifact_backend(p, kind, **spec)
    if kind == "command":
        return external_command_backend(p, spec.pop("argv"), name=spec.pop("name", None))
    raise ValueError(f"unknown vocoder kind {kind!r}")
