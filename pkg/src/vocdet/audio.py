"""Waveform and spectrogram primitives: WAV I/O, resampling, framing,
mel analysis, and SNR-controlled noise mixing.

All operations are pure functions of their inputs (plus an explicit RNG where
noted) and are safe to call concurrently. Waveform samples are float64 in
nominal range [-1, 1].
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft
from scipy.io import wavfile
from scipy.signal import upfirdn

from .errors import AudioFormatError

PCM16_SCALE = 32768.0

# Polyphase resampler quality knobs (windowed-sinc prototype filter).
RESAMPLE_ZEROS = 64          # sinc zero-crossings per side
RESAMPLE_KAISER_BETA = 8.6
RESAMPLE_ROLLOFF = 0.945     # cutoff placed just below the lower Nyquist


@dataclass
class Waveform:
    """Time-domain audio: 1-D float64 samples at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {self.samples.shape}")
        if not isinstance(self.sample_rate, (int, np.integer)) or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples contain NaN or Inf")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def copy(self) -> "Waveform":
        return Waveform(self.samples.copy(), self.sample_rate)


@dataclass(frozen=True)
class MelParams:
    """Mel analysis settings. Defaults are standard vocoder-frontend values."""

    sample_rate: int = 24000
    n_fft: int = 1024
    hop_length: int = 256
    win_length: int = 1024
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float = 12000.0
    log_floor: float = field(default=math.log(1e-5))

    def __post_init__(self):
        if not (0 <= self.fmin < self.fmax <= self.sample_rate / 2):
            raise ValueError(
                f"need 0 <= fmin < fmax <= sample_rate/2, got fmin={self.fmin} "
                f"fmax={self.fmax} sr={self.sample_rate}"
            )
        if not (self.hop_length <= self.win_length <= self.n_fft):
            raise ValueError(
                f"need hop_length <= win_length <= n_fft, got "
                f"{self.hop_length}/{self.win_length}/{self.n_fft}"
            )


@dataclass
class MelSpectrogram:
    """Log-power mel spectrogram, shape (n_frames, n_mels), floor-clamped."""

    values: np.ndarray
    params: MelParams

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != self.params.n_mels:
            raise ValueError(
                f"values must be (n_frames, {self.params.n_mels}), got {self.values.shape}"
            )

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


# ---------------------------------------------------------------------------
# WAV I/O (PCM16 and float32 only)
# ---------------------------------------------------------------------------

def load_audio(path) -> Waveform:
    """Read a WAV file into a mono Waveform normalized to [-1, 1].

    PCM16 samples are divided by 32768; float32/float64 are taken as-is.
    Multi-channel input is downmixed by channel mean.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such audio file: {path}")
    try:
        rate, data = wavfile.read(str(path))
    except FileNotFoundError:
        raise
    except Exception as exc:  # scipy raises bare ValueError on bad RIFF
        raise AudioFormatError(f"unreadable WAV file {path}: {exc}") from exc

    if data.dtype == np.int16:
        samples = data.astype(np.float64) / PCM16_SCALE
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise AudioFormatError(
            f"{path}: unsupported WAV encoding {data.dtype}; expected int16 or float32"
        )
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    return Waveform(samples, int(rate))


def save_audio(w: Waveform, path, encoding: str = "pcm16") -> None:
    """Write a Waveform as WAV. Samples outside [-1, 1] are saturated with a warning."""
    samples = w.samples
    peak = np.max(np.abs(samples)) if len(samples) else 0.0
    if peak > 1.0:
        warnings.warn(
            f"clipping on save: peak {peak:.3f} exceeds 1.0, saturating", stacklevel=2
        )
        samples = np.clip(samples, -1.0, 1.0)
    if encoding == "pcm16":
        pcm = np.clip(np.round(samples * PCM16_SCALE), -PCM16_SCALE, PCM16_SCALE - 1)
        wavfile.write(str(path), w.sample_rate, pcm.astype(np.int16))
    elif encoding == "float32":
        wavfile.write(str(path), w.sample_rate, samples.astype(np.float32))
    else:
        raise ValueError(f"unknown encoding {encoding!r}; use 'pcm16' or 'float32'")


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------

def _resample_filter(up: int, down: int) -> tuple[np.ndarray, int]:
    """Kaiser-windowed-sinc lowpass for rational rate conversion.

    Designed at the upsampled (fine) rate with cutoff RESAMPLE_ROLLOFF times
    the lower of the two Nyquists. Returns (taps, center_index); the taps are
    left-padded so the center lands on a multiple of `down`, which lets
    `upfirdn` output land exactly on the target sample grid.
    """
    cutoff = RESAMPLE_ROLLOFF / max(up, down)  # in cycles per fine-rate sample, x2
    half = RESAMPLE_ZEROS * max(up, down)
    n = np.arange(-half, half + 1)
    taps = cutoff * np.sinc(cutoff * n) * np.kaiser(2 * half + 1, RESAMPLE_KAISER_BETA)
    taps *= up  # restore amplitude lost to zero-stuffing
    pad = (-half) % down
    if pad:
        taps = np.concatenate([np.zeros(pad), taps])
    return taps, half + pad


def resample(w: Waveform, target_rate: int) -> Waveform:
    """Band-limited polyphase resampling to target_rate.

    Output length is round(len * target_rate / source_rate). Same-rate input
    is returned as a copy.
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    src = w.sample_rate
    if target_rate == src:
        return w.copy()
    g = math.gcd(int(target_rate), src)
    up, down = int(target_rate) // g, src // g
    taps, center = _resample_filter(up, down)
    fine = upfirdn(taps, w.samples, up=up, down=down)
    offset = center // down
    n_out = int(round(len(w) * target_rate / src))
    out = fine[offset:offset + n_out]
    if len(out) < n_out:  # defensive: upfirdn tail shorter than requested
        out = np.pad(out, (0, n_out - len(out)))
    return Waveform(out, int(target_rate))


def degrade_roundtrip(w: Waveform, intermediate_rate: int) -> Waveform:
    """Resample down/up through intermediate_rate and back to the original rate.

    Content above intermediate_rate/2 is removed; length is preserved to
    within +-2 samples (then trimmed/padded to the input length exactly).
    """
    down = resample(w, intermediate_rate)
    back = resample(down, w.sample_rate)
    if len(back) > len(w):
        back = Waveform(back.samples[: len(w)], w.sample_rate)
    elif len(back) < len(w):
        back = Waveform(np.pad(back.samples, (0, len(w) - len(back))), w.sample_rate)
    return back


# ---------------------------------------------------------------------------
# Noise mixing
# ---------------------------------------------------------------------------

def mix_noise_at_snr(clean: Waveform, noise: Waveform, snr_db: float) -> Waveform:
    """Add noise scaled so that 10*log10(P_clean / P_noise_scaled) == snr_db.

    Noise shorter than the clean signal is tiled; longer noise is cropped from
    the start (callers wanting a random segment position pass a pre-cut slice).
    Powers are mean squared amplitude over the mixed extent.
    """
    if clean.sample_rate != noise.sample_rate:
        raise ValueError(
            f"sample rate mismatch: clean {clean.sample_rate} vs noise {noise.sample_rate}"
        )
    n = len(clean)
    seg = noise.samples
    if len(seg) < n:
        seg = np.tile(seg, int(np.ceil(n / len(seg))))
    seg = seg[:n]
    p_clean = float(np.mean(clean.samples ** 2))
    p_noise = float(np.mean(seg ** 2))
    if p_clean == 0.0:
        raise ValueError("clean signal is silent; SNR undefined")
    if p_noise == 0.0:
        raise ValueError("noise segment is silent; SNR undefined")
    alpha = math.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0)))
    return Waveform(clean.samples + alpha * seg, clean.sample_rate)


# ---------------------------------------------------------------------------
# STFT / mel analysis
# ---------------------------------------------------------------------------

def _hann(win_length: int) -> np.ndarray:
    # periodic Hann, exact COLA partner for hop = win/2^k
    n = np.arange(win_length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / win_length)


def stft(samples: np.ndarray, p: MelParams) -> np.ndarray:
    """Complex STFT, shape (n_frames, n_fft//2 + 1).

    The signal is reflect-padded by win_length//2 on both sides, so
    n_frames = 1 + len(samples) // hop_length.
    """
    pad = p.win_length // 2
    x = np.pad(samples, pad, mode="reflect")
    n_frames = 1 + (len(x) - p.win_length) // p.hop_length
    idx = np.arange(p.win_length)[None, :] + p.hop_length * np.arange(n_frames)[:, None]
    frames = x[idx] * _hann(p.win_length)[None, :]
    return scipy.fft.rfft(frames, n=p.n_fft, axis=1)


def istft(spec: np.ndarray, p: MelParams, length: int) -> np.ndarray:
    """Overlap-add inverse of `stft`, trimmed to `length` samples."""
    frames = scipy.fft.irfft(spec, n=p.n_fft, axis=1)[:, : p.win_length]
    win = _hann(p.win_length)
    frames = frames * win[None, :]
    n_frames = frames.shape[0]
    pad = p.win_length // 2
    total = p.hop_length * (n_frames - 1) + p.win_length
    out = np.zeros(total)
    norm = np.zeros(total)
    win_sq = win ** 2
    for k in range(n_frames):
        start = k * p.hop_length
        out[start:start + p.win_length] += frames[k]
        norm[start:start + p.win_length] += win_sq
    out = out / np.maximum(norm, 1e-10)
    return out[pad:pad + length]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(p: MelParams) -> np.ndarray:
    """Triangular mel filterbank, shape (n_mels, n_fft//2 + 1), peak-one filters."""
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(p.fmin), hz_to_mel(p.fmax), p.n_mels + 2))
    fft_hz = np.arange(p.n_fft // 2 + 1) * (p.sample_rate / p.n_fft)
    fb = np.zeros((p.n_mels, len(fft_hz)))
    for i in range(p.n_mels):
        lo, center, hi = edges_hz[i], edges_hz[i + 1], edges_hz[i + 2]
        left = (fft_hz - lo) / (center - lo)
        right = (hi - fft_hz) / (hi - center)
        fb[i] = np.maximum(0.0, np.minimum(left, right))
    return fb


def mel_bin_centers(p: MelParams) -> np.ndarray:
    """Center frequency (Hz) of each mel filter."""
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(p.fmin), hz_to_mel(p.fmax), p.n_mels + 2))
    return edges_hz[1:-1]


def mel_spectrogram(w: Waveform, p: MelParams) -> MelSpectrogram:
    """Log-power mel spectrogram: log(max(fb @ |STFT|^2, exp(log_floor))).

    Power convention: doubling the input amplitude raises unclamped cells by
    log(4). Frame count is 1 + len // hop_length (reflect padding, see `stft`).
    """
    if w.sample_rate != p.sample_rate:
        raise ValueError(
            f"sample rate mismatch: waveform {w.sample_rate} vs params {p.sample_rate}"
        )
    if len(w) < p.win_length:
        raise ValueError(f"signal too short: {len(w)} < win_length {p.win_length}")
    power = np.abs(stft(w.samples, p)) ** 2
    mel = power @ mel_filterbank(p).T
    values = np.log(np.maximum(mel, math.exp(p.log_floor)))
    return MelSpectrogram(values, p)


# ---------------------------------------------------------------------------
# Length normalization
# ---------------------------------------------------------------------------

def fix_length(w: Waveform, n: int, mode: str, rng: np.random.Generator | None = None) -> Waveform:
    """Force a waveform to exactly n samples.

    mode 'tile' repeats the signal; 'crop-center' takes the middle n samples;
    'crop-random' takes a seeded random offset (requires rng). Crop modes
    require len(w) >= n.
    """
    if n <= 0:
        raise ValueError(f"n must be positive, got {n}")
    if len(w) == 0:
        raise ValueError("empty waveform")
    if mode == "tile":
        reps = int(np.ceil(n / len(w)))
        return Waveform(np.tile(w.samples, reps)[:n], w.sample_rate)
    if len(w) < n:
        raise ValueError(f"cannot crop {len(w)} samples to {n}; use mode='tile'")
    if mode == "crop-center":
        start = (len(w) - n) // 2
    elif mode == "crop-random":
        if rng is None:
            raise ValueError("crop-random requires an rng")
        start = int(rng.integers(0, len(w) - n + 1))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return Waveform(w.samples[start:start + n], w.sample_rate)
