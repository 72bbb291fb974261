"""Seeded synthetic fixtures: speech-like utterances per pseudo-speaker and a
crowd-like noise bed. Lets every test and demo run with zero downloads.

An utterance is a harmonic stack with pitch drift and vibrato, shaped by
speaker-specific formant-style resonance peaks, amplitude-modulated at a
syllabic rate, with a faint breath-noise floor.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import Waveform, save_audio


@dataclass(frozen=True)
class SpeakerProfile:
    base_f0: float
    formants: tuple[float, ...]
    formant_widths: tuple[float, ...]
    vibrato_hz: float
    syllable_hz: float


def speaker_profile(rng: np.random.Generator) -> SpeakerProfile:
    n_formants = 3
    return SpeakerProfile(
        base_f0=float(rng.uniform(95.0, 235.0)),
        formants=tuple(
            float(f)
            for f in np.sort(rng.uniform([350, 900, 2200], [850, 2100, 3400]))
        ),
        formant_widths=tuple(float(x) for x in rng.uniform(120.0, 320.0, n_formants)),
        vibrato_hz=float(rng.uniform(4.0, 7.0)),
        syllable_hz=float(rng.uniform(2.0, 5.0)),
    )


def _smooth_walk(n: int, rng: np.random.Generator, smooth: int) -> np.ndarray:
    walk = np.cumsum(rng.normal(0.0, 1.0, n))
    kernel = np.ones(smooth) / smooth
    walk = np.convolve(walk, kernel, mode="same")
    span = np.max(np.abs(walk)) + 1e-9
    return walk / span


def toy_utterance(
    profile: SpeakerProfile,
    duration: float,
    sample_rate: int,
    rng: np.random.Generator,
) -> Waveform:
    """One speech-like clip for the given pseudo-speaker."""
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate

    drift = _smooth_walk(n, rng, smooth=sample_rate // 8)
    vibrato = 0.02 * np.sin(2 * np.pi * profile.vibrato_hz * t + rng.uniform(0, 2 * np.pi))
    f0 = profile.base_f0 * (1.0 + 0.10 * drift + vibrato)
    phase = np.cumsum(2 * np.pi * f0 / sample_rate)

    def formant_gain(freq_hz: np.ndarray) -> np.ndarray:
        g = 0.06 * np.ones_like(freq_hz)
        for fc, bw in zip(profile.formants, profile.formant_widths):
            g = g + np.exp(-0.5 * ((freq_hz - fc) / bw) ** 2)
        return g

    x = np.zeros(n)
    max_harmonic = int(0.45 * sample_rate / np.max(f0))
    for k in range(1, min(max_harmonic, 26) + 1):
        gain = formant_gain(k * f0) / k
        x += gain * np.sin(k * phase + rng.uniform(0, 2 * np.pi))

    syllables = 0.5 * (1.0 + np.sin(2 * np.pi * profile.syllable_hz * t + rng.uniform(0, 2 * np.pi)))
    envelope = 0.25 + 0.75 * syllables ** 1.5
    ramp = min(n // 2, int(0.03 * sample_rate))
    fade = np.ones(n)
    fade[:ramp] = np.linspace(0.0, 1.0, ramp)
    fade[-ramp:] = np.linspace(1.0, 0.0, ramp)
    x = x * envelope * fade

    breath = rng.normal(0.0, 1.0, n)
    breath = np.convolve(breath, np.ones(8) / 8.0, mode="same")
    x = x + 0.004 * breath

    x = 0.5 * x / (np.max(np.abs(x)) + 1e-9)
    return Waveform(x, sample_rate)


def toy_noise(duration: float, sample_rate: int, rng: np.random.Generator) -> Waveform:
    """Crowd-like noise: lowpassed babble with slow loudness movement."""
    n = int(round(duration * sample_rate))
    x = rng.normal(0.0, 1.0, n)
    x = np.convolve(x, np.ones(12) / 12.0, mode="same")  # tilt toward low frequencies
    t = np.arange(n) / sample_rate
    swell = 1.0 + 0.4 * np.sin(2 * np.pi * 0.3 * t + rng.uniform(0, 2 * np.pi))
    murmur = 0.15 * np.sin(2 * np.pi * rng.uniform(150, 300) * t)
    x = x * swell + murmur
    x = 0.3 * x / (np.max(np.abs(x)) + 1e-9)
    return Waveform(x, sample_rate)


def make_toy_source(
    out_dir,
    n_speakers: int = 4,
    utterances_per_speaker: int = 10,
    duration: float = 1.5,
    sample_rate: int = 24000,
    seed: int = 0,
) -> Path:
    """Write a `<out>/<speaker_id>/*.wav` tree of seeded toy utterances."""
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    for s in range(n_speakers):
        profile = speaker_profile(rng)
        spk_dir = out_dir / f"spk{s:02d}"
        spk_dir.mkdir(parents=True, exist_ok=True)
        for u in range(utterances_per_speaker):
            w = toy_utterance(profile, duration, sample_rate, rng)
            save_audio(w, spk_dir / f"utt{u:03d}.wav")
    return out_dir
