"""Corpus construction: speaker-aware real/fake allocation, self-vocoded
sample generation, manifest persistence, and the evaluation-time
augmentation policy (clean / rate-degraded / noisy at fixed odds).

Manifest file format (stable contract):
    #librivoc-manifest v1
    <utterance_id>\t<speaker_id>\t<audio_path>\t<label>\t<vocoder_class>\t<split>\t<duration>
    ...
    #registry {"build_seed": <int>, "classes": {"<name>": <class_id>, ...}}

Records are sorted by utterance_id, audio paths are relative to the manifest
directory, and durations use fixed six-decimal formatting, so rebuilding with
the same inputs and seed is byte-identical.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .audio import Waveform, degrade_roundtrip, load_audio, mix_noise_at_snr, save_audio, MelParams
from .errors import ConfigurationError
from .vocoders import VocoderRegistry, self_vocode

log = logging.getLogger(__name__)

MANIFEST_HEADER = "#librivoc-manifest v1"
SPLITS = ("train", "dev", "test")

REAL_LABEL = 0
FAKE_LABEL = 1


@dataclass(frozen=True)
class UtteranceRecord:
    utterance_id: str
    speaker_id: str
    audio_path: str  # relative to the manifest directory
    label: int       # 0 = real, 1 = fake
    vocoder_class: int
    split: str
    duration: float

    def __post_init__(self):
        if self.label not in (REAL_LABEL, FAKE_LABEL):
            raise ValueError(f"label must be 0 or 1, got {self.label}")
        if (self.label == REAL_LABEL) != (self.vocoder_class == 0):
            raise ValueError(
                f"{self.utterance_id}: label {self.label} inconsistent with "
                f"vocoder_class {self.vocoder_class}"
            )
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")
        if self.duration <= 0:
            raise ValueError(f"{self.utterance_id}: duration must be positive")


@dataclass
class Manifest:
    records: list[UtteranceRecord]
    registry_snapshot: dict[str, int]
    build_seed: int
    root: Path | None = None  # directory audio paths resolve against

    def __post_init__(self):
        ids = [r.utterance_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate utterance ids in manifest")
        known = set(self.registry_snapshot.values())
        for r in self.records:
            if r.vocoder_class > 0 and r.vocoder_class not in known:
                raise ValueError(
                    f"{r.utterance_id}: vocoder class {r.vocoder_class} "
                    "missing from registry snapshot"
                )
        spk_split: dict[str, str] = {}
        for r in self.records:
            prev = spk_split.setdefault(r.speaker_id, r.split)
            if prev != r.split:
                raise ValueError(f"speaker {r.speaker_id} appears in splits {prev} and {r.split}")

    def subset(self, split: str) -> list[UtteranceRecord]:
        return [r for r in self.records if r.split == split]

    def speakers(self, split: str | None = None) -> set[str]:
        return {r.speaker_id for r in self.records if split is None or r.split == split}

    def resolve(self, record: UtteranceRecord) -> Path:
        if self.root is None:
            return Path(record.audio_path)
        return self.root / record.audio_path

    def save(self, path) -> Path:
        """Serialize to the TSV format above. Audio paths stay relative, so a
        manifest should be saved inside the directory they resolve against;
        the manifest object itself is not modified."""
        path = Path(path)
        lines = [MANIFEST_HEADER]
        for r in self.records:
            lines.append(
                f"{r.utterance_id}\t{r.speaker_id}\t{r.audio_path}\t{r.label}\t"
                f"{r.vocoder_class}\t{r.split}\t{r.duration:.6f}"
            )
        meta = {"build_seed": self.build_seed, "classes": self.registry_snapshot}
        lines.append("#registry " + json.dumps(meta, sort_keys=True))
        path.write_text("\n".join(lines) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "Manifest":
        path = Path(path)
        lines = path.read_text().splitlines()
        if not lines or lines[0] != MANIFEST_HEADER:
            raise ConfigurationError(f"{path}: not a manifest (bad header)")
        if not lines[-1].startswith("#registry "):
            raise ConfigurationError(f"{path}: missing trailing registry line")
        meta = json.loads(lines[-1][len("#registry "):])
        records = []
        for line in lines[1:-1]:
            uid, spk, rel, label, vclass, split, dur = line.split("\t")
            records.append(
                UtteranceRecord(uid, spk, rel, int(label), int(vclass), split, float(dur))
            )
        return cls(
            records=records,
            registry_snapshot={k: int(v) for k, v in meta["classes"].items()},
            build_seed=int(meta["build_seed"]),
            root=path.parent,
        )


@dataclass(frozen=True)
class SpeakerAllocation:
    """Disjoint speaker sets: real-only, fake-only, and mixed (both labels)."""

    real_only: frozenset[str]
    fake_only: frozenset[str]
    mixed: frozenset[str]


def allocate_speakers(speakers: list[str], seed: int) -> SpeakerAllocation:
    """Deterministically assign speakers 25% real-only, 25% fake-only, rest mixed.

    Counts use floor(n/4) for the pure groups; the remainder goes to mixed so
    as many speakers as possible contribute both labels.
    """
    if len(speakers) < 4:
        raise ValueError(f"need at least 4 speakers, got {len(speakers)}")
    if len(set(speakers)) != len(speakers):
        raise ValueError("duplicate speaker ids")
    order = list(np.random.default_rng(seed).permutation(sorted(speakers)))
    quarter = len(order) // 4
    return SpeakerAllocation(
        real_only=frozenset(order[:quarter]),
        fake_only=frozenset(order[quarter: 2 * quarter]),
        mixed=frozenset(order[2 * quarter:]),
    )


def _scan_source(source_dir: Path) -> dict[str, list[Path]]:
    speakers = {}
    for spk_dir in sorted(d for d in source_dir.iterdir() if d.is_dir()):
        wavs = sorted(spk_dir.glob("*.wav"))
        if not wavs:
            log.warning("speaker %s has no wav files, skipping", spk_dir.name)
            continue
        speakers[spk_dir.name] = wavs
    return speakers


def build_corpus(
    source_dir,
    registry: VocoderRegistry,
    p: MelParams,
    seed: int,
    out_dir,
    n_workers: int = 1,
) -> Manifest:
    """Build a self-vocoded corpus from `<source>/<speaker>/*.wav`.

    Real-only speakers keep all utterances real; fake-only speakers have all
    utterances self-vocoded; mixed speakers get a seeded half/half split
    (odd counts leave the extra utterance real). Fake utterances are assigned
    backends round-robin (seeded order, carry across speakers) so vocoder
    classes stay balanced. Audio is copied/written under out_dir and the
    manifest is saved as out_dir/manifest.tsv.

    Unreadable utterances are logged and skipped; the build continues.
    """
    source_dir = Path(source_dir)
    out_dir = Path(out_dir)
    if not source_dir.is_dir():
        raise FileNotFoundError(f"source directory not found: {source_dir}")
    registry.require_multiclass()

    speakers = _scan_source(source_dir)
    allocation = allocate_speakers(sorted(speakers), seed)
    rng = np.random.default_rng(seed)
    backends = list(registry)

    # Draw every random decision up front so worker scheduling cannot affect
    # the result: (path, speaker, make_fake) in deterministic speaker order,
    # then a carried round-robin over seeded per-speaker orderings.
    jobs = []  # (speaker, path, backend or None)
    carry = 0
    for spk in sorted(speakers):
        paths = speakers[spk]
        if spk in allocation.real_only:
            fake_paths = []
        elif spk in allocation.fake_only:
            fake_paths = list(paths)
        else:
            k = len(paths) // 2
            idx = sorted(rng.choice(len(paths), size=k, replace=False))
            fake_paths = [paths[i] for i in idx]
        fake_set = set(fake_paths)
        shuffled = [fake_paths[i] for i in rng.permutation(len(fake_paths))]
        assigned = {}
        for path in shuffled:
            assigned[path] = backends[carry % len(backends)]
            carry += 1
        for path in paths:
            jobs.append((spk, path, assigned.get(path) if path in fake_set else None))

    audio_root = out_dir / "audio"

    def process(job) -> UtteranceRecord | None:
        spk, path, backend = job
        uid = f"{spk}_{path.stem}"
        rel = f"audio/{spk}/{path.stem}.wav"
        try:
            w = load_audio(path)
        except Exception as exc:
            log.warning("skipping %s: %s", path, exc)
            return None
        if backend is not None:
            w = self_vocode(w, p, backend)
        dest = out_dir / rel
        dest.parent.mkdir(parents=True, exist_ok=True)
        save_audio(w, dest)
        return UtteranceRecord(
            utterance_id=uid,
            speaker_id=spk,
            audio_path=rel,
            label=FAKE_LABEL if backend is not None else REAL_LABEL,
            vocoder_class=backend.class_id if backend is not None else 0,
            split="train",  # placeholder until split_manifest assigns splits
            duration=len(w) / w.sample_rate,
        )

    audio_root.mkdir(parents=True, exist_ok=True)
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(process, jobs))
    else:
        results = [process(j) for j in jobs]

    records = sorted((r for r in results if r is not None), key=lambda r: r.utterance_id)
    manifest = Manifest(
        records=records,
        registry_snapshot=registry.snapshot(),
        build_seed=seed,
        root=out_dir,
    )
    manifest.save(out_dir / "manifest.tsv")
    return manifest


def split_manifest(m: Manifest, fractions: tuple[float, float, float], seed: int) -> Manifest:
    """Assign train/dev/test at speaker granularity.

    Speaker counts follow largest-remainder rounding of the fractions; every
    split must receive at least one speaker.
    """
    if len(fractions) != 3:
        raise ValueError("fractions must be (train, dev, test)")
    if min(fractions) <= 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be positive and sum to 1, got {fractions}")
    speakers = sorted(m.speakers())
    if len(speakers) < 3:
        raise ValueError(f"need >= 3 speakers to populate all splits, got {len(speakers)}")
    order = list(np.random.default_rng(seed).permutation(speakers))
    targets = [f * len(order) for f in fractions]
    counts = [int(np.floor(x)) for x in targets]
    remainders = [t - c for t, c in zip(targets, counts)]
    while sum(counts) < len(order):
        i = int(np.argmax(remainders))
        counts[i] += 1
        remainders[i] = -1.0
    if min(counts) == 0:
        raise ValueError(
            f"too few speakers ({len(order)}) for fractions {fractions}: a split is empty"
        )
    assignment = {}
    pos = 0
    for split, c in zip(SPLITS, counts):
        for spk in order[pos:pos + c]:
            assignment[spk] = split
        pos += c
    records = [replace(r, split=assignment[r.speaker_id]) for r in m.records]
    return Manifest(
        records=records,
        registry_snapshot=dict(m.registry_snapshot),
        build_seed=m.build_seed,
        root=m.root,
    )


# ---------------------------------------------------------------------------
# Evaluation-time augmentation
# ---------------------------------------------------------------------------

class AppliedAugment(NamedTuple):
    """Which branch ran; rate/snr_db are filled for their branches only."""

    kind: str  # original | resampled | noisy
    rate: int | None = None
    snr_db: float | None = None


@dataclass
class AugmentPolicy:
    """Degradation odds: keep / resample-roundtrip / add noise (default 40/40/20)."""

    p_original: float = 0.4
    p_resample: float = 0.4
    p_noise: float = 0.2
    resample_rates: tuple[int, ...] = (8000, 16000, 22050, 32000, 44100)
    snrs_db: tuple[float, ...] = (8.0, 10.0, 20.0)
    noise: Waveform | None = None

    def __post_init__(self):
        probs = (self.p_original, self.p_resample, self.p_noise)
        if min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError(f"branch probabilities must be >= 0 and sum to 1, got {probs}")


def augment_for_eval(
    w: Waveform, policy: AugmentPolicy, rng: np.random.Generator
) -> tuple[Waveform, AppliedAugment]:
    """Apply one seeded draw of the augmentation policy to a waveform."""
    if policy.p_noise > 0 and policy.noise is None:
        raise ConfigurationError("noisy branch configured but no noise recording loaded")
    if policy.noise is not None and policy.p_noise > 0:
        if policy.noise.sample_rate != w.sample_rate:
            raise ConfigurationError(
                f"noise rate {policy.noise.sample_rate} != signal rate {w.sample_rate}"
            )
    u = float(rng.random())
    if u < policy.p_original:
        return w.copy(), AppliedAugment("original")
    if u < policy.p_original + policy.p_resample:
        rate = int(policy.resample_rates[rng.integers(len(policy.resample_rates))])
        return degrade_roundtrip(w, rate), AppliedAugment("resampled", rate=rate)
    snr = float(policy.snrs_db[rng.integers(len(policy.snrs_db))])
    noise = policy.noise
    if len(noise) > len(w):
        start = int(rng.integers(0, len(noise) - len(w) + 1))
        segment = Waveform(noise.samples[start:start + len(w)], noise.sample_rate)
    else:
        segment = noise
    return mix_noise_at_snr(w, segment, snr), AppliedAugment("noisy", snr_db=snr)
