"""Scoring and metrics: threshold-sweep EER with linear interpolation at the
FAR/FRR crossing, DET tables, confusion matrices, and manifest scoring with
the optional degradation protocol applied first.

Score orientation is fixed: higher score = more likely fake. FAR is the
fraction of real utterances accepted as fake at a threshold; FRR is the
fraction of fakes rejected as real.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .audio import fix_length, load_audio
from .corpus import AugmentPolicy, Manifest, augment_for_eval
from .errors import ConfigurationError


@dataclass(frozen=True)
class ScoreEntry:
    utterance_id: str
    score: float        # P(fake)
    label: int          # ground truth, 0 real / 1 fake
    true_class: int
    pred_class: int | None = None


@dataclass
class ScoreSet:
    entries: list[ScoreEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def scores(self) -> np.ndarray:
        return np.array([e.score for e in self.entries], dtype=np.float64)

    def labels(self) -> np.ndarray:
        return np.array([e.label for e in self.entries], dtype=np.int64)

    def save(self, path) -> Path:
        path = Path(path)
        lines = []
        for e in self.entries:
            pred = "" if e.pred_class is None else str(e.pred_class)
            lines.append(f"{e.utterance_id}\t{e.score:.9f}\t{e.label}\t{e.true_class}\t{pred}")
        path.write_text("\n".join(lines) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "ScoreSet":
        entries = []
        for line in Path(path).read_text().splitlines():
            uid, score, label, true_c, pred = line.split("\t")
            entries.append(
                ScoreEntry(uid, float(score), int(label), int(true_c),
                           None if pred == "" else int(pred))
            )
        return cls(entries)


def _sweep(scores: np.ndarray, labels: np.ndarray):
    """Operating points over ascending distinct-score thresholds plus a +inf
    sentinel: FAR(t) = frac(real >= t), FRR(t) = frac(fake < t)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or scores.shape != labels.shape:
        raise ValueError("scores and labels must be equal-length 1-D")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    real = np.sort(scores[labels == 0])
    fake = np.sort(scores[labels == 1])
    if len(real) == 0 or len(fake) == 0:
        raise ValueError("need at least one score of each label to sweep")
    ts = np.unique(scores)
    far = (len(real) - np.searchsorted(real, ts, side="left")) / len(real)
    frr = np.searchsorted(fake, ts, side="left") / len(fake)
    ts = np.append(ts, np.inf)
    far = np.append(far, 0.0)
    frr = np.append(frr, 1.0)
    return ts, far, frr


def det_curve(s: ScoreSet) -> list[tuple[float, float, float]]:
    """(threshold, FAR, FRR) rows; FAR non-increasing, FRR non-decreasing,
    with endpoints (FAR=1, FRR=0) and (FAR=0, FRR=1) included."""
    ts, far, frr = _sweep(s.scores(), s.labels())
    return list(zip(ts.tolist(), far.tolist(), frr.tolist()))


def compute_eer(s: ScoreSet | None = None, *, scores=None, labels=None) -> tuple[float, float]:
    """Equal error rate and the threshold where FAR and FRR cross.

    The crossing is linearly interpolated between the two adjacent sweep
    points that bracket it; exact ties resolve to the lowest threshold.
    Accepts a ScoreSet or raw (scores, labels) arrays.
    """
    if s is not None:
        scores, labels = s.scores(), s.labels()
    ts, far, frr = _sweep(np.asarray(scores), np.asarray(labels))
    d = far - frr  # non-increasing; starts at +1, ends at -1
    j = int(np.argmax(d <= 0.0))
    if d[j] == 0.0:
        return float(far[j]), float(ts[j])
    # bracket (j-1, j): d[j-1] > 0 > d[j]
    s_frac = d[j - 1] / (d[j - 1] - d[j])
    eer = far[j - 1] + s_frac * (far[j] - far[j - 1])
    if np.isinf(ts[j]):
        threshold = float(ts[j - 1])
    else:
        threshold = float(ts[j - 1] + s_frac * (ts[j] - ts[j - 1]))
    return float(eer), threshold


@dataclass
class ConfusionMatrix:
    """Row = true class, column = predicted; counts plus row-normalized rates."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ValueError(f"counts must be square, got {self.counts.shape}")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    def total(self) -> int:
        return int(self.counts.sum())

    def rates(self) -> np.ndarray:
        sums = self.counts.sum(axis=1, keepdims=True)
        return np.divide(self.counts, sums, out=np.zeros_like(self.counts, dtype=float),
                         where=sums > 0)

    def accuracy(self) -> float:
        return float(np.trace(self.counts) / max(self.total(), 1))

    def save(self, path) -> Path:
        path = Path(path)
        lines = ["\t".join(str(v) for v in row) for row in self.counts]
        path.write_text("\n".join(lines) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "ConfusionMatrix":
        rows = [
            [int(v) for v in line.split("\t")]
            for line in Path(path).read_text().splitlines()
        ]
        return cls(np.array(rows))


def confusion_matrix(s: ScoreSet, num_classes: int | None = None) -> ConfusionMatrix:
    """Vocoder-class confusion counts from true/predicted classes."""
    if any(e.pred_class is None for e in s.entries):
        raise ValueError("all entries need a predicted class")
    true = np.array([e.true_class for e in s.entries])
    pred = np.array([e.pred_class for e in s.entries])
    k = int(max(true.max(), pred.max())) + 1 if num_classes is None else num_classes
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (true, pred), 1)
    return ConfusionMatrix(counts)


def score_manifest(
    model,
    manifest: Manifest,
    split: str,
    augment: AugmentPolicy | None = None,
    seed: int = 0,
    batch_size: int = 32,
) -> ScoreSet:
    """Score every utterance of a split with a frozen model.

    Clips are tiled/center-cropped to the model input length (deterministic);
    when an augmentation policy is given, each utterance first passes through
    one seeded policy draw. score = sigmoid(binary logit), predicted class =
    argmax of the vocoder logits.
    """
    snap = getattr(model, "registry_snapshot", None)
    if snap is not None and snap != manifest.registry_snapshot:
        raise ConfigurationError(
            f"registry mismatch: checkpoint {snap} vs manifest {manifest.registry_snapshot}"
        )
    records = sorted(manifest.subset(split), key=lambda r: r.utterance_id)
    if not records:
        raise ConfigurationError(f"manifest has no records in split {split!r}")
    rng = np.random.default_rng(seed)
    n_in = model.cfg.input_length
    entries = []
    for start in range(0, len(records), batch_size):
        chunk = records[start:start + batch_size]
        batch = np.empty((len(chunk), n_in))
        for i, rec in enumerate(chunk):
            w = load_audio(manifest.resolve(rec))
            if augment is not None:
                w, _ = augment_for_eval(w, augment, rng)
            mode = "tile" if len(w) < n_in else "crop-center"
            batch[i] = fix_length(w, n_in, mode).samples
        bl, vl = model.forward(batch, train=False)
        scores = expit(bl[:, 0])
        preds = vl.argmax(axis=1)
        for rec, sc, pc in zip(chunk, scores, preds):
            entries.append(
                ScoreEntry(rec.utterance_id, float(sc), rec.label,
                           rec.vocoder_class, int(pc))
            )
    return ScoreSet(entries)
