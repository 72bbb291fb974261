"""Multi-task optimization: the weighted two-term objective (binary
real/fake cross-entropy plus vocoder-class cross-entropy on a shared
encoder), the Adam training loop with dev-EER checkpoint selection, and the
loss-weight ablation runner.

The loss weight `lam` interpolates the two terms:
    total = lam * l_binary + (1 - lam) * l_mult
so lam = 1 degenerates to plain binary training (the vocoder head receives
exactly zero gradient and its parameters never move).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.special import expit

from .audio import Waveform, fix_length, load_audio
from .corpus import AugmentPolicy, Manifest, augment_for_eval
from .detector import DetectorModel, ModelConfig, init_model, load_checkpoint, save_checkpoint
from .errors import ConfigurationError, TrainingDivergedError
from .evaluation import compute_eer, score_manifest

log = logging.getLogger(__name__)

METRICS_HEADER = "step\ttotal\tl_binary\tl_mult\tdev_eer\twall_time"


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 0.5            # weight on the binary term
    learning_rate: float = 1e-4
    batch_size: int = 32
    max_steps: int = 3000
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    eval_interval: int = 50
    augment_train: bool = False
    augment: AugmentPolicy | None = None

    def __post_init__(self):
        if not (0.0 <= self.lam <= 1.0):
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.augment_train and self.augment is None:
            raise ConfigurationError("augment_train set but no augment policy given")


@dataclass
class TrainState:
    model: DetectorModel
    optimizer: "Adam"
    step: int
    best_dev_eer: float
    rng: np.random.Generator


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def _check_loss_inputs(binary_logits, vocoder_logits, labels, classes):
    binary_logits = np.asarray(binary_logits, dtype=np.float64)
    vocoder_logits = np.asarray(vocoder_logits, dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.asarray(classes)
    B = binary_logits.shape[0]
    if binary_logits.shape != (B, 1):
        raise ValueError(f"binary logits must be (B, 1), got {binary_logits.shape}")
    if vocoder_logits.ndim != 2 or vocoder_logits.shape[0] != B:
        raise ValueError(f"vocoder logits must be (B, K), got {vocoder_logits.shape}")
    if labels.shape != (B,) or classes.shape != (B,):
        raise ValueError("labels and classes must be (B,)")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    K = vocoder_logits.shape[1]
    if classes.min() < 0 or classes.max() >= K:
        raise ValueError(f"classes must lie in 0..{K - 1}")
    return binary_logits, vocoder_logits, labels.astype(np.float64), classes.astype(int)


def joint_loss(binary_logits, vocoder_logits, labels, classes, lam: float):
    """(total, l_binary, l_mult): lam-weighted sum of mean sigmoid
    cross-entropy on the binary logits and mean softmax cross-entropy on the
    vocoder logits."""
    bl, vl, y, c = _check_loss_inputs(binary_logits, vocoder_logits, labels, classes)
    z = bl[:, 0]
    # stable softplus(z) - y*z
    l_binary = float(np.mean(np.maximum(z, 0.0) - y * z + np.log1p(np.exp(-np.abs(z)))))
    shifted = vl - vl.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    l_mult = float(np.mean(lse - shifted[np.arange(len(c)), c]))
    total = lam * l_binary + (1.0 - lam) * l_mult
    if not np.isfinite(total):
        raise FloatingPointError(f"non-finite loss: total={total}")
    return total, l_binary, l_mult


def joint_loss_grads(binary_logits, vocoder_logits, labels, classes, lam: float):
    """Gradients of the joint loss w.r.t. both logit blocks."""
    bl, vl, y, c = _check_loss_inputs(binary_logits, vocoder_logits, labels, classes)
    B = bl.shape[0]
    d_binary = lam * (expit(bl[:, 0]) - y)[:, None] / B
    shifted = vl - vl.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    probs[np.arange(B), c] -= 1.0
    d_vocoder = (1.0 - lam) * probs / B
    return d_binary, d_vocoder


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

class Adam:
    """Standard Adam with bias correction over a named-parameter dict."""

    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for k, p in self.params.items():
            g = grads[k]
            m = self.m[k]
            v = self.v[k]
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)

    def state(self) -> dict:
        return {"t": self.t, "m": self.m, "v": self.v}


# ---------------------------------------------------------------------------
# Data loading
# ---------------------------------------------------------------------------

class ClipLoader:
    """Uniform-with-replacement batch sampler over one manifest split.

    Waveforms are cached in memory after first load. Clips shorter than the
    model input are tiled; longer clips get a seeded random crop. Optionally
    runs each clip through the augmentation policy first. Single-worker and
    fully deterministic given the rng.
    """

    def __init__(self, manifest: Manifest, split: str, input_length: int,
                 augment: AugmentPolicy | None = None):
        self.manifest = manifest
        self.records = sorted(manifest.subset(split), key=lambda r: r.utterance_id)
        if not self.records:
            raise ConfigurationError(f"manifest has no records in split {split!r}")
        self.input_length = input_length
        self.augment = augment
        self._cache: dict[str, Waveform] = {}

    def _waveform(self, rec) -> Waveform:
        w = self._cache.get(rec.utterance_id)
        if w is None:
            w = load_audio(self.manifest.resolve(rec))
            self._cache[rec.utterance_id] = w
        return w

    def sample_batch(self, batch_size: int, rng: np.random.Generator):
        idx = rng.integers(0, len(self.records), size=batch_size)
        x = np.empty((batch_size, self.input_length))
        y = np.empty(batch_size, dtype=int)
        c = np.empty(batch_size, dtype=int)
        for row, i in enumerate(idx):
            rec = self.records[int(i)]
            w = self._waveform(rec)
            if self.augment is not None:
                w, _ = augment_for_eval(w, self.augment, rng)
            if len(w) < self.input_length:
                w = fix_length(w, self.input_length, "tile")
            else:
                w = fix_length(w, self.input_length, "crop-random", rng)
            x[row] = w.samples
            y[row] = rec.label
            c[row] = rec.vocoder_class
        return x, y, c


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

def _validate_manifest_for_training(manifest: Manifest) -> None:
    train = manifest.subset("train")
    if not train:
        raise ConfigurationError("manifest has no train split")
    if not manifest.subset("dev"):
        raise ConfigurationError("manifest has no dev split")
    labels = {r.label for r in train}
    if labels != {0, 1}:
        raise ConfigurationError(f"train split needs both labels, found {sorted(labels)}")


def train(manifest: Manifest, mcfg: ModelConfig, tcfg: TrainConfig, workdir) -> TrainState:
    """Seeded mini-batch Adam on the joint objective.

    Evaluates dev EER every eval_interval steps, keeps 'last' and
    'best-by-dev-EER' checkpoints in workdir, and appends a step-indexed
    metrics log (dev_eer is 'nan' on non-eval steps; wall_time is the only
    non-reproducible column).
    """
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    _validate_manifest_for_training(manifest)

    model = init_model(mcfg)
    model.registry_snapshot = dict(manifest.registry_snapshot)
    optimizer = Adam(model.params(), tcfg.learning_rate, tcfg.beta1, tcfg.beta2, tcfg.eps)
    rng = np.random.default_rng(tcfg.seed)
    loader = ClipLoader(
        manifest, "train", mcfg.input_length,
        augment=tcfg.augment if tcfg.augment_train else None,
    )

    best_dev_eer = float("inf")
    t_start = time.monotonic()

    with open(workdir / "metrics.tsv", "w") as metrics:
        metrics.write(METRICS_HEADER + "\n")
        for step in range(1, tcfg.max_steps + 1):
            x, y, c = loader.sample_batch(tcfg.batch_size, rng)
            bl, vl = model.forward(x, train=True)
            try:
                total, l_binary, l_mult = joint_loss(bl, vl, y, c, tcfg.lam)
            except FloatingPointError as exc:
                diag = workdir / "diverged.ckpt.npz"
                save_checkpoint(diag, model, optimizer.state(), step=step)
                raise TrainingDivergedError(
                    f"non-finite loss at step {step}; diagnostic checkpoint at {diag}"
                ) from exc
            d_bl, d_vl = joint_loss_grads(bl, vl, y, c, tcfg.lam)
            model.zero_grad()
            model.backward(d_bl, d_vl)
            optimizer.step(model.grads())

            dev_eer = float("nan")
            if step % tcfg.eval_interval == 0 or step == tcfg.max_steps:
                dev_scores = score_manifest(model, manifest, "dev", seed=0)
                dev_eer, _ = compute_eer(dev_scores)
                save_checkpoint(workdir / "last.ckpt.npz", model, optimizer.state(),
                                step=step, best_dev_eer=min(best_dev_eer, dev_eer))
                if dev_eer < best_dev_eer:
                    best_dev_eer = dev_eer
                    save_checkpoint(workdir / "best.ckpt.npz", model, optimizer.state(),
                                    step=step, best_dev_eer=best_dev_eer)
            metrics.write(
                f"{step}\t{total:.9f}\t{l_binary:.9f}\t{l_mult:.9f}\t{dev_eer:.6f}\t"
                f"{time.monotonic() - t_start:.3f}\n"
            )
    return TrainState(model=model, optimizer=optimizer, step=tcfg.max_steps,
                      best_dev_eer=best_dev_eer, rng=rng)


def read_metrics(path) -> list[dict]:
    """Parse a metrics.tsv into a list of per-step dicts."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != METRICS_HEADER:
        raise ConfigurationError(f"{path}: not a metrics log")
    out = []
    for line in lines[1:]:
        step, total, l_bin, l_mult, dev_eer, wall = line.split("\t")
        out.append({
            "step": int(step), "total": float(total), "l_binary": float(l_bin),
            "l_mult": float(l_mult), "dev_eer": float(dev_eer), "wall_time": float(wall),
        })
    return out


def run_lambda_ablation(
    manifest: Manifest,
    mcfg: ModelConfig,
    tcfg_template: TrainConfig,
    lambdas: list[float],
    workdir,
) -> list[tuple[float, float]]:
    """Train one model per loss weight (identical seed and data order) and
    report test-split EER for each. Writes workdir/ablation.tsv."""
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    if any(not (0.0 <= lam <= 1.0) for lam in lambdas):
        raise ValueError(f"lambdas must lie in [0, 1]: {lambdas}")
    rows = []
    for lam in lambdas:
        run_dir = workdir / f"lam_{lam:g}"
        tcfg = replace(tcfg_template, lam=lam)
        state = train(manifest, mcfg, tcfg, run_dir)
        best_path = run_dir / "best.ckpt.npz"
        if best_path.exists():  # dev-EER model selection, same rule as train
            model = load_checkpoint(best_path)[0]
        else:
            model = state.model
        scores = score_manifest(model, manifest, "test", seed=0)
        eer, _ = compute_eer(scores)
        rows.append((lam, eer))
        log.info("ablation lam=%g -> test EER %.4f", lam, eer)
    table = workdir / "ablation.tsv"
    table.write_text("".join(f"{lam:g}\t{eer:.6f}\n" for lam, eer in rows))
    return rows
