"""The detector: a raw-waveform encoder (learnable sinc band-pass front end,
residual blocks with filter-wise feature-map scaling, GRU aggregation, linear
embedding) feeding two heads — a single-logit real/fake classifier and a
multi-class vocoder identifier. Both heads read the same embedding, so the
identification task shapes the shared features.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import nn
from .errors import ConfigurationError

CHECKPOINT_VERSION = 1
POOL = 3  # decimation factor after the front end and after each block


@dataclass(frozen=True)
class ModelConfig:
    """Architecture sizing. `tiny` is the test profile; defaults are the
    full-scale profile."""

    input_length: int = 64000
    sinc_filters: int = 20
    sinc_kernel: int = 1025
    block_channels: tuple[int, ...] = (20, 128)
    gru_hidden: int = 256
    embedding_dim: int = 256
    num_vocoder_classes: int = 3  # real class + C >= 2 vocoders
    sample_rate: int = 24000
    seed: int = 0

    def __post_init__(self):
        if self.num_vocoder_classes < 3:
            raise ValueError(
                f"num_vocoder_classes must be >= 3 (real + at least 2 vocoders), "
                f"got {self.num_vocoder_classes}"
            )
        if self.input_length < self.sinc_kernel:
            raise ValueError(
                f"input_length {self.input_length} shorter than sinc kernel "
                f"{self.sinc_kernel}"
            )
        if self.sinc_kernel % 2 != 1:
            raise ValueError("sinc_kernel must be odd")
        if len(self.block_channels) < 1:
            raise ValueError("need at least one residual block")


def tiny_config(num_vocoder_classes: int = 3, seed: int = 0) -> ModelConfig:
    """Desk-scale profile used throughout the test suite."""
    return ModelConfig(
        input_length=16000,
        sinc_filters=4,
        sinc_kernel=251,
        block_channels=(4, 8),
        gru_hidden=16,
        embedding_dim=16,
        num_vocoder_classes=num_vocoder_classes,
        seed=seed,
    )


class _ResidualBlock:
    """Pre-activation residual block -> maxpool -> feature-map scaling."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator):
        self.bn1 = nn.BatchNorm1d(c_in)
        self.act1 = nn.LeakyReLU()
        self.conv1 = nn.Conv1d(c_in, c_out, 3, rng, bias=False)  # bn2 follows
        self.bn2 = nn.BatchNorm1d(c_out)
        self.act2 = nn.LeakyReLU()
        self.conv2 = nn.Conv1d(c_out, c_out, 3, rng)
        self.skip = nn.Conv1d(c_in, c_out, 1, rng) if c_in != c_out else None
        self.pool = nn.MaxPool1d(POOL)
        self.fms = nn.FeatureMapScale(c_out, rng)

    def sublayers(self) -> dict[str, nn.Layer]:
        out = {
            "bn1": self.bn1, "conv1": self.conv1, "bn2": self.bn2,
            "conv2": self.conv2, "fms": self.fms,
        }
        if self.skip is not None:
            out["skip"] = self.skip
        return out

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        y = self.bn1.forward(x, train)
        y = self.act1.forward(y, train)
        y = self.conv1.forward(y, train)
        y = self.bn2.forward(y, train)
        y = self.act2.forward(y, train)
        y = self.conv2.forward(y, train)
        res = x if self.skip is None else self.skip.forward(x, train)
        y = self.pool.forward(y + res, train)
        return self.fms.forward(y, train)

    def backward(self, gout: np.ndarray) -> np.ndarray:
        g = self.fms.backward(gout)
        g = self.pool.backward(g)
        g_res = g
        g = self.conv2.backward(g)
        g = self.act2.backward(g)
        g = self.bn2.backward(g)
        g = self.conv1.backward(g)
        g = self.act1.backward(g)
        g = self.bn1.backward(g)
        if self.skip is None:
            return g + g_res
        return g + self.skip.backward(g_res)


class DetectorModel:
    """Shared raw-waveform encoder with binary and vocoder-class heads.

    Parameter tensors are reachable by canonical dotted names (see `params`),
    which checkpointing, the optimizer, and gradient checks all share.
    Training-mode forward caches activations and therefore needs exclusive
    access; eval-mode forward caches nothing and is safe to share.
    """

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        self.registry_snapshot: dict[str, int] | None = None
        rng = np.random.default_rng(cfg.seed)
        self.sinc = nn.SincConv(cfg.sinc_filters, cfg.sinc_kernel, cfg.sample_rate)
        self.pool0 = nn.MaxPool1d(POOL)
        self.bn0 = nn.BatchNorm1d(cfg.sinc_filters)
        self.act0 = nn.LeakyReLU()
        self.blocks = []
        c_prev = cfg.sinc_filters
        for c in cfg.block_channels:
            self.blocks.append(_ResidualBlock(c_prev, c, rng))
            c_prev = c
        self.bn_pre = nn.BatchNorm1d(c_prev)
        self.act_pre = nn.LeakyReLU()
        self.pool_pre = nn.MaxPool1d(POOL)  # decimate before recurrence
        self.gru = nn.GRU(c_prev, cfg.gru_hidden, rng)
        self.embed = nn.Linear(cfg.gru_hidden, cfg.embedding_dim, rng)
        self.head_binary = nn.Linear(cfg.embedding_dim, 1, rng)
        self.head_vocoder = nn.Linear(cfg.embedding_dim, cfg.num_vocoder_classes, rng)

    # -- parameter plumbing --------------------------------------------------

    def _layer_map(self) -> dict[str, nn.Layer]:
        layers = {
            "sinc": self.sinc, "bn0": self.bn0,
            "bn_pre": self.bn_pre, "gru": self.gru, "embed": self.embed,
            "head_binary": self.head_binary, "head_vocoder": self.head_vocoder,
        }
        for i, blk in enumerate(self.blocks):
            for sub, layer in blk.sublayers().items():
                layers[f"block{i + 1}.{sub}"] = layer
        return layers

    def params(self) -> dict[str, np.ndarray]:
        return {
            f"{lname}.{pname}": arr
            for lname, layer in self._layer_map().items()
            for pname, arr in layer.params.items()
        }

    def grads(self) -> dict[str, np.ndarray]:
        return {
            f"{lname}.{pname}": arr
            for lname, layer in self._layer_map().items()
            for pname, arr in layer.grads.items()
        }

    def buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for lname, layer in self._layer_map().items():
            if isinstance(layer, nn.BatchNorm1d):
                out[f"{lname}.running_mean"] = layer.running_mean
                out[f"{lname}.running_var"] = layer.running_var
        return out

    def zero_grad(self):
        for layer in self._layer_map().values():
            layer.zero_grad()

    # -- forward / backward ---------------------------------------------------

    def _check_batch(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 2 or batch.shape[1] != self.cfg.input_length:
            raise ValueError(
                f"batch must be (B, {self.cfg.input_length}), got {batch.shape}"
            )
        if not np.all(np.isfinite(batch)):
            raise ValueError("batch contains NaN or Inf")
        return batch

    def extract_features(self, batch: np.ndarray, train: bool = False) -> np.ndarray:
        """Waveform batch (B, input_length) -> embeddings (B, embedding_dim)."""
        x = self._check_batch(batch)
        y = self.sinc.forward(x, train)
        y = self.pool0.forward(y, train)
        y = self.bn0.forward(y, train)
        y = self.act0.forward(y, train)
        for blk in self.blocks:
            y = blk.forward(y, train)
        y = self.bn_pre.forward(y, train)
        y = self.act_pre.forward(y, train)
        y = self.pool_pre.forward(y, train)
        h = self.gru.forward(y.transpose(0, 2, 1), train)
        return self.embed.forward(h, train)

    def binary_logit(self, emb: np.ndarray, train: bool = False) -> np.ndarray:
        """Embedding batch -> (B, 1) logits; sigmoid(logit) is P(fake)."""
        return self.head_binary.forward(emb, train)

    def vocoder_logits(self, emb: np.ndarray, train: bool = False) -> np.ndarray:
        """Embedding batch -> (B, num_vocoder_classes) logits."""
        return self.head_vocoder.forward(emb, train)

    def forward(self, batch: np.ndarray, train: bool = False):
        """One shared encoder pass feeding both heads.

        Returns (binary_logits (B, 1), vocoder_logits (B, C+1)).
        """
        emb = self.extract_features(batch, train)
        return self.binary_logit(emb, train), self.vocoder_logits(emb, train)

    def backward(self, d_binary: np.ndarray, d_vocoder: np.ndarray) -> None:
        """Accumulate gradients from both heads' logit gradients."""
        g_emb = self.head_binary.backward(d_binary) + self.head_vocoder.backward(d_vocoder)
        g_h = self.embed.backward(g_emb)
        g_seq = self.gru.backward(g_h).transpose(0, 2, 1)
        g = self.pool_pre.backward(g_seq)
        g = self.act_pre.backward(g)
        g = self.bn_pre.backward(g)
        for blk in reversed(self.blocks):
            g = blk.backward(g)
        g = self.act0.backward(g)
        g = self.bn0.backward(g)
        g = self.pool0.backward(g)
        self.sinc.backward(g)


def init_model(cfg: ModelConfig) -> DetectorModel:
    """Build a model with seeded initialization (same cfg -> same parameters)."""
    return DetectorModel(cfg)


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

def save_checkpoint(
    path,
    model: DetectorModel,
    optimizer_state: dict | None = None,
    step: int = 0,
    best_dev_eer: float | None = None,
) -> Path:
    """Self-describing npz: config, parameters and buffers by canonical name,
    optimizer state, registry snapshot, version tag."""
    path = Path(path)
    arrays = {f"param/{k}": v for k, v in model.params().items()}
    arrays.update({f"buffer/{k}": v for k, v in model.buffers().items()})
    if optimizer_state is not None:
        arrays.update({f"adam_m/{k}": v for k, v in optimizer_state["m"].items()})
        arrays.update({f"adam_v/{k}": v for k, v in optimizer_state["v"].items()})
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.cfg),
        "registry_snapshot": model.registry_snapshot,
        "step": step,
        "best_dev_eer": best_dev_eer,
        "adam_t": optimizer_state["t"] if optimizer_state is not None else None,
    }
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **arrays)
    return path


def load_checkpoint(path) -> tuple[DetectorModel, dict | None, dict]:
    """Restore (model, optimizer_state, meta) from `save_checkpoint` output."""
    path = Path(path)
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ConfigurationError(
                f"{path}: checkpoint version {meta.get('version')} != {CHECKPOINT_VERSION}"
            )
        cfg_dict = dict(meta["config"])
        cfg_dict["block_channels"] = tuple(cfg_dict["block_channels"])
        model = DetectorModel(ModelConfig(**cfg_dict))
        params = model.params()
        for k, v in params.items():
            v[...] = data[f"param/{k}"]
        for k, v in model.buffers().items():
            v[...] = data[f"buffer/{k}"]
        if meta["registry_snapshot"] is not None:
            model.registry_snapshot = {
                str(k): int(c) for k, c in meta["registry_snapshot"].items()
            }
        opt_state = None
        if meta["adam_t"] is not None:
            opt_state = {
                "t": meta["adam_t"],
                "m": {k: data[f"adam_m/{k}"].copy() for k in params},
                "v": {k: data[f"adam_v/{k}"].copy() for k in params},
            }
    return model, opt_state, meta
