"""Declarative run configuration: one JSON document covering mel analysis,
model profile, training, augmentation, vocoder backends, and split
fractions. Unknown keys are rejected; referenced paths are validated at
load; the fully resolved config is echoed into the run directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .audio import MelParams, Waveform, load_audio
from .corpus import AugmentPolicy
from .detector import ModelConfig, tiny_config
from .errors import ConfigurationError
from .training import TrainConfig
from .vocoders import VocoderRegistry, backend_from_spec

PROFILES = ("paper", "tiny")

DEFAULT_VOCODERS = [
    {"kind": "comb", "delay": 16, "gain": 0.9},
    {"kind": "quantize", "bits": 4},
]

# reference corpus split ratio (documentation default)
DEFAULT_SPLIT = (0.76, 0.13, 0.11)


@dataclass
class RunConfig:
    seed: int = 0
    workers: int = 1
    profile: str = "paper"
    mel_overrides: dict = field(default_factory=dict)
    model_overrides: dict = field(default_factory=dict)
    train_overrides: dict = field(default_factory=dict)
    augment_overrides: dict = field(default_factory=dict)
    noise_path: str | None = None
    vocoder_specs: list = field(default_factory=lambda: [dict(s) for s in DEFAULT_VOCODERS])
    split_fractions: tuple[float, float, float] = DEFAULT_SPLIT

    def mel_params(self) -> MelParams:
        return MelParams(**self.mel_overrides)

    def model_config(self, num_vocoder_classes: int | None = None) -> ModelConfig:
        base = tiny_config() if self.profile == "tiny" else ModelConfig()
        over = dict(self.model_overrides)
        if "block_channels" in over:
            over["block_channels"] = tuple(over["block_channels"])
        if num_vocoder_classes is not None:
            declared = over.get("num_vocoder_classes")
            if declared is not None and declared != num_vocoder_classes:
                raise ConfigurationError(
                    f"config declares {declared} vocoder classes but the manifest "
                    f"registry implies {num_vocoder_classes}"
                )
            over["num_vocoder_classes"] = num_vocoder_classes
        over.setdefault("seed", self.seed)
        over.setdefault("sample_rate", self.mel_params().sample_rate)
        return replace(base, **over)

    def train_config(self) -> TrainConfig:
        over = dict(self.train_overrides)
        over.setdefault("seed", self.seed)
        if self.augment_needed(over):
            policy = self.augment_policy()
            if policy.p_noise > 0 and policy.noise is None:
                raise ConfigurationError(
                    "train-time augmentation with a noisy branch needs augment.noise_path"
                )
            over["augment"] = policy
        return TrainConfig(**over)

    @staticmethod
    def augment_needed(train_overrides: dict) -> bool:
        return bool(train_overrides.get("augment_train"))

    def augment_policy(self) -> AugmentPolicy:
        over = dict(self.augment_overrides)
        if "resample_rates" in over:
            over["resample_rates"] = tuple(int(r) for r in over["resample_rates"])
        if "snrs_db" in over:
            over["snrs_db"] = tuple(float(s) for s in over["snrs_db"])
        noise: Waveform | None = None
        if self.noise_path is not None:
            noise = load_audio(self.noise_path)
        policy = AugmentPolicy(noise=noise, **over)
        return policy

    def registry(self) -> VocoderRegistry:
        p = self.mel_params()
        return VocoderRegistry([backend_from_spec(p, s) for s in self.vocoder_specs])

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "workers": self.workers,
            "model": {"profile": self.profile, **self.model_overrides},
            "mel": dict(self.mel_overrides),
            "train": {
                ("lambda" if k == "lam" else k): v
                for k, v in self.train_overrides.items()
            },
            "augment": {
                **self.augment_overrides,
                **({"noise_path": self.noise_path} if self.noise_path else {}),
            },
            "vocoders": [dict(s) for s in self.vocoder_specs],
            "split": {"fractions": list(self.split_fractions)},
        }

    def echo(self, run_dir) -> Path:
        """Write the resolved configuration next to the run outputs."""
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        out = run_dir / "config.echo.json"
        out.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return out


def _check_keys(section: str, given: dict, allowed: set[str]) -> None:
    unknown = set(given) - allowed
    if unknown:
        raise ConfigurationError(
            f"unknown key(s) in '{section}': {sorted(unknown)}; allowed: {sorted(allowed)}"
        )


def _dataclass_keys(cls) -> set[str]:
    return {f.name for f in fields(cls)}


def run_config_from_dict(doc: dict, base_dir: Path | None = None) -> RunConfig:
    """Validate and resolve a configuration dictionary (see load_run_config)."""
    _check_keys("config", doc, {"seed", "workers", "mel", "model", "train",
                                "augment", "vocoders", "split"})
    cfg = RunConfig()
    cfg.seed = int(doc.get("seed", 0))
    cfg.workers = int(doc.get("workers", 1))

    mel = dict(doc.get("mel", {}))
    _check_keys("mel", mel, _dataclass_keys(MelParams))
    cfg.mel_overrides = mel

    model = dict(doc.get("model", {}))
    _check_keys("model", model, _dataclass_keys(ModelConfig) | {"profile"})
    cfg.profile = model.pop("profile", "paper")
    if cfg.profile not in PROFILES:
        raise ConfigurationError(f"unknown profile {cfg.profile!r}; use one of {PROFILES}")
    cfg.model_overrides = model

    train = dict(doc.get("train", {}))
    allowed = (_dataclass_keys(TrainConfig) - {"lam", "augment"}) | {"lambda"}
    _check_keys("train", train, allowed)
    if "lambda" in train:
        train["lam"] = float(train.pop("lambda"))
    cfg.train_overrides = train

    augment = dict(doc.get("augment", {}))
    _check_keys("augment", augment,
                _dataclass_keys(AugmentPolicy) - {"noise"} | {"noise_path"})
    noise_path = augment.pop("noise_path", None)
    if noise_path is not None:
        noise_path = str(noise_path)
        if base_dir is not None and not Path(noise_path).is_absolute():
            noise_path = str(base_dir / noise_path)
        if not Path(noise_path).exists():
            raise ConfigurationError(f"noise recording not found: {noise_path}")
    cfg.noise_path = noise_path
    cfg.augment_overrides = augment

    if "vocoders" in doc:
        specs = doc["vocoders"]
        if not isinstance(specs, list) or not specs:
            raise ConfigurationError("'vocoders' must be a non-empty list")
        cfg.vocoder_specs = [dict(s) for s in specs]

    split = dict(doc.get("split", {}))
    _check_keys("split", split, {"fractions"})
    if "fractions" in split:
        fr = split["fractions"]
        if len(fr) != 3:
            raise ConfigurationError("split.fractions must have 3 entries")
        cfg.split_fractions = tuple(float(x) for x in fr)

    # fail fast on malformed sections and backend specs
    cfg.mel_params()
    cfg.registry()
    cfg.train_config()
    return cfg


def load_run_config(path) -> RunConfig:
    """Load and validate a JSON run configuration file."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path}: config document must be a JSON object")
    return run_config_from_dict(doc, base_dir=path.parent)
