"""Run configuration: published-setup defaults, JSON loading, strict key checking."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError

SEED_ENV_VAR = "SUMKIT_SEED"

# dataclass field name -> JSON/CLI key (only where they differ)
_KEY_ALIASES = {"lambda_": "lambda"}


@dataclass
class Config:
    """Every tunable of the pipeline in one flat record.

    Defaults follow the published setup: 512-dim embeddings, 4-head
    cross-modal attention, an 8-head 6+6-layer scoring transformer over
    256-frame windows, 7 sampled captions, Adam at lr 1e-4 with weight decay
    0.001 for 20 epochs at batch size 100, and loss weights 0.5/0.3/0.2.
    """

    # model
    embed_dim: int = 512
    m_fixed: int = 7
    fused_only: bool = False
    lga_heads: int = 4
    lga_residual: bool = True
    tf_heads: int = 8
    tf_enc_layers: int = 6
    tf_dec_layers: int = 6
    window_len: int = 256
    dropout: float = 0.0
    disable_pos_enc: bool = False
    # losses
    alpha: float = 0.5
    beta: float = 0.3
    lambda_: float = 0.2
    recon_mode: str = "mse"
    invert_class_weight: bool = False
    select_fraction: float = 0.15
    # training
    mode: str = "supervised"
    epochs: int = 20
    batch_size: int = 100
    lr: float = 1e-4
    weight_decay: float = 0.001
    seed: int = 0
    # summaries / evaluation
    budget_fraction: float = 0.15
    f1_mode: str = "avg"
    tau_variant: str = "b"

    def validate(self) -> "Config":
        if self.embed_dim < 2 or self.embed_dim % 2 != 0:
            raise ConfigError("embed_dim must be even and >= 2 (sinusoidal positions need pairs)")
        for name in ("lga_heads", "tf_heads"):
            h = getattr(self, name)
            if h < 1 or self.embed_dim % h != 0:
                raise ConfigError(f"{name} must divide embed_dim ({self.embed_dim})")
        if self.m_fixed < 1:
            raise ConfigError("m_fixed must be >= 1")
        if self.window_len < 1:
            raise ConfigError("window_len must be >= 1")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError("dropout must lie in [0, 1)")
        if self.recon_mode not in ("mse", "l2"):
            raise ConfigError(f"recon_mode must be mse or l2, got {self.recon_mode!r}")
        if not (0.0 < self.select_fraction <= 1.0):
            raise ConfigError("select_fraction must lie in (0, 1]")
        if self.mode not in ("supervised", "unsupervised"):
            raise ConfigError(f"mode must be supervised or unsupervised, got {self.mode!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if min(self.alpha, self.beta, self.lambda_) < 0:
            raise ConfigError("loss weights must be nonnegative")
        if max(self.alpha, self.beta, self.lambda_) <= 0:
            raise ConfigError("at least one loss weight must be positive")
        if not (0.0 < self.budget_fraction <= 1.0):
            raise ConfigError("budget_fraction must lie in (0, 1]")
        if self.f1_mode not in ("avg", "max"):
            raise ConfigError(f"f1_mode must be avg or max, got {self.f1_mode!r}")
        if self.tau_variant not in ("a", "b"):
            raise ConfigError(f"tau_variant must be a or b, got {self.tau_variant!r}")
        return self

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            out[_KEY_ALIASES.get(f.name, f.name)] = getattr(self, f.name)
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "Config":
        reverse = {v: k for k, v in _KEY_ALIASES.items()}
        known = {f.name for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in raw.items():
            name = reverse.get(key, key)
            if name not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[name] = value
        try:
            cfg = cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        return cfg.validate()

    def replace(self, **overrides) -> "Config":
        """New config with non-None overrides applied (flags beat files)."""
        reverse = {v: k for k, v in _KEY_ALIASES.items()}
        clean = {}
        for key, value in overrides.items():
            if value is None:
                continue
            name = reverse.get(key, key)
            if name not in {f.name for f in dataclasses.fields(self)}:
                raise ConfigError(f"unknown config key {key!r}")
            clean[name] = value
        return dataclasses.replace(self, **clean).validate()

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.tf_heads

    @property
    def lga_head_dim(self) -> int:
        return self.embed_dim // self.lga_heads


def load_config(path: str | Path | None = None, **overrides) -> Config:
    """defaults < config file < explicit overrides; env seed as fallback."""
    raw: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed config JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
    if "seed" not in raw and overrides.get("seed") is None:
        env_seed = os.environ.get(SEED_ENV_VAR)
        if env_seed is not None:
            try:
                raw["seed"] = int(env_seed)
            except ValueError as exc:
                raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}") from exc
    return Config.from_dict(raw).replace(**overrides)


def config_hash(cfg: Config) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()
