"""Caption sampling and fusion into the text tokens fed to cross-modal attention.

A variable-length caption set is reduced to a fixed count by deterministic
uniform index sampling, concatenated and passed through a linear map. In
generic mode the sampled caption rows are kept as individual attention
tokens with the fused vector appended as one extra token; ``fused_only``
collapses to the single fused token. Query mode bypasses fusion entirely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import Config
from .errors import ConfigError, ShapeError, UsageError


@dataclass
class FusionParams:
    """Linear map from m_fixed concatenated caption rows to one embedding."""

    weight: Tensor  # (m_fixed * dim) x dim
    bias: Tensor    # (1, dim)

    def named(self, prefix: str = "fusion") -> list[tuple[str, Tensor]]:
        return [(f"{prefix}.weight", self.weight), (f"{prefix}.bias", self.bias)]


def init_fusion_params(cfg: Config, rng: np.random.Generator) -> FusionParams:
    fan_in = cfg.m_fixed * cfg.embed_dim
    bound = 1.0 / np.sqrt(fan_in)
    weight = ad.parameter(rng.uniform(-bound, bound, size=(fan_in, cfg.embed_dim)))
    bias = ad.parameter(np.zeros((1, cfg.embed_dim)))
    return FusionParams(weight=weight, bias=bias)


def sample_caption_indices(m_available: int, m_fixed: int) -> list[int]:
    """Uniformly spread indices round(j*(M-1)/(m_fixed-1)); repeats when M < m_fixed."""
    if m_fixed < 1:
        raise ConfigError("m_fixed must be >= 1")
    if m_available < 1:
        raise UsageError("need at least one caption")
    if m_fixed == 1:
        return [0]
    span = m_available - 1
    return [int(round(j * span / (m_fixed - 1))) for j in range(m_fixed)]


def sample_captions(captions: np.ndarray, m_fixed: int) -> np.ndarray:
    """Pick m_fixed caption rows deterministically from an M x D matrix."""
    idx = sample_caption_indices(captions.shape[0], m_fixed)
    return captions[idx]


def fuse_text(sampled: Tensor, params: FusionParams) -> Tensor:
    """Concatenate sampled caption rows and apply the linear map; returns 1 x D."""
    m, d = sampled.shape
    if params.weight.shape[0] != m * d or params.weight.shape[1] != d:
        raise ShapeError(
            f"fusion weight is {params.weight.shape}, input implies ({m * d}, {d})")
    flat = ad.reshape(sampled, (1, m * d))
    return ad.add(ad.matmul(flat, params.weight), params.bias)


def text_tokens_for_attention(text: np.ndarray, kind: str, params: FusionParams,
                              cfg: Config, mode: str) -> Tensor:
    """Build the T x D token matrix for language-guided attention.

    mode="query" passes the single query row through untouched; mode
    "generic" samples ``m_fixed`` caption rows and appends the fused vector
    (or yields only the fused vector under ``fused_only``).
    """
    if mode not in ("generic", "query"):
        raise UsageError(f"mode must be generic or query, got {mode!r}")
    if mode == "query":
        if kind != "query":
            raise UsageError(f"query mode needs a query bundle, got kind {kind!r}")
        return ad.constant(text)
    if kind == "query":
        raise UsageError("generic mode cannot consume a query bundle")
    sampled = ad.constant(sample_captions(text, cfg.m_fixed))
    fused = fuse_text(sampled, params)
    if cfg.fused_only:
        return fused
    return ad.concat_rows([sampled, fused])
