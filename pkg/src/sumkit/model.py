"""Full scoring model: caption fusion -> cross-modal attention -> transformer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .attention import LgaParams, init_lga_params, language_guided_attention
from .config import Config
from .errors import ShapeError, UsageError
from .fusion import FusionParams, init_fusion_params, text_tokens_for_attention
from .losses import ReconstructorParams, init_reconstructor_params
from .transformer import (
    TransformerParams,
    init_transformer_params,
    score_window,
    window_spans,
)


@dataclass
class ModelParams:
    fusion: FusionParams
    lga: LgaParams
    transformer: TransformerParams
    reconstructor: ReconstructorParams

    def named(self) -> list[tuple[str, Tensor]]:
        """Deterministically ordered (name, tensor) pairs for optimizer/checkpoint."""
        return (self.fusion.named("fusion") + self.lga.named("lga")
                + self.transformer.named("tf") + self.reconstructor.named("recon"))


def init_model_params(cfg: Config, rng: np.random.Generator | None = None) -> ModelParams:
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    return ModelParams(
        fusion=init_fusion_params(cfg, rng),
        lga=init_lga_params(cfg, rng),
        transformer=init_transformer_params(cfg, rng),
        reconstructor=init_reconstructor_params(cfg, rng),
    )


def text_mode_for_kind(kind: str) -> str:
    return "query" if kind == "query" else "generic"


def forward_window(features: np.ndarray, valid_len: int, text: np.ndarray, text_kind: str,
                   params: ModelParams, cfg: Config,
                   dropout_rng: np.random.Generator | None = None) -> tuple[Tensor, Tensor]:
    """Score one padded window; returns (scores (v,), decoder hidden (v, D))."""
    if features.ndim != 2 or features.shape[1] != cfg.embed_dim:
        raise ShapeError(f"window features must be L x {cfg.embed_dim}, got {features.shape}")
    tokens = text_tokens_for_attention(text, text_kind, params.fusion, cfg,
                                       mode=text_mode_for_kind(text_kind))
    frames = ad.constant(features)
    fprime = language_guided_attention(frames, tokens, params.lga, residual=cfg.lga_residual)
    return score_window(fprime, valid_len, params.transformer, cfg, dropout_rng=dropout_rng)


def score_video(features: np.ndarray, text: np.ndarray, text_kind: str,
                params: ModelParams, cfg: Config) -> np.ndarray:
    """Frame scores for a whole video as a detached float array of length N."""
    if features.ndim != 2 or features.shape[0] < 1:
        raise UsageError(f"need a non-empty N x D feature matrix, got {features.shape}")
    n, d = features.shape
    out = np.zeros(n, dtype=np.float64)
    for start, end in window_spans(n, cfg.window_len):
        valid = end - start
        chunk = features[start:end]
        if valid < cfg.window_len:
            chunk = np.concatenate(
                [chunk, np.zeros((cfg.window_len - valid, d), dtype=chunk.dtype)], axis=0)
        scores, _ = forward_window(chunk, valid, text, text_kind, params, cfg)
        out[start:end] = scores.data.astype(np.float64)
    return out
