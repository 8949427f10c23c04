"""Scaled dot-product attention and the cross-modal multi-head block.

Frame embeddings act as queries against text-token keys/values; each head
projects into dim/heads, heads are concatenated and mapped back by an output
matrix. A residual connection from the raw frame embeddings is on by default
(``lga_residual``) so frame identity survives even a single text token.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import Config
from .errors import ShapeError, UsageError


@dataclass
class HeadParams:
    wq: Tensor  # D x d_k
    wk: Tensor  # D x d_k
    wv: Tensor  # D x d_v


@dataclass
class MultiHeadParams:
    heads: list[HeadParams]
    wo: Tensor  # (h * d_v) x D

    def named(self, prefix: str) -> list[tuple[str, Tensor]]:
        out = []
        for i, h in enumerate(self.heads):
            out += [(f"{prefix}.h{i}.wq", h.wq), (f"{prefix}.h{i}.wk", h.wk),
                    (f"{prefix}.h{i}.wv", h.wv)]
        out.append((f"{prefix}.wo", self.wo))
        return out


def init_multi_head(dim: int, n_heads: int, rng: np.random.Generator) -> MultiHeadParams:
    head_dim = dim // n_heads
    bound = 1.0 / np.sqrt(dim)
    heads = [HeadParams(
        wq=ad.parameter(rng.uniform(-bound, bound, size=(dim, head_dim))),
        wk=ad.parameter(rng.uniform(-bound, bound, size=(dim, head_dim))),
        wv=ad.parameter(rng.uniform(-bound, bound, size=(dim, head_dim))),
    ) for _ in range(n_heads)]
    wo = ad.parameter(rng.uniform(-bound, bound, size=(n_heads * head_dim, dim)))
    return MultiHeadParams(heads=heads, wo=wo)


MASK_PENALTY = 1e9  # exp(-1e9) underflows to exactly 0 after the max shift


def attention(q: Tensor, k: Tensor, v: Tensor, key_mask: np.ndarray | None = None) -> Tensor:
    """softmax(Q K^T / sqrt(d_k)) V with optional masking of padded keys."""
    if q.shape[1] != k.shape[1]:
        raise ShapeError(f"query dim {q.shape} does not match key dim {k.shape}")
    if k.shape[0] != v.shape[0]:
        raise ShapeError(f"key count {k.shape} does not match value count {v.shape}")
    d_k = q.shape[1]
    logits = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / np.sqrt(d_k))
    if key_mask is not None:
        key_mask = np.asarray(key_mask, dtype=np.float32).reshape(1, -1)
        if key_mask.shape[1] != k.shape[0]:
            raise ShapeError("key mask length does not match key count")
        logits = ad.add_const(logits, (key_mask - 1.0) * MASK_PENALTY)
    weights = ad.softmax_rows(logits)
    return ad.matmul(weights, v)


def multi_head_attention(q_in: Tensor, kv_in: Tensor, params: MultiHeadParams,
                         key_mask: np.ndarray | None = None) -> Tensor:
    heads = []
    for h in params.heads:
        heads.append(attention(ad.matmul(q_in, h.wq), ad.matmul(kv_in, h.wk),
                               ad.matmul(kv_in, h.wv), key_mask=key_mask))
    joined = heads[0] if len(heads) == 1 else ad.concat_cols(heads)
    return ad.matmul(joined, params.wo)


@dataclass
class LgaParams:
    """Language-guided attention: per-head projections plus output map."""

    mha: MultiHeadParams

    def named(self, prefix: str = "lga") -> list[tuple[str, Tensor]]:
        return self.mha.named(prefix)


def init_lga_params(cfg: Config, rng: np.random.Generator) -> LgaParams:
    return LgaParams(mha=init_multi_head(cfg.embed_dim, cfg.lga_heads, rng))


def language_guided_attention(frames: Tensor, text_tokens: Tensor, params: LgaParams,
                              residual: bool = True) -> Tensor:
    """Cross-modal attention: frames query text tokens; output matches frames' shape."""
    if frames.shape[0] < 1 or text_tokens.shape[0] < 1:
        raise UsageError("need at least one frame and one text token")
    if frames.shape[1] != text_tokens.shape[1]:
        raise ShapeError(
            f"frame dim {frames.shape[1]} does not match text dim {text_tokens.shape[1]}")
    attended = multi_head_attention(frames, text_tokens, params.mha)
    if residual:
        return ad.add(attended, frames)
    return attended
