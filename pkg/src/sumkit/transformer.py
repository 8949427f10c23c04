"""Encoder-decoder transformer scoring every frame in (0, 1).

The attended frame embeddings enter the bottom of both stacks with sinusoidal
positional encodings added. Blocks are pre-norm residual; decoder
self-attention is NOT causally masked (scoring, not generation) and its
cross-attention reads the encoder output. Videos longer than ``window_len``
are cut into independent, contiguous, zero-padded windows; padded positions
are masked out of every attention and dropped from the output.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .attention import MultiHeadParams, init_multi_head, multi_head_attention
from .config import Config
from .errors import ConfigError, NumericError, UsageError


@functools.lru_cache(maxsize=32)
def _pos_encoding_cached(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(dim // 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * i / dim)
    pe = np.zeros((length, dim), dtype=np.float64)
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe.astype(np.float32)


def positional_encoding(length: int, dim: int) -> np.ndarray:
    """Sinusoidal table: PE(p, 2i) = sin(p / 10000^(2i/dim)), PE(p, 2i+1) = cos(...)."""
    if dim % 2 != 0:
        raise ConfigError(f"positional encoding needs an even dim, got {dim}")
    if length < 1 or dim < 2:
        raise UsageError(f"positional encoding needs length >= 1 and dim >= 2")
    return _pos_encoding_cached(length, dim)


# ---------------------------------------------------------------------------
# windowing
# ---------------------------------------------------------------------------


@dataclass
class PaddedWindow:
    """Fixed-length slice of a video, zero-padded past ``valid_len``."""

    features: np.ndarray  # window_len x D
    valid_len: int
    start: int            # frame offset of this window in the full video

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.features.shape[0], dtype=np.float32)
        m[:self.valid_len] = 1.0
        return m


def window_spans(n_frames: int, window_len: int) -> list[tuple[int, int]]:
    if window_len < 1:
        raise UsageError("window_len must be >= 1")
    return [(s, min(s + window_len, n_frames)) for s in range(0, n_frames, window_len)]


def window_video(frames: np.ndarray, window_len: int) -> list[PaddedWindow]:
    """Cut an N x D matrix into contiguous zero-padded windows."""
    windows = []
    for start, end in window_spans(frames.shape[0], window_len):
        chunk = frames[start:end]
        valid = end - start
        if valid < window_len:
            pad = np.zeros((window_len - valid, frames.shape[1]), dtype=frames.dtype)
            chunk = np.concatenate([chunk, pad], axis=0)
        windows.append(PaddedWindow(features=np.ascontiguousarray(chunk),
                                    valid_len=valid, start=start))
    return windows


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


@dataclass
class FeedForwardParams:
    w1: Tensor  # D x 4D
    b1: Tensor
    w2: Tensor  # 4D x D
    b2: Tensor

    def named(self, prefix: str) -> list[tuple[str, Tensor]]:
        return [(f"{prefix}.w1", self.w1), (f"{prefix}.b1", self.b1),
                (f"{prefix}.w2", self.w2), (f"{prefix}.b2", self.b2)]


@dataclass
class NormParams:
    gain: Tensor
    bias: Tensor

    def named(self, prefix: str) -> list[tuple[str, Tensor]]:
        return [(f"{prefix}.gain", self.gain), (f"{prefix}.bias", self.bias)]


@dataclass
class EncoderLayerParams:
    ln1: NormParams
    self_attn: MultiHeadParams
    ln2: NormParams
    ffn: FeedForwardParams

    def named(self, prefix: str) -> list[tuple[str, Tensor]]:
        return (self.ln1.named(f"{prefix}.ln1") + self.self_attn.named(f"{prefix}.self_attn")
                + self.ln2.named(f"{prefix}.ln2") + self.ffn.named(f"{prefix}.ffn"))


@dataclass
class DecoderLayerParams:
    ln1: NormParams
    self_attn: MultiHeadParams
    ln2: NormParams
    cross_attn: MultiHeadParams
    ln3: NormParams
    ffn: FeedForwardParams

    def named(self, prefix: str) -> list[tuple[str, Tensor]]:
        return (self.ln1.named(f"{prefix}.ln1") + self.self_attn.named(f"{prefix}.self_attn")
                + self.ln2.named(f"{prefix}.ln2") + self.cross_attn.named(f"{prefix}.cross_attn")
                + self.ln3.named(f"{prefix}.ln3") + self.ffn.named(f"{prefix}.ffn"))


@dataclass
class TransformerParams:
    encoder: list[EncoderLayerParams]
    decoder: list[DecoderLayerParams]
    final_ln: NormParams
    score_w: Tensor  # D x 1
    score_b: Tensor  # (1, 1)

    def named(self, prefix: str = "tf") -> list[tuple[str, Tensor]]:
        out: list[tuple[str, Tensor]] = []
        for i, layer in enumerate(self.encoder):
            out += layer.named(f"{prefix}.enc{i}")
        for i, layer in enumerate(self.decoder):
            out += layer.named(f"{prefix}.dec{i}")
        out += self.final_ln.named(f"{prefix}.final_ln")
        out += [(f"{prefix}.score_w", self.score_w), (f"{prefix}.score_b", self.score_b)]
        return out


def _init_norm(dim: int) -> NormParams:
    return NormParams(gain=ad.parameter(np.ones(dim)), bias=ad.parameter(np.zeros(dim)))


def _init_ffn(dim: int, rng: np.random.Generator) -> FeedForwardParams:
    hidden = 4 * dim
    return FeedForwardParams(
        w1=ad.parameter(rng.uniform(-1 / np.sqrt(dim), 1 / np.sqrt(dim), size=(dim, hidden))),
        b1=ad.parameter(np.zeros((1, hidden))),
        w2=ad.parameter(rng.uniform(-1 / np.sqrt(hidden), 1 / np.sqrt(hidden), size=(hidden, dim))),
        b2=ad.parameter(np.zeros((1, dim))),
    )


def init_transformer_params(cfg: Config, rng: np.random.Generator) -> TransformerParams:
    d = cfg.embed_dim
    encoder = [EncoderLayerParams(ln1=_init_norm(d),
                                  self_attn=init_multi_head(d, cfg.tf_heads, rng),
                                  ln2=_init_norm(d), ffn=_init_ffn(d, rng))
               for _ in range(cfg.tf_enc_layers)]
    decoder = [DecoderLayerParams(ln1=_init_norm(d),
                                  self_attn=init_multi_head(d, cfg.tf_heads, rng),
                                  ln2=_init_norm(d),
                                  cross_attn=init_multi_head(d, cfg.tf_heads, rng),
                                  ln3=_init_norm(d), ffn=_init_ffn(d, rng))
               for _ in range(cfg.tf_dec_layers)]
    return TransformerParams(
        encoder=encoder, decoder=decoder, final_ln=_init_norm(d),
        score_w=ad.parameter(rng.uniform(-1 / np.sqrt(d), 1 / np.sqrt(d), size=(d, 1))),
        score_b=ad.parameter(np.zeros((1, 1))),
    )


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------


def _norm(x: Tensor, p: NormParams) -> Tensor:
    return ad.layer_norm(x, p.gain, p.bias)


def _dropout(x: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    if rng is None or rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(np.float32) / (1.0 - rate)
    return ad.mul_const(x, keep)


def _ffn(x: Tensor, p: FeedForwardParams, rate: float, rng) -> Tensor:
    hidden = ad.relu(ad.add(ad.matmul(x, p.w1), p.b1))
    hidden = _dropout(hidden, rate, rng)
    return ad.add(ad.matmul(hidden, p.w2), p.b2)


def _check(x: Tensor, where: str) -> None:
    if not np.isfinite(x.data).all():
        raise NumericError(f"non-finite activations in {where}")


def score_window(fprime: Tensor, valid_len: int, params: TransformerParams, cfg: Config,
                 dropout_rng: np.random.Generator | None = None) -> tuple[Tensor, Tensor]:
    """Score one padded window; returns (scores (v,), decoder hidden (v, D)).

    Padded key positions are masked out of all three attentions and the
    padded rows are dropped before the score head output is returned.
    """
    length, dim = fprime.shape
    if not (1 <= valid_len <= length):
        raise UsageError(f"valid_len {valid_len} out of range for window of {length}")
    mask = np.zeros(length, dtype=np.float32)
    mask[:valid_len] = 1.0
    rate = cfg.dropout

    x = fprime
    if not cfg.disable_pos_enc:
        x = ad.add_const(x, positional_encoding(length, dim))

    enc = x
    for i, layer in enumerate(params.encoder):
        enc = ad.add(enc, _dropout(multi_head_attention(
            _norm(enc, layer.ln1), _norm(enc, layer.ln1), layer.self_attn, key_mask=mask),
            rate, dropout_rng))
        enc = ad.add(enc, _ffn(_norm(enc, layer.ln2), layer.ffn, rate, dropout_rng))
        _check(enc, f"encoder layer {i}")

    dec = x
    for i, layer in enumerate(params.decoder):
        dec = ad.add(dec, _dropout(multi_head_attention(
            _norm(dec, layer.ln1), _norm(dec, layer.ln1), layer.self_attn, key_mask=mask),
            rate, dropout_rng))
        dec = ad.add(dec, _dropout(multi_head_attention(
            _norm(dec, layer.ln2), enc, layer.cross_attn, key_mask=mask),
            rate, dropout_rng))
        dec = ad.add(dec, _ffn(_norm(dec, layer.ln3), layer.ffn, rate, dropout_rng))
        _check(dec, f"decoder layer {i}")

    hidden = _norm(dec, params.final_ln)
    if valid_len < length:
        hidden = ad.gather_rows(hidden, list(range(valid_len)))
    scores = ad.sigmoid(ad.add(ad.matmul(hidden, params.score_w), params.score_b))
    return ad.reshape(scores, (valid_len,)), hidden


def score_frames(fprime: Tensor, params: TransformerParams, cfg: Config) -> Tensor:
    """Score a whole video: window, score each window, concatenate valid parts."""
    n = fprime.shape[0]
    parts = []
    for start, end in window_spans(n, cfg.window_len):
        rows = ad.gather_rows(fprime, list(range(start, end)))
        valid = end - start
        if valid < cfg.window_len:
            pad = ad.constant(np.zeros((cfg.window_len - valid, fprime.shape[1])))
            rows = ad.concat_rows([rows, pad])
        scores, _ = score_window(rows, valid, params, cfg)
        parts.append(ad.reshape(scores, (valid, 1)))
    joined = parts[0] if len(parts) == 1 else ad.concat_rows(parts)
    return ad.reshape(joined, (n,))
