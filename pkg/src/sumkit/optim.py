"""Adam with decoupled weight decay, plus a finite-difference gradient check."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autodiff import DTYPE, Tensor, backward
from .errors import NumericError, ShapeError, UsageError

NamedParams = Sequence[tuple[str, Tensor]]


@dataclass
class AdamState:
    """Per-parameter moment buffers keyed by parameter name."""

    lr: float = 1e-4
    weight_decay: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def buffers_for(self, name: str, shape: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
        if name not in self.m:
            self.m[name] = np.zeros(shape, dtype=DTYPE)
            self.v[name] = np.zeros(shape, dtype=DTYPE)
        m, v = self.m[name], self.v[name]
        if m.shape != shape or v.shape != shape:
            raise ShapeError(f"adam moments for {name!r} have shape {m.shape}, parameter has {shape}")
        return m, v


def adam_step(params: NamedParams, state: AdamState) -> None:
    """One Adam update in place; missing gradients count as zero.

    Weight decay is decoupled: it shrinks the parameter directly instead of
    being folded into the gradient moments.
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter has {p.data.shape}")
        m, v = state.buffers_for(name, p.data.shape)
        m64 = state.beta1 * m.astype(np.float64) + (1.0 - state.beta1) * g.astype(np.float64)
        v64 = state.beta2 * v.astype(np.float64) + (1.0 - state.beta2) * (g.astype(np.float64) ** 2)
        mhat = m64 / bc1
        vhat = v64 / bc2
        update = state.lr * mhat / (np.sqrt(vhat) + state.eps) \
            + state.lr * state.weight_decay * p.data.astype(np.float64)
        p.data = (p.data.astype(np.float64) - update).astype(DTYPE)
        m[...] = m64.astype(DTYPE)
        v[...] = v64.astype(DTYPE)


def zero_grads(params: NamedParams) -> None:
    for _, p in params:
        p.grad = None


def finite_diff_check(f: Callable[..., Tensor], params: NamedParams,
                      epsilon: float = 1e-3, max_coords_per_tensor: int = 6,
                      seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f(params)`` must rebuild its graph on every call and return a scalar
    tensor. A random subset of coordinates per parameter is probed; the
    relative error uses max(1, |central difference|) in the denominator so
    vanishing gradients compare absolutely.
    """
    if not (1e-5 <= epsilon <= 1e-3):
        raise UsageError(f"epsilon must lie in [1e-5, 1e-3], got {epsilon}")
    zero_grads(params)
    loss = f(params)
    if not math.isfinite(loss.item()):
        raise NumericError("objective is non-finite at the evaluation point")
    backward(loss)
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for name, p in params}

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, p in params:
        flat = p.data.reshape(-1)
        n = flat.size
        count = min(max_coords_per_tensor, n)
        coords = rng.choice(n, size=count, replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = np.float32(orig + epsilon)
            hi = float(flat[i])
            f_hi = f(params).item()
            flat[i] = np.float32(orig - epsilon)
            lo = float(flat[i])
            f_lo = f(params).item()
            flat[i] = orig
            # use the actually-applied float32 step, not the nominal epsilon
            cd = (f_hi - f_lo) / (hi - lo)
            a = float(analytic[name].reshape(-1)[i])
            rel = abs(a - cd) / max(1.0, abs(cd))
            worst = max(worst, rel)
    zero_grads(params)
    return worst
