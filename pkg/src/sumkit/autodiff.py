"""Tape-based reverse-mode autodiff over small dense float32 tensors.

Values are stored in float32; reductions (dot products, means, variances,
softmax normalizers) accumulate in float64 before rounding back, which keeps
finite-difference gradient checks well below the 1e-3 tolerance used by the
test suite. The op vocabulary is intentionally small: just enough to express
cross-modal attention, a pre-norm encoder/decoder transformer, a position-wise
reconstructor and the training losses.

A backward pass walks the implicit tape (the parent links recorded by each
op) in reverse topological order. Graphs are cheap throwaway objects: build,
call :func:`backward` once, drop. They must not be shared across threads
mid-backward; tensors themselves are safe to read concurrently.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NumericError, ShapeError, UsageError

DTYPE = np.float32

LAYER_NORM_EPS = 1e-5
NORM_CLAMP = 1e-8


class Tensor:
    """Dense rank<=3 float32 array with an optional gradient buffer.

    Scalar reductions additionally stash their float64 accumulation in
    ``_exact`` so ``item()`` on a loss is not limited to float32 precision.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_exact")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.ascontiguousarray(np.asarray(data, dtype=DTYPE))
        if arr.ndim > 3:
            raise ShapeError(f"tensors are rank <= 3, got shape {arr.shape}")
        if arr.size == 0:
            raise ShapeError(f"tensors must have positive extents, got shape {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._exact: float | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() requires a single-element tensor, got shape {self.shape}")
        if self._exact is not None:
            return self._exact
        return float(self.data.reshape(-1)[0])

    def to_list(self):
        return self.data.tolist()

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g.astype(DTYPE, copy=False)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def assert_finite(t: Tensor, context: str = "tensor") -> None:
    if not np.isfinite(t.data).all():
        raise NumericError(f"non-finite values in {context}")


def _result(data: np.ndarray, parents: Sequence[Tensor],
            backward: Callable[[np.ndarray], None],
            exact: float | None = None) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = np.ascontiguousarray(data.astype(DTYPE, copy=False))
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    out._exact = exact
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _exact_of(t: Tensor) -> float | None:
    if t.data.size != 1:
        return None
    return t._exact if t._exact is not None else float(t.data.reshape(-1)[0])


def backward(root: Tensor) -> None:
    """Propagate gradients from a scalar root to every reachable parent.

    Gradients accumulate into ``.grad`` buffers, so zero them between
    optimizer steps, not between losses of the same batch.
    """
    if root.data.size != 1:
        raise UsageError("backward() expects a scalar (single-element) tensor")
    if not root.requires_grad:
        return
    # Iterative DFS; order is deterministic because parent tuples are ordered.
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    root._accumulate(np.ones_like(root.data))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# elementwise / structural ops
# ---------------------------------------------------------------------------


def _reduce_to_shape(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcasted gradient back down to the operand's shape."""
    if g.shape == shape:
        return g
    g64 = g.astype(np.float64)
    while g64.ndim > len(shape):
        g64 = g64.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g64.shape[axis] != 1:
            g64 = g64.sum(axis=axis, keepdims=True)
    return g64.astype(DTYPE)


def _broadcastable(a: tuple[int, ...], b: tuple[int, ...]) -> bool:
    try:
        np.broadcast_shapes(a, b)
        return True
    except ValueError:
        return False


def add(a: Tensor, b: Tensor) -> Tensor:
    if not _broadcastable(a.shape, b.shape):
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}")

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(_reduce_to_shape(g, a.shape))
        if b.requires_grad:
            b._accumulate(_reduce_to_shape(g, b.shape))

    exact = None
    if a.data.size == 1 and b.data.size == 1:
        ea, eb = _exact_of(a), _exact_of(b)
        if ea is not None and eb is not None:
            exact = ea + eb
    return _result(a.data + b.data, (a, b), back, exact=exact)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if not _broadcastable(a.shape, b.shape):
        raise ShapeError(f"sub: cannot broadcast {a.shape} with {b.shape}")

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(_reduce_to_shape(g, a.shape))
        if b.requires_grad:
            b._accumulate(-_reduce_to_shape(g, b.shape))

    exact = None
    if a.data.size == 1 and b.data.size == 1:
        ea, eb = _exact_of(a), _exact_of(b)
        if ea is not None and eb is not None:
            exact = ea - eb
    return _result(a.data - b.data, (a, b), back, exact=exact)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if not _broadcastable(a.shape, b.shape):
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}")

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(_reduce_to_shape(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_reduce_to_shape(g * a.data, b.shape))

    exact = None
    if a.data.size == 1 and b.data.size == 1:
        ea, eb = _exact_of(a), _exact_of(b)
        if ea is not None and eb is not None:
            exact = ea * eb
    return _result(a.data * b.data, (a, b), back, exact=exact)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g * np.float32(c))

    exact = None
    if a.data.size == 1:
        ea = _exact_of(a)
        if ea is not None:
            exact = ea * c
    return _result(a.data * np.float32(c), (a,), back, exact=exact)


def add_const(a: Tensor, const: np.ndarray) -> Tensor:
    """Add a non-learned array (positional encodings, attention masks)."""
    const = np.asarray(const, dtype=DTYPE)
    if not _broadcastable(a.shape, const.shape):
        raise ShapeError(f"add_const: cannot broadcast {a.shape} with {const.shape}")

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(_reduce_to_shape(g, a.shape))

    return _result(a.data + const, (a,), back)


def mul_const(a: Tensor, const: np.ndarray) -> Tensor:
    """Multiply by a non-learned array (dropout masks, off-diagonal masks)."""
    const = np.asarray(const, dtype=DTYPE)
    if not _broadcastable(a.shape, const.shape):
        raise ShapeError(f"mul_const: cannot broadcast {a.shape} with {const.shape}")

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(_reduce_to_shape(g * const, a.shape))

    return _result(a.data * const, (a,), back)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions disagree, {a.shape} x {b.shape}")
    a64 = a.data.astype(np.float64)
    b64 = b.data.astype(np.float64)

    def back(g: np.ndarray) -> None:
        g64 = g.astype(np.float64)
        if a.requires_grad:
            a._accumulate((g64 @ b64.T).astype(DTYPE))
        if b.requires_grad:
            b._accumulate((a64.T @ g64).astype(DTYPE))

    return _result((a64 @ b64).astype(DTYPE), (a, b), back)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose expects a 2-D tensor, got {a.shape}")

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(np.ascontiguousarray(g.T))

    return _result(np.ascontiguousarray(a.data.T), (a,), back)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    new = a.data.reshape(shape)

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g.reshape(a.shape))

    return _result(new, (a,), back)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise UsageError("concat_rows needs at least one tensor")
    sizes = [p.shape[0] for p in parts]

    def back(g: np.ndarray) -> None:
        offset = 0
        for p, n in zip(parts, sizes):
            if p.requires_grad:
                p._accumulate(g[offset:offset + n])
            offset += n

    return _result(np.concatenate([p.data for p in parts], axis=0), tuple(parts), back)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise UsageError("concat_cols needs at least one tensor")
    widths = [p.shape[1] for p in parts]

    def back(g: np.ndarray) -> None:
        offset = 0
        for p, w in zip(parts, widths):
            if p.requires_grad:
                p._accumulate(np.ascontiguousarray(g[:, offset:offset + w]))
            offset += w

    return _result(np.concatenate([p.data for p in parts], axis=1), tuple(parts), back)


def gather_rows(a: Tensor, indices: Sequence[int]) -> Tensor:
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1 or idx.size == 0:
        raise UsageError("gather_rows needs a non-empty 1-D index list")
    if idx.min() < 0 or idx.max() >= a.shape[0]:
        raise ShapeError(f"gather_rows: index out of range for {a.shape[0]} rows")

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            acc = np.zeros_like(a.data)
            np.add.at(acc, idx, g)
            a._accumulate(acc)

    return _result(a.data[idx], (a,), back)


# ---------------------------------------------------------------------------
# nonlinearities and normalizers
# ---------------------------------------------------------------------------


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g * mask)

    return _result(np.where(mask, a.data, np.float32(0.0)), (a,), back)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data.astype(np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate((g.astype(np.float64) * out * (1.0 - out)).astype(DTYPE))

    return _result(out.astype(DTYPE), (a,), back)


def softmax_rows(a: Tensor) -> Tensor:
    """Row softmax, always max-shifted; rows of the output sum to 1."""
    if a.data.ndim != 2:
        raise ShapeError(f"softmax_rows expects a 2-D tensor, got {a.shape}")
    x = a.data.astype(np.float64)
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            g64 = g.astype(np.float64)
            dot = (g64 * s).sum(axis=1, keepdims=True)
            a._accumulate((s * (g64 - dot)).astype(DTYPE))

    return _result(s.astype(DTYPE), (a,), back)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    """Per-row normalization to mean 0 / variance 1, then affine gain+bias."""
    if a.data.ndim != 2:
        raise ShapeError(f"layer_norm expects a 2-D tensor, got {a.shape}")
    d = a.shape[1]
    if gain.shape not in ((d,), (1, d)) or bias.shape not in ((d,), (1, d)):
        raise ShapeError(f"layer_norm: gain/bias must have {d} entries")
    x = a.data.astype(np.float64)
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LAYER_NORM_EPS)
    xhat = (x - mu) * inv
    gain64 = gain.data.reshape(1, d).astype(np.float64)
    bias64 = bias.data.reshape(1, d).astype(np.float64)

    def back(g: np.ndarray) -> None:
        g64 = g.astype(np.float64)
        if gain.requires_grad:
            gain._accumulate((g64 * xhat).sum(axis=0).reshape(gain.shape).astype(DTYPE))
        if bias.requires_grad:
            bias._accumulate(g64.sum(axis=0).reshape(bias.shape).astype(DTYPE))
        if a.requires_grad:
            dxhat = g64 * gain64
            term = dxhat - dxhat.mean(axis=1, keepdims=True) \
                - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
            a._accumulate((term * inv).astype(DTYPE))

    return _result((xhat * gain64 + bias64).astype(DTYPE), (a, gain, bias), back)


def l2_normalize_rows(a: Tensor, eps: float = NORM_CLAMP) -> Tensor:
    """Scale each row to unit length; rows shorter than eps divide by eps."""
    if a.data.ndim != 2:
        raise ShapeError(f"l2_normalize_rows expects a 2-D tensor, got {a.shape}")
    x = a.data.astype(np.float64)
    norms = np.sqrt((x * x).sum(axis=1, keepdims=True))
    clamped = np.maximum(norms, eps)
    y = x / clamped
    live = norms > eps  # below clamp the map is linear in x

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            g64 = g.astype(np.float64)
            proj = (g64 * y).sum(axis=1, keepdims=True)
            da = g64 / clamped - np.where(live, y * proj / clamped, 0.0)
            a._accumulate(da.astype(DTYPE))

    return _result(y.astype(DTYPE), (a,), back)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def sum_all(a: Tensor) -> Tensor:
    total = float(a.data.astype(np.float64).sum())

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(np.full_like(a.data, np.float32(g.reshape(-1)[0])))

    return _result(np.array([total]), (a,), back, exact=total)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    total = float(a.data.astype(np.float64).mean())

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(np.full_like(a.data, np.float32(g.reshape(-1)[0] / n)))

    return _result(np.array([total]), (a,), back, exact=total)


def sum_rows(a: Tensor) -> Tensor:
    """Row-wise sum of a 2-D tensor, shape (n, 1)."""
    if a.data.ndim != 2:
        raise ShapeError(f"sum_rows expects a 2-D tensor, got {a.shape}")
    s = a.data.astype(np.float64).sum(axis=1, keepdims=True)

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(np.broadcast_to(g, a.shape).astype(DTYPE))

    return _result(s.astype(DTYPE), (a,), back)


def sqrt(a: Tensor, eps: float = 1e-12) -> Tensor:
    """Elementwise square root of a nonnegative tensor; gradient clamped near 0."""
    x = np.maximum(a.data.astype(np.float64), 0.0)
    r = np.sqrt(x)

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate((g.astype(np.float64) / (2.0 * np.maximum(r, eps))).astype(DTYPE))

    return _result(r.astype(DTYPE), (a,), back)


def zeros(shape: tuple[int, ...]) -> Tensor:
    return Tensor(np.zeros(shape, dtype=DTYPE))


def constant(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=DTYPE))


def parameter(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=DTYPE), requires_grad=True)
