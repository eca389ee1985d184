"""Dense tensors with taped reverse-mode differentiation.

A Tensor wraps a read-only numpy array (float32 by default, float64 for
high-precision gradient checks). Ops are module-level functions; while a
GradTape is active they append (output, vector-Jacobian closures) nodes so
backward() can replay adjoints in reverse order.

Numerical policy: matrix products and reductions accumulate in float64 and
cast back to the operand dtype, so float32 training stays reproducible while
sums do not lose low bits.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError

Array = np.ndarray
_VJP = Callable[[Array], Array]

_ALLOWED_DTYPES = (np.float32, np.float64)


class Tensor:
    """Immutable dense array. Shape and dtype are fixed at construction."""

    __slots__ = ("data",)

    def __init__(self, data, dtype=None):
        arr = np.asarray(data)
        if dtype is None:
            # keep float64 only when the caller handed in a typed array
            src = getattr(data, "dtype", None)
            dtype = src if src in _ALLOWED_DTYPES else np.float32
        if arr.ndim == 0:
            arr = arr.astype(dtype)  # ascontiguousarray would make this 1-d
        else:
            arr = np.ascontiguousarray(arr, dtype=dtype)
        arr.setflags(write=False)
        self.data = arr

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> Array:
        """Read-only view of the underlying array."""
        return self.data

    def item(self) -> float:
        if self.data.shape != ():
            raise ContractError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name})"


_STATE = threading.local()


def _tape_stack() -> list["GradTape"]:
    stack = getattr(_STATE, "stack", None)
    if stack is None:
        stack = []
        _STATE.stack = stack
    return stack


class GradTape:
    """Ordered record of ops, entered as a context manager.

    Only tensors reachable from watch()ed leaves are recorded; everything
    else is treated as a constant.
    """

    def __init__(self):
        self._nodes: list[tuple[Tensor, tuple[tuple[Tensor, _VJP], ...]]] = []
        self._tracked: set[int] = set()
        self._watched: list[Tensor] = []

    def watch(self, *tensors: Tensor) -> None:
        for t in tensors:
            if not isinstance(t, Tensor):
                raise ContractError(f"watch() takes Tensors, got {type(t).__name__}")
            if id(t) not in self._tracked:
                self._tracked.add(id(t))
                self._watched.append(t)

    def __enter__(self) -> "GradTape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise ContractError("GradTape exited out of order")
        stack.pop()


def _active() -> GradTape | None:
    stack = _tape_stack()
    return stack[-1] if stack else None


def _record(out: Tensor, *pulls: tuple[Tensor, _VJP]) -> Tensor:
    tape = _active()
    if tape is not None:
        live = tuple((t, fn) for (t, fn) in pulls if id(t) in tape._tracked)
        if live:
            tape._nodes.append((out, live))
            tape._tracked.add(id(out))
    return out


def backward(tape: GradTape, loss: Tensor) -> dict[Tensor, Array]:
    """Adjoints of a scalar loss with respect to every watched tensor.

    Unreached leaves get zero gradients of the right shape.
    """
    if loss.shape != ():
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, Array] = {id(loss): np.ones((), dtype=loss.dtype)}
    for out, pulls in reversed(tape._nodes):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for t, vjp in pulls:
            contrib = vjp(g)
            prev = grads.get(id(t))
            grads[id(t)] = contrib if prev is None else prev + contrib
    return {
        t: grads.get(id(t), np.zeros(t.shape, dtype=t.dtype))
        for t in tape._watched
    }


# ---------------------------------------------------------------- helpers

def _mm(a: Array, b: Array, dtype) -> Array:
    # 64-bit accumulation regardless of operand dtype
    out = np.matmul(a.astype(np.float64, copy=False), b.astype(np.float64, copy=False))
    return out.astype(dtype, copy=False)


def _same_dtype(a: Tensor, b: Tensor, op: str):
    if a.dtype != b.dtype:
        raise ContractError(f"{op}: mixed dtypes {a.dtype.name} vs {b.dtype.name}")
    return a.dtype


def _need_2d(t: Tensor, op: str) -> None:
    if len(t.shape) != 2:
        raise DimensionError(f"{op}: expected a matrix, got shape {t.shape}")


# ---------------------------------------------------------------- primitives

def matmul(a: Tensor, b: Tensor) -> Tensor:
    _need_2d(a, "matmul"); _need_2d(b, "matmul")
    dtype = _same_dtype(a, b, "matmul")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: inner dims differ, {a.shape} x {b.shape}")
    out = Tensor(_mm(a.data, b.data, dtype), dtype=dtype)
    return _record(
        out,
        (a, lambda g: _mm(g, b.data.T, dtype)),
        (b, lambda g: _mm(a.data.T, g, dtype)),
    )


def matvec(a: Tensor, v: Tensor) -> Tensor:
    _need_2d(a, "matvec")
    dtype = _same_dtype(a, v, "matvec")
    if len(v.shape) != 1 or a.shape[1] != v.shape[0]:
        raise DimensionError(f"matvec: shapes {a.shape} x {v.shape} do not chain")
    out = Tensor(_mm(a.data, v.data[:, None], dtype)[:, 0], dtype=dtype)
    return _record(
        out,
        (a, lambda g: np.outer(g, v.data).astype(dtype, copy=False)),
        (v, lambda g: _mm(a.data.T, g[:, None], dtype)[:, 0]),
    )


def add(a: Tensor, b: Tensor) -> Tensor:
    dtype = _same_dtype(a, b, "add")
    if a.shape != b.shape:
        raise DimensionError(f"add: shapes differ, {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data, dtype=dtype)
    return _record(out, (a, lambda g: g), (b, lambda g: g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    dtype = _same_dtype(a, b, "sub")
    if a.shape != b.shape:
        raise DimensionError(f"sub: shapes differ, {a.shape} vs {b.shape}")
    out = Tensor(a.data - b.data, dtype=dtype)
    return _record(out, (a, lambda g: g), (b, lambda g: -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    dtype = _same_dtype(a, b, "mul")
    if a.shape != b.shape:
        raise DimensionError(f"mul: shapes differ, {a.shape} vs {b.shape}")
    out = Tensor(a.data * b.data, dtype=dtype)
    return _record(out, (a, lambda g: g * b.data), (b, lambda g: g * a.data))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(a.data * a.dtype.type(c), dtype=a.dtype)
    return _record(out, (a, lambda g: g * a.dtype.type(c)))


def mul_scalar(a: Tensor, s: Tensor) -> Tensor:
    """Elementwise product with a scalar tensor (scalar stays differentiable)."""
    dtype = _same_dtype(a, s, "mul_scalar")
    if s.shape != ():
        raise DimensionError(f"mul_scalar: scalar operand has shape {s.shape}")
    out = Tensor(a.data * s.data, dtype=dtype)
    return _record(
        out,
        (a, lambda g: g * s.data),
        (s, lambda g: np.asarray((g.astype(np.float64) * a.data).sum(), dtype=dtype)),
    )


def add_row(mat: Tensor, vec: Tensor) -> Tensor:
    """Add a length-n vector to every row of an (m, n) matrix."""
    _need_2d(mat, "add_row")
    dtype = _same_dtype(mat, vec, "add_row")
    if len(vec.shape) != 1 or vec.shape[0] != mat.shape[1]:
        raise DimensionError(f"add_row: shapes {mat.shape} vs {vec.shape}")
    out = Tensor(mat.data + vec.data[None, :], dtype=dtype)
    return _record(
        out,
        (mat, lambda g: g),
        (vec, lambda g: g.sum(axis=0, dtype=np.float64).astype(dtype, copy=False)),
    )


def transpose(a: Tensor) -> Tensor:
    _need_2d(a, "transpose")
    out = Tensor(a.data.T, dtype=a.dtype)
    return _record(out, (a, lambda g: g.T))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        reshaped = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {a.shape} as {shape}") from None
    out = Tensor(reshaped, dtype=a.dtype)
    return _record(out, (a, lambda g: g.reshape(a.shape)))


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    _need_2d(a, "concat_cols"); _need_2d(b, "concat_cols")
    dtype = _same_dtype(a, b, "concat_cols")
    if a.shape[0] != b.shape[0]:
        raise DimensionError(f"concat_cols: row counts differ, {a.shape} vs {b.shape}")
    p = a.shape[1]
    out = Tensor(np.concatenate([a.data, b.data], axis=1), dtype=dtype)
    return _record(
        out,
        (a, lambda g: np.ascontiguousarray(g[:, :p])),
        (b, lambda g: np.ascontiguousarray(g[:, p:])),
    )


def broadcast_rows(vec: Tensor, rows: int) -> Tensor:
    """Tile a length-n vector into a (rows, n) matrix."""
    if len(vec.shape) != 1:
        raise DimensionError(f"broadcast_rows: expected a vector, got {vec.shape}")
    if rows < 1:
        raise DimensionError(f"broadcast_rows: rows must be >= 1, got {rows}")
    out = Tensor(np.tile(vec.data, (rows, 1)), dtype=vec.dtype)
    return _record(
        out,
        (vec, lambda g: g.sum(axis=0, dtype=np.float64).astype(vec.dtype, copy=False)),
    )


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(np.asarray(a.data.sum(dtype=np.float64), dtype=a.dtype))
    return _record(out, (a, lambda g: np.full(a.shape, g, dtype=a.dtype)))


def mean_all(a: Tensor) -> Tensor:
    if a.size == 0:
        raise DimensionError("mean_all: empty tensor")
    n = a.size
    out = Tensor(np.asarray(a.data.mean(dtype=np.float64), dtype=a.dtype))
    return _record(out, (a, lambda g: np.full(a.shape, g / n, dtype=a.dtype)))


def mean_rows(mat: Tensor) -> Tensor:
    """Column means of an (m, n) matrix, shape (n,)."""
    _need_2d(mat, "mean_rows")
    m = mat.shape[0]
    if m == 0:
        raise DimensionError("mean_rows: zero rows")
    out = Tensor(mat.data.mean(axis=0, dtype=np.float64).astype(mat.dtype))
    return _record(
        out,
        (mat, lambda g: np.tile((g / m).astype(mat.dtype, copy=False), (m, 1))),
    )


def dot(a: Tensor, b: Tensor) -> Tensor:
    dtype = _same_dtype(a, b, "dot")
    if len(a.shape) != 1 or a.shape != b.shape:
        raise DimensionError(f"dot: shapes {a.shape} vs {b.shape}")
    val = np.dot(a.data.astype(np.float64), b.data.astype(np.float64))
    out = Tensor(np.asarray(val, dtype=dtype))
    return _record(out, (a, lambda g: g * b.data), (b, lambda g: g * a.data))


def powc(a: Tensor, p: float) -> Tensor:
    """Elementwise power with a constant exponent."""
    p = float(p)
    out = Tensor(a.data ** a.dtype.type(p), dtype=a.dtype)
    return _record(out, (a, lambda g: g * p * a.data ** a.dtype.type(p - 1.0)))


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax, stabilized by subtracting each row max."""
    _need_2d(x, "softmax_rows")
    shifted = x.data.astype(np.float64) - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y64 = e / e.sum(axis=1, keepdims=True)
    out = Tensor(y64.astype(x.dtype))

    def pull(g: Array) -> Array:
        g64 = g.astype(np.float64)
        inner = (g64 * y64).sum(axis=1, keepdims=True)
        return (y64 * (g64 - inner)).astype(x.dtype, copy=False)

    return _record(out, (x, pull))


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row to zero mean / unit variance, then apply gain and bias.

    Variance is the population variance (divide by n); eps sits under the
    square root.
    """
    _need_2d(x, "layer_norm")
    d = x.shape[1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(
            f"layer_norm: feature width {d} but gain {gain.shape}, bias {bias.shape}")
    dtype = _same_dtype(x, gain, "layer_norm")
    _same_dtype(x, bias, "layer_norm")

    x64 = x.data.astype(np.float64)
    mu = x64.mean(axis=1, keepdims=True)
    centered = x64 - mu
    var = (centered ** 2).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = Tensor((xhat * gain.data + bias.data).astype(dtype))

    def pull_x(g: Array) -> Array:
        gh = g.astype(np.float64) * gain.data.astype(np.float64)
        term1 = gh.mean(axis=1, keepdims=True)
        term2 = (gh * xhat).mean(axis=1, keepdims=True)
        return (inv * (gh - term1 - xhat * term2)).astype(dtype, copy=False)

    def pull_gain(g: Array) -> Array:
        return (g.astype(np.float64) * xhat).sum(axis=0).astype(dtype, copy=False)

    def pull_bias(g: Array) -> Array:
        return g.sum(axis=0, dtype=np.float64).astype(dtype, copy=False)

    return _record(out, (x, pull_x), (gain, pull_gain), (bias, pull_bias))
