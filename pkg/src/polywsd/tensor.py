"""Dense float64 tensors with a reverse-mode differentiation tape.

Everything is 64-bit and row-major, ranks 0 through 3. Operations run
eagerly on numpy and, when a tape is active, append a record holding the
output, the inputs, and a closure computing the vector-Jacobian product.
``backward`` walks the records in exact reverse execution order and
accumulates adjoints additively, so a tensor consumed twice receives the
sum of both contributions.

A tape and its tensors belong to one execution; run independent tapes for
parallel work. Tensors are treated as immutable after creation except for
the ``grad`` slot (the optimizer mutates parameter ``data`` between tapes,
never during one).
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

from .errors import ContractError, OracleError, ShapeError

_MAX_RANK = 3
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Tensor:
    """A dense float64 array with shape, data, and an optional grad slot."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        # asarray keeps 0-d shapes; ascontiguousarray would promote them to 1-d.
        arr = np.asarray(data, dtype=np.float64, order="C")
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        if arr.ndim > _MAX_RANK:
            raise ShapeError(f"rank {arr.ndim} exceeds supported rank {_MAX_RANK}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Arithmetic sugar; scalars multiply via `scale`.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


# A record is (output, inputs, vjp) where vjp maps the output adjoint to
# one adjoint (or None) per input, in input order.
_Vjp = Callable[[np.ndarray], tuple]


class Tape:
    """Ordered record of executed ops, traversed in reverse by ``backward``."""

    def __init__(self):
        self._records: list[tuple[Tensor, tuple[Tensor, ...], _Vjp]] = []

    def __len__(self) -> int:
        return len(self._records)

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _ACTIVE.pop()


_ACTIVE: list[Tape] = []


def _emit(out_data: np.ndarray, inputs: tuple[Tensor, ...], vjp: _Vjp) -> Tensor:
    out = Tensor(out_data, requires_grad=any(t.requires_grad for t in inputs))
    if _ACTIVE and out.requires_grad:
        _ACTIVE[-1]._records.append((out, inputs, vjp))
    return out


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate ``grad`` on every requires_grad tensor reachable from ``loss``.

    ``loss`` must be a scalar produced through ``tape``. Adjoints accumulate
    additively; existing ``grad`` values are added to, not replaced.
    """
    if loss.shape != ():
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    adjoints: dict[int, np.ndarray] = {id(loss): np.ones(())}
    owners: dict[int, Tensor] = {id(loss): loss}
    for out, inputs, vjp in reversed(tape._records):
        out_adj = adjoints.get(id(out))
        if out_adj is None:
            continue
        for tensor, adj in zip(inputs, vjp(out_adj)):
            if adj is None:
                continue
            key = id(tensor)
            if key in adjoints:
                adjoints[key] = adjoints[key] + adj
            else:
                adjoints[key] = adj
                owners[key] = tensor
    for key, tensor in owners.items():
        if tensor.requires_grad:
            adj = adjoints[key]
            tensor.grad = adj.copy() if tensor.grad is None else tensor.grad + adj


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two rank-2 tensors."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = a.data @ b.data

    def vjp(g: np.ndarray):
        return g @ b.data.T, a.data.T @ g

    return _emit(out, (a, b), vjp)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose needs rank 2, got shape {a.shape}")
    return _emit(a.data.T, (a,), lambda g: (g.T,))


def _broadcast_pair(a: Tensor, b: Tensor) -> bool:
    """True if b (rank 1) broadcasts over the rows of a (rank 2)."""
    return a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; a rank-1 ``b`` broadcasts over the rows of a rank-2 ``a``."""
    if a.shape == b.shape:
        return _emit(a.data + b.data, (a, b), lambda g: (g, g))
    if _broadcast_pair(a, b):
        return _emit(a.data + b.data[None, :], (a, b), lambda g: (g, g.sum(axis=0)))
    raise ShapeError(f"add shape mismatch: {a.shape} + {b.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape == b.shape:
        return _emit(a.data - b.data, (a, b), lambda g: (g, -g))
    if _broadcast_pair(a, b):
        return _emit(a.data - b.data[None, :], (a, b), lambda g: (g, -g.sum(axis=0)))
    raise ShapeError(f"sub shape mismatch: {a.shape} - {b.shape}")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product; a rank-1 ``b`` broadcasts over the rows of a rank-2 ``a``."""
    if a.shape == b.shape:
        return _emit(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))
    if _broadcast_pair(a, b):
        out = a.data * b.data[None, :]

        def vjp(g: np.ndarray):
            return g * b.data[None, :], (g * a.data).sum(axis=0)

        return _emit(out, (a, b), vjp)
    raise ShapeError(f"mul shape mismatch: {a.shape} * {b.shape}")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _emit(a.data * c, (a,), lambda g: (g * c,))


def neg(a: Tensor) -> Tensor:
    return _emit(-a.data, (a,), lambda g: (-g,))


def _masked_shift_exp(x: np.ndarray, mask: np.ndarray | None):
    """Shared stable-softmax plumbing: masked x, per-row max, exp, row sums."""
    if mask is not None:
        if mask.shape != x.shape:
            raise ShapeError(f"mask shape {mask.shape} does not match {x.shape}")
        x = np.where(mask, -np.inf, x)
    mx = x.max(axis=1, keepdims=True)
    e = np.exp(x - mx)
    return x, mx, e, e.sum(axis=1, keepdims=True)


def row_softmax(m: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over each row, stabilized by per-row max subtraction.

    Entries where ``mask`` is True are excluded from the distribution and
    get probability 0; every row must keep at least one unmasked entry.
    """
    if m.data.ndim != 2 or m.data.size == 0:
        raise ShapeError(f"row_softmax needs a non-empty rank-2 tensor, got shape {m.shape}")
    _, _, e, s = _masked_shift_exp(m.data, mask)
    p = e / s

    def vjp(g: np.ndarray):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    return _emit(p, (m,), vjp)


def row_log_softmax(m: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Fused log of row_softmax; avoids log(0) for saturated rows.

    Masked entries come out as -inf and carry no gradient; consumers must
    only read unmasked positions.
    """
    if m.data.ndim != 2 or m.data.size == 0:
        raise ShapeError(f"row_log_softmax needs a non-empty rank-2 tensor, got shape {m.shape}")
    x, mx, e, s = _masked_shift_exp(m.data, mask)
    logp = (x - mx) - np.log(s)
    p = e / s

    def vjp(g: np.ndarray):
        gu = np.where(mask, 0.0, g) if mask is not None else g
        return (gu - p * gu.sum(axis=1, keepdims=True),)

    return _emit(logp, (m,), vjp)


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _emit(a.data.sum(), (a,), lambda g: (np.full(shape, float(g)),))


def mean_all(a: Tensor) -> Tensor:
    shape, n = a.shape, a.data.size
    return _emit(a.data.mean(), (a,), lambda g: (np.full(shape, float(g) / n),))


def gelu(a: Tensor) -> Tensor:
    """Gaussian-error linear unit (exact erf form)."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out = x * cdf

    def vjp(g: np.ndarray):
        return (g * (cdf + x * np.exp(-0.5 * x * x) * _INV_SQRT_2PI),)

    return _emit(out, (a,), vjp)


def layer_norm(a: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row to zero mean and unit variance (no affine part)."""
    if a.data.ndim != 2:
        raise ShapeError(f"layer_norm needs rank 2, got shape {a.shape}")
    mu = a.data.mean(axis=1, keepdims=True)
    var = ((a.data - mu) ** 2).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = (a.data - mu) * inv

    def vjp(g: np.ndarray):
        gm = g.mean(axis=1, keepdims=True)
        gym = (g * y).mean(axis=1, keepdims=True)
        return (inv * (g - gm - y * gym),)

    return _emit(y, (a,), vjp)


def embed(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Gather rows of ``table`` by integer id."""
    if table.data.ndim != 2:
        raise ShapeError(f"embed needs a rank-2 table, got shape {table.shape}")
    idx = np.asarray(list(ids), dtype=np.intp)
    if idx.size == 0:
        raise ShapeError("embed needs at least one id")
    if idx.min() < 0 or idx.max() >= table.shape[0]:
        raise ContractError(f"id out of range for table with {table.shape[0]} rows")
    out = table.data[idx]

    def vjp(g: np.ndarray):
        dt = np.zeros_like(table.data)
        np.add.at(dt, idx, g)
        return (dt,)

    return _emit(out, (table,), vjp)


def row(a: Tensor, i: int) -> Tensor:
    """Extract row ``i`` of a rank-2 tensor as a rank-1 tensor."""
    if a.data.ndim != 2:
        raise ShapeError(f"row needs rank 2, got shape {a.shape}")
    if not 0 <= i < a.shape[0]:
        raise IndexError(f"row {i} out of range for {a.shape[0]} rows")

    def vjp(g: np.ndarray):
        da = np.zeros_like(a.data)
        da[i] = g
        return (da,)

    return _emit(a.data[i].copy(), (a,), vjp)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate rank-1 or rank-2 tensors along ``axis``."""
    if not parts:
        raise ShapeError("concat needs at least one tensor")
    ndim = parts[0].data.ndim
    if ndim not in (1, 2) or axis >= ndim:
        raise ShapeError(f"concat on axis {axis} unsupported for rank {ndim}")
    if any(p.data.ndim != ndim for p in parts):
        raise ShapeError("concat parts must share rank")
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g: np.ndarray):
        return tuple(np.ascontiguousarray(piece) for piece in np.split(g, splits, axis=axis))

    return _emit(out, tuple(parts), vjp)


def replicate_rows(v: Tensor, m: int) -> Tensor:
    """Stack ``m`` copies of a rank-1 tensor into an (m, d) tensor."""
    if v.data.ndim != 1:
        raise ShapeError(f"replicate_rows needs rank 1, got shape {v.shape}")
    if m < 1:
        raise ContractError(f"replication count must be >= 1, got {m}")
    return _emit(np.tile(v.data, (m, 1)), (v,), lambda g: (g.sum(axis=0),))


def segment(a: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous slice [start, stop) of a rank-1 tensor."""
    if a.data.ndim != 1:
        raise ShapeError(f"segment needs rank 1, got shape {a.shape}")
    if not 0 <= start < stop <= a.shape[0]:
        raise ShapeError(f"segment [{start}, {stop}) invalid for length {a.shape[0]}")

    def vjp(g: np.ndarray):
        da = np.zeros_like(a.data)
        da[start:stop] = g
        return (da,)

    return _emit(a.data[start:stop].copy(), (a,), vjp)


def diagonal(m: Tensor) -> Tensor:
    """Main diagonal of a square rank-2 tensor."""
    if m.data.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"diagonal needs a square matrix, got shape {m.shape}")
    n = m.shape[0]

    def vjp(g: np.ndarray):
        dm = np.zeros_like(m.data)
        dm[np.arange(n), np.arange(n)] = g
        return (dm,)

    return _emit(m.data.diagonal().copy(), (m,), vjp)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    if int(np.prod(shape, dtype=np.int64)) != a.data.size:
        raise ShapeError(f"cannot reshape {a.shape} to {shape}")
    old = a.shape
    return _emit(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


# ---------------------------------------------------------------------------
# Gradient oracle
# ---------------------------------------------------------------------------


def finite_diff_check(
    f: Callable[[Tensor], Tensor],
    params: Tensor,
    h: float = 1e-4,
) -> float:
    """Compare tape gradients of a scalar function against central differences.

    Returns max over coordinates of |analytic - numeric| / max(1, |analytic|),
    with numeric = (f(p + h e_i) - f(p - h e_i)) / (2h). ``f`` must be
    deterministic; two evaluations at identical params that disagree raise
    OracleError.
    """
    if h <= 0:
        raise ContractError(f"finite-difference step must be positive, got {h}")
    probe_a = f(Tensor(params.data.copy())).item()
    probe_b = f(Tensor(params.data.copy())).item()
    if probe_a != probe_b and not (math.isnan(probe_a) and math.isnan(probe_b)):
        raise OracleError(f"function is not deterministic: {probe_a!r} != {probe_b!r}")

    base = Tensor(params.data.copy(), requires_grad=True)
    tape = Tape()
    with tape:
        loss = f(base)
    backward(loss, tape)
    analytic = (base.grad if base.grad is not None else np.zeros_like(base.data)).ravel()

    flat = params.data.ravel()
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + h
        f_plus = f(Tensor(bumped.reshape(params.shape))).item()
        bumped[i] = flat[i] - h
        f_minus = f(Tensor(bumped.reshape(params.shape))).item()
        numeric[i] = (f_plus - f_minus) / (2.0 * h)

    rel = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
    return float(rel.max()) if rel.size else 0.0
