"""Tape-based reverse-mode differentiation over dense numpy tensors.

All model arithmetic flows through the primitives in this module. Running a
primitive inside a ``with Tape() as tape:`` block records it; ``backward``
walks the record in reverse and returns gradients for SGD. Without an active
tape the primitives are plain forward arithmetic, which is what evaluation
uses.

Conventions: float32 for training, float64 for gradient checking; a scalar is
a rank-0 tensor; embedding tables hold one row per vocabulary item. A tape and
the tensors it produced belong to a single thread (the active tape is
thread-local); independent tapes may run concurrently over shared read-only
parameters. Some primitives are fused compounds (LSTM cell pieces, attention
logits, hinge) so a training step stays a few hundred tape entries instead of
thousands; each stashes its forward intermediates on the tape entry so the
backward rule never recomputes them.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    """Inputs do not conform to a primitive's shape contract."""


class TapeError(RuntimeError):
    """Tape misuse: loss not on the tape, or replay divergence."""


class Tensor:
    """A dense numpy array plus parameter bookkeeping.

    Tensors are created either as leaves (parameters, constants) or as the
    output of a primitive. Parameter tensors are the only ones ``backward``
    reports gradients for, and the only ones ``sgd_step`` mutates.
    """

    __slots__ = ("data", "is_param", "name", "_tape")

    def __init__(self, data, dtype=None, is_param: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.is_param = is_param
        self.name = name
        self._tape = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"


def parameter(data, name: str, dtype=None) -> Tensor:
    """Wrap ``data`` as a named trainable parameter."""
    return Tensor(data, dtype=dtype, is_param=True, name=name)


class _Op:
    __slots__ = ("name", "forward", "backward")

    def __init__(self, name: str, forward: Callable, backward: Callable):
        self.name = name
        self.forward = forward
        self.backward = backward


_TLS = threading.local()


class Tape:
    """Ordered record of primitive applications.

    Entries are appended in execution order, so inputs always precede the
    operations that consume them. ``replay`` re-runs every recorded forward
    and verifies bit-identical outputs; it is only meaningful while the
    recorded input data is unchanged (i.e. before any SGD step). ``memo`` is
    scratch space for callers that assemble the same derived tensor many
    times within one tape (e.g. stacked gate weights).
    """

    __slots__ = ("entries", "memo", "_prev")

    def __init__(self):
        self.entries: list[tuple] = []
        self.memo: dict = {}

    def __enter__(self) -> "Tape":
        self._prev = getattr(_TLS, "current", None)
        _TLS.current = self
        return self

    def __exit__(self, *exc) -> None:
        _TLS.current = self._prev

    def __len__(self) -> int:
        return len(self.entries)

    def contains(self, t: Tensor) -> bool:
        return t._tape is self

    def replay(self) -> None:
        """Recompute every entry and check outputs bit-for-bit."""
        for op, inputs, out, meta in self.entries:
            redone = op.forward(tuple(t.data for t in inputs), meta)
            if not np.array_equal(redone, out.data):
                raise TapeError(f"replay of {op.name} diverged from recorded output")


def active_tape() -> Tape | None:
    return getattr(_TLS, "current", None)


def _apply(op: _Op, tensors: tuple, meta=None) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = op.forward(tuple(t.data for t in tensors), meta)
    out.is_param = False
    out.name = None
    tape = getattr(_TLS, "current", None)
    out._tape = tape
    if tape is not None:
        tape.entries.append((op, tensors, out, meta))
    return out


class GradientSet:
    """Gradients keyed by parameter tensor; each matches its parameter's shape."""

    __slots__ = ("_grads",)

    def __init__(self, grads: dict):
        self._grads = grads

    def __getitem__(self, param: Tensor) -> np.ndarray:
        return self._grads[param]

    def __contains__(self, param: Tensor) -> bool:
        return param in self._grads

    def __len__(self) -> int:
        return len(self._grads)

    def items(self):
        return self._grads.items()


def backward(tape: Tape, loss: Tensor, params: Iterable[Tensor] = ()) -> GradientSet:
    """Reverse-mode sweep of ``tape`` from scalar ``loss``.

    Returns d(loss)/d(p) for every tensor in ``params``; parameters the
    forward pass never touched get explicit zero gradients.
    """
    if not tape.contains(loss):
        raise TapeError("backward: loss tensor was not produced on this tape")
    if loss.data.shape != ():
        raise ShapeError(f"backward: loss must be a scalar, got shape {loss.data.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.data.dtype)}
    owned: set[int] = set()  # keys whose arrays we allocated and may add into
    pop = grads.pop
    get = grads.get
    for op, inputs, out, meta in reversed(tape.entries):
        g = pop(id(out), None)
        if g is None:
            continue
        in_grads = op.backward(g, tuple(t.data for t in inputs), out.data, meta)
        for t, ig in zip(inputs, in_grads):
            if ig is None:
                continue
            key = id(t)
            prev = get(key)
            if prev is None:
                grads[key] = ig
            elif key in owned:
                prev += ig
            else:
                grads[key] = prev + ig
                owned.add(key)
    result = {}
    for p in params:
        g = grads.get(id(p))
        result[p] = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=p.data.dtype)
    return GradientSet(result)


def sgd_step(params: Sequence[Tensor], grads: GradientSet, learning_rate: float) -> Sequence[Tensor]:
    """In-place ``p -= learning_rate * grad`` for every parameter."""
    if learning_rate <= 0:
        raise ValueError(f"sgd_step: learning rate must be positive, got {learning_rate}")
    for p in params:
        g = grads[p]
        if g.shape != p.data.shape:
            raise ShapeError(
                f"sgd_step: gradient shape {g.shape} does not match parameter "
                f"{p.name or '<unnamed>'} shape {p.data.shape}"
            )
        p.data -= learning_rate * g
    return params


def l2_normalize_rows(m: Tensor) -> Tensor:
    """Scale every nonzero row of a rank-2 tensor to unit Euclidean norm."""
    if m.data.ndim != 2:
        raise ShapeError(f"l2_normalize_rows: expected rank-2, got shape {m.data.shape}")
    norms = np.sqrt((m.data * m.data).sum(axis=1, keepdims=True))
    safe = np.where(norms == 0.0, 1.0, norms)
    return Tensor((m.data / safe).astype(m.data.dtype, copy=False))


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def _shapes(arrs) -> str:
    return ", ".join(str(a.shape) for a in arrs)


def _pair_check(name: str, a: Tensor, b: Tensor) -> None:
    # same shape, or either side a scalar (which broadcasts)
    if a.data.shape != b.data.shape and a.data.shape != () and b.data.shape != ():
        raise ShapeError(f"{name}: incompatible shapes {a.data.shape} and {b.data.shape}")


def _reduce_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    return g if g.shape == shape else np.asarray(g.sum())


_ADD = _Op(
    "add",
    lambda arrs, meta: arrs[0] + arrs[1],
    lambda g, arrs, out, meta: (_reduce_to(g, arrs[0].shape), _reduce_to(g, arrs[1].shape)),
)
_SUB = _Op(
    "sub",
    lambda arrs, meta: arrs[0] - arrs[1],
    lambda g, arrs, out, meta: (_reduce_to(g, arrs[0].shape), _reduce_to(-g, arrs[1].shape)),
)
_MUL = _Op(
    "mul",
    lambda arrs, meta: arrs[0] * arrs[1],
    lambda g, arrs, out, meta: (
        _reduce_to(g * arrs[1], arrs[0].shape),
        _reduce_to(g * arrs[0], arrs[1].shape),
    ),
)
_SCALE = _Op(
    "scale",
    lambda arrs, meta: arrs[0] * meta,
    lambda g, arrs, out, meta: (g * meta,),
)
_ADD_CONST = _Op(
    "add_const",
    lambda arrs, meta: arrs[0] + meta,
    lambda g, arrs, out, meta: (g,),
)
_ADD_N = _Op(
    "add_n",
    lambda arrs, meta: np.asarray(sum(arrs[1:], start=arrs[0].copy())),
    lambda g, arrs, out, meta: (g,) * len(arrs),
)
_MATVEC = _Op(
    "matvec",
    lambda arrs, meta: arrs[0] @ arrs[1],
    lambda g, arrs, out, meta: (np.outer(g, arrs[1]), arrs[0].T @ g),
)
_VECMAT = _Op(
    "vecmat",
    lambda arrs, meta: arrs[0] @ arrs[1],
    lambda g, arrs, out, meta: (arrs[1] @ g, np.outer(arrs[0], g)),
)
_DOT = _Op(
    "dot",
    lambda arrs, meta: np.asarray(arrs[0] @ arrs[1]),
    lambda g, arrs, out, meta: (g * arrs[1], g * arrs[0]),
)


def _split_like(g, arrs):
    pieces = []
    start = 0
    for a in arrs:
        pieces.append(g[start:start + a.shape[0]])
        start += a.shape[0]
    return tuple(pieces)


_CONCAT = _Op("concat", lambda arrs, meta: np.concatenate(arrs),
              lambda g, arrs, out, meta: _split_like(g, arrs))
_STACK_ROWS = _Op(
    "stack_rows",
    lambda arrs, meta: np.stack(arrs),
    lambda g, arrs, out, meta: tuple(g[i] for i in range(len(arrs))),
)
_VSTACK = _Op("vstack", lambda arrs, meta: np.concatenate(arrs, axis=0),
              lambda g, arrs, out, meta: _split_like(g, arrs))


def _row_bwd(g, arrs, out, meta):
    z = np.zeros_like(arrs[0])
    z[meta] = g
    return (z,)


_ROW = _Op("row", lambda arrs, meta: arrs[0][meta].copy(), _row_bwd)


def _segment_bwd(g, arrs, out, meta):
    z = np.zeros_like(arrs[0])
    z[meta[0]:meta[0] + meta[1]] = g
    return (z,)


_SEGMENT = _Op("segment", lambda arrs, meta: arrs[0][meta[0]:meta[0] + meta[1]].copy(),
               _segment_bwd)


def _take_rows_bwd(g, arrs, out, meta):
    z = np.zeros_like(arrs[0])
    np.add.at(z, meta, g)
    return (z,)


_TAKE_ROWS = _Op("take_rows", lambda arrs, meta: arrs[0][meta, :], _take_rows_bwd)


def _pool_rows_bwd(g, arrs, out, meta):
    z = np.zeros_like(arrs[0])
    np.add.at(z, meta, g / len(meta))
    return (z,)


# fused mean of selected table rows (the aspect-embedding lookup+average)
_POOL_ROWS = _Op("pool_rows", lambda arrs, meta: arrs[0][meta, :].mean(axis=0), _pool_rows_bwd)


def _pool_group_sum_fwd(arrs, meta):
    table = arrs[0]
    out = None
    for ids in meta:
        pooled = table[ids[0]] if ids.size == 1 else table[ids, :].mean(axis=0)
        out = pooled.copy() if out is None else out + pooled
    return out


def _pool_group_sum_bwd(g, arrs, out, meta):
    z = np.zeros_like(arrs[0])
    for ids in meta:
        np.add.at(z, ids, g / len(ids))
    return (z,)


# fused sum over several row-pools of one table (a candidate's four aspects)
_POOL_GROUP_SUM = _Op("pool_group_sum", _pool_group_sum_fwd, _pool_group_sum_bwd)

_MEAN_ROWS = _Op(
    "mean_rows",
    lambda arrs, meta: arrs[0].mean(axis=0),
    lambda g, arrs, out, meta: (np.broadcast_to(g / arrs[0].shape[0], arrs[0].shape).copy(),),
)
_SUM_COLS = _Op(
    "sum_cols",
    lambda arrs, meta: arrs[0].sum(axis=1),
    lambda g, arrs, out, meta: (np.broadcast_to(g[:, None], arrs[0].shape).copy(),),
)
_TANH = _Op(
    "tanh",
    lambda arrs, meta: np.tanh(arrs[0]),
    lambda g, arrs, out, meta: (g * (1.0 - out * out),),
)


def _sigmoid_raw(x: np.ndarray) -> np.ndarray:
    # clip keeps exp in range; the clipped tail is saturated anyway
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60.0, 60.0)))


_SIGMOID = _Op(
    "sigmoid",
    lambda arrs, meta: _sigmoid_raw(arrs[0]),
    lambda g, arrs, out, meta: (g * out * (1.0 - out),),
)
_EXP = _Op(
    "exp",
    lambda arrs, meta: np.exp(arrs[0]),
    lambda g, arrs, out, meta: (g * out,),
)
_RELU = _Op(
    "relu",
    lambda arrs, meta: np.maximum(arrs[0], 0),
    lambda g, arrs, out, meta: (g * (arrs[0] > 0),),
)
_SUM_ALL = _Op(
    "sum_all",
    lambda arrs, meta: np.asarray(arrs[0].sum()),
    lambda g, arrs, out, meta: (np.broadcast_to(g, arrs[0].shape).copy(),),
)
_MEAN_ALL = _Op(
    "mean_all",
    lambda arrs, meta: np.asarray(arrs[0].mean()),
    lambda g, arrs, out, meta: (np.broadcast_to(g / arrs[0].size, arrs[0].shape).copy(),),
)


def _softmax_raw(v: np.ndarray) -> np.ndarray:
    e = np.exp(v - v.max())
    return e / e.sum()


_SOFTMAX = _Op(
    "softmax",
    lambda arrs, meta: _softmax_raw(arrs[0]),
    lambda g, arrs, out, meta: (out * (g - g @ out),),
)


def _att_logits_fwd(arrs, meta):
    states, aspect, w, b = arrs
    n, d = states.shape
    joined = np.empty((n, 2 * d), dtype=states.dtype)
    joined[:, :d] = states
    joined[:, d:] = aspect
    t = np.tanh(joined)
    meta["saved"] = t
    return t @ w + b


def _att_logits_bwd(g, arrs, out, meta):
    states, aspect, w, b = arrs
    d = states.shape[1]
    t = meta["saved"]
    dt = np.outer(g, w) * (1.0 - t * t)
    return (dt[:, :d], dt[:, d:].sum(axis=0), t.T @ g, np.asarray(g.sum()))


# fused relevance logits: tanh([state_row ; aspect]) . w + b, for every row
_ATT_LOGITS = _Op("att_logits", _att_logits_fwd, _att_logits_bwd)


def _lstm_step_fwd(arrs, meta):
    wx, inputs, wh, hc_prev, b = arrs
    hidden = hc_prev.shape[0] // 2
    x = inputs[meta["j"]]
    z = wx @ x + wh @ hc_prev[:hidden] + b
    gates = _sigmoid_raw(z[:3 * hidden])  # [input, forget, output] in one call
    cand = np.tanh(z[3 * hidden:])
    c = gates[hidden:2 * hidden] * hc_prev[hidden:] + gates[:hidden] * cand
    tc = np.tanh(c)
    meta["saved"] = (gates, cand, tc)
    out = np.empty_like(hc_prev)
    out[:hidden] = gates[2 * hidden:] * tc
    out[hidden:] = c
    return out


def _lstm_step_bwd(g, arrs, out, meta):
    wx, inputs, wh, hc_prev, b = arrs
    hidden = hc_prev.shape[0] // 2
    gates, cand, tc = meta["saved"]
    i, f, o = gates[:hidden], gates[hidden:2 * hidden], gates[2 * hidden:]
    dgates = gates * (1.0 - gates)
    gh = g[:hidden]
    dc = g[hidden:] + gh * o * (1.0 - tc * tc)
    gz = np.empty(4 * hidden, dtype=g.dtype)
    gz[:hidden] = dc * cand
    gz[hidden:2 * hidden] = dc * hc_prev[hidden:]
    gz[2 * hidden:3 * hidden] = gh * tc
    gz[:3 * hidden] *= dgates
    gz[3 * hidden:] = dc * i * (1.0 - cand * cand)
    ginputs = np.zeros_like(inputs)
    ginputs[meta["j"]] = wx.T @ gz
    ghc_prev = np.empty_like(hc_prev)
    ghc_prev[:hidden] = wh.T @ gz
    ghc_prev[hidden:] = dc * f
    return (np.outer(gz, inputs[meta["j"]]), ginputs, np.outer(gz, hc_prev[:hidden]), ghc_prev, gz)


# one full recurrence step over a packed [hidden ; cell] state vector:
#   z = wx @ inputs[j] + wh @ h + b, gates [input, forget, output, candidate],
#   c' = f*c + i*tanh(z_cand), h' = o*tanh(c')
_LSTM_STEP = _Op("lstm_step", _lstm_step_fwd, _lstm_step_bwd)


def _paired_states_fwd(arrs, meta):
    n, hidden = meta
    out = np.empty((n, 2 * hidden), dtype=arrs[0].dtype)
    for j in range(n):
        out[j, :hidden] = arrs[j][:hidden]
        out[j, hidden:] = arrs[n + j][:hidden]
    return out


def _paired_states_bwd(g, arrs, out, meta):
    n, hidden = meta
    grads = []
    for j in range(n):
        z = np.zeros_like(arrs[j])
        z[:hidden] = g[j, :hidden]
        grads.append(z)
    for j in range(n):
        z = np.zeros_like(arrs[n + j])
        z[:hidden] = g[j, hidden:]
        grads.append(z)
    return tuple(grads)


# token-state matrix from packed step outputs: row j is the forward hidden
# half of step j next to the backward hidden half of step j
_PAIRED_STATES = _Op("paired_states", _paired_states_fwd, _paired_states_bwd)


def _margin_hinge_fwd(arrs, meta):
    s_pos, s_neg = arrs
    margin, weight = meta
    return np.asarray(max(0.0, margin + float(s_neg) - float(s_pos)) * weight,
                      dtype=s_pos.dtype)


def _margin_hinge_bwd(g, arrs, out, meta):
    s_pos, s_neg = arrs
    margin, weight = meta
    if margin + float(s_neg) - float(s_pos) <= 0.0:
        return (np.zeros_like(s_pos), np.zeros_like(s_neg))
    return (np.asarray(-weight * g, dtype=s_pos.dtype), np.asarray(weight * g, dtype=s_neg.dtype))


# fused pairwise hinge: weight * max(0, margin + s_neg - s_pos)
_MARGIN_HINGE = _Op("margin_hinge", _margin_hinge_fwd, _margin_hinge_bwd)


# ---------------------------------------------------------------------------
# public wrappers (shape checks happen here, once, at record time)
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _pair_check("add", a, b)
    return _apply(_ADD, (a, b))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _pair_check("sub", a, b)
    return _apply(_SUB, (a, b))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _pair_check("mul", a, b)
    return _apply(_MUL, (a, b))


def scale(a: Tensor, factor: float) -> Tensor:
    return _apply(_SCALE, (a,), float(factor))


def add_const(a: Tensor, constant: float) -> Tensor:
    return _apply(_ADD_CONST, (a,), float(constant))


def add_n(*tensors: Tensor) -> Tensor:
    if not tensors:
        raise ShapeError("add_n: needs at least one input")
    shape = tensors[0].data.shape
    for t in tensors[1:]:
        if t.data.shape != shape:
            raise ShapeError(f"add_n: mixed shapes {_shapes([x.data for x in tensors])}")
    return _apply(_ADD_N, tensors)


def matvec(a: Tensor, x: Tensor) -> Tensor:
    if a.data.ndim != 2 or x.data.ndim != 1 or a.data.shape[1] != x.data.shape[0]:
        raise ShapeError(f"matvec: cannot multiply {a.data.shape} by {x.data.shape}")
    return _apply(_MATVEC, (a, x))


def vecmat(v: Tensor, a: Tensor) -> Tensor:
    if v.data.ndim != 1 or a.data.ndim != 2 or v.data.shape[0] != a.data.shape[0]:
        raise ShapeError(f"vecmat: cannot multiply {v.data.shape} by {a.data.shape}")
    return _apply(_VECMAT, (v, a))


def dot(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 1 or a.data.shape != b.data.shape:
        raise ShapeError(f"dot: expected equal-length vectors, got {a.data.shape} and {b.data.shape}")
    return _apply(_DOT, (a, b))


def concat(*parts: Tensor) -> Tensor:
    if not parts:
        raise ShapeError("concat: needs at least one input")
    for p in parts:
        if p.data.ndim != 1:
            raise ShapeError(f"concat: expected rank-1 inputs, got {_shapes([x.data for x in parts])}")
    return _apply(_CONCAT, parts)


def stack_rows(*rows: Tensor) -> Tensor:
    if not rows:
        raise ShapeError("stack_rows: needs at least one input")
    width = rows[0].data.shape
    for r in rows:
        if r.data.ndim != 1 or r.data.shape != width:
            raise ShapeError(f"stack_rows: rows must share one length, got {_shapes([x.data for x in rows])}")
    return _apply(_STACK_ROWS, rows)


def vstack(*mats: Tensor) -> Tensor:
    if not mats:
        raise ShapeError("vstack: needs at least one input")
    cols = mats[0].data.shape
    for m in mats:
        if m.data.ndim != 2 or m.data.shape[1] != cols[1]:
            raise ShapeError(f"vstack: column counts differ, got {_shapes([x.data for x in mats])}")
    return _apply(_VSTACK, mats)


def row(a: Tensor, index: int) -> Tensor:
    if a.data.ndim != 2 or not 0 <= index < a.data.shape[0]:
        raise ShapeError(f"row: index {index} invalid for shape {a.data.shape}")
    return _apply(_ROW, (a,), index)


def segment(v: Tensor, start: int, length: int) -> Tensor:
    if v.data.ndim != 1 or start < 0 or length < 1 or start + length > v.data.shape[0]:
        raise ShapeError(f"segment: [{start}:{start + length}] invalid for shape {v.data.shape}")
    return _apply(_SEGMENT, (v,), (start, length))


def _check_ids(name: str, table: Tensor, ids) -> np.ndarray:
    if table.data.ndim != 2:
        raise ShapeError(f"{name}: expected rank-2 table, got {table.data.shape}")
    idx = np.asarray(ids, dtype=np.intp)
    if idx.ndim != 1 or idx.size == 0:
        raise ShapeError(f"{name}: ids must be a non-empty 1-d sequence")
    if idx.min() < 0 or idx.max() >= table.data.shape[0]:
        raise ShapeError(f"{name}: id out of range for table with {table.data.shape[0]} rows: {list(ids)}")
    return idx


def take_rows(table: Tensor, ids: Sequence[int]) -> Tensor:
    return _apply(_TAKE_ROWS, (table,), _check_ids("take_rows", table, ids))


def pool_rows(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Mean of the selected table rows (one fused lookup-and-average)."""
    return _apply(_POOL_ROWS, (table,), _check_ids("pool_rows", table, ids))


def pool_group_sum(table: Tensor, groups: Sequence[Sequence[int]]) -> Tensor:
    """Sum over groups of the mean of each group's table rows."""
    if not groups:
        raise ShapeError("pool_group_sum: needs at least one id group")
    meta = tuple(_check_ids("pool_group_sum", table, ids) for ids in groups)
    return _apply(_POOL_GROUP_SUM, (table,), meta)


def mean_rows(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"mean_rows: expected rank-2, got {a.data.shape}")
    return _apply(_MEAN_ROWS, (a,))


def sum_cols(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"sum_cols: expected rank-2, got {a.data.shape}")
    return _apply(_SUM_COLS, (a,))


def tanh(a: Tensor) -> Tensor:
    return _apply(_TANH, (a,))


def sigmoid(a: Tensor) -> Tensor:
    return _apply(_SIGMOID, (a,))


def exp(a: Tensor) -> Tensor:
    return _apply(_EXP, (a,))


def relu(a: Tensor) -> Tensor:
    return _apply(_RELU, (a,))


def sum_all(a: Tensor) -> Tensor:
    return _apply(_SUM_ALL, (a,))


def mean_all(a: Tensor) -> Tensor:
    return _apply(_MEAN_ALL, (a,))


def softmax(v: Tensor) -> Tensor:
    """Max-shifted softmax over a rank-1 tensor."""
    if v.data.ndim != 1 or v.data.shape[0] == 0:
        raise ShapeError(f"softmax: expected a non-empty vector, got shape {v.data.shape}")
    return _apply(_SOFTMAX, (v,))


def att_logits(states: Tensor, aspect: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Per-row relevance logits: tanh([state_row ; aspect]) . w + b."""
    if states.data.ndim != 2 or aspect.data.ndim != 1 or states.data.shape[1] != aspect.data.shape[0]:
        raise ShapeError(f"att_logits: states {states.data.shape} vs aspect {aspect.data.shape}")
    if w.data.shape != (2 * aspect.data.shape[0],):
        raise ShapeError(f"att_logits: weight shape {w.data.shape} must be (2*{aspect.data.shape[0]},)")
    if b.data.shape != ():
        raise ShapeError(f"att_logits: offset must be scalar, got {b.data.shape}")
    return _apply(_ATT_LOGITS, (states, aspect, w, b), {})


def lstm_step(wx: Tensor, inputs: Tensor, wh: Tensor, hc_prev: Tensor, b: Tensor,
              index: int) -> Tensor:
    """One fused recurrence step over a packed [hidden ; cell] state."""
    hidden = hc_prev.data.shape[0] // 2
    if (
        wx.data.ndim != 2
        or inputs.data.ndim != 2
        or wh.data.ndim != 2
        or not 0 <= index < inputs.data.shape[0]
        or hc_prev.data.shape != (2 * hidden,)
        or wx.data.shape != (4 * hidden, inputs.data.shape[1])
        or wh.data.shape != (4 * hidden, hidden)
        or b.data.shape != (4 * hidden,)
    ):
        raise ShapeError(
            "lstm_step: incompatible shapes "
            f"wx={wx.data.shape} inputs={inputs.data.shape}[{index}] "
            f"wh={wh.data.shape} hc={hc_prev.data.shape} b={b.data.shape}"
        )
    return _apply(_LSTM_STEP, (wx, inputs, wh, hc_prev, b), {"j": index})


def paired_states(fwd: Sequence[Tensor], bwd: Sequence[Tensor], hidden: int) -> Tensor:
    """n x 2*hidden matrix pairing the hidden halves of two packed state runs."""
    if not fwd or len(fwd) != len(bwd):
        raise ShapeError(f"paired_states: need equal nonzero runs, got {len(fwd)} and {len(bwd)}")
    for t in (*fwd, *bwd):
        if t.data.shape != (2 * hidden,):
            raise ShapeError(
                f"paired_states: expected packed shape {(2 * hidden,)}, got {t.data.shape}"
            )
    return _apply(_PAIRED_STATES, (*fwd, *bwd), (len(fwd), hidden))


def margin_hinge(s_pos: Tensor, s_neg: Tensor, margin: float, weight: float = 1.0) -> Tensor:
    """Fused pairwise hinge: weight * max(0, margin + s_neg - s_pos)."""
    if s_pos.data.shape != () or s_neg.data.shape != ():
        raise ShapeError(
            f"margin_hinge: scores must be scalars, got {s_pos.data.shape} and {s_neg.data.shape}"
        )
    return _apply(_MARGIN_HINGE, (s_pos, s_neg), (float(margin), float(weight)))


# every public primitive, for generic gradient-check sweeps in the test suite
PRIMITIVES = (
    "add", "sub", "mul", "scale", "add_const", "add_n", "matvec", "vecmat",
    "dot", "concat", "stack_rows", "vstack", "row", "segment", "take_rows",
    "pool_rows", "pool_group_sum", "mean_rows", "sum_cols", "tanh", "sigmoid",
    "exp", "relu", "sum_all", "mean_all", "softmax", "att_logits",
    "lstm_step", "paired_states", "margin_hinge",
)
