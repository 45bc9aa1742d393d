"""Dense float64 tensors with reverse-mode differentiation.

A ``Tape`` records every primitive applied to tensors that live on it;
``Tape.backward`` replays the records once, in reverse creation order, and
returns gradients for the tape's leaves. Tensors without a tape evaluate
eagerly with no recording, so the same model code serves both training and
inference.

Broadcasting is deliberately restricted: elementwise ops require equal shapes
except for scalar * tensor and row-vector bias adds. Everything else is a
shape error.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import _kernels


class ShapeError(ValueError):
    pass


class Tensor:
    """A float64 array, optionally attached to a differentiation tape."""

    __slots__ = ("data", "tape", "node_id")

    def __init__(self, data: np.ndarray, tape: "Tape | None" = None, node_id: int = -1):
        self.data = data
        self.tape = tape
        self.node_id = node_id

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        where = "tape" if self.tape is not None else "const"
        return f"Tensor(shape={self.data.shape}, {where})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(constant(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def constant(value) -> Tensor:
    """Wrap an array-like as an off-tape tensor."""
    return Tensor(np.asarray(value, dtype=np.float64))


class Tape:
    """Ordered record of primitive applications.

    Each node stores its parents' node ids and a function mapping the output
    gradient to per-parent gradients. Nodes are replayed exactly once during
    ``backward``, highest id first, which is a valid topological order because
    nodes only ever reference earlier nodes.
    """

    def __init__(self):
        self._parents: list[tuple[int, ...]] = []
        self._backs: list[Callable | None] = []
        self._leaf_ids: list[int] = []

    def __len__(self) -> int:
        return len(self._parents)

    def _record(self, parents: tuple[int, ...], back: Callable | None) -> int:
        self._parents.append(parents)
        self._backs.append(back)
        return len(self._parents) - 1

    def leaf(self, data) -> Tensor:
        """Register a differentiable leaf (a trainable parameter)."""
        arr = np.asarray(data, dtype=np.float64)
        nid = self._record((), None)
        self._leaf_ids.append(nid)
        return Tensor(arr, self, nid)

    def backward(self, loss: Tensor) -> dict[int, np.ndarray]:
        """Gradients of a scalar loss with respect to every reached leaf.

        Returns a map from leaf node id to gradient array; leaves the loss
        does not depend on are absent.
        """
        if loss.tape is not self:
            raise ValueError("loss does not live on this tape")
        if loss.data.shape != ():
            raise ShapeError(f"loss must be scalar, got shape {loss.data.shape}")
        grads: list[np.ndarray | None] = [None] * len(self._parents)
        grads[loss.node_id] = np.ones((), dtype=np.float64)
        for nid in range(loss.node_id, -1, -1):
            g = grads[nid]
            if g is None:
                continue
            back = self._backs[nid]
            if back is None:
                continue
            parent_grads = back(g)
            for pid, pg in zip(self._parents[nid], parent_grads):
                if pg is None:
                    continue
                if grads[pid] is None:
                    grads[pid] = pg
                else:
                    grads[pid] = grads[pid] + pg
            grads[nid] = None  # free interior gradients as we go
        leaf_set = set(self._leaf_ids)
        return {nid: g for nid, g in enumerate(grads) if g is not None and nid in leaf_set}


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return constant(x)


def _result(data: np.ndarray, inputs: Sequence[Tensor], back: Callable | None) -> Tensor:
    tape = None
    for t in inputs:
        if t.tape is not None:
            if tape is not None and tape is not t.tape:
                raise ValueError("inputs live on different tapes")
            tape = t.tape
    if tape is None:
        return Tensor(data)
    parents = tuple(t.node_id for t in inputs if t.tape is not None)
    live = [t.tape is not None for t in inputs]

    def dispatch(g):
        full = back(g)
        return tuple(pg for pg, keep in zip(full, live) if keep)

    return Tensor(data, tape, tape._record(parents, dispatch))


def _is_scalar_shape(shape: tuple[int, ...]) -> bool:
    return int(np.prod(shape, dtype=np.int64)) == 1


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to a broadcast operand's shape."""
    if grad.shape == shape:
        return grad
    if _is_scalar_shape(shape):
        return np.asarray(grad.sum(), dtype=np.float64).reshape(shape)
    # row-vector bias: grad (n, d) -> (d,) or (1, d)
    if grad.ndim == 2 and shape in ((grad.shape[1],), (1, grad.shape[1])):
        return grad.sum(axis=0).reshape(shape)
    raise ShapeError(f"cannot reduce gradient {grad.shape} to {shape}")


def _check_addlike(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape:
        return
    if _is_scalar_shape(a.shape) or _is_scalar_shape(b.shape):
        return
    # row-vector bias add: (n, d) + (d,) or (n, d) + (1, d)
    if a.data.ndim == 2 and b.shape in ((a.shape[1],), (1, a.shape[1])):
        return
    if b.data.ndim == 2 and a.shape in ((b.shape[1],), (1, b.shape[1])):
        return
    raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_addlike(a, b, "add")
    out = a.data + b.data

    def back(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return _result(out, (a, b), back)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_addlike(a, b, "sub")
    out = a.data - b.data

    def back(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return _result(out, (a, b), back)


def mul(a, b) -> Tensor:
    """Elementwise product; one operand may be a scalar (python or size-1 tensor)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if not (a.shape == b.shape or _is_scalar_shape(a.shape) or _is_scalar_shape(b.shape)):
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    out = ad * bd

    def back(g):
        return _reduce_to(g * bd, a.shape), _reduce_to(g * ad, b.shape)

    return _result(out, (a, b), back)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    out = ad @ bd

    def back(g):
        return g @ bd.T, ad.T @ g

    return _result(out, (a, b), back)


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.data)

    def back(g):
        return (g * out,)

    return _result(out, (a,), back)


def log(a) -> Tensor:
    a = _as_tensor(a)
    ad = a.data
    out = np.log(ad)

    def back(g):
        return (g / ad,)

    return _result(out, (a,), back)


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    ad = a.data
    out = np.empty_like(ad)
    pos = ad >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-ad[pos]))
    ex = np.exp(ad[~pos])
    out[~pos] = ex / (1.0 + ex)

    def back(g):
        return (g * out * (1.0 - out),)

    return _result(out, (a,), back)


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.data)

    def back(g):
        return (g * (1.0 - out * out),)

    return _result(out, (a,), back)


def relu(a) -> Tensor:
    return maximum(a, 0.0)


def maximum(a, c: float) -> Tensor:
    """Elementwise max with a constant; gradient flows where a > c."""
    a = _as_tensor(a)
    ad = a.data
    out = np.maximum(ad, c)
    mask = ad > c

    def back(g):
        return (g * mask,)

    return _result(out, (a,), back)


def masked_softmax(a, mask: np.ndarray) -> Tensor:
    """Row-wise softmax over entries where ``mask`` is True.

    Masked entries behave as if the logit were -inf: they get weight exactly 0
    and receive zero gradient. A row with no unmasked entry is an error.
    """
    a = _as_tensor(a)
    ad = a.data
    if ad.ndim != 2:
        raise ShapeError(f"masked_softmax expects a 2-d tensor, got {ad.shape}")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != ad.shape:
        raise ShapeError(f"mask shape {mask.shape} != logits shape {ad.shape}")
    if not mask.any(axis=1).all():
        raise ValueError("masked_softmax: a row has every entry masked")
    shifted = np.where(mask, ad, -np.inf)
    rowmax = shifted.max(axis=1, keepdims=True)
    e = np.exp(shifted - rowmax)
    e[~mask] = 0.0
    out = e / e.sum(axis=1, keepdims=True)

    def back(g):
        inner = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - inner),)

    return _result(out, (a,), back)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if axis not in (0, 1):
        raise ShapeError("concat supports axis 0 or 1")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        if axis == 0:
            return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(sizes)))
        return tuple(g[:, offsets[i]:offsets[i + 1]] for i in range(len(sizes)))

    return _result(out, tensors, back)


def gather_rows(a, index) -> Tensor:
    """Select rows of a 2-d tensor: out[i] = a[index[i]]."""
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError("gather_rows expects a 2-d tensor")
    index = np.asarray(index, dtype=np.int64)
    n = a.shape[0]
    if index.size and (index.min() < 0 or index.max() >= n):
        raise ShapeError("gather_rows: index out of range")
    ad = a.data
    out = ad[index]

    def back(g):
        ga = np.zeros_like(ad)
        _kernels.scatter_add_rows(ga, index, np.ascontiguousarray(g))
        return (ga,)

    return _result(out, (a,), back)


def scatter_add_rows(src, index, num_rows: int) -> Tensor:
    """Accumulate rows of ``src`` into a (num_rows, d) zero tensor at ``index``."""
    src = _as_tensor(src)
    if src.data.ndim != 2:
        raise ShapeError("scatter_add_rows expects a 2-d tensor")
    index = np.asarray(index, dtype=np.int64)
    if index.shape != (src.shape[0],):
        raise ShapeError("scatter_add_rows: index length must match source rows")
    if index.size and (index.min() < 0 or index.max() >= num_rows):
        raise ShapeError("scatter_add_rows: index out of range")
    out = np.zeros((num_rows, src.shape[1]), dtype=np.float64)
    _kernels.scatter_add_rows(out, index, np.ascontiguousarray(src.data))

    def back(g):
        return (g[index],)

    return _result(out, (src,), back)


def reduce_sum(a, axis: int | None = None) -> Tensor:
    """Sum reduction. axis=None gives a scalar; axis 0/1 keeps dims."""
    a = _as_tensor(a)
    ad = a.data
    if axis is None:
        out = np.asarray(ad.sum(), dtype=np.float64)

        def back(g):
            return (np.broadcast_to(g, ad.shape),)

    else:
        if ad.ndim != 2 or axis not in (0, 1):
            raise ShapeError("axis reduction requires a 2-d tensor and axis 0 or 1")
        out = ad.sum(axis=axis, keepdims=True)

        def back(g):
            return (np.broadcast_to(g, ad.shape),)

    return _result(out, (a,), back)


def reduce_mean(a, axis: int | None = None) -> Tensor:
    a = _as_tensor(a)
    ad = a.data
    if axis is None:
        n = ad.size
    else:
        n = ad.shape[axis]
    return mul(reduce_sum(a, axis), 1.0 / n)


def absolute(a) -> Tensor:
    """|a| composed from the primitive set: relu(a) + relu(-a)."""
    return add(relu(a), relu(mul(a, -1.0)))
