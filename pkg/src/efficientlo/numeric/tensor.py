"""A small reverse-mode tensor engine on top of numpy.

Operations record themselves on the innermost active :class:`Tape` when any
input requires a gradient. Without an active tape nothing is recorded, so
inference runs at plain numpy speed.
"""
from __future__ import annotations

import numpy as np

from ..errors import EmptyAxis, NonFiniteError, NonScalarLoss, ShapeMismatch

DEFAULT_DTYPE = np.float32
CHECK_FINITE = True

_tapes: list["Tape"] = []


class Tensor:
    __slots__ = ("data", "requires_grad", "_parents", "_vjp", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._vjp = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        flag = ", requires_grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class Tape:
    """Records the operations of one forward pass for :func:`backward`."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self):
        _tapes.append(self)
        return self

    def __exit__(self, *exc):
        _tapes.remove(self)
        return False

    def backward(self, loss: Tensor, params=None):
        return backward(self, loss, params)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _finish(name: str, out: np.ndarray, parents: tuple, vjp) -> Tensor:
    if CHECK_FINITE and not np.all(np.isfinite(out)):
        raise NonFiniteError(f"{name} produced non-finite values")
    t = Tensor(out)
    if _tapes and any(p.requires_grad for p in parents):
        t.requires_grad = True
        t._parents = parents
        t._vjp = vjp
        _tapes[-1].nodes.append(t)
    return t


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _finish(
        "add",
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _finish(
        "sub",
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _finish(
        "mul",
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    with np.errstate(divide="ignore", invalid="ignore"):  # reported by _finish instead
        out = a.data / b.data
    return _finish(
        "div",
        out,
        (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)),
    )


def neg(a: Tensor) -> Tensor:
    return _finish("neg", -a.data, (a,), lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` for ``a`` of shape (..., k) and ``b`` of shape (k, m)."""
    a, b = _pair(a, b)
    if b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def vjp(g):
        a2 = a.data.reshape(-1, a.shape[-1])
        g2 = g.reshape(-1, b.shape[1])
        return g @ b.data.T, a2.T @ g2

    return _finish("matmul", out, (a, b), vjp)


def linear(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """Per-row affine map ``x W + b``; ``x`` is (..., in), ``W`` (in, out), ``b`` (out,)."""
    x = as_tensor(x, like=W)
    if W.ndim != 2 or x.shape[-1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ShapeMismatch(f"linear {x.shape} x {W.shape} + {b.shape}")
    out = x.data @ W.data + b.data

    def vjp(g):
        g2 = g.reshape(-1, W.shape[1])
        x2 = x.data.reshape(-1, W.shape[0])
        return g @ W.data.T, x2.T @ g2, g2.sum(axis=0, dtype=np.float64).astype(b.dtype)

    return _finish("linear", out, (x, W, b), vjp)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _finish("relu", np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _finish("exp", out, (x,), lambda g: (g * out,))


def abs_(x: Tensor) -> Tensor:
    return _finish("abs", np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    return _finish("sqrt", out, (x,), lambda g: (np.where(out > 0, g / (2 * np.where(out > 0, out, 1)), 0),))


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.sum(x.data, axis=axis, keepdims=keepdims, dtype=np.float64).astype(x.dtype)

    def vjp(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).astype(x.dtype),)

    return _finish("sum", np.asarray(out), (x,), vjp)


def reshape(x: Tensor, shape) -> Tensor:
    return _finish("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def getitem(x: Tensor, index) -> Tensor:
    out = x.data[index]

    def vjp(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, index, g)
        return (gx,)

    return _finish("getitem", np.array(out, copy=True), (x,), vjp)


def gather(x: Tensor, idx) -> Tensor:
    """Rows of ``x`` (n, c) at integer ``idx`` of any shape -> idx.shape + (c,)."""
    idx = np.asarray(idx, dtype=np.int64)
    out = x.data[idx]

    def vjp(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx.reshape(-1), g.reshape((-1,) + x.shape[1:]))
        return (gx,)

    return _finish("gather", out, (x,), vjp)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    dtype = np.result_type(*[t.dtype for t in tensors])
    out = np.concatenate([t.data.astype(dtype, copy=False) for t in tensors], axis=axis)
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def vjp(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _finish("concat", out, tuple(tensors), vjp)


def broadcast_to(x: Tensor, shape) -> Tensor:
    out = np.broadcast_to(x.data, shape).copy()
    return _finish("broadcast_to", out, (x,), lambda g: (_unbroadcast(g, x.shape),))


def max_reduce(x: Tensor, axis: int = 1):
    """Max over ``axis``; returns ``(values, argmax)``. Ties route gradient to the first index."""
    if x.shape[axis] == 0:
        raise EmptyAxis(f"cannot max-reduce empty axis {axis} of shape {x.shape}")
    arg = np.argmax(x.data, axis=axis)
    arg_e = np.expand_dims(arg, axis)
    out = np.take_along_axis(x.data, arg_e, axis=axis).squeeze(axis)

    def vjp(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, arg_e, np.expand_dims(g, axis), axis=axis)
        return (gx,)

    return _finish("max_reduce", out, (x,), vjp), arg


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z.astype(np.float64))
    y = (e / e.sum(axis=axis, keepdims=True)).astype(x.dtype)

    def vjp(g):
        s = np.sum(g * y, axis=axis, keepdims=True, dtype=np.float64)
        return ((y * (g - s)).astype(x.dtype),)

    return _finish("softmax", y, (x,), vjp)


def norm2(x: Tensor) -> Tensor:
    """Euclidean norm of all entries; gradient taken as 0 at the origin."""
    n = np.sqrt(np.sum(x.data.astype(np.float64) ** 2))
    out = np.asarray(n, dtype=x.dtype)

    def vjp(g):
        if n == 0:
            return (np.zeros_like(x.data),)
        return ((g * x.data / n).astype(x.dtype),)

    return _finish("norm2", out, (x,), vjp)


def quat_mul(a: Tensor, b: Tensor) -> Tensor:
    """Hamilton product of two (4,) quaternions."""
    a, b = _pair(a, b)
    w1, x1, y1, z1 = a.data
    w2, x2, y2, z2 = b.data
    La = np.array([[w1, -x1, -y1, -z1], [x1, w1, -z1, y1], [y1, z1, w1, -x1], [z1, -y1, x1, w1]])
    Rb = np.array([[w2, -x2, -y2, -z2], [x2, w2, z2, -y2], [y2, -z2, w2, x2], [z2, y2, -x2, w2]])
    out = (La @ b.data).astype(a.dtype)
    return _finish("quat_mul", out, (a, b), lambda g: ((Rb.T @ g).astype(a.dtype), (La.T @ g).astype(b.dtype)))


def quat_to_rotmat(q: Tensor) -> Tensor:
    """Rotation matrix (3, 3) of a unit quaternion (4,)."""
    w, x, y, z = q.data
    R = np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ],
        dtype=q.dtype,
    )

    def vjp(g):
        gw = 2 * (-z * g[0, 1] + y * g[0, 2] + z * g[1, 0] - x * g[1, 2] - y * g[2, 0] + x * g[2, 1])
        gx = 2 * (
            y * g[0, 1] + z * g[0, 2] + y * g[1, 0] - 2 * x * g[1, 1]
            - w * g[1, 2] + z * g[2, 0] + w * g[2, 1] - 2 * x * g[2, 2]
        )
        gy = 2 * (
            -2 * y * g[0, 0] + x * g[0, 1] + w * g[0, 2] + x * g[1, 0]
            + z * g[1, 2] - w * g[2, 0] + z * g[2, 1] - 2 * y * g[2, 2]
        )
        gz = 2 * (
            -2 * z * g[0, 0] - w * g[0, 1] + x * g[0, 2] + w * g[1, 0]
            - 2 * z * g[1, 1] + y * g[1, 2] + x * g[2, 0] + y * g[2, 1]
        )
        return (np.array([gw, gx, gy, gz], dtype=q.dtype),)

    return _finish("quat_to_rotmat", R, (q,), vjp)


def backward(tape: Tape, loss: Tensor, params=None):
    """Reverse pass over ``tape`` from scalar ``loss``.

    With ``params`` (a dict name -> Tensor or a list of Tensors) returns
    gradients in the same structure, zeros for parameters the loss does not
    reach. Without it, returns a dict ``id(tensor) -> grad`` of leaves.
    """
    if loss.data.size != 1:
        raise NonScalarLoss(f"loss must be scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        for p, pg in zip(node._parents, node._vjp(g)):
            if pg is None or not p.requires_grad:
                continue
            k = id(p)
            if k in grads:
                grads[k] = grads[k] + pg
            else:
                grads[k] = pg
    if params is None:
        return grads

    def pick(t):
        g = grads.get(id(t))
        return np.zeros_like(t.data) if g is None else np.asarray(g, dtype=t.dtype).reshape(t.shape)

    if isinstance(params, dict):
        return {k: pick(t) for k, t in params.items()}
    return [pick(t) for t in params]
