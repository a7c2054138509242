"""A small reverse-mode autodiff engine over numpy arrays.

Images and feature maps are ``(batch, channels, height, width)`` arrays in
row-major order. Each operation records its parents and a closure mapping
the output gradient to input gradients; :func:`backward` walks the graph
in reverse topological order.
"""

from __future__ import annotations

import contextlib
import logging

import numpy as np

logger = logging.getLogger(__name__)

_DTYPES = {"single": np.float32, "double": np.float64}
_state = {"dtype": np.float32, "grad_enabled": True, "debug": False, "kinks": None}


def set_precision(name: str) -> None:
    """Select ``"single"`` (training) or ``"double"`` (gradient checks)."""
    if name not in _DTYPES:
        raise ValueError(f"precision must be one of {sorted(_DTYPES)}, got {name!r}")
    _state["dtype"] = _DTYPES[name]


def get_dtype():
    return _state["dtype"]


@contextlib.contextmanager
def precision(name: str):
    old = _state["dtype"]
    set_precision(name)
    try:
        yield
    finally:
        _state["dtype"] = old


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording the graph."""
    old = _state["grad_enabled"]
    _state["grad_enabled"] = False
    try:
        yield
    finally:
        _state["grad_enabled"] = old


@contextlib.contextmanager
def record_kinks():
    """Collect the sign pattern of every input to a non-smooth op (abs, leaky ReLU).

    Yields a list that fills up as operations run. Two evaluations with equal
    patterns lie on the same smooth piece of the function.
    """
    old = _state["kinks"]
    _state["kinks"] = pattern = []
    try:
        yield pattern
    finally:
        _state["kinks"] = old


def _note_kink(mask):
    if _state["kinks"] is not None:
        _state["kinks"].append(np.packbits(mask))


def set_debug(flag: bool) -> None:
    """When on, every operation checks its output for non-finite values."""
    _state["debug"] = bool(flag)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None and not isinstance(data, (np.ndarray, np.generic)):
            dtype = _state["dtype"]  # Python numbers and lists follow the precision switch
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(_state["dtype"])
        # np.ascontiguousarray would promote 0-d scalars to shape (1,)
        self.data = arr if arr.flags.c_contiguous else np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    # arithmetic sugar; all routed through the differentiable functions below
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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def sum(self):
        return sum_all(self)

    def mean(self):
        return mean_all(self)


class Parameter(Tensor):
    """A named, trainable tensor; its shape is fixed at creation."""

    __slots__ = ()

    def __init__(self, data, name):
        super().__init__(data, requires_grad=True)
        self.name = name

    def assign(self, values):
        values = np.asarray(values, dtype=self.data.dtype)
        if values.shape != self.data.shape:
            raise ValueError(f"parameter {self.name}: cannot assign shape {values.shape} to {self.data.shape}")
        self.data = np.ascontiguousarray(values)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape}, dtype={self.dtype})"


def as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else _state["dtype"]
    return Tensor(np.asarray(x, dtype=dtype))


def _pair(a, b):
    """Coerce a binary op's operands; plain numbers take the tensor's dtype."""
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        return a, as_tensor(b, like=a)
    if isinstance(b, Tensor) and not isinstance(a, Tensor):
        return as_tensor(a, like=b), b
    return as_tensor(a), as_tensor(b)


def _make(data, parents, backward_fn):
    """Wrap an op result and attach graph edges if any parent needs grad."""
    out = Tensor(data)
    if _state["debug"] and not np.all(np.isfinite(out.data)):
        raise FloatingPointError("non-finite value produced by a forward operation")
    if _state["grad_enabled"] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if loss.data.size != 1:
        raise ValueError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("loss does not depend on any tensor that requires grad")

    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def zero_grad(params) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------- elementwise


def add(a, b):
    a, b = _pair(a, b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = _pair(a, b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    a, b = _pair(a, b)
    ad, bd = a.data, b.data

    def grad_fn(g):
        ga = _unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb

    return _make(ad * bd, (a, b), grad_fn)


def div(a, b):
    a, b = _pair(a, b)
    ad, bd = a.data, b.data
    out = ad / bd

    def grad_fn(g):
        ga = _unbroadcast(g / bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / bd, bd.shape) if b.requires_grad else None
        return ga, gb

    return _make(out, (a, b), grad_fn)


def square(x):
    x = as_tensor(x)
    xd = x.data
    return _make(xd * xd, (x,), lambda g: (2.0 * g * xd,))


def sqrt(x):
    """Square root whose gradient is taken as 0 where the output is 0."""
    x = as_tensor(x)
    out = np.sqrt(x.data)

    def grad_fn(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            gx = np.where(out > 0, g / (2.0 * np.where(out > 0, out, 1.0)), 0.0)
        return (gx.astype(out.dtype, copy=False),)

    return _make(out, (x,), grad_fn)


def absolute(x):
    x = as_tensor(x)
    xd = x.data
    _note_kink(xd > 0)
    return _make(np.abs(xd), (x,), lambda g: (g * np.sign(xd),))


def sigmoid(x):
    x = as_tensor(x)
    # split by sign to avoid overflow in exp
    xd = x.data
    e = np.exp(-np.abs(xd))
    out = np.where(xd >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(xd.dtype, copy=False)
    return _make(out, (x,), lambda g: (g * out * (1.0 - out),))


def leaky_relu(x, slope=0.2):
    x = as_tensor(x)
    xd = x.data
    pos = xd > 0
    _note_kink(pos)
    out = np.where(pos, xd, xd * slope)
    return _make(out, (x,), lambda g: (np.where(pos, g, g * slope),))


# ---------------------------------------------------------------- reductions


def sum_all(x):
    x = as_tensor(x)
    shape = x.shape
    return _make(np.asarray(x.data.sum(), dtype=x.dtype), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean_all(x):
    x = as_tensor(x)
    shape, n = x.shape, x.size
    return _make(np.asarray(x.data.mean(), dtype=x.dtype), (x,), lambda g: (np.full(shape, g / n, dtype=g.dtype),))


def sum_axis(x, axis, keepdims=False):
    x = as_tensor(x)
    shape = x.shape

    def grad_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(x.data.sum(axis=axis, keepdims=keepdims), (x,), grad_fn)


def l1_mean(x):
    """Mean absolute value."""
    return mean_all(absolute(x))


def l2_mean(x):
    """Mean squared value."""
    return mean_all(square(x))


# ---------------------------------------------------------------- shape ops


def reshape(x, shape):
    x = as_tensor(x)
    old = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x, axes):
    x = as_tensor(x)
    inv = tuple(np.argsort(axes))
    return _make(np.ascontiguousarray(x.data.transpose(axes)), (x,), lambda g: (np.ascontiguousarray(g.transpose(inv)),))


def getitem(x, index):
    x = as_tensor(x)
    shape, dtype = x.shape, x.dtype

    def grad_fn(g):
        full = np.zeros(shape, dtype=dtype)
        full[index] = g
        return (full,)

    return _make(np.ascontiguousarray(x.data[index]), (x,), grad_fn)


def concat(tensors, axis=1):
    tensors = [as_tensor(t) for t in tensors]
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def grad_fn(g):
        out = []
        for i in range(len(tensors)):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(bounds[i], bounds[i + 1])
            out.append(np.ascontiguousarray(g[tuple(sl)]))
        return tuple(out)

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), grad_fn)


def split(x, sizes, axis=1):
    """Split along ``axis`` into consecutive pieces of the given sizes."""
    x = as_tensor(x)
    if sum(sizes) != x.shape[axis]:
        raise ValueError(f"split sizes {sizes} do not sum to extent {x.shape[axis]}")
    pieces, start = [], 0
    for s in sizes:
        sl = [slice(None)] * x.ndim
        sl[axis] = slice(start, start + s)
        pieces.append(getitem(x, tuple(sl)))
        start += s
    return pieces


# ---------------------------------------------------------------- linear algebra


def matmul(a, b):
    """Batched matrix product with numpy broadcasting over leading axes."""
    a, b = _pair(a, b)
    ad, bd = a.data, b.data

    def grad_fn(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(bd, -1, -2)), ad.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(ad, -1, -2), g), bd.shape)
        return ga, gb

    return _make(np.matmul(ad, bd), (a, b), grad_fn)
