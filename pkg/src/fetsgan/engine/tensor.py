"""Dense tensors with a tape-free reverse-mode autodiff graph.

Every differentiable op returns a new :class:`Tensor` holding references to
its parents and a closure that pushes the output gradient back to them.
:func:`backward` walks the graph in reverse topological order.

Broadcasting is deliberately narrow: a right-hand operand may be a scalar or
match the trailing dimensions of the left-hand one (the bias case).
"""
import contextlib

import numpy as np

from ..errors import ContractError, ShapeError

_state = {"dtype": np.float32, "grad": True}


def get_default_dtype():
    return _state["dtype"]


def set_default_dtype(dtype):
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ContractError(f"unsupported dtype {dtype!r}; use float32 or float64")
    _state["dtype"] = dtype


@contextlib.contextmanager
def default_dtype(dtype):
    """Temporarily switch the dtype used for new tensors (float64 for gradient checks)."""
    old = _state["dtype"]
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _state["dtype"] = old


@contextlib.contextmanager
def no_grad():
    old = _state["grad"]
    _state["grad"] = False
    try:
        yield
    finally:
        _state["grad"] = old


def is_grad_enabled():
    return _state["grad"]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        dtype = dtype or get_default_dtype()
        data = np.asarray(data, dtype=dtype)
        # ascontiguousarray would promote 0-d scalars to 1-d
        self.data = data if data.flags.c_contiguous else data.copy()
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def __len__(self):
        return self.data.shape[0]

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other, self), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def backward(self):
        backward(self)


def _lift(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    return Tensor(np.asarray(x), dtype=dtype)


def _make(value, parents, backward_fn):
    """Wrap an op result; attach graph edges only when some parent needs them."""
    out = Tensor(value, dtype=value.dtype)
    if _state["grad"] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _accumulate(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True).reshape(t.data.shape)
    else:
        t.grad += g


def _check_broadcast(op, a, b):
    sa, sb = a.shape, b.shape
    if sa == sb or sb == () or sa == ():
        return
    if len(sb) < len(sa) and sa[len(sa) - len(sb):] == sb:
        return
    if len(sa) < len(sb) and sb[len(sb) - len(sa):] == sa:
        return
    raise ShapeError(f"{op}: operand shapes {sa} and {sb} are incompatible")


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    if shape == ():
        return g.sum()
    lead = g.ndim - len(shape)
    return g.sum(axis=tuple(range(lead)))


def add(a, b):
    a, b = _lift(a), _lift(b, a)
    _check_broadcast("add", a, b)

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = _lift(a), _lift(b, a)
    _check_broadcast("sub", a, b)

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, -_unbroadcast(g, b.shape))

    return _make(a.data - b.data, (a, b), bw)


def mul(a, b):
    a, b = _lift(a), _lift(b, a)
    _check_broadcast("mul", a, b)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), bw)


def matmul(a, b):
    """``a @ b`` for ``a`` of shape (..., K) and a 2-D ``b`` of shape (K, N)."""
    a, b = _lift(a), _lift(b, a)
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: lhs shape {a.shape} incompatible with rhs shape {b.shape}")

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            k, n = b.shape
            _accumulate(b, a.data.reshape(-1, k).T @ g.reshape(-1, n))

    return _make(a.data @ b.data, (a, b), bw)


def tanh(a):
    y = np.tanh(a.data)

    def bw(g):
        _accumulate(a, g * (1.0 - y * y))

    return _make(y, (a,), bw)


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    y = _sigmoid(a.data)

    def bw(g):
        _accumulate(a, g * y * (1.0 - y))

    return _make(y, (a,), bw)


def leaky_relu(a, slope=0.2):
    pos = a.data > 0
    y = np.where(pos, a.data, slope * a.data).astype(a.data.dtype)

    def bw(g):
        _accumulate(a, np.where(pos, g, slope * g))

    return _make(y, (a,), bw)


def square(a):
    def bw(g):
        _accumulate(a, 2.0 * g * a.data)

    return _make(a.data * a.data, (a,), bw)


def tsum(a, axis=None):
    y = np.asarray(a.data.sum(axis=axis), dtype=a.data.dtype)

    def bw(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.shape))

    return _make(y, (a,), bw)


def mean(a, axis=None):
    count = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(tsum(a, axis), 1.0 / float(count))


def sumsq(a, axis=None):
    """Sum of squares, fused."""
    y = np.asarray((a.data * a.data).sum(axis=axis), dtype=a.data.dtype)

    def bw(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        _accumulate(a, 2.0 * g * a.data)

    return _make(y, (a,), bw)


def concat(tensors, axis=-1):
    tensors = [_lift(t) for t in tensors]
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or t.shape[:-1] != ref[:-1]:
            raise ShapeError(f"concat: operand shapes {ref} and {t.shape} differ off the last axis")
    if axis not in (-1, len(ref) - 1):
        raise ContractError("concat only supports the last axis")
    sizes = np.cumsum([t.shape[-1] for t in tensors])[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, sizes, axis=-1)):
            _accumulate(t, piece)

    return _make(np.concatenate([t.data for t in tensors], axis=-1), tuple(tensors), bw)


def getitem(a, idx):
    def bw(g):
        if not a.requires_grad:
            return
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        _accumulate(a, full)

    return _make(np.ascontiguousarray(a.data[idx]), (a,), bw)


def repeat_time(a, steps):
    """(B, D) -> (B, steps, D) by repeating along a new time axis."""
    if a.ndim != 2:
        raise ShapeError(f"repeat_time expects a 2-D operand, got shape {a.shape}")

    def bw(g):
        _accumulate(a, g.sum(axis=1))

    return _make(np.repeat(a.data[:, None, :], steps, axis=1), (a,), bw)


def reshape(a, shape):
    def bw(g):
        _accumulate(a, g.reshape(a.shape))

    return _make(a.data.reshape(shape), (a,), bw)


def bce_with_logits(logits, targets):
    """Mean binary cross-entropy of raw scores against 0/1 targets."""
    t = np.asarray(targets, dtype=logits.data.dtype).reshape(logits.shape)
    x = logits.data
    loss = np.maximum(x, 0) - x * t + np.log1p(np.exp(-np.abs(x)))
    n = x.size

    def bw(g):
        _accumulate(logits, g * (_sigmoid(x) - t) / n)

    return _make(np.asarray(loss.mean(), dtype=x.dtype), (logits,), bw)


def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every leaf requiring grad."""
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("backward on a tensor that does not require grad")
    order = _topo_order(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)
            # interior nodes: release graph and gradient once consumed
            node._backward = None
            node._parents = ()
            node.grad = None
