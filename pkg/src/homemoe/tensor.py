"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations only record themselves while a :class:`Tape` is active and at least
one input requires a gradient. Outside a tape every op is a plain numpy call,
which is what inference uses.

    with Tape() as tape:
        loss = tensor.sum(tensor.activate("swish", x @ w))
    tensor.backward(loss, tape)
"""

from contextlib import contextmanager

import numpy as np

from . import kernels


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_node")

    def __init__(self, data, requires_grad=False, name=None):
        data = np.asarray(data, dtype=np.float64)
        # ascontiguousarray would turn a 0-d scalar into shape (1,)
        self.data = data if data.flags.c_contiguous else np.ascontiguousarray(data)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._node = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(_wrap(other), -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def tensor(data, requires_grad=False, name=None):
    return Tensor(data, requires_grad=requires_grad, name=name)


# --------------------------------------------------------------------------
# tape
# --------------------------------------------------------------------------

class _Node:
    __slots__ = ("op", "out", "parents", "backward")

    def __init__(self, op, out, parents, backward):
        self.op = op
        self.out = out
        self.parents = parents
        self.backward = backward


class Tape:
    """Ordered record of executed ops. Creation order is a topological order."""

    _stack = []

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        Tape._stack.append(self)
        return self

    def __exit__(self, *exc):
        Tape._stack.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    @classmethod
    def current(cls):
        return cls._stack[-1] if cls._stack else None


@contextmanager
def no_tape():
    saved = Tape._stack[:]
    Tape._stack.clear()
    try:
        yield
    finally:
        Tape._stack[:] = saved


# test hook: op name -> factor applied to every gradient that op emits
_CORRUPT = {}


@contextmanager
def corrupt_backward(op, factor=1.5):
    """Scale the gradients produced by ``op``. Used to prove grad checks can fail."""
    _CORRUPT[op] = factor
    try:
        yield
    finally:
        _CORRUPT.pop(op, None)


def record(op, data, parents, backward):
    """Wrap ``data`` as the output of ``op``.

    ``backward(g)`` must return one gradient (or None) per parent. Nothing is
    recorded when no tape is active or no parent needs a gradient.
    """
    out = Tensor(data)
    tape = Tape.current()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        node = _Node(op, out, parents, backward)
        out._node = node
        tape.nodes.append(node)
    return out


def backward(loss, tape):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._node is None or loss._node not in tape.nodes:
        if loss.requires_grad:
            _accumulate(loss, np.ones_like(loss.data))
            return
        raise ValueError("loss was not produced under this tape")
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        parent_grads = node.backward(g)
        factor = _CORRUPT.get(node.op)
        for p, pg in zip(node.parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            if factor is not None:
                pg = pg * factor
            if p._node is None:
                _accumulate(p, pg)
            elif id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg


def _accumulate(leaf, g):
    if leaf.grad is None:
        leaf.grad = np.array(g, dtype=np.float64, copy=True).reshape(leaf.shape)
    else:
        leaf.grad = leaf.grad + g


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# --------------------------------------------------------------------------
# elementwise / linear algebra
# --------------------------------------------------------------------------

def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    A, Bm = a.data, b.data

    def bw(g):
        return (g @ Bm.T if a.requires_grad else None,
                A.T @ g if b.requires_grad else None)

    return record("matmul", A @ Bm, (a, b), bw)


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from None

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return record("add", out, (a, b), bw)


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast") from None
    A, Bd = a.data, b.data

    def bw(g):
        return _unbroadcast(g * Bd, a.shape), _unbroadcast(g * A, b.shape)

    return record("mul", out, (a, b), bw)


def scale(x, c):
    return record("scale", x.data * c, (x,), lambda g: (g * c,))


def sum(x):  # noqa: A001 - mirrors numpy naming
    shape = x.shape
    return record("sum", np.array(x.data.sum()), (x,), lambda g: (np.full(shape, g.item()),))


def mean(x):
    n = x.data.size
    shape = x.shape
    return record("mean", np.array(x.data.mean()), (x,), lambda g: (np.full(shape, g.item() / n),))


def _sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def activate(kind, x):
    """relu, sigmoid or swish (x * sigmoid(x))."""
    z = x.data
    if kind == "relu":
        mask = z > 0
        return record("relu", np.where(mask, z, 0.0), (x,), lambda g: (g * mask,))
    if kind == "sigmoid":
        s = _sigmoid(z)
        return record("sigmoid", s, (x,), lambda g: (g * s * (1.0 - s),))
    if kind == "swish":
        s = _sigmoid(z)
        return record("swish", z * s, (x,), lambda g: (g * (s + z * s * (1.0 - s)),))
    raise ValueError(f"unknown activation {kind!r}")


def softmax(x):
    z = x.data
    if z.shape[-1] < 1:
        raise ShapeError("softmax over an empty axis")
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    p = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return record("softmax", p, (x,), bw)


def concat(tensors, axis=-1):
    arrays = [t.data for t in tensors]
    try:
        out = np.concatenate(arrays, axis=axis)
    except ValueError:
        raise ShapeError("concat: incompatible shapes " + ", ".join(str(a.shape) for a in arrays)) from None
    bounds = np.cumsum([a.shape[axis] for a in arrays])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return record("concat", out, tuple(tensors), bw)


# --------------------------------------------------------------------------
# batch normalisation
# --------------------------------------------------------------------------

class BNState:
    """Affine parameters and running statistics of one batch-norm layer."""

    def __init__(self, width, eps=1e-5, momentum=0.99, name="bn"):
        self.gamma = Tensor(np.ones(width), requires_grad=True, name=f"{name}.gamma")
        self.beta = Tensor(np.zeros(width), requires_grad=True, name=f"{name}.beta")
        self.running_mean = np.zeros(width)
        self.running_var = np.ones(width)
        self.eps = eps
        self.momentum = momentum
        # batch statistics of the last train-mode call, for diagnostics
        self.last_xhat = None

    def parameters(self):
        return [self.gamma, self.beta]


def batch_norm(z, state, mode="train"):
    if z.data.ndim != 2 or z.shape[1] != state.gamma.shape[0]:
        raise ShapeError(f"batch_norm: input {z.shape} vs width {state.gamma.shape[0]}")
    gamma = state.gamma.data
    if mode == "train":
        if z.shape[0] < 2:
            raise ValueError(f"batch_norm in train mode needs at least 2 rows, got {z.shape[0]}")
        out, xhat, mu, var, inv_std = kernels.bn_forward(z.data, gamma, state.beta.data, state.eps)
        m = state.momentum
        state.running_mean = m * state.running_mean + (1.0 - m) * mu
        state.running_var = m * state.running_var + (1.0 - m) * var
        state.last_xhat = xhat

        def bw(g):
            dz, dgamma, dbeta = kernels.bn_backward(g, xhat, inv_std, gamma)
            return dz, dgamma, dbeta
    elif mode == "infer":
        inv_std = 1.0 / np.sqrt(state.running_var + state.eps)
        xhat = (z.data - state.running_mean) * inv_std
        out = gamma * xhat + state.beta.data

        def bw(g):
            return g * (gamma * inv_std), (g * xhat).sum(axis=0), g.sum(axis=0)
    else:
        raise ValueError(f"unknown batch_norm mode {mode!r}")
    return record("batch_norm", out, (z, state.gamma, state.beta), bw)


# --------------------------------------------------------------------------
# oracle
# --------------------------------------------------------------------------

def finite_diff_grad(f, theta, h=1e-5):
    """Central differences of scalar ``f(theta)`` w.r.t. every entry of ``theta``."""
    if h <= 0:
        raise ValueError("h must be positive")
    flat = theta.data.reshape(-1)
    out = np.empty_like(flat)
    with no_tape():
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            fp = float(f(theta))
            flat[i] = old - h
            fm = float(f(theta))
            flat[i] = old
            out[i] = (fp - fm) / (2.0 * h)
    return out.reshape(theta.shape)


def zero_grad(params):
    for p in params:
        p.zero_grad()
