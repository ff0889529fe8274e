"""Minimal dense reverse-mode autodiff on numpy arrays.

Values are float64 unless the caller opts into float32; gradients always
match the value dtype. The graph is built eagerly by the op functions and
freed after backward(). Set debug checks on to assert finiteness after
every op.
"""

from __future__ import annotations

import numpy as np

from .errors import GradCheckError, ShapeError

_DEBUG_FINITE = False


def set_debug_checks(flag: bool) -> None:
    global _DEBUG_FINITE
    _DEBUG_FINITE = bool(flag)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype if dtype is not None else None)
        if self.data.dtype.kind != "f":
            self.data = self.data.astype(np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward_fn = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad=None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(
                    f"backward: implicit gradient needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        _accumulate(self, np.asarray(grad, dtype=self.data.dtype))
        for node in reversed(topo):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)
                node._backward_fn = None
                node._parents = ()

    # operator sugar -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def reshape(self, *shape):
        return reshape(self, *shape)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _pair(a, b) -> tuple[Tensor, Tensor]:
    """Wrap binary-op operands; bare Python scalars adopt the other side's
    dtype so float32 graphs are not silently promoted."""
    if isinstance(a, Tensor) and not isinstance(b, Tensor) and np.isscalar(b):
        return a, Tensor(np.asarray(b, dtype=a.data.dtype))
    if isinstance(b, Tensor) and not isinstance(a, Tensor) and np.isscalar(a):
        return Tensor(np.asarray(a, dtype=b.data.dtype)), b
    return as_tensor(a), as_tensor(b)


def _accumulate(t: Tensor, g: np.ndarray, own: bool = False) -> None:
    """Add g into t.grad. own=True promises g is freshly allocated (or a view
    of scratch memory no one else reads), so it may be adopted or written
    through without copying."""
    if not t.requires_grad:
        return
    if g.shape != t.data.shape:
        g = _unbroadcast(g, t.data.shape)
        own = True  # reductions allocate
    if t.grad is None:
        t.grad = g if own else g.copy()
    else:
        t.grad = t.grad + g if not t.grad.flags.writeable else _iadd(t.grad, g)


def _iadd(buf: np.ndarray, g: np.ndarray) -> np.ndarray:
    buf += g
    return buf


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, (gs, ts) in enumerate(zip(g.shape, shape)):
        if ts == 1 and gs != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _make(data: np.ndarray, parents: tuple, backward_fn) -> Tensor:
    if _DEBUG_FINITE and not np.all(np.isfinite(data)):
        raise ShapeError("debug: non-finite values produced by an op")
    rg = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=rg)
    if rg:
        out._parents = parents
        out._backward_fn = backward_fn
    return out


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    data = a.data + b.data

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _make(data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    data = a.data - b.data

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, -g, own=True)

    return _make(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    data = a.data * b.data

    def backward(g):
        _accumulate(a, g * b.data, own=True)
        _accumulate(b, g * a.data, own=True)

    return _make(data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    data = a.data / b.data

    def backward(g):
        _accumulate(a, g / b.data, own=True)
        _accumulate(b, -g * a.data / (b.data * b.data), own=True)

    return _make(data, (a, b), backward)


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    p = float(p)
    data = a.data ** p

    def backward(g):
        _accumulate(a, g * p * a.data ** (p - 1.0), own=True)

    return _make(data, (a,), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be >= 2-D, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims disagree, {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        _accumulate(a, g @ np.swapaxes(b.data, -1, -2), own=True)
        _accumulate(b, np.swapaxes(a.data, -1, -2) @ g, own=True)

    return _make(data, (a, b), backward)


def maximum(a, b) -> Tensor:
    """Elementwise max; ties route the gradient to the first argument."""
    a, b = _pair(a, b)
    take_a = a.data >= b.data
    data = np.where(take_a, a.data, b.data)

    def backward(g):
        _accumulate(a, g * take_a, own=True)
        _accumulate(b, g * ~take_a, own=True)

    return _make(data, (a, b), backward)


# ---------------------------------------------------------------------------
# elementwise nonlinearities


def tanh(a) -> Tensor:
    a = as_tensor(a)
    data = np.tanh(a.data)

    def backward(g):
        _accumulate(a, g * (1.0 - data * data), own=True)

    return _make(data, (a,), backward)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    data = 1.0 / (1.0 + np.exp(-np.clip(a.data, -60.0, 60.0)))

    def backward(g):
        _accumulate(a, g * data * (1.0 - data), own=True)

    return _make(data, (a,), backward)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    data = a.data * mask

    def backward(g):
        _accumulate(a, g * mask, own=True)

    return _make(data, (a,), backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)

    def backward(g):
        _accumulate(a, g * data, own=True)

    return _make(data, (a,), backward)


def log(a) -> Tensor:
    a = as_tensor(a)
    data = np.log(a.data)

    def backward(g):
        _accumulate(a, g / a.data, own=True)

    return _make(data, (a,), backward)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * data).sum(axis=axis, keepdims=True)
        _accumulate(a, data * (g - inner), own=True)

    return _make(data, (a,), backward)


# ---------------------------------------------------------------------------
# shape manipulation


def reshape(a, *shape) -> Tensor:
    a = as_tensor(a)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    old = a.data.shape
    data = a.data.reshape(shape)

    def backward(g):
        _accumulate(a, g.reshape(old))

    return _make(data, (a,), backward)


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    data = np.transpose(a.data, axes)
    inverse = np.argsort(axes)

    def backward(g):
        _accumulate(a, np.transpose(g, inverse))

    return _make(data, (a,), backward)


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    data = a.data[idx]

    def backward(g):
        # scatter straight into the parent's grad; avoids a full-size buffer
        if not a.requires_grad:
            return
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[idx] += g

    return _make(data, (a,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(start, stop)
            _accumulate(t, g[tuple(sl)])

    return _make(data, tuple(tensors), backward)


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        parts = np.moveaxis(g, axis, 0)
        for t, part in zip(tensors, parts):
            _accumulate(t, part)

    return _make(data, tuple(tensors), backward)


# ---------------------------------------------------------------------------
# reductions


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.data.shape))
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.data.shape))

    return _make(data, (a,), backward)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / n)


def l1(a) -> Tensor:
    """Sum of absolute values."""
    a = as_tensor(a)
    data = np.abs(a.data).sum()

    def backward(g):
        _accumulate(a, g * np.sign(a.data), own=True)

    return _make(data, (a,), backward)


def l2(a) -> Tensor:
    """Euclidean norm; subgradient 0 at the origin."""
    a = as_tensor(a)
    norm = float(np.sqrt((a.data * a.data).sum()))
    data = np.asarray(norm, dtype=a.data.dtype)

    def backward(g):
        if norm > 0:
            _accumulate(a, g * a.data / norm, own=True)

    return _make(data, (a,), backward)


def abs_(a) -> Tensor:
    a = as_tensor(a)
    data = np.abs(a.data)

    def backward(g):
        _accumulate(a, g * np.sign(a.data), own=True)

    return _make(data, (a,), backward)


# ---------------------------------------------------------------------------
# structured ops


def conv1d(x, kernel, bias=None) -> Tensor:
    """Same-padded correlation along the time axis.

    x: [T, C_in] or [B, T, C_in]; kernel: [W, C_in, C_out]; optional bias
    [C_out]. Output keeps the time length (TF-style SAME padding, the extra
    pad sample of even widths goes on the right).
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if kernel.ndim != 3:
        raise ShapeError(f"conv1d: kernel must be [W, C_in, C_out], got {kernel.shape}")
    squeeze = x.ndim == 2
    xv = x.data[None] if squeeze else x.data
    if xv.ndim != 3 or xv.shape[2] != kernel.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape} incompatible with kernel {kernel.shape}")
    width, c_in, c_out = kernel.shape
    batch, t_len, _ = xv.shape
    pad_l = (width - 1) // 2
    pad_r = width - 1 - pad_l
    xp = np.pad(xv, ((0, 0), (pad_l, pad_r), (0, 0)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, width, axis=1)
    flat = windows.transpose(0, 1, 3, 2).reshape(batch * t_len, width * c_in)
    km = kernel.data.reshape(width * c_in, c_out)
    y = flat @ km
    if bias is not None:
        bias = as_tensor(bias)
        y = y + bias.data
    y = y.reshape(batch, t_len, c_out)
    if squeeze:
        y = y[0]
    parents = (x, kernel) if bias is None else (x, kernel, bias)

    def backward(g):
        g2 = g.reshape(batch * t_len, c_out)
        _accumulate(kernel, (flat.T @ g2).reshape(width, c_in, c_out), own=True)
        if bias is not None:
            _accumulate(bias, g2.sum(axis=0), own=True)
        gw = (g2 @ km.T).reshape(batch, t_len, width, c_in)
        gxp = np.zeros_like(xp)
        for w in range(width):
            gxp[:, w:w + t_len] += gw[:, :, w]
        gx = gxp[:, pad_l:pad_l + t_len]
        _accumulate(x, gx[0] if squeeze else gx, own=True)

    return _make(y, parents, backward)


def dropout(x, p: float, rng) -> Tensor:
    """Inverted dropout; rng may be a seed or a numpy Generator. rng=None
    (inference) is the identity."""
    x = as_tensor(x)
    if rng is None or p <= 0.0:
        return x
    if not 0.0 <= p <= 1.0:
        raise ShapeError(f"dropout: p must be in [0, 1], got {p}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    keep = rng.random(x.data.shape) >= p
    scale = 0.0 if p >= 1.0 else 1.0 / (1.0 - p)
    mask = keep * scale
    data = x.data * mask

    def backward(g):
        _accumulate(x, g * mask, own=True)

    return _make(data, (x,), backward)


def embedding(table, ids) -> Tensor:
    """Row gather: table [V, d], integer ids of any shape -> [..., d]."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    data = table.data[ids]

    def backward(g):
        if not table.requires_grad:
            return
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, ids, g)

    return _make(data, (table,), backward)


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(f, inputs, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    f maps the Tensor inputs to a scalar Tensor and must be pure. Relative
    error per coordinate is |ga - gn| / max(1, |ga|, |gn|).
    """
    inputs = [as_tensor(t) for t in inputs]
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    out = f(*inputs)
    if out.data.size != 1:
        raise GradCheckError(f"grad_check: f must return a scalar, got {out.shape}")
    if not np.isfinite(out.data):
        raise GradCheckError("grad_check: f returned a non-finite value")
    out.backward()
    worst = 0.0
    for ti, t in enumerate(inputs):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        aflat = analytic.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            fp = float(f(*inputs).data)
            flat[j] = orig - h
            fm = float(f(*inputs).data)
            flat[j] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise GradCheckError(
                    f"grad_check: non-finite f at input {ti}, coordinate {j}")
            numeric = (fp - fm) / (2.0 * h)
            err = abs(aflat[j] - numeric) / max(1.0, abs(aflat[j]), abs(numeric))
            worst = max(worst, err)
    return worst
