"""Dense float64 tensors with reverse-mode autodiff, plus the primitive
neural ops everything else is built from.

The engine is a recorded tape over numpy arrays: each op produces a new
Tensor that remembers its parents and a closure computing the local
vector-Jacobian product. ``backward()`` replays the tape in reverse
topological order, accumulating gradients additively into ``.grad``
buffers. All storage is 64-bit; there is no broadcasting API beyond what
the primitives themselves need (bias vectors over trailing dims, and the
timescale/state broadcasts inside the SSM discretization).
"""

from __future__ import annotations

import math
import threading

import numpy as np

from .errors import NonFiniteError, ShapeError

_tls = threading.local()


def _grad_enabled() -> bool:
    return getattr(_tls, "grad_enabled", True)


class no_grad:
    """Context manager that disables tape recording (per thread)."""

    def __enter__(self):
        self._prev = _grad_enabled()
        _tls.grad_enabled = False
        return self

    def __exit__(self, *exc):
        _tls.grad_enabled = self._prev
        return False


class Tensor:
    """A dense n-dimensional float64 array with an optional gradient buffer.

    Invariants: ``grad`` (when present) has the same shape as ``data``;
    gradients accumulate additively, so callers zero them explicitly
    before each backward pass.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

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

    def zero_grad(self):
        self.grad = None

    def _accum(self, g: np.ndarray):
        if self.grad is None:
            # copy: g may be a view into another node's grad buffer
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def backward(self):
        """Reverse-mode sweep from a scalar output."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar, got shape {self.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:  # iterative DFS; graphs can be deep
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accum(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic sugar ------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __getitem__(self, key):
        return getitem(self, key)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: tuple, backward) -> Tensor:
    """Build an op output, recording the tape only when a parent needs it."""
    out = Tensor(data)
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise primitives ----------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g, b.data.shape))

    return _node(out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.data.shape))

    return _node(out, (a, b), backward)


def div(a: Tensor, b: Tensor) -> Tensor:
    out = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _node(out, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(g):
        a._accum(-g)

    return _node(-a.data, (a,), backward)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def backward(g):
        a._accum(g * out)

    return _node(out, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid_np(a.data)

    def backward(g):
        a._accum(g * out * (1.0 - out))

    return _node(out, (a,), backward)


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    # exp may overflow to inf for very negative x; 1/(1+inf) = 0 is the
    # right saturation, so just silence the warning.
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def silu(a: Tensor) -> Tensor:
    """Elementwise x * sigmoid(x)."""
    s = _sigmoid_np(a.data)
    out = a.data * s

    def backward(g):
        a._accum(g * s * (1.0 + a.data * (1.0 - s)))

    return _node(out, (a,), backward)


def softplus(a: Tensor) -> Tensor:
    """Overflow-safe ln(1 + e^x); returns ~x for large x, ~0 for very negative x."""
    x = a.data
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    s = _sigmoid_np(x)

    def backward(g):
        a._accum(g * s)

    return _node(out, (a,), backward)


def log_clamped(a: Tensor, floor: float = 1e-12) -> Tensor:
    """log(max(a, floor)); the clamp keeps survival losses finite.

    Gradient is 1/a where a > floor and 0 in the clamped region.
    """
    clamped = np.maximum(a.data, floor)
    out = np.log(clamped)

    def backward(g):
        a._accum(np.where(a.data > floor, g / clamped, 0.0))

    return _node(out, (a,), backward)


# -- linear algebra --------------------------------------------------------


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """y[..., j] = sum_i x[..., i] * w[i, j] (+ b[j]).

    w has shape (d_in, d_out); x may carry any number of leading dims.
    """
    if x.data.shape[-1] != w.data.shape[0]:
        raise ShapeError(
            f"linear: x trailing dim {x.data.shape} does not match weight {w.data.shape}"
        )
    lead = x.data.shape[:-1]
    x2 = x.data.reshape(-1, x.data.shape[-1])
    y2 = x2 @ w.data
    out = y2.reshape(lead + (w.data.shape[1],))
    if b is not None:
        if b.data.shape != (w.data.shape[1],):
            raise ShapeError(f"linear: bias {b.data.shape} does not match weight {w.data.shape}")
        out = out + b.data

    def backward(g):
        g2 = g.reshape(-1, w.data.shape[1])
        if x.requires_grad:
            x._accum((g2 @ w.data.T).reshape(x.data.shape))
        if w.requires_grad:
            w._accum(x2.T @ g2)
        if b is not None and b.requires_grad:
            b._accum(g2.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return _node(out, parents, backward)


def stacked_linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Per-row affine maps: out[f] = x[f] @ w[f] + b[f].

    x is (F, I), w is (F, I, O), b is (F, O); each row gets its own
    weight matrix (used to run many small MLPs in one call).
    """
    if x.data.ndim != 2 or w.data.ndim != 3 or x.data.shape != w.data.shape[:2]:
        raise ShapeError(f"stacked_linear: x {x.data.shape} vs w {w.data.shape}")
    out = np.matmul(x.data[:, None, :], w.data)[:, 0, :] + b.data

    def backward(g):
        if x.requires_grad:
            x._accum(np.matmul(g[:, None, :], w.data.transpose(0, 2, 1))[:, 0, :])
        if w.requires_grad:
            w._accum(x.data[:, :, None] * g[:, None, :])
        if b.requires_grad:
            b._accum(g)

    return _node(out, (x, w, b), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row over the last axis to zero mean / unit variance
    (population variance), then apply the affine scale and shift.
    """
    d = x.data.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def backward(g):
        if gamma.requires_grad:
            gamma._accum((g * xhat).reshape(-1, d).sum(axis=0))
        if beta.requires_grad:
            beta._accum(g.reshape(-1, d).sum(axis=0))
        if x.requires_grad:
            gx = g * gamma.data
            # d/dx of (x - mu) * inv with mu, inv functions of the row
            mean_gx = gx.mean(axis=-1, keepdims=True)
            mean_gx_xhat = (gx * xhat).mean(axis=-1, keepdims=True)
            x._accum(inv * (gx - mean_gx - xhat * mean_gx_xhat))

    return _node(out, (x, gamma, beta), backward)


def causal_depthwise_conv1d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Per-channel causal 1-d convolution over (B, M, E) sequences.

    y[b, t, e] = bias[e] + sum_k kernel[e, k] * x[b, t - W + 1 + k, e],
    with positions before the sequence start read as zero. Output at t
    never sees input beyond t.
    """
    if x.data.ndim != 3:
        raise ShapeError(f"conv1d: expected (B, M, E) input, got {x.data.shape}")
    b_, m, e = x.data.shape
    if kernel.data.ndim != 2 or kernel.data.shape[0] != e:
        raise ShapeError(f"conv1d: kernel {kernel.data.shape} does not match channels {e}")
    w = kernel.data.shape[1]
    xp = np.zeros((b_, m + w - 1, e))
    xp[:, w - 1 :, :] = x.data
    out = np.broadcast_to(bias.data, (b_, m, e)).copy()
    for k in range(w):
        out += kernel.data[:, k] * xp[:, k : k + m, :]

    def backward(g):
        if bias.requires_grad:
            bias._accum(g.sum(axis=(0, 1)))
        if kernel.requires_grad:
            dk = np.empty((e, w))
            for k in range(w):
                dk[:, k] = (g * xp[:, k : k + m, :]).sum(axis=(0, 1))
            kernel._accum(dk)
        if x.requires_grad:
            dxp = np.zeros_like(xp)
            for k in range(w):
                dxp[:, k : k + m, :] += g * kernel.data[:, k]
            x._accum(dxp[:, w - 1 :, :])

    return _node(out, (x, kernel, bias), backward)


# -- shape ops --------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    def backward(g):
        a._accum(g.reshape(a.data.shape))

    return _node(a.data.reshape(shape), (a,), backward)


def flip(a: Tensor, axis: int) -> Tensor:
    def backward(g):
        a._accum(np.flip(g, axis=axis))

    return _node(np.flip(a.data, axis=axis), (a,), backward)


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    datas = [t.data for t in tensors]
    out = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accum(g[tuple(idx)])

    return _node(out, tuple(tensors), backward)


def stack(tensors: list[Tensor], axis: int = 0) -> Tensor:
    out = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t._accum(np.take(g, i, axis=axis))

    return _node(out, tuple(tensors), backward)


def getitem(a: Tensor, key) -> Tensor:
    out = a.data[key]

    def backward(g):
        buf = np.zeros_like(a.data)
        buf[key] = g
        a._accum(buf)

    return _node(out, (a,), backward)


def tsum(a: Tensor, axis=None) -> Tensor:
    out = a.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            a._accum(np.broadcast_to(g, a.data.shape).copy())
        else:
            a._accum(np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy())

    return _node(out, (a,), backward)


def tmean(a: Tensor, axis=None) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    out = a.data.mean(axis=axis)

    def backward(g):
        if axis is None:
            a._accum(np.broadcast_to(g / n, a.data.shape).copy())
        else:
            a._accum(np.broadcast_to(np.expand_dims(g / n, axis), a.data.shape).copy())

    return _node(out, (a,), backward)


def tmax(a: Tensor, axis: int) -> Tensor:
    """Max over one axis; gradient flows to the (first) argmax positions."""
    out = a.data.max(axis=axis)
    arg = a.data.argmax(axis=axis)

    def backward(g):
        buf = np.zeros_like(a.data)
        np.put_along_axis(buf, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis)
        a._accum(buf)

    return _node(out, (a,), backward)


def segment_mean(a: Tensor, sizes: list[int]) -> Tensor:
    """Mean-pool contiguous row segments of a (L, D) tensor.

    sizes must sum to L; output row s is the mean of its segment.
    """
    if sum(sizes) != a.data.shape[0]:
        raise ShapeError(f"segment_mean: sizes sum {sum(sizes)} != rows {a.data.shape[0]}")
    bounds = np.cumsum([0] + list(sizes))[:-1]
    sums = np.add.reduceat(a.data, bounds, axis=0)
    sz = np.asarray(sizes, dtype=np.float64)[:, None]
    out = sums / sz

    def backward(g):
        a._accum(np.repeat(g / sz, sizes, axis=0))

    return _node(out, (a,), backward)


# -- parameter registry ------------------------------------------------------


class Module:
    """Minimal parameter container: attributes that are grad-requiring
    Tensors register as parameters, Module attributes as children, and
    dotted paths give every parameter a unique name.
    """

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            yield (prefix + name, p)
        for name, child in self._children.items():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())


class ModuleList(Module):
    def __init__(self, mods=()):
        super().__init__()
        self._items = []
        for m in mods:
            self.append(m)

    def append(self, mod: Module):
        self._children[f"s{len(self._items)}"] = mod
        self._items.append(mod)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


class Namespace(Module):
    """Pure container used to build dotted parameter paths."""


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class LinearLayer(Module):
    """Learnable affine map x @ weight + bias, weight shaped (d_in, d_out)."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, zero_init: bool = False):
        super().__init__()
        if zero_init:
            w = np.zeros((d_in, d_out))
        else:
            w = uniform_init(rng, (d_in, d_out), d_in)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(d_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        super().__init__()
        self.gamma = Tensor(np.ones(d), requires_grad=True)
        self.beta = Tensor(np.zeros(d), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta, self.eps)


# -- gradient verification ----------------------------------------------------


def grad_check(f, params, h: float = 1e-5) -> float:
    """Compare reverse-mode gradients of scalar f() against central finite
    differences, entry by entry, over every given parameter.

    params: iterable of (name, Tensor). Returns the worst relative error,
    |a - n| / max(1e-8, |a| + |n|). Raises NonFiniteError if any
    evaluation of f is non-finite.
    """
    params = list(params)
    for _, p in params:
        p.zero_grad()
    out = f()
    val = out.item()
    if not math.isfinite(val):
        raise NonFiniteError(f"grad_check: f evaluated to {val}")
    out.backward()
    analytic = {name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy()) for name, p in params}

    worst = 0.0
    with no_grad():
        for name, p in params:
            flat = p.data.reshape(-1)
            aflat = analytic[name].reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                fp = f().item()
                flat[i] = orig - h
                fm = f().item()
                flat[i] = orig
                if not (math.isfinite(fp) and math.isfinite(fm)):
                    raise NonFiniteError(f"grad_check: non-finite f near {name}[{i}]")
                num = (fp - fm) / (2.0 * h)
                a = aflat[i]
                rel = abs(a - num) / max(1e-8, abs(a) + abs(num))
                if rel > worst:
                    worst = rel
    return worst
