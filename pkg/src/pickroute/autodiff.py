"""A small reverse-mode autodiff engine over float64 numpy arrays.

Only the operations needed by the attention policy are provided.  Each op
returns a new :class:`Tensor` that remembers its parents and a closure that
pushes the output gradient back to them.  Recording can be switched off with
:func:`no_grad` for pure inference.
"""
from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

_GRAD_ENABLED = True


class ShapeError(ValueError):
    pass


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "parents", "backward_fn", "requires_grad")

    def __init__(self, data, parents: tuple = (), backward_fn: Callable | None = None,
                 requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __matmul__ = lambda self, other: matmul(self, other)
    __neg__ = lambda self: scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(as_tensor(other), -1.0))


class Parameter(Tensor):
    """A named leaf with persistent Adam moment buffers."""

    __slots__ = ("name", "m", "v", "t")

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)
        self.t = 0

    def zero_grad(self):
        self.grad = None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents: Sequence[Tensor], backward_fn) -> Tensor:
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(data, tuple(parents), backward_fn, True)
    return Tensor(data)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# -- elementwise ----------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    """Elementwise product (broadcasting)."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), backward)


def scale(a: Tensor, k: float) -> Tensor:
    return _make(a.data * k, (a,), lambda g: (g * k,))


def relu(a: Tensor) -> Tensor:
    on = a.data > 0
    return _make(np.where(on, a.data, 0.0), (a,), lambda g: (g * on,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out**2),))


def log(a: Tensor) -> Tensor:
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


# -- reductions and shape ops ---------------------------------------------------


def sum(a: Tensor, axis=None) -> Tensor:  # noqa: A001
    out = a.data.sum(axis=axis)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), backward)


def mean(a: Tensor) -> Tensor:
    return scale(sum(a), 1.0 / a.data.size)


def reshape(a: Tensor, shape) -> Tensor:
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def split_heads(a: Tensor, n_heads: int) -> Tensor:
    """(..., n, d) -> (..., heads, n, d / heads)."""
    *lead, n, d = a.shape
    if d % n_heads:
        raise ShapeError(f"split_heads: width {d} not divisible by {n_heads} heads")
    x = reshape(a, (*lead, n, n_heads, d // n_heads))
    k = len(lead)
    return transpose(x, (*range(k), k + 1, k, k + 2))


def concat_heads(a: Tensor) -> Tensor:
    """Inverse of :func:`split_heads`."""
    *lead, heads, n, dk = a.shape
    k = len(lead)
    x = transpose(a, (*range(k), k + 1, k, k + 2))
    return reshape(x, (*lead, n, heads * dk))


def gather_rows(a: Tensor, rows: Sequence[int]) -> Tensor:
    """Select rows of a 2-d tensor (repeats allowed)."""
    rows = np.asarray(rows, dtype=np.intp)

    def backward(g):
        out = np.zeros_like(a.data)
        np.add.at(out, rows, g)
        return (out,)

    return _make(a.data[rows], (a,), backward)


def pick(a: Tensor, cols: Sequence[int]) -> Tensor:
    """``a[i, cols[i]]`` for a 2-d tensor."""
    cols = np.asarray(cols, dtype=np.intp)
    rows = np.arange(len(cols))

    def backward(g):
        out = np.zeros_like(a.data)
        out[rows, cols] = g
        return (out,)

    return _make(a.data[rows, cols], (a,), backward)


# -- linear algebra ---------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 1 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(a.data @ b.data, (a, b), backward)


def masked_softmax(a: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis; entries where ``mask`` is True get probability 0."""
    x = a.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        if mask.all(axis=-1).any():
            raise ValueError("masked_softmax: a row is entirely masked")
        x = np.where(mask, -np.inf, x)
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    p = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return _make(p, (a,), backward)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise the last axis, then apply a learned gain and bias."""
    if gain.shape != a.shape[-1:] or bias.shape != a.shape[-1:]:
        raise ShapeError(f"layer_norm: gain/bias {gain.shape}/{bias.shape} vs input {a.shape}")
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc**2).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def backward(g):
        gx = g * gain.data
        d = x.shape[-1]
        ga = inv * (gx - gx.mean(axis=-1, keepdims=True)
                    - xhat * (gx * xhat).sum(axis=-1, keepdims=True) / d)
        return ga, _unbroadcast(g * xhat, gain.shape), _unbroadcast(g, bias.shape)

    return _make(out, (a, gain, bias), backward)


# -- backward -----------------------------------------------------------------------


def _topo_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        stack.extend((p, False) for p in node.parents if p.requires_grad and id(p) not in seen)
    return order


def backward(loss: Tensor, params: Iterable[Parameter] = ()) -> dict[str, np.ndarray]:
    """Accumulate d(loss)/d(param) into ``param.grad``.

    Parameter gradients must be zeroed between calls; a second backward pass
    into an un-zeroed parameter raises.  Returns ``{name: grad}`` for
    ``params`` (zeros for any parameter the loss does not depend on).
    """
    if loss.data.size != 1 or loss.data.ndim != 0:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    params = list(params)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    order = _topo_order(loss) if loss.requires_grad else []
    leaves = [n for n in order if isinstance(n, Parameter)]
    for p in leaves:
        if p.grad is not None:
            raise RuntimeError(f"parameter {p.name!r} already holds a gradient; zero it first")
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if isinstance(node, Parameter):
            node.grad = g
            continue
        if node.backward_fn is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
    out = {}
    for p in params:
        out[p.name] = p.grad if p.grad is not None else np.zeros_like(p.data)
    return out


def finite_diff_check(f: Callable[[], Tensor], params: Sequence[Parameter], eps: float = 1e-5) -> float:
    """Largest |autodiff - central difference| / max(1, |central difference|)."""
    for p in params:
        p.zero_grad()
    analytic = backward(f(), params)
    worst = 0.0
    with no_grad():
        for p in params:
            flat = p.data.reshape(-1)
            ga = analytic[p.name].reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                hi = f().item()
                flat[i] = orig - eps
                lo = f().item()
                flat[i] = orig
                fd = (hi - lo) / (2 * eps)
                worst = max(worst, abs(ga[i] - fd) / max(1.0, abs(fd)))
    for p in params:
        p.zero_grad()
    return worst


# -- optimiser ----------------------------------------------------------------------


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")


def adam_step(params: Sequence[Parameter], grads: dict[str, np.ndarray], cfg: AdamConfig) -> None:
    for p in params:
        g = grads[p.name]
        p.t += 1
        p.m = cfg.beta1 * p.m + (1 - cfg.beta1) * g
        p.v = cfg.beta2 * p.v + (1 - cfg.beta2) * g * g
        m_hat = p.m / (1 - cfg.beta1**p.t)
        v_hat = p.v / (1 - cfg.beta2**p.t)
        p.data -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(float(np.sum([np.sum(g * g) for g in grads.values()])))
