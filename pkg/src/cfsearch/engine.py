"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

A ``Tensor`` wraps a numpy array; operations record a backward closure
and their parents, and ``Tensor.backward()`` walks the graph in reverse
topological order.  Gradients accumulate: a second backward pass, or a
second use of the same tensor, adds into ``grad`` rather than replacing
it, which is what the gradient-accumulation step of supernet training
relies on.  Call ``zero_grad`` to reset.

Only the operations the toy networks need are implemented.  Everything
is float64 and single-threaded per evaluation, so identical inputs give
bit-identical outputs.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ShapeError

Array = np.ndarray


def _sigmoid(x: Array) -> Array:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data: Array = np.asarray(data, dtype=np.float64)
        self.grad: Array | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[Array], Sequence[Array | None]] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- graph construction ------------------------------------------------

    @staticmethod
    def _make(data: Array, parents: tuple["Tensor", ...], backward) -> "Tensor":
        needs = any(p.requires_grad for p in parents)
        out = Tensor(data, requires_grad=needs)
        if needs:
            out._parents = parents
            out._backward = backward
        return out

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every ancestor."""
        if self.data.size != 1:
            raise ShapeError(f"backward needs a scalar, got shape {self.data.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
        grads: dict[int, Array] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g
            if node._backward is None:
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] += pg
                else:
                    grads[id(parent)] = pg

    # -- arithmetic --------------------------------------------------------

    @staticmethod
    def _coerce(other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other)

    def __add__(self, other) -> "Tensor":
        other = Tensor._coerce(other)
        a, b = self, other
        return Tensor._make(
            a.data + b.data,
            (a, b),
            lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
        )

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        other = Tensor._coerce(other)
        a, b = self, other
        return Tensor._make(
            a.data - b.data,
            (a, b),
            lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)),
        )

    def __neg__(self) -> "Tensor":
        return Tensor._make(-self.data, (self,), lambda g: (-g,))

    def __mul__(self, other) -> "Tensor":
        other = Tensor._coerce(other)
        a, b = self, other
        return Tensor._make(
            a.data * b.data,
            (a, b),
            lambda g: (
                _unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape),
            ),
        )

    __rmul__ = __mul__

    def matmul(self, other: "Tensor") -> "Tensor":
        a, b = self, other
        return Tensor._make(
            a.data @ b.data,
            (a, b),
            lambda g: (g @ b.data.T, a.data.T @ g),
        )

    # -- shape ops ---------------------------------------------------------

    def reshape(self, *shape: int) -> "Tensor":
        src = self
        return Tensor._make(
            src.data.reshape(shape),
            (src,),
            lambda g: (g.reshape(src.data.shape),),
        )


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return Tensor._make(y, (x,), lambda g: (g * (1.0 - y * y),))


def softplus(x: Tensor) -> Tensor:
    y = np.logaddexp(0.0, x.data)
    return Tensor._make(y, (x,), lambda g: (g * _sigmoid(x.data),))


def absolute(x: Tensor) -> Tensor:
    return Tensor._make(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def square(x: Tensor) -> Tensor:
    return Tensor._make(x.data * x.data, (x,), lambda g: (g * 2.0 * x.data,))


def rsqrt(x: Tensor) -> Tensor:
    y = 1.0 / np.sqrt(x.data)
    return Tensor._make(y, (x,), lambda g: (g * (-0.5) * y**3,))


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size
    return Tensor._make(
        np.asarray(x.data.mean()),
        (x,),
        lambda g: (np.broadcast_to(g / n, x.data.shape).copy(),),
    )


def sum_all(x: Tensor) -> Tensor:
    return Tensor._make(
        np.asarray(x.data.sum()),
        (x,),
        lambda g: (np.broadcast_to(g, x.data.shape).copy(),),
    )


def mean_axis(x: Tensor, axis: int) -> Tensor:
    """Mean along one axis, keeping it as size 1."""
    n = x.data.shape[axis]
    y = x.data.mean(axis=axis, keepdims=True)
    return Tensor._make(
        y,
        (x,),
        lambda g: (np.broadcast_to(g / n, x.data.shape).copy(),),
    )


def conv1d(x: Tensor, w: Tensor) -> Tensor:
    """Same-length 1-D convolution.

    ``x`` is (batch, c_in, sites); ``w`` is (c_out, c_in, k) with odd k.
    Input is zero padded by k // 2 on both sides.
    """
    kernel = w.data.shape[2]
    if kernel % 2 != 1:
        raise ShapeError(f"conv kernels must be odd, got {kernel}")
    if x.data.ndim != 3 or w.data.ndim != 3 or x.data.shape[1] != w.data.shape[1]:
        raise ShapeError(
            f"conv1d shape mismatch: input {x.data.shape} vs weight {w.data.shape}"
        )
    pad = kernel // 2
    sites = x.data.shape[2]
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(xp, kernel, axis=2)
    y = np.einsum("oik,bisk->bos", w.data, win, optimize=True)

    def backward(g: Array):
        gw = np.einsum("bos,bisk->oik", g, win, optimize=True)
        spread = np.einsum("bos,oik->bisk", g, w.data, optimize=True)
        gxp = np.zeros_like(xp)
        for k in range(kernel):
            gxp[:, :, k : k + sites] += spread[:, :, :, k]
        gx = gxp[:, :, pad : pad + sites] if pad else gxp
        return gx, gw

    return Tensor._make(y, (x, w), backward)


def dwconv1d(x: Tensor, w: Tensor) -> Tensor:
    """Channelwise 1-D convolution: ``w`` is (channels, k) with odd k."""
    kernel = w.data.shape[1]
    if kernel % 2 != 1:
        raise ShapeError(f"conv kernels must be odd, got {kernel}")
    if x.data.ndim != 3 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(
            f"dwconv1d shape mismatch: input {x.data.shape} vs weight {w.data.shape}"
        )
    pad = kernel // 2
    sites = x.data.shape[2]
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(xp, kernel, axis=2)
    y = np.einsum("ck,bcsk->bcs", w.data, win, optimize=True)

    def backward(g: Array):
        gw = np.einsum("bcs,bcsk->ck", g, win, optimize=True)
        spread = g[:, :, :, None] * w.data[None, :, None, :]
        gxp = np.zeros_like(xp)
        for k in range(kernel):
            gxp[:, :, k : k + sites] += spread[:, :, :, k]
        gx = gxp[:, :, pad : pad + sites] if pad else gxp
        return gx, gw

    return Tensor._make(y, (x, w), backward)


def adapt_channels(x: Tensor, target: int) -> Tensor:
    """Truncate or zero-pad the channel axis to ``target`` channels.

    Parameter-free skip-path adapter: carries the leading channels and
    fills any missing ones with zeros.
    """
    channels = x.data.shape[1]
    if channels == target:
        return x
    if channels > target:
        y = x.data[:, :target]

        def backward(g: Array):
            gx = np.zeros_like(x.data)
            gx[:, :target] = g
            return (gx,)

        return Tensor._make(y.copy(), (x,), backward)
    padding = target - channels
    y = np.pad(x.data, ((0, 0), (0, padding), (0, 0)))
    return Tensor._make(y, (x,), lambda g: (g[:, :channels].copy(),))


def upsample_repeat(x: Tensor, factor: int) -> Tensor:
    """Repeat each site ``factor`` times along the last axis."""
    if factor == 1:
        return x
    y = np.repeat(x.data, factor, axis=2)

    def backward(g: Array):
        b, c, s = x.data.shape
        return (g.reshape(b, c, s, factor).sum(axis=3),)

    return Tensor._make(y, (x,), backward)


def downsample_mean(x: Tensor, factor: int) -> Tensor:
    """Average pool along the last axis by an exact ``factor``."""
    if factor == 1:
        return x
    b, c, s = x.data.shape
    if s % factor != 0:
        raise ShapeError(f"cannot pool {s} sites by factor {factor}")
    y = x.data.reshape(b, c, s // factor, factor).mean(axis=3)

    def backward(g: Array):
        return (np.repeat(g, factor, axis=2) / factor,)

    return Tensor._make(y, (x,), backward)


def channel_rms_norm(x: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize each site by the RMS over channels (composite op)."""
    power = mean_axis(square(x), axis=1)
    return x * rsqrt(power + eps)


def finite_difference_gradient(
    fn: Callable[[], float], tensor: Tensor, step: float = 1e-5
) -> Array:
    """Central finite differences of ``fn`` with respect to ``tensor``.

    ``fn`` must recompute the scalar from current ``tensor.data``.  Used
    as the independent oracle for backward-pass checks; touches no
    autodiff machinery.
    """
    base = tensor.data
    grad = np.zeros_like(base)
    flat = base.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        hi = fn()
        flat[i] = keep - step
        lo = fn()
        flat[i] = keep
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad
