"""Dense tensors with tape-based reverse-mode differentiation.

A :class:`GradTape` records every differentiable operation executed inside
its ``with`` block; :meth:`GradTape.gradient` then replays the recorded
adjoints in reverse order::

    w = Tensor(np.ones((4, 1, 3, 3)), requires_grad=True)
    with GradTape() as tape:
        y = conv2d(x, w, b)
        loss = mean(square(y))
    (gw,) = tape.gradient(loss, [w])

Feature maps use the ``[C, H, W]`` layout, optionally with a leading batch
axis ``[N, C, H, W]``; kernels are ``[Cout, Cin, Kh, Kw]``.  Operations keep
the dtype of their inputs: float32 for training, float64 for gradient checks.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError


class Tensor:
    """A numpy array plus the bookkeeping needed for differentiation."""

    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

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
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- tape -----------------------------------------------------------------

_local = threading.local()


def _active_tapes() -> list:
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = _local.tapes = []
    return stack


class GradTape:
    """Ordered record of executed operations, replayed backwards by :meth:`gradient`.

    A tape may be re-entered to record further operations (for example a
    loss computed after the forward pass).  Tapes are single-threaded.
    """

    def __init__(self):
        self.records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self):
        _active_tapes().append(self)
        return self

    def __exit__(self, *exc):
        _active_tapes().remove(self)
        return False

    def gradient(self, target: Tensor, sources: Sequence[Tensor]) -> list[np.ndarray]:
        """Adjoints of the scalar ``target`` with respect to each source."""
        if target.data.size != 1:
            raise ContractError(f"gradient seed must be a scalar, got shape {target.shape}")
        grads: dict[int, np.ndarray] = {id(target): np.ones_like(target.data)}
        for out, inputs, vjp in reversed(self.records):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            in_grads = vjp(g)
            for inp, gi in zip(inputs, in_grads):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
        return [
            grads.get(id(s), np.zeros_like(s.data)).reshape(s.shape).astype(s.dtype, copy=False)
            for s in sources
        ]


def backward(tape: GradTape, loss: Tensor, params) -> dict | list:
    """Gradients of ``loss`` for ``params`` (a mapping or a sequence of tensors)."""
    if isinstance(params, dict):
        keys = list(params)
        return dict(zip(keys, tape.gradient(loss, [params[k] for k in keys])))
    return tape.gradient(loss, list(params))


def _record(data: np.ndarray, inputs: tuple[Tensor, ...], vjp: Callable) -> Tensor:
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        for tape in _active_tapes():
            tape.records.append((out, inputs, vjp))
    return out


# -- elementwise ----------------------------------------------------------


def add(a, b) -> Tensor:
    """Sum of equal-shape tensors; a Python scalar or 0-d tensor broadcasts."""
    if not isinstance(a, Tensor):
        a, b = b, a
    if not isinstance(b, Tensor):
        c = a.data.dtype.type(b)
        return _record(a.data + c, (a,), lambda g: (g,))
    if a.shape == b.shape:
        return _record(a.data + b.data, (a, b), lambda g: (g, g))
    if a.data.ndim == 0 or b.data.ndim == 0:
        def vjp(g):
            ga = g.sum() if a.data.ndim == 0 else g
            gb = g.sum() if b.data.ndim == 0 else g
            return ga, gb
        return _record(a.data + b.data, (a, b), vjp)
    raise DimensionError(f"add: shape mismatch {a.shape} vs {b.shape}")


def sub(a, b) -> Tensor:
    return add(a, mul(as_tensor(b), -1.0))


def mul(a, b) -> Tensor:
    """Elementwise product of equal-shape tensors, or a tensor times a Python scalar."""
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        c = float(b)
        return _record(a.data * a.data.dtype.type(c), (a,), lambda g: (g * g.dtype.type(c),))
    if a.data.ndim == 0 or b.data.ndim == 0:
        def vjp_s(g):
            ga = g * b.data
            gb = g * a.data
            if a.data.ndim == 0:
                ga = ga.sum()
            if b.data.ndim == 0:
                gb = gb.sum()
            return ga, gb
        return _record(a.data * b.data, (a, b), vjp_s)
    if a.shape != b.shape:
        raise DimensionError(f"mul: shape mismatch {a.shape} vs {b.shape}")
    return _record(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def square(x: Tensor) -> Tensor:
    return _record(x.data * x.data, (x,), lambda g: (2 * g * x.data,))


def total(x: Tensor) -> Tensor:
    """Sum of all elements."""
    return _record(np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def mean(x: Tensor) -> Tensor:
    n = x.data.size
    return _record(
        np.asarray(x.data.mean()), (x,),
        lambda g: (np.full(x.shape, g / n, dtype=x.dtype),),
    )


def _sigmoid(v: np.ndarray) -> np.ndarray:
    # tanh form is overflow-free for large |v|.
    half = v.dtype.type(0.5)
    return half * (np.tanh(half * v) + 1)


def activation(x: Tensor, kind: str) -> Tensor:
    """Elementwise ``swish`` (v * sigmoid(v)), ``relu`` or ``sigmoid``."""
    v = x.data
    if kind == "relu":
        return _record(np.maximum(v, 0), (x,), lambda g: (g * (v > 0),))
    if kind == "sigmoid":
        s = _sigmoid(v)
        return _record(s, (x,), lambda g: (g * s * (1 - s),))
    if kind == "swish":
        s = _sigmoid(v)
        y = v * s
        return _record(y, (x,), lambda g: (g * (s + y * (1 - s)),))
    raise ContractError(f"unknown activation {kind!r}")


def swish(x: Tensor) -> Tensor:
    return activation(x, "swish")


def relu(x: Tensor) -> Tensor:
    return activation(x, "relu")


def sigmoid(x: Tensor) -> Tensor:
    return activation(x, "sigmoid")


# -- spatial --------------------------------------------------------------


def _as4d(x: Tensor, op: str) -> tuple[np.ndarray, bool]:
    if x.data.ndim == 3:
        return x.data[None], True
    if x.data.ndim == 4:
        return x.data, False
    raise DimensionError(f"{op}: expected [C,H,W] or [N,C,H,W], got shape {x.shape}")


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Stride-1 cross-correlation with 'same' zero padding plus per-channel bias."""
    xd, squeeze = _as4d(x, "conv2d")
    w = kernel.data
    if w.ndim != 4:
        raise DimensionError(f"conv2d: kernel must be [Cout,Cin,Kh,Kw], got {kernel.shape}")
    cout, cin, kh, kw = w.shape
    n, c, h, wd = xd.shape
    if c != cin:
        raise DimensionError(f"conv2d: input shape {x.shape} incompatible with kernel {kernel.shape}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise DimensionError(f"conv2d: kernel extents must be odd, got {kernel.shape}")
    if bias.shape != (cout,):
        raise DimensionError(f"conv2d: bias shape {bias.shape} does not match kernel {kernel.shape}")
    ph, pw = kh // 2, kw // 2
    hw = h * wd
    if kh == 1 and kw == 1:
        cols = xd.reshape(n, c, hw)
    else:
        xp = np.zeros((n, c, h + 2 * ph, wd + 2 * pw), dtype=xd.dtype)
        xp[:, :, ph : ph + h, pw : pw + wd] = xd
        cols6 = np.empty((n, c, kh, kw, h, wd), dtype=xd.dtype)
        for i in range(kh):
            for j in range(kw):
                cols6[:, :, i, j] = xp[:, :, i : i + h, j : j + wd]
        cols = cols6.reshape(n, c * kh * kw, hw)
    wmat = w.reshape(cout, -1)
    out = np.matmul(wmat, cols) + bias.data[:, None]
    out = out.reshape(n, cout, h, wd)

    def vjp(g):
        g4 = g[None] if squeeze else g
        gm = g4.reshape(n, cout, hw)
        gw = np.matmul(gm, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
        gb = gm.sum(axis=(0, 2))
        gx = None
        if x.requires_grad:
            gcols = np.matmul(wmat.T, gm)
            if kh == 1 and kw == 1:
                gx = gcols.reshape(n, c, h, wd)
            else:
                gcols6 = gcols.reshape(n, c, kh, kw, h, wd)
                gxp = np.zeros((n, c, h + 2 * ph, wd + 2 * pw), dtype=g.dtype)
                for i in range(kh):
                    for j in range(kw):
                        gxp[:, :, i : i + h, j : j + wd] += gcols6[:, :, i, j]
                gx = gxp[:, :, ph : ph + h, pw : pw + wd]
            if squeeze:
                gx = gx[0]
        return gx, gw, gb

    return _record(out[0] if squeeze else out, (x, kernel, bias), vjp)


def maxpool2(x: Tensor) -> Tensor:
    """Non-overlapping 2x2 max pooling; ties go to the first element in row-major order."""
    xd, squeeze = _as4d(x, "maxpool2")
    n, c, h, w = xd.shape
    if h % 2 or w % 2:
        raise DimensionError(f"maxpool2: spatial extents must be even, got shape {x.shape}")
    win = xd.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def vjp(g):
        g4 = g[None] if squeeze else g
        gwin = np.zeros(win.shape, dtype=g.dtype)
        np.put_along_axis(gwin, arg[..., None], g4[..., None], axis=-1)
        gx = gwin.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        return (gx[0] if squeeze else gx,)

    return _record(out[0] if squeeze else out, (x,), vjp)


def maxpool2_argmax(x: np.ndarray) -> np.ndarray:
    """Window-local argmax (0..3, row-major) recorded by :func:`maxpool2`."""
    xd = x[None] if x.ndim == 3 else x
    n, c, h, w = xd.shape
    win = xd.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    arg = win.argmax(axis=-1)
    return arg[0] if x.ndim == 3 else arg


def upsample2(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x upsampling."""
    xd, squeeze = _as4d(x, "upsample2")
    out = xd.repeat(2, axis=2).repeat(2, axis=3)
    n, c, h, w = xd.shape

    def vjp(g):
        g4 = g[None] if squeeze else g
        gx = g4.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5))
        return (gx[0] if squeeze else gx,)

    return _record(out[0] if squeeze else out, (x,), vjp)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    axis = a.data.ndim - 3
    if a.data.ndim != b.data.ndim or a.shape[:axis] != b.shape[:axis] or a.shape[axis + 1 :] != b.shape[axis + 1 :]:
        raise DimensionError(f"concat_channels: incompatible shapes {a.shape} and {b.shape}")
    ca = a.shape[axis]
    out = np.concatenate([a.data, b.data], axis=axis)

    def vjp(g):
        idx_a = [slice(None)] * g.ndim
        idx_b = [slice(None)] * g.ndim
        idx_a[axis] = slice(0, ca)
        idx_b[axis] = slice(ca, None)
        return g[tuple(idx_a)], g[tuple(idx_b)]

    return _record(out, (a, b), vjp)


def channel(x: Tensor, index: int) -> Tensor:
    """Select one channel: ``[C,H,W] -> [H,W]`` or ``[N,C,H,W] -> [N,H,W]``."""
    axis = x.data.ndim - 3
    sel = [slice(None)] * x.data.ndim
    sel[axis] = index
    sel = tuple(sel)

    def vjp(g):
        gx = np.zeros(x.shape, dtype=g.dtype)
        gx[sel] = g
        return (gx,)

    return _record(x.data[sel], (x,), vjp)


# -- testing oracle -------------------------------------------------------


def finite_diff_grad(f: Callable[[np.ndarray], float], x, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of an array."""
    if eps <= 0:
        raise ContractError("eps must be positive")
    x = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(x))
        flat[i] = orig - eps
        fm = float(f(x))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return grad
