"""Training objectives for the two network output channels.

The binary channel is trained with binary cross entropy, the centroid
channel with a mean squared error regularized by the squared total
variation of the prediction.  All losses are per-pixel means so their
magnitudes do not depend on image size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor import Tensor, _record, add, as_tensor, mean, mul, square, sub

TV_DELTA = 1e-8


@dataclass
class LossConfig:
    alpha: float = 1e-4
    clamp_eps: float = 1e-7
    w_binary: float = 1.0
    w_centroid: float = 1.0

    def validate(self) -> "LossConfig":
        if not 0 <= self.alpha <= 1:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0 < self.clamp_eps < 0.5:
            raise ConfigError(f"clamp_eps must lie in (0, 0.5), got {self.clamp_eps}")
        if self.w_binary < 0 or self.w_centroid < 0:
            raise ConfigError("channel weights must be non-negative")
        return self


def _check_pair(y: Tensor, x, op: str) -> np.ndarray:
    xd = x.data if isinstance(x, Tensor) else np.asarray(x)
    if y.shape != xd.shape:
        raise DimensionError(f"{op}: prediction shape {y.shape} != target shape {xd.shape}")
    return xd.astype(y.dtype, copy=False)


def bce_loss(y: Tensor, x, clamp_eps: float = 1e-7) -> Tensor:
    """Mean binary cross entropy of prediction ``y`` against target ``x``.

    ``y`` is clamped to ``[clamp_eps, 1 - clamp_eps]`` first, so the loss is
    finite for the unbounded ReLU head; clamped pixels pass no gradient.
    """
    xd = _check_pair(y, x, "bce_loss")
    lo = y.dtype.type(clamp_eps)
    hi = y.dtype.type(1.0 - clamp_eps)
    yc = np.clip(y.data, lo, hi)
    n = y.data.size
    val = -np.mean(xd * np.log(yc) + (1 - xd) * np.log1p(-yc))

    def vjp(g):
        inside = (y.data > lo) & (y.data < hi)
        gy = -(xd / yc - (1 - xd) / (1 - yc)) * (g / n)
        return (np.where(inside, gy, 0).astype(y.dtype, copy=False),)

    return _record(np.asarray(val, dtype=y.dtype), (y,), vjp)


def tv(y: Tensor) -> Tensor:
    """Isotropic total variation from backward differences.

    Differences that would reach outside the image count as zero.  The
    magnitude is smoothed as ``sqrt(d^2 + delta^2) - delta`` so it is
    differentiable on flat regions and exactly zero on constant images.
    A ``[N, H, W]`` input gives one value per image.
    """
    yd = y.data
    if yd.ndim not in (2, 3):
        raise DimensionError(f"tv: expected [H,W] or [N,H,W], got shape {y.shape}")
    di = np.zeros_like(yd)
    dj = np.zeros_like(yd)
    di[..., 1:, :] = yd[..., 1:, :] - yd[..., :-1, :]
    dj[..., :, 1:] = yd[..., :, 1:] - yd[..., :, :-1]
    delta = yd.dtype.type(TV_DELTA)
    mag = np.sqrt(di * di + dj * dj + delta * delta)
    val = (mag - delta).sum(axis=(-2, -1))

    def vjp(g):
        g = np.asarray(g)[..., None, None]
        ui = g * di / mag
        uj = g * dj / mag
        gy = ui + uj
        gy[..., :-1, :] -= ui[..., 1:, :]
        gy[..., :, :-1] -= uj[..., :, 1:]
        return (gy,)

    return _record(np.asarray(val, dtype=yd.dtype), (y,), vjp)


def tv_mse_loss(y: Tensor, x, alpha: float = 1e-4) -> Tensor:
    """``(1 - alpha) * mean((y - x)^2) + alpha * mean_images((tv(y) / (H W))^2)``."""
    xd = _check_pair(y, x, "tv_mse_loss")
    h, w = y.shape[-2:]
    mse = mean(square(sub(y, Tensor(xd))))
    if alpha == 0:
        return mse
    tv_norm = mul(tv(y), 1.0 / (h * w))
    return add(mul(mse, 1.0 - alpha), mul(mean(square(tv_norm)), alpha))


def loss_terms(binary_pair, centroid_pair, cfg: LossConfig) -> tuple[Tensor, Tensor, Tensor]:
    """Total loss plus its (unweighted) binary and centroid components."""
    yb, xb = binary_pair
    yc, xc = centroid_pair
    lb = bce_loss(as_tensor(yb), xb, cfg.clamp_eps)
    lc = tv_mse_loss(as_tensor(yc), xc, cfg.alpha)
    return add(mul(lb, cfg.w_binary), mul(lc, cfg.w_centroid)), lb, lc


def total_loss(binary_pair, centroid_pair, cfg: LossConfig | None = None) -> Tensor:
    """Weighted sum of the binary-channel BCE and the centroid-channel TV-MSE."""
    cfg = (cfg or LossConfig()).validate()
    return loss_terms(binary_pair, centroid_pair, cfg)[0]
