"""Threshold-and-watershed segmenter used as the conventional comparison arm.

Global Otsu binarization, hole filling, a small morphological opening, and
watershed from markers placed at the top of each component's distance map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage as ndi

from .errors import ConfigError
from .segment import distance_transform, label_components, relabel_sequential, watershed


@dataclass
class BaselineConfig:
    opening_radius: int = 1
    h_fraction: float = 0.3

    def validate(self) -> "BaselineConfig":
        if self.opening_radius < 0:
            raise ConfigError(f"opening_radius must be >= 0, got {self.opening_radius}")
        if not 0 < self.h_fraction < 1:
            raise ConfigError(f"h_fraction must lie in (0, 1), got {self.h_fraction}")
        return self


def otsu_threshold(img: np.ndarray) -> tuple[float, np.ndarray]:
    """Otsu threshold over 256 bins and the mask of dark pixels below it.

    Bin ``k`` holds values in ``[k/256, (k+1)/256)``; the returned threshold
    is the upper edge of the last bin of the dark class.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.min() == img.max():
        value = float(img.flat[0])
        return value, np.zeros(img.shape, dtype=bool)
    bins = np.minimum((img * 256).astype(np.int64), 255)
    hist = np.bincount(bins.ravel(), minlength=256).astype(np.float64)
    p = hist / hist.sum()
    centers = (np.arange(256) + 0.5) / 256
    w0 = np.cumsum(p)
    m0 = np.cumsum(p * centers)
    mt = m0[-1]
    w1 = 1.0 - w0
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mt * w0 - m0) ** 2 / (w0 * w1)
    between[(w0 <= 0) | (w1 <= 1e-15)] = -1.0
    t = int(np.argmax(between))
    threshold = (t + 1) / 256
    return threshold, img < threshold


def disk(radius: int) -> np.ndarray:
    r = int(radius)
    ys, xs = np.mgrid[-r : r + 1, -r : r + 1]
    return xs * xs + ys * ys <= r * r


def baseline_mask(img: np.ndarray, cfg: BaselineConfig) -> np.ndarray:
    _, mask = otsu_threshold(img)
    mask = ndi.binary_fill_holes(mask, structure=np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], bool))
    if cfg.opening_radius > 0:
        mask = ndi.binary_opening(mask, structure=disk(cfg.opening_radius))
    return mask


def baseline_segment(img: np.ndarray, cfg: BaselineConfig | None = None) -> np.ndarray:
    cfg = (cfg or BaselineConfig()).validate()
    mask = baseline_mask(img, cfg)
    dist = distance_transform(mask)
    comps, n = label_components(mask)
    if n == 0:
        return comps
    peak = ndi.maximum(dist, comps, index=np.arange(n + 1))
    peak = np.asarray(peak)
    level = (1.0 - cfg.h_fraction) * peak[comps]
    markers, _ = label_components(mask & (dist >= level))
    return relabel_sequential(watershed(mask, markers, dist))
