"""Marker-controlled watershed on the distance transform of the binary channel.

The centroid channel supplies one marker per particle.  Flooding starts at
the markers and claims foreground pixels in order of decreasing distance to
the background, so two touching particles are split along the valley of the
distance map, which for equal discs is the perpendicular bisector of their
centers.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy import ndimage as ndi

from .errors import ConfigError, ContractError

EIGHT = np.ones((3, 3), dtype=bool)
_NEIGHBOURS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


@dataclass
class SegmentConfig:
    binary_threshold: float = 0.5
    marker_threshold: float = 0.5
    min_marker_area: int = 2

    def validate(self) -> "SegmentConfig":
        for name in ("binary_threshold", "marker_threshold"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ConfigError(f"{name} must lie in (0, 1), got {v}")
        if self.min_marker_area < 1:
            raise ConfigError(f"min_marker_area must be >= 1, got {self.min_marker_area}")
        return self


def label_components(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """8-connected components, numbered in row-major order of first pixel."""
    labels, n = ndi.label(np.asarray(mask, dtype=bool), structure=EIGHT)
    return labels.astype(np.int32), int(n)


def relabel_sequential(labels: np.ndarray) -> np.ndarray:
    """Renumber used labels to 1..K keeping their relative order."""
    used = np.unique(labels)
    used = used[used > 0]
    lut = np.zeros(int(labels.max(initial=0)) + 1, dtype=np.int32)
    lut[used] = np.arange(1, used.size + 1, dtype=np.int32)
    return lut[labels]


def extract_markers(centroid_channel: np.ndarray, cfg: SegmentConfig | None = None) -> np.ndarray:
    cfg = (cfg or SegmentConfig()).validate()
    labels, n = label_components(np.asarray(centroid_channel) >= cfg.marker_threshold)
    if n == 0:
        return labels
    areas = np.bincount(labels.ravel(), minlength=n + 1)
    small = areas < cfg.min_marker_area
    small[0] = False
    labels[small[labels]] = 0
    return relabel_sequential(labels)


# -- exact Euclidean distance transform --------------------------------------


def _lower_envelope(f: np.ndarray) -> np.ndarray:
    """Squared-distance transform along the last axis, all lines at once.

    For every line computes ``d(q) = min_p (q - p)^2 + f(p)`` by building the
    lower envelope of the parabolas rooted at each ``p``.  The usual
    per-line loops become masked updates over the whole batch of lines.
    """
    lines, n = f.shape
    rows = np.arange(lines)
    v = np.zeros((lines, n), dtype=np.int64)
    z = np.empty((lines, n + 1))
    z[:, 0] = -np.inf
    z[:, 1] = np.inf
    k = np.zeros(lines, dtype=np.int64)
    for q in range(1, n):
        fq = f[:, q] + q * q
        while True:
            vk = v[rows, k]
            s = (fq - (f[rows, vk] + vk * vk)) / (2 * (q - vk))
            drop = s <= z[rows, k]
            if not drop.any():
                break
            k[drop] -= 1
        k += 1
        v[rows, k] = q
        z[rows, k] = s
        z[rows, k + 1] = np.inf
    out = np.empty_like(f)
    k[:] = 0
    for q in range(n):
        while True:
            step = z[rows, k + 1] < q
            if not step.any():
                break
            k[step] += 1
        vk = v[rows, k]
        out[:, q] = (q - vk) ** 2 + f[rows, vk]
    return out


def squared_distance_transform(mask: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distance from foreground pixels to the background.

    The image is surrounded by a virtual one-pixel background frame.
    Returned values are integers stored as floats; background is 0.
    """
    m = np.asarray(mask, dtype=bool)
    h, w = m.shape
    padded = np.zeros((h + 2, w + 2), dtype=bool)
    padded[1:-1, 1:-1] = m
    # Any value above the largest possible squared distance acts as infinity
    # and keeps the parabola intersections finite.
    big = float((h + 2) ** 2 + (w + 2) ** 2 + 1)
    f = np.where(padded, big, 0.0)
    cols = _lower_envelope(f.T).T
    d2 = _lower_envelope(cols)
    return d2[1:-1, 1:-1]


def distance_transform(mask: np.ndarray) -> np.ndarray:
    return np.sqrt(squared_distance_transform(mask))


# -- watershed ----------------------------------------------------------------


def watershed(mask: np.ndarray, markers: np.ndarray, dist: np.ndarray) -> np.ndarray:
    """Flood ``mask`` from ``markers`` over ``-dist`` (8-connected priority flood).

    Pixels are claimed deepest first; ties are served first-in first-out.
    Foreground not reachable from any marker keeps label 0.
    """
    fg = np.asarray(mask, dtype=bool)
    markers = np.asarray(markers)
    if markers.shape != fg.shape or np.shape(dist) != fg.shape:
        raise ContractError(
            f"mask {fg.shape}, markers {markers.shape} and dist {np.shape(dist)} must match"
        )
    off = np.argwhere((markers > 0) & ~fg)
    if off.size:
        y, x = off[0]
        raise ContractError(f"marker pixel (x={x}, y={y}) lies outside the foreground")
    h, w = fg.shape
    out = markers.astype(np.int32).copy()
    # Flat views with a one-pixel frame avoid bounds checks in the loop.
    W = w + 2
    lab = np.zeros((h + 2, W), dtype=np.int32)
    lab[1:-1, 1:-1] = out
    free = np.zeros((h + 2, W), dtype=bool)
    free[1:-1, 1:-1] = fg & (out == 0)
    pri = np.zeros((h + 2, W))
    pri[1:-1, 1:-1] = -np.asarray(dist, dtype=np.float64)
    lab_f = lab.ravel()
    free_f = free.ravel()
    pri_f = pri.ravel().tolist()
    offsets = [dy * W + dx for dy, dx in _NEIGHBOURS]

    heap = []
    counter = 0
    for idx in np.flatnonzero(lab_f > 0).tolist():
        heap.append((pri_f[idx], counter, idx))
        counter += 1
    heapq.heapify(heap)
    push, pop = heapq.heappush, heapq.heappop
    while heap:
        _, _, idx = pop(heap)
        label = lab_f[idx]
        for o in offsets:
            nb = idx + o
            if free_f[nb]:
                free_f[nb] = False
                lab_f[nb] = label
                push(heap, (pri_f[nb], counter, nb))
                counter += 1
    return lab[1:-1, 1:-1].copy()


def segment_image(
    binary_channel: np.ndarray, centroid_channel: np.ndarray, cfg: SegmentConfig | None = None
) -> np.ndarray:
    """Label map of particles from the two network channels.

    Marker pixels outside the thresholded foreground are ignored.
    Foreground components without any marker are kept whole under fresh
    labels.  Labels are renumbered to 1..K in the end.
    """
    cfg = (cfg or SegmentConfig()).validate()
    mask = np.asarray(binary_channel) >= cfg.binary_threshold
    markers = extract_markers(centroid_channel, cfg)
    markers[~mask] = 0
    dist = distance_transform(mask)
    labels = watershed(mask, markers, dist)
    rest, n_rest = label_components(mask & (labels == 0))
    if n_rest:
        base = int(labels.max(initial=0))
        labels = np.where(rest > 0, rest + base, labels)
    return relabel_sequential(labels)


def region_edges(labels: np.ndarray) -> np.ndarray:
    """Labeled pixels with a 4-neighbour carrying a different label."""
    lab = np.pad(labels, 1, mode="constant")
    core = lab[1:-1, 1:-1]
    edge = np.zeros(labels.shape, dtype=bool)
    for sl in ((slice(None, -2), slice(1, -1)), (slice(2, None), slice(1, -1)),
               (slice(1, -1), slice(None, -2)), (slice(1, -1), slice(2, None))):
        edge |= lab[sl] != core
    return edge & (core > 0)


def edge_overlay(image: np.ndarray, labels: np.ndarray, level: float = 1.0) -> np.ndarray:
    """Grayscale copy of ``image`` with region outlines drawn at ``level``."""
    out = np.array(image, dtype=np.float64)
    out[region_edges(labels)] = level
    return out
