"""Shared oracles for the test-suite."""

import numpy as np

from shadowseg.tensor import GradTape, Tensor, finite_diff_grad


def rel_error(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def grad_check(build, arrays, eps=1e-6) -> float:
    """Worst relative error between tape and central-difference gradients.

    ``build`` maps a list of float64 Tensors to a scalar Tensor.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    with GradTape() as tape:
        out = build(leaves)
    analytic = tape.gradient(out, leaves)
    worst = 0.0
    for k, a in enumerate(arrays):
        def f(v, k=k):
            args = [Tensor(x) for x in arrays]
            args[k] = Tensor(v)
            return build(args).item()

        worst = max(worst, rel_error(analytic[k], finite_diff_grad(f, a, eps)))
    return worst


def away_from_zero(rng, shape, lo=-2.0, hi=2.0, gap=0.05):
    """Uniform values on [lo, hi] with no entry closer than ``gap`` to 0."""
    v = rng.uniform(lo, hi, shape)
    return np.where(np.abs(v) < gap, np.copysign(gap, v) + v, v)


def brute_force_distance(mask: np.ndarray) -> np.ndarray:
    """Euclidean distance to the nearest background pixel, border counting as background."""
    h, w = mask.shape
    padded = np.zeros((h + 2, w + 2), dtype=bool)
    padded[1:-1, 1:-1] = mask
    by, bx = np.nonzero(~padded)
    out = np.zeros((h, w))
    for y, x in zip(*np.nonzero(mask)):
        out[y, x] = np.sqrt(((by - (y + 1)) ** 2 + (bx - (x + 1)) ** 2).min())
    return out


def two_disc_case(rng, size=48):
    """Two equal overlapping discs with point markers at their centers.

    Returns (mask, markers, c1, c2, r).
    """
    r = rng.uniform(5, 10)
    sep = rng.uniform(0.8 * r, 1.8 * r)
    ang = rng.uniform(0, np.pi)
    mid = np.array([size / 2 - 0.5, size / 2 - 0.5]) + rng.uniform(-1, 1, 2)
    off = 0.5 * sep * np.array([np.cos(ang), np.sin(ang)])
    c1 = np.round(mid - off)
    c2 = np.round(mid + off)
    yy, xx = np.mgrid[0:size, 0:size]
    mask = ((xx - c1[0]) ** 2 + (yy - c1[1]) ** 2 <= r * r) | ((xx - c2[0]) ** 2 + (yy - c2[1]) ** 2 <= r * r)
    markers = np.zeros((size, size), dtype=np.int32)
    markers[int(c1[1]), int(c1[0])] = 1
    markers[int(c2[1]), int(c2[0])] = 2
    return mask, markers, c1, c2, r


def boundary_points(labels: np.ndarray) -> np.ndarray:
    """Midpoints ``(x, y)`` of 8-adjacent pixel pairs carrying different nonzero labels."""
    h, w = labels.shape
    padded = np.pad(labels, 1)
    pts = []
    for dy, dx in ((0, 1), (1, 0), (1, 1), (1, -1)):
        b = padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        ys, xs = np.nonzero((labels > 0) & (b > 0) & (labels != b))
        pts.append(np.stack([xs + dx / 2, ys + dy / 2], axis=1))
    return np.concatenate(pts)


def bisector_hausdorff(labels: np.ndarray, c1, c2, r: float) -> float:
    """Hausdorff distance between the label boundary and the bisector chord of two equal discs."""
    c1 = np.asarray(c1, float)
    c2 = np.asarray(c2, float)
    bpts = boundary_points(labels)
    d = c2 - c1
    dist = np.linalg.norm(d)
    n = d / dist
    t = np.array([-n[1], n[0]])
    m = (c1 + c2) / 2
    half = np.sqrt(max(r * r - dist * dist / 4, 0.0))
    chord = m + np.linspace(-half, half, 200)[:, None] * t
    if bpts.size == 0:
        return np.inf
    # boundary -> chord: distance to the segment
    rel = bpts - m
    along = np.clip(rel @ t, -half, half)
    to_chord = np.linalg.norm(rel - along[:, None] * t, axis=1).max()
    # chord -> boundary
    to_boundary = np.sqrt(((chord[:, None, :] - bpts[None]) ** 2).sum(-1)).min(axis=1).max()
    return float(max(to_chord, to_boundary))


def sampled_grad_check(build, arrays, rng, per_array=4, eps=1e-6) -> float:
    """Like :func:`grad_check` but compares only a few random coordinates per array."""
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    with GradTape() as tape:
        out = build(leaves)
    analytic = tape.gradient(out, leaves)
    got, want = [], []
    for k, a in enumerate(arrays):
        for flat in rng.choice(a.size, size=min(per_array, a.size), replace=False):
            vals = []
            for sign in (1, -1):
                args = [x.copy() for x in arrays]
                args[k].reshape(-1)[flat] += sign * eps
                vals.append(build([Tensor(x) for x in args]).item())
            want.append((vals[0] - vals[1]) / (2 * eps))
            got.append(analytic[k].reshape(-1)[flat])
    return rel_error(got, want)


ACCEPTANCE: list[str] = []


def verdict(number: int, ok: bool, detail: str) -> None:
    """Record one acceptance line; it is echoed in the terminal summary."""
    ACCEPTANCE.append(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
