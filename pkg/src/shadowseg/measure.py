"""Size and shape of labeled regions.

Size is the area-equivalent radius ``sqrt(A / pi)``.  Shape is the aspect
ratio of the ellipse with the same second moments as the region, where each
pixel is treated as a unit square (adding 1/12 to both axial variances).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage as ndi

MEASURE_CSV_HEADER = ("label", "area", "cx", "cy", "r_eq", "major", "minor", "aspect")


@dataclass(frozen=True)
class Region:
    label: int
    area: int
    cx: float
    cy: float
    r_eq: float
    major: float
    minor: float
    aspect: float
    bbox: tuple[int, int, int, int]  # (x0, y0, x1, y1), half-open

    @property
    def centroid(self) -> tuple[float, float]:
        return self.cx, self.cy


def region_props(labels: np.ndarray) -> list[Region]:
    lab = np.asarray(labels)
    nmax = int(lab.max(initial=0))
    if nmax == 0:
        return []
    flat = lab.ravel()
    ys, xs = np.divmod(np.arange(flat.size), lab.shape[1])
    fg = flat > 0
    flat, xs, ys = flat[fg], xs[fg].astype(np.float64), ys[fg].astype(np.float64)
    n = np.bincount(flat, minlength=nmax + 1).astype(np.float64)
    present = np.flatnonzero(n > 0)
    present = present[present > 0]
    safe = np.where(n > 0, n, 1.0)
    cx = np.bincount(flat, xs, nmax + 1) / safe
    cy = np.bincount(flat, ys, nmax + 1) / safe
    dx = xs - cx[flat]
    dy = ys - cy[flat]
    mxx = np.bincount(flat, dx * dx, nmax + 1) / safe + 1.0 / 12.0
    myy = np.bincount(flat, dy * dy, nmax + 1) / safe + 1.0 / 12.0
    mxy = np.bincount(flat, dx * dy, nmax + 1) / safe
    # Eigenvalues of [[mxx, mxy], [mxy, myy]], largest first.
    half_tr = 0.5 * (mxx + myy)
    disc = np.sqrt(0.25 * (mxx - myy) ** 2 + mxy**2)
    lam1 = half_tr + disc
    lam2 = half_tr - disc
    boxes = ndi.find_objects(lab)
    regions = []
    for lbl in present.tolist():
        sy, sx = boxes[lbl - 1]
        major = 4.0 * math.sqrt(lam1[lbl])
        minor = 4.0 * math.sqrt(max(lam2[lbl], 0.0))
        area = int(n[lbl])
        regions.append(
            Region(
                label=lbl,
                area=area,
                cx=float(cx[lbl]),
                cy=float(cy[lbl]),
                r_eq=math.sqrt(area / math.pi),
                major=major,
                minor=minor,
                aspect=major / minor,
                bbox=(sx.start, sy.start, sx.stop, sy.stop),
            )
        )
    return regions


def write_measurements(path, regions: list[Region]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MEASURE_CSV_HEADER)
        for r in regions:
            writer.writerow(
                [r.label, r.area, f"{r.cx:.6f}", f"{r.cy:.6f}", f"{r.r_eq:.6f}",
                 f"{r.major:.6f}", f"{r.minor:.6f}", f"{r.aspect:.6f}"]
            )


def read_measurements(path) -> list[Region]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        Region(
            label=int(r["label"]), area=int(r["area"]), cx=float(r["cx"]), cy=float(r["cy"]),
            r_eq=float(r["r_eq"]), major=float(r["major"]), minor=float(r["minor"]),
            aspect=float(r["aspect"]), bbox=(0, 0, 0, 0),
        )
        for r in rows
    ]
