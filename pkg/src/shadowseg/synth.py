"""Parametric synthetic bubble fields with pixel-exact ground truth.

Each bubble is an ellipse drawn as a dark rim, a mid-gray interior and a
bright central highlight, blurred by its own defocus scale and composited
onto a noisy, linearly shaded background by per-pixel minimum.  The ground
truth is rasterized from the unblurred ellipses: a pixel belongs to a bubble
when its center lies inside the ellipse.

Coordinates follow the image convention: x to the right, y down, the origin
at the center of the top-left pixel.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import ndimage as ndi

from . import imgio
from .errors import ConfigError

RIM_LEVEL = 0.1
INTERIOR_LEVEL = 0.5
HIGHLIGHT_LEVEL = 0.9
HIGHLIGHT_FRACTION = 0.3
CENTROID_RADIUS = 1.5


@dataclass(frozen=True)
class BubbleSpec:
    cx: float
    cy: float
    r_eq: float
    aspect: float = 1.0
    theta: float = 0.0
    blur_sigma: float = 1.0

    @property
    def semi_axes(self) -> tuple[float, float]:
        s = math.sqrt(self.aspect)
        return self.r_eq * s, self.r_eq / s

    @property
    def half_extent(self) -> tuple[float, float]:
        """Half width and half height of the ellipse's bounding box."""
        a, b = self.semi_axes
        c, s = math.cos(self.theta), math.sin(self.theta)
        return math.hypot(a * c, b * s), math.hypot(a * s, b * c)


@dataclass
class SynthConfig:
    width: int = 256
    height: int = 256
    bubble_count_mean: float = 100.0
    r_min: float = 4.0
    r_max: float = 8.0
    aspect_max: float = 2.0
    background_level: float = 0.85
    gradient_amplitude: float = 0.05
    noise_sigma: float = 0.02
    rim_width: float = 1.5
    blur_min: float = 0.5
    blur_max: float = 1.5
    seed: int = 0

    def validate(self) -> "SynthConfig":
        if self.width < 1 or self.height < 1:
            raise ConfigError(f"image size must be positive, got {self.width}x{self.height}")
        if not 0 < self.r_min <= self.r_max:
            raise ConfigError(f"need 0 < r_min <= r_max, got {self.r_min}, {self.r_max}")
        if self.aspect_max < 1:
            raise ConfigError(f"aspect_max must be >= 1, got {self.aspect_max}")
        for name in ("background_level", "gradient_amplitude", "noise_sigma"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.bubble_count_mean < 0:
            raise ConfigError("bubble_count_mean must be non-negative")
        if self.rim_width < 0 or not 0 <= self.blur_min <= self.blur_max:
            raise ConfigError("rim_width and blur range must be non-negative")
        if self.seed < 0:
            raise ConfigError("seed must be an unsigned integer")
        # The largest ellipse must fit in any orientation.
        a_max = self.r_max * math.sqrt(self.aspect_max)
        if 2 * self.r_min > min(self.width, self.height):
            raise ConfigError(
                f"image {self.width}x{self.height} too small for bubbles of r_min={self.r_min}"
            )
        if 2 * a_max > min(self.width, self.height):
            raise ConfigError(
                f"image {self.width}x{self.height} too small for bubbles of "
                f"r_max={self.r_max} with aspect_max={self.aspect_max}"
            )
        return self


@dataclass
class DatasetSample:
    image: np.ndarray
    gt_binary: np.ndarray
    gt_centroid: np.ndarray
    bubbles: list[BubbleSpec] = field(default_factory=list)


def sample_bubbles(cfg: SynthConfig, rng: np.random.Generator) -> list[BubbleSpec]:
    cfg.validate()
    n = max(1, int(rng.poisson(cfg.bubble_count_mean)))
    r = rng.uniform(cfg.r_min, cfg.r_max, n)
    aspect = rng.uniform(1.0, cfg.aspect_max, n)
    theta = rng.uniform(0.0, math.pi, n)
    blur = rng.uniform(cfg.blur_min, cfg.blur_max, n)
    ux = rng.uniform(0.0, 1.0, n)
    uy = rng.uniform(0.0, 1.0, n)
    out = []
    for i in range(n):
        b = BubbleSpec(0.0, 0.0, float(r[i]), float(aspect[i]), float(theta[i]), float(blur[i]))
        hx, hy = b.half_extent
        # Pixel area spans [-0.5, size - 0.5].
        x_lo, x_hi = hx - 0.5, cfg.width - 0.5 - hx
        y_lo, y_hi = hy - 0.5, cfg.height - 0.5 - hy
        cx = x_lo + ux[i] * (x_hi - x_lo)
        cy = y_lo + uy[i] * (y_hi - y_lo)
        out.append(BubbleSpec(float(cx), float(cy), b.r_eq, b.aspect, b.theta, b.blur_sigma))
    return out


def _ellipse_coords(b: BubbleSpec, xs: np.ndarray, ys: np.ndarray):
    # Normalized radius rho (1 on the boundary) and distance from center.
    a, bb = b.semi_axes
    dx = xs - b.cx
    dy = ys - b.cy
    c, s = math.cos(b.theta), math.sin(b.theta)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    rho = np.sqrt((u / a) ** 2 + (v / bb) ** 2)
    return rho, np.hypot(dx, dy)


def ellipse_mask(b: BubbleSpec, shape: tuple[int, int]) -> np.ndarray:
    """Pixels whose centers lie inside the (closed) ellipse."""
    ys, xs = np.mgrid[0 : shape[0], 0 : shape[1]].astype(np.float64)
    rho, _ = _ellipse_coords(b, xs, ys)
    return rho <= 1.0


def centroid_mask(b: BubbleSpec, shape: tuple[int, int]) -> np.ndarray:
    ys, xs = np.mgrid[0 : shape[0], 0 : shape[1]]
    x0 = math.floor(b.cx + 0.5)
    y0 = math.floor(b.cy + 0.5)
    return (xs - x0) ** 2 + (ys - y0) ** 2 <= CENTROID_RADIUS**2


def _bubble_patch(b: BubbleSpec, cfg: SynthConfig):
    hx, hy = b.half_extent
    margin = 4.0 * b.blur_sigma + 2.0
    x0 = max(0, math.floor(b.cx - hx - margin))
    x1 = min(cfg.width, math.ceil(b.cx + hx + margin) + 1)
    y0 = max(0, math.floor(b.cy - hy - margin))
    y1 = min(cfg.height, math.ceil(b.cy + hy + margin) + 1)
    ys, xs = np.mgrid[y0:y1, x0:x1].astype(np.float64)
    rho, dist = _ellipse_coords(b, xs, ys)
    inside = rho <= 1.0
    # Distance to the boundary measured along the ray from the center.
    with np.errstate(divide="ignore", invalid="ignore"):
        to_edge = np.where(rho > 0, dist * (1.0 - rho) / rho, np.inf)
    patch = np.ones_like(rho)
    patch[inside] = INTERIOR_LEVEL
    patch[inside & (to_edge < cfg.rim_width)] = RIM_LEVEL
    patch[dist <= HIGHLIGHT_FRACTION * b.r_eq] = HIGHLIGHT_LEVEL
    if b.blur_sigma > 0:
        patch = ndi.gaussian_filter(patch, b.blur_sigma, mode="nearest")
    return (slice(y0, y1), slice(x0, x1)), patch, inside


def render_background(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    h, w = cfg.height, cfg.width
    phi = rng.uniform(0.0, 2 * math.pi)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    proj = xs * math.cos(phi) + ys * math.sin(phi)
    span = proj.max() - proj.min()
    ramp = (proj - proj.min()) / span - 0.5 if span > 0 else np.zeros_like(proj)
    bg = cfg.background_level + cfg.gradient_amplitude * ramp
    noise = rng.standard_normal((h, w))
    if cfg.noise_sigma > 0:
        bg = bg + cfg.noise_sigma * noise
    return np.clip(bg, 0.0, 1.0)


def render_field(
    bubbles: list[BubbleSpec], cfg: SynthConfig, rng: np.random.Generator
) -> DatasetSample:
    shape = (cfg.height, cfg.width)
    image = render_background(cfg, rng)
    gt_binary = np.zeros(shape, dtype=bool)
    gt_centroid = np.zeros(shape, dtype=bool)
    for b in bubbles:
        sl, patch, inside = _bubble_patch(b, cfg)
        np.minimum(image[sl], patch, out=image[sl])
        gt_binary[sl] |= inside
        gt_centroid |= centroid_mask(b, shape)
    return DatasetSample(
        image=image,
        gt_binary=gt_binary.astype(np.float64),
        gt_centroid=gt_centroid.astype(np.float64),
        bubbles=list(bubbles),
    )


def make_sample(cfg: SynthConfig, index: int = 0) -> DatasetSample:
    """Sample ``index`` of the dataset described by ``cfg`` (seed = cfg.seed + index)."""
    rng = np.random.default_rng(cfg.seed + index)
    bubbles = sample_bubbles(cfg, rng)
    return render_field(bubbles, cfg, rng)


def void_fraction(bubbles: list[BubbleSpec], width: int, height: int) -> float:
    """Overlap-unaware area fraction sum(pi r_eq^2) / (W H)."""
    return sum(math.pi * b.r_eq**2 for b in bubbles) / (width * height)


# -- dataset files ---------------------------------------------------------

MANIFEST_NAME = "manifest.txt"
MANIFEST_HEADER = "index,image_path,binary_path,centroid_path,csv_path"


def config_lines(cfg: SynthConfig) -> list[str]:
    return [f"synth.{k}={v!r}" if isinstance(v, float) else f"synth.{k}={v}"
            for k, v in asdict(cfg).items()]


def config_from_items(items: dict[str, str]) -> SynthConfig:
    kwargs = {}
    types = {f.name: f.type for f in fields(SynthConfig)}
    for key, raw in items.items():
        if key not in types:
            raise ConfigError(f"unknown synth key: {key}")
        kwargs[key] = int(raw) if types[key] in ("int", int) else float(raw)
    return SynthConfig(**kwargs)


def generate_dataset(cfg: SynthConfig, n_samples: int, out_dir) -> Path:
    """Write ``n_samples`` samples plus a manifest into ``out_dir``.

    Returns the manifest path.  Sample ``k`` depends only on ``cfg`` and
    ``k``, so any subset can be regenerated byte-identically.
    """
    cfg.validate()
    out = imgio.ensure_dir(out_dir)
    rows = []
    for k in range(n_samples):
        sample = make_sample(cfg, k)
        names = (f"image_{k:05d}.pgm", f"binary_{k:05d}.pgm",
                 f"centroid_{k:05d}.pgm", f"bubbles_{k:05d}.csv")
        imgio.save_image(sample.image, out / names[0])
        imgio.save_image(sample.gt_binary, out / names[1])
        imgio.save_image(sample.gt_centroid, out / names[2])
        shape = sample.image.shape
        imgio.write_bubble_table(
            out / names[3],
            [(i + 1, b.cx, b.cy, b.r_eq, b.aspect, b.theta, int(ellipse_mask(b, shape).sum()))
             for i, b in enumerate(sample.bubbles)],
        )
        rows.append(",".join([str(k), *names]))
    manifest = out / MANIFEST_NAME
    lines = [*config_lines(cfg), MANIFEST_HEADER, *rows]
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def read_manifest(path) -> tuple[SynthConfig, list[tuple[int, Path, Path, Path, Path]]]:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    base = path.parent
    items: dict[str, str] = {}
    entries = []
    in_table = False
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        if not in_table:
            if line == MANIFEST_HEADER:
                in_table = True
                continue
            key, sep, val = line.partition("=")
            if not sep or not key.startswith("synth."):
                raise ConfigError(f"{path}: bad manifest config line {line!r}")
            items[key[len("synth."):]] = val
        else:
            idx, *names = line.split(",")
            if len(names) != 4:
                raise ConfigError(f"{path}: bad manifest row {line!r}")
            entries.append((int(idx), *(base / n for n in names)))
    return config_from_items(items), entries


def load_dataset(path) -> list[DatasetSample]:
    """Load every sample listed in a manifest, bubbles included."""
    _, entries = read_manifest(path)
    samples = []
    for _, img_p, bin_p, cen_p, csv_p in entries:
        bubbles = [
            BubbleSpec(r["cx"], r["cy"], r["r_eq"], r["aspect"], r["theta"])
            for r in imgio.read_bubble_table(csv_p)
        ]
        samples.append(
            DatasetSample(
                image=imgio.load_image(img_p),
                gt_binary=imgio.load_image(bin_p),
                gt_centroid=imgio.load_image(cen_p),
                bubbles=bubbles,
            )
        )
    return samples
