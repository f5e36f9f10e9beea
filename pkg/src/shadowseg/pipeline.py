"""End-to-end analysis: network channels, watershed split, region measurement."""

from __future__ import annotations

import numpy as np

from .baseline import BaselineConfig, baseline_segment
from .evalx import EvalReport, evaluate
from .measure import Region, region_props
from .segment import SegmentConfig, segment_image
from .unet import predict


def analyze(params, image: np.ndarray, seg_cfg: SegmentConfig | None = None):
    """Label map and regions for one shadow image."""
    binary, centroid = predict(params, image)
    labels = segment_image(binary, centroid, seg_cfg)
    return labels, region_props(labels)


def learned_labels(params, images, seg_cfg: SegmentConfig | None = None, batch: int = 8):
    """Label maps for a list of equal-size images, inferred in batches."""
    out = []
    for start in range(0, len(images), batch):
        stack = np.stack(images[start : start + batch])
        binary, centroid = predict(params, stack)
        out += [segment_image(b, c, seg_cfg) for b, c in zip(binary, centroid)]
    return out


def evaluate_learned(params, samples, seg_cfg=None, bin_width: float = 1.0) -> EvalReport:
    labels = learned_labels(params, [s.image for s in samples], seg_cfg)
    return evaluate([region_props(lab) for lab in labels], [s.bubbles for s in samples],
                    bin_width, method="learned")


def evaluate_baseline(samples, base_cfg: BaselineConfig | None = None, bin_width: float = 1.0) -> EvalReport:
    preds = [region_props(baseline_segment(s.image, base_cfg)) for s in samples]
    return evaluate(preds, [s.bubbles for s in samples], bin_width, method="baseline")


def evaluate_oracle(samples, seg_cfg=None, bin_width: float = 1.0) -> EvalReport:
    """Segment the ground-truth channels directly, bypassing the network."""
    preds = [region_props(segment_image(s.gt_binary, s.gt_centroid, seg_cfg)) for s in samples]
    return evaluate(preds, [s.bubbles for s in samples], bin_width, method="gt-channels")


def ground_truth_regions(bubbles) -> list[Region]:
    """Regions carrying the analytic ground-truth values (for self-comparison)."""
    out = []
    for i, b in enumerate(bubbles, start=1):
        s = float(np.sqrt(b.aspect))
        out.append(Region(label=i, area=max(1, int(round(np.pi * b.r_eq**2))), cx=b.cx, cy=b.cy,
                          r_eq=b.r_eq, major=2 * b.r_eq * s, minor=2 * b.r_eq / s,
                          aspect=b.aspect, bbox=(0, 0, 0, 0)))
    return out
