"""Matching detections to ground truth and summarizing the result.

A detection matches a ground-truth bubble when its centroid is within
``max(2, r_gt)`` pixels and its equivalent radius agrees within
``max(2, 0.5 r_gt)`` pixels.  Candidate pairs are accepted greedily by
increasing centroid distance, ties broken by ``(gt id, label)``, which makes
the matching independent of input order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError

ASPECT_BIN_WIDTH = 0.1
# Guards bin assignment against values like 0.3 / 0.1 = 2.9999999999999996.
_BIN_EPS = 1e-9


@dataclass(frozen=True)
class GroundTruth:
    id: int
    cx: float
    cy: float
    r_eq: float
    aspect: float = 1.0


def ground_truth(bubbles) -> list[GroundTruth]:
    """Ground-truth records (ids 1..n) from BubbleSpecs or bubble-table rows."""
    out = []
    for i, b in enumerate(bubbles, start=1):
        if isinstance(b, dict):
            out.append(GroundTruth(b["id"], b["cx"], b["cy"], b["r_eq"], b["aspect"]))
        else:
            out.append(GroundTruth(i, b.cx, b.cy, b.r_eq, b.aspect))
    return out


@dataclass
class MatchResult:
    pairs: list[tuple] = field(default_factory=list)  # (gt id, label, distance)
    unmatched_gt: list = field(default_factory=list)
    unmatched_pred: list = field(default_factory=list)


@dataclass
class MatchGates:
    min_center_px: float = 2.0
    min_radius_px: float = 2.0
    radius_fraction: float = 0.5


def match_regions(pred, gt, gates: MatchGates | None = None) -> MatchResult:
    """One-to-one greedy matching of predicted regions to ground-truth bubbles."""
    gates = gates or MatchGates()
    gt = list(gt)
    if gt and not isinstance(gt[0], GroundTruth):
        gt = ground_truth(gt)
    if not pred or not gt:
        return MatchResult([], sorted(g.id for g in gt), sorted(r.label for r in pred))
    px = np.array([r.cx for r in pred])
    py = np.array([r.cy for r in pred])
    pr = np.array([r.r_eq for r in pred])
    gx = np.array([g.cx for g in gt])
    gy = np.array([g.cy for g in gt])
    grr = np.array([g.r_eq for g in gt])
    d = np.hypot(gx[:, None] - px[None, :], gy[:, None] - py[None, :])
    ok = (d <= np.maximum(gates.min_center_px, grr)[:, None]) & (
        np.abs(pr[None, :] - grr[:, None])
        <= np.maximum(gates.min_radius_px, gates.radius_fraction * grr)[:, None]
    )
    gi, pj = np.nonzero(ok)
    cand = sorted(
        (float(d[i, j]), gt[i].id, pred[j].label) for i, j in zip(gi.tolist(), pj.tolist())
    )
    used_gt, used_pred = set(), set()
    pairs = []
    for dist, gid, lbl in cand:
        if gid in used_gt or lbl in used_pred:
            continue
        used_gt.add(gid)
        used_pred.add(lbl)
        pairs.append((gid, lbl, dist))
    pairs.sort(key=lambda p: (p[0], p[1]))
    return MatchResult(
        pairs,
        sorted(g.id for g in gt if g.id not in used_gt),
        sorted(r.label for r in pred if r.label not in used_pred),
    )


def merge_matches(results: list[MatchResult]) -> MatchResult:
    """Pool per-image matches; ids become ``(image index, id)``."""
    out = MatchResult()
    for k, m in enumerate(results):
        out.pairs += [((k, g), (k, p), d) for g, p, d in m.pairs]
        out.unmatched_gt += [(k, g) for g in m.unmatched_gt]
        out.unmatched_pred += [(k, p) for p in m.unmatched_pred]
    return out


@dataclass
class Histogram:
    bin_width: float
    k0: int  # first bin covers [k0 * w, (k0 + 1) * w)
    counts: np.ndarray

    @property
    def edges(self) -> np.ndarray:
        return (self.k0 + np.arange(self.counts.size + 1)) * self.bin_width

    @property
    def densities(self) -> np.ndarray:
        total = self.counts.sum()
        if total == 0:
            return np.zeros(self.counts.size)
        return self.counts / (total * self.bin_width)

    def aligned(self, k0: int, nbins: int) -> np.ndarray:
        """Counts re-indexed onto bins ``k0 .. k0 + nbins - 1``."""
        out = np.zeros(nbins, dtype=np.int64)
        lo = self.k0 - k0
        out[lo : lo + self.counts.size] = self.counts
        return out


def histogram(values, bin_width: float) -> Histogram:
    if bin_width <= 0:
        raise ContractError(f"bin width must be positive, got {bin_width}")
    v = np.asarray(list(values), dtype=np.float64)
    if v.size == 0:
        return Histogram(bin_width, 0, np.zeros(0, dtype=np.int64))
    k = np.floor(v / bin_width + _BIN_EPS).astype(np.int64)
    k0 = int(k.min())
    return Histogram(bin_width, k0, np.bincount(k - k0))


@dataclass
class EvalReport:
    method: str
    n_gt: int
    n_pred: int
    n_matched: int
    extraction_rate: float | None  # None when there is no ground truth
    false_positive_rate: float
    size_hist: Histogram
    aspect_hist: Histogram
    gt_size_hist: Histogram
    gt_aspect_hist: Histogram

    def metrics(self) -> dict[str, float | int | None]:
        return {
            "n_gt": self.n_gt,
            "n_pred": self.n_pred,
            "n_matched": self.n_matched,
            "extraction_rate": self.extraction_rate,
            "false_positive_rate": self.false_positive_rate,
            "size_bin_width": self.size_hist.bin_width,
        }


def compute_metrics(m: MatchResult, pred, gt, bin_width: float = 1.0, method: str = "") -> EvalReport:
    if bin_width <= 0:
        raise ContractError(f"bin width must be positive, got {bin_width}")
    n_gt, n_pred = len(gt), len(pred)
    matched = len(m.pairs)
    return EvalReport(
        method=method,
        n_gt=n_gt,
        n_pred=n_pred,
        n_matched=matched,
        extraction_rate=matched / n_gt if n_gt else None,
        false_positive_rate=len(m.unmatched_pred) / n_pred if n_pred else 0.0,
        size_hist=histogram((r.r_eq for r in pred), bin_width),
        aspect_hist=histogram((r.aspect for r in pred), ASPECT_BIN_WIDTH),
        gt_size_hist=histogram((g.r_eq for g in gt), bin_width),
        gt_aspect_hist=histogram((g.aspect for g in gt), ASPECT_BIN_WIDTH),
    )


def evaluate(predictions, truths, bin_width: float = 1.0, method: str = "",
             gates: MatchGates | None = None) -> EvalReport:
    """Pooled report over many images: ``predictions[k]`` are the regions of image k."""
    matches, all_pred, all_gt = [], [], []
    for pred, gt in zip(predictions, truths, strict=True):
        gt = ground_truth(gt) if gt and not isinstance(gt[0], GroundTruth) else list(gt)
        matches.append(match_regions(pred, gt, gates))
        all_pred += pred
        all_gt += gt
    return compute_metrics(merge_matches(matches), all_pred, all_gt, bin_width, method)


# -- comparison -----------------------------------------------------------------


@dataclass
class HistogramDiff:
    name: str
    edges: np.ndarray
    density_a: np.ndarray
    density_b: np.ndarray

    @property
    def difference(self) -> np.ndarray:
        return self.density_a - self.density_b


@dataclass
class Comparison:
    summary: list[tuple[str, float | None, float]]  # (method, extraction, fp), best first
    hist_diffs: list[HistogramDiff]


def _diff(name: str, a: Histogram, b: Histogram) -> HistogramDiff:
    if not math.isclose(a.bin_width, b.bin_width):
        raise ContractError(f"{name}: bin widths differ ({a.bin_width} vs {b.bin_width})")
    sizes = [h for h in (a, b) if h.counts.size]
    if not sizes:
        return HistogramDiff(name, np.zeros(1), np.zeros(0), np.zeros(0))
    k0 = min(h.k0 for h in sizes)
    k1 = max(h.k0 + h.counts.size for h in sizes)
    ha = Histogram(a.bin_width, k0, a.aligned(k0, k1 - k0) if a.counts.size else np.zeros(k1 - k0, int))
    hb = Histogram(b.bin_width, k0, b.aligned(k0, k1 - k0) if b.counts.size else np.zeros(k1 - k0, int))
    return HistogramDiff(name, ha.edges, ha.densities, hb.densities)


def compare_methods(report_a: EvalReport, report_b: EvalReport) -> Comparison:
    rows = [
        (r.method, r.extraction_rate, r.false_positive_rate) for r in (report_a, report_b)
    ]
    rows.sort(key=lambda row: -(row[1] if row[1] is not None else -1.0))
    diffs = [
        _diff("size", report_a.size_hist, report_b.size_hist),
        _diff("aspect", report_a.aspect_hist, report_b.aspect_hist),
    ]
    return Comparison(rows, diffs)


# -- CSV ------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def write_report(path, report: EvalReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value"])
        w.writerow(["method", report.method])
        for k, v in report.metrics().items():
            w.writerow([k, _fmt(v)])
        for name, h in (("size", report.size_hist), ("aspect", report.aspect_hist),
                        ("gt_size", report.gt_size_hist), ("gt_aspect", report.gt_aspect_hist)):
            edges, dens = h.edges, h.densities
            for i, c in enumerate(h.counts.tolist()):
                w.writerow(["hist", name, f"{edges[i]:.6f}", f"{edges[i + 1]:.6f}", c, f"{dens[i]:.6f}"])


def read_report(path) -> EvalReport:
    metrics: dict[str, str] = {}
    hists: dict[str, list[tuple[float, int]]] = {"size": [], "aspect": [], "gt_size": [], "gt_aspect": []}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["metric", "value"]:
            raise ContractError(f"{path}: not a report CSV")
        for row in reader:
            if row and row[0] == "hist":
                hists[row[1]].append((float(row[2]), int(row[4])))
            elif row:
                metrics[row[0]] = row[1]
    width = float(metrics["size_bin_width"])

    def build(rows, bw):
        if not rows:
            return Histogram(bw, 0, np.zeros(0, dtype=np.int64))
        k0 = int(round(rows[0][0] / bw))
        return Histogram(bw, k0, np.array([c for _, c in rows], dtype=np.int64))

    def num(key, cast):
        v = metrics[key]
        return None if v == "none" else cast(v)

    return EvalReport(
        method=metrics.get("method", ""),
        n_gt=num("n_gt", int),
        n_pred=num("n_pred", int),
        n_matched=num("n_matched", int),
        extraction_rate=num("extraction_rate", float),
        false_positive_rate=num("false_positive_rate", float),
        size_hist=build(hists["size"], width),
        aspect_hist=build(hists["aspect"], ASPECT_BIN_WIDTH),
        gt_size_hist=build(hists["gt_size"], width),
        gt_aspect_hist=build(hists["gt_aspect"], ASPECT_BIN_WIDTH),
    )


def write_comparison(path, comp: Comparison) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "method", "extraction_rate", "false_positive_rate"])
        for i, (name, ext, fp) in enumerate(comp.summary, start=1):
            w.writerow([i, name, _fmt(ext), _fmt(fp)])
        w.writerow(["hist", "bin_lo", "bin_hi", "density_a", "density_b", "difference"])
        for d in comp.hist_diffs:
            for i in range(d.density_a.size):
                w.writerow([d.name, f"{d.edges[i]:.6f}", f"{d.edges[i + 1]:.6f}",
                            f"{d.density_a[i]:.6f}", f"{d.density_b[i]:.6f}",
                            f"{d.difference[i]:.6f}"])
