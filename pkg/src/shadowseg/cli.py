"""Command-line front end: ``shadowseg <command> [options]``.

Exit status is 0 on success, 1 on usage, configuration or contract errors
and 2 on I/O errors.  All diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import imgio
from .baseline import baseline_segment
from .errors import ConfigError, ShadowsegError
from .evalx import compare_methods, evaluate, read_report, write_comparison, write_report
from .measure import read_measurements, region_props, write_measurements
from .pipeline import ground_truth_regions, learned_labels
from .plots import histogram_svg, write_svg
from .runconfig import load_config, reference_text
from .segment import edge_overlay, segment_image
from .synth import BubbleSpec, generate_dataset, load_dataset
from .train import train_epochs, write_history
from .unet import init_params, load_checkpoint, predict, save_checkpoint

log = logging.getLogger("shadowseg")


class UsageError(ShadowsegError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage().rstrip()}")


def _path(cfg, value, key: str, flag: str) -> Path:
    p = value or cfg.path(key)
    if p is None:
        raise ConfigError(f"{flag} is required (or set paths.{key} in the config)")
    return Path(p)


def _bubbles(path) -> list[BubbleSpec]:
    return [BubbleSpec(r["cx"], r["cy"], r["r_eq"], r["aspect"], r["theta"]) for r in imgio.read_bubble_table(path)]


def _summary(report) -> str:
    ext = "n/a" if report.extraction_rate is None else f"{report.extraction_rate:.4f}"
    return (f"{report.method}: extraction {ext}, false positives {report.false_positive_rate:.4f} "
            f"({report.n_matched}/{report.n_gt} matched, {report.n_pred} detections)")


# -- commands ----------------------------------------------------------------------


def cmd_gen(args, cfg):
    if args.n < 0:
        raise ConfigError(f"--n must be non-negative, got {args.n}")
    out = _path(cfg, args.out, "out", "--out")
    manifest = generate_dataset(cfg.synth, args.n, out)
    log.info("wrote %d samples, manifest %s", args.n, manifest)


def cmd_train(args, cfg):
    data = _path(cfg, args.data, "data", "--data")
    out = _path(cfg, args.out, "model", "--out")
    dataset = load_dataset(data)
    ucfg = cfg.unet.build()
    params = init_params(ucfg, cfg.init.seed, head_bias=cfg.init.head_bias, head_gain=cfg.init.head_gain)
    ckpt_dir = Path(args.checkpoints) if args.checkpoints else out.parent / f"{out.stem}_checkpoints"
    log.info("training depth-%d/base-%d net on %d samples for %d epochs",
             ucfg.depth, ucfg.base_channels, len(dataset), cfg.train.epochs)
    params, history = train_epochs(params, dataset, cfg.train, cfg.loss,
                                   checkpoint_dir=ckpt_dir if cfg.train.checkpoint_every else None)
    imgio.ensure_dir(out.parent)
    save_checkpoint(params, ucfg, out)
    history_path = Path(args.history) if args.history else out.parent / f"{out.stem}_history.csv"
    write_history(history_path, history)
    log.info("final loss %.6f; model %s; history %s", history[-1].mean_loss, out, history_path)


def cmd_infer(args, cfg):
    params, _ = load_checkpoint(_path(cfg, args.model, "model", "--model"))
    out = imgio.ensure_dir(_path(cfg, args.out, "out", "--out"))
    for image_path in args.image:
        image_path = Path(image_path)
        binary, centroid = predict(params, imgio.load_image(image_path))
        # The ReLU head is unbounded above; stored channels saturate at 1.
        imgio.save_image(np.clip(binary, 0, 1), out / f"{image_path.stem}_binary.pgm")
        imgio.save_image(np.clip(centroid, 0, 1), out / f"{image_path.stem}_centroid.pgm")
        log.info("%s -> %s", image_path, out)


def cmd_segment(args, cfg):
    binary = imgio.load_image(args.binary)
    centroid = imgio.load_image(args.centroid)
    labels = segment_image(binary, centroid, cfg.segment)
    out = Path(args.out)
    imgio.ensure_dir(out.parent)
    imgio.save_label_map(labels, out)
    if args.overlay:
        if not args.overlay_out:
            raise ConfigError("--overlay needs --overlay-out")
        imgio.save_image(edge_overlay(imgio.load_image(args.overlay), labels), args.overlay_out)
    log.info("%d regions -> %s", int(labels.max()), out)


def cmd_measure(args, cfg):
    regions = region_props(imgio.load_label_map(args.labels))
    out = Path(args.out)
    imgio.ensure_dir(out.parent)
    write_measurements(out, regions)
    log.info("%d regions -> %s", len(regions), out)


def cmd_eval(args, cfg):
    truths = [_bubbles(p) for p in args.gt]
    if args.self_check:
        if args.pred:
            raise ConfigError("--self and --pred are mutually exclusive")
        preds = [ground_truth_regions(b) for b in truths]
        method = args.method or "ground-truth"
    else:
        if len(args.pred or []) != len(truths):
            raise ConfigError(f"need one --pred file per --gt file, got {len(args.pred or [])} and {len(truths)}")
        preds = [read_measurements(p) for p in args.pred]
        method = args.method or "predicted"
    report = evaluate(preds, truths, cfg.eval.bin_width, method, cfg.eval.gates)
    out = Path(args.out)
    imgio.ensure_dir(out.parent)
    write_report(out, report)
    log.info("%s", _summary(report))


def cmd_compare(args, cfg):
    samples = load_dataset(_path(cfg, args.data, "test_data", "--data"))
    params, _ = load_checkpoint(_path(cfg, args.model, "model", "--model"))
    out = imgio.ensure_dir(_path(cfg, args.out, "out", "--out"))
    label_dir = imgio.ensure_dir(out / "labels")
    truths = [s.bubbles for s in samples]

    learned = learned_labels(params, [s.image for s in samples], cfg.segment)
    base = [baseline_segment(s.image, cfg.baseline) for s in samples]
    for k, (a, b) in enumerate(zip(learned, base)):
        imgio.save_label_map(a, label_dir / f"learned_{k:05d}.pgm")
        imgio.save_label_map(b, label_dir / f"baseline_{k:05d}.pgm")

    reports = {
        "learned": evaluate([region_props(x) for x in learned], truths, cfg.eval.bin_width, "learned", cfg.eval.gates),
        "baseline": evaluate([region_props(x) for x in base], truths, cfg.eval.bin_width, "baseline", cfg.eval.gates),
    }
    if args.oracle:
        gt_labels = [segment_image(s.gt_binary, s.gt_centroid, cfg.segment) for s in samples]
        reports["gt-channels"] = evaluate([region_props(x) for x in gt_labels], truths, cfg.eval.bin_width,
                                          "gt-channels", cfg.eval.gates)
    for name, rep in reports.items():
        write_report(out / f"{name}_report.csv", rep)
        log.info("%s", _summary(rep))
    write_comparison(out / "comparison.csv", compare_methods(reports["learned"], reports["baseline"]))
    _charts(list(reports.values()), out)


def _charts(reports, out: Path) -> None:
    gt = reports[0]
    write_svg(out / "size_distribution.svg", histogram_svg(
        "Equivalent radius distribution", "equivalent radius (px)",
        [(r.method, r.size_hist) for r in reports], gt.gt_size_hist))
    write_svg(out / "aspect_distribution.svg", histogram_svg(
        "Aspect ratio distribution", "aspect ratio",
        [(r.method, r.aspect_hist) for r in reports], gt.gt_aspect_hist))


def cmd_report(args, cfg):
    reports = [read_report(p) for p in args.reports]
    widths = {r.size_hist.bin_width for r in reports}
    if len(widths) > 1:
        raise ConfigError(f"reports use different size bin widths: {sorted(widths)}")
    out = imgio.ensure_dir(Path(args.out))
    _charts(reports, out)
    log.info("charts -> %s", out)


def cmd_config_reference(args, cfg):
    sys.stdout.write(reference_text())


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="shadowseg", description="Shadowgraph bubble segmentation pipeline.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def command(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="key=value run configuration file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.set_defaults(func=func)
        return p

    p = command("gen", cmd_gen, "generate a synthetic dataset with ground truth")
    p.add_argument("--out", help="output directory")
    p.add_argument("--n", type=int, required=True, help="number of samples")

    p = command("train", cmd_train, "train the U-net on a dataset")
    p.add_argument("--data", help="dataset directory or manifest")
    p.add_argument("--out", help="checkpoint file to write")
    p.add_argument("--history", help="loss history CSV (default: next to the checkpoint)")
    p.add_argument("--checkpoints", help="directory for periodic checkpoints")

    p = command("infer", cmd_infer, "run the network and save both output channels")
    p.add_argument("--model", help="checkpoint file")
    p.add_argument("--image", nargs="+", required=True, help="input images (P5 graymaps)")
    p.add_argument("--out", help="output directory")

    p = command("segment", cmd_segment, "split particles with the marker-controlled watershed")
    p.add_argument("--binary", required=True, help="binary channel image")
    p.add_argument("--centroid", required=True, help="centroid channel image")
    p.add_argument("--out", required=True, help="label map to write (16-bit P5)")
    p.add_argument("--overlay", help="image to draw region edges on")
    p.add_argument("--overlay-out", help="where to write the edge overlay")

    p = command("measure", cmd_measure, "measure size and shape of labeled regions")
    p.add_argument("--labels", required=True, help="label map (16-bit P5)")
    p.add_argument("--out", required=True, help="measurement CSV")

    p = command("eval", cmd_eval, "compare measurements with ground truth")
    p.add_argument("--gt", nargs="+", required=True, help="ground-truth bubble CSV files")
    p.add_argument("--pred", nargs="+", help="measurement CSV files, one per --gt file")
    p.add_argument("--self", dest="self_check", action="store_true",
                   help="evaluate the ground truth against itself")
    p.add_argument("--method", help="method name recorded in the report")
    p.add_argument("--out", required=True, help="report CSV")

    p = command("compare", cmd_compare, "evaluate learned and baseline segmentation on a dataset")
    p.add_argument("--data", help="test dataset directory or manifest")
    p.add_argument("--model", help="checkpoint file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--oracle", action="store_true", help="also segment the ground-truth channels")

    p = command("report", cmd_report, "draw size and aspect charts from report CSVs")
    p.add_argument("--reports", nargs="+", required=True, help="report CSV files")
    p.add_argument("--out", required=True, help="output directory")

    command("config-reference", cmd_config_reference, "print every configuration key with its default")
    return parser


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    log.handlers[:] = [handler]
    log.propagate = False
    try:
        if not argv:
            raise UsageError(parser.format_help().rstrip())
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help().rstrip())
        log.setLevel(logging.DEBUG if args.verbose else logging.INFO)
        cfg = load_config(args.config, args.overrides)
        args.func(args, cfg)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except ConfigError as exc:
        log.error("%s", exc)
        print(parser.format_usage().rstrip(), file=sys.stderr)
        print("valid keys: shadowseg config-reference", file=sys.stderr)
        return 1
    except ShadowsegError as exc:
        log.error("%s", exc)
        return 1
    except OSError as exc:
        log.error("%s", exc)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    return 0


def main() -> None:
    sys.exit(run())
