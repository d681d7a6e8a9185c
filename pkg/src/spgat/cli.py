"""Command-line entry point: ``spgat <subcommand> [--config F] [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .checks import TOLERANCE, gradient_suite
from .config import RunConfig, format_config, load_config
from .data import save_cube, save_labels, save_split, synth_scene
from .errors import ConfigError, SpgatError
from .metrics import EvalReport, SessionSummary
from .model import VARIANTS
from .render import render_map
from .train import (classification_map, evaluate, load_dataset, load_model, run_sessions,
                    save_model)

log = logging.getLogger("spgat")

EXIT_USAGE = 2


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="key = value run configuration")
    parser.add_argument("--seed", type=int, default=default, help="run seed (unsigned 64-bit)")
    parser.add_argument("--out", default=argparse.SUPPRESS if suppress else ".",
                        help="output directory (default: current directory)")
    parser.add_argument("--paper-scale", action="store_true",
                        default=argparse.SUPPRESS if suppress else False,
                        help="start from the published budget and widths")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spgat", description=__doc__)
    _global_flags(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        return p

    add("synth", "write the synthetic scene (cube, labels, split, config) to --out")
    add("train", "train the configured variant for all sessions and report test metrics")
    p = add("eval", "evaluate a saved model on the configured test split")
    p.add_argument("--model", required=True, help="model file written by 'train'")
    p = add("predict-map", "render a classification map as PPM")
    p.add_argument("--model", help="model file written by 'train'")
    p.add_argument("--ground-truth", action="store_true",
                   help="render the label map instead of predictions")
    add("gradcheck", "finite-difference check of every primitive and the full model")
    add("ablate", "train all four variants and compare their accuracy")
    return parser


def resolve_config(args) -> RunConfig:
    base = RunConfig.paper_scale() if args.paper_scale else RunConfig()
    config = load_config(args.config, base) if args.config else base
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    return config


# ------------------------------------------------------------------ reports

def _num(v) -> str:
    return repr(float(v))


def report_lines(prefix: str, report: EvalReport) -> list[str]:
    lines = [f"{prefix}oa = {_num(report.oa)}", f"{prefix}aa = {_num(report.aa)}",
             f"{prefix}kappa = {_num(report.kappa)}"]
    for c, acc in enumerate(report.per_class_acc, start=1):
        lines.append(f"{prefix}class{c}_acc = {_num(acc)}")
    return lines


def summary_lines(prefix: str, summary: SessionSummary) -> list[str]:
    lines = [f"{prefix}sessions = {len(summary.sessions)}",
             f"{prefix}oa = {_num(summary.oa)}", f"{prefix}aa = {_num(summary.aa)}",
             f"{prefix}kappa = {_num(summary.kappa)}"]
    for c, acc in enumerate(summary.per_class_acc, start=1):
        lines.append(f"{prefix}class{c}_acc = {_num(acc)}")
    for i, r in enumerate(summary.sessions):
        lines += report_lines(f"{prefix}session{i}.", r)
    return lines


def write_confusion(path: Path, cm: np.ndarray) -> None:
    k = cm.shape[0]
    rows = ["truth\\pred," + ",".join(str(c) for c in range(1, k + 1))]
    rows += [f"{i + 1}," + ",".join(str(int(v)) for v in row) for i, row in enumerate(cm)]
    path.write_text("\n".join(rows) + "\n")


def _write_lines(path: Path, lines: list[str]) -> None:
    path.write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------- commands

def cmd_synth(config: RunConfig, out: Path, args) -> int:
    seed = args.seed if args.seed is not None else config.synth_seed
    config = config.replace(synth_seed=seed)
    cube, labels = synth_scene(config.synth_classes, config.synth_bands, config.synth_height,
                               config.synth_width, config.synth_noise, config.synth_context,
                               seed)
    save_cube(cube, out / "scene.hdr", out / "scene.raw")
    save_labels(labels, out / "labels.raw")
    data = load_dataset(config)
    save_split(data.split, out / "split.csv")
    disk = config.replace(cube_header=str(out / "scene.hdr"), cube_data=str(out / "scene.raw"),
                          labels=str(out / "labels.raw"))
    (out / "scene.cfg").write_text(format_config(disk))
    print(f"wrote {cube.bands}x{cube.height}x{cube.width} scene with "
          f"{labels.num_classes} classes to {out}")
    return 0


def _session_logger(variant):
    def on_session(i, res):
        log.info("%s session %d: OA %.4f, final loss %.4f", variant, i, res.report.oa,
                 res.losses[-1])
    return on_session


def cmd_train(config: RunConfig, out: Path, args) -> int:
    data = load_dataset(config)

    def on_session(i, res):
        _session_logger(config.variant)(i, res)
        save_model(out / f"model_s{i}.npz", res.model, config)

    summary = run_sessions(config, data, on_session)
    _write_lines(out / "metrics.txt", [f"variant = {config.variant}"] + summary_lines("", summary))
    write_confusion(out / "confusion.csv", summary.confusion)
    for i, r in enumerate(summary.sessions):
        write_confusion(out / f"confusion_s{i}.csv", r.confusion)
    print(f"{config.variant}: mean OA {summary.oa:.4f}  AA {summary.aa:.4f}  "
          f"Kappa {summary.kappa:.4f} over {len(summary.sessions)} sessions")
    return 0


def cmd_eval(config: RunConfig, out: Path, args) -> int:
    model, saved = load_model(args.model)
    config = config if args.config else saved
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    data = load_dataset(config)
    report = evaluate(model, data.cube, data.split.test, data.classes)
    _write_lines(out / "metrics.txt", report_lines("", report))
    write_confusion(out / "confusion.csv", report.confusion)
    print(f"OA {report.oa:.4f}  AA {report.aa:.4f}  Kappa {report.kappa:.4f}")
    return 0


def cmd_predict_map(config: RunConfig, out: Path, args) -> int:
    if args.ground_truth:
        data = load_dataset(config)
        classes = data.labels.classes
        name = "truth.ppm"
    else:
        if not args.model:
            raise ConfigError("predict-map needs --model unless --ground-truth is given")
        model, saved = load_model(args.model)
        data = load_dataset(config if args.config else saved)
        classes = classification_map(model, data.cube, data.labels)
        name = "map.ppm"
    render_map(out / name, classes)
    print(f"wrote {out / name}")
    return 0


def cmd_gradcheck(config: RunConfig, out: Path, args) -> int:
    results = gradient_suite(seed=config.seed)
    ok = True
    for r in results:
        status = "PASS" if r.passed() else "FAIL"
        ok &= r.passed()
        print(f"{status} {r.name}: max relative error {r.worst:.2e}")
    print(f"{'all' if ok else 'not all'} gradient checks pass (tolerance {TOLERANCE:g})")
    return 0 if ok else 5


def cmd_ablate(config: RunConfig, out: Path, args) -> int:
    data = load_dataset(config)
    lines = []
    table = []
    for variant in VARIANTS:
        vcfg = config.replace(variant=variant)
        summary = run_sessions(vcfg, data, _session_logger(variant))
        lines += summary_lines(f"{variant}.", summary)
        write_confusion(out / f"confusion_{variant}.csv", summary.confusion)
        table.append((variant, summary))
    _write_lines(out / "metrics.txt", lines)
    print(f"{'variant':<10} {'OA':>8} {'AA':>8} {'Kappa':>8}")
    for variant, s in sorted(table, key=lambda t: -t[1].oa):
        print(f"{variant:<10} {s.oa:8.4f} {s.aa:8.4f} {s.kappa:8.4f}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict-map": cmd_predict_map,
    "gradcheck": cmd_gradcheck,
    "ablate": cmd_ablate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        config = resolve_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](config, out, args)
    except SpgatError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
