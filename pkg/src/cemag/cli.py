"""Command line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ._validation import CemagError, ConfigError, DataError
from .charts import emit_svg_charts
from .data import load_csv, synth_gaussian, write_csv
from .harness import ExperimentConfig, emit_reports, load_report, run_dir_for, run_experiment
from .models import load_model
from .probe import batch_decompose, write_decompositions

log = logging.getLogger("cemag")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _StageFilter(logging.Filter):
    def filter(self, record):
        if not hasattr(record, "stage"):
            record.stage = record.name.rsplit(".", 1)[-1]
        return True


def _setup_logging(level: str) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(asctime)s %(stage)s %(message)s"))
    handler.addFilter(_StageFilter())
    root = logging.getLogger("cemag")
    root.handlers[:] = [handler]
    root.setLevel(level.upper())
    root.propagate = False


def _build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the configured seed")
    common.add_argument("--out", default=None, help="output directory or file")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    p = _Parser(prog="cemag", description="Classification-embedding diagnostics for imbalanced learning.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    run = sub.add_parser("run", parents=[common], help="run an experiment from a JSON config")
    run.add_argument("config")
    synth = sub.add_parser("synth-data", parents=[common], help="write a synthetic Gaussian dataset as CSV")
    synth.add_argument("spec")
    synth.add_argument("output")
    probe = sub.add_parser("probe", parents=[common], help="decompose predictions of a saved model")
    probe.add_argument("model")
    probe.add_argument("data")
    probe.add_argument("--header", action="store_true", help="data CSV has a header row")
    probe.add_argument("--label-column", type=int, default=-1)
    rep = sub.add_parser("report", parents=[common], help="re-emit charts for a report directory")
    rep.add_argument("report_dir")
    return p


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


def _cmd_run(args) -> int:
    try:
        cfg = ExperimentConfig.from_file(args.config)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.config}: {exc}") from None
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.output_dir = args.out
    out = run_dir_for(cfg)
    report = run_experiment(cfg)
    emit_reports(report, out)
    emit_svg_charts(report, out)
    failed = sum(c["status"] != "ok" for c in report.cells)
    log.info("wrote %s (%d failed cells)", out, failed, extra={"stage": "report"})
    print(out)
    return 0


def _cmd_synth(args) -> int:
    spec = _read_json(args.spec)
    seed = args.seed if args.seed is not None else spec.get("seed", 0)
    try:
        ds = synth_gaussian(spec, seed)
    except DataError as exc:
        raise ConfigError(str(exc)) from None
    write_csv(ds, args.output)
    log.info("wrote %d rows to %s", ds.n_samples, args.output, extra={"stage": "synth"})
    return 0


def _cmd_probe(args) -> int:
    try:
        model = load_model(args.model)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.model}: malformed JSON at line {exc.lineno}, column {exc.colno}") from None
    ds = load_csv(args.data, has_header=args.header, label_column=args.label_column, remap_labels=False)
    result = batch_decompose(model, ds)
    if args.out:
        n = write_decompositions(result.decompositions, args.out)
    else:
        n = write_decompositions(result.decompositions, sys.stdout)
    log.info("decomposed %d instances, %d true positives", n, int(result.tp_mask.sum()), extra={"stage": "probe"})
    return 0


def _cmd_report(args) -> int:
    report = load_report(args.report_dir)
    out = args.out or args.report_dir
    emit_svg_charts(report, out)
    print(out)
    return 0


_COMMANDS = {"run": _cmd_run, "synth-data": _cmd_synth, "probe": _cmd_probe, "report": _cmd_report}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    _setup_logging(args.log_level)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        log.error("%s", exc, extra={"stage": "config"})
        return 1
    except (CemagError, ValueError, OSError) as exc:
        log.error("%s", exc, extra={"stage": args.command})
        return 2


if __name__ == "__main__":
    sys.exit(main())
