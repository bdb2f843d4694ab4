"""Command-line driver: ``argo-nowcast {ingest,run,robustness,synth,report}``.

Every verb exits 0 on success, 1 on a data or model failure and 2 on a bad
command line or configuration. Failure messages name the stage and, when
known, the month.
"""

from __future__ import annotations

import argparse
import glob
import logging
import os
import sys
from typing import Sequence

import pandas as pd
import yaml

from .config import ALL_MODELS, ConfigError, RunConfig, load_config, merge
from .metrics import NAIVE, ReportError, check_report, format_robustness, format_table, relative_report, report_frame, robustness_study
from .models import ModelConfig, ModelKind, NowcastError, NowcastTrace, USES_QUERIES, design_columns, run_model
from .panel import MonthlyPanel, PanelError, ingest_panel, to_month, write_panel
from .synth import REGIMES, generate_synthetic, jitter_snapshots, write_synthetic

logger = logging.getLogger("argo_nowcast")


class StageError(Exception):
    """A pipeline failure tagged with the stage it happened in."""

    def __init__(self, stage: str, message: str, status: int = 1):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.status = status


def _write_csv(frame: pd.DataFrame, path: str) -> None:
    # fixed float format and line ending keep reruns byte-identical
    frame.to_csv(path, index=False, lineterminator="\n", float_format="%.10g")


def _write_text(text: str, path: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


# --------------------------------------------------------------------------
# pipeline stages
# --------------------------------------------------------------------------

def load_panel(config: RunConfig) -> MonthlyPanel:
    if not config.cases or not config.queries:
        raise StageError("config", "both cases and queries paths are required", 2)
    try:
        return ingest_panel(config.cases, config.queries, config.gdt, config.region, config.keep_incomplete)
    except PanelError as exc:
        raise StageError("ingest", str(exc)) from exc


def validate(config: RunConfig, panel: MonthlyPanel) -> tuple[str, str]:
    try:
        return config.validate_against(panel)
    except ConfigError as exc:
        raise StageError("validate", str(exc)) from exc


def trace_path(output: str, kind: ModelKind) -> str:
    return os.path.join(output, "traces", f"{kind.value}.csv")


def run_pipeline(config: RunConfig) -> int:
    """Ingest, validate, fit every model and write traces, coefficients and the report.

    A model that fails mid-run does not stop the others; the exit status
    is nonzero when any model failed or the report could not be built.
    """
    panel = load_panel(config)
    window = validate(config, panel)
    logger.info("%s: %d months, evaluating %s..%s", panel.region, len(panel), *window)
    os.makedirs(os.path.join(config.output, "traces"), exist_ok=True)
    if config.dump_coefficients:
        os.makedirs(os.path.join(config.output, "coefficients"), exist_ok=True)

    traces, failures = [], []
    for model in config.resolved_models():
        label = model.kind.label
        try:
            trace = run_model(panel, model, window)
        except (NowcastError, PanelError, ValueError) as exc:
            failures.append(f"fit {label}: {exc}")
            logger.error("fit %s: %s", label, exc)
            continue
        _write_csv(trace.to_frame(), trace_path(config.output, model.kind))
        if config.dump_coefficients and model.kind in USES_QUERIES:
            names = design_columns(model, panel.terms)
            _write_csv(trace.coefficient_frame(names),
                       os.path.join(config.output, "coefficients", f"{model.kind.value}.csv"))
        traces.append(trace)
        logger.info("%s: %d predictions", label, len(trace))

    if any(t.model == NAIVE for t in traces):
        write_report(traces, config.output)
    else:
        failures.append("report: the naive trace is required as the reference row")
    for msg in failures:
        print(f"error: {msg}", file=sys.stderr)
    return 1 if failures else 0


def write_report(traces: Sequence[NowcastTrace], output: str) -> None:
    try:
        report = relative_report(traces)
        check_report(report)
    except ReportError as exc:
        raise StageError("report", str(exc)) from exc
    _write_text(format_table(report, mark_best=True), os.path.join(output, "report.csv"))
    _write_csv(report_frame(report), os.path.join(output, "report_long.csv"))


def read_traces(directory: str) -> list[NowcastTrace]:
    """Load ``<directory>/*.csv`` trace files, ordered as in the report."""
    paths = sorted(glob.glob(os.path.join(directory, "*.csv")))
    if not paths:
        raise StageError("report", f"no trace files in {directory}")
    traces = []
    for path in paths:
        name = os.path.splitext(os.path.basename(path))[0]
        try:
            kind = ModelKind.parse(name)
        except ValueError as exc:
            raise StageError("report", f"{path}: {exc}") from exc
        frame = pd.read_csv(path, dtype={"month": str, "flag": str}, keep_default_na=False)
        missing = {"month", "observed", "predicted"} - set(frame.columns)
        if missing:
            raise StageError("report", f"{path}: missing column(s) {sorted(missing)}")
        try:
            months = pd.PeriodIndex([to_month(m) for m in frame["month"]], freq="M")
            traces.append(NowcastTrace(
                model=kind.label,
                months=months,
                predicted=frame["predicted"].to_numpy(float),
                observed=frame["observed"].to_numpy(float),
                flags=tuple(frame["flag"]) if "flag" in frame else (),
            ))
        except ValueError as exc:
            raise StageError("report", f"{path}: {exc}") from exc
    order = {label: i for i, label in enumerate(ALL_MODELS)}
    return sorted(traces, key=lambda t: order[t.model])


def run_robustness(config: RunConfig) -> int:
    """Run every model on each query snapshot; write mean(std) and long tables."""
    try:
        paths = config.snapshot_paths()
    except ConfigError as exc:
        raise StageError("config", str(exc), 2) from exc
    panels = []
    for path in paths:
        panels.append(load_panel(config.replace(queries=path)))
    window = validate(config, panels[0])
    try:
        study = robustness_study(panels, config.resolved_models(), window)
    except ReportError as exc:
        raise StageError("robustness", str(exc)) from exc
    except NowcastError as exc:
        raise StageError("fit", str(exc)) from exc
    os.makedirs(config.output, exist_ok=True)
    _write_text(format_robustness(study), os.path.join(config.output, "robustness.csv"))
    rows = []
    for name, (mean, std) in study.items():
        for metric in ("rmse", "mae", "rmspe", "mape", "corr"):
            rows.append({"model": name, "metric": metric.upper(), "mean": mean.get(metric),
                         "std": std.get(metric), "snapshots": len(panels)})
    _write_csv(pd.DataFrame(rows), os.path.join(config.output, "robustness_long.csv"))
    return 0


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def _add_run_flags(p: argparse.ArgumentParser, snapshots: bool = False) -> None:
    p.add_argument("--config", help="YAML run configuration; its keys override flags")
    p.add_argument("--cases", help="cases CSV (date,cases)")
    p.add_argument("--queries", help="query CSV (date,<term>...)")
    p.add_argument("--gdt", help="optional GDT CSV (date,gdt)")
    p.add_argument("--output", help="output directory (default: out)")
    p.add_argument("--region", help="region label (default: cases file name)")
    p.add_argument("--eval-start", help="first evaluation month, YYYY-MM")
    p.add_argument("--eval-end", help="last evaluation month, YYYY-MM")
    p.add_argument("--models", help=f"comma-separated subset of {','.join(ALL_MODELS)}")
    p.add_argument("--penalty", help="ARGO penalty scheme (scheme-A, scheme-B, common, none)")
    p.add_argument("--seed", type=int, help="random seed recorded with the run")
    p.add_argument("--no-intercept", action="store_true", help="fit SAR and SAR+GDT without an intercept")
    p.add_argument("--gdt-log-scale", action="store_true", help="rescale GDT on the log-count scale")
    p.add_argument("--keep-incomplete", action="store_true",
                   help="keep partially covered months when aggregating weekly input")
    p.add_argument("--no-coefficients", action="store_true", help="skip per-month coefficient dumps")
    if snapshots:
        p.add_argument("--snapshots", help="glob of query snapshot CSVs")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    parser = argparse.ArgumentParser(prog="argo-nowcast", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)
    _add = sub.add_parser

    def add_parser(name, **kw):
        return _add(name, parents=[common], **kw)

    sub.add_parser = add_parser

    p = sub.add_parser("ingest", help="validate inputs and write normalized monthly CSVs")
    for flag, text in (("--cases", "cases CSV"), ("--queries", "query CSV"), ("--gdt", "optional GDT CSV"),
                       ("--region", "region label"), ("--config", "YAML run configuration")):
        p.add_argument(flag, help=text)
    p.add_argument("--output", help="directory for the normalized CSVs")
    p.add_argument("--keep-incomplete", action="store_true")

    _add_run_flags(sub.add_parser("run", help="fit all models and write traces and the report"))
    _add_run_flags(sub.add_parser("robustness", help="repeat a run over query snapshots"), snapshots=True)

    p = sub.add_parser("synth", help="write a synthetic panel")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--months", type=int, default=120)
    p.add_argument("--K", type=int, default=10, help="number of query columns")
    p.add_argument("--regime", choices=REGIMES, default="seasonal")
    p.add_argument("--start", default="2001-01", help="first month, YYYY-MM")
    p.add_argument("--output", required=True)
    p.add_argument("--snapshots", type=int, default=0,
                   help="also write this many jittered query snapshots")
    p.add_argument("--snapshot-noise", type=float, default=0.2,
                   help="log-scale sd of per-cell snapshot noise")

    p = sub.add_parser("report", help="re-tabulate the report from a traces directory")
    p.add_argument("traces", help="directory of trace CSVs (e.g. out/traces)")
    p.add_argument("--output", help="where to write report.csv (default: the traces' parent)")
    return parser


def _flag_models(args) -> tuple[ModelConfig, ...] | None:
    names = [s.strip() for s in args.models.split(",") if s.strip()] if getattr(args, "models", None) else None
    if names is None and not (args.no_intercept or args.gdt_log_scale):
        return None
    out = []
    for name in names or ALL_MODELS:
        kind = ModelKind.parse(name)
        opts = {}
        if args.no_intercept and kind in (ModelKind.SAR, ModelKind.SAR_GDT):
            opts["fit_intercept"] = False
        if args.gdt_log_scale and kind is ModelKind.GDT_RESCALE:
            opts["log_scale"] = True
        out.append(ModelConfig(kind, **opts))
    return tuple(out)


def config_from_args(args) -> RunConfig:
    if (args.eval_start is None) != (args.eval_end is None):
        raise ConfigError("--eval-start and --eval-end go together")
    try:
        models = _flag_models(args)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    flags = {
        "cases": args.cases,
        "queries": args.queries,
        "gdt": args.gdt,
        "output": args.output,
        "region": args.region,
        "eval_window": (args.eval_start, args.eval_end) if args.eval_start else None,
        "models": models,
        "penalty": args.penalty,
        "snapshots": getattr(args, "snapshots", None),
        "seed": args.seed,
        "dump_coefficients": False if args.no_coefficients else None,
        "keep_incomplete": True if args.keep_incomplete else None,
    }
    if args.config is None:
        return merge(flags, None)
    try:
        with open(args.config) as fh:
            doc = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"{args.config}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{args.config}: top level must be a mapping")
    return merge(flags, doc, os.path.dirname(os.path.abspath(args.config)))


def _cmd_ingest(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        cases, queries, gdt = args.cases or cfg.cases, args.queries or cfg.queries, args.gdt or cfg.gdt
        region = args.region or cfg.region
        output = args.output or cfg.output
    else:
        cases, queries, gdt, region, output = args.cases, args.queries, args.gdt, args.region, args.output
    panel = load_panel(RunConfig(cases=cases, queries=queries, gdt=gdt, region=region,
                                 keep_incomplete=args.keep_incomplete))
    print(f"{panel.region}: {len(panel)} months {panel.start}..{panel.end}, "
          f"{panel.n_queries} query column(s), gdt {'yes' if panel.gdt is not None else 'no'}")
    if output:
        for path in write_panel(panel, output).values():
            print(path)
    return 0


def _cmd_synth(args) -> int:
    try:
        panel, params = generate_synthetic(args.seed, args.months, args.K, args.regime, start=args.start)
        if args.snapshots < 0:
            raise ValueError("--snapshots must be nonnegative")
        snaps = jitter_snapshots(panel, args.snapshots, args.snapshot_noise, args.seed) if args.snapshots else []
    except ValueError as exc:
        raise StageError("synth", str(exc), 2) from exc
    paths = write_synthetic(panel, params, args.output)
    if snaps:
        snap_dir = os.path.join(args.output, "snapshots")
        os.makedirs(snap_dir, exist_ok=True)
        width = len(str(len(snaps)))
        for i, snap in enumerate(snaps, start=1):
            q = pd.DataFrame(snap.queries, columns=list(snap.terms))
            q.insert(0, "date", [str(m) for m in snap.months])
            _write_csv(q, os.path.join(snap_dir, f"queries_{i:0{width}d}.csv"))
    for path in paths.values():
        print(path)
    return 0


def _cmd_report(args) -> int:
    traces = read_traces(args.traces)
    output = args.output or os.path.dirname(os.path.abspath(args.traces))
    os.makedirs(output, exist_ok=True)
    write_report(traces, output)
    with open(os.path.join(output, "report.csv")) as fh:
        sys.stdout.write(fh.read())
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.verb == "ingest":
            return _cmd_ingest(args)
        if args.verb == "synth":
            return _cmd_synth(args)
        if args.verb == "report":
            return _cmd_report(args)
        config = config_from_args(args)
        if args.verb == "run":
            return run_pipeline(config)
        return run_robustness(config)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.status


if __name__ == "__main__":
    sys.exit(main())
