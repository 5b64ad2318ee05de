"""Command line interface.

Four commands: ``rates`` (analytic decay-rate report for a model file),
``simulate`` (run one discipline, fit tail decays, compare to the
analytic rates), ``ystar-curve`` (critical truncation level across a
load grid for the unit-mean M/M/1 family), and ``validate`` (the
built-in acceptance suite).

Exit codes: 0 success, 1 configuration error, 2 unstable model,
3 numerical failure.  Documents are deterministic given the
configuration and seed; ``validate`` output includes wall-clock
timings and is exempt.  JSON output uses the Infinity token for
infinite values, which strict parsers must be told about.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from typing import List, Optional, Tuple

from .dist import moments
from .ratecalc import (NoDelaysError, NumericalFailure, QueueModel,
                       UnstableError, decay_report, gamma_p_trunc, gamma_w,
                       gamma_w2, gamma_v_srpt, model_from_json, model_to_json,
                       y_star)
from .simqueue import Discipline, run, service_bins, write_records_csv
from .tailest import DegenerateTailError, compare_rates, fit_decay
from .validate import run_all

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_UNSTABLE = 2
EXIT_NUMERICAL = 3


@dataclass
class RunConfig:
    command: str
    model_path: Optional[str] = None
    discipline: str = "fifo"
    customers: int = 100_000
    seed: int = 0
    warmup: float = 0.2
    rho_grid: str = "0.05:0.95:0.05"
    bins: Optional[float] = None
    output: str = "json"
    out: Optional[str] = None
    quick: bool = False
    with_ystar: bool = False


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="queuedecay",
        description="Decay rates of the single-server queue: analytic "
                    "computation, event-driven simulation, and tail "
                    "cross-validation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_io(p, default_output="json"):
        p.add_argument("--output", choices=("json", "csv"),
                       default=default_output,
                       help=f"document format (default {default_output})")
        p.add_argument("--out", metavar="PATH", default=None,
                       help="write the document here instead of stdout")

    p_rates = sub.add_parser(
        "rates", help="analytic decay-rate report for a model file")
    p_rates.add_argument("--model", required=True, metavar="FILE",
                         help="model JSON file")
    p_rates.add_argument("--ystar", action="store_true",
                         help="also report the critical truncation level "
                              "y* and P(B > y*)")
    add_io(p_rates)

    p_sim = sub.add_parser(
        "simulate", help="simulate one discipline and fit tail decays")
    p_sim.add_argument("--model", required=True, metavar="FILE")
    p_sim.add_argument("--discipline",
                       choices=[d.value for d in Discipline],
                       default="fifo", help="queueing discipline "
                       "(default fifo)")
    p_sim.add_argument("--customers", type=int, default=100_000,
                       help="number of arrivals (default 100000)")
    p_sim.add_argument("--seed", type=int, default=0,
                       help="random seed (default 0)")
    p_sim.add_argument("--warmup", type=float, default=0.2,
                       help="fraction of leading records discarded "
                            "(default 0.2)")
    p_sim.add_argument("--bins", type=float, default=None, metavar="W",
                       help="fit conditional sojourn decay per service-time "
                            "bin of width W; 0 selects 0.1 E[B]")
    add_io(p_sim)

    p_curve = sub.add_parser(
        "ystar-curve", help="critical truncation level across a load grid "
                            "(unit-mean M/M/1 family)")
    p_curve.add_argument("--rho-grid", default="0.05:0.95:0.05",
                         metavar="A:B:STEP", help="inclusive load grid "
                         "(default 0.05:0.95:0.05)")
    add_io(p_curve, default_output="csv")

    p_val = sub.add_parser(
        "validate", help="run the built-in acceptance suite")
    p_val.add_argument("--quick", action="store_true",
                       help="downscale simulation criteria to 1e5 customers "
                            "with widened tolerances")
    return parser


def _config_from_args(args) -> RunConfig:
    cfg = RunConfig(command=args.command)
    for field in ("discipline", "customers", "seed", "warmup", "bins",
                  "output", "out", "quick"):
        if hasattr(args, field):
            setattr(cfg, field, getattr(args, field))
    if hasattr(args, "model"):
        cfg.model_path = args.model
    if hasattr(args, "ystar"):
        cfg.with_ystar = args.ystar
    if hasattr(args, "rho_grid"):
        cfg.rho_grid = args.rho_grid
    return cfg


def _load_model(path: str) -> QueueModel:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ValueError(f"cannot read model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"model file {path} is not valid JSON: {exc}") from exc
    return model_from_json(obj)


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _json_text(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def cmd_rates(config: RunConfig) -> str:
    model = _load_model(config.model_path)
    report = decay_report(model)
    doc = {"model": model_to_json(model), "report": report.to_json()}
    if config.with_ystar:
        crit = y_star(model)
        doc["y_star"] = crit.value
        doc["p_exceed"] = crit.tail_prob
    if config.output == "json":
        return _json_text(doc)
    lines = ["key,value"]
    for key, value in doc["report"].items():
        if value is None:
            lines.append(f"{key},")
        else:
            lines.append(f"{key},{value}")
    if config.with_ystar:
        lines.append(f"y_star,{doc['y_star']}")
        lines.append(f"p_exceed,{doc['p_exceed']}")
    return "\n".join(lines) + "\n"


def _fit_block(samples, analytic: Optional[float], tolerance: float = 0.1,
               **window):
    block = {"fit": None, "analytic": analytic, "comparison": None,
             "skipped": None}
    try:
        fit = fit_decay(samples, **window)
    except (ValueError, DegenerateTailError) as exc:
        block["skipped"] = str(exc)
        return block
    block["fit"] = fit.to_json()
    if analytic is not None:
        block["comparison"] = compare_rates(analytic, fit, tolerance).to_json()
    return block


def cmd_simulate(config: RunConfig) -> str:
    model = _load_model(config.model_path)
    discipline = Discipline(config.discipline)
    out = run(model, discipline, config.customers, config.seed,
              config.warmup)
    if config.output == "csv":
        import io
        buf = io.StringIO()
        write_records_csv(out, buf)
        return buf.getvalue()

    report = decay_report(model)
    srpt = discipline in (Discipline.SRPT_PR, Discipline.SRPT_NP)
    prio = discipline in (Discipline.PRIO_PR, Discipline.PRIO_NP)

    waiting_target = gamma_w(model) if discipline is Discipline.FIFO else None
    sojourn_target = gamma_v_srpt(model).rate if srpt else None
    fits = {
        "waiting": _fit_block(out.waiting(), waiting_target),
        "sojourn": _fit_block(out.sojourn(), sojourn_target),
    }
    if model.split is not None and prio:
        two = out.customer_class[out.kept()] == 2
        target2 = gamma_w2(model).rate
        fits["class2_waiting"] = _fit_block(out.waiting()[two], target2)
        fits["class2_sojourn"] = _fit_block(out.sojourn()[two], target2)

    bins_doc = None
    if config.bins is not None:
        width = config.bins
        if width == 0.0:
            width = 0.1 * moments(model.service)[0]
        bins_doc = []
        sojourn = out.sojourn()
        for lo, hi, idx in service_bins(out, width):
            entry = {"lo": lo, "hi": hi, "count": int(len(idx))}
            target = None
            if srpt:
                target = gamma_p_trunc(model, 0.5 * (lo + hi))
                if math.isinf(target):
                    target = None
            # bins hold far fewer samples than a full run, so the
            # conditional fits use a wider window and a lower floor
            entry.update(_fit_block(sojourn[idx], target,
                                    lo_quantile=0.90, min_points=50))
            bins_doc.append(entry)

    doc = {
        "model": model_to_json(model),
        "discipline": discipline.value,
        "customers": config.customers,
        "seed": config.seed,
        "warmup": config.warmup,
        "analytic": report.to_json(),
        "summary": {
            "served": out.served,
            "total_time": out.total_time,
            "busy_periods": int(len(out.busy_durations)),
            "mean_busy": float(out.busy_durations.mean()),
            "mean_waiting": float(out.waiting().mean()),
            "mean_sojourn": float(out.sojourn().mean()),
        },
        "fits": fits,
        "bins": bins_doc,
    }
    return _json_text(doc)


def _parse_grid(text: str) -> List[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"--rho-grid wants A:B:STEP, got {text!r}")
    lo, hi, step = (float(p) for p in parts)
    if step <= 0 or hi < lo:
        raise ValueError(f"bad grid bounds in {text!r}")
    grid = []
    k = 0
    while True:
        value = lo + k * step
        if value > hi + 1e-12:
            break
        grid.append(round(value, 12))
        k += 1
    return grid


def cmd_ystar_curve(config: RunConfig) -> str:
    from .dist import Exponential
    rows = []
    for rho in _parse_grid(config.rho_grid):
        try:
            model = QueueModel(Exponential(rho), Exponential(1.0))
            crit = y_star(model)
            rows.append({"rho": rho, "y_star": crit.value,
                         "p_exceed": crit.tail_prob, "error": None})
        except (ValueError, NumericalFailure) as exc:
            rows.append({"rho": rho, "y_star": None, "p_exceed": None,
                         "error": str(exc)})
    if config.output == "json":
        return _json_text({"family": "mm1-unit-mean-service", "rows": rows})
    lines = ["rho,y_star,p_exceed,error"]
    for row in rows:
        if row["error"] is None:
            lines.append(f"{row['rho']},{row['y_star']!r},{row['p_exceed']!r},")
        else:
            err = row["error"].replace('"', "'")
            lines.append(f"{row['rho']},,,\"{err}\"")
    return "\n".join(lines) + "\n"


def cmd_validate(config: RunConfig) -> Tuple[str, int]:
    results = run_all(quick=config.quick)
    lines = [r.line() for r in results]
    passed = sum(r.passed for r in results)
    lines.append(f"passed {passed}/{len(results)}"
                 + (" (quick mode)" if config.quick else ""))
    text = "\n".join(lines) + "\n"
    if any(r.numerical_failure for r in results):
        return text, EXIT_NUMERICAL
    return text, EXIT_OK if passed == len(results) else EXIT_CONFIG


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    config = _config_from_args(args)
    try:
        if config.command == "rates":
            text = cmd_rates(config)
        elif config.command == "simulate":
            text = cmd_simulate(config)
        elif config.command == "ystar-curve":
            text = cmd_ystar_curve(config)
        else:
            text, code = cmd_validate(config)
            sys.stdout.write(text)
            return code
    except UnstableError as exc:
        print(f"error: unstable model: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except NumericalFailure as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (NoDelaysError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        _emit(text, config.out)
    except BrokenPipeError:
        import os
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
    return EXIT_OK
