"""Command-line entry points: simulate, sweep, check-constants, twin-test.

Exit status of ``simulate``: 0 completed within bounds, 2 bound violation,
3 numerical blow-up, 1 usage, configuration, I/O or solver error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import io
import itertools
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .analysis import BoundReport, bound_monitor, dominant_mode_direction, gronwall_twin_test
from .config import ConfigError, RunSpec, help_text, initial_norms, initial_state, load_config
from .imex import State, resolve_blowup_threshold, run_imex
from .model import DerivationError, check_taxis_admissible, coexistence_equilibrium, derive_constants
from .picard import run_picard
from .trace import BLOWUP, COLUMNS, SOLVER_FAILURE, NormTrace

log = logging.getLogger(__name__)

EXIT_OK, EXIT_ERROR, EXIT_VIOLATED, EXIT_BLOWUP = 0, 1, 2, 3
SWEEP_COLUMNS = (
    "chi",
    "xi",
    "outcome",
    "exit_status",
    "termination_time",
    "sup_u",
    "sup_v",
    "max_c2proxy",
    "picard_iters_max",
    "message",
)


class UsageError(Exception):
    pass


def fmt(x: Any) -> str:
    """Shortest round-trip text for floats; '' for missing values."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(x) for x in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


def write_norms(path: Path, trace: NormTrace) -> None:
    _write_csv(path, COLUMNS, trace.records)


def write_state(path: Path, state: State) -> None:
    grid = state.grid
    axes = ("x", "y")[: grid.dim]
    cols = [c.ravel() for c in grid.coords] + [state.u.ravel(), state.v.ravel()]
    _write_csv(path, axes + ("u", "v"), zip(*cols))


class SnapshotWriter:
    """Observer writing a snapshot at the first state reaching each requested time."""

    def __init__(self, directory: Path, times: Sequence[float], dt: float):
        self.dir = directory
        self.pending = sorted(times)
        self.tol = 1e-9 * dt
        self.index: list[tuple[float, float, str]] = []

    def __call__(self, state: State) -> None:
        while self.pending and state.t >= self.pending[0] - self.tol:
            requested = self.pending.pop(0)
            name = f"snapshot_{len(self.index):04d}.csv"
            self.dir.mkdir(parents=True, exist_ok=True)
            write_state(self.dir / name, state)
            self.index.append((requested, state.t, name))

    def finish(self) -> None:
        if self.index or self.pending:
            self.dir.mkdir(parents=True, exist_ok=True)
            _write_csv(self.dir / "index.csv", ("requested_t", "t", "file"), self.index)


def _flatten(prefix: str, d: dict) -> dict:
    return {f"{prefix}.{k}": v for k, v in d.items()}


def _json_value(v: Any) -> Any:
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _exit_for(report: BoundReport, termination: str) -> int:
    if termination == BLOWUP:
        return EXIT_BLOWUP
    if termination == SOLVER_FAILURE:
        return EXIT_ERROR
    return EXIT_VIOLATED if report.verdict == "violated" else EXIT_OK


def prepare(spec: RunSpec):
    """Initial state, derived constants and admissibility report for a spec."""
    s0 = initial_state(spec)
    if np.min(s0.u) < 0 or np.min(s0.v) < 0:
        raise UsageError("initial data must be non-negative")
    norms = initial_norms(spec, s0)
    dc = derive_constants(spec.model, norms, spec.schauder_p)
    return s0, norms, dc, check_taxis_admissible(spec.model, dc)


def run_main(spec: RunSpec, out_dir: str | Path) -> int:
    """Execute one run and write its output files; returns the exit status."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    s0, norms, dc, adm = prepare(spec)
    ctl = spec.step_control()
    cap = resolve_blowup_threshold(ctl, dc)
    if not s0.sup < cap:
        raise UsageError(f"solver.blowup_threshold={cap!r} must exceed the initial sup norm {s0.sup!r}")
    snaps = SnapshotWriter(out / "snapshots", spec.snapshot_times, ctl.dt)
    last = [s0]

    def keep(state: State) -> None:
        last[0] = state

    snaps(s0)
    observers = [keep, snaps]
    if spec.solver.kind == "picard":
        trace = run_picard(s0, spec.model, dc, ctl, observers)
    else:
        trace = run_imex(s0, spec.model, ctl, observers, dc=dc)
    snaps.finish()

    reason = trace.termination.reason
    if spec.observers.monitor_bounds:
        report = bound_monitor(trace, dc, spec.observers.bound_slack, spec.observers.c2_horizon)
    else:
        verdict = "blowup" if reason == BLOWUP else "pass"
        report = BoundReport((), verdict, reason)
    status = _exit_for(report, reason)

    write_norms(out / "norms.csv", trace)
    write_state(out / "final_state.csv", last[0])
    text = report.format()
    if reason == SOLVER_FAILURE:
        text += f"solver_failure: {trace.termination.message}\n"
    (out / "bounds_report.txt").write_text(text, encoding="utf-8")

    meta: dict[str, Any] = dict(spec.flat())
    meta["output.dir"] = str(out)
    meta.update(_flatten("norms.resolved", {"u0_c2alpha": norms.norm_u0_c2alpha, "v0_c2alpha": norms.norm_v0_c2alpha}))
    meta.update(_flatten("derived", dc.as_dict()))
    meta.update(_flatten("admissibility", adm.as_dict()))
    meta["termination.reason"] = reason
    meta["termination.time"] = trace.termination.time
    meta["termination.message"] = trace.termination.message
    meta["blowup_time"] = trace.termination.time if reason == BLOWUP else None
    meta["verdict"] = report.verdict
    meta["exit_status"] = status
    meta["records"] = len(trace)
    meta["generated_at"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    meta = {k: _json_value(v) for k, v in meta.items()}
    (out / "metadata.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    log.info("run finished: %s (%s), exit %d", reason, report.verdict, status)
    return status


def _point_dir(chi: float, xi: float) -> str:
    return f"chi_{chi!r}__xi_{xi!r}"


def _sweep_point(args: tuple[RunSpec, float, float, str]) -> dict:
    spec, chi, xi, out = args
    row: dict[str, Any] = {"chi": chi, "xi": xi}
    point = spec.with_model(chi=chi, xi=xi)
    try:
        status = run_main(point, out)
    except Exception as exc:  # recorded in-row, the sweep carries on
        row.update(outcome="error", exit_status=EXIT_ERROR, message=f"{type(exc).__name__}: {exc}")
        return row
    meta = json.loads((Path(out) / "metadata.json").read_text(encoding="utf-8"))
    with open(Path(out) / "norms.csv", newline="", encoding="utf-8") as fh:
        records = list(csv.DictReader(fh))
    reason = meta["termination.reason"]
    outcome = {EXIT_VIOLATED: "violated"}.get(status, reason)
    row.update(outcome=outcome, exit_status=status, termination_time=meta["termination.time"])
    row["message"] = meta["termination.message"]
    if records:
        row["sup_u"] = float(records[-1]["sup_u"])
        row["sup_v"] = float(records[-1]["sup_v"])
        row["max_c2proxy"] = max(max(float(r["c2proxy_u"]), float(r["c2proxy_v"])) for r in records)
        iters = [int(r["picard_iters"]) for r in records if r["picard_iters"]]
        row["picard_iters_max"] = max(iters) if iters else None
    return row


def run_sweep(spec: RunSpec, chis: Sequence[float], xis: Sequence[float], out_dir: str | Path, jobs: int = 1) -> list[dict]:
    """Run every (chi, xi) pair and write ``sweep.csv`` in lexicographic order."""
    if not chis or not xis:
        raise UsageError("chi and xi lists must be non-empty")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    points = sorted(set(itertools.product((float(c) for c in chis), (float(x) for x in xis))))
    tasks = [(spec, c, x, str(out / _point_dir(c, x))) for c, x in points]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    _write_csv(out / "sweep.csv", SWEEP_COLUMNS, ([r.get(c) for c in SWEEP_COLUMNS] for r in rows))
    return rows


def _float_list(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.replace(";", ",").split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None
    if not values or not all(math.isfinite(v) and v >= 0 for v in values):
        raise argparse.ArgumentTypeError(f"expected non-negative finite numbers, got {text!r}")
    return values


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which would read as a bound violation
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="pursuit-evasion",
        description="Simulate the predator-prey system with prey-taxis and predator-taxis.",
        epilog=help_text(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)
    common = dict(epilog=help_text(), formatter_class=argparse.RawDescriptionHelpFormatter)

    p = sub.add_parser("simulate", help="run one simulation", **common)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--solver", choices=("imex", "picard"), help="override solver.kind")
    p.add_argument("--jobs", type=_positive_int, default=1, help="accepted for symmetry; a single run is sequential")

    p = sub.add_parser("sweep", help="run a grid of (chi, xi) values", **common)
    p.add_argument("--config", required=True)
    p.add_argument("--chi", required=True, type=_float_list, help="comma-separated chi values")
    p.add_argument("--xi", required=True, type=_float_list, help="comma-separated xi values")
    p.add_argument("--out", required=True)
    p.add_argument("--solver", choices=("imex", "picard"))
    p.add_argument("--jobs", type=_positive_int, default=1, help="concurrent sweep points (default 1)")

    p = sub.add_parser("check-constants", help="print derived constants and taxis admissibility", **common)
    p.add_argument("--config", required=True)

    p = sub.add_parser("twin-test", help="energy separation of two nearby runs", **common)
    p.add_argument("--config", required=True)
    p.add_argument("--delta", required=True, type=float)
    p.add_argument("--solver", choices=("imex", "picard"))
    p.add_argument(
        "--direction",
        choices=("smooth", "dominant"),
        default="smooth",
        help="perturbation: 1 + cos(pi x / L) (default), or the slowest discrete mode of a homogeneous base",
    )
    p.add_argument("--stride", type=_positive_int, default=1, help="sample E(t) every N steps")
    p.add_argument("--curvature-tol", type=float, default=1e-3)
    p.add_argument("--out", help="optional directory for energy.csv")
    return parser


def _load(args) -> RunSpec:
    spec = load_config(args.config)
    if getattr(args, "solver", None):
        spec = spec.with_solver(kind=args.solver)
    return spec


def _cmd_check_constants(args) -> int:
    spec = _load(args)
    _, norms, dc, adm = prepare(spec)
    print(f"initial norms: u0_c2alpha={norms.norm_u0_c2alpha!r} v0_c2alpha={norms.norm_v0_c2alpha!r} alpha={norms.alpha!r}")
    for k, v in dc.as_dict().items():
        print(f"{k} = {fmt(v) if v is not None else 'unknown'}")
    print(f"[{adm.label}]")
    for k, v in adm.as_dict().items():
        if k != "label":
            print(f"{k} = {fmt(v)}")
    eq = coexistence_equilibrium(spec.model)
    print("coexistence equilibrium = " + ("none" if eq is None else f"({eq[0]!r}, {eq[1]!r})"))
    return EXIT_OK


def _cmd_twin_test(args) -> int:
    spec = _load(args)
    s0, _, dc, _ = prepare(spec)
    ctl = spec.step_control()
    if args.stride != ctl.record_stride:
        ctl = dataclasses.replace(ctl, record_stride=args.stride)
    direction = None
    if args.direction == "dominant":
        direction = dominant_mode_direction(s0, spec.model, ctl, spec.solver.kind, dc)
    report = gronwall_twin_test(
        s0, args.delta, spec.model, ctl, spec.solver.kind, dc, curvature_tol=args.curvature_tol, direction=direction
    )
    for k, v in report.summary().items():
        print(f"{k} = {fmt(v)}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "energy.csv", ("t", "energy"), zip(report.times, report.energies))
    if report.inconclusive:
        return EXIT_BLOWUP if "blowup" in report.reason else EXIT_ERROR
    if report.identical:
        return EXIT_OK
    ok = report.envelope_ok and not report.superexponential
    return EXIT_OK if ok else EXIT_VIOLATED


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "simulate":
            return run_main(_load(args), args.out)
        if args.command == "sweep":
            run_sweep(_load(args), args.chi, args.xi, args.out, args.jobs)
            return EXIT_OK
        if args.command == "check-constants":
            return _cmd_check_constants(args)
        return _cmd_twin_test(args)
    except (ConfigError, UsageError, DerivationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
