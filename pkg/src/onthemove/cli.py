"""Command-line harness: single trials, delay sweeps, charts and scenario export.

Exit status: 0 on success, 2 when a trial fails its task, 1 on usage or
input errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Sequence

from .controller import ControllerConfig
from .limits import RobotLimits
from .placement import PlacementConfig, score_candidates, select_placement, write_debug_csv
from .planner import NO_PATH, plan
from .sim import Method, TrialConfig, TrialResult, context_for, run_trial
from .svgplot import Series, line_chart
from .world import Scenario, builtin_scenarios, load_scenario, scenario_by_name

RESULTS_HEADER = ("scenario", "method", "delay_s", "success", "exec_time_s", "first_attempt_s", "grasp_s")
DEFAULT_DELAYS = tuple(float(d) for d in range(11))
MAX_DELAY = 10.0

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_TASK_FAILED = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with 2, which means task failure here
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class Settings:
    """Configuration blocks that a JSON file may override."""

    controller: ControllerConfig = ControllerConfig()
    placement: PlacementConfig = PlacementConfig()
    limits: RobotLimits = RobotLimits()
    timeout: float = 60.0
    reach_radius: float = 0.9

    def trial(self, scenario: Scenario, method: Method, delay: float, deterministic: bool) -> TrialConfig:
        return TrialConfig(
            scenario=scenario,
            method=method,
            failure_delay=delay,
            timeout=self.timeout,
            dt=self.controller.dt,
            reach_radius=self.reach_radius,
            deterministic_search=deterministic,
            controller=self.controller,
            placement=self.placement,
            limits=self.limits,
        )


def _override(obj, values: dict, section: str):
    known = {f.name for f in fields(obj)}
    unknown = set(values) - known
    if unknown:
        raise UsageError(f"unknown {section} setting(s): {', '.join(sorted(unknown))}")
    try:
        return replace(obj, **values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid {section} setting: {exc}") from exc


def load_settings(path: str | None) -> Settings:
    """Read a JSON config with optional sections controller, placement, limits and trial."""
    s = Settings()
    if path is None:
        return s
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    unknown = set(data) - {"controller", "placement", "limits", "trial"}
    if unknown:
        raise UsageError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    s = replace(
        s,
        controller=_override(s.controller, data.get("controller", {}), "controller"),
        placement=_override(s.placement, data.get("placement", {}), "placement"),
        limits=_override(s.limits, data.get("limits", {}), "limits"),
    )
    trial = data.get("trial", {})
    unknown = set(trial) - {"timeout", "reach_radius"}
    if unknown:
        raise UsageError(f"unknown trial setting(s): {', '.join(sorted(unknown))}")
    return replace(s, **{k: float(v) for k, v in trial.items()})


def resolve_scenario(name: str) -> Scenario:
    try:
        return scenario_by_name(name)
    except KeyError:
        pass
    p = Path(name)
    if p.suffix == ".json" and p.exists():
        try:
            return load_scenario(p)
        except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
            raise UsageError(f"invalid scenario file {name}: {exc}") from exc
    names = ", ".join(s.name for s in builtin_scenarios())
    raise UsageError(f"unknown scenario {name!r} (builtin: {names}, or a .json file)")


def resolve_method(name: str) -> Method:
    try:
        return Method(name)
    except ValueError:
        raise UsageError(f"unknown method {name!r} (choose from {', '.join(m.value for m in Method)})") from None


def parse_delays(delays: str | None, step: float | None) -> list[float]:
    if delays is not None and step is not None:
        raise UsageError("--delays and --delay-step are mutually exclusive")
    if step is not None:
        if not step > 0.0:
            raise UsageError("--delay-step must be positive")
        n = int(math.floor(MAX_DELAY / step + 1e-9))
        return [round(i * step, 9) for i in range(n + 1)]
    if delays is None:
        return list(DEFAULT_DELAYS)
    try:
        out = sorted({float(x) for x in delays.split(",") if x.strip()})
    except ValueError:
        raise UsageError(f"cannot parse --delays {delays!r}") from None
    if not out or out[0] < 0.0:
        raise UsageError("delays must be non-negative")
    return out


def _fmt_opt(v: float | None) -> str:
    return "" if v is None else f"{v:.2f}"


def result_row(r: TrialResult) -> list[str]:
    return [
        r.scenario,
        r.method.value,
        f"{r.failure_delay:g}",
        "true" if r.success else "false",
        _fmt_opt(r.exec_time),
        _fmt_opt(r.first_attempt_time),
        _fmt_opt(r.grasp_time),
    ]


def summary_line(r: TrialResult) -> str:
    exec_s = "-" if r.exec_time is None else f"{r.exec_time:.2f}s"
    return f"{r.scenario} {r.method.value} delay={r.failure_delay:g}s success={str(r.success).lower()} exec_time={exec_s}"


def _run_one(job: tuple[Settings, Scenario, Method, float]) -> TrialResult:
    settings, scenario, method, delay = job
    r = run_trial(settings.trial(scenario, method, delay, deterministic=True))
    r.trajectory = []  # not needed in sweep results; keeps worker transfers small
    return r


def run_sweep(
    settings: Settings,
    scenarios: Sequence[Scenario],
    methods: Sequence[Method],
    delays: Sequence[float],
    jobs: int = 1,
) -> list[TrialResult]:
    """All (scenario, method, delay) trials in deterministic mode, ordered by that triple."""
    work = [(settings, s, m, d) for s in scenarios for m in methods for d in delays]
    if jobs <= 1:
        return [_run_one(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, work))


def write_results(path: Path, results: Sequence[TrialResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for r in results:
            w.writerow(result_row(r))


@dataclass(frozen=True)
class ResultRow:
    scenario: str
    method: str
    delay_s: float
    success: bool
    exec_time_s: float | None
    first_attempt_s: float | None
    grasp_s: float | None


def read_results(path: str | Path) -> list[ResultRow]:
    """Parse a results table; raises UsageError naming the offending row."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    rows = []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != RESULTS_HEADER:
            raise UsageError(f"{path}: row 1: expected header {','.join(RESULTS_HEADER)}")
        for n, rec in enumerate(reader, start=2):
            try:
                if len(rec) != len(RESULTS_HEADER):
                    raise ValueError(f"expected {len(RESULTS_HEADER)} fields, got {len(rec)}")
                if rec[3] not in ("true", "false"):
                    raise ValueError(f"success must be true or false, got {rec[3]!r}")
                opt = [float(x) if x else None for x in rec[4:]]
                row = ResultRow(rec[0], rec[1], float(rec[2]), rec[3] == "true", *opt)
                if row.success and row.exec_time_s is None:
                    raise ValueError("successful row without exec_time_s")
            except ValueError as exc:
                raise UsageError(f"{path}: row {n}: {exc}") from exc
            rows.append(row)
    return rows


def plot_results(rows: Sequence[ResultRow], out_dir: Path, scenarios: Sequence[str] | None = None) -> list[Path]:
    """One chart per scenario: execution time against failure delay, one line per method."""
    names = list(scenarios) if scenarios else list(dict.fromkeys(r.scenario for r in rows))
    delays = [r.delay_s for r in rows]
    x_range = (min(delays), max(delays)) if delays else (0.0, MAX_DELAY)
    paths = []
    for name in names:
        mine = [r for r in rows if r.scenario == name]
        methods = list(dict.fromkeys(r.method for r in mine))
        series = [
            Series(m, [(r.delay_s, r.exec_time_s) for r in mine if r.method == m and r.success and r.exec_time_s is not None])
            for m in methods
        ]
        svg = line_chart(series, name, "grasp failure delay (s)", "execution time (s)", x_range=x_range)
        p = out_dir / f"{name}.svg"
        p.write_text(svg)
        paths.append(p)
    return paths


def _ensure_dir(path: str) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {path}: {exc}") from exc
    return p


def cmd_run(args: argparse.Namespace) -> int:
    settings = load_settings(args.config)
    scenario = resolve_scenario(args.scenario)
    method = resolve_method(args.method)
    if args.delay < 0.0:
        raise UsageError("--delay must be non-negative")
    out = _ensure_dir(args.out)
    cfg = settings.trial(scenario, method, args.delay, deterministic=args.deterministic)
    result = run_trial(cfg)
    stem = f"{scenario.name}_{method.value}_{args.delay:g}"
    try:
        result.write_trajectory(out / f"trajectory_{stem}.csv")
        if args.debug:
            _write_debug(cfg, out / f"placement_{stem}.csv", out / f"path_{stem}.csv")
    except OSError as exc:
        raise UsageError(f"cannot write to {out}: {exc}") from exc
    print(summary_line(result))
    return EXIT_OK if result.success else EXIT_TASK_FAILED


def _write_debug(cfg: TrialConfig, placement_csv: Path, path_csv: Path) -> None:
    """Scored candidate ring at the start pose, and the global path to the chosen placement."""
    ctx = context_for(cfg.scenario, cfg.placement, cfg.limits)
    start = cfg.scenario.start_pose
    scored = score_candidates(
        ctx.candidates, start, cfg.scenario.world.drop_position, ctx.graph, ctx.grid, cfg.limits, ctx.depart
    )
    chosen = select_placement(scored, None, cfg.placement)
    write_debug_csv(placement_csv, scored, chosen)
    path = NO_PATH if chosen is None else plan(ctx.graph, start, chosen.pose, cfg.limits.v_max, cfg.limits.omega_max)
    with open(path_csv, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("x", "y", "theta"))
        w.writerows((f"{x:.6f}", f"{y:.6f}", f"{th:.6f}") for x, y, th in path.to_csv_rows())


def cmd_sweep(args: argparse.Namespace) -> int:
    settings = load_settings(args.config)
    scenarios = [resolve_scenario(s) for s in (args.scenario or [s.name for s in builtin_scenarios()])]
    methods = [resolve_method(m) for m in (args.method or [m.value for m in Method])]
    delays = parse_delays(args.delays, args.delay_step)
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    out = _ensure_dir(args.out)
    results = run_sweep(settings, scenarios, methods, delays, args.jobs)
    try:
        write_results(out / "results.csv", results)
    except OSError as exc:
        raise UsageError(f"cannot write results: {exc}") from exc
    ok = sum(r.success for r in results)
    print(f"{len(results)} trials, {ok} succeeded; wrote {out / 'results.csv'}")
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    rows = read_results(args.results)
    out = _ensure_dir(args.out)
    for p in plot_results(rows, out, args.scenario):
        print(p)
    return EXIT_OK


def cmd_export(args: argparse.Namespace) -> int:
    out = _ensure_dir(args.out)
    for s in builtin_scenarios():
        p = out / f"{s.name}.json"
        p.write_text(json.dumps(s.to_json(), indent=2) + "\n")
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="onthemove", description="Pick-and-place on-the-move simulation and benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a single trial and write its trajectory log")
    run.add_argument("--scenario", default="line", help="builtin scenario name or scenario .json file")
    run.add_argument("--method", default="proposed", help="proposed, reactive or planned")
    run.add_argument("--delay", type=float, default=0.0, help="grasp failure delay in seconds")
    run.add_argument("--config", help="JSON file overriding controller/placement/limits/trial settings")
    run.add_argument("--out", default=".", help="output directory")
    run.add_argument(
        "--deterministic", action="store_true", help="abort searches on an expansion count instead of wall time"
    )
    run.add_argument(
        "--debug", action="store_true", help="also dump the scored placement ring and the initial global path as CSV"
    )
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run every scenario/method/delay combination")
    sweep.add_argument("--scenario", action="append", help="scenario to include (repeatable; default all builtin)")
    sweep.add_argument("--method", action="append", help="method to include (repeatable; default all)")
    sweep.add_argument("--delays", help="comma-separated delays in seconds (default 0,1,...,10)")
    sweep.add_argument("--delay-step", type=float, help="sweep 0..10 s at this step instead of --delays")
    sweep.add_argument("--config", help="JSON settings file")
    sweep.add_argument("--out", default=".", help="output directory for results.csv")
    sweep.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sweep.add_argument("--deterministic", action="store_true", help="accepted for symmetry; sweeps are always deterministic")
    sweep.set_defaults(func=cmd_sweep)

    plot = sub.add_parser("plot", help="draw one SVG chart per scenario from results.csv")
    plot.add_argument("results", help="results.csv produced by sweep")
    plot.add_argument("--out", default=".", help="output directory")
    plot.add_argument("--scenario", action="append", help="chart only these scenarios (repeatable)")
    plot.set_defaults(func=cmd_plot)

    export = sub.add_parser("export-scenarios", help="write the builtin scenarios as JSON")
    export.add_argument("--out", default=".", help="output directory")
    export.set_defaults(func=cmd_export)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ValueError) as exc:  # ValueError: invalid settings or an infeasible scenario
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
