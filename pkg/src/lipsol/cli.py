"""
Command-line front end.

    lipsol list
    lipsol solve     --problem example2 --x 0,0 --method socp
    lipsol sweep     --problem example1 --methods socp,qp --step 0.01 --output sweep.csv
    lipsol lipschitz --problem robinson --provider analytic_center --steps 1e-2,1e-3 --method socp,qp
    lipsol compare   --problem example2 --methods socp,qcqp,qp --step 0.05
    lipsol simulate  --scenario example1_drive --controller socp --output traj.csv
    lipsol bound     --problem example1
    lipsol plot      --input sweep.csv --output sweep.png

Exit codes: 0 success, 1 usage error, 2 solver or assumption-violation error.
Data goes to --output or standard output; diagnostics go to standard error.
"""

import argparse
import logging
import os
import sys
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .analysis import (
    GridSpec,
    compare_methods,
    dump_json,
    estimate_lipschitz,
    lipschitz_bound,
    records_to_frame,
    sweep,
    write_frame,
)
from .errors import LipsolError, SolverError, UsageError
from .geometry import PROVIDER_TAGS, NewtonSettings
from .problem import ParametricProblem, instantiate, registry_get, registry_names, resolve_problem
from .sim import Dynamics, SimSettings, input_jumps, run_scenario, scenario_get, scenario_names, simulate
from .solvers import SolverSettings, canonical_method, solve

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2

DEFAULT_HALF_WIDTH = 0.05


class _ArgumentParser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; lipsol reserves 2 for solver errors"""

    def error(self, message):
        raise UsageError(message)


def _vector(text: Optional[str], name: str) -> Optional[Tuple[float, ...]]:
    if text is None:
        return None
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"--{name} expects comma-separated numbers, got '{text}'") from None


def _methods(text: str) -> Tuple[str, ...]:
    labels = tuple(v.strip() for v in text.split(",") if v.strip())
    if not labels:
        raise UsageError("at least one method is required")
    for label in labels:
        try:
            canonical_method(label)
        except SolverError as err:
            raise UsageError(str(err)) from None
    return labels


@dataclass(frozen=True)
class CliConfig:
    """Validated command configuration"""

    command: str
    problem: Optional[str] = None
    methods: Optional[Tuple[str, ...]] = None
    controller: Optional[str] = None
    provider: str = "expr"
    x: Optional[Tuple[float, ...]] = None
    steps: Tuple[float, ...] = (0.05,)
    lower: Optional[Tuple[float, ...]] = None
    upper: Optional[Tuple[float, ...]] = None
    center: Optional[Tuple[float, ...]] = None
    half_width: Optional[float] = None
    k: float = 1.0
    tol: float = 1e-10
    max_iter: int = 10_000
    samples: Optional[int] = None
    seed: int = 0
    workers: int = 1
    output: Optional[str] = None
    fmt: str = "csv"
    scenario: Optional[str] = None
    dynamics: Optional[Tuple[str, ...]] = None
    x0: Optional[Tuple[float, ...]] = None
    dt: Optional[float] = None
    T: Optional[float] = None
    zoh: bool = False
    allow_iteration_cap: bool = False
    input: Optional[str] = None
    kind: Optional[str] = None
    progress: bool = True

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "CliConfig":
        def get(name, default=None):
            return getattr(args, name, default)

        seed = get("seed")
        if seed is None:
            try:
                seed = int(os.environ.get("LIPSOL_SEED", "0"))
            except ValueError:
                raise UsageError("LIPSOL_SEED must be an integer") from None

        methods_text = get("methods") or get("method")
        steps = _vector(get("steps"), "steps")
        if not steps:
            if get("step") is not None:
                steps = (get("step"),)
            else:
                steps = (1e-2, 1e-3) if args.command == "lipschitz" else (0.05,)
        if any(not s > 0 for s in steps):
            raise UsageError("steps must be positive")

        config = cls(
            command=args.command,
            problem=get("problem"),
            methods=_methods(methods_text) if methods_text else None,
            controller=_methods(get("controller"))[0] if get("controller") else None,
            provider=get("provider") or "expr",
            x=_vector(get("x"), "x"),
            steps=steps,
            lower=_vector(get("lower"), "lower"),
            upper=_vector(get("upper"), "upper"),
            center=_vector(get("center"), "center"),
            half_width=get("half_width"),
            k=get("k") if get("k") is not None else 1.0,
            tol=get("tol") if get("tol") is not None else 1e-10,
            max_iter=get("max_iter") if get("max_iter") is not None else 10_000,
            samples=get("samples"),
            seed=seed,
            workers=get("workers") or 1,
            output=get("output"),
            fmt=get("format") or ("json" if args.command in ("solve", "lipschitz", "bound", "list") else "csv"),
            scenario=get("scenario"),
            dynamics=tuple(s.strip() for s in get("dynamics").split(";")) if get("dynamics") else None,
            x0=_vector(get("x0"), "x0"),
            dt=get("dt"),
            T=get("T"),
            zoh=bool(get("zoh", False)),
            allow_iteration_cap=bool(get("allow_iteration_cap", False)),
            input=get("input"),
            kind=get("kind"),
            progress=not get("quiet", False),
        )
        config.validate()
        return config

    def validate(self) -> None:
        if self.provider == "steiner" and self.samples is None:
            raise UsageError("--provider steiner requires --samples")
        if self.samples is not None and self.samples < 1:
            raise UsageError("--samples must be at least 1")
        if not self.k > 0:
            raise UsageError("--k must be positive")
        if self.workers < 1:
            raise UsageError("--workers must be at least 1")
        if (self.lower is None) != (self.upper is None):
            raise UsageError("--lower and --upper must be given together")
        if self.command == "simulate" and self.scenario is None and not (self.problem and self.dynamics and self.x0):
            raise UsageError("simulate needs --scenario, or --problem with --dynamics and --x0")
        if self.command == "compare" and "qp_oracle" not in {canonical_method(m) for m in self.methods}:
            raise UsageError("compare needs the qp (qp_oracle) baseline among --methods")

    def solver_settings(self) -> SolverSettings:
        return SolverSettings(k=self.k, tol=self.tol, max_iter=self.max_iter, newton=NewtonSettings(),
                              samples=self.samples or 4096, seed=self.seed)

    def load_problem(self) -> ParametricProblem:
        if not self.problem:
            raise UsageError("--problem is required")
        return resolve_problem(self.problem)

    def window(self, problem: ParametricProblem, local_default: bool = False) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
        """Explicit --lower/--upper, else --center/--half-width, else the domain (or a local window)"""
        if self.lower is not None:
            lower, upper = self.lower, self.upper
        elif self.center is not None or self.half_width is not None or local_default:
            center = np.asarray(self.center if self.center is not None else problem.domain.center, dtype=float)
            half = self.half_width if self.half_width is not None else DEFAULT_HALF_WIDTH
            lower = tuple(np.maximum(center - half, problem.domain.lower).tolist())
            upper = tuple(np.minimum(center + half, problem.domain.upper).tolist())
        else:
            lower, upper = problem.domain.lower, problem.domain.upper
        if len(lower) != problem.n or len(upper) != problem.n:
            raise UsageError(f"window bounds need {problem.n} entries for {problem.name}")
        return tuple(lower), tuple(upper)


# Commands

def cmd_list(config: CliConfig) -> int:
    problems = []
    for name in registry_names():
        problem = registry_get(name)
        problems.append({
            "name": name,
            "n": problem.n,
            "m": problem.m,
            "p": problem.p,
            "domain": {"lower": list(problem.domain.lower), "upper": list(problem.domain.upper)},
            "description": problem.description,
        })
    dump_json({"problems": problems, "scenarios": scenario_names()}, config.output)
    return EXIT_OK


def cmd_solve(config: CliConfig) -> int:
    problem = config.load_problem()
    if config.x is None:
        raise UsageError("solve needs --x")
    settings = config.solver_settings()
    instance = instantiate(problem, config.x, settings.provider(config.provider))
    payload = []
    for label in config.methods:
        result = solve(instance, label, settings)
        entry = {"problem": problem.name, "x": list(config.x), "method": label, "provider": config.provider}
        entry.update(result.to_dict())
        entry["method"] = label
        entry["pi_f"] = instance.pi_f.tolist()
        payload.append(entry)
        if result.active_set is not None:
            logger.info(f"{label}: active set {{{', '.join(str(i + 1) for i in result.active_set)}}}")
        if result.status != "ok":
            logger.warning(f"⚠️ {label} finished with status {result.status}")
    dump_json(payload[0] if len(payload) == 1 else payload, config.output)
    return EXIT_OK if all(entry["status"] == "ok" for entry in payload) else EXIT_FAILURE


def _grid(config: CliConfig, problem: ParametricProblem, local_default: bool = False) -> GridSpec:
    lower, upper = config.window(problem, local_default)
    return GridSpec.from_steps(lower, upper, config.steps)


def cmd_sweep(config: CliConfig) -> int:
    problem = config.load_problem()
    records = sweep(problem, config.methods, _grid(config, problem), config.provider,
                    config.solver_settings(), config.workers, config.progress)
    frame = records_to_frame(records)
    if config.fmt == "json":
        dump_json(frame.to_dict(orient="records"), config.output)
    else:
        write_frame(frame, config.output)
    return EXIT_OK


def cmd_lipschitz(config: CliConfig) -> int:
    problem = config.load_problem()
    grid = _grid(config, problem, local_default=True)
    records = sweep(problem, config.methods, grid, config.provider,
                    config.solver_settings(), config.workers, config.progress)
    reports = {label: estimate_lipschitz(records, label) for label in config.methods}
    for label, report in reports.items():
        logger.info(f"📊 {label}: L_est {', '.join(f'{v:.4g}' for v in report.L_est)} -> {report.verdict}")
        if not report.complete:
            logger.warning(f"⚠️ {label}: estimate skips {sum(report.failed_points)} failed points")
    payload = {
        "problem": problem.name,
        "provider": config.provider,
        "window": {"lower": list(grid.lower), "upper": list(grid.upper)},
        "verdicts": {label: report.verdict for label, report in reports.items()},
        "reports": {label: report.to_dict() for label, report in reports.items()},
        "failed_points": {label: sum(report.failed_points) for label, report in reports.items()},
    }
    dump_json(payload, config.output)
    if any(report.verdict == "insufficient_data" for report in reports.values()):
        logger.error("❌ no usable pairs at some refinement level; see failed_points")
        return EXIT_FAILURE
    return EXIT_OK


def cmd_compare(config: CliConfig) -> int:
    problem = config.load_problem()
    records = sweep(problem, config.methods, _grid(config, problem), config.provider,
                    config.solver_settings(), config.workers, config.progress)
    summary = compare_methods(records)
    if config.fmt == "json":
        dump_json(summary.to_dict(orient="records"), config.output)
    else:
        write_frame(summary, config.output)
    return EXIT_OK


def cmd_simulate(config: CliConfig) -> int:
    sim_settings = SimSettings(zoh=config.zoh, allow_iteration_cap=config.allow_iteration_cap,
                               provider=config.provider, solver=config.solver_settings())
    if config.scenario:
        scenario = scenario_get(config.scenario)
        trajectory = run_scenario(scenario, config.controller, config.dt, config.T, config.x0, sim_settings, config.progress)
    else:
        problem = config.load_problem()
        dynamics = Dynamics.parse(config.dynamics, problem.n, problem.m)
        trajectory = simulate(problem, dynamics, config.controller or "socp", config.x0,
                              config.dt or 1e-3, config.T or 1.0, sim_settings, config.progress)
    max_du, max_dx = input_jumps(trajectory)
    logger.info(f"📈 {len(trajectory.times)} states, final status {trajectory.events[-1]}, "
                f"max input jump {max_du:.4g}, max state step {max_dx:.4g}, "
                f"{trajectory.capped_steps} capped controller calls")
    frame = trajectory.to_frame()
    if config.fmt == "json":
        dump_json(frame.to_dict(orient="records"), config.output)
    else:
        write_frame(frame, config.output)
    return EXIT_OK


def cmd_bound(config: CliConfig) -> int:
    problem = config.load_problem()
    meta = problem.constants
    L = lipschitz_bound(meta, problem.p)
    dump_json({
        "problem": problem.name,
        "L": L,
        "L_pi_des": meta.L_pi_des,
        "L_pi_f": meta.L_pi_f,
        "L_r": L - meta.L_pi_des - 2.0 * meta.L_pi_f,
    }, config.output)
    return EXIT_OK


def cmd_plot(config: CliConfig) -> int:
    if not config.input or not config.output:
        raise UsageError("plot needs --input and --output")
    from . import plotting

    methods = list(config.methods) if config.methods else None
    plotting.plot_csv(config.input, config.output, kind=config.kind, methods=methods)
    return EXIT_OK


COMMANDS = {
    "list": cmd_list,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "lipschitz": cmd_lipschitz,
    "compare": cmd_compare,
    "simulate": cmd_simulate,
    "bound": cmd_bound,
    "plot": cmd_plot,
}


def build_parser() -> argparse.ArgumentParser:
    common = _ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    common.add_argument("-q", "--quiet", action="store_true", help="Warnings only, no progress bars")
    common.add_argument("--output", help="Output path (default: standard output)")
    common.add_argument("--format", choices=["csv", "json"], help="Output format")

    model = _ArgumentParser(add_help=False)
    model.add_argument("--problem", help="Built-in problem name or path to a problem file")
    model.add_argument("--provider", choices=PROVIDER_TAGS, default="expr",
                       help="Feasible-point provider for pi_f (default: expr)")
    model.add_argument("--samples", type=int, help="Steiner point samples (required for --provider steiner)")
    model.add_argument("--seed", type=int, help="Seed for sampling (default: $LIPSOL_SEED or 0)")
    model.add_argument("--k", type=float, help="QCQP ball parameter (default: 1.0)")
    model.add_argument("--tol", type=float, help="Dykstra tolerance (default: 1e-10)")
    model.add_argument("--max-iter", type=int, help="Dykstra sweep cap (default: 10000)")

    grid = _ArgumentParser(add_help=False)
    grid.add_argument("--step", type=float, help="Grid step (default: 0.05)")
    grid.add_argument("--steps", help="Comma-separated steps, one refinement level each")
    grid.add_argument("--lower", help="Window lower corner, e.g. -1,-1")
    grid.add_argument("--upper", help="Window upper corner")
    grid.add_argument("--center", help="Window center (with --half-width)")
    grid.add_argument("--half-width", type=float, help="Window half-width around --center")
    grid.add_argument("--workers", type=int, default=1, help="Worker threads (default: 1)")

    parser = _ArgumentParser(prog="lipsol", description="Lipschitz SOCP reformulation of parametric QPs")
    parser.add_argument("--version", action="version", version=f"lipsol {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    sub.add_parser("list", parents=[common], help="List built-in problems and scenarios")

    p = sub.add_parser("solve", parents=[common, model], help="Solve at one parameter value")
    p.add_argument("--x", required=True, help="Parameter value, e.g. 0,0 (use --x=-1,0.5 for negatives)")
    p.add_argument("--method", default="socp", help="socp, qcqp, qp (comma-separated for several)")

    p = sub.add_parser("sweep", parents=[common, model, grid], help="Evaluate methods over a grid")
    p.add_argument("--methods", default="socp", help="Comma-separated methods (default: socp)")

    p = sub.add_parser("lipschitz", parents=[common, model, grid], help="Empirical Lipschitz analysis")
    p.add_argument("--method", "--methods", dest="methods", default="socp", help="Comma-separated methods")

    p = sub.add_parser("compare", parents=[common, model, grid], help="Conservatism against the exact QP")
    p.add_argument("--methods", default="socp,qcqp,qp", help="Methods including qp (default: socp,qcqp,qp)")

    p = sub.add_parser("simulate", parents=[common, model], help="Closed-loop RK4 simulation")
    p.add_argument("--scenario", help="Built-in scenario name")
    p.add_argument("--controller", help="socp, qcqp or qp (default: scenario's)")
    p.add_argument("--dynamics", help="Semicolon-separated f(x, u) expressions")
    p.add_argument("--x0", help="Initial state")
    p.add_argument("--dt", type=float, help="Step (default: 1e-3)")
    p.add_argument("--T", type=float, help="Horizon (default: 1.0)")
    p.add_argument("--zoh", action="store_true", help="Hold the input over each step")
    p.add_argument("--allow-iteration-cap", action="store_true",
                   help="Accept QCQP controls that reached --max-iter instead of stopping")

    sub.add_parser("bound", parents=[common, model], help="Theoretical SOCP Lipschitz bound")

    p = sub.add_parser("plot", parents=[common], help="Render a sweep or trajectory CSV")
    p.add_argument("--input", help="CSV written by sweep or simulate")
    p.add_argument("--kind", choices=["sweep", "trajectory"], help="Default: detected from the columns")
    p.add_argument("--methods", help="Methods to draw (default: all in the file)")
    return parser


def _configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse argv, run the command and return the exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except UsageError as err:
        print(f"lipsol: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)

    _configure_logging(args.verbose, args.quiet)
    try:
        config = CliConfig.from_args(args)
        return COMMANDS[config.command](config)
    except UsageError as err:
        logger.error(f"❌ {err}")
        return EXIT_USAGE
    except (LipsolError, np.linalg.LinAlgError) as err:
        logger.error(f"❌ {err}")
        return EXIT_FAILURE


def main() -> None:
    sys.exit(run())
