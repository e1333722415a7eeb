"""
Closed-loop simulation of x' = f(x, pi(x)).

Fixed-step RK4 with the controller evaluated at every stage (or held over the
step in zero-order-hold mode). Scenarios bundling a problem, dynamics and
defaults ship as JSON under lipsol/scenarios/.
"""

import json
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from . import expr
from .errors import DomainError, LipsolError, ProblemFormatError, SimulationError
from .problem import ParametricProblem, instantiate, problem_from_dict, registry_get
from .solvers import METHODS, SolveResult, SolverSettings, canonical_method, solve

logger = logging.getLogger(__name__)

SCENARIO_DIR = Path(__file__).resolve().parent / "scenarios"
COMPLETED_EVENTS = ("ok", "iteration_cap")


@dataclass(frozen=True)
class Dynamics:
    n: int
    m: int
    f_exprs: Tuple[expr.Expression, ...]

    def __post_init__(self):
        if len(self.f_exprs) != self.n:
            raise ProblemFormatError(f"dynamics need {self.n} expressions, got {len(self.f_exprs)}")
        for i, e in enumerate(self.f_exprs):
            params, inputs = expr.free_vars(e)
            if (params and max(params) > self.n) or (inputs and max(inputs) > self.m):
                raise ProblemFormatError(f"f[{i + 1}] references undeclared variables")

    @classmethod
    def parse(cls, sources: Sequence[str], n: int, m: int) -> "Dynamics":
        try:
            return cls(n, m, tuple(expr.parse(s) for s in sources))
        except LipsolError as err:
            raise ProblemFormatError(f"dynamics: {err}") from err

    def __call__(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return np.array([expr.evaluate(e, x, u) for e in self.f_exprs], dtype=float)


@dataclass(frozen=True)
class SimSettings:
    """
    zoh holds the input over each step; provider and solver configure the
    controller. allow_iteration_cap accepts QCQP iterates that reached the
    sweep cap (with a warning) instead of stopping the run.
    """

    zoh: bool = False
    allow_iteration_cap: bool = False
    provider: str = "expr"
    solver: SolverSettings = field(default_factory=SolverSettings)


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    events: List[str]

    def __post_init__(self):
        if not (len(self.times) == len(self.states) == len(self.inputs) == len(self.events)):
            raise SimulationError("trajectory arrays have inconsistent lengths")

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def capped_steps(self) -> int:
        return sum(1 for e in self.events if e == "iteration_cap")

    @property
    def completed(self) -> bool:
        return self.events[-1] in COMPLETED_EVENTS

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"t": self.times})
        for j in range(self.states.shape[1]):
            frame[f"x_{j + 1}"] = self.states[:, j]
        for j in range(self.inputs.shape[1]):
            frame[f"u_{j + 1}"] = self.inputs[:, j]
        frame["status"] = self.events
        return frame


def simulate(problem: ParametricProblem,
             dynamics: Dynamics,
             controller: str,
             x0: Sequence[float],
             dt: float = 1e-3,
             T: float = 1.0,
             settings: Optional[SimSettings] = None,
             progress: bool = False) -> Trajectory:
    """
    Integrate the closed loop from x0 over [0, T].

    Args:
        problem: parametric problem defining the controller
        dynamics: f(x, u)
        controller: 'socp', 'qcqp' or 'qp_oracle' (alias 'qp')
        x0: initial state inside problem.domain
        dt: fixed step
        T: horizon, rounded to a whole number of steps
        settings: zero-order hold, provider and solver settings
        progress: show a tqdm progress bar

    Returns:
        Trajectory; events hold the controller status per state. Integration
        stops early with 'domain_exit' when the next state leaves the domain and
        with 'controller_error' when the controller fails.
    """
    settings = settings or SimSettings()
    method = canonical_method(controller)
    if method not in METHODS:
        raise SimulationError(f"controller must be one of {', '.join(METHODS)}")
    if not dt > 0 or not T > 0:
        raise SimulationError("dt and T must be positive")
    if dynamics.n != problem.n or dynamics.m != problem.m:
        raise SimulationError(f"dynamics dimensions ({dynamics.n}, {dynamics.m}) do not match "
                              f"{problem.name} ({problem.n}, {problem.m})")
    x0 = np.asarray(x0, dtype=float)
    if not problem.domain.contains(x0):
        raise DomainError(f"x0 = {x0.tolist()} lies outside the domain of {problem.name}")

    provider = settings.solver.provider(settings.provider)

    def control(x: np.ndarray) -> SolveResult:
        result = solve(instantiate(problem, x, provider, check_domain=False), method, settings.solver)
        if result.status == "iteration_cap" and settings.allow_iteration_cap:
            logger.warning(f"⚠️ {method} controller reached the iteration cap at x = {x.tolist()}")
            return result
        if result.status != "ok":
            raise SimulationError(f"{method} controller returned status {result.status} at x = {x.tolist()}")
        return result

    steps = max(1, int(round(T / dt)))
    times, states, inputs, events = [0.0], [x0], [], []
    try:
        first = control(x0)
        inputs.append(first.u)
        events.append(first.status)
    except (LipsolError, np.linalg.LinAlgError) as err:
        logger.warning(f"⚠️ Controller failed at x0: {err}")
        return Trajectory(np.array(times), np.array(states), np.full((1, problem.m), np.nan), ["controller_error"])

    for k in tqdm(range(steps), desc=f"Simulating {method}", disable=not progress):
        x, u = states[-1], inputs[-1]

        def field_at(xs: np.ndarray) -> np.ndarray:
            return dynamics(xs, u if settings.zoh else control(xs).u)

        try:
            k1 = dynamics(x, u)
            k2 = field_at(x + 0.5 * dt * k1)
            k3 = field_at(x + 0.5 * dt * k2)
            k4 = field_at(x + dt * k3)
        except (LipsolError, np.linalg.LinAlgError) as err:
            logger.warning(f"⚠️ Integration halted at t = {times[-1]:g}: {err}")
            events[-1] = "controller_error"
            break
        x_next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x_next)) or not problem.domain.contains(x_next):
            logger.info(f"State left the domain after t = {times[-1]:g}")
            events[-1] = "domain_exit"
            break

        times.append((k + 1) * dt)
        states.append(x_next)
        try:
            result = control(x_next)
            inputs.append(result.u)
            events.append(result.status)
        except (LipsolError, np.linalg.LinAlgError) as err:
            logger.warning(f"⚠️ Controller failed at t = {times[-1]:g}: {err}")
            inputs.append(np.full(problem.m, np.nan))
            events.append("controller_error")
            break

    return Trajectory(np.array(times), np.array(states), np.array(inputs), events)


def input_jumps(trajectory: Trajectory) -> Tuple[float, float]:
    """(max_k |u_{k+1} - u_k|, max_k |x_{k+1} - x_k|) over steps with finite inputs"""
    if len(trajectory.times) < 2:
        return 0.0, 0.0
    du = np.linalg.norm(np.diff(trajectory.inputs, axis=0), axis=1)
    dx = np.linalg.norm(np.diff(trajectory.states, axis=0), axis=1)
    du = du[np.isfinite(du)]
    return (float(du.max()) if du.size else 0.0), float(dx.max())


# Scenarios

@dataclass(frozen=True)
class Scenario:
    name: str
    problem: ParametricProblem
    dynamics: Dynamics
    x0: Tuple[float, ...]
    dt: float
    T: float
    controller: str
    description: str = ""


def scenario_from_dict(doc: Dict) -> Scenario:
    try:
        source = doc["problem"]
        problem = registry_get(source) if isinstance(source, str) else problem_from_dict(source)
        return Scenario(
            name=str(doc["name"]),
            problem=problem,
            dynamics=Dynamics.parse(doc["dynamics"], problem.n, problem.m),
            x0=tuple(float(v) for v in doc["x0"]),
            dt=float(doc.get("dt", 1e-3)),
            T=float(doc.get("T", 1.0)),
            controller=str(doc.get("controller", "socp")),
            description=str(doc.get("description", "")),
        )
    except (KeyError, TypeError) as err:
        raise ProblemFormatError(f"scenario document is incomplete ({err})") from err


def load_scenario(path) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return scenario_from_dict(json.load(f))
    except OSError as err:
        raise ProblemFormatError(f"cannot read scenario file {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ProblemFormatError(f"{path}: invalid JSON ({err})") from err


def scenario_names() -> List[str]:
    return sorted(p.stem for p in SCENARIO_DIR.glob("*.json"))


@lru_cache(maxsize=None)
def scenario_get(name: str) -> Scenario:
    path = SCENARIO_DIR / f"{name}.json"
    if not path.is_file():
        raise ProblemFormatError(f"unknown scenario '{name}' (available: {', '.join(scenario_names())})")
    return load_scenario(path)


def run_scenario(scenario: Scenario,
                 controller: Optional[str] = None,
                 dt: Optional[float] = None,
                 T: Optional[float] = None,
                 x0: Optional[Sequence[float]] = None,
                 settings: Optional[SimSettings] = None,
                 progress: bool = False) -> Trajectory:
    """simulate() with the scenario's defaults for anything not given"""
    return simulate(
        scenario.problem,
        scenario.dynamics,
        controller or scenario.controller,
        x0 if x0 is not None else scenario.x0,
        dt if dt is not None else scenario.dt,
        T if T is not None else scenario.T,
        settings,
        progress,
    )
