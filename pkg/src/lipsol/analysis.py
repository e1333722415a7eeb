"""
Regularity analysis of solution maps.

Sweeps a parameter grid at one or more refinement levels, estimates Lipschitz
constants from adjacent-pair difference quotients, flags jumps, computes the
theoretical SOCP bound from problem metadata and summarizes how conservative
each method is against the exact QP.
"""

import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from .errors import AnalysisError, DegenerateRowError, DomainError, LipsolError
from .problem import LipschitzMetadata, ParametricProblem, ProblemInstance, instantiate
from .solvers import SolveResult, SolverSettings, canonical_method, qcqp_balls, radius, solve

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
MAX_GRID_POINTS = 10 ** 7
JUMP_SIZE = 0.1
DIVERGENCE_FACTOR = 2.0
MAX_REPORTED_JUMPS = 100

VERDICTS = ("lipschitz_stable", "diverging", "discontinuous", "insufficient_data")


@dataclass(frozen=True)
class GridSpec:
    """
    Rectangular parameter grid.

    Attributes:
        lower, upper: per-axis window bounds
        step: per-axis base step
        refinement_levels: step multipliers, one grid per entry (e.g. (1, 0.1))
    """

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    step: Tuple[float, ...]
    refinement_levels: Tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if not (len(self.lower) == len(self.upper) == len(self.step)):
            raise AnalysisError("grid lower, upper and step must have one entry per parameter")
        for j, (lo, hi, h) in enumerate(zip(self.lower, self.upper, self.step)):
            if not lo < hi:
                raise AnalysisError(f"grid axis {j + 1}: lower {lo} must be below upper {hi}")
            if not h > 0:
                raise AnalysisError(f"grid axis {j + 1}: step must be positive")
        if not self.refinement_levels or any(not f > 0 for f in self.refinement_levels):
            raise AnalysisError("refinement levels must be positive step multipliers")
        for level in range(len(self.refinement_levels)):
            count = math.prod(self.shape(level))
            if count > MAX_GRID_POINTS:
                raise AnalysisError(f"grid level {level + 1} has {count} points (guard {MAX_GRID_POINTS})")

    @classmethod
    def from_steps(cls, lower: Sequence[float], upper: Sequence[float], steps: Sequence[float]) -> "GridSpec":
        """Same step on every axis, one level per entry of steps"""
        if not steps:
            raise AnalysisError("at least one step is required")
        base = float(steps[0])
        return cls(
            lower=tuple(float(v) for v in lower),
            upper=tuple(float(v) for v in upper),
            step=(base,) * len(lower),
            refinement_levels=tuple(float(s) / base for s in steps),
        )

    @property
    def dim(self) -> int:
        return len(self.lower)

    def level_step(self, level: int) -> float:
        return self.step[0] * self.refinement_levels[level]

    def axes(self, level: int) -> List[np.ndarray]:
        axes = []
        for lo, hi, h in zip(self.lower, self.upper, self.step):
            h = h * self.refinement_levels[level]
            cells = (hi - lo) / h
            whole = round(cells)
            if abs(cells - whole) <= 1e-6 * max(1.0, whole):
                axes.append(np.linspace(lo, hi, int(whole) + 1))
            else:
                axes.append(lo + h * np.arange(int(math.floor(cells)) + 1))
        return axes

    def shape(self, level: int) -> Tuple[int, ...]:
        shape = []
        for lo, hi, h in zip(self.lower, self.upper, self.step):
            cells = (hi - lo) / (h * self.refinement_levels[level])
            whole = round(cells)
            shape.append(int(whole if abs(cells - whole) <= 1e-6 * max(1.0, whole) else math.floor(cells)) + 1)
        return tuple(shape)

    def tasks(self) -> List[Tuple[int, float, Tuple[int, ...], np.ndarray]]:
        """(level, step, grid index, x) for every point, lexicographic per level"""
        out = []
        for level in range(len(self.refinement_levels)):
            axes = self.axes(level)
            for index in np.ndindex(*[a.size for a in axes]):
                x = np.array([axes[j][i] for j, i in enumerate(index)])
                out.append((level, self.level_step(level), tuple(int(i) for i in index), x))
        return out


def domain_grid(problem: ParametricProblem, steps: Sequence[float]) -> GridSpec:
    return GridSpec.from_steps(problem.domain.lower, problem.domain.upper, steps)


@dataclass(eq=False)
class SweepRecord:
    level: int
    step: float
    index: Tuple[int, ...]
    x: np.ndarray
    results: Dict[str, SolveResult]
    pi_des: Optional[np.ndarray] = None
    radius: Optional[float] = None
    status: str = "ok"
    message: str = ""
    socp_in_qcqp: Optional[bool] = None

    def u(self, method: str) -> np.ndarray:
        return self.results[method].u

    def ok(self, method: str) -> bool:
        result = self.results.get(method)
        return result is not None and result.ok


def _failed_result(method: str, m: int, status: str) -> SolveResult:
    return SolveResult(u=np.full(m, np.nan), method=method, feasibility_residual=float("inf"), status=status)


def ball_contained_in_qcqp(instance: ProblemInstance, k: float = 1.0) -> bool:
    """
    Whether the SOCP ball (pi_f, r) lies inside every QCQP ball.

    Ball(pi_f, r) is inside Ball(c_i, rho_i) iff |pi_f - c_i| + r <= rho_i,
    and |pi_f - c_i| = k for unit rows.
    """
    r = radius(instance)
    centers, radii = qcqp_balls(instance, k)
    distances = np.linalg.norm(instance.pi_f - centers, axis=1)
    return bool(np.all(distances + r <= radii + 1e-12))


def _evaluate_point(problem: ParametricProblem,
                    methods: Dict[str, str],
                    provider,
                    settings: SolverSettings,
                    task) -> SweepRecord:
    level, step, index, x = task
    try:
        instance = instantiate(problem, x, provider)
    except (LipsolError, np.linalg.LinAlgError) as err:
        status = "degenerate" if isinstance(err, DegenerateRowError) else "error"
        logger.warning(f"⚠️ x = {x.tolist()}: {err}")
        results = {label: _failed_result(method, problem.m, status) for label, method in methods.items()}
        return SweepRecord(level, step, index, x, results, status=status, message=str(err))

    results = {}
    for label, method in methods.items():
        try:
            results[label] = solve(instance, method, settings)
        except (LipsolError, np.linalg.LinAlgError) as err:
            logger.warning(f"⚠️ {label} failed at x = {x.tolist()}: {err}")
            results[label] = _failed_result(method, problem.m, "error")

    contained = None
    if {"socp", "qcqp"} <= set(methods.values()):
        contained = ball_contained_in_qcqp(instance, settings.k)
    return SweepRecord(level, step, index, x, results, pi_des=instance.pi_des,
                       radius=radius(instance), socp_in_qcqp=contained)


def sweep(problem: ParametricProblem,
          methods: Sequence[str],
          grid: GridSpec,
          provider: str = "expr",
          settings: Optional[SolverSettings] = None,
          workers: int = 1,
          progress: bool = True) -> List[SweepRecord]:
    """
    Evaluate the requested solution maps at every grid point of every level.

    Args:
        problem: parametric problem
        methods: method labels ('socp', 'qcqp', 'qp' or 'qp_oracle', ...)
        grid: grid inside problem.domain
        provider: feasible-point provider tag
        settings: solver settings
        workers: worker threads; the output order does not depend on it
        progress: show a tqdm progress bar

    Returns:
        list of SweepRecord in (level, lexicographic grid index) order
    """
    settings = settings or SolverSettings()
    if not methods:
        raise AnalysisError("sweep needs at least one method")
    labels = {label: canonical_method(label) for label in methods}
    if grid.dim != problem.n:
        raise AnalysisError(f"grid has {grid.dim} axes but {problem.name} has {problem.n} parameters")
    if not (problem.domain.contains(grid.lower) and problem.domain.contains(grid.upper)):
        raise DomainError(f"grid window {list(grid.lower)}..{list(grid.upper)} leaves the domain of {problem.name}")

    tasks = grid.tasks()
    evaluate = partial(_evaluate_point, problem, labels, settings.provider(provider), settings)
    logger.info(f"🔍 Sweeping {problem.name}: {len(tasks)} points, methods {', '.join(labels)}, provider {provider}")

    records: List[Optional[SweepRecord]] = [None] * len(tasks)
    with tqdm(total=len(tasks), desc=f"Sweeping {problem.name}", disable=not progress) as pbar:
        if workers <= 1:
            for i, task in enumerate(tasks):
                records[i] = evaluate(task)
                pbar.update(1)
        else:
            with ThreadPoolExecutor(max_workers=workers) as executor:
                future_to_index = {executor.submit(evaluate, task): i for i, task in enumerate(tasks)}
                for future in as_completed(future_to_index):
                    records[future_to_index[future]] = future.result()
                    pbar.update(1)

    failed = sum(1 for r in records if r.status != "ok")
    logger.info(f"✅ Sweep finished: {len(records)} records, {failed} failed points")
    return records


# Lipschitz estimation

@dataclass(frozen=True)
class JumpLocation:
    x_a: Tuple[float, ...]
    x_b: Tuple[float, ...]
    quotient: float
    jump: float

    def to_dict(self) -> Dict:
        return {"x_a": list(self.x_a), "x_b": list(self.x_b), "quotient": self.quotient, "jump": self.jump}


@dataclass(frozen=True)
class LipschitzReport:
    """
    Per-level estimates of one method. points, failed_points and pairs count
    the grid points, the points without an 'ok' result and the adjacent pairs
    that entered the estimate; a report with failed points is incomplete.
    """

    method: str
    steps: Tuple[float, ...]
    L_est: Tuple[float, ...]
    jump_locations: Tuple[JumpLocation, ...]
    verdict: str
    growth_per_decade: Tuple[float, ...] = field(default=())
    points: Tuple[int, ...] = field(default=())
    failed_points: Tuple[int, ...] = field(default=())
    pairs: Tuple[int, ...] = field(default=())

    @property
    def complete(self) -> bool:
        return not any(self.failed_points)

    def to_dict(self) -> Dict:
        return {
            "method": self.method,
            "steps": list(self.steps),
            "L_est": list(self.L_est),
            "growth_per_decade": list(self.growth_per_decade),
            "jump_locations": [j.to_dict() for j in self.jump_locations],
            "verdict": self.verdict,
            "points": list(self.points),
            "failed_points": list(self.failed_points),
            "pairs": list(self.pairs),
            "complete": self.complete,
        }


def _level_arrays(records: List[SweepRecord], method: str) -> Tuple[np.ndarray, np.ndarray]:
    n = records[0].x.size
    m = records[0].results[method].u.size
    shape = tuple(max(r.index[a] for r in records) + 1 for a in range(n))
    if math.prod(shape) != len(records):
        raise AnalysisError("records do not form a rectangular grid")
    X = np.empty(shape + (n,))
    U = np.full(shape + (m,), np.nan)
    for r in records:
        X[r.index] = r.x
        if r.ok(method):
            U[r.index] = r.results[method].u
    return X, U


def _growth(steps: Sequence[float], L_est: Sequence[float]) -> List[float]:
    growth = []
    for (h1, l1), (h2, l2) in zip(zip(steps, L_est), zip(steps[1:], L_est[1:])):
        decades = math.log10(h1 / h2)
        if l1 <= 1e-12:
            growth.append(float("inf") if l2 > 1e-9 else 1.0)
        elif decades <= 0:
            growth.append(1.0)
        else:
            growth.append((l2 / l1) ** (1.0 / decades))
    return growth


def estimate_lipschitz(records: Sequence[SweepRecord], method: str) -> LipschitzReport:
    """
    Largest adjacent-pair quotient |u(x_a) - u(x_b)| / |x_a - x_b| per level.

    Pairs touching a point without an 'ok' result are skipped and counted.
    Verdict: insufficient_data if some level has no usable pair; discontinuous
    if a single cell at the finest level carries a jump above 0.1; diverging
    if L_est grows by 2x or more per decade of refinement between consecutive
    levels; lipschitz_stable otherwise.
    """
    if len(records) < 2:
        raise AnalysisError("Lipschitz estimation needs at least 2 records")
    if method not in records[0].results:
        raise AnalysisError(f"records carry no results for method '{method}'")

    by_level: Dict[int, List[SweepRecord]] = {}
    for r in records:
        by_level.setdefault(r.level, []).append(r)
    levels = sorted(by_level, key=lambda lv: -by_level[lv][0].step)

    steps, L_est, finest_jumps = [], [], []
    points, failed, pairs = [], [], []
    for level in levels:
        X, U = _level_arrays(by_level[level], method)
        level_L = 0.0
        level_pairs = 0
        jumps = []
        for axis in range(X.ndim - 1):
            if X.shape[axis] < 2:
                continue
            du = np.linalg.norm(np.diff(U, axis=axis), axis=-1)
            dx = np.linalg.norm(np.diff(X, axis=axis), axis=-1)
            q = du / dx
            valid = np.isfinite(q)
            level_pairs += int(valid.sum())
            if valid.any():
                level_L = max(level_L, float(q[valid].max()))
            for idx in np.argwhere(valid & (du > JUMP_SIZE)):
                a = tuple(idx)
                b = list(a)
                b[axis] += 1
                jumps.append(JumpLocation(tuple(X[a].tolist()), tuple(X[tuple(b)].tolist()),
                                          float(q[a]), float(du[a])))
        steps.append(by_level[level][0].step)
        L_est.append(level_L)
        points.append(len(by_level[level]))
        failed.append(sum(1 for r in by_level[level] if not r.ok(method)))
        pairs.append(level_pairs)
        finest_jumps = jumps
        logger.debug(f"{method}: step {steps[-1]:g} L_est {level_L:.6g} ({len(jumps)} jumps, "
                     f"{failed[-1]} failed points)")
        if failed[-1]:
            logger.warning(f"⚠️ {method}: {failed[-1]} of {points[-1]} points failed at step {steps[-1]:g}")

    growth = _growth(steps, L_est)
    if not all(pairs):
        verdict = "insufficient_data"
    elif finest_jumps:
        verdict = "discontinuous"
    elif any(g >= DIVERGENCE_FACTOR for g in growth):
        verdict = "diverging"
    else:
        verdict = "lipschitz_stable"
    finest_jumps.sort(key=lambda j: (-j.quotient, j.x_a))
    return LipschitzReport(
        method=method,
        steps=tuple(steps),
        L_est=tuple(L_est),
        jump_locations=tuple(finest_jumps[:MAX_REPORTED_JUMPS]),
        verdict=verdict,
        growth_per_decade=tuple(growth),
        points=tuple(points),
        failed_points=tuple(failed),
        pairs=tuple(pairs),
    )


def lipschitz_bound(meta: Optional[LipschitzMetadata], p: Optional[int] = None) -> float:
    """L = L_pi_des + 2 L_pi_f + max_i (L_b[i] + L_pi_f + L_a[i] U_f_bar)"""
    if meta is None:
        raise AnalysisError("problem has no Lipschitz metadata")
    if p is not None and len(meta.L_a) != p:
        raise AnalysisError(f"metadata has {len(meta.L_a)} row entries, expected {p}")
    if not meta.L_a:
        raise AnalysisError("metadata has no row entries")
    L_r = max(lb + meta.L_pi_f + la * meta.U_f_bar for la, lb in zip(meta.L_a, meta.L_b))
    return meta.L_pi_des + 2.0 * meta.L_pi_f + L_r


# Method comparison

def compare_methods(records: Sequence[SweepRecord]) -> pd.DataFrame:
    """
    Distance to the exact QP solution and objective gap per method.

    gap = |u_method - pi_des| - |u_qp - pi_des|, which is >= 0 up to rounding
    because every reformulated feasible set lies inside K(x). For qcqp the
    table also counts points where the SOCP ball is certified to lie inside
    the QCQP balls but the qcqp gap exceeds the socp gap.
    """
    if not records:
        raise AnalysisError("no records to compare")
    labels = list(records[0].results)
    baseline = next((l for l in labels if records[0].results[l].method == "qp_oracle"), None)
    if baseline is None:
        raise AnalysisError("comparison needs the qp_oracle baseline among the methods")
    others = [l for l in labels if l != baseline]
    if not others:
        raise AnalysisError("comparison needs at least one method besides the baseline")
    socp = next((l for l in others if records[0].results[l].method == "socp"), None)

    rows = []
    for label in others:
        distances, gaps = [], []
        checked = violations = 0
        for r in records:
            if not (r.ok(label) and r.ok(baseline)):
                continue
            u, u_qp = r.u(label), r.u(baseline)
            distances.append(float(np.linalg.norm(u - u_qp)))
            gap = float(np.linalg.norm(u - r.pi_des) - np.linalg.norm(u_qp - r.pi_des))
            gaps.append(gap)
            if r.results[label].method == "qcqp" and socp is not None and r.socp_in_qcqp and r.ok(socp):
                checked += 1
                socp_gap = float(np.linalg.norm(r.u(socp) - r.pi_des) - np.linalg.norm(u_qp - r.pi_des))
                if gap > socp_gap + 1e-7:
                    violations += 1
        rows.append({
            "method": label,
            "points": len(gaps),
            "mean_distance": float(np.mean(distances)) if distances else float("nan"),
            "max_distance": float(np.max(distances)) if distances else float("nan"),
            "mean_gap": float(np.mean(gaps)) if gaps else float("nan"),
            "max_gap": float(np.max(gaps)) if gaps else float("nan"),
            "min_gap": float(np.min(gaps)) if gaps else float("nan"),
            "containment_checked": checked,
            "dominance_violations": violations,
        })
    return pd.DataFrame(rows)


# Output

def records_to_frame(records: Sequence[SweepRecord]) -> pd.DataFrame:
    """One row per record: x_1..x_n, per method u_1..u_m, residual, status, then radius/level/step"""
    rows = []
    for r in records:
        row = {f"x_{j + 1}": float(v) for j, v in enumerate(r.x)}
        for label, result in r.results.items():
            for j, v in enumerate(result.u):
                row[f"{label}_u_{j + 1}"] = float(v)
            row[f"{label}_residual"] = result.feasibility_residual
            row[f"{label}_status"] = result.status
        row["radius"] = r.radius if r.radius is not None else float("nan")
        row["level"] = r.level + 1
        row["step"] = r.step
        rows.append(row)
    return pd.DataFrame(rows)


def write_frame(frame: pd.DataFrame, output: Optional[str] = None) -> None:
    """CSV with 17 significant digits, to a path or standard output"""
    if output:
        frame.to_csv(output, index=False, float_format=FLOAT_FORMAT)
        logger.info(f"💾 Wrote {len(frame)} rows to {output}")
    else:
        frame.to_csv(sys.stdout, index=False, float_format=FLOAT_FORMAT)


def dump_json(payload, output: Optional[str] = None) -> None:
    text = json.dumps(payload, indent=2, allow_nan=True)
    if output:
        with open(output, "w", encoding="utf-8") as f:
            f.write(text + "\n")
        logger.info(f"💾 Wrote {output}")
    else:
        sys.stdout.write(text + "\n")
