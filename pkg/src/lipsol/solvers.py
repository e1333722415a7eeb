"""
Solution maps of the parametric QP.

- socp:      closed form pi_f + P_r(pi_des - pi_f) over the inscribed ball
- qcqp:      projection of pi_des onto the intersection of balls through pi_f (Dykstra)
- qp_oracle: exact projection onto K(x) by active-set enumeration
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize, nnls

from . import geometry
from .errors import AssumptionViolationError, SolverError
from .problem import ProblemInstance, feasibility_residual

logger = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-9
RADIUS_CLAMP = 1e-9
KKT_TOL = 1e-9
KKT_CHECK_EVERY = 25
TANGENCY_TOL = 1e-13

METHODS = ("socp", "qcqp", "qp_oracle")
METHOD_ALIASES = {"qp": "qp_oracle", "oracle": "qp_oracle"}


def canonical_method(tag: str) -> str:
    """Resolve user-facing method names ('qp' -> 'qp_oracle')"""
    name = METHOD_ALIASES.get(tag, tag)
    if name not in METHODS and name != "socp_polyhedral":
        raise SolverError(f"unknown method '{tag}' (expected one of {', '.join(METHODS)})")
    return name


@dataclass(frozen=True)
class SolverSettings:
    """
    Per-point solver and provider configuration.

    Attributes:
        k: QCQP ball parameter (> 0)
        tol: Dykstra step below which the KKT residual is checked
        max_iter: Dykstra sweep cap
        newton: analytic-center Newton settings
        samples: Steiner point sample count
        seed: Steiner point seed
        facets: tangent facets for the polyhedral SOCP cross-check
        polish: SLSQP polish of QCQP iterates that reach max_iter
    """

    k: float = 1.0
    tol: float = 1e-10
    max_iter: int = 10_000
    newton: geometry.NewtonSettings = field(default_factory=geometry.NewtonSettings)
    samples: int = 4096
    seed: int = 0
    facets: int = 64
    polish: bool = True

    def __post_init__(self):
        if not self.k > 0:
            raise SolverError(f"QCQP parameter k must be positive, got {self.k}")
        if not self.tol > 0 or self.max_iter < 1:
            raise SolverError("tol must be positive and max_iter at least 1")
        if self.samples < 1:
            raise SolverError("samples must be at least 1")

    def provider(self, tag: str):
        return geometry.make_provider(tag, newton=self.newton, samples=self.samples, seed=self.seed)


@dataclass(frozen=True, eq=False)
class SolveResult:
    u: np.ndarray
    method: str
    feasibility_residual: float
    status: str
    radius: Optional[float] = None
    active_set: Optional[Tuple[int, ...]] = None
    iterations: Optional[int] = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> Dict:
        """JSON-ready view; active constraints are reported 1-based"""
        return {
            "method": self.method,
            "u": [float(v) for v in self.u],
            "radius": self.radius,
            "status": self.status,
            "feasibility_residual": self.feasibility_residual,
            "iterations": self.iterations,
            "active_set": [i + 1 for i in self.active_set] if self.active_set is not None else None,
        }


def _status(residual: float) -> str:
    return "ok" if residual <= FEASIBILITY_TOL else "infeasible"


def _slacks_at_pi_f(instance: ProblemInstance) -> np.ndarray:
    slack = instance.slacks(instance.pi_f)
    worst = int(np.argmin(slack))
    if slack[worst] < -RADIUS_CLAMP:
        raise AssumptionViolationError(
            f"pi_f(x) is infeasible: slack {slack[worst]:.3e} < 0", worst)
    return np.maximum(slack, 0.0)


def radius(instance: ProblemInstance) -> float:
    """r(x) = min_i (b_i - a_i^T pi_f), clamped to 0 on [-1e-9, 0)"""
    return float(np.min(_slacks_at_pi_f(instance)))


def solve_socp(instance: ProblemInstance) -> SolveResult:
    r = radius(instance)
    u = instance.pi_f + geometry.project_ball(instance.pi_des - instance.pi_f, r)
    residual = feasibility_residual(instance, u)
    return SolveResult(u=u, method="socp", feasibility_residual=residual, status=_status(residual), radius=r)


def _pull_into_balls(u: np.ndarray, anchor: np.ndarray, centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Largest t in [0, 1] with anchor + t (u - anchor) inside every ball"""
    d = u - anchor
    dd = float(d @ d)
    if dd == 0.0:
        return u
    w = anchor - centers
    wd = w @ d
    disc = np.maximum(wd ** 2 - dd * (np.sum(w * w, axis=1) - radii ** 2), 0.0)
    t = float(np.clip(np.min((-wd + np.sqrt(disc)) / dd), 0.0, 1.0))
    return anchor + t * d


def _ball_violation(u: np.ndarray, centers: np.ndarray, radii: np.ndarray) -> float:
    return float(np.max(np.linalg.norm(u - centers, axis=1) - radii))


def _ball_kkt(u: np.ndarray, target: np.ndarray, centers: np.ndarray, radii: np.ndarray,
              active_tol: float = 1e-7) -> float:
    gaps = np.linalg.norm(u - centers, axis=1) - radii
    if np.max(gaps) > FEASIBILITY_TOL:
        return float("inf")
    g = u - target
    active = np.flatnonzero(gaps >= -active_tol)
    if active.size == 0:
        return float(np.linalg.norm(g))
    _, rnorm = nnls((u - centers[active]).T, -g)
    return float(rnorm)


def qcqp_balls(instance: ProblemInstance, k: float) -> Tuple[np.ndarray, np.ndarray]:
    """Centers c_i = pi_f - k a_i and radii sqrt(k^2 + 2k slack_i)"""
    if not k > 0:
        raise SolverError(f"QCQP parameter k must be positive, got {k}")
    slack = _slacks_at_pi_f(instance)
    centers = instance.pi_f - k * instance.A
    radii = np.sqrt(k * k + 2.0 * k * slack)
    return centers, radii


def _tangent_point(centers: np.ndarray, radii: np.ndarray, tol: float = TANGENCY_TOL) -> Optional[np.ndarray]:
    """
    Touching point of two externally tangent balls when it lies in every ball.

    The intersection is then that single point and admits no KKT multipliers.
    """
    diff = centers[None, :, :] - centers[:, None, :]
    dist = np.linalg.norm(diff, axis=-1)
    gap = dist - radii[:, None] - radii[None, :]
    for i, j in np.argwhere(np.triu(gap >= -tol * (1.0 + dist), k=1)):
        q = centers[i] + (radii[i] / dist[i, j]) * diff[i, j]
        if _ball_violation(q, centers, radii) <= FEASIBILITY_TOL:
            return q
    return None


def _polish_in_balls(u0: np.ndarray, target: np.ndarray, centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """SLSQP on the ball constraints, started from the Dykstra iterate"""
    constraints = {
        "type": "ineq",
        "fun": lambda u: radii ** 2 - np.sum((u - centers) ** 2, axis=1),
        "jac": lambda u: -2.0 * (u - centers),
    }
    result = minimize(lambda u: 0.5 * float((u - target) @ (u - target)), u0,
                      jac=lambda u: u - target, method="SLSQP", constraints=[constraints],
                      options={"ftol": 1e-16, "maxiter": 500})
    return np.asarray(result.x, dtype=float)


def _refine_on_active_spheres(u: np.ndarray, target: np.ndarray, centers: np.ndarray, radii: np.ndarray,
                              active_tol: float = 1e-7, steps: int = 20) -> np.ndarray:
    """
    Newton on the KKT system of the balls active at u:
        u - target + sum_i mu_i (u - c_i) = 0,  |u - c_i|^2 = rho_i^2
    Returns u unchanged when the system is singular or a multiplier turns negative.
    """
    active = np.flatnonzero(np.linalg.norm(u - centers, axis=1) - radii >= -active_tol)
    if active.size == 0 or active.size > u.size:
        return u
    C, rho = centers[active], radii[active]
    mu, _ = nnls((u - C).T, target - u)
    z = np.concatenate([u, mu])
    m = u.size
    for _ in range(steps):
        v, lam = z[:m], z[m:]
        D = v - C
        residual = np.concatenate([v - target + D.T @ lam, 0.5 * (np.sum(D * D, axis=1) - rho ** 2)])
        if np.linalg.norm(residual) <= 1e-15:
            break
        J = np.block([[(1.0 + lam.sum()) * np.eye(m), D.T], [D, np.zeros((active.size, active.size))]])
        z = z - np.linalg.solve(J, residual)
    if not np.all(np.isfinite(z)) or z[m:].min() < -KKT_TOL:
        return u
    return z[:m]


def solve_qcqp(instance: ProblemInstance, k: float = 1.0, tol: float = 1e-10,
               max_iter: int = 10_000, kkt_tol: float = KKT_TOL, polish: bool = True) -> SolveResult:
    """
    Project pi_des onto the intersection of the balls through pi_f.

    Dykstra's cyclic projections with correction terms, started at pi_des.
    Sweeps stop when the iterate is feasible and its ball KKT residual is at
    most kkt_tol. The residual is checked every KKT_CHECK_EVERY sweeps and
    whenever successive iterates differ by at most tol. Dykstra converges
    sublinearly on nearly tangent balls; an iterate that reaches the cap is
    polished with SLSQP and Newton on the active spheres, and is accepted only
    when its KKT residual passes. Two externally tangent balls leave a single
    feasible point, which is returned directly. The result is finally pulled
    back along the segment from pi_f (which lies in every ball) so the ball
    constraints hold in every case.
    """
    centers, radii = qcqp_balls(instance, k)
    target = instance.pi_des
    u = target.copy()
    iterations = 0
    status = "ok"

    touch = _tangent_point(centers, radii) if _ball_violation(u, centers, radii) > 0.0 else None
    if touch is not None:
        u = touch
    elif _ball_violation(u, centers, radii) > 0.0:
        corrections = np.zeros_like(centers)
        status = "iteration_cap"
        for iterations in range(1, max_iter + 1):
            previous = u
            for i in range(centers.shape[0]):
                y = u + corrections[i]
                u = centers[i] + geometry.project_ball(y - centers[i], radii[i])
                corrections[i] = y - u
            if _ball_violation(u, centers, radii) > FEASIBILITY_TOL:
                continue
            settled = np.linalg.norm(u - previous) <= tol
            if (settled or iterations % KKT_CHECK_EVERY == 0) and _ball_kkt(u, target, centers, radii) <= kkt_tol:
                status = "ok"
                break

        if status != "ok" and polish:
            try:
                polished = _polish_in_balls(u, target, centers, radii)
                polished = _refine_on_active_spheres(polished, target, centers, radii)
                polished = _pull_into_balls(polished, instance.pi_f, centers, radii)
            except (ValueError, np.linalg.LinAlgError) as err:
                logger.debug(f"SLSQP polish failed at x = {instance.x.tolist()}: {err}")
            else:
                if _ball_kkt(polished, target, centers, radii) <= kkt_tol:
                    u, status = polished, "ok"
        if status != "ok":
            logger.debug(f"Dykstra hit the cap of {max_iter} sweeps at x = {instance.x.tolist()}")
        if _ball_violation(u, centers, radii) > 1e-12:
            u = _pull_into_balls(u, instance.pi_f, centers, radii)

    residual = feasibility_residual(instance, u)
    if status == "ok":
        status = _status(residual)
    return SolveResult(u=u, method="qcqp", feasibility_residual=residual, status=status, iterations=iterations)


def ball_kkt_residual(instance: ProblemInstance, u: Sequence[float], k: float = 1.0,
                      active_tol: float = 1e-7) -> float:
    """
    Stationarity residual of the QCQP at u.

    min over mu >= 0 of |(u - pi_des) + sum_i mu_i (u - c_i)| over the balls
    active within active_tol; inf if u violates a ball constraint.
    """
    centers, radii = qcqp_balls(instance, k)
    return _ball_kkt(np.asarray(u, dtype=float), instance.pi_des, centers, radii, active_tol)


def solve_qp_oracle(instance: ProblemInstance) -> SolveResult:
    projection = geometry.project_onto_polyhedron(instance.A, instance.b, instance.pi_des)
    if not projection.feasible:
        return SolveResult(u=np.full(instance.m, np.nan), method="qp_oracle",
                           feasibility_residual=float("inf"), status="infeasible", active_set=())
    residual = feasibility_residual(instance, projection.u)
    if not projection.certified:
        logger.debug(f"QP oracle returned an uncertified candidate at x = {instance.x.tolist()}")
    return SolveResult(u=projection.u, method="qp_oracle", feasibility_residual=residual,
                       status=_status(residual), active_set=projection.active_set,
                       iterations=projection.candidates)


def solve_socp_polyhedral(instance: ProblemInstance, facets: int = 64) -> SolveResult:
    """
    SOCP solution recomputed by the QP oracle on a tangent-facet outer
    approximation of the ball (pi_f, r). The first facet is normal to
    pi_des - pi_f, so the boundary projection lands on a tangent point.
    """
    r = radius(instance)
    direction = instance.pi_des - instance.pi_f
    A, b = geometry.ball_outer_polytope(instance.pi_f, r, facets, direction)
    projection = geometry.project_onto_polyhedron(A, b, instance.pi_des)
    if not projection.feasible:
        raise SolverError("polyhedral ball approximation produced no candidate")
    residual = feasibility_residual(instance, projection.u)
    return SolveResult(u=projection.u, method="socp_polyhedral", feasibility_residual=residual,
                       status=_status(residual), radius=r, active_set=projection.active_set)


def verify_kkt(instance: ProblemInstance, u: Sequence[float], tol: float = 1e-9) -> bool:
    """True iff u is feasible and 2(u - pi_des) + sum lam_i a_i = 0 has lam >= -tol on active rows"""
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)) or feasibility_residual(instance, u) > tol:
        return False
    g = 2.0 * (u - instance.pi_des)
    scale = tol * (1.0 + float(np.linalg.norm(g)))
    active = np.flatnonzero(instance.A @ u - instance.b >= -tol)
    if active.size == 0:
        return float(np.linalg.norm(g)) <= scale
    At = instance.A[active].T
    lam, *_ = np.linalg.lstsq(At, -g, rcond=None)
    if np.linalg.norm(At @ lam + g) <= scale and lam.min() >= -tol:
        return True
    _, rnorm = nnls(At, -g)
    return rnorm <= scale


def solve(instance: ProblemInstance, method: str, settings: Optional[SolverSettings] = None) -> SolveResult:
    """Dispatch to a solution map by method tag"""
    settings = settings or SolverSettings()
    method = canonical_method(method)
    if method == "socp":
        return solve_socp(instance)
    if method == "qcqp":
        return solve_qcqp(instance, settings.k, settings.tol, settings.max_iter, polish=settings.polish)
    if method == "socp_polyhedral":
        return solve_socp_polyhedral(instance, settings.facets)
    return solve_qp_oracle(instance)
