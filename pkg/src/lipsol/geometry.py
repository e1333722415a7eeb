"""
Geometric primitives on K(x) = {u : A u <= b}.

Ball projection, projection onto a polyhedron by active-set enumeration,
vertex enumeration, the log-barrier analytic center, support points and the
Monte Carlo Steiner point, plus the feasible-point providers built on them.
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations, islice
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog, nnls

from .errors import (
    ConvergenceError,
    EmptyInteriorError,
    EnumerationGuardError,
    GeometryError,
    UnboundedSetError,
)
from .problem import FeasiblePointProvider, ProblemInstance

logger = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-9
DUAL_TOL = 1e-9
PINV_RCOND = 1e-12
ENUMERATION_GUARD = 10 ** 6
CHUNK_SIZE = 20_000
CHEBYSHEV_TARGET = 1e5
PROVIDER_TAGS = ("expr", "analytic_center", "steiner")


@dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if not self.radius >= 0.0:
            raise GeometryError(f"ball radius must be nonnegative, got {self.radius}")

    def project(self, point: Sequence[float]) -> np.ndarray:
        c = np.asarray(self.center, dtype=float)
        return c + project_ball(np.asarray(point, dtype=float) - c, self.radius)

    def contains(self, point: Sequence[float], tol: float = 1e-12) -> bool:
        return float(np.linalg.norm(np.asarray(point, dtype=float) - self.center)) <= self.radius + tol


@dataclass(frozen=True)
class NewtonSettings:
    """Damped Newton parameters for the analytic center"""

    tol: float = 1e-10
    max_iter: int = 100
    backtrack_beta: float = 0.5
    backtrack_alpha: float = 0.1

    def __post_init__(self):
        if not self.tol > 0:
            raise GeometryError("Newton tol must be positive")
        if not 0 < self.backtrack_beta < 1:
            raise GeometryError("backtrack_beta must lie in (0, 1)")
        if not 0 < self.backtrack_alpha < 0.5:
            raise GeometryError("backtrack_alpha must lie in (0, 0.5)")
        if self.max_iter < 1:
            raise GeometryError("max_iter must be at least 1")


def project_ball(v_des: Sequence[float], radius: float) -> np.ndarray:
    """
    Project v_des onto the origin-centered ball of the given radius.

    Returns min(radius, |v|) v / |v|, and the zero vector for v = 0.
    """
    if not radius >= 0.0:
        raise GeometryError(f"ball radius must be nonnegative, got {radius}")
    v = np.asarray(v_des, dtype=float)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        return np.zeros_like(v)
    if norm <= radius:
        return v.copy()
    return (radius / norm) * v


# Projection onto a polyhedron (exact, by active-set enumeration)

@dataclass(frozen=True, eq=False)
class PolyhedralProjection:
    u: Optional[np.ndarray]
    active_set: Tuple[int, ...]
    certified: bool
    candidates: int

    @property
    def feasible(self) -> bool:
        return self.u is not None


def _count_subsets(p: int, sizes) -> int:
    return sum(math.comb(p, k) for k in sizes)


def _subset_chunks(p: int, k: int, chunk: int = CHUNK_SIZE) -> Iterator[np.ndarray]:
    it = combinations(range(p), k)
    while True:
        block = list(islice(it, chunk))
        if not block:
            return
        yield np.array(block, dtype=int)


def _certify_rank_deficient(AS: np.ndarray, g: np.ndarray) -> bool:
    """Nonnegative multipliers for a dependent active set: solve min |AS^T lam + g| over lam >= 0"""
    _, rnorm = nnls(AS.T, -g)
    return rnorm <= DUAL_TOL * (1.0 + float(np.linalg.norm(g)))


def project_onto_polyhedron(A: np.ndarray, b: np.ndarray, target: Sequence[float],
                            tol: float = FEASIBILITY_TOL,
                            guard: int = ENUMERATION_GUARD) -> PolyhedralProjection:
    """
    Euclidean projection of target onto {u : A u <= b}.

    Every subset S of at most m constraints is treated as an equality system;
    the projection onto {a_i^T u = b_i, i in S} comes from the pseudoinverse,
    so dependent subsets are handled too. Candidates must be primal feasible and
    carry multipliers >= -tol. The smallest objective wins.

    Args:
        A: p x m constraint matrix
        b: right-hand side
        target: point to project
        tol: primal and dual tolerance
        guard: maximum number of subsets to enumerate

    Returns:
        PolyhedralProjection; u is None when no feasible candidate exists
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    t = np.asarray(target, dtype=float)
    p, m = A.shape

    if np.max(A @ t - b) <= tol:
        return PolyhedralProjection(t.copy(), _active(A, b, t, tol), True, 0)

    sizes = range(1, min(m, p) + 1)
    total = _count_subsets(p, sizes)
    if total > guard:
        raise EnumerationGuardError(f"{total} active-set candidates exceed the enumeration guard {guard}")

    best_certified = (np.inf, None)
    best_feasible = (np.inf, None)
    count = 0
    for k in sizes:
        for S in _subset_chunks(p, k):
            AS = A[S]                                   # (N, k, m)
            bS = b[S]                                   # (N, k)
            P = np.linalg.pinv(AS, rcond=PINV_RCOND)    # (N, m, k)
            residual = np.einsum("nkm,m->nk", AS, t) - bS
            U = t - np.einsum("nmk,nk->nm", P, residual)
            consistent = np.max(np.abs(np.einsum("nkm,nm->nk", AS, U) - bS), axis=1) <= tol
            feasible = consistent & (np.max(U @ A.T - b, axis=1) <= tol)
            if not feasible.any():
                continue
            idx = np.flatnonzero(feasible)
            count += idx.size
            U, AS, P = U[idx], AS[idx], P[idx]
            g = 2.0 * (U - t)
            lam = -np.einsum("nmk,nm->nk", P, g)
            stationarity = np.linalg.norm(g + np.einsum("nkm,nk->nm", AS, lam), axis=1)
            scale = 1.0 + np.linalg.norm(g, axis=1)
            certified = (lam.min(axis=1) >= -DUAL_TOL) & (stationarity <= DUAL_TOL * scale)

            if k > 1:
                deficient = ~certified & (np.linalg.matrix_rank(AS) < k)
                for j in np.flatnonzero(deficient):
                    certified[j] = _certify_rank_deficient(AS[j], g[j])

            objective = np.sum((U - t) ** 2, axis=1)
            j = int(np.argmin(objective))
            if objective[j] < best_feasible[0]:
                best_feasible = (objective[j], U[j])
            if certified.any():
                obj_c = np.where(certified, objective, np.inf)
                j = int(np.argmin(obj_c))
                if obj_c[j] < best_certified[0]:
                    best_certified = (obj_c[j], U[j])

    if best_certified[1] is not None:
        u = best_certified[1]
        return PolyhedralProjection(u.copy(), _active(A, b, u, tol), True, count)
    if best_feasible[1] is not None:
        u = best_feasible[1]
        logger.debug("No KKT-certified candidate; returning the best feasible candidate")
        return PolyhedralProjection(u.copy(), _active(A, b, u, tol), False, count)
    return PolyhedralProjection(None, (), False, count)


def _active(A: np.ndarray, b: np.ndarray, u: np.ndarray, tol: float) -> Tuple[int, ...]:
    return tuple(int(i) for i in np.flatnonzero(np.abs(A @ u - b) <= tol))


# Vertices and recession directions

def polytope_vertices(A: np.ndarray, b: np.ndarray, tol: float = FEASIBILITY_TOL) -> np.ndarray:
    """All vertices of {u : A u <= b}, one per row, in enumeration order"""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    p, m = A.shape
    if p < m:
        return np.empty((0, m))
    total = math.comb(p, m)
    if total > ENUMERATION_GUARD:
        raise EnumerationGuardError(f"{total} vertex candidates exceed the enumeration guard")

    found = []
    for S in _subset_chunks(p, m):
        M = A[S]
        regular = np.abs(np.linalg.det(M)) > 1e-12
        if not regular.any():
            continue
        V = np.linalg.solve(M[regular], b[S][regular][..., None])[..., 0]
        keep = np.max(V @ A.T - b, axis=1) <= tol
        found.append(V[keep])
    if not found:
        return np.empty((0, m))
    V = np.concatenate(found)
    if V.shape[0] == 0:
        return V
    _, first = np.unique(np.round(V, 9), axis=0, return_index=True)
    return V[np.sort(first)]


def recession_rays(A: np.ndarray, tol: float = 1e-7) -> np.ndarray:
    """Unit generators of the recession cone {d : A d <= 0} (empty when K is bounded)"""
    A = np.asarray(A, dtype=float)
    m = A.shape[1]
    eye = np.eye(m)
    boxed = np.vstack([A, eye, -eye])
    rhs = np.concatenate([np.zeros(A.shape[0]), np.ones(2 * m)])
    V = polytope_vertices(boxed, rhs)
    norms = np.linalg.norm(V, axis=1)
    keep = norms > tol
    return V[keep] / norms[keep, None]


def recession_direction(A: np.ndarray) -> Optional[np.ndarray]:
    """A direction along which {A u <= b} is unbounded, or None if it is bounded"""
    rays = recession_rays(A)
    return rays[0] if rays.shape[0] else None


# Interior points

def chebyshev_center(instance: ProblemInstance) -> Tuple[np.ndarray, float]:
    """
    Deepest point of K(x): maximize s subject to a_i^T u + s <= b_i.

    Solved as the projection of (0, M) onto the lifted polyhedron in (u, s).
    With unit rows the optimal s is the Euclidean depth.
    """
    A, b = instance.A, instance.b
    lifted = np.hstack([A, np.ones((A.shape[0], 1))])
    target = np.zeros(A.shape[1] + 1)
    target[-1] = CHEBYSHEV_TARGET
    result = project_onto_polyhedron(lifted, b, target)
    if not result.feasible:
        raise EmptyInteriorError("K(x) is empty: no point satisfies the constraints")
    u, s = result.u[:-1], float(result.u[-1])
    if s > CHEBYSHEV_TARGET / 4:
        raise UnboundedSetError("K likely unbounded: the minimum slack grows without bound")
    return u, s


def strictly_feasible_start(instance: ProblemInstance) -> np.ndarray:
    u, s = chebyshev_center(instance)
    if s <= 1e-12:
        raise EmptyInteriorError(f"K(x) has empty interior (maximal minimum slack {s:.3e})")
    logger.debug(f"Strictly feasible start with slack {s:.6g}")
    return u


def _barrier(A: np.ndarray, b: np.ndarray, u: np.ndarray) -> float:
    return float(-np.sum(np.log(b - A @ u)))


@dataclass(frozen=True, eq=False)
class CenterResult:
    u: np.ndarray
    iterations: int
    gradient_norm: float


def analytic_center_info(instance: ProblemInstance,
                         init: Optional[Sequence[float]] = None,
                         settings: Optional[NewtonSettings] = None) -> CenterResult:
    """
    Minimize G(u) = -sum log(b_i - a_i^T u) by damped Newton.

    Args:
        instance: problem instance with a bounded K(x) of nonempty interior
        init: strictly feasible starting point (the Chebyshev center by default)
        settings: Newton parameters

    Returns:
        CenterResult with |grad G(u)| <= settings.tol

    Raises:
        EmptyInteriorError, UnboundedSetError, ConvergenceError
    """
    settings = settings or NewtonSettings()
    A, b = instance.A, instance.b
    if init is not None and np.min(b - A @ np.asarray(init, dtype=float)) > 0:
        u = np.asarray(init, dtype=float).copy()
    else:
        u = strictly_feasible_start(instance)

    beta, alpha = settings.backtrack_beta, settings.backtrack_alpha
    for iteration in range(settings.max_iter + 1):
        slack = b - A @ u
        grad = A.T @ (1.0 / slack)
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= settings.tol:
            logger.debug(f"Analytic center after {iteration} Newton steps (|grad| = {grad_norm:.2e})")
            return CenterResult(u, iteration, grad_norm)
        if iteration == settings.max_iter:
            break

        hessian = A.T @ (A / slack[:, None] ** 2)
        eigenvalues = np.linalg.eigvalsh(hessian)
        if eigenvalues[0] <= 1e-12 * max(eigenvalues[-1], 1.0):
            raise UnboundedSetError("K likely unbounded: the barrier Hessian is singular")
        step = -np.linalg.solve(hessian, grad)
        decrement = float(-grad @ step)

        t = 1.0
        while np.min(b - A @ (u + t * step)) <= 0.0:
            t *= beta
            if t < 1e-20:
                raise ConvergenceError("line search cannot stay strictly feasible", iteration)
        if decrement > 1e-10:
            g0 = _barrier(A, b, u)
            while _barrier(A, b, u + t * step) > g0 - alpha * t * decrement:
                t *= beta
                if t < 1e-20:
                    raise ConvergenceError("Armijo line search failed", iteration)
        u = u + t * step

    raise ConvergenceError(
        f"analytic center not reached in {settings.max_iter} Newton steps (|grad| = {grad_norm:.2e})",
        settings.max_iter)


def analytic_center(instance: ProblemInstance,
                    init: Optional[Sequence[float]] = None,
                    settings: Optional[NewtonSettings] = None) -> np.ndarray:
    return analytic_center_info(instance, init, settings).u


# Support points and the Steiner point

class SupportFunction:
    """Support points of a fixed polyhedron, from its vertex list (an LP when it has none)"""

    def __init__(self, A: np.ndarray, b: np.ndarray, tie_tol: float = 1e-12):
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.tie_tol = tie_tol
        self.rays = recession_rays(self.A)
        self.vertices = polytope_vertices(self.A, self.b)
        if self.vertices.shape[0] == 0 and self.rays.shape[0] == 0:
            raise GeometryError("K(x) is empty")

    @property
    def pointed(self) -> bool:
        return self.vertices.shape[0] > 0

    @property
    def bounded(self) -> bool:
        return self.rays.shape[0] == 0

    def point(self, direction: Sequence[float]) -> np.ndarray:
        """argmax over K of direction^T u; ties go to the least-norm maximizer"""
        theta = np.asarray(direction, dtype=float)
        scale = float(np.linalg.norm(theta))
        if scale == 0.0:
            return self._least_norm(self.A, self.b)
        ray_slope = float(np.max(self.rays @ theta)) if self.rays.shape[0] else -np.inf
        if ray_slope > FEASIBILITY_TOL * scale:
            raise UnboundedSetError(f"K(x) is unbounded in direction {theta.tolist()}")
        if not self.pointed:
            return self._face_point(theta)

        values = self.vertices @ theta
        best = float(values.max())
        ties = np.flatnonzero(values >= best - self.tie_tol * (1.0 + abs(best)))
        if ties.size == 1 and ray_slope < -FEASIBILITY_TOL * scale:
            return self.vertices[ties[0]].copy()
        face_A = np.vstack([self.A, -theta / scale])
        face_b = np.append(self.b, -best / scale)
        return self._least_norm(face_A, face_b)

    def points(self, directions: np.ndarray) -> np.ndarray:
        """Row-wise support points for a batch of directions"""
        directions = np.atleast_2d(np.asarray(directions, dtype=float))
        if not self.pointed:
            return np.array([self.point(d) for d in directions])
        values = directions @ self.vertices.T
        best = values.max(axis=1)
        n_ties = np.sum(values >= (best - self.tie_tol * (1.0 + np.abs(best)))[:, None], axis=1)
        out = self.vertices[np.argmax(values, axis=1)].copy()
        special = n_ties > 1
        if not self.bounded:
            special[:] = True
        for j in np.flatnonzero(special):
            out[j] = self.point(directions[j])
        return out

    def _face_point(self, theta: np.ndarray) -> np.ndarray:
        """Least-norm maximizer on a set without vertices, from the LP optimum of theta^T u"""
        result = linprog(-theta, A_ub=self.A, b_ub=self.b, bounds=[(None, None)] * theta.size, method="highs")
        if result.status == 3:
            raise UnboundedSetError(f"K(x) is unbounded in direction {theta.tolist()}")
        if result.status != 0:
            raise GeometryError(f"support LP failed: {result.message}")
        scale = float(np.linalg.norm(theta))
        best = -float(result.fun)
        face_A = np.vstack([self.A, -theta / scale])
        face_b = np.append(self.b, -(best - 1e-10 * (1.0 + abs(best))) / scale)
        return self._least_norm(face_A, face_b)

    @staticmethod
    def _least_norm(A: np.ndarray, b: np.ndarray) -> np.ndarray:
        result = project_onto_polyhedron(A, b, np.zeros(A.shape[1]))
        if not result.feasible:
            raise GeometryError("maximizing face is empty")
        return result.u


def support_point(instance: ProblemInstance, direction: Sequence[float]) -> np.ndarray:
    return SupportFunction(instance.A, instance.b).point(direction)


def steiner_point(instance: ProblemInstance,
                  samples: int = 4096,
                  seed: int = 0,
                  antithetic: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """
    Monte Carlo Steiner point of a compact K(x).

    Directions are normalized Gaussian vectors, i.e. uniform on the sphere. The
    support point depends on the direction only, so this is the same average
    as over the unit ball. With antithetic sampling each draw theta is paired
    with -theta and the standard error is taken over pair means.

    Args:
        instance: problem instance with compact K(x)
        samples: number of directions (rounded up to even when antithetic)
        seed: seed for numpy.random.default_rng
        antithetic: pair every direction with its negative

    Returns:
        (estimate, per-coordinate standard error)
    """
    if samples < 1:
        raise GeometryError("Steiner point needs at least one sample")
    support = SupportFunction(instance.A, instance.b)
    if not support.bounded:
        raise UnboundedSetError("Steiner point needs a compact K(x)")

    rng = np.random.default_rng(seed)
    draws = (samples + 1) // 2 if antithetic else samples
    theta = rng.standard_normal((draws, instance.m))
    theta /= np.linalg.norm(theta, axis=1, keepdims=True)
    values = support.points(theta)
    if antithetic:
        values = 0.5 * (values + support.points(-theta))

    estimate = values.mean(axis=0)
    if draws > 1:
        stderr = values.std(axis=0, ddof=1) / math.sqrt(draws)
    else:
        stderr = np.full(instance.m, np.inf)
    return estimate, stderr


def ball_outer_polytope(center: Sequence[float], radius: float, facets: int = 64,
                        first_normal: Optional[Sequence[float]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Tangent half-spaces n_k^T u <= n_k^T c + r around a disk in the plane"""
    c = np.asarray(center, dtype=float)
    if c.size != 2:
        raise GeometryError("polyhedral ball approximation is only available for m = 2")
    if facets < 3:
        raise GeometryError("need at least 3 facets")
    if not radius >= 0.0:
        raise GeometryError(f"ball radius must be nonnegative, got {radius}")
    phase = 0.0
    if first_normal is not None and np.linalg.norm(first_normal) > 0:
        phase = math.atan2(first_normal[1], first_normal[0])
    angles = phase + 2.0 * np.pi * np.arange(facets) / facets
    normals = np.column_stack([np.cos(angles), np.sin(angles)])
    if first_normal is not None and np.linalg.norm(first_normal) > 0:
        normals[0] = np.asarray(first_normal, dtype=float) / np.linalg.norm(first_normal)
    return normals, normals @ c + radius


# Feasible-point providers

@dataclass(frozen=True)
class AnalyticCenterProvider:
    settings: NewtonSettings = field(default_factory=NewtonSettings)

    def __call__(self, instance: ProblemInstance) -> np.ndarray:
        return analytic_center(instance, settings=self.settings)


@dataclass(frozen=True)
class SteinerPointProvider:
    samples: int = 4096
    seed: int = 0

    def __call__(self, instance: ProblemInstance) -> np.ndarray:
        estimate, _ = steiner_point(instance, self.samples, self.seed)
        return estimate


def make_provider(tag: str,
                  newton: Optional[NewtonSettings] = None,
                  samples: int = 4096,
                  seed: int = 0) -> Optional[FeasiblePointProvider]:
    """
    Feasible-point provider for a tag.

    'expr' returns None (use the problem's pi_f expressions),
    'analytic_center' and 'steiner' return callables on ProblemInstance.
    """
    if tag == "expr":
        return None
    if tag == "analytic_center":
        return AnalyticCenterProvider(newton or NewtonSettings())
    if tag == "steiner":
        return SteinerPointProvider(samples, seed)
    raise GeometryError(f"unknown provider '{tag}' (expected one of {', '.join(PROVIDER_TAGS)})")
