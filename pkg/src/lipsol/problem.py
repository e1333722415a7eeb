"""
Parametric QP models.

A ParametricProblem holds the symbolic data of

    min_u ||u - pi_des(x)||^2   s.t.   A(x) u <= b(x),   x in a box domain

and instantiate() turns it into a numeric ProblemInstance at a fixed x, with
every constraint row scaled to unit norm (K(x) is unchanged by positive row
scaling). Built-in case studies are loaded from the JSON files shipped in
lipsol/problems/.
"""

import json
import logging
import os
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import expr
from .errors import (
    AssumptionViolationError,
    DegenerateRowError,
    DomainError,
    ExpressionError,
    ProblemFormatError,
)

logger = logging.getLogger(__name__)

ZERO_ROW_NORM = 1e-14
PI_F_TOLERANCE = 1e-9
DOMAIN_TOLERANCE = 1e-12

BUILTIN_DIR = Path(__file__).resolve().parent / "problems"


@dataclass(frozen=True)
class Box:
    """Per-coordinate bounds lower <= x <= upper"""

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise ProblemFormatError("domain lower and upper bounds have different lengths")
        for i, (lo, hi) in enumerate(zip(self.lower, self.upper)):
            if not lo <= hi:
                raise ProblemFormatError(f"domain bound {i + 1}: lower {lo} > upper {hi}")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.lower) + np.asarray(self.upper)) / 2.0

    def contains(self, x: Sequence[float], tol: float = DOMAIN_TOLERANCE) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= np.asarray(self.lower) - tol) and np.all(x <= np.asarray(self.upper) + tol))


@dataclass(frozen=True)
class LipschitzMetadata:
    """
    Lipschitz constants of the row-normalized data over the domain.

    L_a[i], L_b[i] bound a_i(x), b_i(x); L_pi_des and L_pi_f bound pi_des and
    pi_f; U_f_bar bounds ||pi_f(x)||.
    """

    L_a: Tuple[float, ...]
    L_b: Tuple[float, ...]
    L_pi_des: float
    L_pi_f: float
    U_f_bar: float

    def __post_init__(self):
        values = list(self.L_a) + list(self.L_b) + [self.L_pi_des, self.L_pi_f, self.U_f_bar]
        if any(not v >= 0.0 for v in values):
            raise ProblemFormatError("Lipschitz metadata entries must be nonnegative")
        if len(self.L_a) != len(self.L_b):
            raise ProblemFormatError("L_a and L_b must have one entry per constraint")


@dataclass(frozen=True)
class ParametricProblem:
    name: str
    n: int
    m: int
    p: int
    A_exprs: Tuple[Tuple[expr.Expression, ...], ...]
    b_exprs: Tuple[expr.Expression, ...]
    pi_des_exprs: Tuple[expr.Expression, ...]
    pi_f_exprs: Optional[Tuple[expr.Expression, ...]]
    domain: Box
    constants: Optional[LipschitzMetadata] = None
    description: str = ""

    def __post_init__(self):
        if min(self.n, self.m, self.p) < 1:
            raise ProblemFormatError(f"{self.name}: n, m and p must be positive")
        if len(self.A_exprs) != self.p or any(len(row) != self.m for row in self.A_exprs):
            raise ProblemFormatError(f"{self.name}: A must be a {self.p}x{self.m} grid")
        if len(self.b_exprs) != self.p:
            raise ProblemFormatError(f"{self.name}: b must have {self.p} entries")
        if len(self.pi_des_exprs) != self.m:
            raise ProblemFormatError(f"{self.name}: pi_des must have {self.m} entries")
        if self.pi_f_exprs is not None and len(self.pi_f_exprs) != self.m:
            raise ProblemFormatError(f"{self.name}: pi_f must have {self.m} entries")
        if self.domain.dim != self.n:
            raise ProblemFormatError(f"{self.name}: domain has dimension {self.domain.dim}, expected {self.n}")
        if self.constants is not None and len(self.constants.L_a) != self.p:
            raise ProblemFormatError(f"{self.name}: Lipschitz metadata must have {self.p} row entries")
        for label, e in self._labelled_exprs():
            params, inputs = expr.free_vars(e)
            if inputs:
                raise ProblemFormatError(f"{self.name}: {label} references input variables")
            if params and max(params) > self.n:
                raise ProblemFormatError(f"{self.name}: {label} references x{max(params)} but n = {self.n}")

    def _labelled_exprs(self):
        for i, row in enumerate(self.A_exprs):
            for j, e in enumerate(row):
                yield f"A[{i + 1}][{j + 1}]", e
        for i, e in enumerate(self.b_exprs):
            yield f"b[{i + 1}]", e
        for j, e in enumerate(self.pi_des_exprs):
            yield f"pi_des[{j + 1}]", e
        for j, e in enumerate(self.pi_f_exprs or ()):
            yield f"pi_f[{j + 1}]", e


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Numeric snapshot of a ParametricProblem at x, rows of A normalized"""

    x: np.ndarray
    A: np.ndarray
    b: np.ndarray
    pi_des: np.ndarray
    pi_f: Optional[np.ndarray]
    raw_row_norms: np.ndarray

    @property
    def m(self) -> int:
        return self.A.shape[1]

    @property
    def p(self) -> int:
        return self.A.shape[0]

    def slacks(self, u: Sequence[float]) -> np.ndarray:
        return self.b - self.A @ np.asarray(u, dtype=float)


FeasiblePointProvider = Callable[[ProblemInstance], np.ndarray]


def _evaluate_all(exprs, x) -> np.ndarray:
    return np.array([expr.evaluate(e, x) for e in exprs], dtype=float)


def instantiate(problem: ParametricProblem,
                x: Sequence[float],
                provider: Optional[FeasiblePointProvider] = None,
                check_domain: bool = True) -> ProblemInstance:
    """
    Evaluate a problem at parameter x.

    Args:
        problem: the parametric model
        x: parameter vector of length problem.n
        provider: feasible-point provider; when given it replaces pi_f expressions
        check_domain: reject x outside problem.domain (simulation stages turn this off)

    Returns:
        ProblemInstance with unit-norm rows and a validated pi_f

    Raises:
        DomainError, DegenerateRowError, AssumptionViolationError, ProblemFormatError
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != problem.n:
        raise DomainError(f"{problem.name}: expected a parameter of length {problem.n}, got {x.size}")
    if check_domain and not problem.domain.contains(x):
        raise DomainError(f"{problem.name}: x = {x.tolist()} lies outside the parameter domain")

    A = np.array([_evaluate_all(row, x) for row in problem.A_exprs], dtype=float)
    b = _evaluate_all(problem.b_exprs, x)
    norms = np.linalg.norm(A, axis=1)
    degenerate = np.flatnonzero(norms < ZERO_ROW_NORM)
    if degenerate.size:
        raise DegenerateRowError(int(degenerate[0]), float(norms[degenerate[0]]))
    A = A / norms[:, None]
    b = b / norms

    instance = ProblemInstance(
        x=x,
        A=A,
        b=b,
        pi_des=_evaluate_all(problem.pi_des_exprs, x),
        pi_f=None,
        raw_row_norms=norms,
    )

    if provider is not None:
        pi_f = np.asarray(provider(instance), dtype=float)
    elif problem.pi_f_exprs is not None:
        pi_f = _evaluate_all(problem.pi_f_exprs, x)
    else:
        raise ProblemFormatError(f"{problem.name}: no pi_f expressions and no feasible-point provider")

    violation = A @ pi_f - b
    worst = int(np.argmax(violation))
    if violation[worst] > PI_F_TOLERANCE:
        raise AssumptionViolationError(
            f"pi_f(x) is infeasible at x = {x.tolist()} by {violation[worst]:.3e}", worst)
    return replace(instance, pi_f=pi_f)


def feasibility_residual(instance: ProblemInstance, u: Sequence[float]) -> float:
    """max_i (a_i^T u - b_i); <= 0 means u lies in K(x)"""
    return float(np.max(instance.A @ np.asarray(u, dtype=float) - instance.b))


# File format and registry

def _parse_field(value, label: str) -> expr.Expression:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return expr.constant(value)
    if not isinstance(value, str):
        raise ProblemFormatError(f"{label}: expected an expression string, got {value!r}")
    try:
        return expr.parse(value, allow_inputs=False)
    except ExpressionError as err:
        raise ProblemFormatError(f"{label}: {err}") from err


def _parse_list(doc: Dict, key: str) -> Tuple[expr.Expression, ...]:
    values = doc.get(key)
    if not isinstance(values, list):
        raise ProblemFormatError(f"field '{key}' must be a list")
    return tuple(_parse_field(v, f"{key}[{i + 1}]") for i, v in enumerate(values))


def problem_from_dict(doc: Dict) -> ParametricProblem:
    """Build a ParametricProblem from a decoded problem document"""
    missing = [key for key in ("name", "n", "m", "p", "domain", "A", "b", "pi_des") if key not in doc]
    if missing:
        raise ProblemFormatError(f"problem document is missing fields: {', '.join(missing)}")

    A_doc = doc["A"]
    if not isinstance(A_doc, list) or not all(isinstance(row, list) for row in A_doc):
        raise ProblemFormatError("field 'A' must be a list of rows")
    A_exprs = tuple(
        tuple(_parse_field(v, f"A[{i + 1}][{j + 1}]") for j, v in enumerate(row))
        for i, row in enumerate(A_doc)
    )

    domain_doc = doc["domain"]
    try:
        domain = Box(tuple(float(v) for v in domain_doc["lower"]), tuple(float(v) for v in domain_doc["upper"]))
    except (KeyError, TypeError) as err:
        raise ProblemFormatError(f"field 'domain' must have 'lower' and 'upper' lists ({err})") from err

    constants = None
    if doc.get("constants") is not None:
        c = doc["constants"]
        try:
            constants = LipschitzMetadata(
                L_a=tuple(float(v) for v in c["L_a"]),
                L_b=tuple(float(v) for v in c["L_b"]),
                L_pi_des=float(c["L_pi_des"]),
                L_pi_f=float(c["L_pi_f"]),
                U_f_bar=float(c["U_f_bar"]),
            )
        except (KeyError, TypeError) as err:
            raise ProblemFormatError(f"field 'constants' is incomplete ({err})") from err

    try:
        n, m, p = int(doc["n"]), int(doc["m"]), int(doc["p"])
    except (TypeError, ValueError) as err:
        raise ProblemFormatError(f"n, m and p must be integers ({err})") from err

    return ParametricProblem(
        name=str(doc["name"]),
        n=n,
        m=m,
        p=p,
        A_exprs=A_exprs,
        b_exprs=_parse_list(doc, "b"),
        pi_des_exprs=_parse_list(doc, "pi_des"),
        pi_f_exprs=_parse_list(doc, "pi_f") if doc.get("pi_f") is not None else None,
        domain=domain,
        constants=constants,
        description=str(doc.get("description", "")),
    )


def problem_to_dict(problem: ParametricProblem) -> Dict:
    """Inverse of problem_from_dict (expressions are written in canonical form)"""
    doc = {
        "name": problem.name,
        "description": problem.description,
        "n": problem.n,
        "m": problem.m,
        "p": problem.p,
        "domain": {"lower": list(problem.domain.lower), "upper": list(problem.domain.upper)},
        "A": [[expr.pretty(e) for e in row] for row in problem.A_exprs],
        "b": [expr.pretty(e) for e in problem.b_exprs],
        "pi_des": [expr.pretty(e) for e in problem.pi_des_exprs],
        "pi_f": [expr.pretty(e) for e in problem.pi_f_exprs] if problem.pi_f_exprs is not None else None,
    }
    if problem.constants is not None:
        c = problem.constants
        doc["constants"] = {
            "L_a": list(c.L_a),
            "L_b": list(c.L_b),
            "L_pi_des": c.L_pi_des,
            "L_pi_f": c.L_pi_f,
            "U_f_bar": c.U_f_bar,
        }
    return doc


def load_problem(path) -> ParametricProblem:
    """Load a problem file (JSON)"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as err:
        raise ProblemFormatError(f"cannot read problem file {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ProblemFormatError(f"{path}: invalid JSON ({err})") from err
    problem = problem_from_dict(doc)
    logger.debug(f"Loaded problem '{problem.name}' from {path}")
    return problem


def registry_names() -> List[str]:
    return sorted(p.stem for p in BUILTIN_DIR.glob("*.json"))


@lru_cache(maxsize=None)
def registry_get(name: str) -> ParametricProblem:
    """Return a built-in case study: example1, example2 or robinson"""
    path = BUILTIN_DIR / f"{name}.json"
    if not path.is_file():
        raise ProblemFormatError(f"unknown built-in problem '{name}' (available: {', '.join(registry_names())})")
    return load_problem(path)


def resolve_problem(source: str) -> ParametricProblem:
    """Registry name or path to a problem file"""
    if os.path.sep in source or source.endswith(".json") or os.path.isfile(source):
        return load_problem(source)
    return registry_get(source)
