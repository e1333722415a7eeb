"""
Exception types raised by lipsol.

Everything derives from LipsolError, itself a ValueError, so callers that only
care about "bad input or violated assumption" can catch a single type.
"""

from typing import Optional


class LipsolError(ValueError):
    """Base class for all lipsol errors"""


# Expression language

class ExpressionError(LipsolError):
    """Raised for any problem with an expression string"""


class ExpressionSyntaxError(ExpressionError):
    def __init__(self, message: str, offset: int, source: str = ""):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset
        self.source = source


class UnknownIdentifierError(ExpressionSyntaxError):
    pass


class ArityError(ExpressionSyntaxError):
    pass


class EvaluationDomainError(ExpressionError):
    pass


class MissingVariableError(ExpressionError):
    pass


# Problem model

class ProblemFormatError(LipsolError):
    pass


class DomainError(LipsolError):
    pass


class DegenerateRowError(LipsolError):
    def __init__(self, row: int, norm: float):
        super().__init__(f"constraint {row + 1} has a zero-norm row (|a_i(x)| = {norm:.3e})")
        self.row = row
        self.norm = norm


class AssumptionViolationError(LipsolError):
    """A modelling assumption (unit rows, feasible pi_f, ...) does not hold"""

    def __init__(self, message: str, constraint: Optional[int] = None):
        if constraint is not None:
            message = f"{message} (constraint {constraint + 1})"
        super().__init__(message)
        self.constraint = constraint


# Geometry

class GeometryError(LipsolError):
    pass


class UnboundedSetError(GeometryError):
    pass


class EmptyInteriorError(GeometryError):
    pass


class ConvergenceError(GeometryError):
    def __init__(self, message: str, iterations: int):
        super().__init__(message)
        self.iterations = iterations


# Solvers

class SolverError(LipsolError):
    pass


class EnumerationGuardError(SolverError):
    pass


# Analysis and simulation

class AnalysisError(LipsolError):
    pass


class SimulationError(LipsolError):
    pass


# CLI

class UsageError(LipsolError):
    pass
