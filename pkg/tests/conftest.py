"""
Shared test setup: make src/ importable and provide small polytope fixtures.
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "src"))

from lipsol.problem import ProblemInstance  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-domain grids and golden commands that take minutes")


def polytope(A, b, pi_des=None, pi_f=None):
    """ProblemInstance for a fixed polytope with unit rows"""
    A = np.asarray(A, dtype=float)
    norms = np.linalg.norm(A, axis=1)
    A = A / norms[:, None]
    b = np.asarray(b, dtype=float) / norms
    m = A.shape[1]
    return ProblemInstance(
        x=np.zeros(1),
        A=A,
        b=b,
        pi_des=np.zeros(m) if pi_des is None else np.asarray(pi_des, dtype=float),
        pi_f=None if pi_f is None else np.asarray(pi_f, dtype=float),
        raw_row_norms=norms,
    )


def box(half_widths, center=None):
    half_widths = np.asarray(half_widths, dtype=float)
    m = half_widths.size
    center = np.zeros(m) if center is None else np.asarray(center, dtype=float)
    eye = np.eye(m)
    A = np.vstack([eye, -eye])
    b = np.concatenate([center + half_widths, half_widths - center])
    return polytope(A, b, pi_f=center)


@pytest.fixture
def unit_box():
    return box([1.0, 1.0])


@pytest.fixture
def triangle():
    return polytope([[-1, 0], [0, -1], [1, 1]], [0, 0, 1], pi_f=[0.25, 0.25])
