#!/usr/bin/env python3
"""
Tests for problem models: instantiation, row normalization, assumption checks
and the problem file format.
"""

import json

import numpy as np
import pytest

from lipsol.errors import (
    AssumptionViolationError,
    DegenerateRowError,
    DomainError,
    ProblemFormatError,
)
from lipsol.problem import (
    Box,
    feasibility_residual,
    instantiate,
    load_problem,
    problem_from_dict,
    problem_to_dict,
    registry_get,
    registry_names,
    resolve_problem,
)


def _doc(**overrides):
    doc = {
        "name": "strip",
        "n": 1,
        "m": 2,
        "p": 2,
        "domain": {"lower": [-1.0], "upper": [1.0]},
        "A": [["1", "0"], ["0", "2"]],
        "b": ["1", "2 + x1"],
        "pi_des": ["x1", "3"],
        "pi_f": ["0", "0"],
    }
    doc.update(overrides)
    return doc


def test_registry_lists_builtins():
    assert registry_names() == ["example1", "example2", "robinson"]
    robinson = registry_get("robinson")
    assert (robinson.n, robinson.m, robinson.p) == (2, 4, 12)
    assert robinson.constants is not None
    with pytest.raises(ProblemFormatError):
        registry_get("example3")


def test_instantiate_normalizes_rows():
    problem = problem_from_dict(_doc())
    instance = instantiate(problem, [0.5])
    np.testing.assert_allclose(np.linalg.norm(instance.A, axis=1), 1.0)
    np.testing.assert_allclose(instance.b, [1.0, 1.25])
    np.testing.assert_allclose(instance.raw_row_norms, [1.0, 2.0])
    np.testing.assert_allclose(instance.pi_des, [0.5, 3.0])
    np.testing.assert_allclose(instance.pi_f, [0.0, 0.0])


def test_normalization_is_idempotent():
    for name, x in [("example1", [0.7]), ("example2", [1.5, -0.4]), ("robinson", [-0.3, 1.1])]:
        problem = registry_get(name)
        first = instantiate(problem, x)
        frozen = problem_from_dict({
            "name": f"{name}_normalized",
            "n": problem.n,
            "m": problem.m,
            "p": problem.p,
            "domain": {"lower": list(problem.domain.lower), "upper": list(problem.domain.upper)},
            "A": first.A.tolist(),
            "b": first.b.tolist(),
            "pi_des": first.pi_des.tolist(),
            "pi_f": first.pi_f.tolist(),
        })
        second = instantiate(frozen, x)
        np.testing.assert_allclose(second.A, first.A, rtol=0, atol=1e-15)
        np.testing.assert_allclose(second.b, first.b, rtol=0, atol=1e-15)
        np.testing.assert_allclose(second.raw_row_norms, 1.0, rtol=0, atol=1e-15)


def test_instantiate_example1_at_origin():
    instance = instantiate(registry_get("example1"), [0.0])
    np.testing.assert_allclose(instance.A, [[1.0, 0.0], [-1.0, 0.0]])
    np.testing.assert_allclose(instance.b, [1.0, -1.0])
    np.testing.assert_allclose(instance.pi_f, [1.0, 1.0])
    np.testing.assert_allclose(instance.slacks(instance.pi_f), [0.0, 0.0], atol=1e-15)


def test_instantiate_rejects_points_outside_domain():
    problem = registry_get("example2")
    with pytest.raises(DomainError):
        instantiate(problem, [2.5, 0.0])
    with pytest.raises(DomainError):
        instantiate(problem, [0.0])
    instance = instantiate(problem, [2.5, 0.0], check_domain=False)
    assert instance.x.tolist() == [2.5, 0.0]


def test_degenerate_row_is_reported():
    problem = problem_from_dict(_doc(A=[["1", "0"], ["x1", "0"]], b=["1", "1"]))
    with pytest.raises(DegenerateRowError) as info:
        instantiate(problem, [0.0])
    assert info.value.row == 1
    assert "constraint 2" in str(info.value)
    instantiate(problem, [0.5])


def test_infeasible_pi_f_names_the_constraint():
    problem = problem_from_dict(_doc(pi_f=["0", "1.5"]))
    with pytest.raises(AssumptionViolationError) as info:
        instantiate(problem, [-1.0])
    assert info.value.constraint == 1
    assert "constraint 2" in str(info.value)


def test_provider_overrides_pi_f_expressions():
    problem = problem_from_dict(_doc(pi_f=None))
    with pytest.raises(ProblemFormatError):
        instantiate(problem, [0.0])
    instance = instantiate(problem, [0.0], provider=lambda inst: np.array([-1.0, -1.0]))
    np.testing.assert_allclose(instance.pi_f, [-1.0, -1.0])


def test_feasibility_residual():
    instance = instantiate(problem_from_dict(_doc()), [0.0])
    assert feasibility_residual(instance, [0.0, 0.0]) == pytest.approx(-1.0)
    assert feasibility_residual(instance, [2.0, 0.0]) == pytest.approx(1.0)


def test_box():
    box = Box((-1.0, 0.0), (1.0, 2.0))
    assert box.dim == 2
    np.testing.assert_allclose(box.center, [0.0, 1.0])
    assert box.contains([1.0, 2.0])
    assert not box.contains([1.1, 2.0])
    with pytest.raises(ProblemFormatError):
        Box((1.0,), (0.0,))


def test_problem_document_errors():
    with pytest.raises(ProblemFormatError, match="missing fields: b"):
        problem_from_dict({k: v for k, v in _doc().items() if k != "b"})
    with pytest.raises(ProblemFormatError, match=r"A\[2\]\[1\]"):
        problem_from_dict(_doc(A=[["1", "0"], ["1 +", "1"]]))
    with pytest.raises(ProblemFormatError, match="input variable"):
        problem_from_dict(_doc(b=["u1", "1"]))
    with pytest.raises(ProblemFormatError, match="x2"):
        problem_from_dict(_doc(b=["x2", "1"]))
    with pytest.raises(ProblemFormatError):
        problem_from_dict(_doc(p=3))
    with pytest.raises(ProblemFormatError):
        problem_from_dict(_doc(domain={"lower": [-1.0, 0.0], "upper": [1.0, 1.0]}))


def test_numeric_entries_are_constants():
    problem = problem_from_dict(_doc(A=[[1, 0], [0, 2.0]]))
    instance = instantiate(problem, [0.0])
    np.testing.assert_allclose(instance.A, [[1.0, 0.0], [0.0, 1.0]])


def test_problem_file_round_trip(tmp_path):
    original = registry_get("example1")
    path = tmp_path / "example1_copy.json"
    path.write_text(json.dumps(problem_to_dict(original)), encoding="utf-8")
    loaded = load_problem(path)
    assert loaded == original
    assert resolve_problem(str(path)) == original
    assert resolve_problem("example1") is original

    for x in np.linspace(-2.0, 2.0, 9):
        a, b = instantiate(original, [x]), instantiate(loaded, [x])
        assert np.array_equal(a.A, b.A) and np.array_equal(a.b, b.b) and np.array_equal(a.pi_f, b.pi_f)


def test_load_problem_errors(tmp_path):
    with pytest.raises(ProblemFormatError):
        load_problem(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(ProblemFormatError, match="invalid JSON"):
        load_problem(broken)


def test_builtin_pi_f_is_feasible_over_the_domain():
    for name in registry_names():
        problem = registry_get(name)
        axes = [np.linspace(lo, hi, 9) for lo, hi in zip(problem.domain.lower, problem.domain.upper)]
        for x in np.array(np.meshgrid(*axes)).reshape(problem.n, -1).T:
            instance = instantiate(problem, x)
            assert instance.slacks(instance.pi_f).min() >= -1e-12
