#!/usr/bin/env python3
"""
Tests for the solution maps: SOCP closed form, QCQP by Dykstra, the exact QP
oracle and the KKT checks.
"""

import numpy as np
import pytest

from conftest import polytope
from lipsol import solvers
from lipsol.errors import AssumptionViolationError, SolverError
from lipsol.problem import instantiate, registry_get


def test_canonical_method():
    assert solvers.canonical_method("qp") == "qp_oracle"
    assert solvers.canonical_method("oracle") == "qp_oracle"
    assert solvers.canonical_method("socp") == "socp"
    with pytest.raises(SolverError):
        solvers.canonical_method("lp")


def test_socp_returns_pi_des_inside_the_ball(unit_box):
    instance = polytope(unit_box.A, unit_box.b, pi_des=[0.3, -0.2], pi_f=[0.0, 0.0])
    result = solvers.solve_socp(instance)
    np.testing.assert_allclose(result.u, [0.3, -0.2])
    assert result.radius == pytest.approx(1.0)
    assert result.ok


def test_socp_at_example2_origin():
    result = solvers.solve_socp(instantiate(registry_get("example2"), [0.0, 0.0]))
    np.testing.assert_allclose(result.u, [1.0, 0.0], atol=1e-15)
    assert result.radius == pytest.approx(1.0)
    assert result.feasibility_residual <= 1e-9


def test_socp_with_zero_radius_returns_pi_f():
    instance = instantiate(registry_get("example1"), [0.0])
    result = solvers.solve_socp(instance)
    assert result.radius == 0.0
    np.testing.assert_allclose(result.u, instance.pi_f)


def test_radius_rejects_infeasible_pi_f(unit_box):
    bad = polytope(unit_box.A, unit_box.b, pi_f=[1.5, 0.0])
    with pytest.raises(AssumptionViolationError) as info:
        solvers.radius(bad)
    assert info.value.constraint == 0
    slightly_outside = polytope(unit_box.A, unit_box.b, pi_f=[1.0 + 1e-10, 0.0])
    assert solvers.radius(slightly_outside) == 0.0


def test_qcqp_balls_contain_pi_f(unit_box):
    centers, radii = solvers.qcqp_balls(unit_box, 2.0)
    np.testing.assert_allclose(centers[0], [-2.0, 0.0])
    np.testing.assert_allclose(radii, np.sqrt(4.0 + 4.0))
    assert np.all(np.linalg.norm(unit_box.pi_f - centers, axis=1) <= radii)
    with pytest.raises(SolverError):
        solvers.qcqp_balls(unit_box, 0.0)


def test_qcqp_feasible_and_stationary():
    problem = registry_get("example2")
    rng = np.random.default_rng(5)
    for x in rng.uniform(-2.0, 2.0, size=(25, 2)):
        instance = instantiate(problem, x)
        for k in (0.1, 1.0, 10.0):
            result = solvers.solve_qcqp(instance, k=k, tol=1e-12)
            assert result.feasibility_residual <= 1e-9
            centers, radii = solvers.qcqp_balls(instance, k)
            assert np.all(np.linalg.norm(result.u - centers, axis=1) <= radii + 1e-9)
            if result.status == "ok":
                assert solvers.ball_kkt_residual(instance, result.u, k) <= 1e-8


def test_qcqp_returns_pi_des_when_inside(unit_box):
    instance = polytope(unit_box.A, unit_box.b, pi_des=[0.5, 0.5], pi_f=[0.0, 0.0])
    result = solvers.solve_qcqp(instance)
    np.testing.assert_allclose(result.u, [0.5, 0.5])
    assert result.iterations == 0
    assert result.ok


def test_qcqp_iteration_cap_keeps_feasibility():
    instance = instantiate(registry_get("example2"), [-1.5, 0.5])
    result = solvers.solve_qcqp(instance, k=1.0, tol=1e-14, max_iter=2, polish=False)
    assert result.status == "iteration_cap"
    assert result.iterations == 2
    centers, radii = solvers.qcqp_balls(instance, 1.0)
    assert np.all(np.linalg.norm(result.u - centers, axis=1) <= radii + 1e-12)


def test_qp_oracle_on_example1():
    problem = registry_get("example1")
    result = solvers.solve_qp_oracle(instantiate(problem, [0.0]))
    np.testing.assert_allclose(result.u, [1.0, 0.0], atol=1e-12)
    assert result.active_set == (0, 1)
    assert result.to_dict()["active_set"] == [1, 2]

    result = solvers.solve_qp_oracle(instantiate(problem, [0.2]))
    np.testing.assert_allclose(result.u, [1.0, 1.0], atol=1e-12)


def test_qp_oracle_reports_infeasible_set():
    instance = polytope([[1.0, 0.0], [-1.0, 0.0]], [-1.0, -1.0], pi_f=[0.0, 0.0])
    result = solvers.solve_qp_oracle(instance)
    assert result.status == "infeasible"
    assert np.all(np.isnan(result.u))
    assert not result.ok


def test_solutions_satisfy_kkt():
    problem = registry_get("robinson")
    rng = np.random.default_rng(2)
    for x in rng.uniform(-2.0, 2.0, size=(10, 2)):
        instance = instantiate(problem, x)
        qp = solvers.solve_qp_oracle(instance)
        assert solvers.verify_kkt(instance, qp.u)
        socp = solvers.solve_socp(instance)
        assert socp.feasibility_residual <= 1e-9
        # every reformulated set lies inside K(x)
        assert np.linalg.norm(socp.u - instance.pi_des) >= np.linalg.norm(qp.u - instance.pi_des) - 1e-9


def test_verify_kkt_rejects_non_optimal_points(unit_box):
    instance = polytope(unit_box.A, unit_box.b, pi_des=[2.0, 0.0], pi_f=[0.0, 0.0])
    assert solvers.verify_kkt(instance, [1.0, 0.0])
    assert not solvers.verify_kkt(instance, [1.0, 0.5])
    assert not solvers.verify_kkt(instance, [0.0, 0.0])
    assert not solvers.verify_kkt(instance, [2.0, 0.0])


def test_socp_matches_polyhedral_outer_approximation():
    instance = instantiate(registry_get("example2"), [0.7, 0.4])
    closed = solvers.solve_socp(instance)
    polyhedral = solvers.solve_socp_polyhedral(instance, facets=64)
    np.testing.assert_allclose(polyhedral.u, closed.u, atol=1e-6)


def test_solve_dispatch(triangle):
    settings = solvers.SolverSettings(k=0.5)
    for tag, method in [("socp", "socp"), ("qcqp", "qcqp"), ("qp", "qp_oracle"), ("socp_polyhedral", "socp_polyhedral")]:
        result = solvers.solve(triangle, tag, settings)
        assert result.method == method
        assert result.feasibility_residual <= 1e-9
    with pytest.raises(SolverError):
        solvers.SolverSettings(k=-1.0)


def test_result_to_dict():
    result = solvers.solve_socp(instantiate(registry_get("example2"), [0.0, 0.0]))
    doc = result.to_dict()
    assert doc["method"] == "socp"
    assert doc["u"] == [1.0, 0.0]
    assert doc["radius"] == 1.0
    assert doc["status"] == "ok"
    assert doc["active_set"] is None


def test_qcqp_converges_on_nearly_coincident_balls():
    problem = registry_get("example2")
    for x in ([0.005, 0.0], [0.01, 0.0], [0.02, 0.0]):
        instance = instantiate(problem, x)
        result = solvers.solve_qcqp(instance, k=1.0)
        assert result.status == "ok"
        assert solvers.ball_kkt_residual(instance, result.u, 1.0) <= 1e-9
        centers, radii = solvers.qcqp_balls(instance, 1.0)
        assert np.all(np.linalg.norm(result.u - centers, axis=1) <= radii + 1e-12)


def test_socp_is_optimal_within_its_ball():
    instance = instantiate(registry_get("robinson"), [0.4, -0.3])
    result = solvers.solve_socp(instance)
    best = np.linalg.norm(result.u - instance.pi_des)
    rng = np.random.default_rng(11)
    for _ in range(100):
        w = rng.standard_normal(instance.m)
        w *= result.radius * rng.uniform() ** (1.0 / instance.m) / np.linalg.norm(w)
        candidate = instance.pi_f + w
        assert best <= np.linalg.norm(candidate - instance.pi_des) + 1e-12


def _example2_qp(x1, x2):
    if x2 <= 0.0:
        return [1.0, 0.0]
    if x2 < x1 ** 2:
        return [1.0, x2 / x1]
    scale = (1.0 + x2) / (1.0 + x1 ** 2)
    return [scale, scale * x1]


def test_qp_oracle_matches_example2_closed_form():
    problem = registry_get("example2")
    rng = np.random.default_rng(3)
    points = list(rng.uniform(-2.0, 2.0, size=(200, 2))) + [[0.5, 0.1], [-0.5, 0.1], [0.0, 0.3], [1.0, 1.0]]
    for x1, x2 in points:
        result = solvers.solve_qp_oracle(instantiate(problem, [x1, x2]))
        np.testing.assert_allclose(result.u, _example2_qp(x1, x2), atol=1e-8)


def test_qcqp_on_tangent_balls_returns_the_touching_point():
    instance = instantiate(registry_get("example1"), [0.0])
    centers, radii = solvers.qcqp_balls(instance, 1.0)
    np.testing.assert_allclose(np.linalg.norm(centers[0] - centers[1]), radii.sum())
    result = solvers.solve_qcqp(instance, k=1.0)
    assert result.ok
    assert result.iterations == 0
    np.testing.assert_allclose(result.u, [1.0, 1.0], atol=1e-12)
