"""Dual-solve checks: oracle equivalence, gradients, identities, guards."""

import math

import numpy as np
import pytest

from heatctrl import (
    ConfigurationError,
    ControlRegion,
    DualProblem,
    Potential,
    SolverConfig,
    SpatialGrid,
    TimeMesh,
    bochner_norm,
    conjugate_exponent,
    control_from_minimizer,
    evaluate_J,
    grad_J,
    gramian_oracle,
    minimize_J,
    solve_forward,
)

GRID = SpatialGrid(1.0, 20)
REGION = ControlRegion(0.3, 0.7)
MESH = TimeMesh(0.25, 40)
ZERO = Potential.zero()

# frozen from the dense-Gramian route (seed 5 datum, ridge 1e-4 * lam_max)
EXPECTED_LAM_MAX = 0.034684237504204116
EXPECTED_CONTROL_NORM = 0.025420808377374104


def _seeded_problem():
    rng = np.random.default_rng(5)
    y0 = rng.standard_normal(GRID.n)
    return DualProblem(GRID, REGION, ZERO, MESH, 2.0, y0=y0)


def _potential_problem(q, n=50, m=100, T=0.3):
    grid = SpatialGrid(1.0, n)
    mesh = TimeMesh(T, m)
    x = grid.nodes
    pot = Potential.separable(a1=2.0 * np.sin(2.0 * math.pi * x),
                              a2=lambda t: np.cos(t))
    y0 = np.sin(math.pi * x) + 0.4 * np.sin(2.0 * math.pi * x)
    y0 /= grid.norm(y0)
    return DualProblem(grid, ControlRegion(0.3, 0.7), pot, mesh, q, y0=y0)


def test_cg_matches_dense_gramian_oracle():
    pb = _seeded_problem()
    raw = gramian_oracle(pb, SolverConfig(epsilon=0.0))
    lam_max = float(np.linalg.eigvalsh(raw.gramian).max())
    assert abs(lam_max - EXPECTED_LAM_MAX) <= 1e-12
    assert raw.symmetry_residual <= 1e-12

    eps = 1e-4 * lam_max
    oracle = gramian_oracle(pb, SolverConfig(epsilon=eps))
    res = minimize_J(pb, SolverConfig(epsilon=eps, tol=1e-12))
    assert res.converged
    gap = np.linalg.norm(res.z_hat - oracle.z_hat) / np.linalg.norm(oracle.z_hat)
    assert gap <= 1e-10

    u = control_from_minimizer(res)
    measured = bochner_norm(u, GRID, MESH, 2.0)
    assert abs(measured - EXPECTED_CONTROL_NORM) / EXPECTED_CONTROL_NORM <= 1e-8


def test_gramian_oracle_guards():
    pb = _seeded_problem()
    with pytest.raises(ValueError):
        gramian_oracle(DualProblem(GRID, REGION, ZERO, MESH, 1.5, y0=pb.y0))
    big = SpatialGrid(1.0, 60)
    y_big = np.sin(math.pi * big.nodes)
    with pytest.raises(ValueError):
        gramian_oracle(DualProblem(big, REGION, ZERO, MESH, 2.0, y0=y_big))


def test_gradient_matches_central_difference():
    rng = np.random.default_rng(17)
    cfg = SolverConfig()
    for q in (1.5, 2.0, 3.0):
        pb = _potential_problem(q, n=20, m=40)
        for _ in range(5):
            z = rng.standard_normal(pb.grid.n)
            g = grad_J(pb, z, cfg)
            d = rng.standard_normal(pb.grid.n)
            d /= pb.grid.norm(d)
            eps = 1e-6 * max(1.0, pb.grid.norm(z))
            jp = evaluate_J(pb, z + eps * d, cfg)
            jm = evaluate_J(pb, z - eps * d, cfg)
            fd = (jp - jm) / (2.0 * eps)
            an = pb.grid.inner(g, d)
            assert abs(an - fd) <= 1e-5 * max(abs(an), abs(fd), 1e-12)


def test_value_and_norm_identities():
    tol = 1e-4
    for q in (1.5, 2.0, 3.0):
        pb = _potential_problem(q, n=30, m=60)
        res = minimize_J(pb, SolverConfig(tol=tol))
        assert res.converged
        # zero is never the minimizer for nonzero data
        assert res.value < 0.0
        u = control_from_minimizer(res)
        p = conjugate_exponent(q)
        measured = bochner_norm(u, pb.grid, pb.mesh, p)
        value_norm = math.sqrt(-2.0 * res.value)
        assert abs(value_norm - measured) / res.norm <= 10.0 * tol
        assert abs(res.value + 0.5 * res.norm**2) <= 10.0 * tol * res.norm**2


def test_nonvanishing_profile():
    pb = _potential_problem(1.5, n=30, m=60)
    res = minimize_J(pb, SolverConfig(tol=1e-4))
    assert res.converged
    u = control_from_minimizer(res)
    prof = np.linalg.norm(u.values, axis=1) * math.sqrt(pb.grid.h)
    cut = int(0.95 * pb.mesh.m)
    assert prof[: cut + 1].min() > 0.0


def test_reach_target_linear_term_equivalence():
    pb = _seeded_problem()
    free = solve_forward(GRID, REGION, ZERO, pb.y0, None, MESH)
    pb2 = DualProblem(GRID, REGION, ZERO, MESH, 2.0, kind="reach-target",
                      y_target=-free.final_state)
    assert np.allclose(pb.linear_vector(), pb2.linear_vector(), rtol=0, atol=1e-14)
    rng = np.random.default_rng(29)
    cfg = SolverConfig()
    for _ in range(3):
        z = rng.standard_normal(GRID.n)
        assert abs(evaluate_J(pb, z, cfg) - evaluate_J(pb2, z, cfg)) <= 1e-12


def test_q1_continuation_converges_and_reports_smoothing():
    grid = SpatialGrid(1.0, 30)
    mesh = TimeMesh(0.2, 60)
    y0 = np.sin(math.pi * grid.nodes)
    y0 /= grid.norm(y0)
    pb = DualProblem(grid, ControlRegion(0.0, 1.0), ZERO, mesh, 1.0, y0=y0)
    res = minimize_J(pb, SolverConfig(tol=1e-4))
    assert res.converged
    assert res.delta > 0.0
    assert res.epsilon > 0.0
    assert res.norm > 0.0


def test_conjugate_exponent():
    assert conjugate_exponent(2.0) == 2.0
    assert conjugate_exponent(math.inf) == 1.0
    assert abs(conjugate_exponent(1.5) - 3.0) <= 1e-15
    assert abs(conjugate_exponent(4.0) - 4.0 / 3.0) <= 1e-15
    with pytest.raises(ValueError):
        conjugate_exponent(1.0)
    with pytest.raises(ValueError):
        conjugate_exponent(0.5)


def test_solver_config_validation():
    with pytest.raises(ConfigurationError):
        SolverConfig(tol=0.0)
    with pytest.raises(ConfigurationError):
        SolverConfig(tol=-1e-4)
    with pytest.raises(ConfigurationError):
        SolverConfig(epsilon=-1.0)
    with pytest.raises(ConfigurationError):
        SolverConfig(starts=0)
    with pytest.raises(ConfigurationError):
        SolverConfig(max_iter=0)


def test_delta_validation():
    pb = _potential_problem(1.5, n=20, m=40)
    with pytest.raises(ConfigurationError):
        minimize_J(pb, SolverConfig(delta=0.0))
    with pytest.raises(ConfigurationError):
        minimize_J(pb, SolverConfig(delta=-1.0))


def test_control_from_minimizer_refuses_unconverged():
    pb = _potential_problem(3.0, n=30, m=60)
    res = minimize_J(pb, SolverConfig(tol=1e-12, max_iter=2))
    assert not res.converged
    with pytest.raises(ValueError):
        control_from_minimizer(res)
