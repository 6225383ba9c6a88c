"""Observability ascent checks: oracle, gradient, monotonicity, bound fit."""

import math

import numpy as np
import pytest

from heatctrl import (
    AscentConfig,
    BetaEstimate,
    ControlRegion,
    Potential,
    SpatialGrid,
    beta_bound_fit,
    beta_curve,
    beta_estimate,
    lowest_mode,
    single_mode_ratio,
)
from heatctrl.observability import _RatioOps

GRID = SpatialGrid(1.0, 50)
REGION = ControlRegion(0.3, 0.7)
FULL = ControlRegion(0.0, 1.0)
ZERO = Potential.zero()

# frozen from the closed-form single-mode route at t=0.1, T=0.2, m=100, n=50
EXPECTED_SINGLE_MODE = 5.864823805372629


def test_single_mode_oracle_matches_ascent_free_evaluation():
    oracle = single_mode_ratio(GRID, 0.1, 0.2, 100)
    assert abs(oracle - EXPECTED_SINGLE_MODE) <= 1e-12 * EXPECTED_SINGLE_MODE
    ops = _RatioOps(GRID, FULL, ZERO, 0.1, 0.2, 100)
    _, v1 = lowest_mode(GRID)
    measured = ops.ratio(v1)
    assert abs(measured - oracle) / oracle <= 1e-10
    # the discrete ratio tracks the continuum closed form lam/(e^{lam g}-1)
    lam = math.pi**2
    continuum = lam / (math.exp(lam * 0.1) - 1.0)
    assert abs(oracle - continuum) / continuum <= 5e-3


def test_ratio_degree_zero_homogeneity():
    ops = _RatioOps(GRID, REGION, ZERO, 0.05, 0.2, 40)
    rng = np.random.default_rng(3)
    for _ in range(5):
        z = rng.standard_normal(GRID.n)
        r = ops.ratio(z)
        for c in (0.1, -7.0):
            assert abs(ops.ratio(c * z) - r) <= 1e-12 * abs(r)


def test_gradient_matches_central_difference():
    ops = _RatioOps(GRID, REGION, ZERO, 0.05, 0.2, 40)
    rng = np.random.default_rng(5)
    for _ in range(3):
        z = rng.standard_normal(GRID.n)
        z /= GRID.norm(z)
        grad, val = ops.gradient(z)
        d = rng.standard_normal(GRID.n)
        d /= GRID.norm(d)
        eps = 1e-7
        fp = ops.ratio(z + eps * d)
        fm = ops.ratio(z - eps * d)
        fd = (fp - fm) / (2.0 * eps)
        an = float(np.dot(grad, d))
        assert abs(an - fd) <= 1e-6 * max(abs(an), abs(fd))
        assert abs(val - ops.ratio(z)) <= 1e-14 * abs(val)


def test_estimate_dominates_single_mode_start():
    cfg = AscentConfig(trials=3, max_iter=100, seed=0)
    est = beta_estimate(GRID, FULL, ZERO, 0.05, 0.15, 30, cfg)
    assert est.value >= est.single_mode_lower_bound - 1e-9
    assert est.value > 0.0


def test_beta_curve_monotone_in_horizon():
    cfg = AscentConfig(trials=3, max_iter=150, seed=0)
    ests = beta_curve(GRID, REGION, ZERO, 0.05, [0.15, 0.25, 0.45], 0.005, cfg)
    assert [e.T for e in ests] == [0.15, 0.25, 0.45]
    slack = 1.0 + 2.0 * cfg.tol
    for a, b in zip(ests, ests[1:]):
        assert b.value <= a.value * slack


def test_beta_bound_fit_holds_by_construction():
    samples = [
        BetaEstimate(t=0.05, T=0.15, value=100.0, maximizer=None, trials=1,
                     single_mode_lower_bound=1.0, iterations=1, tol=1e-8),
        BetaEstimate(t=0.05, T=0.25, value=10.0, maximizer=None, trials=1,
                     single_mode_lower_bound=1.0, iterations=1, tol=1e-8),
        BetaEstimate(t=0.05, T=0.45, value=1.0, maximizer=None, trials=1,
                     single_mode_lower_bound=0.1, iterations=1, tol=1e-8),
        BetaEstimate(t=0.05, T=1.05, value=0.01, maximizer=None, trials=1,
                     single_mode_lower_bound=0.001, iterations=1, tol=1e-8),
    ]
    fit = beta_bound_fit(samples)
    assert fit.C0 > 0.0
    for gap, beta in zip(fit.gaps, fit.betas):
        assert beta <= math.exp(fit.C0 * (1.0 + 1.0 / gap)) * (1.0 + 1e-9)
    assert fit.max_residual >= 0.0
    assert all(r >= -1e-12 for r in fit.residuals)
    # at least one sample is tight (it defines the max)
    assert min(fit.residuals) <= 1e-12


def test_beta_bound_fit_validation():
    good = BetaEstimate(t=0.0, T=0.1, value=5.0, maximizer=None, trials=1,
                        single_mode_lower_bound=1.0, iterations=1, tol=1e-8)
    with pytest.raises(ValueError):
        beta_bound_fit([good] * 3)  # too few distinct samples
    bad = BetaEstimate(t=0.0, T=0.1, value=-1.0, maximizer=None, trials=1,
                       single_mode_lower_bound=0.0, iterations=1, tol=1e-8)
    others = [
        BetaEstimate(t=0.0, T=0.1 + k * 0.1, value=5.0, maximizer=None, trials=1,
                     single_mode_lower_bound=1.0, iterations=1, tol=1e-8)
        for k in range(1, 4)
    ]
    with pytest.raises(ValueError):
        beta_bound_fit([bad] + others)


def test_ratio_ops_validation():
    with pytest.raises(ValueError):
        _RatioOps(GRID, REGION, ZERO, 0.0501, 0.2, 40)  # t off the node lattice
    with pytest.raises(ValueError):
        _RatioOps(GRID, REGION, ZERO, 0.2, 0.2, 40)  # empty observation window
    with pytest.raises(ValueError):
        beta_curve(GRID, REGION, ZERO, 0.05, [0.25, 0.15], 0.005)  # not increasing
    with pytest.raises(ValueError):
        beta_curve(GRID, REGION, ZERO, 0.05, [0.15, 0.2501], 0.005)  # off-lattice


def test_unstable_potential_raises_beta():
    # a constant negative potential amplifies every adjoint mode by the same
    # factor, so the certified lower bound at the same start set can only go up
    cfg = AscentConfig(trials=3, max_iter=150, seed=0)
    base = beta_estimate(GRID, REGION, ZERO, 0.05, 0.25, 40, cfg)
    shifted = beta_estimate(GRID, REGION, Potential.separable(a1=-5.0),
                            0.05, 0.25, 40, cfg,
                            extra_starts=[base.maximizer])
    assert shifted.value >= base.value * (1.0 - 1e-3)
