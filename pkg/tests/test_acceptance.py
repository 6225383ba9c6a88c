"""End-to-end acceptance gates.

One test per contract criterion, each printing a single pass/fail line with
the measured quantity and its tolerance.  Run with -s to see the lines as
they complete; every gate also asserts, so a red line fails the suite.
"""

import math

import numpy as np

from heatctrl import (
    AscentConfig,
    ControlRegion,
    DualProblem,
    Potential,
    SolverConfig,
    SpatialGrid,
    TimeMesh,
    TimeOptimalQuery,
    XiElement,
    bangbang_check,
    beta_bound_fit,
    beta_curve,
    beta_estimate,
    blowup_probe,
    bochner_norm,
    conjugate_exponent,
    control_from_minimizer,
    duality_residual,
    evaluate_J,
    gauge_transform,
    grad_J,
    gramian_oracle,
    lowest_mode,
    minimize_J,
    norm_curve,
    norm_value,
    roundtrip,
    shift_density_check,
    single_mode_ratio,
    solve_adjoint,
    time_optimal_solve,
)

ZERO = Potential.zero()


def _gate(tag, ok, detail):
    print(f"[{tag}] {detail} -> {'PASS' if ok else 'FAIL'}")
    assert ok, f"{tag}: {detail}"


def _mixed_mode(grid):
    x = grid.nodes
    y0 = np.sin(math.pi * x) + 0.4 * np.sin(2.0 * math.pi * x)
    return y0 / grid.norm(y0)


def _first_mode(grid):
    y0 = np.sin(math.pi * grid.nodes)
    return y0 / grid.norm(y0)


def _bump_potential(grid):
    x = grid.nodes
    return Potential.separable(a1=2.0 * np.sin(2.0 * math.pi * x),
                               a2=lambda t: np.cos(t))


def test_01_discrete_duality():
    grid = SpatialGrid(1.0, 50)
    region = ControlRegion(0.3, 0.7)
    mesh = TimeMesh(0.2, 100)
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(20):
        v = rng.standard_normal((mesh.m + 1, grid.n))
        z = rng.standard_normal(grid.n)
        worst = max(worst, duality_residual(grid, region, ZERO, v, z, mesh))
    _gate("AC01 duality", worst <= 1e-12,
          f"20 random pairs, max relative residual {worst:.3e} (tol 1e-12)")


def test_02_closed_form_norm():
    grid = SpatialGrid(1.0, 200)
    T = 0.1
    res = norm_value(grid, ControlRegion(0.0, 1.0), ZERO, _first_mode(grid),
                     T, 2.0, SolverConfig(tol=1e-8), m=400)
    lam = math.pi**2
    expected = math.exp(-lam * T) * math.sqrt(2.0 * lam / (1.0 - math.exp(-2.0 * lam * T)))
    err = abs(res.value - expected) / expected
    _gate("AC02 closed form", res.converged and err <= 1e-3,
          f"N_2 = {res.value:.6f} vs {expected:.6f}, relative error {err:.3e} (tol 1e-3)")


def test_03_gramian_equivalence():
    grid = SpatialGrid(1.0, 20)
    region = ControlRegion(0.3, 0.7)
    mesh = TimeMesh(0.25, 40)
    rng = np.random.default_rng(5)
    y0 = rng.standard_normal(grid.n)
    pb = DualProblem(grid, region, ZERO, mesh, 2.0, y0=y0)
    raw = gramian_oracle(pb, SolverConfig(epsilon=0.0))
    eps = 1e-4 * float(np.linalg.eigvalsh(raw.gramian).max())
    oracle = gramian_oracle(pb, SolverConfig(epsilon=eps))
    res = minimize_J(pb, SolverConfig(epsilon=eps, tol=1e-12))
    gap = np.linalg.norm(res.z_hat - oracle.z_hat) / np.linalg.norm(oracle.z_hat)
    _gate("AC03 gramian", res.converged and gap <= 1e-10,
          f"dense vs iterative minimizer gap {gap:.3e} (tol 1e-10)")


def test_04_value_norm_identity():
    grid = SpatialGrid(1.0, 50)
    region = ControlRegion(0.3, 0.7)
    mesh = TimeMesh(0.3, 100)
    pot = _bump_potential(grid)
    y0 = _mixed_mode(grid)
    tol = 1e-4
    worst = 0.0
    for q in (1.5, 2.0, 3.0):
        pb = DualProblem(grid, region, pot, mesh, q, y0=y0)
        res = minimize_J(pb, SolverConfig(tol=tol))
        assert res.converged
        u = control_from_minimizer(res)
        measured = bochner_norm(u, grid, mesh, conjugate_exponent(q))
        worst = max(worst, abs(math.sqrt(-2.0 * res.value) - measured) / res.norm)
    _gate("AC04 value identity", worst <= 10.0 * tol,
          f"q in (1.5, 2, 3), worst |sqrt(-2V) - ||u||_p| / N = {worst:.3e} (tol {10*tol:.0e})")


def test_05_gradient_correctness():
    grid = SpatialGrid(1.0, 20)
    region = ControlRegion(0.3, 0.7)
    mesh = TimeMesh(0.3, 40)
    pot = _bump_potential(grid)
    y0 = _mixed_mode(grid)
    rng = np.random.default_rng(17)
    cfg = SolverConfig()
    worst = 0.0
    for q in (1.5, 2.0, 3.0):
        pb = DualProblem(grid, region, pot, mesh, q, y0=y0)
        for _ in range(5):
            z = rng.standard_normal(grid.n)
            d = rng.standard_normal(grid.n)
            d /= grid.norm(d)
            g = grad_J(pb, z, cfg)
            eps = 1e-6 * max(1.0, grid.norm(z))
            fd = (evaluate_J(pb, z + eps * d, cfg) - evaluate_J(pb, z - eps * d, cfg)) / (2 * eps)
            an = grid.inner(g, d)
            worst = max(worst, abs(an - fd) / max(abs(an), abs(fd), 1e-12))
    _gate("AC05 gradient", worst <= 1e-5,
          f"q in (1.5, 2, 3), 5 directions each, worst relative error {worst:.3e} (tol 1e-5)")


def test_06_norm_curve_monotone_and_blowup():
    grid = SpatialGrid(1.0, 50)
    full = ControlRegion(0.0, 1.0)
    y0 = _first_mode(grid)
    horizons = [0.05, 0.08, 0.13, 0.21, 0.35, 0.6, 1.0, 1.6]
    curve = norm_curve(grid, full, ZERO, y0, 2.0, horizons,
                       SolverConfig(tol=1e-8), m=100)
    decreasing = curve.all_converged and curve.is_strictly_decreasing()
    probe = blowup_probe(grid, full, ZERO, y0, 2.0, T_start=0.05,
                         config=SolverConfig(tol=1e-8), m=100, halvings=2)
    values = [N for _, N in probe]
    increasing = all(b > a for a, b in zip(values, values[1:]))
    _gate("AC06 monotone curve", decreasing and increasing,
          f"8 horizons strictly decreasing: {decreasing}; "
          f"N grows under halving {['%.3f' % v for v in values]}: {increasing}")


def test_07_bisection_round_trip():
    grid = SpatialGrid(1.0, 50)
    region = ControlRegion(0.3, 0.7)
    y0 = _mixed_mode(grid)
    T_star = 0.2
    target = norm_value(grid, region, ZERO, y0, T_star, 2.0, SolverConfig(), m=100)
    assert target.converged
    query = TimeOptimalQuery(M=target.value, p=2.0, bracket=(0.05, 1.0), tol=1e-4)
    res = time_optimal_solve(grid, region, ZERO, y0, query, SolverConfig(), m=100)
    t_err = abs(res.T_star - T_star) / T_star
    n_err = abs(res.norm_at_T_star - query.M) / query.M
    _gate("AC07 round trip", res.converged and t_err <= 1e-3 and n_err <= 1e-4,
          f"T_star err {t_err:.3e} (tol 1e-3), norm err {n_err:.3e} (tol 1e-4)")


def test_08_bangbang_diagnostics():
    grid = SpatialGrid(1.0, 50)
    region = ControlRegion(0.3, 0.7)
    pot = _bump_potential(grid)
    y0 = _mixed_mode(grid)
    lines = []
    ok = True
    for p in (2.0, 4.0, math.inf):
        target = norm_value(grid, region, pot, y0, 0.2, p, SolverConfig(), m=100)
        assert target.converged
        query = TimeOptimalQuery(M=target.value, p=p, bracket=(0.05, 1.0))
        res = time_optimal_solve(grid, region, pot, y0, query, SolverConfig(), m=100)
        assert res.converged
        rep = bangbang_check(res.control, p, query.M, res.T_star, grid, pot)
        if p == math.inf:
            good = rep.verdict and rep.flatness_residual <= 5e-2
            lines.append(f"p=inf flat {rep.flatness_residual:.3e} (tol 5e-2)")
        else:
            good = (rep.verdict and rep.saturation_residual <= 1e-3
                    and rep.min_profile > 0.0)
            lines.append(f"p={p:g} sat {rep.saturation_residual:.3e} (tol 1e-3) "
                         f"min prof {rep.min_profile:.3f}")
        ok = ok and good and not rep.conditional
    _gate("AC08 bang-bang", ok, "; ".join(lines))


def test_09_roundtrip_attainable():
    grid = SpatialGrid(1.0, 20)
    region = ControlRegion(0.3, 0.7)
    mesh = TimeMesh(0.3, 40)
    pot = _bump_potential(grid)
    cfg = SolverConfig(tol=1e-7)
    worst_eq = worst_rec = worst_gap = 0.0
    for seed in (3, 11):
        rng = np.random.default_rng(seed)
        for q in (1.5, 2.0, 3.0):
            z = rng.standard_normal(grid.n)
            rep = roundtrip(XiElement(grid, region, pot, mesh, z, q), cfg)
            assert rep.converged
            worst_eq = max(worst_eq, abs(rep.u_norm - rep.xi_norm) / rep.xi_norm)
            worst_rec = max(worst_rec, rep.recovered_err)
            worst_gap = max(worst_gap, rep.attainable_gap)
    _gate("AC09 roundtrip",
          worst_eq <= 1e-12 and worst_rec <= 1e-3 and worst_gap <= 1e-3,
          f"norm equality {worst_eq:.3e} (tol 1e-12), recovered {worst_rec:.3e} "
          f"(tol 1e-3), attainable gap {worst_gap:.3e} (tol 1e-3)")


def test_10_gauge_and_shift_density():
    grid = SpatialGrid(1.0, 20)
    region = ControlRegion(0.3, 0.7)
    mesh = TimeMesh(0.3, 40)
    x = grid.nodes
    a1 = 2.0 * np.sin(2.0 * math.pi * x)
    a2 = lambda t: np.cos(t)
    rng = np.random.default_rng(7)
    z = rng.standard_normal(grid.n)
    phi_full = solve_adjoint(grid, region, Potential.separable(a1=a1, a2=a2), z, mesh)
    phi_a1 = solve_adjoint(grid, region, Potential.separable(a1=a1), z, mesh)
    scale = float(np.max(np.abs(phi_a1.states)))
    gauge_err = float(np.max(np.abs(gauge_transform(phi_full, a2).states
                                    - phi_a1.states))) / scale

    coeff = 0.8 ** np.arange(5) * np.random.default_rng(3).standard_normal(5)
    z_smooth = sum(c * np.sin((k + 1) * math.pi * x) for k, c in enumerate(coeff))
    el = XiElement(grid, region, Potential.separable(a1=a1, a2=a2), mesh, z_smooth, 2.0)
    rep = shift_density_check(el, [0.2, 0.1, 0.05, 0.025])
    _gate("AC10 gauge/shift",
          gauge_err <= 1e-6 and rep.is_strictly_decreasing(),
          f"gauge residual {gauge_err:.3e} (tol 1e-6); shift residuals "
          f"{['%.3e' % r for r in rep.residuals]} strictly decreasing: "
          f"{rep.is_strictly_decreasing()}")


def test_11_observability():
    grid = SpatialGrid(1.0, 50)
    region = ControlRegion(0.3, 0.7)
    cfg = AscentConfig(trials=5, max_iter=200, seed=0)
    t0, dt = 0.05, 0.005
    horizons = [0.1, 0.15, 0.25, 0.55, 1.05]
    ests = beta_curve(grid, region, ZERO, t0, horizons, dt, cfg)
    slack = 1.0 + 2.0 * cfg.tol
    monotone = all(b.value <= a.value * slack for a, b in zip(ests, ests[1:]))

    full = ControlRegion(0.0, 1.0)
    est_full = beta_estimate(grid, full, ZERO, 0.05, 0.15, 30, cfg)
    above = est_full.value >= est_full.single_mode_lower_bound - 1e-9
    oracle = single_mode_ratio(grid, 0.05, 0.15, 30)
    lam = math.pi**2
    continuum = lam / (math.exp(lam * 0.1) - 1.0)
    oracle_ok = abs(oracle - continuum) / continuum <= 5e-3

    fit = beta_bound_fit(ests)
    bound_ok = all(e.value <= math.exp(fit.C0 * (1.0 + 1.0 / (e.T - e.t))) * (1 + 1e-9)
                   for e in ests)

    shifted = [
        beta_estimate(grid, region, Potential.separable(a1=-5.0), t0, T,
                      int(round(T / dt)), cfg, extra_starts=[e.maximizer])
        for T, e in zip(horizons, ests)
    ]
    fit5 = beta_bound_fit(shifted)
    grows = fit5.C0 >= fit.C0
    _gate("AC11 observability",
          monotone and above and oracle_ok and bound_ok and grows,
          f"monotone {monotone}; single-mode bound {above} (oracle vs continuum "
          f"{abs(oracle - continuum) / continuum:.2e}, tol 5e-3); fitted bound holds "
          f"{bound_ok}; C0 {fit.C0:.5f} -> {fit5.C0:.5f} nondecreasing {grows}")


def test_12_q1_multistart_uniqueness():
    grid = SpatialGrid(1.0, 50)
    full = ControlRegion(0.0, 1.0)
    mesh = TimeMesh(0.2, 100)
    pot = _bump_potential(grid)
    y0 = _mixed_mode(grid)
    pb = DualProblem(grid, full, pot, mesh, 1.0, y0=y0)
    res = minimize_J(pb, SolverConfig(tol=1e-6, starts=5, seed=7))
    agreement = res.starts_agreement
    _gate("AC12 q=1 multistart", res.converged and agreement <= 1e-3,
          f"5 starts, worst pairwise control distance {agreement:.3e} relative (tol 1e-3)")
