"""Minimal-norm values N_p(T, y0) and their certificates.

N_p(T, y0) is the smallest L^p(0,T; L2) norm of a control steering y0 to
zero at time T.  It is computed from the dual problem: N_p = sqrt(-2 V_q)
with V_q the minimum of the dual functional over adjoint terminal data
(1/p + 1/q = 1).  This module wraps that solve and adds the certificates
that make a computed value trustworthy:

* the primal/dual norm gap (the extracted control's norm against N_p),
* the sup-form cross-check, which lower-bounds N_p from independently
  chosen trial data and must never exceed it (weak duality),
* monotone norm curves over a horizon grid, with a strict-decrease
  certificate and a short-horizon blow-up probe,
* a long-horizon plateau estimate of the limiting value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dual import (
    DualProblem,
    MinimizerResult,
    SolverConfig,
    conjugate_exponent,
    control_from_minimizer,
    minimize_J,
)
from .pde import ControlSignal, TimeMesh, bochner_norm, solve_adjoint, solve_forward

__all__ = [
    "NormValueResult",
    "NormCurve",
    "NhatEstimate",
    "norm_value",
    "dual_sup_check",
    "norm_curve",
    "blowup_probe",
    "nhat_estimate",
    "null_residual",
]


@dataclass
class NormValueResult:
    """One minimal-norm computation: the value, its control, its evidence."""

    value: float
    control: ControlSignal | None
    converged: bool
    primal_dual_gap: float
    minimizer: MinimizerResult

    @property
    def T(self):
        return self.minimizer.problem.mesh.T


def norm_value(grid, region, potential, y0, T, p, config=None, m=100) -> NormValueResult:
    """Minimal L^p control norm for steering y0 to zero over [0, T].

    Parameters
    ----------
    y0 : array
        Initial state on the grid's interior nodes.
    T : positive float
        Control horizon.
    p : float in (1, inf], or math.inf
        Control norm exponent; the dual solve runs at the conjugate q.
    config : SolverConfig, optional
    m : int
        Time steps for the horizon mesh.

    Returns
    -------
    NormValueResult
        value = N_p(T, y0); control is the minimal-norm control (None when
        the dual solve did not converge); primal_dual_gap is the relative
        distance between the control's measured L^p norm and the dual
        value, the first identity any consumer should look at.
    """
    if T <= 0.0:
        raise ValueError(f"horizon must be positive, got T={T}")
    q = conjugate_exponent(p)
    mesh = TimeMesh(float(T), m)
    problem = DualProblem(grid, region, potential, mesh, q=q, y0=np.asarray(y0, dtype=float))
    result = minimize_J(problem, config)
    if not result.converged:
        return NormValueResult(
            value=result.norm,
            control=None,
            converged=False,
            primal_dual_gap=math.nan,
            minimizer=result,
        )
    control = control_from_minimizer(result)
    if result.norm == 0.0:
        gap = 0.0
    else:
        primal = bochner_norm(control, grid, mesh, p)
        gap = abs(primal - result.norm) / result.norm
    return NormValueResult(
        value=result.norm,
        control=control,
        converged=True,
        primal_dual_gap=gap,
        minimizer=result,
    )


def dual_sup_check(grid, region, potential, y0, T, q, trial_zs, m=100):
    """Best lower bound on N_p from the ratio form over explicit trials.

    Every nonzero adjoint terminal datum z gives the ratio

        <y(T; y0, 0), z> / ||chi_omega phi(.; T, z)||_q,

    and the supremum over z equals N_p.  The maximum signed ratio over the
    supplied trials is returned; it can never exceed N_p beyond rounding
    (weak duality), and with z = -z_hat among the trials it reaches N_p to
    within the solver's optimality defect.

    Trials whose denominator vanishes are skipped: a nonzero z that the
    control region never sees signals a degenerate mask, and using it would
    divide by zero rather than say anything about N_p.
    """
    mesh = TimeMesh(float(T), m)
    b = solve_forward(grid, region, potential, np.asarray(y0, dtype=float), None, mesh).final_state
    mask = region.mask(grid)
    best = -math.inf
    used = 0
    for z in trial_zs:
        z = np.asarray(z, dtype=float)
        if not np.any(z):
            continue
        phi = solve_adjoint(grid, region, potential, z, mesh)
        xi = np.where(mask[None, :], phi.states, 0.0)
        denom = bochner_norm(xi, grid, mesh, q)
        if denom == 0.0:
            continue
        used += 1
        best = max(best, grid.inner(b, z) / denom)
    if used == 0:
        raise ValueError("no usable trial data: every trial was zero or unobserved")
    return best


def null_residual(grid, region, potential, y0, control: ControlSignal) -> float:
    """Relative norm of the controlled final state; zero means exact steering."""
    y0 = np.asarray(y0, dtype=float)
    yT = solve_forward(grid, region, potential, y0, control, control.mesh).final_state
    scale = grid.norm(y0)
    if scale == 0.0:
        return grid.norm(yT)
    return grid.norm(yT) / scale


@dataclass
class NormCurve:
    """Sampled map T -> N_p(T, y0) with its monotonicity certificate."""

    horizons: list[float]
    values: list[float]
    converged: list[bool]
    gaps: list[float]
    p: float
    margin_rel: float = 1e-9

    def __post_init__(self):
        t = np.asarray(self.horizons, dtype=float)
        if t.size < 2 or np.any(t <= 0.0) or np.any(np.diff(t) <= 0.0):
            raise ValueError("horizon grid must be strictly increasing and positive")

    @property
    def all_converged(self):
        return all(self.converged)

    def is_strictly_decreasing(self):
        """True when every adjacent converged pair decreases with margin."""
        ok = True
        for i in range(len(self.values) - 1):
            if not (self.converged[i] and self.converged[i + 1]):
                continue
            if not self.values[i + 1] < self.values[i] - self.margin_rel * self.values[i]:
                ok = False
        return ok

    def violations(self):
        out = []
        for i in range(len(self.values) - 1):
            if not (self.converged[i] and self.converged[i + 1]):
                continue
            if not self.values[i + 1] < self.values[i] - self.margin_rel * self.values[i]:
                out.append((self.horizons[i], self.horizons[i + 1]))
        return out


def norm_curve(grid, region, potential, y0, p, horizons, config=None, m=100) -> NormCurve:
    """Evaluate N_p over a strictly increasing horizon grid.

    The time-step count m is shared by all samples, so the curve is the
    restriction of one continuous function of T.  A monotonicity violation
    between converged samples is a solver-accuracy failure (the underlying
    map is strictly decreasing), and is exposed by the returned
    certificate rather than silently accepted.
    """
    t = np.asarray(list(horizons), dtype=float)
    if t.size < 2 or np.any(t <= 0.0) or np.any(np.diff(t) <= 0.0):
        raise ValueError("horizon grid must be strictly increasing and positive")
    values, flags, gaps = [], [], []
    for T in t:
        r = norm_value(grid, region, potential, y0, float(T), p, config, m)
        values.append(r.value)
        flags.append(r.converged)
        gaps.append(r.primal_dual_gap)
    return NormCurve(
        horizons=[float(v) for v in t],
        values=values,
        converged=flags,
        gaps=gaps,
        p=p,
    )


def blowup_probe(grid, region, potential, y0, p, T_start, config=None, m=100, halvings=4):
    """Sample N_p at T_start and its repeated halvings (short-horizon trend).

    Returns the list [(T, N_p(T)), ...] from T_start downward.  The minimal
    norm grows without bound as the horizon shrinks, so the computed values
    should increase monotonically along the list; the caller asserts that.
    """
    out = []
    T = float(T_start)
    for _ in range(halvings + 1):
        r = norm_value(grid, region, potential, y0, T, p, config, m)
        if not r.converged:
            raise RuntimeError(f"norm value did not converge at T={T:g}")
        out.append((T, r.value))
        T *= 0.5
    return out


@dataclass
class NhatEstimate:
    """Plateau estimate of the long-horizon limit of N_p(T, y0)."""

    value: float
    tail_horizons: list[float] = field(default_factory=list)
    plateau_residual: float = math.nan
    converged: bool = False


def nhat_estimate(curve: NormCurve) -> NhatEstimate:
    """Estimate the long-horizon limit from the tail of a norm curve.

    Needs at least 5 converged samples whose last horizon is at least 4x
    the first.  The estimate is the last converged value; the plateau
    residual is the largest relative change across the last three converged
    samples, and the estimate is flagged unconverged when it exceeds 10%
    (the curve is still visibly falling).  The estimate never exceeds any
    converged sample because the curve decreases.
    """
    ts = [T for T, ok in zip(curve.horizons, curve.converged) if ok]
    ns = [N for N, ok in zip(curve.values, curve.converged) if ok]
    if len(ts) < 5:
        raise ValueError(f"need at least 5 converged samples, have {len(ts)}")
    if ts[-1] < 4.0 * ts[0]:
        raise ValueError(
            f"tail horizon {ts[-1]:g} is less than 4x the first converged horizon {ts[0]:g}"
        )
    tail_n = ns[-3:]
    scale = abs(tail_n[-1])
    if scale == 0.0:
        residual = 0.0 if max(abs(v) for v in tail_n) == 0.0 else math.inf
    else:
        residual = max(abs(tail_n[i + 1] - tail_n[i]) for i in range(len(tail_n) - 1)) / scale
    return NhatEstimate(
        value=ns[-1],
        tail_horizons=ts[-3:],
        plateau_residual=residual,
        converged=residual <= 0.10,
    )
