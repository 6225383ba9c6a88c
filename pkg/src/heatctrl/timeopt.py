"""Minimal-time steering under a control-norm budget, and bang-bang checks.

Given a budget M > 0, the minimal time T_star is the smallest horizon whose
minimal-norm value satisfies N_p(T_star, y0) = M: the map T -> N_p(T, y0) is
continuous and strictly decreasing, blows up as T -> 0, and falls to a
limiting value as T grows, so the equation has exactly one root whenever M
lies strictly between that limit and infinity.  The solver brackets the root
and bisects on the norm value; the time-optimal control is the minimal-norm
control at T_star, extended by zero beyond it.

At the minimal time the control saturates the budget.  For finite p the
full time-integral norm equals M and the pointwise profile stays positive
up to the horizon; for p = inf the profile itself is flat at height M.
bangbang_check measures both properties and issues a verdict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dual import SolverConfig
from .minnorm import NormValueResult, norm_value, null_residual
from .pde import ControlSignal, TimeMesh, bochner_norm

__all__ = [
    "TimeOptimalQuery",
    "TimeOptimalResult",
    "BangBangReport",
    "BracketError",
    "NoOptimalControl",
    "time_optimal_solve",
    "zero_extended",
    "bangbang_check",
]


class BracketError(ValueError):
    """The supplied horizon bracket does not straddle the budget."""


class NoOptimalControl(RuntimeError):
    """The budget sits at or below the long-horizon limit of N_p."""


@dataclass
class TimeOptimalQuery:
    """A minimal-time request: budget, exponent, horizon bracket, tolerance.

    bracket is (T_lo, T_hi); when omitted it defaults to (T_hi/64, T_hi)
    with T_hi = 1.  The solver may shrink T_lo up to max_shrinks times when
    the budget exceeds N_p(T_lo).  tol is relative on the norm match:
    bisection stops once |N_p(T) - M| <= tol * M.
    """

    M: float
    p: float
    bracket: tuple | None = None
    tol: float = 1e-4
    max_shrinks: int = 6

    def __post_init__(self):
        if not (self.M > 0.0 and math.isfinite(self.M)):
            raise ValueError(f"budget must be a positive finite number, got M={self.M}")
        if self.tol <= 0.0:
            raise ValueError(f"tolerance must be positive, got {self.tol}")
        if self.bracket is not None:
            lo, hi = self.bracket
            if not (0.0 < lo < hi):
                raise ValueError(f"bracket must satisfy 0 < T_lo < T_hi, got {self.bracket}")

    def resolved_bracket(self):
        if self.bracket is not None:
            return float(self.bracket[0]), float(self.bracket[1])
        return 1.0 / 64.0, 1.0


@dataclass
class TimeOptimalResult:
    """Outcome of a minimal-time solve, with the bisection trace."""

    query: TimeOptimalQuery
    T_star: float
    norm_at_T_star: float
    control: ControlSignal | None
    converged: bool
    null_residual: float
    history: list = field(default_factory=list)
    bisections: int = 0
    norm_result: NormValueResult | None = None
    message: str = ""


def _sample(grid, region, potential, y0, T, p, config, m):
    return norm_value(grid, region, potential, y0, T, p, config, m)


def time_optimal_solve(grid, region, potential, y0, query: TimeOptimalQuery,
                       config: SolverConfig | None = None, m=100) -> TimeOptimalResult:
    """Find the minimal horizon T_star with N_p(T_star, y0) = M.

    The time-step count m is shared by every norm evaluation, so the root is
    sought on one continuous curve.  Preconditions checked before bisecting:

    * N_p(T_hi) < M, else the budget is unreachable inside the bracket.  In
      that case a doubling sweep out to 16 T_hi estimates the long-horizon
      limit; a budget at or below that estimate raises NoOptimalControl
      (minimal-time controls exist only for budgets strictly above the
      limit), and a budget between the tail and N_p(T_hi) raises
      BracketError asking for a larger T_hi.
    * N_p(T_lo) > M, with up to query.max_shrinks automatic quarterings of
      T_lo before giving up with BracketError.

    Returns a TimeOptimalResult whose control is the minimal-norm control at
    T_star.  Non-convergence of any underlying norm solve is reported via
    converged=False with the partial history, never hidden.
    """
    from .minnorm import NormCurve, nhat_estimate

    y0 = np.asarray(y0, dtype=float)
    M, p, tol = query.M, query.p, query.tol
    T_lo, T_hi = query.resolved_bracket()
    history = []

    def _finish(T, r, bisections):
        resid = null_residual(grid, region, potential, y0, r.control)
        return TimeOptimalResult(query, T, r.value, r.control, True, resid,
                                 history, bisections, r)

    r_hi = _sample(grid, region, potential, y0, T_hi, p, config, m)
    history.append((T_hi, r_hi.value, r_hi.converged))
    if not r_hi.converged:
        return TimeOptimalResult(query, T_hi, r_hi.value, None, False, math.nan,
                                 history, 0, r_hi, "norm solve at T_hi did not converge")
    if abs(r_hi.value - M) <= tol * M:
        return _finish(T_hi, r_hi, 0)
    if r_hi.value >= M:
        # budget not reachable inside the bracket: probe the long-horizon tail
        tail_T = [T_hi * 2.0, T_hi * 4.0, T_hi * 8.0, T_hi * 16.0]
        tail = [r_hi]
        for T in tail_T:
            rt = _sample(grid, region, potential, y0, T, p, config, m)
            history.append((T, rt.value, rt.converged))
            tail.append(rt)
            if rt.converged and rt.value < M:
                raise BracketError(
                    f"budget M={M:g} is below N_p(T_hi)={r_hi.value:g} but above "
                    f"N_p({T:g})={rt.value:g}; raise the bracket's upper endpoint"
                )
        curve = NormCurve(
            horizons=[T_hi] + tail_T,
            values=[r.value for r in tail],
            converged=[r.converged for r in tail],
            gaps=[r.primal_dual_gap for r in tail],
            p=p,
        )
        try:
            est = nhat_estimate(curve)
        except ValueError as exc:
            raise BracketError(
                f"budget M={M:g} exceeds no converged sample out to {tail_T[-1]:g} and the "
                f"long-horizon tail could not be resolved ({exc}); raise the bracket's "
                "upper endpoint or refine the time mesh"
            ) from exc
        if M <= est.value:
            raise NoOptimalControl(
                f"budget M={M:g} is at or below the long-horizon limit estimate "
                f"{est.value:g} (plateau residual {est.plateau_residual:.2e}); "
                "time-optimal controls exist only for budgets strictly above that limit"
            )
        raise BracketError(
            f"budget M={M:g} is below N_p(T_hi)={r_hi.value:g} but above the "
            f"long-horizon tail {est.value:g}; raise the bracket's upper endpoint"
        )

    r_lo = _sample(grid, region, potential, y0, T_lo, p, config, m)
    history.append((T_lo, r_lo.value, r_lo.converged))
    if not r_lo.converged:
        return TimeOptimalResult(query, T_lo, r_lo.value, None, False, math.nan,
                                 history, 0, r_lo, "norm solve at T_lo did not converge")
    if abs(r_lo.value - M) <= tol * M:
        return _finish(T_lo, r_lo, 0)
    shrinks = 0
    while r_lo.value <= M and shrinks < query.max_shrinks:
        T_lo *= 0.25
        shrinks += 1
        r_lo = _sample(grid, region, potential, y0, T_lo, p, config, m)
        history.append((T_lo, r_lo.value, r_lo.converged))
        if not r_lo.converged:
            return TimeOptimalResult(query, T_lo, r_lo.value, None, False, math.nan,
                                     history, 0, r_lo, "norm solve at shrunk T_lo did not converge")
        if abs(r_lo.value - M) <= tol * M:
            return _finish(T_lo, r_lo, 0)
    if r_lo.value <= M:
        raise BracketError(
            f"bracket does not straddle the budget even after {shrinks} shrinks: "
            f"N_p({T_lo:g})={r_lo.value:g} <= M={M:g} < infinity; supply a smaller T_lo"
        )

    lo, hi = T_lo, T_hi
    best = None
    bisections = 0
    skipped = 0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        r = _sample(grid, region, potential, y0, mid, p, config, m)
        bisections += 1
        history.append((mid, r.value, r.converged))
        if r.converged and abs(r.value - M) <= tol * M:
            best = (mid, r)
            break
        if not r.converged:
            # a borderline sample still localizes the root; only a converged
            # sample may be accepted as the answer
            skipped += 1
            if not math.isfinite(r.value):
                return TimeOptimalResult(query, mid, r.value, None, False, math.nan,
                                         history, bisections, r,
                                         "norm solve inside the bracket diverged")
        if r.value > M:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * hi:
            break
    if best is None:
        note = f" ({skipped} samples unconverged)" if skipped else ""
        return TimeOptimalResult(query, 0.5 * (lo + hi), math.nan, None, False, math.nan,
                                 history, bisections, None,
                                 "bisection exhausted the bracket without matching the budget" + note)
    T_star, r_star = best
    resid = null_residual(grid, region, potential, y0, r_star.control)
    return TimeOptimalResult(
        query=query,
        T_star=T_star,
        norm_at_T_star=r_star.value,
        control=r_star.control,
        converged=True,
        null_residual=resid,
        history=history,
        bisections=bisections,
        norm_result=r_star,
    )


def zero_extended(control: ControlSignal, T_total: float) -> ControlSignal:
    """Extend a control by zero to a longer horizon, keeping the time step.

    T_total must be a node of the extended mesh (a multiple of the original
    dt); the returned signal agrees with the input on [0, T_star] and
    vanishes on every later node.
    """
    mesh = control.mesh
    dt = mesh.dt
    m_total = int(round(T_total / dt))
    if m_total < mesh.m or abs(m_total * dt - T_total) > 1e-9 * max(T_total, dt):
        raise ValueError(
            f"extension horizon {T_total:g} is not a node multiple of dt={dt:g} "
            f"at or beyond T={mesh.T:g}"
        )
    n = control.values.shape[1]
    values = np.zeros((m_total + 1, n))
    values[: mesh.m + 1] = control.values
    return ControlSignal(TimeMesh(T_total, m_total), values,
                         restricted=control.restricted, region=control.region)


@dataclass
class BangBangReport:
    """Saturation evidence for a candidate time-optimal control."""

    p: float
    M: float
    T_star: float
    saturation_residual: float
    flatness_residual: float
    min_profile: float
    mean_profile: float
    verdict: bool
    conditional: bool = False


def bangbang_check(control: ControlSignal, p, M, T_star, grid,
                   potential=None) -> BangBangReport:
    """Measure how sharply a control saturates the budget M.

    The profile is t -> ||u(t)||.  Both residuals are always reported:
    saturation compares the full L^p norm of the control against M, and
    flatness is the largest relative deviation of the profile from M over
    the early window [0, 0.95 T_star] (the last 5% is excluded because the
    final nodes carry the terminal layer of the discretization).

    The verdict applies the criterion matching p: for finite p the norm must
    saturate to 1e-3 and the early profile must stay positive (at least
    1e-6 of its mean); for p = inf the early profile must be flat to 5e-2.
    A time-varying potential that is not separable leaves the bang-bang
    characterization conditional, and the report says so.
    """
    mesh = control.mesh
    prof = math.sqrt(grid.h) * np.linalg.norm(control.values, axis=1)
    m95 = int(math.floor(0.95 * mesh.m + 1e-9))
    early = prof[: m95 + 1]
    min_profile = float(early.min())
    mean_profile = float(early.mean())
    full_norm = bochner_norm(control, grid, mesh, p)
    saturation = abs(full_norm - M) / M
    flatness = float(np.max(np.abs(early - M)) / M)
    if p == math.inf or p == np.inf:
        verdict = flatness <= 5e-2
    else:
        verdict = saturation <= 1e-3 and min_profile >= 1e-6 * mean_profile
    conditional = bool(potential is not None and not potential.is_separable)
    return BangBangReport(
        p=p,
        M=M,
        T_star=T_star,
        saturation_residual=saturation,
        flatness_residual=flatness,
        min_profile=min_profile,
        mean_profile=mean_profile,
        verdict=verdict,
        conditional=conditional,
    )
