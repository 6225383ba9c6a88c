"""Observability constants of the adjoint flow, estimated from below.

The constant measured here is

    beta(t, T) = sup_z ||phi(t; T, z)|| / ||chi_omega phi(.; T, z)||_{L1(t,T; L2)},

the factor by which the adjoint state at time t can exceed its observation
through the control region over (t, T).  Finite beta is exactly the
observability inequality; its growth as T - t shrinks is the quantitative
form, bounded by exp[C0 (1 + 1/(T - t))] for a constant C0 depending on the
region and the potential.

beta is a supremum, so any evaluated ratio is a certified lower bound and
ascent can only improve it.  beta_estimate runs projected gradient ascent
on the unit sphere of terminal data from random starts plus the lowest
eigenmode; beta_curve evaluates a family of horizons and feeds each
maximizer to the next smaller horizon (whose ratio at the restricted
trajectory is provably no smaller), which makes the reported curve
monotone in the gap up to ascent accuracy; beta_bound_fit extracts the
smallest constant C0 that covers a family of estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .pde import TimeMesh, _plain_adjoint_states, _stepper, lowest_mode

__all__ = [
    "ObservabilityError",
    "AscentConfig",
    "BetaEstimate",
    "BetaBoundFit",
    "beta_estimate",
    "beta_curve",
    "beta_bound_fit",
    "single_mode_ratio",
]


class ObservabilityError(RuntimeError):
    """The control region observes nothing of a nonzero adjoint state."""


@dataclass
class AscentConfig:
    """Knobs for the projected sphere ascent behind beta_estimate.

    trials random unit starts are run in addition to the deterministic
    lowest-eigenmode start.  tol is the relative improvement below which a
    run stops (it also sets the slack allowed in monotonicity comparisons);
    step0 is the initial trial step along the projected gradient.
    """

    trials: int = 8
    max_iter: int = 300
    tol: float = 1e-8
    step0: float = 0.25
    seed: int = 0
    patience: int = 12


@dataclass
class BetaEstimate:
    """A certified lower bound for beta(t, T) and the datum achieving it."""

    t: float
    T: float
    value: float
    maximizer: np.ndarray = field(repr=False)
    trials: int
    single_mode_lower_bound: float
    iterations: int
    tol: float


class _RatioOps:
    """Ratio evaluation and transpose-accumulated gradient on one mesh.

    The numerator uses the unaveraged nodal adjoint samples (a pointwise
    value, not a pairing), the denominator the trapezoid rule on the
    subinterval [t, T].  One ratio evaluation costs one backward solve;
    one gradient costs one more forward accumulation of the same length.
    """

    def __init__(self, grid, region, potential, t, T, m):
        self.grid = grid
        self.region = region
        self.potential = potential
        self.mesh = TimeMesh(float(T), int(m))
        dt = self.mesh.dt
        jt = int(round(t / dt))
        if abs(jt * dt - t) > 1e-9 * max(T, dt) or not (0 <= jt < m):
            raise ValueError(
                f"time t={t:g} must be a mesh node strictly before T={T:g} "
                f"(dt={dt:g})"
            )
        self.jt = jt
        self.t = jt * dt
        self.mask = region.mask(grid)
        # trapezoid weights on the subinterval [t_jt, T]
        w = np.zeros(self.mesh.m + 1)
        w[jt:] = dt
        w[jt] = 0.5 * dt
        w[-1] = 0.5 * dt
        self.w = w
        self.sqh = math.sqrt(grid.h)

    def states(self, z):
        return _plain_adjoint_states(self.grid, self.potential, z, self.mesh)

    def ratio(self, z, with_parts=False):
        psi = self.states(z)
        num = self.sqh * float(np.linalg.norm(psi[self.jt]))
        prof = self.sqh * np.linalg.norm(
            np.where(self.mask[None, :], psi, 0.0), axis=1
        )
        den = float(np.dot(self.w, prof))
        if den == 0.0:
            if np.any(z):
                raise ObservabilityError(
                    "restricted adjoint trajectory vanishes identically; "
                    "the region observes nothing of this datum"
                )
            return (0.0, psi, prof, 0.0) if with_parts else 0.0
        val = num / den
        return (val, psi, prof, den) if with_parts else val

    def gradient(self, z):
        """Euclidean gradient of the ratio at z, plus the ratio value.

        num(z) = ||A_jt z|| and den(z) = sum_j w_j ||M A_j z|| with A_j the
        propagation to node j and M the region mask; both gradients are
        transpose propagations, accumulated in a single sweep since
        A_j^T v = P_jt ... applied in ascending step order.
        """
        val, psi, prof, den = self.ratio(z, with_parts=True)
        st = _stepper(self.grid, self.potential, self.mesh)
        tail = st.tail_exponents()
        gexp = np.exp(-tail)
        num = self.sqh * float(np.linalg.norm(psi[self.jt]))
        # seed vectors: d num / d psi_j and -val * d den / d psi_j
        m = self.mesh.m
        seeds = np.zeros_like(psi)
        if num > 0.0:
            seeds[self.jt] += (self.grid.h / num) * psi[self.jt]
        for j in range(self.jt, m + 1):
            if prof[j] > 0.0 and self.w[j] > 0.0:
                coef = val * self.w[j] * self.grid.h / prof[j]
                seeds[j] -= coef * np.where(self.mask, psi[j], 0.0)
        # accumulate sum_j G_j^T seeds_j; G_j z = gexp_j * P_j ... P_{m-1} z
        acc = np.zeros(self.grid.n)
        for j in range(self.jt, m):
            acc = st.apply_P(j, acc + gexp[j] * seeds[j])
        acc += gexp[m] * seeds[m]
        if den == 0.0:
            raise ObservabilityError("degenerate denominator in gradient")
        return acc / den, val


def _ascend(ops: _RatioOps, z0, config: AscentConfig):
    """Projected gradient ascent on the unit sphere; returns best found."""
    z = np.asarray(z0, dtype=float).copy()
    nz = float(np.linalg.norm(z))
    if nz == 0.0:
        raise ValueError("ascent start must be nonzero")
    z /= nz
    best_val, best_z = ops.ratio(z), z.copy()
    step = config.step0
    stall = 0
    iters = 0
    for _ in range(config.max_iter):
        iters += 1
        g, val = ops.gradient(z)
        g_t = g - np.dot(g, z) * z
        gn = float(np.linalg.norm(g_t))
        if gn == 0.0:
            break
        improved = False
        for _ in range(30):
            trial = z + step * g_t / gn
            trial /= float(np.linalg.norm(trial))
            tval = ops.ratio(trial)
            if tval > val:
                if tval > best_val:
                    best_val, best_z = tval, trial.copy()
                rel = (tval - val) / max(val, 1e-300)
                z = trial
                step = min(step * 1.6, 2.0)
                improved = True
                if rel < config.tol:
                    stall += 1
                else:
                    stall = 0
                break
            step *= 0.5
            if step < 1e-14:
                break
        if not improved or stall >= config.patience or step < 1e-14:
            break
    return best_val, best_z, iters


def _lowest_mode_start(grid, potential):
    if potential.is_separable:
        _, vec = lowest_mode(grid, potential.a1_values(grid))
    else:
        _, vec = lowest_mode(grid)
    return vec


def beta_estimate(grid, region, potential, t, T, m,
                  config: AscentConfig | None = None,
                  extra_starts=None) -> BetaEstimate:
    """Lower-bound beta(t, T) by multi-start projected ascent.

    t and T must be nodes of the m-step mesh on [0, T].  The returned value
    is the best ratio over every iterate of every start (each evaluation is
    itself a valid lower bound, so the maximum over all of them is the
    tightest certificate the run produced).  The deterministic lowest-
    eigenmode start also provides the single-mode lower bound reported on
    the estimate; the estimate can never fall below it.

    extra_starts adds caller-supplied data to the start list.  Feeding in
    maximizers found for a related problem (a longer horizon, a weaker
    potential) turns known pointwise comparisons between the two ratio
    functions into guaranteed orderings of the reported estimates.
    """
    config = config or AscentConfig()
    ops = _RatioOps(grid, region, potential, t, T, m)
    rng = np.random.default_rng(config.seed)
    starts = [_lowest_mode_start(grid, potential)]
    single_mode = ops.ratio(starts[0])
    for _ in range(config.trials):
        starts.append(rng.standard_normal(grid.n))
    for z in extra_starts or []:
        z = np.asarray(z, dtype=float)
        if np.any(z):
            starts.append(z)
    best_val, best_z = single_mode, starts[0]
    total = 0
    for z0 in starts:
        val, z, iters = _ascend(ops, z0, config)
        total += iters
        if val > best_val:
            best_val, best_z = val, z
    return BetaEstimate(
        t=ops.t,
        T=float(T),
        value=best_val,
        maximizer=best_z,
        trials=config.trials,
        single_mode_lower_bound=single_mode,
        iterations=total,
        tol=config.tol,
    )


def beta_curve(grid, region, potential, t, horizons, dt,
               config: AscentConfig | None = None) -> list:
    """beta estimates at fixed t over increasing horizons, largest first.

    All horizons and t must be multiples of dt (every problem then shares
    its time step, and states transfer exactly between meshes).  Each
    horizon's maximizer, propagated to the next smaller horizon's terminal
    time, joins that run's starts: the ratio only grows under that
    restriction, so the reported values decrease in T up to ascent
    accuracy by construction rather than by luck.

    Returns estimates ordered like the input horizons.
    """
    config = config or AscentConfig()
    hs = [float(T) for T in horizons]
    if len(hs) < 2 or any(b <= a for a, b in zip(hs, hs[1:])):
        raise ValueError("horizons must be strictly increasing")
    for T in hs + [t]:
        if abs(T / dt - round(T / dt)) > 1e-9:
            raise ValueError(f"{T:g} is not a multiple of the time step {dt:g}")
    if t >= hs[0]:
        raise ValueError(f"t={t:g} must lie strictly before the smallest horizon")
    estimates: dict = {}
    carried = None
    for T in reversed(hs):
        m = int(round(T / dt))
        ops = _RatioOps(grid, region, potential, t, T, m)
        est = beta_estimate(grid, region, potential, t, T, m, config)
        best_val, best_z = est.value, est.maximizer
        total = est.iterations
        if carried is not None:
            val, z, iters = _ascend(ops, carried, config)
            total += iters
            if val > best_val:
                best_val, best_z = val, z
            est = BetaEstimate(
                t=est.t, T=est.T, value=best_val, maximizer=best_z,
                trials=est.trials, single_mode_lower_bound=est.single_mode_lower_bound,
                iterations=total, tol=est.tol,
            )
        estimates[T] = est
        # restriction: the maximizer's adjoint state at the next smaller
        # horizon is a terminal datum whose shorter-gap ratio is no smaller
        idx = hs.index(T)
        if idx > 0:
            T_next = hs[idx - 1]
            psi = _plain_adjoint_states(grid, potential, best_z, TimeMesh(T, m))
            carried = psi[int(round(T_next / dt))]
            if not np.any(carried):
                carried = None
    return [estimates[T] for T in hs]


@dataclass
class BetaBoundFit:
    """Smallest C0 with beta_i <= exp[C0 (1 + 1/(T_i - t_i))] for all samples."""

    C0: float
    gaps: list
    betas: list
    residuals: list

    @property
    def max_residual(self):
        return max(self.residuals)

    def bound(self, gap):
        return math.exp(self.C0 * (1.0 + 1.0 / gap))


def beta_bound_fit(samples) -> BetaBoundFit:
    """Fit the observability-cost constant to a family of beta estimates.

    Needs at least 4 samples with pairwise distinct positive gaps T - t and
    positive beta values.  C0 is the max of ln(beta) / (1 + 1/gap), so the
    bound covers every sample by construction; the residuals record how far
    below the bound each sample sits (zero at the tight one).
    """
    samples = list(samples)
    if len(samples) < 4:
        raise ValueError(f"need at least 4 beta samples to fit, have {len(samples)}")
    gaps, betas = [], []
    for s in samples:
        gap = s.T - s.t
        if gap <= 0.0:
            raise ValueError(f"sample has nonpositive gap T - t = {gap:g}")
        if not (s.value > 0.0 and math.isfinite(s.value)):
            raise ValueError(f"sample has unusable beta value {s.value!r}")
        gaps.append(gap)
        betas.append(s.value)
    for i in range(len(gaps)):
        for j in range(i + 1, len(gaps)):
            if abs(gaps[i] - gaps[j]) <= 1e-12 * max(gaps[i], gaps[j]):
                raise ValueError("gaps must be pairwise distinct")
    C0 = max(math.log(b) / (1.0 + 1.0 / g) for b, g in zip(betas, gaps))
    residuals = [
        1.0 - b / math.exp(C0 * (1.0 + 1.0 / g)) for b, g in zip(betas, gaps)
    ]
    return BetaBoundFit(C0=C0, gaps=gaps, betas=betas, residuals=residuals)


def single_mode_ratio(grid, t, T, m, a1=None):
    """Discrete closed form of the lowest-mode ratio for a full-domain region.

    With the region covering the whole domain and a potential a1(x), the
    lowest eigenmode evolves by the scheme's scalar growth factor rho per
    step, so the ratio reduces to a geometric sum over the subinterval
    nodes.  Used as an independent oracle for the single-mode lower bound.
    """
    mesh = TimeMesh(float(T), int(m))
    dt = mesh.dt
    jt = int(round(t / dt))
    lam, _ = lowest_mode(grid, a1)
    rho = (1.0 - 0.5 * dt * lam) / (1.0 + 0.5 * dt * lam)
    # profile at node j is rho^(m - j); trapezoid weights over [t_jt, T]
    powers = rho ** np.arange(m - jt, -1, -1.0)
    w = np.full(m - jt + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    return float(powers[0] / np.dot(w, powers))
