"""Grids, potentials, and Crank-Nicolson solvers for the controlled heat equation.

State equation on (0, L) with homogeneous Dirichlet ends:

    y_t - y_xx + a(x, t) y = chi_omega(x) u(x, t)

and its adjoint run backward from a terminal datum z:

    phi_t + phi_xx - a(x, t) phi = 0,   phi(T) = z.

The two solvers are exact transposes of each other with respect to the
h-weighted spatial inner product and trapezoid time weights, so the duality
pairing

    sum_j w_j <u(t_j), chi_omega phi(t_j)>  ==  <y(T; 0, u), z>

holds to machine precision, not just up to discretization error.  Everything
downstream (dual functionals, norms, controls) is built on that identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded, solve_banded

__all__ = [
    "SpatialGrid",
    "ControlRegion",
    "TimeMesh",
    "Potential",
    "Trajectory",
    "ControlSignal",
    "solve_forward",
    "solve_adjoint",
    "duality_residual",
    "bochner_norm",
    "lowest_mode",
]


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform interior grid on (0, L) with n nodes, h = L/(n+1)."""

    L: float
    n: int

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError(f"interval length must be positive, got L={self.L}")
        if self.n < 3:
            raise ValueError(f"need at least 3 interior nodes, got n={self.n}")

    @property
    def h(self) -> float:
        return self.L / (self.n + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.h * np.arange(1, self.n + 1)

    def inner(self, f, g) -> float:
        """h-weighted inner product <f, g> = h * sum_i f_i g_i."""
        return self.h * float(np.dot(f, g))

    def norm(self, f) -> float:
        return math.sqrt(self.h) * float(np.linalg.norm(f))


@dataclass(frozen=True)
class ControlRegion:
    """Control interval [alpha, beta]; the mask selects interior nodes inside it.

    alpha = 0 and beta = L are allowed and mean the control acts on every
    interior node (omega = Omega).
    """

    alpha: float
    beta: float

    def __post_init__(self):
        if not 0 <= self.alpha < self.beta:
            raise ValueError(
                f"need 0 <= alpha < beta, got alpha={self.alpha}, beta={self.beta}"
            )

    def mask(self, grid: SpatialGrid) -> np.ndarray:
        if self.beta > grid.L:
            raise ValueError(f"region end {self.beta} exceeds interval length {grid.L}")
        x = grid.nodes
        m = (x >= self.alpha) & (x <= self.beta)
        if not m.any():
            raise ValueError(
                f"region [{self.alpha}, {self.beta}] contains no grid node at n={grid.n}"
            )
        return m


@dataclass(frozen=True)
class TimeMesh:
    """Uniform time mesh on [0, T] with m steps (m+1 nodes)."""

    T: float
    m: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"horizon must be positive, got T={self.T}")
        if self.m < 2:
            raise ValueError(f"need at least 2 time steps, got m={self.m}")

    @property
    def dt(self) -> float:
        return self.T / self.m

    @property
    def nodes(self) -> np.ndarray:
        return self.dt * np.arange(self.m + 1)

    @property
    def midpoints(self) -> np.ndarray:
        return self.dt * (np.arange(self.m) + 0.5)

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights on the nodes."""
        w = np.full(self.m + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w


class Potential:
    """Potential a(x, t), either separable a1(x) + a2(t) or a general table.

    a1 may be a constant, an array of node values, or a callable of x.
    a2 may be None, a callable of t, or an array of step-midpoint samples.
    A general potential is a callable of (x, t) evaluated at step midpoints.
    """

    def __init__(self, kind, a1=None, a2=None, a=None):
        if kind not in ("separable", "general"):
            raise ValueError(f"unknown potential kind {kind!r}")
        if kind == "general" and a is None:
            raise ValueError("general potential needs a callable a(x, t)")
        self.kind = kind
        self.a1 = a1
        self.a2 = a2
        self.a = a

    @classmethod
    def zero(cls) -> "Potential":
        return cls("separable", a1=0.0)

    @classmethod
    def separable(cls, a1=0.0, a2=None) -> "Potential":
        return cls("separable", a1=a1, a2=a2)

    @classmethod
    def general(cls, a) -> "Potential":
        return cls("general", a=a)

    @property
    def is_separable(self) -> bool:
        return self.kind == "separable"

    def a1_values(self, grid: SpatialGrid) -> np.ndarray:
        if self.kind != "separable":
            raise ValueError("a1_values only makes sense for separable potentials")
        a1 = self.a1
        if a1 is None:
            return np.zeros(grid.n)
        if callable(a1):
            return np.asarray(a1(grid.nodes), dtype=float) * np.ones(grid.n)
        a1 = np.asarray(a1, dtype=float)
        if a1.ndim == 0:
            return np.full(grid.n, float(a1))
        if a1.shape != (grid.n,):
            raise ValueError(f"a1 samples have shape {a1.shape}, expected ({grid.n},)")
        return a1

    def a2_midpoints(self, mesh: TimeMesh) -> np.ndarray:
        """a2 sampled at step midpoints t_{j+1/2}; zeros when absent."""
        if self.kind != "separable":
            raise ValueError("a2_midpoints only makes sense for separable potentials")
        a2 = self.a2
        if a2 is None:
            return np.zeros(mesh.m)
        if callable(a2):
            return np.asarray(a2(mesh.midpoints), dtype=float) * np.ones(mesh.m)
        a2 = np.asarray(a2, dtype=float)
        if a2.shape != (mesh.m,):
            raise ValueError(
                f"a2 midpoint samples have shape {a2.shape}, expected ({mesh.m},)"
            )
        return a2

    def midpoint_table(self, grid: SpatialGrid, mesh: TimeMesh) -> np.ndarray:
        """a(x_i, t_{j+1/2}) as an (m, n) table."""
        if self.kind == "separable":
            return self.a1_values(grid)[None, :] + self.a2_midpoints(mesh)[:, None]
        x = grid.nodes
        rows = [np.asarray(self.a(x, t), dtype=float) * np.ones(grid.n)
                for t in mesh.midpoints]
        return np.array(rows)

    def sup_norm(self, grid: SpatialGrid, mesh: TimeMesh) -> float:
        return float(np.max(np.abs(self.midpoint_table(grid, mesh))))


@dataclass
class Trajectory:
    """States on the time nodes, shape (m+1, n)."""

    mesh: TimeMesh
    states: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        if self.states.shape[0] != self.mesh.m + 1:
            raise ValueError(
                f"trajectory has {self.states.shape[0]} states, mesh wants {self.mesh.m + 1}"
            )

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def initial_state(self) -> np.ndarray:
        return self.states[0]

    def norms(self, grid: SpatialGrid) -> np.ndarray:
        return math.sqrt(grid.h) * np.linalg.norm(self.states, axis=1)


@dataclass
class ControlSignal:
    """Control samples on the time nodes, shape (m+1, n).

    restricted=True promises the values are exactly zero off the control
    region; solver output controls always carry that flag.
    """

    mesh: TimeMesh
    values: np.ndarray
    restricted: bool = False
    region: ControlRegion | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != self.mesh.m + 1:
            raise ValueError(
                f"control has {self.values.shape[0]} samples, mesh wants {self.mesh.m + 1}"
            )


# ---------------------------------------------------------------------------
# Crank-Nicolson stepping machinery.
#
# One step of the theta = 1/2 scheme solves
#     (I - dt/2 A_j) y^{j+1} = (I + dt/2 A_j) y^j + dt/2 (f^j + f^{j+1})
# with A_j = Delta_h - diag(a(., t_{j+1/2})).  Both matrices are symmetric
# tridiagonal, which is what makes the adjoint an exact transpose.
# ---------------------------------------------------------------------------


def _factor_B(diag, offdiag):
    """Factor the symmetric tridiagonal B = tridiag(offdiag, diag, offdiag)."""
    n = diag.size
    ab = np.zeros((2, n))
    ab[0, 1:] = offdiag
    ab[1, :] = diag
    try:
        cb = cholesky_banded(ab)
        return lambda rhs: cho_solve_banded((cb, False), rhs)
    except np.linalg.LinAlgError:
        # strongly negative potential at a coarse dt can lose definiteness;
        # fall back to banded LU on the same matrix
        band = np.zeros((3, n))
        band[0, 1:] = offdiag
        band[1, :] = diag
        band[2, :-1] = offdiag
        return lambda rhs: solve_banded((1, 1), band, rhs)


class _Stepper:
    """Per-(grid, potential, mesh) step operators for forward and transpose runs."""

    def __init__(self, grid: SpatialGrid, potential: Potential, mesh: TimeMesh):
        self.grid = grid
        self.mesh = mesh
        self.potential = potential
        dt, h = mesh.dt, grid.h
        self.off = -0.5 * dt / h**2  # off-diagonal of B = I - dt/2 A
        if potential.is_separable:
            a1 = potential.a1_values(grid)
            self.g = dt * potential.a2_midpoints(mesh)  # integrating-factor exponents
            self.bdiag = 1.0 + dt / h**2 + 0.5 * dt * a1
            self.cdiag = 2.0 - self.bdiag  # C = 2I - B
            self.solve = _factor_B(self.bdiag, self.off)
            self.time_dependent = False
        else:
            table = potential.midpoint_table(grid, mesh)
            self.g = np.zeros(mesh.m)
            self.bdiags = 1.0 + dt / h**2 + 0.5 * dt * table
            self.cdiags = 2.0 - self.bdiags
            self.solves = [_factor_B(d, self.off) for d in self.bdiags]
            self.time_dependent = True

    def apply_C(self, j, y):
        # C = 2I - B, so C's off-diagonal is -off
        cdiag = self.cdiags[j] if self.time_dependent else self.cdiag
        out = cdiag * y
        out[1:] -= self.off * y[:-1]
        out[:-1] -= self.off * y[1:]
        return out

    def solve_B(self, j, rhs):
        return self.solves[j](rhs) if self.time_dependent else self.solve(rhs)

    def apply_P(self, j, y):
        """One homogeneous step y -> B_j^{-1} C_j y (symmetric)."""
        return self.solve_B(j, self.apply_C(j, y))

    def tail_exponents(self):
        """tail[j] = sum_{k >= j} g_k, so exp(-tail[j]) = eta_j / eta_m."""
        tail = np.zeros(self.mesh.m + 1)
        tail[:-1] = np.cumsum(self.g[::-1])[::-1]
        return tail


_STEPPER_CACHE: dict = {}


def _stepper(grid, potential, mesh) -> _Stepper:
    key = (id(grid), id(potential), id(mesh), grid, mesh)
    hit = _STEPPER_CACHE.get(key)
    if hit is None:
        if len(_STEPPER_CACHE) > 16:
            _STEPPER_CACHE.clear()
        hit = _STEPPER_CACHE[key] = _Stepper(grid, potential, mesh)
    return hit


def _control_values(u, grid, region, mesh):
    """Masked control samples as an (m+1, n) array, or None."""
    if u is None:
        return None
    if isinstance(u, ControlSignal):
        if u.mesh.m != mesh.m:
            raise ValueError("control signal lives on a different time mesh")
        vals = u.values
        if u.restricted:
            return vals
    else:
        vals = np.asarray(u, dtype=float)
        if vals.shape != (mesh.m + 1, grid.n):
            raise ValueError(
                f"control samples have shape {vals.shape}, expected {(mesh.m + 1, grid.n)}"
            )
    return np.where(region.mask(grid)[None, :], vals, 0.0)


def solve_forward(grid, region, potential, y0, u, mesh) -> Trajectory:
    """Run the controlled equation forward from y0 under control u.

    Parameters
    ----------
    grid, region, potential, mesh : problem data.
    y0 : array of n node values.
    u : ControlSignal, raw (m+1, n) samples, or None for the free equation.
        The control enters as chi_omega u; values outside the region are
        ignored.

    Returns
    -------
    Trajectory with m+1 states.  For a separable potential the a2(t) part is
    integrated exactly per step by the midpoint-quadrature integrating
    factor, so a2 contributes no splitting error.
    """
    y0 = np.asarray(y0, dtype=float)
    if y0.shape != (grid.n,):
        raise ValueError(f"initial state has shape {y0.shape}, expected ({grid.n},)")
    st = _stepper(grid, potential, mesh)
    v = _control_values(u, grid, region, mesh)
    dt = mesh.dt
    states = np.empty((mesh.m + 1, grid.n))
    states[0] = y0
    y = y0.copy()
    for j in range(mesh.m):
        if st.g[j] != 0.0:
            # integrating factor: the carried state and the left control
            # sample both pick up exp(-g_j) relative to the frozen-a1 step
            ef = math.exp(-st.g[j])
            rhs = ef * st.apply_C(j, y)
            if v is not None:
                rhs += 0.5 * dt * (ef * v[j] + v[j + 1])
        else:
            rhs = st.apply_C(j, y)
            if v is not None:
                rhs += 0.5 * dt * (v[j] + v[j + 1])
        y = st.solve_B(j, rhs)
        states[j + 1] = y
    return Trajectory(mesh, states)


def _transpose_states(st: _Stepper, z: np.ndarray) -> np.ndarray:
    """Plain transpose recursion psi^j = P_j psi^{j+1}, psi^m = z.

    For a separable potential this is run in the gauged variable (pure a1
    steps); the caller rescales by the integrating factor afterwards.
    """
    m, n = st.mesh.m, st.grid.n
    psi = np.empty((m + 1, n))
    psi[m] = z
    for j in range(m - 1, -1, -1):
        psi[j] = st.apply_P(j, psi[j + 1])
    return psi


def _average_nodes(psi: np.ndarray) -> np.ndarray:
    """Local node averaging that turns transpose states into the dual trajectory.

    phi^0 = (psi^0 + psi^1)/2, phi^j = (psi^{j-1} + 2 psi^j + psi^{j+1})/4,
    phi^m = (psi^{m-1} + psi^m)/2.  This is exactly the transpose of the
    trapezoid-weighted control injection of the forward scheme.
    """
    phi = np.empty_like(psi)
    phi[0] = 0.5 * (psi[0] + psi[1])
    phi[-1] = 0.5 * (psi[-2] + psi[-1])
    if psi.shape[0] > 2:
        phi[1:-1] = 0.25 * (psi[:-2] + 2.0 * psi[1:-1] + psi[2:])
    return phi


def solve_adjoint(grid, region, potential, z, mesh) -> Trajectory:
    """Solve the adjoint equation backward from terminal datum z.

    Returns the dual-consistent trajectory: the transpose recursion of the
    forward scheme followed by local node averaging.  It is a second-order
    accurate sample of the continuum adjoint at interior time nodes and
    satisfies the discrete duality identity against solve_forward exactly
    (see duality_residual).  The two end nodes are half-step averages, i.e.
    samples at t = dt/2 and t = T - dt/2 to leading order; that offset is
    what makes the trapezoid-weighted pairing exact rather than O(dt^2).

    region is accepted for signature symmetry and mask validation; the
    adjoint itself does not depend on it.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (grid.n,):
        raise ValueError(f"terminal datum has shape {z.shape}, expected ({grid.n},)")
    region.mask(grid)
    st = _stepper(grid, potential, mesh)
    psi = _transpose_states(st, z)
    phi = _average_nodes(psi)
    tail = st.tail_exponents()
    if np.any(tail != 0.0):
        phi *= np.exp(-tail)[:, None]
    return Trajectory(mesh, phi)


def _plain_adjoint_states(grid, potential, z, mesh) -> np.ndarray:
    """Unaveraged adjoint samples psi^j ~ phi(t_j), second order at every node.

    Used where a pointwise nodal value matters (observability numerators);
    the averaged trajectory from solve_adjoint is the one that pairs exactly
    with controls.
    """
    z = np.asarray(z, dtype=float)
    st = _stepper(grid, potential, mesh)
    psi = _transpose_states(st, z)
    tail = st.tail_exponents()
    if np.any(tail != 0.0):
        psi = psi * np.exp(-tail)[:, None]
    return psi


def _control_final_state(grid, region, potential, v, mesh, masked=False) -> np.ndarray:
    """Final state y(T; 0, v) without storing the trajectory (hot path)."""
    st = _stepper(grid, potential, mesh)
    if not masked:
        v = np.where(region.mask(grid)[None, :], v, 0.0)
    dt = mesh.dt
    y = np.zeros(grid.n)
    for j in range(mesh.m):
        if st.g[j] != 0.0:
            ef = math.exp(-st.g[j])
            rhs = ef * st.apply_C(j, y) + 0.5 * dt * (ef * v[j] + v[j + 1])
        else:
            rhs = st.apply_C(j, y) + 0.5 * dt * (v[j] + v[j + 1])
        y = st.solve_B(j, rhs)
    return y


def duality_residual(grid, region, potential, v, z, mesh) -> float:
    """Relative defect in the discrete duality identity.

    Computes both sides of

        sum_j w_j <v(t_j), chi_omega phi(t_j; T, z)>  =  <y(T; 0, v), z>

    and returns |lhs - rhs| scaled by |rhs| plus the quadratic-form size
    sum_j w_j ||chi_omega phi(t_j)||^2, which keeps the measure meaningful
    when the pairing itself nearly cancels.
    """
    vv = _control_values(v, grid, region, mesh)
    if vv is None:
        raise ValueError("duality residual needs a control signal")
    phi = solve_adjoint(grid, region, potential, z, mesh)
    mask = region.mask(grid)
    restricted = np.where(mask[None, :], phi.states, 0.0)
    w = mesh.weights
    lhs = grid.h * float(np.sum(w[:, None] * vv * restricted))
    yT = solve_forward(grid, region, potential, np.zeros(grid.n), vv, mesh).final_state
    rhs = grid.inner(yT, z)
    quad = grid.h * float(np.sum(w[:, None] * restricted**2))
    scale = abs(rhs) + quad
    if scale == 0.0:
        return abs(lhs - rhs)
    return abs(lhs - rhs) / scale


def bochner_norm(values, grid, mesh, r) -> float:
    """Time-space norm ( integral_0^T ||s(t)||^r dt )^{1/r} by trapezoid rule.

    values may be a Trajectory, a ControlSignal, or a raw (m+1, n) array.
    r is any exponent in [1, inf]; r = inf returns max_j ||s(t_j)||.
    """
    if isinstance(values, Trajectory):
        arr = values.states
    elif isinstance(values, ControlSignal):
        arr = values.values
    else:
        arr = np.asarray(values, dtype=float)
    if arr.shape != (mesh.m + 1, grid.n):
        raise ValueError(f"values have shape {arr.shape}, expected {(mesh.m + 1, grid.n)}")
    prof = math.sqrt(grid.h) * np.linalg.norm(arr, axis=1)
    if r == math.inf or r == np.inf:
        return float(prof.max())
    r = float(r)
    if r < 1.0:
        raise ValueError(f"exponent must satisfy r >= 1, got r={r}")
    if not math.isfinite(r):
        return float(prof.max())
    top = prof.max()
    if top == 0.0:
        return 0.0
    # factor out the peak to dodge overflow for large r
    return float(top * (np.sum(mesh.weights * (prof / top) ** r)) ** (1.0 / r))


def lowest_mode(grid: SpatialGrid, a1=None):
    """Lowest eigenpair of -Delta_h + diag(a1), h-normalized eigenvector.

    Returns (lam, vec) with vec normalized so grid.norm(vec) == 1.  Used for
    deterministic ascent starts and closed-form cross-checks.
    """
    from scipy.linalg import eigh_tridiagonal

    h = grid.h
    d = np.full(grid.n, 2.0 / h**2)
    if a1 is not None:
        d = d + np.asarray(a1, dtype=float) * np.ones(grid.n)
    e = np.full(grid.n - 1, -1.0 / h**2)
    vals, vecs = eigh_tridiagonal(d, e, select="i", select_range=(0, 0))
    vec = vecs[:, 0]
    vec = vec / grid.norm(vec)
    if vec[np.argmax(np.abs(vec))] < 0:
        vec = -vec
    return float(vals[0]), vec
