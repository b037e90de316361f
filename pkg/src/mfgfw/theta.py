"""Theta-scheme time splitting for the MFG system on the torus lattice.

Each backward value step solves an implicit heat equation with diffusion
``theta * sigma`` (the half step), then applies an explicit update carrying
the diffusion ``(1 - theta) * sigma``, the Hamiltonian at the half-step
gradient, and the coupling.  The forward mass step is the exact adjoint:
explicit transport/diffusion first, implicit heat solve second.  Half-step
values are internal; only their gradients are kept, because the feedback
control is read off them.

The implicit sub-step ``(Id - c dt Lap) Y = X`` is solved directly in one
space dimension (cyclic tridiagonal via a rank-one correction) and by the
damped-Jacobi contraction map in higher dimensions.  Both paths conserve the
total of ``X``, respect its min/max bounds, and do not increase its discrete
Lipschitz or semi-concavity constants.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, TextIO

import numpy as np
from scipy.linalg import solve_banded

from .grid import Grid, divergence_h, gradient_h, laplacian_h
from .kernel import BestResponse, DiscreteProblem

Array = np.ndarray

IMPLICIT_RESIDUAL_TOL = 1e-12


class CflError(ValueError):
    """The time step violates the explicit sub-step stability condition."""


class ContractionError(RuntimeError):
    """The fixed-point implicit solver exceeded its iteration cap."""


@dataclass(frozen=True)
class ThetaConfig:
    """Splitting parameter, viscosity, control truncation radius, and mesh."""

    theta: float
    sigma: float
    M: float
    grid: Grid

    def __post_init__(self) -> None:
        if not (0.5 < self.theta < 1.0):
            raise ValueError(f"theta must lie in (1/2, 1), got {self.theta}")
        if self.sigma <= 0:
            raise ValueError(f"viscosity must be positive, got {self.sigma}")
        if self.M <= 0:
            raise ValueError(f"truncation radius must be positive, got {self.M}")

    @property
    def max_dt(self) -> float:
        """Largest stable time step of the explicit sub-step."""
        g = self.grid
        return g.h * g.h / (2.0 * g.d * (1.0 - self.theta) * self.sigma)

    @property
    def bullet2_threshold(self) -> float:
        """Mesh bound ``h <= 2 (1 - theta) sigma / M`` (reported, not enforced)."""
        return 2.0 * (1.0 - self.theta) * self.sigma / self.M

    @property
    def positivity_velocity_bound(self) -> float:
        """Velocity level below which the explicit mass sub-step is monotone."""
        return 2.0 * (1.0 - self.theta) * self.sigma / self.grid.h

    def require_cfl(self) -> None:
        dt = self.grid.dt
        if dt > self.max_dt * (1.0 + 1e-9):
            raise CflError(
                f"dt = {dt:.6g} exceeds the stable step {self.max_dt:.6g} "
                f"(theta={self.theta}, sigma={self.sigma}, h={self.grid.h:.6g})")


@dataclass(frozen=True)
class CflReport:
    dt: float
    max_dt: float
    bullet1_ok: bool
    bullet1_margin: float
    h: float
    bullet2_threshold: float
    bullet2_ok: bool
    bullet2_margin: float


def cfl_check(cfg: ThetaConfig) -> CflReport:
    """Evaluate both mesh conditions; enforcement happens at solver entry."""
    dt, h = cfg.grid.dt, cfg.grid.h
    return CflReport(
        dt=dt, max_dt=cfg.max_dt,
        bullet1_ok=dt <= cfg.max_dt * (1.0 + 1e-9),
        bullet1_margin=cfg.max_dt - dt,
        h=h, bullet2_threshold=cfg.bullet2_threshold,
        bullet2_ok=h <= cfg.bullet2_threshold * (1.0 + 1e-9),
        bullet2_margin=cfg.bullet2_threshold - h,
    )


class SeparableHamiltonian:
    """Axiswise conjugate of a separable running cost with box truncation.

    Holds, per axis, the conjugate value ``H_i(t, p_i)`` and its derivative.
    Convexity of the axis costs makes each ``H_i`` convex with a nondecreasing
    derivative.  Costs may not depend on the state (see :mod:`mfgfw.kernel`).
    """

    def __init__(self, values: Sequence[Callable[[int, Array], Array]],
                 derivs: Sequence[Callable[[int, Array], Array]]):
        if len(values) != len(derivs):
            raise ValueError("one derivative per axis conjugate is required")
        self._values = list(values)
        self._derivs = list(derivs)

    @property
    def d(self) -> int:
        return len(self._values)

    def value(self, t: int, p: Array) -> Array:
        """Total conjugate ``sum_i H_i(t, p_i)`` for gradient rows ``p``."""
        out = np.zeros(p.shape[:-1], dtype=float)
        for i in range(self.d):
            out += self._values[i](t, p[..., i])
        return out

    def deriv(self, t: int, p: Array) -> Array:
        """Gradient ``(dH_i/dp_i)_i`` stacked on the last axis."""
        return np.stack([self._derivs[i](t, p[..., i]) for i in range(self.d)], axis=-1)

    @classmethod
    def quadratic(cls, M: float, d: int = 1) -> "SeparableHamiltonian":
        """Conjugate of ``v^2 / 2`` truncated to ``|v| <= M`` per axis.

        The inner maximizer is the clamp of the unconstrained one, so
        ``H(p) = -p v* - v*^2 / 2`` with ``v* = clamp(-p, -M, M)`` and
        ``H_p = -v*``.
        """

        def value(t: int, p: Array) -> Array:
            vstar = np.clip(-p, -M, M)
            return -p * vstar - 0.5 * vstar * vstar

        def deriv(t: int, p: Array) -> Array:
            return -np.clip(-p, -M, M)

        return cls([value] * d, [deriv] * d)

    @classmethod
    def from_axis_costs(cls, costs: Sequence[Callable[[int, Array], Array]],
                        M: float, resolution: int = 4001) -> "SeparableHamiltonian":
        """Numeric conjugates by scan over ``[-M, M]``, for oracle comparisons."""
        v_grid = np.linspace(-M, M, resolution)

        def make(cost):
            def value(t: int, p: Array) -> Array:
                table = -np.outer(p, v_grid) - cost(t, v_grid)[None, :]
                return np.max(table, axis=1).reshape(np.shape(p))

            def deriv(t: int, p: Array) -> Array:
                flat = np.atleast_1d(np.asarray(p, dtype=float)).ravel()
                table = -np.outer(flat, v_grid) - cost(t, v_grid)[None, :]
                best = v_grid[np.argmax(table, axis=1)]
                return (-best).reshape(np.shape(p))

            return value, deriv

        pairs = [make(c) for c in costs]
        return cls([p[0] for p in pairs], [p[1] for p in pairs])


def _cyclic_tridiagonal_solve(gamma: float, x: Array) -> Array:
    """Solve ``(1 + 2 gamma) y_i - gamma (y_{i-1} + y_{i+1}) = x_i`` on a ring."""
    n = x.shape[0]
    if n == 1:
        return x.copy()
    if n == 2:
        # both neighbors coincide, so the off-diagonal weight doubles
        a, b = 1.0 + 2.0 * gamma, -2.0 * gamma
        det = a * a - b * b
        return np.array([(a * x[0] - b * x[1]) / det, (a * x[1] - b * x[0]) / det])
    diag = np.full(n, 1.0 + 2.0 * gamma)
    off = -gamma
    # rank-one (Sherman-Morrison) removal of the periodic corners
    anchor = -diag[0]
    diag_mod = diag.copy()
    diag_mod[0] -= anchor
    diag_mod[-1] -= off * off / anchor
    ab = np.zeros((3, n))
    ab[0, 1:] = off
    ab[1] = diag_mod
    ab[2, :-1] = off
    u = np.zeros(n)
    u[0], u[-1] = anchor, off
    sol = solve_banded((1, 1), ab, np.column_stack([x, u]))
    y, z = sol[:, 0], sol[:, 1]
    v_dot_y = y[0] + (off / anchor) * y[-1]
    v_dot_z = z[0] + (off / anchor) * z[-1]
    return y - z * (v_dot_y / (1.0 + v_dot_z))


def _contraction_solve(x: Array, gamma: float, g: Grid) -> Array:
    denom = 1.0 + 2.0 * g.d * gamma
    cap = int(100 * (1.0 + 2.0 * g.d * gamma)) + 1
    target = IMPLICIT_RESIDUAL_TOL * float(np.max(np.abs(x)))
    if target == 0.0:
        return np.zeros_like(x)
    y = x.copy()
    for _ in range(cap):
        neighbors = np.zeros_like(y)
        for axis in range(g.d):
            neighbors += np.roll(y, 1, axis=axis) + np.roll(y, -1, axis=axis)
        y = (x + gamma * neighbors) / denom
        residual = denom * y - gamma * sum(
            np.roll(y, 1, axis=ax) + np.roll(y, -1, axis=ax) for ax in range(g.d)) - x
        if float(np.max(np.abs(residual))) <= target:
            return y
    raise ContractionError(
        f"implicit heat solve did not reach residual {target:.3e} in {cap} iterations")


def implicit_heat_solve(x: Array, c: float, cfg: ThetaConfig) -> Array:
    """Solve ``(Id - c dt Lap_h) Y = X`` on one spatial slice.

    ``c`` is the diffusion coefficient of the sub-step (``theta * sigma`` in
    the scheme).  The result keeps the total, the bounds, and the Lipschitz
    and semi-concavity constants of ``X``.
    """
    if c < 0:
        raise ValueError(f"diffusion coefficient must be >= 0, got {c}")
    g = cfg.grid
    gamma = c * g.dt / (g.h * g.h)
    if gamma == 0.0:
        return np.asarray(x, dtype=float).copy()
    if g.d == 1:
        return _cyclic_tridiagonal_solve(gamma, np.asarray(x, dtype=float))
    return _contraction_solve(np.asarray(x, dtype=float), gamma, g)


def hjb_theta(problem: DiscreteProblem, cfg: ThetaConfig,
              hamiltonian: SeparableHamiltonian, m: Array) -> tuple[Array, Array]:
    """Backward value sweep; returns ``u`` on (T+1) slices and the cached
    half-step gradients used by :func:`v_theta`."""
    cfg.require_cfl()
    g = cfg.grid
    T, n, dt = problem.T, g.n_points, g.dt
    explicit = (1.0 - cfg.theta) * cfg.sigma * dt
    u = np.empty((T + 1, n))
    u[T] = problem.g
    grads = np.empty((T, n, g.d))
    for t in range(T - 1, -1, -1):
        u_half = implicit_heat_solve(u[t + 1].reshape(g.shape), cfg.theta * cfg.sigma, cfg)
        grad = gradient_h(u_half, g).reshape(n, g.d)
        lap = laplacian_h(u_half, g)
        h_vals = hamiltonian.value(t, grad)
        u[t] = (u_half + explicit * lap).ravel() + dt * (problem.f(t, m[t]) - h_vals)
        grads[t] = grad
    return u, grads


def v_theta(cfg: ThetaConfig, hamiltonian: SeparableHamiltonian,
            grads: Array) -> Array:
    """Feedback control ``v = -H_p`` at the cached half-step gradients."""
    T = grads.shape[0]
    v = np.empty_like(grads)
    for t in range(T):
        v[t] = -hamiltonian.deriv(t, grads[t])
    return v


def fp_theta(cfg: ThetaConfig, v: Array, m0: Array) -> Array:
    """Forward mass sweep under the control field ``v``.

    Mass is conserved at every step (both sub-steps are divergence-form).
    Nonnegativity additionally requires the velocity to stay below
    ``positivity_velocity_bound``; this is checked a posteriori by callers,
    not here.
    """
    cfg.require_cfl()
    g = cfg.grid
    max_v = float(np.max(np.abs(v))) if v.size else 0.0
    if max_v > cfg.M * (1.0 + 1e-12) + 1e-12:
        raise ValueError(
            f"control magnitude {max_v:.6g} exceeds truncation radius {cfg.M}")
    T, n = v.shape[0], g.n_points
    explicit = (1.0 - cfg.theta) * cfg.sigma * g.dt
    m = np.empty((T + 1, n))
    m[0] = m0
    for t in range(T):
        mt = m[t].reshape(g.shape)
        w = v[t].reshape(g.shape + (g.d,)) * mt[..., None]
        m_half = mt + explicit * laplacian_h(mt, g) - g.dt * divergence_h(w, g)
        m[t + 1] = implicit_heat_solve(m_half, cfg.theta * cfg.sigma, cfg).ravel()
    return m


class ThetaScheme:
    """Best-response provider backed by the theta-scheme maps."""

    def __init__(self, problem: DiscreteProblem, cfg: ThetaConfig,
                 hamiltonian: SeparableHamiltonian):
        cfg.require_cfl()
        if cfg.grid.n_points != problem.n_states or cfg.grid.T != problem.T:
            raise ValueError("problem data does not match the mesh")
        self.problem = problem
        self.cfg = cfg
        self.hamiltonian = hamiltonian

    @property
    def positivity_velocity_bound(self) -> float:
        return self.cfg.positivity_velocity_bound

    def best_response(self, m: Array) -> BestResponse:
        u, grads = hjb_theta(self.problem, self.cfg, self.hamiltonian, m)
        v = v_theta(self.cfg, self.hamiltonian, grads)
        m_br = fp_theta(self.cfg, v, self.problem.m0)
        w = m_br[:-1, :, None] * v
        return BestResponse(m=m_br, w=w, v=v, u=u)


# ---------------------------------------------------------------------------
# discretization of continuous data
# ---------------------------------------------------------------------------

def cell_average(func: Callable[[Array], Array], g: Grid, q: int) -> Array:
    """Average of ``func`` over every lattice cell, composite midpoint rule.

    ``func`` maps an ``(k, d)`` array of positions to ``k`` values; each cell
    is sampled at ``q**d`` midpoints.
    """
    if q < 1:
        raise ValueError(f"quadrature order must be >= 1, got {q}")
    pts = g.points()
    offsets_1d = ((np.arange(q) + 0.5) / q - 0.5) * g.h
    mesh = np.meshgrid(*([offsets_1d] * g.d), indexing="ij")
    offsets = np.stack([m.ravel() for m in mesh], axis=-1)
    acc = np.zeros(g.n_points)
    for off in offsets:
        acc += func(np.mod(pts + off, 1.0))
    return acc / offsets.shape[0]


def integrate_cells(func: Callable[[Array], Array], g: Grid, q: int) -> Array:
    """Cell integrals of a density (cell average times cell volume)."""
    return cell_average(func, g, q) * g.h**g.d


def r_h(m: Array, g: Grid) -> Callable[[Array], Array]:
    """Piecewise-constant density reconstruction ``y -> m(cell of y) / h^d``."""
    m = np.asarray(m, dtype=float)

    def density(y: Array) -> Array:
        idx = np.mod(np.floor(y / g.h + 0.5).astype(int), g.N)
        flat = np.ravel_multi_index(tuple(idx[:, i] for i in range(g.d)), g.shape)
        return m[flat] / g.h**g.d

    return density


def discretize_initial(m0c: Callable[[Array], Array], g: Grid,
                       q: int = 8) -> tuple[Array, float]:
    """Cell-integrate a continuous initial density and renormalize to mass 1.

    Returns the mass vector and the pre-normalization defect ``|total - 1|``.
    """
    raw = integrate_cells(m0c, g, q)
    total = float(raw.sum())
    if total <= 0:
        raise ValueError(f"initial density integrates to {total:.3e} <= 0")
    return raw / total, abs(total - 1.0)


def discretize_terminal(gc: Callable[[Array], Array], g: Grid) -> Array:
    """Pointwise sampling of the terminal cost at the lattice points."""
    return np.asarray(gc(g.points()), dtype=float)


def discretize_coupling(fc: Callable[[float, Array, Callable[[Array], Array]], Array],
                        g: Grid, q: int = 8) -> Callable[[int, Array], Array]:
    """Cell-averaged coupling acting on the reconstructed density.

    ``fc(time, Y, density)`` must evaluate the continuous coupling at the
    positions ``Y`` against the density callable.  The returned discrete
    coupling maps ``(t, m)`` to values at every lattice point.
    """

    def f(t: int, m: Array) -> Array:
        density = r_h(m, g)
        return cell_average(lambda pts: fc(t * g.dt, pts, density), g, q)

    return f


def truncated_running_cost(lc: Callable[[float, Array], Array], M: float,
                           dt: float) -> Callable[[int, Array], Array]:
    """Restrict a continuous running cost to the ball of radius ``M``.

    ``lc(time, V)`` is evaluated at the physical time ``t * dt``; controls
    outside the ball cost ``+inf`` (tiny relative slack against rounding).
    """
    limit = M * (1.0 + 1e-12) + 1e-15

    def ell(t: int, v: Array) -> Array:
        v = np.asarray(v, dtype=float)
        norms = np.sqrt(np.sum(v * v, axis=-1))
        vals = np.asarray(lc(t * dt, v), dtype=float)
        return np.where(norms <= limit, vals, np.inf)

    return ell


def discretize_problem(lc: Callable[[float, Array], Array],
                       fc: Callable[[float, Array, Callable[[Array], Array]], Array],
                       gc: Callable[[Array], Array],
                       m0c: Callable[[Array], Array],
                       cfg: ThetaConfig, q: int = 8,
                       alpha: float = 1.0, coupling_lipschitz: float = 0.0,
                       minimizer=None) -> DiscreteProblem:
    """Assemble a discrete problem from continuous data on the given mesh.

    Running cost truncated at the configuration radius, terminal cost sampled
    pointwise, initial mass cell-integrated and renormalized, coupling
    cell-averaged against the reconstructed density.  The coupling modulus is
    rescaled by ``h^(-d/2)``, matching how spatial l2 norms of mass vectors
    shrink with the cell volume.
    """
    g = cfg.grid
    m0, _ = discretize_initial(m0c, g, q)
    return DiscreteProblem(
        T=g.T, d=g.d,
        ell=truncated_running_cost(lc, cfg.M, g.dt),
        f=discretize_coupling(fc, g, q),
        g=discretize_terminal(gc, g),
        m0=m0,
        D=cfg.M, alpha=alpha,
        L_f=coupling_lipschitz * g.h ** (-g.d / 2.0),
        minimizer=minimizer,
    )


# ---------------------------------------------------------------------------
# field dump format (consumed by the plotting scripts)
# ---------------------------------------------------------------------------

FIELD_HEADER = ("d", "N", "T", "dt", "h", "kind")


def write_field(fh: TextIO, curve: Array, g: Grid, kind: str) -> None:
    """Write a time-major field as CSV: a two-line header, then one row per
    time slice in lexicographic lattice order (vector components interleaved
    per point)."""
    fh.write(",".join(FIELD_HEADER) + "\n")
    fh.write(f"{g.d},{g.N},{g.T},{g.dt!r},{g.h!r},{kind}\n")
    rows = curve.reshape(curve.shape[0], -1)
    for row in rows:
        fh.write(",".join(repr(float(x)) for x in row) + "\n")


def read_field(fh: TextIO) -> tuple[dict, Array]:
    """Inverse of :func:`write_field`; returns the header dict and the rows."""
    names = fh.readline().strip().split(",")
    values = fh.readline().strip().split(",")
    if names != list(FIELD_HEADER):
        raise ValueError(f"unexpected field header {names}")
    meta = dict(zip(names, values))
    for key in ("d", "N", "T"):
        meta[key] = int(meta[key])
    for key in ("dt", "h"):
        meta[key] = float(meta[key])
    data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return meta, data
