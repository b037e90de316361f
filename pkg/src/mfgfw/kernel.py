"""Generic discrete mean field game driven by an affine transition kernel.

The one-step transition probability of an agent at ``(t, x)`` using control
``omega`` is affine in the control::

    pi(t, x, y, omega) = pi0(t, x, y) + dt * <pi1(t, x, y), omega>

Backward dynamic programming gives the value function, its argmin gives the
feedback control, and the forward pushforward gives the induced distribution.
Kernels are stored densely, which limits this module to small state spaces;
it doubles as the brute-force oracle layer for the production scheme.

Running costs are vectorized over the control argument and may not depend on
the state: ``ell(t, V)`` maps an ``(k, d)`` array of controls to ``k`` values,
returning ``+inf`` outside the control ball.  All problem instances in this
package have state-independent running costs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .potential import PotentialCoupling

Array = np.ndarray

KERNEL_TOL = 1e-12


class KernelValidationError(ValueError):
    """A transition kernel violates one of its structural conditions."""


class MinimizerError(RuntimeError):
    """The control minimization found no finite value on the control ball."""


@dataclass(frozen=True)
class Kernel:
    """Dense affine transition kernel on ``T`` steps and ``n`` states.

    ``pi0`` has shape ``(T, n, n)`` and rows in the probability simplex;
    ``pi1`` has shape ``(T, n, n, d)`` with rows summing to zero per component
    and satisfying ``pi0 >= dt * control_bound * |pi1|`` pointwise, so that
    the affine map stays a probability for every admissible control.
    """

    pi0: Array
    pi1: Array
    dt: float
    control_bound: float

    def __post_init__(self) -> None:
        pi0, pi1 = np.asarray(self.pi0), np.asarray(self.pi1)
        if pi0.ndim != 3 or pi0.shape[1] != pi0.shape[2]:
            raise KernelValidationError(f"pi0 must be (T, n, n), got {pi0.shape}")
        if pi1.shape[:3] != pi0.shape or pi1.ndim != 4:
            raise KernelValidationError(
                f"pi1 must be (T, n, n, d) matching pi0, got {pi1.shape}")
        if np.min(pi0) < -KERNEL_TOL:
            raise KernelValidationError(f"pi0 has negative entries (min {pi0.min():.3e})")
        row_defect = np.max(np.abs(pi0.sum(axis=2) - 1.0))
        if row_defect > KERNEL_TOL:
            raise KernelValidationError(f"pi0 rows do not sum to 1 (defect {row_defect:.3e})")
        drift_defect = np.max(np.abs(pi1.sum(axis=2)))
        if drift_defect > KERNEL_TOL:
            raise KernelValidationError(f"pi1 rows do not sum to 0 (defect {drift_defect:.3e})")
        margin = pi0 - self.dt * self.control_bound * np.linalg.norm(pi1, axis=3)
        if np.min(margin) < -KERNEL_TOL:
            raise KernelValidationError(
                f"pi0 < dt * D * |pi1| somewhere (worst margin {margin.min():.3e})")

    @property
    def T(self) -> int:
        return self.pi0.shape[0]

    @property
    def n_states(self) -> int:
        return self.pi0.shape[1]

    @property
    def d(self) -> int:
        return self.pi1.shape[3]


@dataclass
class DiscreteProblem:
    """Data of a discrete MFG: costs, initial mass, and structural constants.

    ``minimizer(t, Q)`` must return, for each row ``q`` of ``Q``, the argmin of
    ``ell(t, omega) + <q, omega>`` over the control ball; when absent the
    module falls back to a grid search over the ball (resolution
    ``control_resolution`` per axis) followed by one local quadratic
    refinement pass.
    """

    T: int
    d: int
    ell: Callable[[int, Array], Array]
    f: Callable[[int, Array], Array]
    g: Array
    m0: Array
    D: float
    alpha: float
    L_f: float
    minimizer: Optional[Callable[[int, Array], Array]] = None
    control_resolution: Optional[float] = None

    def __post_init__(self) -> None:
        self.g = np.asarray(self.g, dtype=float)
        self.m0 = np.asarray(self.m0, dtype=float)
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.D <= 0 or self.alpha <= 0:
            raise ValueError("control bound and convexity modulus must be positive")
        if np.min(self.m0) < -KERNEL_TOL or abs(self.m0.sum() - 1.0) > 1e-10:
            raise ValueError("m0 must be a probability vector")

    @property
    def n_states(self) -> int:
        return self.g.shape[0]

    @property
    def dt(self) -> float:
        return 1.0 / self.T

    def initial_curve(self) -> Array:
        """Constant-in-time prediction used to start the best-response loop."""
        return np.repeat(self.m0[None, :], self.T + 1, axis=0)


@dataclass(frozen=True)
class BestResponse:
    """Output of one best-response evaluation."""

    m: Array  # (T + 1, n)
    w: Array  # (T, n, d)
    v: Array  # (T, n, d)
    u: Array  # (T + 1, n)


def quadratic_running_cost(bound: float) -> Callable[[int, Array], Array]:
    """``|v|^2 / 2`` on the closed ball of the given radius, ``+inf`` outside.

    The radius check carries a tiny relative slack so that controls that sit
    exactly on the boundary survive rounding in convex combinations.
    """
    limit = bound * (1.0 + 1e-12) + 1e-15

    def ell(t: int, v: Array) -> Array:
        v = np.asarray(v, dtype=float)
        norms = np.sqrt(np.sum(v * v, axis=-1))
        vals = 0.5 * norms * norms
        return np.where(norms <= limit, vals, np.inf)

    return ell


def quadratic_ball_minimizer(bound: float) -> Callable[[int, Array], Array]:
    """Closed-form argmin of ``|w|^2/2 + <q, w>`` over the ball: projected ``-q``."""

    def minimize(t: int, q: Array) -> Array:
        q = np.asarray(q, dtype=float)
        norms = np.sqrt(np.sum(q * q, axis=-1))
        scale = np.ones_like(norms)
        over = norms > bound
        scale[over] = bound / norms[over]
        return -q * scale[:, None]

    return minimize


def ball_candidates(bound: float, d: int, step: float) -> Array:
    """Lexicographically ordered grid of controls covering the closed ball."""
    axis = np.arange(-bound, bound + 0.5 * step, step)
    if axis.size == 0 or axis[-1] < bound - 1e-12:
        axis = np.append(axis, bound)
    if d == 1:
        return axis[:, None]
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    keep = np.sqrt(np.sum(pts * pts, axis=1)) <= bound * (1.0 + 1e-12)
    return pts[keep]


def grid_search_minimize(problem: DiscreteProblem, t: int, q: Array,
                         resolution: Optional[float] = None) -> Array:
    """Brute-force argmin of ``ell(t, w) + <q, w>`` per row of ``q``.

    Scans a lexicographic grid over the control ball (ties resolved toward the
    lexicographically smallest candidate by the scan order), then improves the
    winner with one per-axis parabola fit through its grid neighbors.
    """
    step = resolution if resolution is not None else (
        problem.control_resolution if problem.control_resolution is not None
        else problem.D / 1000.0)
    cand = ball_candidates(problem.D, problem.d, step)
    ell_vals = problem.ell(t, cand)
    scores = ell_vals[None, :] + q @ cand.T
    if not np.all(np.isfinite(np.min(scores, axis=1))):
        bad = int(np.argmin(np.isfinite(np.min(scores, axis=1))))
        raise MinimizerError(
            f"no finite value on the control ball at t={t}, state={bad}")
    idx = np.argmin(scores, axis=1)
    best = cand[idx].copy()

    def objective(points: Array) -> Array:
        return problem.ell(t, points) + np.sum(q * points, axis=1)

    best_val = objective(best)
    for axis in range(problem.d):
        lo = best.copy()
        lo[:, axis] -= step
        hi = best.copy()
        hi[:, axis] += step
        f_lo, f_hi = objective(lo), objective(hi)
        denom = f_lo - 2.0 * best_val + f_hi
        usable = np.isfinite(f_lo) & np.isfinite(f_hi) & (denom > 0)
        shift = np.zeros_like(best_val)
        shift[usable] = 0.5 * step * (f_lo[usable] - f_hi[usable]) / denom[usable]
        shift = np.clip(shift, -step, step)
        trial = best.copy()
        trial[:, axis] += shift
        norms = np.sqrt(np.sum(trial * trial, axis=1))
        over = norms > problem.D
        if np.any(over):
            trial[over] *= (problem.D / norms[over])[:, None]
        f_trial = objective(trial)
        better = f_trial < best_val
        best[better] = trial[better]
        best_val[better] = f_trial[better]
    return best


def _minimize_controls(problem: DiscreteProblem, t: int, q: Array) -> Array:
    if problem.minimizer is not None:
        return problem.minimizer(t, q)
    return grid_search_minimize(problem, t, q)


def transition(kernel: Kernel, t: int, x: int, omega: Array) -> Array:
    """Distribution over successor states for one agent and control."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if np.linalg.norm(omega) > kernel.control_bound * (1.0 + 1e-12):
        raise ValueError(
            f"control norm {np.linalg.norm(omega):.6g} exceeds bound {kernel.control_bound}")
    return kernel.pi0[t, x] + kernel.dt * (kernel.pi1[t, x] @ omega)


def _expectation_terms(kernel: Kernel, t: int, u_next: Array) -> tuple[Array, Array]:
    # decompose sum_y pi(t,x,y,w) u(y) = b(x) + dt * <q(x), w>
    b = kernel.pi0[t] @ u_next
    q = np.einsum("xyd,y->xd", kernel.pi1[t], u_next)
    return b, q


def hjb_solve(problem: DiscreteProblem, kernel: Kernel, m: Array) -> Array:
    """Backward dynamic programming for the value function, shape (T+1, n)."""
    T, n = problem.T, problem.n_states
    u = np.empty((T + 1, n))
    u[T] = problem.g
    dt = problem.dt
    for t in range(T - 1, -1, -1):
        b, q = _expectation_terms(kernel, t, u[t + 1])
        controls = _minimize_controls(problem, t, q)
        run = problem.ell(t, controls) + np.sum(q * controls, axis=1)
        if not np.all(np.isfinite(run)):
            bad = int(np.argmax(~np.isfinite(run)))
            raise MinimizerError(f"non-finite control value at t={t}, state={bad}")
        u[t] = dt * (problem.f(t, m[t]) + run) + b
    return u


def v_map(problem: DiscreteProblem, kernel: Kernel, u: Array) -> Array:
    """Feedback control field attaining the dynamic-programming minimum."""
    T, n = problem.T, problem.n_states
    v = np.empty((T, n, problem.d))
    for t in range(T):
        _, q = _expectation_terms(kernel, t, u[t + 1])
        v[t] = _minimize_controls(problem, t, q)
    return v


def fp_solve(kernel: Kernel, v: Array, m0: Array) -> Array:
    """Forward pushforward of the initial mass under the controlled kernel."""
    max_norm = float(np.max(np.sqrt(np.sum(v * v, axis=-1))))
    if max_norm > kernel.control_bound * (1.0 + 1e-12):
        raise ValueError(
            f"control field norm {max_norm:.6g} exceeds bound {kernel.control_bound}")
    T, n = kernel.T, kernel.n_states
    m = np.empty((T + 1, n))
    m[0] = m0
    for t in range(T):
        drift = np.einsum("xyd,xd->xy", kernel.pi1[t], v[t])
        m[t + 1] = (kernel.pi0[t] + kernel.dt * drift).T @ m[t]
    return m


def best_response(problem: DiscreteProblem, kernel: Kernel, m_prime: Array) -> BestResponse:
    """Optimal value/control/distribution against a predicted mass curve."""
    u = hjb_solve(problem, kernel, m_prime)
    v = v_map(problem, kernel, u)
    m = fp_solve(kernel, v, problem.m0)
    w = m[:-1, :, None] * v
    return BestResponse(m=m, w=w, v=v, u=u)


class KernelScheme:
    """Best-response provider backed by the dense kernel maps."""

    positivity_velocity_bound: Optional[float] = None

    def __init__(self, problem: DiscreteProblem, kernel: Kernel):
        if kernel.T != problem.T:
            raise ValueError("kernel and problem horizons differ")
        if kernel.n_states != problem.n_states:
            raise ValueError("kernel and problem state counts differ")
        self.problem = problem
        self.kernel = kernel

    def best_response(self, m: Array) -> BestResponse:
        return best_response(self.problem, self.kernel, m)


def random_kernel(rng: np.random.Generator, n: int, T: int, d: int,
                  control_bound: float) -> Kernel:
    """Seeded random kernel satisfying all structural conditions with margin."""
    dt = 1.0 / T
    pi0 = 0.7 * rng.dirichlet(np.ones(n), size=(T, n)) + 0.3 / n
    pi1 = rng.normal(size=(T, n, n, d))
    pi1 -= pi1.mean(axis=2, keepdims=True)
    norms = np.linalg.norm(pi1, axis=3)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = pi0 / (dt * control_bound * norms)
    ratio[~np.isfinite(ratio)] = np.inf
    scale = 0.9 * np.minimum(ratio.min(axis=2), 1e6)
    pi1 *= scale[:, :, None, None]
    return Kernel(pi0=pi0, pi1=pi1, dt=dt, control_bound=control_bound)


def congestion_instance(seed: int = 0, n: int = 3, T: int = 3,
                        control_bound: float = 1.0, coupling_scale: float = 0.4,
                        ) -> tuple[DiscreteProblem, Kernel, PotentialCoupling]:
    """Small kernel MFG with quadratic running cost and rank-one congestion.

    The coupling ``f(t, x, m) = h(x) <h, m>`` is monotone (a perfect square)
    and has the closed-form primitive ``F = <h, m>^2 / 2``; its Lipschitz
    modulus in the mass is exactly ``|h|_inf |h|_2``.
    """
    rng = np.random.default_rng(seed)
    kernel = random_kernel(rng, n, T, d=1, control_bound=control_bound)
    h = coupling_scale * rng.uniform(0.2, 1.0, size=n)
    g = rng.uniform(0.0, 1.0, size=n)
    m0 = rng.dirichlet(np.ones(n))

    def f(t: int, m: Array) -> Array:
        return h * (h @ m)

    def big_f(t: int, m: Array) -> float:
        return 0.5 * float(h @ m) ** 2

    problem = DiscreteProblem(
        T=T, d=1,
        ell=quadratic_running_cost(control_bound),
        f=f, g=g, m0=m0,
        D=control_bound, alpha=1.0,
        L_f=float(np.max(h) * np.linalg.norm(h)),
        minimizer=quadratic_ball_minimizer(control_bound),
    )
    coupling = PotentialCoupling(f=f, F=big_f)
    return problem, kernel, coupling
