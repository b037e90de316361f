"""One-dimensional congestion benchmark on the unit torus.

Agents start in a bump around ``x = 0.5``; the terminal cost rewards reaching
the identified endpoints 0 and 1; a nonlocal congestion coupling penalizes
density inside the congestion-sensitive zone [0.2, 0.3] + [0.7, 0.8].  The
running cost is quadratic, so the scheme's Hamiltonian and the best-response
control minimizer are both closed-form.

Data is built from smooth compactly supported plateaus: ``varphi`` is the
standard bump scaled to height ``A exp(-1)`` and half-width ``1/k``, and
``phi`` extends it with a flat top between two abscissas.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import quad

from .grid import Grid
from .kernel import (DiscreteProblem, quadratic_ball_minimizer,
                     quadratic_running_cost)
from .gfw import GfwConfig, IterationRecord, SolveResult, solve
from .potential import PotentialCoupling
from .theta import (SeparableHamiltonian, ThetaConfig, ThetaScheme,
                    cell_average, discretize_initial, discretize_terminal)

Array = np.ndarray

CONGESTION_ZONE = ((0.2, 0.3), (0.7, 0.8))


def varphi(A: float, k: float, x) -> Array | float:
    """Bump ``A exp(-1 / (1 - (k x)^2))`` inside ``|x| < 1/k``, zero outside."""
    arr = np.asarray(x, dtype=float)
    s = k * arr
    out = np.zeros_like(arr)
    inside = np.abs(s) < 1.0
    out[inside] = A * np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out if arr.ndim else float(out)


def phi(A: float, k: float, l1: float, l2: float, x) -> Array | float:
    """Smooth plateau: height ``A exp(-1)`` on [l1, l2] with bump tails."""
    if not (0.0 < l1 < l2 < 1.0):
        raise ValueError(f"need 0 < l1 < l2 < 1, got l1={l1}, l2={l2}")
    arr = np.asarray(x, dtype=float)
    out = np.where(
        arr < l1, varphi(A, k, arr - l1),
        np.where(arr > l2, varphi(A, k, arr - l2), A * np.exp(-1.0)))
    return out if arr.ndim else float(out)


@lru_cache(maxsize=None)
def _bump_half_integral() -> float:
    # integral of exp(-1/(1-u^2)) over [0, 1]
    value, _ = quad(lambda u: np.exp(-1.0 / (1.0 - u * u)), 0.0, 1.0)
    return value


def plateau_l1_norm(A: float, k: float, l1: float, l2: float) -> float:
    """Exact L1 norm of :func:`phi`: plateau area plus two bump tails."""
    return A * (np.exp(-1.0) * (l2 - l1) + 2.0 * _bump_half_integral() / k)


@dataclass(frozen=True)
class BenchParams:
    a1: float = 2.0
    a2: float = 20.0
    k0: float = 10.0
    k1: float = 3.0
    k2: float = 20.0
    sigma: float = 0.02
    theta: float = 0.8
    N: int = 100
    T: int = 80
    M: Optional[float] = None  # None: largest monotone radius 2 (1-theta) sigma / h
    L_f_c: Optional[float] = None  # None: the conservative bound a2^2 k2 / e
    q: int = 8

    @property
    def coupling_lipschitz(self) -> float:
        if self.L_f_c is not None:
            return self.L_f_c
        return self.a2 * self.a2 * self.k2 / np.e

    def effective_M(self) -> float:
        """Control truncation radius actually used.

        The default saturates the mesh condition ``h <= 2 (1-theta) sigma / M``:
        it is the largest radius for which the explicit sub-steps are monotone,
        which keeps the mass nonnegative and the backward sweep stable.  The
        unconstrained control magnitudes of this data set (about 4.8, from the
        terminal-cost slope) destabilize the explicit sub-step on coarse
        meshes, so a larger explicit ``M`` is honored but at the caller's risk
        (the a-posteriori velocity check in the manifest records the outcome).
        """
        if self.M is not None:
            return self.M
        return 2.0 * (1.0 - self.theta) * self.sigma * self.N


def initial_density(params: BenchParams, x) -> Array | float:
    """Normalized start bump concentrated around 0.5."""
    norm = plateau_l1_norm(1.0, params.k0, 0.49, 0.51)
    return phi(1.0, params.k0, 0.49, 0.51, x) / norm


def terminal_cost(params: BenchParams, x) -> Array | float:
    """Cost of the final position; vanishes smoothly at the endpoints."""
    return phi(params.a1, params.k1, 1.0 / params.k1, 1.0 - 1.0 / params.k1, x)


def congestion_profile(params: BenchParams, x) -> Array | float:
    """Spatial weight of the nonlocal congestion term (two plateaus)."""
    return (phi(params.a2, params.k2, 0.24, 0.25, x)
            + phi(params.a2, params.k2, 0.75, 0.76, x))


@dataclass
class Benchmark:
    params: BenchParams
    grid: Grid
    cfg: ThetaConfig
    problem: DiscreteProblem
    coupling: PotentialCoupling
    hamiltonian: SeparableHamiltonian
    hbar: Array
    m0_defect: float

    def scheme(self) -> ThetaScheme:
        return ThetaScheme(self.problem, self.cfg, self.hamiltonian)

    def initial_curve(self) -> Array:
        return self.problem.initial_curve()


def build_benchmark(params: BenchParams) -> Benchmark:
    """Assemble the discrete problem, coupling, and scheme configuration.

    The coupling is separable in space, so its cell-averaged discretization
    collapses to the closed form ``f(t, x, m) = hbar(x) <hbar, m>`` with
    ``hbar`` the cell average of the congestion profile, and the potential is
    ``F(t, m) = <hbar, m>^2 / 2`` exactly.
    """
    grid = Grid(d=1, N=params.N, T=params.T)
    m_radius = params.effective_M()
    cfg = ThetaConfig(theta=params.theta, sigma=params.sigma, M=m_radius, grid=grid)
    cfg.require_cfl()

    if params.a2 == 0.0:
        hbar = np.zeros(grid.n_points)
    else:
        hbar = cell_average(lambda pts: congestion_profile(params, pts[:, 0]),
                            grid, params.q)

    def f(t: int, m: Array) -> Array:
        return hbar * (hbar @ m)

    def big_f(t: int, m: Array) -> float:
        return 0.5 * float(hbar @ m) ** 2

    m0, defect = discretize_initial(
        lambda pts: initial_density(params, pts[:, 0]), grid, params.q)
    g = discretize_terminal(lambda pts: terminal_cost(params, pts[:, 0]), grid)

    problem = DiscreteProblem(
        T=params.T, d=1,
        ell=quadratic_running_cost(m_radius),
        f=f, g=g, m0=m0,
        D=m_radius, alpha=1.0,
        L_f=params.coupling_lipschitz * grid.h ** (-grid.d / 2.0),
        minimizer=quadratic_ball_minimizer(m_radius),
    )
    coupling = PotentialCoupling(f=f, F=big_f)
    hamiltonian = SeparableHamiltonian.quadratic(m_radius, d=1)
    return Benchmark(params=params, grid=grid, cfg=cfg, problem=problem,
                     coupling=coupling, hamiltonian=hamiltonian, hbar=hbar,
                     m0_defect=defect)


def without_coupling(params: BenchParams) -> BenchParams:
    """Same data with the congestion term removed (pure optimal control)."""
    return replace(params, a2=0.0, L_f_c=0.0)


def zone_mass(m_curve: Array, grid: Grid,
              zones: Sequence[tuple[float, float]] = CONGESTION_ZONE) -> float:
    """Time-integrated mass inside the given coordinate zones."""
    x = grid.points()[:, 0]
    mask = np.zeros(grid.n_points, dtype=bool)
    for lo, hi in zones:
        mask |= (x >= lo - 1e-12) & (x <= hi + 1e-12)
    return grid.dt * float(m_curve[:, mask].sum())


@dataclass
class MeshResult:
    N: int
    T: int
    h: float
    dt: float
    records: list[IterationRecord]
    result: SolveResult
    k_star: int
    final_gamma_bar: float


def first_k_below(records: list[IterationRecord], tol: float,
                  relative: bool = True) -> int:
    """First iteration whose gap drops to the tolerance, or -1 if none does."""
    if not records:
        return -1
    threshold = tol * records[0].gamma_bar if relative else tol
    for rec in records:
        if rec.gamma_bar <= threshold:
            return rec.k
    return -1


def mesh_sweep(params: BenchParams, meshes: Sequence[tuple[int, int]],
               config: GfwConfig, k_star_tol: float = 1e-4,
               k_star_relative: bool = True, on_mesh=None) -> list[MeshResult]:
    """Run the same experiment on several meshes with one shared configuration.

    Solves are independent of each other (they may run concurrently); this
    driver runs them in sequence for determinism.
    """
    out = []
    for n_space, n_time in meshes:
        mesh_params = replace(params, N=n_space, T=n_time)
        bench = build_benchmark(mesh_params)
        result = solve(bench.problem, bench.scheme(), bench.coupling, config)
        mesh_result = MeshResult(
            N=n_space, T=n_time, h=bench.grid.h, dt=bench.grid.dt,
            records=result.records, result=result,
            k_star=first_k_below(result.records, k_star_tol, k_star_relative),
            final_gamma_bar=result.records[-1].gamma_bar if result.records else np.nan,
        )
        out.append(mesh_result)
        if on_mesh is not None:
            on_mesh(mesh_result)
    return out


@dataclass(frozen=True)
class Preset:
    params: BenchParams
    meshes: Optional[tuple[tuple[int, int], ...]] = None


PRESETS = {
    "desk": Preset(params=BenchParams(N=100, T=80)),
    "paper-full": Preset(params=BenchParams(N=300, T=720)),
    "desk-sweep": Preset(params=BenchParams(N=100, T=80, M=0.4),
                         meshes=((50, 20), (100, 80), (200, 320))),
    "paper-sweep": Preset(params=BenchParams(N=250, T=500, M=2.0),
                          meshes=((250, 500), (500, 2000), (1000, 8000))),
}
