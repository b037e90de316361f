"""Best-response (generalized Frank-Wolfe) iteration with diagnostics.

Each iteration computes the best response to the current mass prediction,
records the optimality surrogate ``gamma_bar`` (the linearized-cost gap to
the best response) and the squared distance ``delta_bar`` between the two
mass curves, then moves toward the best response by a convex combination.
The first move always uses stepsize 1, so the first iterate is the pure best
response of the initial prediction.

The iteration lives in the momentum variables ``(m, w)``; controls are
reconstructed only for diagnostics and never fed back into the dynamics.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, TextIO

import numpy as np

from .kernel import BestResponse
from .potential import (FlowPair, PotentialCoupling, cost_J_tilde,
                        descent_model_bound, gap_diagnostics)

Array = np.ndarray

STEPSIZE_RULES = ("open_loop", "line_search", "best_response", "fixed")

# below this squared distance the best response coincides with the iterate
DEGENERATE_DELTA = 1e-300


class DescentBoundError(RuntimeError):
    """The per-iteration descent bound failed while assertions were enabled."""

    def __init__(self, k: int, j_next: float, bound: float):
        super().__init__(
            f"descent bound violated at iteration {k}: "
            f"J_tilde(next) = {j_next!r} > bound {bound!r}")
        self.k = k


@dataclass(frozen=True)
class GfwConfig:
    stepsize_rule: str = "line_search"
    fixed_lambda: Optional[float] = None
    max_iters: int = 1000
    tol_gamma_bar: float = 0.0
    tol_relative: bool = False  # interpret the tolerance relative to gamma_bar at k=1
    assert_descent: bool = False
    record_fields_every: int = 0

    def __post_init__(self) -> None:
        if self.stepsize_rule not in STEPSIZE_RULES:
            raise ValueError(f"unknown stepsize rule {self.stepsize_rule!r}")
        if self.stepsize_rule == "fixed":
            lam = self.fixed_lambda
            if lam is None or not (0.0 < lam <= 1.0):
                raise ValueError(f"fixed stepsize must lie in (0, 1], got {lam}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol_gamma_bar < 0:
            raise ValueError("tolerance must be >= 0")


@dataclass(frozen=True)
class IterationRecord:
    k: int
    lambda_k: float
    gamma_bar: float
    delta_bar: float
    J_tilde: float
    mass_error: float  # max_t |sum_x m(t, x) - 1|
    min_m: float
    wall_ms: float


RECORD_COLUMNS = ("k", "lambda", "gamma_bar", "delta_bar", "J_tilde",
                  "mass_error", "min_m", "wall_ms")


def record_row(rec: IterationRecord) -> str:
    return ",".join([
        str(rec.k), repr(rec.lambda_k), repr(rec.gamma_bar), repr(rec.delta_bar),
        repr(rec.J_tilde), repr(rec.mass_error), repr(rec.min_m), repr(rec.wall_ms),
    ])


def write_records_csv(fh: TextIO, records: list[IterationRecord]) -> None:
    fh.write(",".join(RECORD_COLUMNS) + "\n")
    for rec in records:
        fh.write(record_row(rec) + "\n")


def stepsize(rule: str, k: int, gamma_bar: float, delta_bar: float,
             l_f: float, n_states: int, fixed_lambda: Optional[float] = None) -> float:
    """Stepsize for iteration ``k``; iteration 0 always takes a full step."""
    if k == 0:
        return 1.0
    if rule == "open_loop":
        return 2.0 / (k + 2.0)
    if rule == "best_response":
        return 1.0
    if rule == "fixed":
        return float(fixed_lambda)
    if rule == "line_search":
        curvature = l_f * np.sqrt(n_states) * delta_bar
        if delta_bar <= DEGENERATE_DELTA or curvature <= 0.0:
            return 1.0
        return float(min(max(gamma_bar, 0.0) / curvature, 1.0))
    raise ValueError(f"unknown stepsize rule {rule!r}")


@dataclass
class SolveResult:
    pair: FlowPair
    u: Array
    v: Array
    records: list[IterationRecord] = field(default_factory=list)
    stop_reason: str = "max_iters"
    iterations: int = 0
    max_control_norm: float = 0.0

    @property
    def m(self) -> Array:
        return self.pair.m


def _mass_stats(m: Array) -> tuple[float, float]:
    return float(np.max(np.abs(m.sum(axis=1) - 1.0))), float(m.min())


def solve(problem, scheme, coupling: PotentialCoupling, config: GfwConfig,
          initial_m: Optional[Array] = None,
          on_record: Optional[Callable[[IterationRecord], None]] = None,
          on_fields: Optional[Callable[[int, Array, Array, Array], None]] = None,
          ) -> SolveResult:
    """Run the best-response iteration until the gap tolerance or the
    iteration cap is reached.

    ``scheme`` provides ``best_response(m) -> BestResponse``; the kernel and
    theta backends both qualify.  ``on_record`` streams each record as soon as
    it is complete; ``on_fields`` receives ``(k, m, u, v)`` snapshots every
    ``config.record_fields_every`` iterations.  The returned ``(u, v)`` belong
    to the best response at the final iterate.
    """
    m_prediction = problem.initial_curve() if initial_m is None else initial_m
    br0 = scheme.best_response(m_prediction)
    m, w = br0.m.copy(), br0.w.copy()
    max_control = float(np.max(np.abs(br0.v))) if br0.v.size else 0.0

    records: list[IterationRecord] = []
    j_cached: Optional[float] = None
    tol_threshold: Optional[float] = None if config.tol_relative else config.tol_gamma_bar
    result = SolveResult(pair=FlowPair(m, w), u=br0.u, v=br0.v, records=records)

    for k in range(1, config.max_iters + 1):
        tic = time.perf_counter()
        br = scheme.best_response(m)
        max_control = max(max_control, float(np.max(np.abs(br.v))))
        pair = FlowPair(m, w)
        gaps = gap_diagnostics(problem, pair, FlowPair(br.m, br.w), m)
        j_value = cost_J_tilde(problem, coupling, pair) if j_cached is None else j_cached
        lam = stepsize(config.stepsize_rule, k, gaps.gamma_bar, gaps.delta_bar,
                       problem.L_f, problem.n_states, config.fixed_lambda)
        mass_error, min_m = _mass_stats(m)
        rec = IterationRecord(
            k=k, lambda_k=lam, gamma_bar=gaps.gamma_bar, delta_bar=gaps.delta_bar,
            J_tilde=j_value, mass_error=mass_error, min_m=min_m,
            wall_ms=(time.perf_counter() - tic) * 1e3)
        records.append(rec)
        if on_record is not None:
            on_record(rec)
        if (config.record_fields_every > 0 and on_fields is not None
                and k % config.record_fields_every == 0):
            on_fields(k, m, br.u, br.v)

        result.pair = pair
        result.u, result.v = br.u, br.v
        result.iterations = k

        if tol_threshold is None:
            tol_threshold = config.tol_gamma_bar * gaps.gamma_bar
        if gaps.gamma_bar <= tol_threshold:
            result.stop_reason = "tol"
            break
        if k == config.max_iters:
            result.stop_reason = "max_iters"
            break
        if gaps.delta_bar <= DEGENERATE_DELTA:
            # the best response equals the iterate; take it and stop
            m, w = br.m.copy(), br.w.copy()
            result.pair = FlowPair(m, w)
            result.stop_reason = "fixed_point"
            break

        m = (1.0 - lam) * m + lam * br.m
        w = (1.0 - lam) * w + lam * br.w
        if config.assert_descent:
            j_next = cost_J_tilde(problem, coupling, FlowPair(m, w))
            bound = descent_model_bound(j_value, lam, gaps.gamma_bar,
                                        gaps.delta_bar, problem.L_f,
                                        problem.n_states) + 1e-9
            if j_next > bound:
                raise DescentBoundError(k, j_next, bound)
            j_cached = j_next
        else:
            j_cached = None

    result.max_control_norm = max_control
    return result
