import dataclasses

import numpy as np
import pytest

from mfgfw.gfw import GfwConfig, solve
from mfgfw.grid import mixed_norm
from mfgfw.kernel import (BestResponse, DiscreteProblem, Kernel, KernelScheme,
                          KernelValidationError, best_response, fp_solve,
                          grid_search_minimize, hjb_solve,
                          quadratic_ball_minimizer, quadratic_running_cost,
                          random_kernel, transition, v_map)
from mfgfw.potential import (FlowPair, chi_inverse, cost_J_linearized,
                             gap_diagnostics)
from conftest import random_feasible_pair


def two_state_kernel(dt=0.25, drift=1.0, D=1.0):
    pi0 = np.full((1, 2, 2), 0.5)
    pi1 = np.zeros((1, 2, 2, 1))
    pi1[0, :, 0, 0] = drift
    pi1[0, :, 1, 0] = -drift
    return Kernel(pi0=pi0, pi1=pi1, dt=dt, control_bound=D)


def two_state_problem(D=1.0, T=1):
    return DiscreteProblem(
        T=T, d=1,
        ell=quadratic_running_cost(D),
        f=lambda t, m: np.zeros(2),
        g=np.array([0.0, 1.0]),
        m0=np.array([1.0, 0.0]),
        D=D, alpha=1.0, L_f=0.0,
        minimizer=quadratic_ball_minimizer(D),
    )


def test_transition_at_zero_control_is_pi0():
    kernel = two_state_kernel()
    assert np.allclose(transition(kernel, 0, 0, 0.0), [0.5, 0.5])


def test_transition_without_drift_ignores_control():
    pi0 = np.full((1, 2, 2), 0.5)
    kernel = Kernel(pi0=pi0, pi1=np.zeros((1, 2, 2, 1)), dt=0.25, control_bound=1.0)
    assert np.allclose(transition(kernel, 0, 1, 0.7), [0.5, 0.5])


def test_transition_hand_value():
    kernel = two_state_kernel(dt=0.25, drift=1.0)
    assert np.allclose(transition(kernel, 0, 0, 1.0), [0.75, 0.25])


def test_transition_rejects_oversized_control():
    kernel = two_state_kernel()
    with pytest.raises(ValueError):
        transition(kernel, 0, 0, 1.5)


def test_kernel_rejects_bad_rows():
    pi0 = np.full((1, 2, 2), 0.4)  # rows sum to 0.8
    with pytest.raises(KernelValidationError):
        Kernel(pi0=pi0, pi1=np.zeros((1, 2, 2, 1)), dt=0.5, control_bound=1.0)


def test_kernel_rejects_negative_entries():
    pi0 = np.array([[[1.2, -0.2], [0.5, 0.5]]])
    with pytest.raises(KernelValidationError):
        Kernel(pi0=pi0, pi1=np.zeros((1, 2, 2, 1)), dt=0.5, control_bound=1.0)


def test_kernel_rejects_unbalanced_drift():
    pi0 = np.full((1, 2, 2), 0.5)
    pi1 = np.full((1, 2, 2, 1), 0.1)  # rows do not sum to zero
    with pytest.raises(KernelValidationError):
        Kernel(pi0=pi0, pi1=pi1, dt=0.5, control_bound=1.0)


def test_kernel_rejects_insufficient_margin():
    with pytest.raises(KernelValidationError):
        two_state_kernel(dt=0.25, drift=3.0, D=1.0)  # 0.5 < 0.25 * 3


def test_hjb_one_step_terminal_condition():
    kernel = two_state_kernel(dt=1.0, drift=0.5)
    problem = two_state_problem()
    m = problem.initial_curve()
    u = hjb_solve(problem, kernel, m)
    assert np.allclose(u[1], problem.g)
    # q = 0.5 g(0) - 0.5 g(1) = -0.5, so the optimum is w* = 0.5 with value
    # 0.125 - 0.25 + mean(g) = 0.375 at both states (frozen from the
    # grid-search oracle below)
    assert np.allclose(u[0], 0.375, atol=1e-12)


def test_hjb_matches_grid_search_oracle():
    kernel = two_state_kernel(dt=1.0, drift=0.5)
    problem = two_state_problem()
    oracle_problem = dataclasses.replace(problem, minimizer=None)
    m = problem.initial_curve()
    u_closed = hjb_solve(problem, kernel, m)
    u_grid = hjb_solve(oracle_problem, kernel, m)
    assert np.allclose(u_closed, u_grid, atol=1e-7)
    v_closed = v_map(problem, kernel, u_closed)
    v_grid = v_map(oracle_problem, kernel, u_closed)
    assert np.allclose(v_closed, 0.5, atol=1e-12)
    assert np.allclose(v_grid, v_closed, atol=1e-3)


def test_grid_search_refinement_beats_raw_resolution():
    problem = two_state_problem()
    q = np.array([[-0.437], [0.269]])
    exact = quadratic_ball_minimizer(problem.D)(0, q)
    found = grid_search_minimize(problem, 0, q, resolution=1e-3)
    assert np.allclose(found, exact, atol=1e-7)


def test_v_map_zero_when_drift_free():
    pi0 = np.full((2, 2, 2), 0.5)
    kernel = Kernel(pi0=pi0, pi1=np.zeros((2, 2, 2, 1)), dt=0.5, control_bound=1.0)
    problem = two_state_problem(T=2)
    u = hjb_solve(problem, kernel, problem.initial_curve())
    v = v_map(problem, kernel, u)
    assert np.allclose(v, 0.0)


def test_v_map_constant_u_gives_cost_minimizer(tiny):
    problem, kernel, _ = tiny
    u = np.ones((problem.T + 1, problem.n_states))
    v = v_map(problem, kernel, u)
    # the linear term vanishes because the drift rows sum to zero
    assert np.allclose(v, 0.0, atol=1e-12)


def test_v_map_respects_control_bound(tiny):
    problem, kernel, _ = tiny
    rng = np.random.default_rng(0)
    u = rng.normal(size=(problem.T + 1, problem.n_states)) * 50.0
    v = v_map(problem, kernel, u)
    assert np.max(np.sqrt(np.sum(v * v, axis=-1))) <= problem.D + 1e-12


def test_fp_markov_pushforward_without_drift():
    pi0 = np.zeros((1, 2, 2))
    pi0[0] = [[0.3, 0.7], [0.6, 0.4]]
    kernel = Kernel(pi0=pi0, pi1=np.zeros((1, 2, 2, 1)), dt=1.0, control_bound=1.0)
    m = fp_solve(kernel, np.zeros((1, 2, 1)), np.array([0.5, 0.5]))
    assert np.allclose(m[1], pi0[0].T @ [0.5, 0.5])


def test_fp_permutation_kernel_moves_mass():
    pi0 = np.zeros((2, 3, 3))
    perm = np.roll(np.eye(3), 1, axis=1)  # x -> x + 1
    pi0[:] = perm
    kernel = Kernel(pi0=pi0, pi1=np.zeros((2, 3, 3, 1)), dt=0.5, control_bound=1.0)
    m0 = np.array([1.0, 0.0, 0.0])
    m = fp_solve(kernel, np.zeros((2, 3, 1)), m0)
    assert np.allclose(m[1], [0.0, 1.0, 0.0])
    assert np.allclose(m[2], [0.0, 0.0, 1.0])


def test_fp_hand_pushforward():
    kernel = two_state_kernel(dt=0.25, drift=1.0)
    v = np.ones((1, 2, 1))
    m = fp_solve(kernel, v, np.array([1.0, 0.0]))
    assert np.allclose(m[1], [0.75, 0.25])


def test_fp_rejects_oversized_controls():
    kernel = two_state_kernel()
    with pytest.raises(ValueError):
        fp_solve(kernel, np.full((1, 2, 1), 2.0), np.array([1.0, 0.0]))


def test_fp_conserves_mass(tiny):
    problem, kernel, _ = tiny
    rng = np.random.default_rng(1)
    for _ in range(20):
        _, v = random_feasible_pair(problem, kernel, rng)
        m = fp_solve(kernel, v, problem.m0)
        assert np.max(np.abs(m.sum(axis=1) - 1.0)) <= 1e-12
        assert m.min() >= -1e-12


def test_best_response_ignores_prediction_without_coupling(tiny):
    problem, kernel, _ = tiny
    decoupled = dataclasses.replace(
        problem, f=lambda t, m: np.zeros(problem.n_states))
    rng = np.random.default_rng(2)
    m_a = np.array([rng.dirichlet(np.ones(problem.n_states))
                    for _ in range(problem.T + 1)])
    m_b = np.array([rng.dirichlet(np.ones(problem.n_states))
                    for _ in range(problem.T + 1)])
    br_a = best_response(decoupled, kernel, m_a)
    br_b = best_response(decoupled, kernel, m_b)
    assert np.array_equal(br_a.v, br_b.v)
    assert np.array_equal(br_a.m, br_b.m)


def test_best_response_minimizes_linearized_cost(tiny):
    problem, kernel, _ = tiny
    rng = np.random.default_rng(3)
    m_ref = np.array([rng.dirichlet(np.ones(problem.n_states))
                      for _ in range(problem.T + 1)])
    br = best_response(problem, kernel, m_ref)
    br_pair = FlowPair(br.m, br.w)
    j_br = cost_J_linearized(problem, m_ref, br_pair)
    for _ in range(100):
        pair, _ = random_feasible_pair(problem, kernel, rng)
        assert cost_J_linearized(problem, m_ref, pair) >= j_br - 1e-10


def test_best_response_fixed_point_at_equilibrium(tiny):
    problem, kernel, coupling = tiny
    result = solve(problem, KernelScheme(problem, kernel), coupling,
                   GfwConfig(stepsize_rule="line_search", max_iters=2000,
                             tol_gamma_bar=1e-13))
    m_eq = result.pair.m
    br = best_response(problem, kernel, m_eq)
    assert np.max(np.abs(br.m - m_eq)) <= 1e-5


def test_hjb_continuity_in_the_mass(tiny):
    problem, kernel, _ = tiny
    rng = np.random.default_rng(4)
    for _ in range(10):
        m1 = np.array([rng.dirichlet(np.ones(problem.n_states))
                       for _ in range(problem.T + 1)])
        m2 = np.array([rng.dirichlet(np.ones(problem.n_states))
                       for _ in range(problem.T + 1)])
        u1 = hjb_solve(problem, kernel, m1)
        u2 = hjb_solve(problem, kernel, m2)
        lhs = mixed_norm(u1 - u2, np.inf, np.inf)
        rhs = problem.L_f * mixed_norm(m1 - m2, np.inf, 2)
        assert lhs <= rhs + 1e-10


def test_fundamental_inequality(tiny):
    problem, kernel, _ = tiny
    rng = np.random.default_rng(5)
    m_ref = np.array([rng.dirichlet(np.ones(problem.n_states))
                      for _ in range(problem.T + 1)])
    br = best_response(problem, kernel, m_ref)
    j_br = cost_J_linearized(problem, m_ref, FlowPair(br.m, br.w))
    dt = problem.dt
    for _ in range(50):
        pair, v = random_feasible_pair(problem, kernel, rng)
        lhs = cost_J_linearized(problem, m_ref, pair) - j_br
        quad = dt * float(np.sum(
            np.sum((v - br.v) ** 2, axis=-1) * pair.m[:-1]))
        assert lhs >= 0.5 * problem.alpha * quad - 1e-8


def test_convex_combination_stays_feasible(tiny):
    # blending two feasible pairs gives a pair whose reconstructed control
    # reproduces it through the forward dynamics
    problem, kernel, _ = tiny
    rng = np.random.default_rng(6)
    p1, _ = random_feasible_pair(problem, kernel, rng)
    p2, _ = random_feasible_pair(problem, kernel, rng)
    blend = FlowPair(0.5 * (p1.m + p2.m), 0.5 * (p1.w + p2.w))
    v = chi_inverse(blend)
    m_check = fp_solve(kernel, v, problem.m0)
    assert np.max(np.abs(m_check - blend.m)) <= 1e-10


def test_random_kernel_margin_and_seeding():
    rng = np.random.default_rng(7)
    kernel = random_kernel(rng, n=5, T=4, d=2, control_bound=1.5)
    margin = kernel.pi0 - kernel.dt * 1.5 * np.linalg.norm(kernel.pi1, axis=3)
    assert margin.min() >= 0.0
    again = random_kernel(np.random.default_rng(7), n=5, T=4, d=2, control_bound=1.5)
    assert np.array_equal(kernel.pi0, again.pi0)
