import numpy as np
import pytest

from mfgfw.kernel import congestion_instance, fp_solve
from mfgfw.potential import FlowPair


def random_controls(rng, T, n, d, bound):
    """Admissible control field drawn uniformly inside the control ball."""
    raw = rng.normal(size=(T, n, d))
    norms = np.sqrt(np.sum(raw * raw, axis=-1, keepdims=True))
    radius = bound * rng.uniform(0.0, 1.0, size=(T, n, 1))
    return raw / np.maximum(norms, 1e-300) * radius


def random_feasible_pair(problem, kernel, rng):
    """A feasible momentum pair generated from a random admissible control."""
    v = random_controls(rng, problem.T, problem.n_states, problem.d, problem.D)
    m = fp_solve(kernel, v, problem.m0)
    return FlowPair(m, m[:-1, :, None] * v), v


@pytest.fixture(scope="session")
def tiny():
    """Small kernel instance shared by the oracle-level tests."""
    problem, kernel, coupling = congestion_instance(seed=42)
    return problem, kernel, coupling
