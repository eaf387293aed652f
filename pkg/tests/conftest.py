import math

import numpy as np
import pytest
from scipy import optimize

from levyrefract.levy_model import LevyModel, PhaseTypeLaw, exponential_law

SQRT2 = math.sqrt(2.0)


def model_a():
    """gamma_tilde = 1, sigma^2 = 2, no jumps: psi(t) = t^2 + t."""
    return LevyModel(1.0, SQRT2)


def exp_jump_model(gamma=2.0, sigma=0.0, kappa=1.0, mu=1.0):
    return LevyModel(gamma, sigma, kappa, exponential_law(mu))


def random_ph(rng, m):
    """Random phase-type law with a dense sub-generator."""
    alpha = rng.dirichlet(np.ones(m))
    T = rng.uniform(0.1, 1.0, (m, m))
    np.fill_diagonal(T, 0.0)
    exit_rates = rng.uniform(0.5, 2.0, m)
    np.fill_diagonal(T, -(T.sum(axis=1) + exit_rates))
    return PhaseTypeLaw(alpha, T)


def psi_direct(gamma, sigma, kappa, alpha=None, T=None):
    """Laplace exponent from the definition, via a dense linear solve."""

    def psi(theta):
        val = gamma * theta + 0.5 * sigma**2 * theta**2
        if kappa:
            t = -T.sum(axis=1)
            zhat = alpha @ np.linalg.solve(theta * np.eye(len(alpha)) - T, t)
            val += kappa * (zhat - 1.0)
        return val

    return psi


def positive_root(psi, q):
    hi = 1.0
    while psi(hi) <= q:
        hi *= 2
    return optimize.brentq(lambda t: psi(t) - q, 1e-14, hi, xtol=1e-15, rtol=1e-15)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting ------------------------------------------------------

ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[key])
