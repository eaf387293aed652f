import math

import numpy as np
import pytest
from scipy import integrate

from conftest import exp_jump_model, model_a, positive_root
from levyrefract import reflection as F
from levyrefract import refraction as R
from levyrefract.costs import LinearCost, QuadraticCost
from levyrefract.errors import ModelError


def brownian_problem(beta_tilde=0.5):
    # Y: psi(t) = t^2 + t, q = 2
    return F.ReflectionProblem(model_a(), 2.0, beta_tilde, QuadraticCost(1.0))


def jump_problem(beta_tilde=0.4):
    return F.ReflectionProblem(exp_jump_model(gamma=0.5, sigma=0.5), 0.5, beta_tilde, QuadraticCost(1.0))


def brownian_reflected_value(x, b, beta_tilde):
    """Solution of v'' + v' - 2v + x^2 = 0 on (b, inf), v'(b) = -beta_tilde, linear below b."""
    K = (b + 0.5 + beta_tilde) / 2
    def above(y):
        return y * y / 2 + y / 2 + 0.75 + K * math.exp(-2 * (y - b))
    return above(x) if x >= b else above(b) + beta_tilde * (b - x)


def test_b_star_inf_brownian_closed_form():
    for bt in (0.0, 0.5, 2.0):
        p = brownian_problem(bt)
        assert p.varphi == pytest.approx(1.0, abs=1e-13)
        assert F.b_star_inf(p) == pytest.approx(-1.0 - bt, abs=1e-8)


def test_b_star_inf_quadratic_general():
    p = jump_problem()
    phi = positive_root(lambda t: float(p.model_Y.psi(t)), p.q)
    assert p.varphi == pytest.approx(phi, rel=1e-10)
    assert F.b_star_inf(p) == pytest.approx(-1 / phi - p.beta_tilde * p.q / 2, abs=1e-8)


def test_I_inf_against_quadrature():
    p = jump_problem()
    phi = p.varphi
    for b in (-2.0, 0.3):
        ref = integrate.quad(lambda y: 2 * (y + b) * math.exp(-phi * y), 0, np.inf)[0] + p.beta_tilde * p.q / phi
        assert F.I_inf(p, b) == pytest.approx(ref, rel=1e-10)


def test_v_tilde_inf_matches_reflected_ode():
    bt = 0.5
    p = brownian_problem(bt)
    for b in (-1.5, -0.2):
        for x in (-3.0, b, b + 0.4, 1.0, 2.5):
            assert F.v_tilde_inf(p, x, b) == pytest.approx(brownian_reflected_value(x, b, bt), rel=1e-10)


def test_v_tilde_inf_prime_finite_difference():
    for p in (brownian_problem(), jump_problem()):
        b = F.b_star_inf(p)
        for x in (b - 1, b + 0.3, b + 2):
            fd = (F.v_tilde_inf(p, x + 1e-5) - F.v_tilde_inf(p, x - 1e-5)) / 2e-5
            assert F.v_tilde_inf_prime(p, x) == pytest.approx(fd, rel=1e-5, abs=1e-8)
        assert F.v_tilde_inf_prime(p, b) == pytest.approx(-p.beta_tilde, abs=1e-8)


def test_v_tilde_inf_solves_generator_with_jumps():
    # gamma v' + sigma^2/2 v'' - kappa int (v(x) - v(x - z)) e^{-z} dz - q v + h = 0 above b
    p = jump_problem()
    b = F.b_star_inf(p)
    v = lambda x: F.v_tilde_inf(p, x)
    e = 1e-3
    for x in (b + 0.5, b + 1.5):
        d1 = (v(x + e) - v(x - e)) / (2 * e)
        d2 = (v(x + e) - 2 * v(x) + v(x - e)) / e**2
        jump = integrate.quad(lambda z: (v(x) - v(x - z)) * math.exp(-z), 0, np.inf, limit=200)[0]
        resid = 0.5 * d1 + 0.125 * d2 - jump - 0.5 * v(x) + x * x
        assert abs(resid) < 1e-5


def test_reflection_at_b_star_is_optimal_among_barriers():
    p = brownian_problem()
    b = F.b_star_inf(p)
    for x in (-2.0, 0.0, 1.0):
        best = F.v_tilde_inf(p, x)
        for other in (b - 0.5, b + 0.5):
            assert best <= F.v_tilde_inf(p, x, other) + 1e-12


def test_v_tilde_delta_is_refraction_plus_constant():
    p = jump_problem()
    rp = F.refraction_problem_for(p, 3.0)
    assert rp.beta == -p.beta_tilde
    assert rp.model.gamma_tilde == pytest.approx(p.model_Y.gamma_tilde + 3.0)
    b, _, _ = R.find_b_star(rp)
    x = 0.2
    assert F.v_tilde_delta(p, 3.0, x) == pytest.approx(R.value_v_b(rp, b, x) + p.beta_tilde * 3.0 / p.q)


def test_convergence_sweep_monotone():
    p = jump_problem()
    grid = (1, 2, 5, 10, 20, 50, 100)
    res = F.convergence_sweep(p, grid, np.linspace(-3, 2, 11))
    b = [r.b_star for r in res.rows]
    assert np.all(np.diff(b) <= 1e-9)
    assert b[-1] >= res.b_star_inf - 1e-9
    assert b[-1] - res.b_star_inf < 0.05
    stack = np.array([r.v_tilde for r in res.rows])
    assert np.all(np.diff(stack, axis=0) <= 1e-9)
    assert np.all(stack[-1] >= res.v_tilde_inf - 1e-9)
    assert len(res.value_table()) == (len(grid) + 1) * 11
    assert res.threshold_table()[0][0] == 1.0


def test_delta_phi_and_delta_w_approach_limits():
    p = jump_problem()
    res = F.convergence_sweep(p, (1, 10, 100, 1000), [0.0])
    dphi = np.abs(np.array([r.delta_phi_q for r in res.rows]) - p.q)
    dw = np.abs(np.array([r.delta_W_at_1 for r in res.rows]) - 1.0)
    assert np.all(np.diff(dphi) < 0) and np.all(np.diff(dw) < 0)
    assert dphi[-1] < 1e-2 and dw[-1] < 1e-2


def test_every_delta_passes_verification():
    p = jump_problem()
    for delta in (1.0, 10.0, 100.0):
        rp = F.refraction_problem_for(p, delta)
        sol = R.solve(rp)
        rep = R.verify_solution(rp, sol, np.linspace(sol.b_star - 3, sol.b_star + 3, 61))
        assert rep.passed, rep.as_dict()


def test_unimodality_violation_raises():
    with pytest.raises(ModelError):
        F.ReflectionProblem(model_a(), 2.0, 0.5, LinearCost(0.3))
    with pytest.raises(ModelError):
        F.ReflectionProblem(model_a(), 0.0, 0.5, QuadraticCost(1.0))


def test_large_delta_threshold_near_reflection_level_weibull_example():
    from levyrefract.levy_model import weibull_example_model

    p = F.ReflectionProblem(weibull_example_model().shifted(5.0), 0.05, 5.0, QuadraticCost(1.0))
    b_inf = F.b_star_inf(p)
    phi = positive_root(lambda t: float(p.model_Y.psi(t)), 0.05)
    assert b_inf == pytest.approx(-1 / phi - 5.0 * 0.05 / 2, abs=1e-8)
    b, _, _ = R.find_b_star(F.refraction_problem_for(p, 1e4))
    assert b_inf - 1e-9 <= b <= b_inf + 1e-2
