import math

import mpmath
import numpy as np
import pytest
from scipy import integrate

from conftest import exp_jump_model, model_a, positive_root, psi_direct, random_ph
from levyrefract.errors import NumericalError, RepeatedRootError
from levyrefract.levy_model import LevyModel, weibull_example_model
from levyrefract.scale_functions import (
    build_scale,
    build_scale_set,
    free_resolvent_density,
    laplace_residual,
    mean_running_infimum,
    theta_kernel,
    z_functions,
    z_pair,
)


def test_model_a_scale_exact():
    W = build_scale(model_a(), 2.0)
    x = np.linspace(0, 5, 101)
    assert np.max(np.abs(W(x) - (np.exp(x) - np.exp(-2 * x)) / 3)) <= 1e-12
    assert W.rates[0].real == pytest.approx(1.0, abs=1e-14)


def test_model_a_values():
    s = build_scale_set(model_a(), 2.0, 0.5)
    assert s.W(1.0) == pytest.approx(0.860982, abs=1e-6)
    assert s.W.eval(1.0, 1) == pytest.approx(0.996317, abs=1e-6)
    assert theta_kernel(s, 1.0) == pytest.approx(math.exp(-2.0), abs=1e-12)
    assert s.W_at_0 == 0.0


def test_bounded_variation_jump_at_zero():
    s = build_scale_set(exp_jump_model(), 0.5, 1.0)
    assert s.W(0.0) == pytest.approx(0.5, abs=1e-12)
    assert s.W_at_0 == pytest.approx(0.5)
    # W'(0+) = (q + kappa) / gamma^2
    assert s.W_prime_at_0plus == pytest.approx(0.375, abs=1e-12)


def _talbot_scale(psi, q, x):
    return float(mpmath.invertlaplace(lambda s: 1 / (psi(s) - q), x, method="talbot"))


def test_scale_matches_numerical_laplace_inversion(rng):
    law = random_ph(rng, 2)
    model = LevyModel(1.3, 0.5, 1.5, law)
    q = 0.4
    W = build_scale(model, q)
    a = mpmath.matrix(law.alpha.tolist())
    T = mpmath.matrix(law.T.tolist())
    t = mpmath.matrix((-law.T.sum(axis=1)).tolist())

    def psi(s):
        M = s * mpmath.eye(2) - T
        zhat = (a.T * mpmath.lu_solve(M, t))[0]
        return 1.3 * s + 0.125 * s**2 + 1.5 * (zhat - 1)

    for x in (0.3, 1.0, 2.5):
        assert W(x) == pytest.approx(_talbot_scale(psi, q, x), rel=1e-8)


def test_laplace_residual_small_for_random_models(rng):
    for m in (1, 2, 3, 4):
        law = random_ph(rng, m)
        model = LevyModel(rng.uniform(0.5, 3), rng.uniform(0, 1), rng.uniform(0.2, 2), law)
        q = rng.uniform(0.05, 2)
        W = build_scale(model, q)
        phi = positive_root(psi_direct(model.gamma_tilde, model.sigma, model.kappa, law.alpha, law.T), q)
        assert W.rates[0].real == pytest.approx(phi, rel=1e-10)
        grid = phi + np.linspace(0.1, 5, 50)
        assert laplace_residual(W, lambda th: model.psi(th) - q, grid) <= 1e-8


def test_weibull_example_scales_build():
    s = build_scale_set(weibull_example_model(), 0.05, 5.0)
    assert len(s.W) == 8
    assert s.varphi_q > s.phi_q > 0
    assert np.all(s.W.rates[1:].real < 0)


def test_theta_integrals():
    model = exp_jump_model(sigma=0.4)
    q, delta = 0.5, 1.0
    s = build_scale_set(model, q, delta)
    Phi, phi = s.phi_q, s.varphi_q
    th = s.theta
    total = integrate.quad(th, 0, np.inf, limit=200)[0]
    assert total == pytest.approx(Phi / q - s.W_at_0, abs=1e-9)
    tilted = integrate.quad(lambda u: math.exp(-phi * u) * th(u), 0, np.inf, limit=200)[0]
    assert tilted == pytest.approx((phi - Phi) / (delta * phi) - s.W_at_0, abs=1e-9)
    first = th.moment_integral(1).real
    assert first == pytest.approx(Phi / q * mean_running_infimum(model, q), abs=1e-9)


def test_theta_positive():
    s = build_scale_set(weibull_example_model(), 0.05, 5.0)
    x = np.linspace(0.01, 20, 50)
    assert np.all(theta_kernel(s, x) > 0)


def test_z_functions_model_a():
    s = build_scale_set(model_a(), 2.0, 0.5)
    Z, Zbar = z_functions(s, 1.5, which="X")
    zq = integrate.quad(s.W, 0, 1.5)[0]
    assert Z == pytest.approx(1 + 2 * zq, rel=1e-12)
    zbar = integrate.quad(lambda y: 1 + 2 * integrate.quad(s.W, 0, y)[0], 0, 1.5)[0]
    assert Zbar == pytest.approx(zbar, rel=1e-10)
    assert z_pair(s.W, 2.0, -0.7) == (1.0, -0.7)


def test_free_resolvent_density_mass():
    s = build_scale_set(model_a(), 2.0, 0.5)
    # the free q-resolvent of X started at 0 integrates to 1/q
    up = s.W.coefs[0].real * integrate.quad(lambda z: math.exp(-s.phi_q * z), 0, np.inf)[0]
    down = integrate.quad(lambda w: free_resolvent_density(s, "X", w), 0, np.inf)[0]
    assert up + down == pytest.approx(0.5, abs=1e-10)


def test_mean_running_infimum_model_a():
    assert mean_running_infimum(model_a(), 2.0) == pytest.approx(0.5, abs=1e-14)


def test_mean_running_infimum_small_for_strong_drift():
    val = mean_running_infimum(LevyModel(50.0, math.sqrt(2)), 1.0)
    assert 0 < val < 0.05


def test_repeated_root_guard(monkeypatch):
    from levyrefract import scale_functions as sf

    monkeypatch.setattr(sf, "ROOT_SEPARATION", 1e3)
    with pytest.raises(RepeatedRootError):
        build_scale(exp_jump_model(), 0.3)


def test_laplace_residual_guard(monkeypatch):
    from levyrefract import scale_functions as sf

    monkeypatch.setattr(sf, "LAPLACE_TOLERANCE", -1.0)
    with pytest.raises(NumericalError):
        build_scale(model_a(), 2.0)
