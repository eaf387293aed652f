"""Closed-form q-scale functions for phase-type Levy models.

1/(psi(theta) - q) is rational, so its partial-fraction expansion
sum_i c_i / (theta - zeta_i) inverts term by term to

    W^(q)(x) = sum_i c_i exp(zeta_i x),    c_i = 1 / psi'(zeta_i),

over the (assumed simple) roots zeta_i of psi(theta) = q.  Exactly one root,
Phi(q), is positive; all others have negative real part.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NumericalError, RepeatedRootError
from .expsum import ExpSumFunction, exp_integral
from .levy_model import LevyModel, Variation

ROOT_SEPARATION = 1e-7
LAPLACE_TOLERANCE = 1e-8


def _polish(model: LevyModel, q: float, z: complex, steps: int = 3) -> complex:
    best, best_res = z, abs(model.psi(z) - q)
    for _ in range(steps):
        d = model.psi_prime(best)
        if d == 0:
            break
        cand = best - (model.psi(best) - q) / d
        res = abs(model.psi(cand) - q)
        if res < best_res:
            best, best_res = cand, res
        else:
            break
    return complex(best)


def _symmetrize(roots: np.ndarray, scale: float) -> np.ndarray:
    """Snap near-real roots to the real axis and make complex roots exact conjugate pairs."""
    roots = roots.copy()
    tol = 1e-10 * max(1.0, scale)
    real = np.abs(roots.imag) <= tol
    roots[real] = roots[real].real
    upper = np.flatnonzero(roots.imag > tol)
    lower = list(np.flatnonzero(roots.imag < -tol))
    for i in upper:
        j = min(lower, key=lambda k: abs(roots[k] - np.conj(roots[i])))
        lower.remove(j)
        roots[j] = np.conj(roots[i])
    return roots


def laplace_residual(f: ExpSumFunction, psi_minus_q: Callable, theta_grid) -> float:
    """max over the grid of |sum_i c_i/(theta - zeta_i) - 1/(psi(theta) - q)|."""
    theta = np.asarray(theta_grid, dtype=float)
    lhs = f.laplace(theta)
    rhs = 1.0 / np.asarray(psi_minus_q(theta))
    return float(np.max(np.abs(lhs - rhs)))


def _default_grid(lead: float) -> np.ndarray:
    return lead + np.linspace(0.1, 5.0, 50)


def build_scale(model: LevyModel, q: float) -> ExpSumFunction:
    """W^(q) of ``model`` as an exponential sum; the Phi(q) term comes first."""
    phi = model.root_of_psi(q)
    rational = model.as_rational(q)
    raw = np.roots(rational.numerator)
    scale = float(np.max(np.abs(raw))) if raw.size else 1.0
    roots = np.array([_polish(model, q, z) for z in raw])
    roots = _symmetrize(roots, scale)

    lead = int(np.argmin(np.abs(roots - phi)))
    if abs(roots[lead] - phi) > 1e-6 * max(1.0, phi):
        raise NumericalError(f"companion roots miss Phi(q)={phi}; nearest is {roots[lead]}")
    roots[lead] = phi
    roots = np.concatenate([[roots[lead]], np.delete(roots, lead)])
    others = roots[1:]
    if np.any(others.real >= phi) or np.any(others.real >= 0):
        raise NumericalError("found a second root of psi = q in the right half-plane")

    diffs = np.abs(roots[:, None] - roots[None, :])
    np.fill_diagonal(diffs, np.inf)
    if roots.size > 1 and diffs.min() < ROOT_SEPARATION * max(1.0, scale):
        i, j = np.unravel_index(np.argmin(diffs), diffs.shape)
        raise RepeatedRootError(f"roots {roots[i]} and {roots[j]} are closer than {ROOT_SEPARATION}")

    coefs = np.array([1.0 / model.psi_prime(z) for z in roots], dtype=complex)
    coefs[0] = coefs[0].real
    f = ExpSumFunction(coefs, roots)

    res = laplace_residual(f, lambda th: model.psi(th) - q, _default_grid(phi))
    if res > LAPLACE_TOLERANCE:
        raise NumericalError(f"Laplace identity residual {res:.3e} exceeds {LAPLACE_TOLERANCE}")
    return f


@dataclass(frozen=True, eq=False)
class ScaleSet:
    """Scale functions of X and of Y = X - delta t at a fixed discount rate q."""

    model: LevyModel
    model_Y: LevyModel
    q: float
    delta: float
    W: ExpSumFunction
    Wd: ExpSumFunction

    @property
    def phi_q(self) -> float:
        """Phi(q), the positive root for X."""
        return float(self.W.rates[0].real)

    @property
    def varphi_q(self) -> float:
        """varphi(q), the positive root for Y."""
        return float(self.Wd.rates[0].real)

    @property
    def W_at_0(self) -> float:
        return 0.0 if self.model.variation is Variation.UNBOUNDED else 1.0 / self.model.gamma_tilde

    @property
    def W_prime_at_0plus(self) -> float:
        return float(self.W.eval(0.0, 1))

    @property
    def theta(self) -> ExpSumFunction:
        """Theta^(q) = W' - Phi W; the Phi(q) term cancels exactly."""
        W = self.W.drop(0)
        return ExpSumFunction(W.coefs * (W.rates - self.phi_q), W.rates)

    def scale(self, which: str) -> ExpSumFunction:
        return {"X": self.W, "Y": self.Wd}[which]

    def model_of(self, which: str) -> LevyModel:
        return {"X": self.model, "Y": self.model_Y}[which]


def build_scale_set(model: LevyModel, q: float, delta: float) -> ScaleSet:
    model_Y = model.shifted(delta)
    W = build_scale(model, q)
    Wd = build_scale(model_Y, q)
    if not Wd.rates[0].real > W.rates[0].real:
        raise NumericalError("expected varphi(q) > Phi(q)")
    return ScaleSet(model, model_Y, q, delta, W, Wd)


def eval_scale(f: ExpSumFunction, x, order: int = 0):
    return f.eval(x, order)


def theta_kernel(scale: ScaleSet, x):
    out = scale.theta.eval(x)
    if np.any(np.asarray(out)[np.asarray(x) > 0] <= 0):
        raise NumericalError("Theta^(q) is not positive; the scale build is inconsistent")
    return out


def z_pair(f: ExpSumFunction, q: float, x):
    """(Z^(q)(x), Zbar^(q)(x)) built from the scale function ``f``; (1, x) for x <= 0."""
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1)
    Z = np.empty(flat.size)
    Zbar = np.empty(flat.size)
    for k, xi in enumerate(flat):
        if xi <= 0:
            Z[k], Zbar[k] = 1.0, xi
            continue
        first = exp_integral(f.rates, 0.0, xi)
        Z[k] = 1.0 + q * np.sum(f.coefs * first).real
        # int_0^x int_0^y e^{r u} du dy = (first - x) / r
        second = (first - xi) / f.rates
        Zbar[k] = xi + q * np.sum(f.coefs * second).real
    Z, Zbar = Z.reshape(x.shape), Zbar.reshape(x.shape)
    if np.ndim(x) == 0:
        return float(Z), float(Zbar)
    return Z, Zbar


def z_functions(scale: ScaleSet, x, which: str = "Y"):
    """(Z^(q)(x), Zbar^(q)(x)) for the chosen process, term-wise in closed form."""
    return z_pair(scale.scale(which), scale.q, x)


def free_resolvent_density(scale: ScaleSet, which: str, w):
    """u(w) = exp(root w)/psi'(root) - W(w) for w >= 0: the non-leading terms, negated."""
    f = scale.scale(which)
    rest = f.drop(0)
    w = np.asarray(w, dtype=float)
    out = -rest.eval(w)
    if np.any(np.asarray(out) < -1e-10):
        raise NumericalError("negative free resolvent density")
    return out


def mean_running_infimum(model: LevyModel, q: float) -> float:
    """E[-inf_{t <= e_q} X_t] = 1/Phi(q) - psi'(0+)/q."""
    return 1.0 / model.root_of_psi(q) - model.mean_drift / q
