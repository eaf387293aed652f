"""Finite exponential sums f(x) = sum_i c_i exp(r_i x) supported on [0, inf).

Scale functions of phase-type Levy models have exactly this form, so every
integral of a scale function against an exponential kernel reduces to the
elementary integral of exp(a z) over an interval, done here in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_SMALL = 1e-6


def exp_integral(a, lo, hi):
    """Elementwise integral of exp(a z) over [lo, hi]; ``lo``/``hi`` may be +-inf.

    Semi-infinite ranges require the integrand to decay: Re a < 0 for
    ``hi = inf`` and Re a > 0 for ``lo = -inf``.
    """
    a = np.asarray(a, dtype=complex)
    if lo == hi:
        return np.zeros_like(a)
    if np.isposinf(hi):
        if np.any(a.real >= 0):
            raise ValueError("exp(a z) does not decay at +inf")
        return -np.exp(a * lo) / a
    if np.isneginf(lo):
        if np.any(a.real <= 0):
            raise ValueError("exp(a z) does not decay at -inf")
        return np.exp(a * hi) / a
    length = hi - lo
    # anchor at the endpoint where |exp(a z)| is largest so expm1 cannot overflow
    grow = a.real > 0
    a_eff = np.where(grow, -a, a)
    al = a_eff * length
    small = np.abs(al) < _SMALL
    safe = np.where(small, 1.0, a_eff)
    ratio = np.where(small, length * (1 + al / 2 + al * al / 6), np.expm1(al) / safe)
    return np.exp(a * np.where(grow, hi, lo)) * ratio


def exp_integral_diff(a, b, s):
    """(exp(a s) - exp(b s)) / (a - b), stable when a is close to b."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    return np.exp(b * s) * exp_integral(a - b, 0.0, s)


@dataclass(frozen=True, eq=False)
class ExpSumFunction:
    """f(x) = sum_i coefs[i] * exp(rates[i] * x) for x >= 0, zero for x < 0.

    Values at x = 0 are right limits.
    """

    coefs: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coefs, dtype=complex))
        r = np.atleast_1d(np.asarray(self.rates, dtype=complex))
        if c.shape != r.shape or c.ndim != 1:
            raise ValueError("coefs and rates must be 1-d arrays of equal length")
        c.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "coefs", c)
        object.__setattr__(self, "rates", r)

    def __len__(self):
        return self.coefs.size

    @property
    def terms(self):
        return list(zip(self.coefs, self.rates))

    def eval_complex(self, x, order: int = 0):
        x = np.asarray(x, dtype=float)
        if order not in (0, 1, 2):
            raise ValueError("order must be 0, 1 or 2")
        xv = np.maximum(x, 0.0)[..., None]
        vals = (self.coefs * self.rates**order * np.exp(self.rates * xv)).sum(axis=-1)
        return np.where(x < 0, 0.0, vals)

    def eval(self, x, order: int = 0):
        out = self.eval_complex(x, order).real
        return out if np.ndim(x) else float(out)

    __call__ = eval

    def derivative(self) -> ExpSumFunction:
        return ExpSumFunction(self.coefs * self.rates, self.rates)

    def tilted(self, lam) -> ExpSumFunction:
        """x -> exp(-lam x) f(x)."""
        return ExpSumFunction(self.coefs, self.rates - lam)

    def drop(self, index: int) -> ExpSumFunction:
        keep = np.arange(len(self)) != index
        return ExpSumFunction(self.coefs[keep], self.rates[keep])

    def integral(self, x):
        """int_0^x f(y) dy (zero for x <= 0)."""
        x = np.asarray(x, dtype=float)
        flat = np.maximum(x.reshape(-1), 0.0)
        out = np.array([np.sum(self.coefs * exp_integral(self.rates, 0.0, xi)).real for xi in flat])
        out = out.reshape(x.shape)
        return out if np.ndim(x) else float(out)

    def laplace(self, theta):
        """int_0^inf exp(-theta x) f(x) dx, valid for theta > max Re rate."""
        theta = np.asarray(theta)
        vals = (self.coefs / (theta[..., None] - self.rates)).sum(axis=-1)
        return vals

    def weighted_integral(self, a: float, shift: float = 0.0) -> complex:
        """int_0^inf exp(-a z) f(z + shift) dz for a > max Re rate."""
        lo = max(0.0, -shift)
        return complex(np.sum(self.coefs * np.exp(self.rates * shift) * exp_integral(self.rates - a, lo, np.inf)))

    def moment_integral(self, k: int) -> complex:
        """int_0^inf z^k f(z) dz, for decaying sums only."""
        if np.any(self.rates.real >= 0):
            raise ValueError("moment integral needs all rates in the left half-plane")
        from math import factorial

        return complex(np.sum(self.coefs * factorial(k) / (-self.rates) ** (k + 1)))
