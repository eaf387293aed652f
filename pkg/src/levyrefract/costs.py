"""Convex running-cost functions h and their exponentially weighted integrals.

Every quantity the solver needs reduces to

    int_lo^hi h^{(k)}(y + shift) exp(lam y) dy,   k in {0, 1},

for complex ``lam`` and possibly infinite limits.  Polynomial costs do this in
closed form; generic convex costs fall back to adaptive Gauss-Kronrod (QUADPACK).
"""

from __future__ import annotations

import math
from math import factorial

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import integrate

from .errors import ModelError, TailTruncationError

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(40)
_CANCELLATION_GUARD = 8.0


def _check_convex(hp, grid=None):
    grid = np.linspace(-50, 50, 100) if grid is None else grid
    vals = np.array([hp(x) for x in grid])
    if np.any(np.diff(vals) < -1e-9 * (1 + np.abs(vals[1:]))):
        raise ModelError("h' is not nondecreasing: running cost must be convex")


class CostFunction:
    """Interface: h, h', slope limits h'(+-inf) and weighted integrals."""

    growth_exponent: int = 2

    def h(self, x):
        raise NotImplementedError

    def h_prime(self, x):
        raise NotImplementedError

    def slope_limits(self) -> tuple[float, float]:
        raise NotImplementedError

    @property
    def is_affine(self) -> bool:
        lo, hi = self.slope_limits()
        return lo == hi

    def exp_integral(self, lam, lo, hi, shift=0.0, deriv=0):
        raise NotImplementedError

    def growth_constants(self) -> tuple[int, float, float]:
        """(N, k1, k2) with |h(x)| <= k1 + k2 |x|^N."""
        raise NotImplementedError

    def tail_integral(self, b, a, deriv=0) -> float:
        """int_0^inf h^{(deriv)}(y + b) exp(-a y) dy."""
        return float(np.real(self.exp_integral(np.array([-a]), 0.0, np.inf, b, deriv)[0]))

    def __call__(self, x):
        return self.h(x)


class PolynomialCost(CostFunction):
    """h(y) = sum_k coeffs[k] y^k (lowest degree first), convex."""

    def __init__(self, coeffs):
        c = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
        self.coeffs = c if c.size else np.zeros(1)
        self.growth_exponent = max(len(self.coeffs) - 1, 1)
        _check_convex(self.h_prime)

    def h(self, x):
        return P.polyval(x, self.coeffs)

    def h_prime(self, x):
        return P.polyval(x, P.polyder(self.coeffs)) if len(self.coeffs) > 1 else 0.0 * np.asarray(x, dtype=float)

    def slope_limits(self):
        deg = len(self.coeffs) - 1
        if deg <= 1:
            s = float(self.coeffs[1]) if deg == 1 else 0.0
            return s, s
        lead = self.coeffs[-1]
        return (-math.inf, math.inf) if lead > 0 else (math.inf, -math.inf)

    def growth_constants(self):
        total = float(np.sum(np.abs(self.coeffs)))
        return self.growth_exponent, total, total

    def _shifted(self, shift, deriv):
        c = self.coeffs
        for _ in range(deriv):
            c = P.polyder(c) if len(c) > 1 else np.zeros(1)
        # coefficients of p(y + shift) in y
        out = np.zeros(len(c))
        for k, ck in enumerate(c):
            for j in range(k + 1):
                out[j] += ck * math.comb(k, j) * shift ** (k - j)
        return out

    @staticmethod
    def _antiderivative(b, lam, y):
        # F(y) = exp(lam y) sum_k b_k sum_j (-1)^j k!/(k-j)! y^(k-j) / lam^(j+1)
        total = 0.0
        for k, bk in enumerate(b):
            if bk == 0:
                continue
            inner = 0.0
            for j in range(k + 1):
                inner = inner + (-1) ** j * factorial(k) / factorial(k - j) * y ** (k - j) / lam ** (j + 1)
            total = total + bk * inner
        return np.exp(lam * y) * total

    def exp_integral(self, lam, lo, hi, shift=0.0, deriv=0):
        lam = np.atleast_1d(np.asarray(lam, dtype=complex))
        b = self._shifted(shift, deriv)
        out = np.zeros(lam.shape, dtype=complex)
        if lo == hi:
            return out
        finite = math.isfinite(lo) and math.isfinite(hi)
        for idx, la in np.ndenumerate(lam):
            if finite and abs(la) * max(abs(lo), abs(hi)) < _CANCELLATION_GUARD:
                half, mid = 0.5 * (hi - lo), 0.5 * (hi + lo)
                y = mid + half * _GL_NODES
                out[idx] = half * np.sum(_GL_WEIGHTS * P.polyval(y, b) * np.exp(la * y))
                continue
            if not math.isfinite(hi) and la.real >= 0:
                raise TailTruncationError(f"integral diverges at +inf for rate {la}")
            if not math.isfinite(lo) and la.real <= 0:
                raise TailTruncationError(f"integral diverges at -inf for rate {la}")
            upper = self._antiderivative(b, la, hi) if math.isfinite(hi) else 0.0
            lower = self._antiderivative(b, la, lo) if math.isfinite(lo) else 0.0
            out[idx] = upper - lower
        return out

    def __repr__(self):
        return f"{type(self).__name__}({list(self.coeffs)})"


class QuadraticCost(PolynomialCost):
    """h(y) = alpha (y - shift)^2 with alpha > 0."""

    def __init__(self, alpha=1.0, shift=0.0):
        if alpha <= 0:
            raise ModelError("quadratic cost needs alpha > 0")
        self.alpha, self.shift = float(alpha), float(shift)
        super().__init__([alpha * shift**2, -2 * alpha * shift, alpha])

    def __repr__(self):
        return f"QuadraticCost(alpha={self.alpha}, shift={self.shift})"


class LinearCost(PolynomialCost):
    """h(y) = alpha y + eta."""

    def __init__(self, alpha, eta=0.0):
        self.alpha, self.eta = float(alpha), float(eta)
        super().__init__([eta, alpha])
        self.growth_exponent = 1

    def __repr__(self):
        return f"LinearCost(alpha={self.alpha}, eta={self.eta})"


class GenericConvexCost(CostFunction):
    """User-supplied convex h with derivative; integrals by adaptive quadrature.

    ``kinks`` lists points where h' jumps, passed to the integrator as breakpoints.
    ``growth`` is (N, k1, k2) with |h(x)| <= k1 + k2 |x|^N in the tails.
    """

    def __init__(self, h, h_prime, growth=(2, 1.0, 1.0), kinks=(), slope_limits=None,
                 epsabs=1e-10, epsrel=1e-10):
        self._h, self._hp = h, h_prime
        self.growth_exponent, self.k1, self.k2 = growth
        self.kinks = tuple(sorted(kinks))
        self._limits = slope_limits
        self.epsabs, self.epsrel = epsabs, epsrel
        _check_convex(h_prime)
        for x in (-1e3, -1e2, 1e2, 1e3, 1e4):
            if abs(h(x)) > self.k1 + self.k2 * abs(x) ** self.growth_exponent:
                raise ModelError(f"h violates the declared polynomial growth bound at x={x}")

    def h(self, x):
        return np.vectorize(self._h, otypes=[float])(x) if np.ndim(x) else float(self._h(x))

    def h_prime(self, x):
        return np.vectorize(self._hp, otypes=[float])(x) if np.ndim(x) else float(self._hp(x))

    def growth_constants(self):
        return self.growth_exponent, self.k1, self.k2

    def slope_limits(self):
        if self._limits is not None:
            return self._limits
        out = []
        for sign in (-1, 1):
            vals = [self._hp(sign * 10.0**k) for k in range(2, 7)]
            steps = np.abs(np.diff(vals))
            if steps[-1] <= 1e-9 * (1 + abs(vals[-1])):
                out.append(float(vals[-1]))
            else:
                out.append(sign * math.inf if np.sign(vals[-1] - vals[0]) == sign else -sign * math.inf)
        return tuple(out)

    def exp_integral(self, lam, lo, hi, shift=0.0, deriv=0):
        lam = np.atleast_1d(np.asarray(lam, dtype=complex))
        f = self._hp if deriv else self._h
        out = np.zeros(lam.shape, dtype=complex)
        if lo == hi:
            return out
        pts = [k - shift for k in self.kinks if lo < k - shift < hi]
        for idx, la in np.ndenumerate(lam):
            parts = []
            for part in (np.real, np.imag):
                g = lambda y, la=la, part=part: part(f(y + shift) * np.exp(la * y))
                if part is np.imag and la.imag == 0:
                    parts.append(0.0)
                    continue
                if math.isfinite(lo) and math.isfinite(hi):
                    val, err = integrate.quad(g, lo, hi, points=pts or None, limit=400,
                                              epsabs=self.epsabs, epsrel=self.epsrel)
                else:
                    val, err = self._semi_infinite(g, lo, hi, pts)
                if err > 1e-6 * (1 + abs(val)):
                    raise TailTruncationError(f"quadrature error {err:.2e} for rate {la}")
                parts.append(val)
            out[idx] = parts[0] + 1j * parts[1]
        return out

    def _semi_infinite(self, g, lo, hi, pts):
        # split at the kinks so QUADPACK sees smooth pieces, finish with an infinite piece
        edges = [lo] + pts + [hi]
        val = err = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            v, e = integrate.quad(g, a, b, limit=400, epsabs=self.epsabs, epsrel=self.epsrel)
            val, err = val + v, err + e
        return val, err


def quadratic(alpha=1.0, shift=0.0) -> QuadraticCost:
    return QuadraticCost(alpha, shift)


def linear(alpha, eta=0.0) -> LinearCost:
    return LinearCost(alpha, eta)
