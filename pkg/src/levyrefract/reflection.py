"""The unbounded-rate limit: reflection at b*(inf) and convergence of refraction.

With Y fixed, X^(delta) = Y + delta t.  The refraction problem with beta = -beta_tilde
gives v~(x; delta) = v(x; delta, -beta_tilde) + beta_tilde delta / q, which decreases
in delta to the singular-control value v~(x; inf) attained by reflecting Y at b*(inf).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .costs import CostFunction
from .errors import ModelError
from .levy_model import LevyModel
from .refraction import (
    RefractionProblem,
    ThresholdKind,
    bisect_root,
    find_b_star,
    value_v_b,
)
from .scale_functions import build_scale, z_pair

__all__ = [
    "ReflectionProblem",
    "SweepRow",
    "SweepResult",
    "I_inf",
    "b_star_inf",
    "v_tilde_inf",
    "v_tilde_inf_prime",
    "v_tilde_delta",
    "model_for_delta",
    "convergence_sweep",
    "DEFAULT_DELTA_GRID",
]

DEFAULT_DELTA_GRID = tuple(range(1, 21)) + (40, 60, 80, 100)


@dataclass(frozen=True, eq=False)
class ReflectionProblem:
    """Singular control of Y with proportional cost beta_tilde per unit pushed up."""

    model_Y: LevyModel
    q: float
    beta_tilde: float
    cost: CostFunction
    check_grid: tuple = (-1e3, 1e3, 4001)

    def __post_init__(self):
        if not self.q > 0:
            raise ModelError("q must be positive")
        self._check_unimodal()
        object.__setattr__(self, "_Wd", build_scale(self.model_Y, self.q))

    def _check_unimodal(self):
        # h(x) + beta_tilde q x must fall then rise, with slope bounded below on the right
        shift = self.beta_tilde * self.q
        lo, hi = self.cost.slope_limits()
        if not (lo + shift < 0 < hi + shift):
            raise ModelError(
                f"h'(x) + beta_tilde*q must be negative at -inf and positive at +inf; "
                f"limits are {lo + shift} and {hi + shift}"
            )
        g = np.asarray(self.cost.h_prime(np.linspace(*self.check_grid))) + shift
        signs = np.sign(g[g != 0])
        if np.count_nonzero(np.diff(signs)) > 1:
            raise ModelError("h'(x) + beta_tilde*q changes sign more than once")

    @property
    def Wd(self):
        return self._Wd

    @property
    def varphi(self) -> float:
        return float(self._Wd.rates[0].real)


def I_inf(problem: ReflectionProblem, b: float) -> float:
    phi = problem.varphi
    return problem.cost.tail_integral(b, phi, deriv=1) + problem.beta_tilde * problem.q / phi


def b_star_inf(problem: ReflectionProblem) -> float:
    tol = 1e-10 * (1 + abs(I_inf(problem, 0.0)))
    root, _ = bisect_root(lambda b: I_inf(problem, b), tol)
    return root


def _conv(problem: ReflectionProblem, b: float, x: float, deriv: int) -> float:
    """int_b^x W_Y(x - y) h^{(deriv)}(y) dy, zero for x <= b."""
    s = x - b
    if s <= 0:
        return 0.0
    f = problem.Wd
    # substitute y = x + w, w in [-s, 0]: W_Y(-w) = sum d_j exp(-eta_j w)
    ints = problem.cost.exp_integral(-f.rates, -s, 0.0, shift=x, deriv=deriv)
    return float(np.sum(f.coefs * ints).real)


def v_tilde_inf(problem: ReflectionProblem, x, b: float | None = None):
    """Value of reflecting Y at ``b`` (default b*(inf))."""
    b = b_star_inf(problem) if b is None else b
    phi, q, bt = problem.varphi, problem.q, problem.beta_tilde
    tail = problem.cost.tail_integral(b, phi)
    drift = problem.model_Y.mean_drift

    def one(xi):
        Z, Zbar = z_pair(problem.Wd, q, xi - b)
        return -bt * (Zbar + drift / q) - _conv(problem, b, xi, 0) + Z * (phi / q * tail + bt / phi)

    return _map(one, x)


def v_tilde_inf_prime(problem: ReflectionProblem, x, b: float | None = None):
    b = b_star_inf(problem) if b is None else b
    phi, q, bt = problem.varphi, problem.q, problem.beta_tilde
    tail = problem.cost.tail_integral(b, phi)
    h_b = float(problem.cost.h(b))

    def one(xi):
        s = xi - b
        Z, _ = z_pair(problem.Wd, q, s)
        W = problem.Wd.eval(s) if s > 0 else 0.0
        return -bt * Z - _conv(problem, b, xi, 1) - W * h_b + q * W * (phi / q * tail + bt / phi)

    return _map(one, x)


def _map(f, x):
    if np.ndim(x) == 0:
        return float(f(float(x)))
    return np.array([f(float(v)) for v in np.asarray(x).ravel()]).reshape(np.shape(x))


def model_for_delta(model_Y: LevyModel, delta: float) -> LevyModel:
    """X^(delta) = Y + delta t."""
    return LevyModel(model_Y.gamma_tilde + delta, model_Y.sigma, model_Y.kappa, model_Y.jumps)


def refraction_problem_for(problem: ReflectionProblem, delta: float) -> RefractionProblem:
    return RefractionProblem(model_for_delta(problem.model_Y, delta), delta, problem.q,
                             -problem.beta_tilde, problem.cost)


def v_tilde_delta(problem: ReflectionProblem, delta: float, x, b: float | None = None):
    rp = refraction_problem_for(problem, delta)
    if b is None:
        b, kind, _ = find_b_star(rp)
        if kind is not ThresholdKind.FINITE:
            raise ModelError(f"expected a finite refraction level, got {kind.value}")
    shift = problem.beta_tilde * delta / problem.q
    return _map(lambda xi: value_v_b(rp, b, xi) + shift, x)


@dataclass
class SweepRow:
    delta: float
    b_star: float
    delta_phi_q: float
    delta_W_at_1: float
    v_tilde: np.ndarray


@dataclass
class SweepResult:
    x_grid: np.ndarray
    b_star_inf: float
    v_tilde_inf: np.ndarray
    rows: list = field(default_factory=list)

    def threshold_table(self) -> list[tuple]:
        """(delta, b_star, delta_phi_q, delta_W_at_1) per delta."""
        return [(r.delta, r.b_star, r.delta_phi_q, r.delta_W_at_1) for r in self.rows]

    def value_table(self) -> list[tuple]:
        """(delta, x, v_tilde) rows; delta = inf marks the reflection limit."""
        out = [(r.delta, float(x), float(v)) for r in self.rows for x, v in zip(self.x_grid, r.v_tilde)]
        out += [(math.inf, float(x), float(v)) for x, v in zip(self.x_grid, self.v_tilde_inf)]
        return out


def convergence_sweep(problem: ReflectionProblem, delta_grid=DEFAULT_DELTA_GRID, x_grid=None) -> SweepResult:
    b_inf = b_star_inf(problem)
    x_grid = np.linspace(b_inf - 3, b_inf + 3, 61) if x_grid is None else np.asarray(x_grid, dtype=float)
    result = SweepResult(x_grid, b_inf, np.asarray(v_tilde_inf(problem, x_grid, b_inf)))
    for delta in delta_grid:
        rp = refraction_problem_for(problem, float(delta))
        b, kind, _ = find_b_star(rp)
        if kind is not ThresholdKind.FINITE:
            raise ModelError(f"delta={delta}: expected a finite refraction level, got {kind.value}")
        shift = problem.beta_tilde * delta / problem.q
        vals = np.array([value_v_b(rp, b, x) + shift for x in x_grid])
        sc = rp.scales
        result.rows.append(SweepRow(float(delta), b, delta * sc.phi_q, delta * sc.W.eval(1.0), vals))
    return result
