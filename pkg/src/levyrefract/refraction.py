"""Refraction strategies: threshold function I(b), optimal level b*, value function.

Under the refraction strategy at level b the controlled process U^b moves like
X below b and like Y = X - delta t above b.  Its q-resolvent density r_b(x, y)
is a piecewise exponential sum in y once scale functions are exponential sums,
so every NPV reduces to closed-form integrals of the running cost against
exponentials.  All kernels below are written in the relative coordinate
y - b and evaluated at s = x - b.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .costs import CostFunction
from .errors import BracketFailure, ModelError, NumericalError
from .expsum import exp_integral_diff
from .levy_model import LevyModel
from .scale_functions import ScaleSet, build_scale_set, mean_running_infimum

__all__ = [
    "Kernel",
    "RefractionProblem",
    "RefractionSolution",
    "ThresholdKind",
    "I_of_b",
    "I_limits",
    "classify",
    "find_b_star",
    "mean_running_infimum",
    "refraction_resolvent",
    "resolvent_kernel",
    "value_v_b",
    "value_derivative",
    "u_b",
    "solve",
    "verify_solution",
]


@dataclass(frozen=True)
class _Block:
    lo: float
    hi: float
    origin: float
    coefs: np.ndarray
    rates: np.ndarray


@dataclass(frozen=True)
class Kernel:
    """k(y) = sum over blocks of sum_i coefs_i exp(rates_i (y - origin)) on [lo, hi).

    ``shift`` maps kernel coordinates to the state: state = y + shift.
    """

    blocks: tuple
    shift: float = 0.0

    def density(self, y):
        y = np.asarray(y, dtype=float) - self.shift
        out = np.zeros(y.shape)
        for blk in self.blocks:
            inside = (y >= blk.lo) & (y < blk.hi)
            if not inside.any():
                continue
            yy = y[inside][:, None] - blk.origin
            out[inside] += (blk.coefs * np.exp(blk.rates * yy)).sum(axis=1).real
        return out if out.ndim else float(out)

    def integrate(self, cost: CostFunction, deriv: int = 0) -> float:
        """int cost^{(deriv)}(state) k dy over the whole line."""
        total = 0.0 + 0.0j
        for blk in self.blocks:
            if blk.lo >= blk.hi or not np.any(blk.coefs):
                continue
            ints = cost.exp_integral(blk.rates, blk.lo - blk.origin, blk.hi - blk.origin,
                                     shift=self.shift + blk.origin, deriv=deriv)
            total += np.sum(blk.coefs * ints)
        return float(total.real)

    def mass(self, lo=-math.inf, hi=math.inf) -> float:
        """int over [lo, hi) (state coordinates) of k."""
        lo, hi = lo - self.shift, hi - self.shift
        total = 0.0 + 0.0j
        for blk in self.blocks:
            a, b = max(lo, blk.lo), min(hi, blk.hi)
            if a >= b:
                continue
            rates = blk.rates
            from .expsum import exp_integral

            total += np.sum(blk.coefs * exp_integral(rates, a - blk.origin, b - blk.origin))
        return float(total.real)


class ThresholdKind(enum.Enum):
    FINITE = "finite"
    PLUS_INFINITY = "+inf"
    MINUS_INFINITY = "-inf"
    INDIFFERENT = "indifferent"


@dataclass(frozen=True, eq=False)
class RefractionProblem:
    """Minimise E_x int e^{-qt} (h(U_t) + beta l_t) dt over rates l in [0, delta]."""

    model: LevyModel
    delta: float
    q: float
    beta: float
    cost: CostFunction
    scales: ScaleSet = field(init=False, repr=False)

    def __post_init__(self):
        if not self.delta > 0:
            raise ModelError("delta must be positive")
        if not self.q > 0:
            raise ModelError("q must be positive")
        # shifting the drift checks gamma_tilde - delta > 0 for bounded variation
        object.__setattr__(self, "scales", build_scale_set(self.model, self.q, self.delta))

    @property
    def model_Y(self) -> LevyModel:
        return self.scales.model_Y

    # frequently used constants
    @property
    def Phi(self) -> float:
        return self.scales.phi_q

    @property
    def varphi(self) -> float:
        return self.scales.varphi_q


# ----------------------------------------------------------------------------
# resolvent density of the refracted process


def _M(sc: ScaleSet, s: float) -> complex:
    """M(x; b) with s = x - b > 0."""
    Phi, phi = sc.phi_q, sc.varphi_q
    d, eta = sc.Wd.coefs, sc.Wd.rates
    return (phi - Phi) * np.sum(d * exp_integral_diff(Phi, eta, s))


def resolvent_kernel(problem: RefractionProblem, b: float, x: float) -> Kernel:
    """r_b(x, .) as a :class:`Kernel` in state coordinates."""
    sc = problem.scales
    Phi, phi, delta = sc.phi_q, sc.varphi_q, problem.delta
    c, zeta = sc.W.coefs, sc.W.rates
    d, eta = sc.Wd.coefs, sc.Wd.rates
    s = x - b
    A = (phi - Phi) / (delta * Phi)
    ratio = (phi - Phi) / Phi
    K = c * zeta / (phi - zeta)  # int_0^inf e^{-phi z} W'(z - y) dz = sum K_i e^{-zeta_i y}
    rest = slice(1, None)
    blocks = []
    if s <= 0:
        blocks.append(_Block(0.0, math.inf, 0.0, np.array([A * math.exp(Phi * s)], complex),
                             np.array([-phi], complex)))
        if s < 0:
            blocks.append(_Block(s, 0.0, 0.0, math.exp(Phi * s) * ratio * K[rest], -zeta[rest]))
            blocks.append(_Block(s, 0.0, s, np.array([ratio * K[0]]), np.array([-zeta[0]])))
        coef = np.exp((Phi - zeta[rest]) * s) * ratio * K[rest] - c[rest]
        blocks.append(_Block(-math.inf, s, s, coef, -zeta[rest]))
    else:
        M = _M(sc, s)
        top = A * math.exp(Phi * s) + M
        blocks.append(_Block(s, math.inf, s, np.array([top * math.exp(-phi * s)]),
                             np.array([-phi], complex)))
        blocks.append(_Block(0.0, s, 0.0, np.array([top]), np.array([-phi], complex)))
        blocks.append(_Block(0.0, s, s, -d, -eta))
        zr, cr = zeta[rest], c[rest]
        conv = np.array([np.sum(d * exp_integral_diff(z, eta, s)) for z in zr])
        coef = (math.exp(Phi * s) * ratio * K[rest] - cr * np.exp(zr * s)
                + delta * cr * zr * (M / (phi - zr) - conv))
        blocks.append(_Block(-math.inf, 0.0, 0.0, coef, -zr))
    return Kernel(tuple(blocks), shift=b)


def refraction_resolvent(problem: RefractionProblem, b: float, x: float, y):
    """r_b(x, y) = r_b^(1)(x, y) + 1{x > b} r_b^(2)(x, y)."""
    out = resolvent_kernel(problem, b, x).density(y)
    if np.any(np.asarray(out) < -1e-10):
        raise NumericalError("negative resolvent density")
    return out


def _free_kernel(sc: ScaleSet, which: str, x: float) -> Kernel:
    """q-resolvent of the unrefracted process (X or Y) started at x."""
    f = sc.scale(which)
    c, zeta = f.coefs, f.rates
    blocks = (
        _Block(0.0, math.inf, 0.0, np.array([c[0]]), np.array([-zeta[0]])),
        _Block(-math.inf, 0.0, 0.0, -c[1:], -zeta[1:]),
    )
    return Kernel(blocks, shift=x)


# ----------------------------------------------------------------------------
# threshold function


def I_of_b(problem: RefractionProblem, b: float) -> float:
    sc = problem.scales
    Phi, phi, delta, cost = sc.phi_q, sc.varphi_q, problem.delta, problem.cost
    upper = cost.tail_integral(b, phi, deriv=1)
    th = sc.theta  # Theta^(q) with the Phi term removed
    # J(y) = int_0^inf e^{-phi z} Theta(z - y) dz = sum_i th_i/(phi - zeta_i) e^{-zeta_i y}, y < 0
    J = th.coefs / (phi - th.rates)
    lower = np.sum(J * cost.exp_integral(-th.rates, -math.inf, 0.0, shift=b, deriv=1)).real
    return float((phi - Phi) / phi * upper + delta * (lower - problem.beta * Phi / phi))


def I_limits(problem: RefractionProblem) -> tuple[float, float]:
    """(I(-inf), I(+inf)) = delta Phi/varphi (h'(-+inf)/q - beta)."""
    sc = problem.scales
    fac = problem.delta * sc.phi_q / sc.varphi_q
    lo, hi = problem.cost.slope_limits()
    return fac * (lo / problem.q - problem.beta), fac * (hi / problem.q - problem.beta)


def classify(problem: RefractionProblem, atol: float = 1e-12) -> ThresholdKind:
    lo, hi = I_limits(problem)
    if abs(lo) <= atol and abs(hi) <= atol:
        return ThresholdKind.INDIFFERENT
    if hi <= atol:
        return ThresholdKind.PLUS_INFINITY
    if lo >= -atol:
        return ThresholdKind.MINUS_INFINITY
    return ThresholdKind.FINITE


def _bracket(f: Callable[[float], float], lo=-1.0, hi=1.0, max_doublings=80):
    flo, fhi = f(lo), f(hi)
    for _ in range(max_doublings):
        if flo < 0 < fhi or flo == 0 or fhi == 0:
            return lo, hi, flo, fhi
        width = hi - lo
        if flo > 0:
            lo, flo = lo - width, f(lo - width)
        if fhi < 0:
            hi, fhi = hi + width, f(hi + width)
    raise BracketFailure(f"no sign change of I on [{lo}, {hi}]")


def _edge(pred: Callable[[float], bool], inside: float, outside: float, width: float) -> float:
    """Boundary between points where pred holds (inside) and fails (outside)."""
    step = max(1.0, abs(outside - inside))
    direction = math.copysign(1.0, inside - outside)
    for _ in range(200):
        if pred(inside):
            break
        inside += direction * step
        step *= 2
    else:
        raise BracketFailure("zero set of I is unbounded")
    for _ in range(400):
        if abs(outside - inside) <= width:
            break
        mid = 0.5 * (inside + outside)
        if pred(mid):
            inside = mid
        else:
            outside = mid
    return 0.5 * (inside + outside)


def bisect_root(f: Callable[[float], float], tol_f: float, width: float = 1e-10,
                lo=-1.0, hi=1.0, flat_probe: float = 1e-6) -> tuple[float, tuple[float, float]]:
    """Root of a nondecreasing f: bracket expansion then bisection.

    If f vanishes (within tol_f) on a whole segment, the midpoint of the segment
    is returned together with its end points.
    """
    lo, hi, _, _ = _bracket(f, lo, hi)
    a, c = lo, hi
    exact = None
    for _ in range(400):
        mid = 0.5 * (a + c)
        fm = f(mid)
        if fm == 0:
            exact = mid
            break
        if fm < 0:
            a = mid
        else:
            c = mid
        if c - a <= width and abs(fm) <= tol_f:
            break
        if c - a <= 4 * np.finfo(float).eps * max(1.0, abs(mid)):
            break
    root = 0.5 * (a + c) if exact is None else exact
    if abs(f(root - flat_probe)) <= tol_f and abs(f(root + flat_probe)) <= tol_f:
        left = _edge(lambda b: f(b) < -tol_f, lo, root, width)
        right = _edge(lambda b: f(b) > tol_f, hi, root, width)
        return 0.5 * (left + right), (left, right)
    return root, ((a, c) if exact is None else (root, root))


def find_b_star(problem: RefractionProblem):
    """Returns (b_star, kind, bracket); b_star is +-inf / None off the finite case."""
    kind = classify(problem)
    if kind is ThresholdKind.PLUS_INFINITY:
        return math.inf, kind, None
    if kind is ThresholdKind.MINUS_INFINITY:
        return -math.inf, kind, None
    if kind is ThresholdKind.INDIFFERENT:
        return None, kind, None
    tol = 1e-10 * (1 + abs(I_of_b(problem, 0.0)))
    root, bracket = bisect_root(lambda b: I_of_b(problem, b), tol)
    return root, kind, bracket


# ----------------------------------------------------------------------------
# value function and derivatives


def value_v_b(problem: RefractionProblem, b: float, x: float) -> float:
    """NPV of total costs under the refraction strategy at level b (b may be +-inf)."""
    sc = problem.scales
    if b == math.inf:
        return _free_kernel(sc, "X", x).integrate(problem.cost)
    if b == -math.inf:
        k = _free_kernel(sc, "Y", x)
        return k.integrate(problem.cost) + problem.beta * problem.delta / problem.q
    k = resolvent_kernel(problem, b, x)
    return k.integrate(problem.cost) + problem.beta * problem.delta * k.mass(b, math.inf)


def value_derivative(problem: RefractionProblem, b: float, x: float) -> float:
    """int h'(y) r_b(x, y) dy: equals v_b'(x) when b is the optimal level."""
    sc = problem.scales
    if b == math.inf:
        return _free_kernel(sc, "X", x).integrate(problem.cost, deriv=1)
    if b == -math.inf:
        return _free_kernel(sc, "Y", x).integrate(problem.cost, deriv=1)
    return resolvent_kernel(problem, b, x).integrate(problem.cost, deriv=1)


def u_b(problem: RefractionProblem, b: float, x: float) -> float:
    """d v_b(x) / db for x != b."""
    sc = problem.scales
    Phi, phi = sc.phi_q, sc.varphi_q
    s = x - b
    bracket = (phi - Phi) / (problem.delta * Phi) * math.exp(Phi * s)
    if s > 0:
        bracket += float(_M(sc, s).real) - sc.Wd.eval(s)
    return bracket * I_of_b(problem, b)


# ----------------------------------------------------------------------------
# solution object and optimality checks


@dataclass
class VerificationReport:
    b_star: float | None
    smooth_fit_residual: float | None
    inequality_violations: list = field(default_factory=list)
    convexity_violations: list = field(default_factory=list)
    dominance_violations: list = field(default_factory=list)
    monte_carlo: dict | None = None

    @property
    def passed(self) -> bool:
        smooth_ok = self.smooth_fit_residual is None or self.smooth_fit_residual <= 1e-6
        return smooth_ok and not (self.inequality_violations or self.convexity_violations
                                  or self.dominance_violations)

    def as_dict(self) -> dict:
        checks = [
            {"name": "smooth_fit", "passed": self.smooth_fit_residual is None
             or self.smooth_fit_residual <= 1e-6, "value": self.smooth_fit_residual},
            {"name": "variational_inequalities", "passed": not self.inequality_violations,
             "violations": self.inequality_violations},
            {"name": "convexity", "passed": not self.convexity_violations,
             "violations": self.convexity_violations},
            {"name": "dominance", "passed": not self.dominance_violations,
             "violations": self.dominance_violations},
        ]
        return {"b_star": self.b_star, "smooth_fit_residual": self.smooth_fit_residual,
                "passed": self.passed, "checks": checks, "monte_carlo": self.monte_carlo}


@dataclass
class RefractionSolution:
    problem: RefractionProblem
    b_star: float | None
    kind: ThresholdKind
    bracket: tuple | None = None
    diagnostics: VerificationReport | None = None

    @property
    def level(self) -> float:
        """The refraction level used for evaluation (0 by convention when indifferent)."""
        return 0.0 if self.kind is ThresholdKind.INDIFFERENT else self.b_star

    def value(self, x):
        return _grid(lambda xi: value_v_b(self.problem, self.level, xi), x)

    def derivative(self, x):
        return _grid(lambda xi: value_derivative(self.problem, self.level, xi), x)


def _grid(f, x):
    if np.ndim(x) == 0:
        return f(float(x))
    return np.array([f(float(xi)) for xi in np.asarray(x).ravel()]).reshape(np.shape(x))


def solve(problem: RefractionProblem) -> RefractionSolution:
    b, kind, bracket = find_b_star(problem)
    return RefractionSolution(problem, b, kind, bracket)


def verify_solution(problem: RefractionProblem, solution: RefractionSolution, grid,
                    level: float | None = None, offsets=(-1.0, -0.5, 0.5, 1.0),
                    ineq_tol=1e-8, dominance_tol=1e-7, convexity_tol=1e-9) -> VerificationReport:
    """Numerical optimality checks on ``grid``.

    ``level`` overrides the threshold used for v (to test deliberately wrong levels).
    """
    beta = problem.beta
    b = solution.level if level is None else level
    grid = np.sort(np.asarray(grid, dtype=float))
    deriv = np.array([value_derivative(problem, b, x) for x in grid])
    value = np.array([value_v_b(problem, b, x) for x in grid])

    report = VerificationReport(b_star=None if b is None else float(b), smooth_fit_residual=None)
    if math.isfinite(b) and solution.kind is not ThresholdKind.INDIFFERENT:
        report.smooth_fit_residual = abs(value_derivative(problem, b, b) - beta)

    if solution.kind is not ThresholdKind.INDIFFERENT:
        for x, dv in zip(grid, deriv):
            if x <= b and dv > beta + ineq_tol:
                report.inequality_violations.append({"x": float(x), "v_prime": float(dv), "rule": "v'<=beta"})
            if x > b and dv < beta - ineq_tol:
                report.inequality_violations.append({"x": float(x), "v_prime": float(dv), "rule": "v'>=beta"})

    drops = np.diff(deriv)
    for x, dd, dv in zip(grid[1:], drops, deriv[1:]):
        if dd < -convexity_tol * (1 + abs(dv)):
            report.convexity_violations.append({"x": float(x), "drop": float(dd)})

    if math.isfinite(b):
        rivals = [b + o for o in offsets]
    else:
        rivals = [float(grid[0]), float(np.median(grid)), float(grid[-1])]
    for rb in rivals:
        other = np.array([value_v_b(problem, rb, x) for x in grid])
        bad = value > other + dominance_tol * (1 + np.abs(other))
        for x, v, o in zip(grid[bad], value[bad], other[bad]):
            report.dominance_violations.append({"x": float(x), "b": float(rb),
                                                "v_b_star": float(v), "v_b": float(o)})
    return report
