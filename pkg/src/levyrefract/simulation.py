"""Monte Carlo for the refracted process dU = dX - delta 1{U > b} dt.

Paths are advanced in vectorised blocks.  Each path takes steps of length
min(dt, time to its next jump, time to its horizon), so jump epochs are exact;
between jumps the diffusion part is an Euler step and the refraction switch is
re-evaluated at the left end of each step.  Running costs use the left-endpoint
state with the discount factor integrated exactly over the step.

Randomness is derived from numpy SeedSequence((base_seed, block_index)) with a
fixed block size, so results do not depend on how blocks are scheduled.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate, special

from .costs import CostFunction
from .errors import ConfigError
from .levy_model import LevyModel

__all__ = [
    "SimConfig",
    "McEstimate",
    "sample_path",
    "estimate_npv",
    "estimate_mean_infimum",
    "estimate_occupation",
    "dt_convergence",
    "write_path_csv",
    "discount_tail_bound",
]

_DISCOUNT_TAIL = math.log(1e6)


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 10_000
    dt: float = 1e-3
    horizon: float | None = None
    base_seed: int = 0
    antithetic: bool = False
    block_size: int = 50_000

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive", "dt")
        if self.n_paths < 2:
            raise ConfigError("n_paths must be at least 2", "n_paths")
        if self.block_size < 2:
            raise ConfigError("block_size must be at least 2", "block_size")
        if self.antithetic and (self.n_paths % 2 or self.block_size % 2):
            raise ConfigError("antithetic pairing needs even n_paths and block_size", "antithetic")
        if self.horizon is not None and not self.horizon > 0:
            raise ConfigError("horizon must be positive", "horizon")

    def horizon_for(self, q: float) -> float:
        T = _DISCOUNT_TAIL / q if self.horizon is None else self.horizon
        if q * T < _DISCOUNT_TAIL - 1e-9:
            raise ConfigError(f"q*horizon = {q * T:.3f} < {_DISCOUNT_TAIL:.3f}", "horizon")
        return T


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n: int
    tail_bound: float = 0.0

    def agrees_with(self, value: float, k: float = 3.0) -> bool:
        return abs(value - self.mean) <= k * (self.stderr + self.tail_bound)

    def as_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "n": self.n, "tail_bound": self.tail_bound}


@dataclass(frozen=True)
class _Dynamics:
    model: LevyModel
    delta: float
    b: float
    q: float
    beta: float
    cost: CostFunction | None

    @classmethod
    def of(cls, problem, b):
        return cls(problem.model, problem.delta, b, problem.q, problem.beta, problem.cost)


def _simulate(dyn: _Dynamics, x0: float, n: int, rng: np.random.Generator, dt: float,
              horizon, antithetic: bool, track_min: bool = False, record: bool = False):
    """Advance ``n`` paths to their horizons.

    Returns (U_end, accumulated discounted cost, running minimum, record); arrays
    have shape (n,), antithetic partners sit at i and i + n/2.
    """
    model = dyn.model
    k = 2 if antithetic else 1
    m = n // k
    sign = np.array([1.0, -1.0][:k])[:, None]
    horizon = np.broadcast_to(np.asarray(horizon, dtype=float), (m,)).copy()
    U = np.full((k, m), float(x0))
    acc = np.zeros((k, m))
    low = U.copy()
    t = np.zeros(m)
    kappa = model.kappa
    next_jump = rng.exponential(1.0 / kappa, m) if kappa > 0 else np.full(m, np.inf)
    gamma, sigma, delta, b, q = model.gamma_tilde, model.sigma, dyn.delta, dyn.b, dyn.q
    path = [(0.0, float(x0))] if record else None

    act = np.flatnonzero(t < horizon)
    while act.size:
        full = act.size == m
        sel = slice(None) if full else act
        ta = t[sel]
        stop = np.minimum(next_jump[sel], horizon[sel])
        h = np.minimum(dt, stop - ta)
        Ua = U[:, sel]
        above = Ua > b
        if dyn.cost is not None:
            disc = np.exp(-q * ta) * (-np.expm1(-q * h)) / q
            running = dyn.cost.h(Ua) + dyn.beta * delta * above
            acc[:, sel] += disc * running
        Un = Ua + (gamma - delta * above) * h
        if sigma > 0:
            xi = rng.standard_normal(ta.size)
            Un = Un + sigma * np.sqrt(h) * sign * xi
        if track_min:
            # exact minimum of the Brownian bridge between the step endpoints
            u = rng.random((k, ta.size))
            spread = np.sqrt(np.maximum((Un - Ua) ** 2 - 2 * sigma**2 * h * np.log(u), 0.0))
            low[:, sel] = np.minimum(low[:, sel], 0.5 * (Ua + Un - spread))
        reached = h >= stop - ta
        tn = np.where(reached, stop, ta + h)
        jumped = reached & (next_jump[sel] <= horizon[sel])
        if jumped.any():
            where = np.flatnonzero(jumped)
            sizes = model.jumps.sample(rng, where.size)
            Un[:, where] -= sizes
            gidx = where if full else act[where]
            next_jump[gidx] += rng.exponential(1.0 / kappa, where.size)
            if track_min:
                low[:, gidx] = np.minimum(low[:, gidx], Un[:, where])
        U[:, sel] = Un
        t[sel] = tn
        if record:
            path.append((float(tn[0]), float(Un[0, 0])))
        act = act[t[act] < horizon[act]]
    return U.reshape(-1), acc.reshape(-1), low.reshape(-1), path


def _blocks(config: SimConfig):
    done, block = 0, 0
    while done < config.n_paths:
        size = min(config.block_size, config.n_paths - done)
        yield block, size
        done += size
        block += 1


def _rng(config: SimConfig, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((config.base_seed, block)))


def _summarise(samples: np.ndarray, antithetic_pairs: np.ndarray | None, n: int, tail: float) -> McEstimate:
    units = antithetic_pairs if antithetic_pairs is not None else samples
    return McEstimate(float(units.mean()), float(units.std(ddof=1) / math.sqrt(units.size)), n, tail)


def _pair_means(values: np.ndarray, size: int) -> np.ndarray:
    half = size // 2
    return 0.5 * (values[:half] + values[half:])


def discount_tail_bound(problem, b: float, x0: float, horizon: float) -> float:
    """Bound on E int_T^inf e^{-qt}|h(U_t) + beta delta 1{U_t > b}| dt.

    |U_t| <= |x0| + (|psi'(0)| + delta) t + |M_t| with E M_t^2 = psi''(0) t.
    """
    model, q, delta = problem.model, problem.q, problem.delta
    N, k1, k2 = problem.cost.growth_constants()
    drift = abs(model.mean_drift) + delta
    var = model.second_cumulant

    def moment(t):
        A = abs(x0) + drift * t
        s2 = var * t
        if N <= 2:
            mart = s2 ** (N / 2)
        else:
            mart = s2 ** (N / 2) * 2 ** (N / 2) * special.gamma((N + 1) / 2) / math.sqrt(math.pi)
        return 2 ** (N - 1) * (A**N + mart) if N >= 1 else 1.0

    f = lambda t: math.exp(-q * t) * (k1 + k2 * moment(t) + abs(problem.beta) * delta)
    val, _ = integrate.quad(f, horizon, np.inf)
    return float(val)


def sample_path(problem, b: float, x0: float, config: SimConfig, path_index: int, record: bool = False):
    """One path seeded by (base_seed, path_index); returns its discounted cost.

    With ``record`` the (t, U) trajectory of the path is returned as well.
    """
    T = config.horizon_for(problem.q)
    rng = np.random.default_rng(np.random.SeedSequence((config.base_seed, 2**32 + path_index)))
    _, acc, _, path = _simulate(_Dynamics.of(problem, b), x0, 1, rng, config.dt, T, False, record=record)
    return (float(acc[0]), path) if record else float(acc[0])


def estimate_npv(problem, b: float, x0: float, config: SimConfig) -> McEstimate:
    """E_x int_0^T e^{-qt}(h(U_t) + beta delta 1{U_t > b}) dt with a truncation bound."""
    T = config.horizon_for(problem.q)
    dyn = _Dynamics.of(problem, b)
    values, pairs = [], []
    for block, size in _blocks(config):
        _, acc, _, _ = _simulate(dyn, x0, size, _rng(config, block), config.dt, T, config.antithetic)
        values.append(acc)
        if config.antithetic:
            pairs.append(_pair_means(acc, size))
    values = np.concatenate(values)
    pair_arr = np.concatenate(pairs) if config.antithetic else None
    return _summarise(values, pair_arr, config.n_paths, discount_tail_bound(problem, b, x0, T))


def _exp_horizons(rng, q, size, antithetic):
    m = size // 2 if antithetic else size
    return rng.exponential(1.0 / q, m)


def estimate_mean_infimum(model: LevyModel, q: float, config: SimConfig) -> McEstimate:
    """E[-inf_{t <= e_q} X_t] for X_0 = 0 (the running minimum includes time 0)."""
    dyn = _Dynamics(model, 0.0, math.inf, q, 0.0, None)
    values, pairs = [], []
    for block, size in _blocks(config):
        rng = _rng(config, block)
        horizons = _exp_horizons(rng, q, size, config.antithetic)
        _, _, low, _ = _simulate(dyn, 0.0, size, rng, config.dt, horizons, config.antithetic, track_min=True)
        values.append(-low)
        if config.antithetic:
            pairs.append(_pair_means(-low, size))
    values = np.concatenate(values)
    return _summarise(values, np.concatenate(pairs) if config.antithetic else None, config.n_paths, 0.0)


def estimate_occupation(problem, b: float, x0: float, edges, config: SimConfig):
    """P(U_{e_q} in [edges[i], edges[i+1])) with binomial standard errors.

    Antithetic pairing is ignored here: bin indicators are not monotone in the noise.
    """
    config = replace(config, antithetic=False)
    dyn = _Dynamics(problem.model, problem.delta, b, problem.q, 0.0, None)
    ends = []
    for block, size in _blocks(config):
        rng = _rng(config, block)
        horizons = rng.exponential(1.0 / problem.q, size)
        U, _, _, _ = _simulate(dyn, x0, size, rng, config.dt, horizons, False)
        ends.append(U)
    ends = np.concatenate(ends)
    counts, _ = np.histogram(ends, bins=np.asarray(edges, dtype=float))
    p = counts / ends.size
    return p, np.sqrt(p * (1 - p) / ends.size)


def dt_convergence(problem, b: float, x0: float, config: SimConfig) -> dict:
    """Compare NPV estimates at dt and dt/2; C is the fitted first-order coefficient."""
    coarse = estimate_npv(problem, b, x0, config)
    fine = estimate_npv(problem, b, x0, replace(config, dt=config.dt / 2))
    diff = abs(coarse.mean - fine.mean)
    C = 2 * diff / config.dt
    combined = math.hypot(coarse.stderr, fine.stderr)
    return {"coarse": coarse, "fine": fine, "difference": diff, "C": C,
            "within_noise": diff <= 3 * combined}


def write_path_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "U"])
        w.writerows(records)
