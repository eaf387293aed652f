"""Command-line front end.

    levyrefract --config run.yaml [--out DIR] [--command NAME] [--seed N]

Commands: solve, curve, convergence, simulate, check.
Exit codes: 0 ok, 2 config fault, 3 numerical failure, 4 check-suite violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import reflection, refraction, simulation
from .costs import LinearCost, PolynomialCost, QuadraticCost
from .errors import ConfigError, LevyRefractError, ModelError, NumericalError
from .levy_model import LevyModel, PhaseTypeLaw, weibull_standin

log = logging.getLogger("levyrefract")

COMMANDS = ("solve", "curve", "convergence", "simulate", "check")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4


# ----------------------------------------------------------------------------
# configuration


@dataclass
class PhaseTypeBlock:
    alpha: list
    T: list


@dataclass
class ModelBlock:
    gamma_tilde: float
    sigma: float = 0.0
    kappa: float = 0.0
    phase_type: PhaseTypeBlock | None = None


@dataclass
class CostBlock:
    kind: str = "quadratic"
    params: dict = field(default_factory=dict)


@dataclass
class ProblemBlock:
    q: float
    delta: float
    beta: float
    cost: CostBlock = field(default_factory=CostBlock)


@dataclass
class McBlock:
    n_paths: int = 10_000
    dt: float = 1e-3
    seed: int = 0
    antithetic: bool = False


@dataclass
class CommandBlock:
    name: str = "solve"
    x_grid: list = field(default_factory=lambda: list(np.linspace(-3, 3, 61)))
    b_offsets: list = field(default_factory=lambda: [-1.0, -0.5, 0.5, 1.0])
    delta_grid: list = field(default_factory=lambda: list(reflection.DEFAULT_DELTA_GRID))
    mc: McBlock = field(default_factory=McBlock)


@dataclass
class OutputBlock:
    directory: str = "out"
    formats: list = field(default_factory=lambda: ["csv", "json"])


@dataclass
class RunConfig:
    model: ModelBlock
    problem: ProblemBlock
    command: CommandBlock = field(default_factory=CommandBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    def to_dict(self) -> dict:
        return asdict(self)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    # -- builders -----------------------------------------------------------
    def build_model(self) -> LevyModel:
        m = self.model
        jumps = None
        if m.phase_type is not None:
            jumps = PhaseTypeLaw(np.array(m.phase_type.alpha, float), np.array(m.phase_type.T, float))
        return LevyModel(m.gamma_tilde, m.sigma, m.kappa, jumps)

    def build_cost(self):
        c = self.problem.cost
        if c.kind == "quadratic":
            return QuadraticCost(**c.params)
        if c.kind == "linear":
            return LinearCost(**c.params)
        if c.kind == "polynomial":
            return PolynomialCost(**c.params)
        raise ConfigError(f"unknown cost kind {c.kind!r}", "problem.cost.kind")

    def build_problem(self) -> refraction.RefractionProblem:
        p = self.problem
        return refraction.RefractionProblem(self.build_model(), p.delta, p.q, p.beta, self.build_cost())

    def sim_config(self) -> simulation.SimConfig:
        mc = self.command.mc
        return simulation.SimConfig(n_paths=mc.n_paths, dt=mc.dt, base_seed=mc.seed,
                                    antithetic=mc.antithetic)


_COST_PARAMS = {"quadratic": {"alpha", "shift"}, "linear": {"alpha", "eta"}, "polynomial": {"coeffs"}}


class _Reader:
    """Typed access to a nested mapping with field-path (and YAML line) diagnostics."""

    def __init__(self, data, lines=None, path=""):
        self.data, self.lines, self.path = data, lines or {}, path

    def _where(self, key):
        full = f"{self.path}.{key}" if self.path else key
        line = self.lines.get(full, self.lines.get(self.path))
        return full, (f" (line {line})" if line else "")

    def fail(self, key, msg):
        full, where = self._where(key)
        raise ConfigError(f"{msg}{where}", full)

    def sub(self, key, required=True):
        val = self.data.get(key)
        if val is None:
            if required:
                self.fail(key, "missing block")
            return None
        if not isinstance(val, dict):
            self.fail(key, "expected a mapping")
        full = f"{self.path}.{key}" if self.path else key
        return _Reader(val, self.lines, full)

    def number(self, key, default=None, positive=False, nonneg=False, integer=False):
        val = self.data.get(key, default)
        if val is None:
            self.fail(key, "required number is missing")
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            self.fail(key, f"expected a number, got {val!r}")
        if integer and int(val) != val:
            self.fail(key, "expected an integer")
        val = int(val) if integer else float(val)
        if not math.isfinite(val):
            self.fail(key, "must be finite")
        if positive and not val > 0:
            self.fail(key, "must be positive")
        if nonneg and val < 0:
            self.fail(key, "must be nonnegative")
        return val

    def numbers(self, key, default=None, nonempty=True):
        val = self.data.get(key, default)
        if isinstance(val, dict) and set(val) == {"start", "stop", "num"}:
            val = list(np.linspace(val["start"], val["stop"], int(val["num"])))
        if not isinstance(val, (list, tuple)):
            self.fail(key, "expected a list of numbers or {start, stop, num}")
        if nonempty and not val:
            self.fail(key, "must not be empty")
        out = []
        for v in val:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                self.fail(key, f"non-numeric entry {v!r}")
            out.append(float(v))
        return out


def _line_map(text: str) -> dict:
    """Field path -> 1-based line number of its key in the YAML source."""
    out = {}

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                path = f"{prefix}.{k.value}" if prefix else str(k.value)
                out[path] = k.start_mark.line + 1
                walk(v, path)

    try:
        walk(yaml.compose(text), "")
    except yaml.YAMLError:
        pass
    return out


def parse_config(data: dict, lines: dict | None = None) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping", "")
    r = _Reader(data, lines)
    m = r.sub("model")
    pt = m.data.get("phase_type")
    kappa = m.number("kappa", 0.0, nonneg=True)
    if pt == "weibull_standin":
        law = weibull_standin()
        phase = PhaseTypeBlock(law.alpha.tolist(), law.T.tolist())
    elif pt is None:
        phase = None
        if kappa > 0:
            m.fail("phase_type", "kappa > 0 needs a phase_type block")
    else:
        ptr = m.sub("phase_type")
        alpha = ptr.numbers("alpha")
        T = ptr.data.get("T")
        if not isinstance(T, list) or not all(isinstance(row, list) for row in T):
            ptr.fail("T", "expected a matrix (list of rows)")
        phase = PhaseTypeBlock(alpha, [[float(v) for v in row] for row in T])
    model = ModelBlock(m.number("gamma_tilde"), m.number("sigma", 0.0, nonneg=True), kappa, phase)

    p = r.sub("problem")
    c = p.sub("cost", required=False)
    cost = CostBlock()
    if c is not None:
        kind = c.data.get("kind", "quadratic")
        if kind not in _COST_PARAMS:
            c.fail("kind", f"unknown cost kind {kind!r}; expected one of {sorted(_COST_PARAMS)}")
        params = c.data.get("params") or {}
        if not isinstance(params, dict):
            c.fail("params", "expected a mapping")
        extra = set(params) - _COST_PARAMS[kind]
        if extra:
            c.fail("params", f"unknown parameters {sorted(extra)} for {kind} cost")
        pr = c.sub("params", required=False) or _Reader({}, lines, c.path + ".params")
        clean = {}
        for k in params:
            clean[k] = pr.numbers(k) if k == "coeffs" else pr.number(k)
        cost = CostBlock(kind, clean)
    problem = ProblemBlock(p.number("q", positive=True), p.number("delta", positive=True),
                           p.number("beta"), cost)

    cmd = CommandBlock()
    cr = r.sub("command", required=False)
    if cr is not None:
        name = cr.data.get("name", "solve")
        if name not in COMMANDS:
            cr.fail("name", f"unknown command {name!r}; expected one of {list(COMMANDS)}")
        mc = McBlock()
        mr = cr.sub("mc", required=False)
        if mr is not None:
            mc = McBlock(mr.number("n_paths", 10_000, positive=True, integer=True),
                         mr.number("dt", 1e-3, positive=True),
                         mr.number("seed", 0, nonneg=True, integer=True),
                         bool(mr.data.get("antithetic", False)))
        cmd = CommandBlock(name, cr.numbers("x_grid", cmd.x_grid), cr.numbers("b_offsets", cmd.b_offsets),
                           cr.numbers("delta_grid", cmd.delta_grid), mc)
        if any(d <= 0 for d in cmd.delta_grid):
            cr.fail("delta_grid", "entries must be positive")

    out = OutputBlock()
    orr = r.sub("output", required=False)
    if orr is not None:
        formats = orr.data.get("formats", out.formats)
        if not isinstance(formats, list) or not set(formats) <= {"csv", "json"}:
            orr.fail("formats", "expected a subset of [csv, json]")
        out = OutputBlock(str(orr.data.get("directory", out.directory)), list(formats))

    cfg = RunConfig(model, problem, cmd, out)
    _validate_modules(cfg, lines or {})
    return cfg


def _validate_modules(cfg: RunConfig, lines: dict):
    """Surface module-level invariant violations as config faults."""
    try:
        cfg.build_problem()
        cfg.sim_config()
    except ModelError as exc:
        line = lines.get("model") or lines.get("problem")
        raise ConfigError(f"{exc}" + (f" (near line {line})" if line else ""), "model") from exc


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark else ""
        raise ConfigError(f"YAML syntax error{where}: {exc}", "") from exc
    return parse_config(data, _line_map(text))


# ----------------------------------------------------------------------------
# commands


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _write_json(path: Path, doc):
    path.write_text(json.dumps(doc, indent=2, default=_jsonable))


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serialisable: {type(obj)}")


def _finite_or_label(b):
    if b is None:
        return "indifferent"
    if math.isinf(b):
        return "+inf" if b > 0 else "-inf"
    return b


def cmd_solve(cfg: RunConfig, out: Path) -> int:
    problem = cfg.build_problem()
    sol = refraction.solve(problem)
    grid = np.asarray(cfg.command.x_grid)
    report = refraction.verify_solution(problem, sol, grid)
    doc = report.as_dict()
    doc["b_star"] = _finite_or_label(sol.b_star)
    doc["kind"] = sol.kind.value
    doc["bracket"] = sol.bracket
    doc["I_limits"] = [str(v) if math.isinf(v) else v for v in refraction.I_limits(problem)]
    doc["value_grid"] = [{"x": float(x), "v": float(sol.value(x)), "v_prime": float(sol.derivative(x))}
                         for x in grid]
    if "json" in cfg.output.formats:
        _write_json(out / "solve.json", doc)
    if "csv" in cfg.output.formats:
        _write_csv(out / "solve_values.csv", ["x", "v", "v_prime"],
                   [(r["x"], r["v"], r["v_prime"]) for r in doc["value_grid"]])
    print(json.dumps({"b_star": doc["b_star"], "kind": doc["kind"],
                      "smooth_fit_residual": doc["smooth_fit_residual"], "passed": doc["passed"]}))
    return EXIT_OK


def cmd_curve(cfg: RunConfig, out: Path) -> int:
    problem = cfg.build_problem()
    sol = refraction.solve(problem)
    grid = np.asarray(cfg.command.x_grid)
    level = sol.level
    offsets = cfg.command.b_offsets if math.isfinite(level) else []
    header = ["x", "v_b_star", "v_prime_b_star"] + [f"v_b_offset_{o:+g}" for o in offsets]
    rows = []
    for x in grid:
        row = [float(x), float(sol.value(x)), float(sol.derivative(x))]
        row += [refraction.value_v_b(problem, level + o, float(x)) for o in offsets]
        rows.append(row)
    _write_csv(out / "curve.csv", header, rows)
    marks = [("b_star", 0.0, level)] + [(f"offset_{o:+g}", o, level + o) for o in offsets]
    if math.isfinite(level):
        _write_csv(out / "curve_markers.csv", ["label", "offset", "b", "v_b_at_b"],
                   [(lab, o, b, refraction.value_v_b(problem, b, b)) for lab, o, b in marks])
    print(json.dumps({"b_star": _finite_or_label(sol.b_star), "rows": len(rows)}))
    return EXIT_OK


def reflection_problem(cfg: RunConfig) -> reflection.ReflectionProblem:
    """Y = X - delta t held fixed; beta_tilde = -beta."""
    model_Y = cfg.build_model().shifted(cfg.problem.delta)
    return reflection.ReflectionProblem(model_Y, cfg.problem.q, -cfg.problem.beta, cfg.build_cost())


def cmd_convergence(cfg: RunConfig, out: Path) -> int:
    rp = reflection_problem(cfg)
    res = reflection.convergence_sweep(rp, cfg.command.delta_grid, cfg.command.x_grid)
    _write_csv(out / "convergence_thresholds.csv", ["delta", "b_star", "delta_phi_q", "delta_W_at_1"],
               res.threshold_table())
    _write_csv(out / "convergence_values.csv", ["delta", "x", "v_tilde"], res.value_table())
    doc = {"b_star_inf": res.b_star_inf,
           "rows": [{"delta": r.delta, "b_star": r.b_star, "delta_phi_q": r.delta_phi_q,
                     "delta_W_at_1": r.delta_W_at_1} for r in res.rows]}
    if "json" in cfg.output.formats:
        _write_json(out / "convergence.json", doc)
    print(json.dumps({"b_star_inf": res.b_star_inf, "deltas": len(res.rows)}))
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    problem = cfg.build_problem()
    sol = refraction.solve(problem)
    sim = cfg.sim_config()
    rows = []
    for x in cfg.command.x_grid:
        est = simulation.estimate_npv(problem, sol.level, x, sim)
        analytic = float(sol.value(x))
        rows.append({"x": x, "analytic": analytic, **est.as_dict(), "agrees": est.agrees_with(analytic)})
    _, path = simulation.sample_path(problem, sol.level, cfg.command.x_grid[0], sim, 0, record=True)
    simulation.write_path_csv(out / "path_0.csv", path)
    if "json" in cfg.output.formats:
        _write_json(out / "simulate.json", {"b_star": _finite_or_label(sol.b_star), "estimates": rows})
    if "csv" in cfg.output.formats:
        _write_csv(out / "simulate.csv", ["x", "analytic", "mean", "stderr", "n", "tail_bound"],
                   [(r["x"], r["analytic"], r["mean"], r["stderr"], r["n"], r["tail_bound"]) for r in rows])
    print(json.dumps({"b_star": _finite_or_label(sol.b_star), "agree": all(r["agrees"] for r in rows)}))
    return EXIT_OK


def cmd_check(cfg: RunConfig, out: Path) -> int:
    problem = cfg.build_problem()
    sol = refraction.solve(problem)
    grid = np.asarray(cfg.command.x_grid)
    report = refraction.verify_solution(problem, sol, grid, offsets=tuple(cfg.command.b_offsets))
    checks = report.as_dict()["checks"]

    level = sol.level
    b_ref = level if math.isfinite(level) else 0.0
    masses = [refraction.resolvent_kernel(problem, b_ref, float(x)).mass() for x in grid[:: max(1, grid.size // 10)]]
    mass_err = max(abs(m - 1 / problem.q) for m in masses)
    checks.append({"name": "resolvent_mass", "passed": mass_err <= 1e-7, "value": mass_err})

    bs = np.linspace(b_ref - 5, b_ref + 5, 51)
    I = np.array([refraction.I_of_b(problem, b) for b in bs])
    drop = float(np.max(-np.diff(I), initial=0.0))
    checks.append({"name": "I_monotone", "passed": drop <= 1e-10 * (1 + np.max(np.abs(I))), "value": drop})

    if math.isfinite(level) and sol.kind is refraction.ThresholdKind.FINITE:
        eps = 1e-5
        deriv = [(refraction.value_v_b(problem, level + eps, x) - refraction.value_v_b(problem, level - eps, x))
                 / (2 * eps) for x in (level - 1, level + 1)]
        worst = max(abs(d) for d in deriv)
        checks.append({"name": "first_order_condition", "passed": worst <= 1e-5, "value": worst})

    passed = all(c["passed"] for c in checks)
    _write_json(out / "check.json", {"b_star": _finite_or_label(sol.b_star), "passed": passed, "checks": checks})
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}")
    return EXIT_OK if passed else EXIT_CHECK


_DISPATCH = {"solve": cmd_solve, "curve": cmd_curve, "convergence": cmd_convergence,
             "simulate": cmd_simulate, "check": cmd_check}


def run(cfg: RunConfig) -> int:
    out = Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    return _DISPATCH[cfg.command.name](cfg, out)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="levyrefract", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, help="YAML run configuration")
    ap.add_argument("--out", help="output directory (overrides output.directory)")
    ap.add_argument("--command", choices=COMMANDS, help="command (overrides command.name)")
    ap.add_argument("--seed", type=int, help="Monte Carlo seed (overrides command.mc.seed)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.command:
            cfg.command = replace(cfg.command, name=args.command)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be nonnegative", "command.mc.seed")
            cfg.command = replace(cfg.command, mc=replace(cfg.command.mc, seed=args.seed))
        if args.out:
            cfg.output = replace(cfg.output, directory=args.out)
        return run(cfg)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, LevyRefractError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
