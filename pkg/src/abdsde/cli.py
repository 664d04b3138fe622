"""Command-line front end: scenario files in, CSV reports out.

Commands (exit status 0 = pass/success, 1 = a check reported FAIL,
2 = error):

    abdsde solve        <scenario.yaml> --out solve.csv
    abdsde compare      <scenario.yaml> --out compare.csv
    abdsde duality      <scenario.yaml> --out duality.csv
    abdsde oracle-check <scenario.yaml> --out oracle.csv
    abdsde segment      <scenario.yaml> --out segments.csv

`--seed N`, `--paths P` and `--grid-h H` override the file values.  Every
CSV starts with a '#' comment block holding the scenario hash and the full
resolved parameters, so outputs are self-describing, and reruns of the same
file and seed are byte-identical.  Floats are printed with 17 significant
digits.  The scenario schema is documented in the README.
"""

from __future__ import annotations

import argparse
import hashlib
import sys

import numpy as np
import yaml

from .condexp import RegressionBackend, RegressionBasis
from .delays import affine_delay, constant_delay, DelaySpec, segment_interval
from .duality import duality_check, LinearDualityCoeffs
from .errors import AbdsdeError, ParseError, ValidationError
from .comparison import run_comparison
from .generators import builtin_generator, with_lipschitz
from .grids import make_grid
from .paths import sample_paths
from .scenario import make_scenario
from .solver import solve_backward_sweep
from .terminal import TerminalSpec
from .tree import oracle_solve, tree_for_grid


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _flatten(prefix: str, obj, out: list) -> None:
    if isinstance(obj, dict):
        for key in sorted(obj):
            _flatten(f"{prefix}{key}.", obj[key], out)
    elif isinstance(obj, (list, tuple)):
        out.append((prefix[:-1], "[" + ",".join(_fmt(v) for v in obj) + "]"))
    else:
        out.append((prefix[:-1], _fmt(obj)))


def resolved_lines(config: dict) -> list:
    out: list = []
    _flatten("", config, out)
    return [f"{k} = {v}" for k, v in out]


def scenario_hash(config: dict) -> str:
    blob = "\n".join(resolved_lines(config)).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# scenario files
# ---------------------------------------------------------------------------

def load_scenario(path: str) -> dict:
    """Parse and validate a scenario file; returns the resolved config dict.

    Parse failures raise ParseError; semantic failures raise
    ValidationError naming the underlying condition.
    """
    try:
        with open(path) as handle:
            raw = yaml.safe_load(handle)
    except OSError as exc:
        raise ParseError(f"cannot read scenario file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ParseError(f"scenario file {path} is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ParseError(f"scenario file {path} must hold a mapping at top level")
    config = _with_defaults(raw)
    _build_all(config)  # full validation pass
    return config


def _with_defaults(raw: dict) -> dict:
    config = {
        "grid": {"T": 1.0, "K": 0.0, "h": 0.25},
        "dims": {"m": 1, "d": 1, "l": 1},
        "generator": {"name": "zero", "params": {}},
        "terminal": {"name": "constant", "params": {"value": 1.0}},
        "backend": {"kind": "regression", "degree": 2, "ridge": 1e-8},
        "paths": {"count": 4096, "seed": 0},
        "solver": {"implicit_iters": 1},
    }
    for section, values in raw.items():
        if section in ("delay", "compare", "duality"):
            config[section] = values
        elif section in config and isinstance(values, dict):
            merged = dict(config[section])
            merged.update(values)
            config[section] = merged
        else:
            raise ValidationError(f"unknown scenario section '{section}'")
    return config


def _delay_form(value):
    if isinstance(value, dict):
        return affine_delay(float(value["a"]), float(value.get("b", 0.0)))
    return constant_delay(float(value))


def _build_delay(config: dict, grid):
    section = config.get("delay")
    if section is None:
        return None
    delta = _delay_form(section["delta"])
    zeta = _delay_form(section.get("zeta", section["delta"]))
    return DelaySpec(delta=delta, zeta=zeta, K=grid.K)


def _build_generator(section: dict, dims: dict):
    params = dict(section.get("params") or {})
    spec = builtin_generator(section["name"], m=dims["m"], d=dims["d"],
                             l=dims["l"], **params)
    override = section.get("lipschitz")
    if override:
        spec = with_lipschitz(spec, **{
            key: float(override[key]) for key in ("c", "alpha1", "alpha2")
            if key in override})
    return spec


def _build_backend(config: dict, grid):
    section = config["backend"]
    kind = section.get("kind", "regression")
    if kind == "regression":
        basis = RegressionBasis(degree=int(section.get("degree", 2)),
                                ridge=float(section.get("ridge", 1e-8)))
        return RegressionBackend(basis), None
    if kind == "exact":
        tree = tree_for_grid(grid)
        return tree.backend(), tree
    raise ValidationError(f"unknown backend kind '{kind}'")


def _build_all(config: dict):
    """Construct every runtime object, mapping domain errors to ValidationError."""
    try:
        g = config["grid"]
        grid = make_grid(float(g["T"]), float(g["K"]), float(g["h"]))
        delay = _build_delay(config, grid)
        generator = _build_generator(config["generator"], config["dims"])
        term = config["terminal"]
        terminal = TerminalSpec(name=term["name"], params=dict(term.get("params") or {}))
        scenario = make_scenario(grid, generator, terminal, delay=delay,
                                 implicit_iters=int(config["solver"]["implicit_iters"]))
        backend, tree = _build_backend(config, grid)
    except (ParseError, ValidationError):
        raise
    except AbdsdeError as exc:
        raise ValidationError(f"{type(exc).__name__}: {exc}") from exc
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed scenario: {exc!r}") from exc
    return grid, scenario, backend, tree


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def _write_csv(path: str, config: dict, header: str, rows, extra_comments=()):
    lines = [f"# scenario_hash = {scenario_hash(config)}"]
    lines += [f"# {line}" for line in resolved_lines(config)]
    lines += [f"# {line}" for line in extra_comments]
    lines.append(header)
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w") as handle:
        handle.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _cmd_solve(config, out_path):
    grid, scenario, backend, tree = _build_all(config)
    paths = tree.ensemble if tree is not None else sample_paths(
        grid, config["dims"]["d"], config["dims"]["l"],
        int(config["paths"]["count"]), int(config["paths"]["seed"]))
    sol = solve_backward_sweep(scenario, paths, backend)
    P = paths.n_paths
    y = sol.Y.values[:, :, 0]
    abs_z = np.sqrt(np.sum(sol.Z.values ** 2, axis=(2, 3)))
    rows = []
    for k in range(grid.n_nodes):
        rows.append((grid.time(k), y[:, k].mean(),
                     y[:, k].std(ddof=1) / np.sqrt(P) if P > 1 else 0.0,
                     abs_z[:, k].mean(),
                     abs_z[:, k].std(ddof=1) / np.sqrt(P) if P > 1 else 0.0))
    _write_csv(out_path, config, "t,mean_Y,stderr_Y,mean_absZ,stderr_absZ", rows)
    return 0


def _cmd_compare(config, out_path):
    section = config.get("compare")
    if not section:
        raise ValidationError("compare command needs a 'compare' section")
    grid, scenario1, backend, tree = _build_all(config)
    gen2 = _build_generator(section.get("generator", config["generator"]),
                            config["dims"])
    term2_cfg = section.get("terminal", config["terminal"])
    term2 = TerminalSpec(name=term2_cfg["name"],
                         params=dict(term2_cfg.get("params") or {}))
    scenario2 = make_scenario(grid, gen2, term2, delay=scenario1.delay,
                              implicit_iters=scenario1.implicit_iters)
    paths = tree.ensemble if tree is not None else sample_paths(
        grid, config["dims"]["d"], config["dims"]["l"],
        int(config["paths"]["count"]), int(config["paths"]["seed"]))
    eps = section.get("epsilon")
    report = run_comparison(scenario1, scenario2, paths, backend,
                            epsilon=None if eps is None else float(eps))
    per_node = report.violation_fraction_per_node()
    rows = [(grid.time(k), report.mean_margin[k], report.min_margin[k],
             per_node[k]) for k in range(grid.n_nodes)]
    comments = (f"epsilon = {_fmt(report.epsilon)}",
                f"run_tolerance = {_fmt(report.run_tolerance)}",
                f"violation_fraction = {_fmt(report.violation_fraction())}",
                f"result = {'PASS' if report.passed else 'FAIL'}")
    _write_csv(out_path, config, "t,mean_margin,min_margin,violation_fraction_eps",
               rows, comments)
    return 0 if report.passed else 1


def _cmd_duality(config, out_path):
    section = config.get("duality")
    if not section:
        raise ValidationError("duality command needs a 'duality' section")
    _build_all(config)  # validates grid/terminal sections
    g = config["grid"]
    term = config["terminal"]
    try:
        coeffs = LinearDualityCoeffs(
            mu=float(section.get("mu", 0.0)),
            mu_bar=float(section.get("mu_bar", 0.0)),
            sigma=tuple(np.atleast_1d(section.get("sigma", [0.0])).astype(float)),
            sigma_bar=tuple(np.atleast_1d(section.get("sigma_bar", [0.0])).astype(float)),
            kappa=tuple(np.atleast_1d(section.get("kappa", [0.0])).astype(float)),
            rho=float(section.get("rho", 0.0)),
            delta=float(g["K"]),
            t0=float(section.get("t0", g["K"])),
            terminal=TerminalSpec(name=term["name"],
                                  params=dict(term.get("params") or {})))
    except AbdsdeError as exc:
        raise ValidationError(f"{type(exc).__name__}: {exc}") from exc
    tol_mean = section.get("tol_mean")
    tol_max = section.get("tol_max")
    report = duality_check(
        coeffs, T=float(g["T"]), h=float(g["h"]),
        P=int(config["paths"]["count"]),
        n_outer=int(section.get("outer", 64)),
        inner=int(section.get("inner", 2048)),
        seed=int(config["paths"]["seed"]),
        tol_mean=None if tol_mean is None else float(tol_mean),
        tol_max=None if tol_max is None else float(tol_max))
    rows = [(j, float(r)) for j, r in enumerate(report.residuals)]
    rows.append(("summary", report.mean_residual))
    comments = (f"mean_residual = {_fmt(report.mean_residual)}",
                f"max_residual = {_fmt(report.max_residual)}",
                f"tol_mean = {_fmt(report.tol_mean)}",
                f"tol_max = {_fmt(report.tol_max)}",
                f"result = {'PASS' if report.passed else 'FAIL'}")
    _write_csv(out_path, config, "outer_path,residual", rows, comments)
    return 0 if report.passed else 1


def _cmd_oracle_check(config, out_path, tolerance: float = 1e-10):
    grid, scenario, _, _ = _build_all(config)
    tree = tree_for_grid(grid)
    sol = solve_backward_sweep(scenario, tree.ensemble, tree.backend())
    exact = oracle_solve(scenario, tree)
    d_y = np.abs(sol.Y.values - exact.Y.values).max(axis=(0, 2))
    d_z = np.abs(sol.Z.values - exact.Z.values).max(axis=(0, 2, 3))
    rows = [(grid.time(k), float(d_y[k]), float(d_z[k]))
            for k in range(grid.n_nodes)]
    worst = max(float(d_y.max()), float(d_z.max()))
    passed = worst <= tolerance
    comments = (f"max_abs_difference = {_fmt(worst)}",
                f"tolerance = {_fmt(tolerance)}",
                f"result = {'PASS' if passed else 'FAIL'}")
    _write_csv(out_path, config, "t,max_abs_dY,max_abs_dZ", rows, comments)
    return 0 if passed else 1


def _cmd_segment(config, out_path):
    grid, scenario, _, _ = _build_all(config)
    if scenario.delay is None:
        raise ValidationError("segment command needs a 'delay' section")
    seg = segment_interval(scenario.delay, grid)
    rows = [(i, t) for i, t in enumerate(seg.points)]
    _write_csv(out_path, config, "i,t_i", rows, (f"N = {seg.N}",))
    return 0


_COMMANDS = {
    "solve": _cmd_solve,
    "compare": _cmd_compare,
    "duality": _cmd_duality,
    "oracle-check": _cmd_oracle_check,
    "segment": _cmd_segment,
}


def run(command: str, scenario_path: str, out_path: str,
        seed: int | None = None, n_paths: int | None = None,
        grid_h: float | None = None) -> int:
    """Load, override, dispatch; returns the process exit status."""
    try:
        config = load_scenario(scenario_path)
        if seed is not None:
            config["paths"]["seed"] = int(seed)
        if n_paths is not None:
            config["paths"]["count"] = int(n_paths)
        if grid_h is not None:
            config["grid"]["h"] = float(grid_h)
            _build_all(config)  # revalidate commensurability
        return _COMMANDS[command](config, out_path)
    except AbdsdeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="abdsde",
        description="numerical laboratory for anticipated backward doubly "
                    "stochastic differential equations")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("scenario", help="scenario file (YAML)")
    parser.add_argument("--out", required=True, help="output CSV path")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--paths", type=int, default=None)
    parser.add_argument("--grid-h", type=float, default=None)
    args = parser.parse_args(argv)
    return run(args.command, args.scenario, args.out,
               seed=args.seed, n_paths=args.paths, grid_h=args.grid_h)


if __name__ == "__main__":
    sys.exit(main())
