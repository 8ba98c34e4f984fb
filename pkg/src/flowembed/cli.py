"""Command line driver: JSON config in, CSV out.

Usage::

    flowembed certify --config run.json [--output out.csv] [--override map.h=0.01]
    flowembed mu-check --config run.json
    flowembed field-export --config run.json
    flowembed slope --config run.json

Every output starts with a ``# key=value`` block holding the fully
materialised configuration, followed by a header row and data rows.
Exit codes: 0 success, 1 a bound/order check failed, 2 configuration
error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import sys

import numpy as np

from . import __version__
from .averaging import InterpField, plan_order
from .certify import (
    DEFAULT_SAFETY_FACTOR,
    ErrorReport,
    epsilon_slope_check,
    epsilon_used,
    mu_order_check,
    mu_radius,
    order_sweep,
)
from .flow import FlowError, IntegratorConfig
from .maps import (
    Domain,
    EulerStep,
    Identity,
    LinearScalar,
    SampleGrid,
    StdSymplectic,
    Translation,
    real_grid,
)

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

CERTIFY_COLUMNS = [
    "m", "epsilon_used", "delta", "measured_error", "bound_poly", "bound_exp",
    "n_samples", "integrator_discrepancy", "tolerance_limited", "satisfied", "failure",
]
MU_COLUMNS = ["m", "mu0", "E_mu0", "E_half", "E_quarter", "observed_order", "inconclusive"]
SLOPE_COLUMNS = ["m", "h", "epsilon_est", "measured_error", "fitted_slope"]

DEFAULTS = {
    "map": {"family": "identity"},
    "domain": {"delta": 0.5},
    "grid": {"real_points_per_axis": 21, "complex_ring_samples": 8},
    "integrator": {"abs_tol": 1e-13, "rel_tol": 1e-13, "max_steps": 100_000, "min_step": 1e-12},
    "run": {
        "m": 2,
        "m_max": 20,
        "mu0": None,
        "sample_count": 9,
        "h_values": [0.02, 0.01, 0.005],
        "safety_factor": DEFAULT_SAFETY_FACTOR,
        "epsilon": None,
        "output": None,
    },
}

FAMILY_PARAMS = {
    "identity": {"dimension": 1},
    "translation": {"c": None},
    "linear_scalar": {"lam": None},
    "euler_step": {"field": "pendulum", "h": None},
    "std_symplectic": {"eps_p": None},
}


class ConfigError(ValueError):
    pass


def fmt(value):
    """17 significant digits for floats so every row parses back bit-exactly."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % value
    return str(value)


def parse_value(text):
    if text == "":
        return None
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _merge(base, extra):
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def apply_override(cfg, assignment):
    """Set ``a.b.c=value`` in ``cfg``; ``value`` is read as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    path, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    keys = path.split(".")
    node = cfg
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override path {path!r} crosses a non-object")
    node[keys[-1]] = value


def materialise(raw):
    """Fill every default into a raw config dict."""
    cfg = _merge(DEFAULTS, raw)
    family = cfg["map"].get("family")
    if family not in FAMILY_PARAMS:
        raise ConfigError(f"unknown map family {family!r}; choose from {sorted(FAMILY_PARAMS)}")
    cfg["map"] = _merge({"family": family, **FAMILY_PARAMS[family]}, cfg["map"])
    return cfg


def build_map(spec):
    family = spec["family"]
    try:
        if family == "identity":
            return Identity(int(spec["dimension"]))
        if family == "translation":
            return Translation(tuple(spec["c"]))
        if family == "linear_scalar":
            return LinearScalar(float(spec["lam"]))
        if family == "euler_step":
            return EulerStep(spec["field"], float(spec["h"]))
        if family == "std_symplectic":
            return StdSymplectic(float(spec["eps_p"]))
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"bad parameters for map family {family!r}: {exc}") from exc
    raise ConfigError(f"unknown map family {family!r}")


class Experiment:
    """Validated objects built from a materialised config."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.map = build_map(cfg["map"])
        d = cfg["domain"]
        missing = [k for k in ("lower", "upper") if k not in d]
        if missing:
            raise ConfigError(f"domain.{missing[0]} is required")
        try:
            self.domain = Domain(tuple(d["lower"]), tuple(d["upper"]), float(d["delta"]))
            self.grid = SampleGrid(**cfg["grid"])
            self.integrator = IntegratorConfig(**cfg["integrator"])
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc
        if self.domain.dimension != self.map.dimension:
            raise ConfigError(
                f"domain has {self.domain.dimension} axes but the map acts on {self.map.dimension}"
            )
        if self.grid.real_points_per_axis**self.domain.dimension > 10_000:
            raise ConfigError("real grid exceeds 10000 points")
        run = cfg["run"]
        self.safety = float(run["safety_factor"])
        if not self.safety >= 1:
            raise ConfigError("run.safety_factor must be >= 1")
        self.epsilon_override = None if run["epsilon"] is None else float(run["epsilon"])
        m = run["m"]
        self.orders = [int(v) for v in (m if isinstance(m, list) else [m])]
        if not self.orders or min(self.orders) < 1:
            raise ConfigError("run.m must be a positive integer or a list of them")
        self.m_max = int(run["m_max"])
        if self.m_max < 1:
            raise ConfigError("run.m_max must be >= 1")

    def epsilon_used(self):
        return epsilon_used(self.map, self.domain, self.grid, self.safety, self.epsilon_override)


def _flatten(prefix, node, out):
    for key, value in node.items():
        path = f"{prefix}.{key}" if prefix else key
        if isinstance(value, dict):
            _flatten(path, value, out)
        else:
            out[path] = json.dumps(value)
    return out


def write_csv(stream, metadata, columns, rows):
    for key, value in metadata.items():
        stream.write(f"# {key}={value}\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(row.get(c)) for c in columns])


def read_csv(stream):
    """Parse an output file into ``(metadata, rows)``; rows map column to parsed value."""
    metadata, lines = {}, []
    for line in stream:
        if line.startswith("# "):
            key, _, value = line[2:].rstrip("\n").partition("=")
            metadata[key] = value
        else:
            lines.append(line)
    reader = csv.DictReader(io.StringIO("".join(lines)))
    rows = [{k: parse_value(v) for k, v in row.items()} for row in reader]
    return metadata, rows


def report_row(rep):
    return {
        "m": rep.m,
        "epsilon_used": rep.epsilon_used,
        "delta": rep.delta,
        "measured_error": rep.measured_error,
        "bound_poly": rep.bound_poly,
        "bound_exp": rep.bound_exp,
        "n_samples": rep.n_samples,
        "integrator_discrepancy": rep.integrator_discrepancy,
        "tolerance_limited": rep.tolerance_limited,
        "satisfied": rep.satisfied,
        "failure": rep.failure,
    }


def report_from_row(row):
    return ErrorReport(
        m=row["m"],
        measured_error=float(row["measured_error"]),
        bound_poly=float(row["bound_poly"]),
        bound_exp=None if row["bound_exp"] is None else float(row["bound_exp"]),
        epsilon_used=float(row["epsilon_used"]),
        delta=float(row["delta"]),
        n_samples=row["n_samples"],
        integrator_discrepancy=float(row["integrator_discrepancy"]),
        failure=row["failure"] or "",
    )


def _hypothesis_message(eps, delta):
    return (
        f"eps_used={eps:.6g}, delta={delta:.6g} give eps/delta={eps / delta:.6g}, "
        f"violating the hypothesis eps/delta <= 1/(6e) = {1 / (6 * math.e):.6g}"
    )


def cmd_certify(exp):
    eps = exp.epsilon_used()
    if eps > 0 and not plan_order(eps, exp.domain.delta).admissible:
        raise ConfigError(_hypothesis_message(eps, exp.domain.delta))
    reports = order_sweep(
        exp.map, exp.domain, exp.grid, exp.m_max, exp.integrator, epsilon=eps
    )
    rows = [report_row(r) for r in reports]
    return CERTIFY_COLUMNS, rows, certify_status(rows)


def certify_status(rows):
    if any(r["failure"] for r in rows):
        return EXIT_RUNTIME
    if any(not r["tolerance_limited"] and not r["satisfied"] for r in rows):
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_mu_check(exp):
    eps = exp.epsilon_used()
    mu0 = exp.cfg["run"]["mu0"]
    for m in exp.orders:
        limit = mu_radius(eps, exp.domain.delta, m) / 8
        if mu0 is not None and not 0 < mu0 <= limit:
            raise ConfigError(f"run.mu0={mu0} must lie in (0, mu_m/8 = {limit:.6g}] for m={m}")
    rows = []
    for m in exp.orders:
        est = mu_order_check(
            exp.map, m, exp.domain, int(exp.cfg["run"]["sample_count"]), mu0,
            exp.integrator, epsilon=eps,
        )
        rows.append({
            "m": m,
            "mu0": est.mu_values[0],
            "E_mu0": est.errors[0],
            "E_half": est.errors[1],
            "E_quarter": est.errors[2],
            "observed_order": None if est.inconclusive else est.observed_order,
            "inconclusive": est.inconclusive,
        })
    return MU_COLUMNS, rows, mu_status(rows)


def mu_status(rows):
    for r in rows:
        if not r["inconclusive"] and abs(r["observed_order"] - (r["m"] + 1)) > 0.5:
            return EXIT_VIOLATION
    return EXIT_OK


def cmd_field_export(exp):
    dim = exp.domain.dimension
    coord_cols = [f"x{i}" for i in range(dim)]
    field_cols = [f"X{i}" for i in range(dim)]
    pts = real_grid(exp.domain, exp.grid.real_points_per_axis)
    rows = []
    for m in exp.orders:
        values = InterpField(exp.map, m)(pts)
        for p, v in zip(pts, values):
            row = dict(zip(coord_cols, map(float, p)))
            row.update(zip(field_cols, map(float, np.real(v))))
            row["m"] = m
            rows.append(row)
    return coord_cols + field_cols + ["m"], rows, EXIT_OK


def cmd_slope(exp):
    spec = exp.cfg["map"]
    if spec["family"] != "euler_step":
        raise ConfigError("slope requires map.family = euler_step (the family is varied in h)")
    h_values = exp.cfg["run"]["h_values"]
    if not isinstance(h_values, list) or len(h_values) < 3:
        raise ConfigError("run.h_values needs at least 3 step sizes")
    field = spec["field"]
    rows = []
    for m in exp.orders:
        fit = epsilon_slope_check(
            lambda h: EulerStep(field, h), m, exp.domain, exp.grid, h_values,
            exp.integrator, exp.safety,
        )
        for h, e, err in zip(fit.h_values, fit.epsilons, fit.errors):
            rows.append({"m": m, "h": h, "epsilon_est": e, "measured_error": err,
                         "fitted_slope": fit.slope})
    return SLOPE_COLUMNS, rows, slope_status(rows)


def slope_status(rows):
    if any(abs(r["fitted_slope"] - (r["m"] + 1)) > 0.3 for r in rows):
        return EXIT_VIOLATION
    return EXIT_OK


COMMANDS = {
    "certify": cmd_certify,
    "mu-check": cmd_mu_check,
    "field-export": cmd_field_export,
    "slope": cmd_slope,
}


def load_config(path, overrides=()):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for assignment in overrides:
        apply_override(raw, assignment)
    return materialise(raw)


def build_parser():
    parser = argparse.ArgumentParser(prog="flowembed", description=__doc__.split("\n")[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON experiment configuration")
    parser.add_argument("--output", help="CSV destination (default: run.output or stdout)")
    parser.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="dot-path assignment into the config, value parsed as JSON")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.override)
        exp = Experiment(cfg)
        columns, rows, status = COMMANDS[args.command](exp)
    except ConfigError as exc:
        print(f"flowembed: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FlowError, ArithmeticError, ValueError) as exc:
        print(f"flowembed: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    metadata = {"command": args.command, "flowembed_version": __version__}
    metadata.update(_flatten("", cfg, {}))
    output = args.output or cfg["run"]["output"]
    if output:
        with open(output, "w", newline="") as fh:
            write_csv(fh, metadata, columns, rows)
    else:
        write_csv(sys.stdout, metadata, columns, rows)
    return status


if __name__ == "__main__":
    sys.exit(main())
