"""
Command-line runner for single runs and parameter sweeps.

Configuration is one JSON object::

    {
      "problem": "balloon0d",
      "scheme": "rn_qn",
      "update": {"type": "imvls", "omega0": 0.1, "eps_filter": 1e-8, "max_blocks": 8},
      "robin_parameter": 1e5,
      "dt": 0.01,
      "n_steps": 500
    }

Every other key is optional; see :class:`RunConfig` for the full list.  Two
files are written to the output directory: ``summary.csv`` with one row per
run and ``reports.json`` with the full reports.
"""

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .accel import (
    DEFAULT_AITKEN_BOUNDS,
    DEFAULT_EPS_FILTER,
    DEFAULT_MAX_BLOCKS,
    DEFAULT_OMEGA0,
    IQNILS,
    IQNIMVLS,
    AitkenRelaxation,
    ConstantRelaxation,
    NoUpdate,
)
from .errors import ConfigError, CouplingError, IoError
from .models import PROBLEMS, build_problem
from .schemes import COMPLETED, SCHEMES, ConvergenceConfig, run_simulation

UPDATES = ("none", "relax", "aitken", "ils", "imvls")
SWEEP_AXES = ("robin_parameter", "update", "omega", "dt")
CSV_COLUMNS = ("scheme", "update", "robin_parameter", "mean_iterations", "eps_rel", "termination")

# Time step and step count used when the configuration leaves them out.
PROBLEM_DEFAULTS = {
    "affine": (1.0, 1),
    "balloon0d": (0.01, 500),
    "tube1d_open": (2.5e-5, 300),
    "tube1d_closed": (2.5e-5, 300),
}

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_DIVERGED = 2


@dataclass(frozen=True)
class UpdateConfig:
    type: str = "imvls"
    omega: float = None
    omega0: float = None
    bounds: tuple = None
    eps_filter: float = None
    max_blocks: int = None

    # Parameters each update type accepts, with their defaults.
    PARAMETERS = {
        "none": {},
        "relax": {"omega": 1.0},
        "aitken": {"omega0": DEFAULT_OMEGA0, "bounds": DEFAULT_AITKEN_BOUNDS},
        "ils": {"omega0": DEFAULT_OMEGA0, "eps_filter": DEFAULT_EPS_FILTER},
        "imvls": {"omega0": DEFAULT_OMEGA0, "eps_filter": DEFAULT_EPS_FILTER, "max_blocks": DEFAULT_MAX_BLOCKS},
    }

    def to_dict(self):
        out = {"type": self.type}
        for name in self.PARAMETERS[self.type]:
            value = getattr(self, name)
            out[name] = list(value) if isinstance(value, tuple) else value
        return out

    def build(self):
        if self.type == "none":
            return NoUpdate()
        if self.type == "relax":
            return ConstantRelaxation(self.omega)
        if self.type == "aitken":
            return AitkenRelaxation(self.omega0, self.bounds)
        if self.type == "ils":
            return IQNILS(self.omega0, self.eps_filter)
        return IQNIMVLS(self.omega0, self.eps_filter, self.max_blocks)


def parse_update(raw, path="update"):
    """Accept a type name or an object with ``type`` plus its parameters."""
    if isinstance(raw, str):
        raw = {"type": raw}
    if not isinstance(raw, dict):
        raise ConfigError(path, "must be a string or an object")
    kind = raw.get("type")
    if kind not in UPDATES:
        raise ConfigError(f"{path}.type", f"must be one of {', '.join(UPDATES)}")
    allowed = UpdateConfig.PARAMETERS[kind]
    values = {}
    for key, value in raw.items():
        if key == "type":
            continue
        if key not in allowed:
            raise ConfigError(f"{path}.{key}", f"unknown key for update type {kind!r}")
        values[key] = value
    params = {**allowed, **values}
    if "omega" in params:
        _check_number(params["omega"], f"{path}.omega", lower=0.0, upper=1.0)
    if "omega0" in params:
        _check_number(params["omega0"], f"{path}.omega0", lower=0.0, upper=1.0)
    if "eps_filter" in params:
        _check_number(params["eps_filter"], f"{path}.eps_filter", lower=0.0)
    if "max_blocks" in params:
        mb = params["max_blocks"]
        if isinstance(mb, bool) or not isinstance(mb, int) or mb < 0:
            raise ConfigError(f"{path}.max_blocks", "must be an integer >= 0")
    if "bounds" in params:
        b = params["bounds"]
        if not isinstance(b, (list, tuple)) or len(b) != 2:
            raise ConfigError(f"{path}.bounds", "must be a pair [lo, hi]")
        lo, hi = (_check_number(v, f"{path}.bounds", lower=0.0, upper=1.0) for v in b)
        if lo > hi:
            raise ConfigError(f"{path}.bounds", "lower bound exceeds upper bound")
        params["bounds"] = (float(lo), float(hi))
    return UpdateConfig(type=kind, **params)


def _check_number(value, path, lower=None, upper=None):
    """Positive-interval check: ``lower < value <= upper``."""
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, "must be a number")
    value = float(value)
    if value != value or value in (float("inf"), float("-inf")):
        raise ConfigError(path, "must be finite")
    if lower is not None and not value > lower:
        raise ConfigError(path, f"must be > {lower}")
    if upper is not None and not value <= upper:
        raise ConfigError(path, f"must be <= {upper}")
    return value


@dataclass(frozen=True)
class RunConfig:
    problem: str
    scheme: str
    update: UpdateConfig = field(default_factory=UpdateConfig)
    model: dict = field(default_factory=dict)
    robin_parameter: float = None
    eps_coupling: float = 1e-6
    eps_problem: float = 1e-10
    max_coupling_iterations: int = 500
    dt: float = None
    n_steps: int = None
    sample_stride: int = 1
    output_path: str = "results"

    def to_dict(self):
        out = asdict(self)
        out["update"] = self.update.to_dict()
        return out

    def convergence(self):
        return ConvergenceConfig(self.eps_coupling, self.eps_problem, self.max_coupling_iterations)


def serialize_config(config):
    return json.dumps(config.to_dict(), indent=2, sort_keys=True)


def parse_config(text):
    """
    Validate a JSON configuration and apply defaults.

    Raises
    ------
    ConfigError
        With the offending key path and the reason.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("", "configuration must be a JSON object")
    return config_from_dict(raw)


def config_from_dict(raw):
    known = {f.name for f in fields(RunConfig)}
    for key in raw:
        if key not in known:
            raise ConfigError(key, "unknown key")
    for key in ("problem", "scheme"):
        if key not in raw:
            raise ConfigError(key, "required")
    problem = raw["problem"]
    if problem not in PROBLEMS:
        raise ConfigError("problem", f"must be one of {', '.join(PROBLEMS)}")
    scheme = raw["scheme"]
    if scheme not in SCHEMES:
        raise ConfigError("scheme", f"must be one of {', '.join(SCHEMES)}")

    default_update = {"dn": "none", "rn": "none"}.get(scheme, "imvls")
    update = parse_update(raw.get("update", default_update))
    _check_compatibility(scheme, update.type)

    model = raw.get("model", {})
    if not isinstance(model, dict):
        raise ConfigError("model", "must be an object")
    if problem == "affine":
        for key in ("A_s", "A_f", "b_s", "b_f"):
            if key not in model:
                raise ConfigError(f"model.{key}", "required for the affine problem")

    robin = raw.get("robin_parameter")
    if scheme in ("rn", "rn_qn"):
        if robin is None:
            raise ConfigError("robin_parameter", f"required for scheme {scheme}")
        robin = _check_number(robin, "robin_parameter", lower=0.0)
    elif robin is not None:
        robin = _check_number(robin, "robin_parameter", lower=0.0)

    dt_default, n_default = PROBLEM_DEFAULTS[problem]
    dt = _check_number(raw.get("dt", dt_default), "dt", lower=0.0)
    n_steps = _check_int(raw.get("n_steps", n_default), "n_steps", 1)
    eps_coupling = _check_number(raw.get("eps_coupling", 1e-6), "eps_coupling", lower=0.0)
    eps_problem = _check_number(raw.get("eps_problem", 1e-10), "eps_problem", lower=0.0)
    max_iter = _check_int(raw.get("max_coupling_iterations", 500), "max_coupling_iterations", 1)
    stride = _check_int(raw.get("sample_stride", 1), "sample_stride", 0)
    output_path = raw.get("output_path", "results")
    if not isinstance(output_path, str) or not output_path:
        raise ConfigError("output_path", "must be a non-empty string")

    config = RunConfig(
        problem=problem,
        scheme=scheme,
        update=update,
        model=model,
        robin_parameter=robin,
        eps_coupling=eps_coupling,
        eps_problem=eps_problem,
        max_coupling_iterations=max_iter,
        dt=dt,
        n_steps=n_steps,
        sample_stride=stride,
        output_path=output_path,
    )
    try:
        build_problem(problem, model, eps_problem)
    except TypeError as exc:
        raise ConfigError("model", str(exc)) from exc
    except CouplingError as exc:
        raise ConfigError("model", str(exc)) from exc
    return config


def _check_int(value, path, minimum):
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(path, f"must be an integer >= {minimum}")
    return value


def _check_compatibility(scheme, update_type, path="update.type"):
    if scheme == "rn" and update_type != "none":
        raise ConfigError(path, "scheme rn takes update 'none'")
    if scheme == "dn" and update_type not in ("none", "relax"):
        raise ConfigError(path, "scheme dn takes update 'none' or 'relax'")
    if scheme in ("dn_qn_s", "dn_qn_f", "rn_qn") and update_type == "none":
        raise ConfigError(path, f"scheme {scheme} needs an update other than 'none'")


def execute(config):
    """Run one configuration and return its report (failures are recorded)."""
    problem = build_problem(config.problem, config.model, config.eps_problem)
    report = run_simulation(
        problem,
        config.scheme,
        config.update.build(),
        config.convergence(),
        config.n_steps,
        config.dt,
        config.robin_parameter,
        config.sample_stride,
    )
    report.config = config.to_dict()
    return report


def sweep_configs(base, axis, values):
    """One configuration per sweep value, validated up front."""
    if axis not in SWEEP_AXES:
        raise ConfigError("axis", f"must be one of {', '.join(SWEEP_AXES)}")
    if not values:
        raise ConfigError("values", "empty sweep")
    configs = []
    for i, value in enumerate(values):
        path = f"values[{i}]"
        if axis == "robin_parameter":
            if base.scheme not in ("rn", "rn_qn"):
                raise ConfigError("axis", f"scheme {base.scheme} has no Robin parameter")
            configs.append(replace(base, robin_parameter=_check_number(value, path, lower=0.0)))
        elif axis == "update":
            update = parse_update(value, path)
            carried = {
                k: v for k, v in base.update.to_dict().items() if k != "type" and k in UpdateConfig.PARAMETERS[update.type]
            }
            if isinstance(value, str) and carried:
                update = parse_update({"type": update.type, **carried}, path)
            _check_compatibility(base.scheme, update.type, path)
            configs.append(replace(base, update=update))
        elif axis == "omega":
            omega = _check_number(value, path, lower=0.0, upper=1.0)
            if base.update.type == "none":
                raise ConfigError("axis", "update 'none' has no relaxation factor")
            key = "omega" if base.update.type == "relax" else "omega0"
            configs.append(replace(base, update=replace(base.update, **{key: omega})))
        else:
            dt = _check_number(value, path, lower=0.0)
            n_steps = max(1, round(base.n_steps * base.dt / dt))
            configs.append(replace(base, dt=dt, n_steps=n_steps))
    return configs


def run_sweep(base, axis, values, workers=None):
    """
    Execute one run per value.

    Runs are independent, so they go to a process pool of ``workers``
    (default: available CPUs); reports come back in input order.
    """
    configs = sweep_configs(base, axis, values)
    workers = workers or os.cpu_count() or 1
    if workers == 1 or len(configs) == 1:
        return [execute(c) for c in configs]
    with ProcessPoolExecutor(max_workers=min(workers, len(configs))) as pool:
        return list(pool.map(execute, configs))


def _fmt(value, spec):
    return "" if value is None else format(value, spec)


def summary_csv(reports):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in reports:
        completed = r.termination == COMPLETED
        writer.writerow(
            [
                r.scheme,
                r.update["type"],
                _fmt(r.robin_parameter, ".6g"),
                _fmt(r.mean_iterations if completed else None, ".4f"),
                _fmt(r.eps_rel, ".6e"),
                r.termination,
            ]
        )
    return buf.getvalue()


def write_outputs(reports, output_path):
    """Write ``summary.csv`` and ``reports.json`` into ``output_path``."""
    if not isinstance(reports, (list, tuple)):
        reports = [reports]
    out = Path(output_path)
    payload = [r.to_dict() for r in reports]
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.csv").write_text(summary_csv(reports))
        (out / "reports.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write outputs to {out}: {exc}") from exc
    return out / "summary.csv", out / "reports.json"


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the configuration-failure code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_FAILURE, f"{self.prog}: error: {message}\n")


def _parse_values(text):
    values = []
    for item in (v.strip() for v in text.split(",")):
        if not item:
            continue
        try:
            values.append(float(item))
        except ValueError:
            values.append(item)
    return values


def build_parser():
    parser = _Parser(prog="rnqn", description="Partitioned FSI coupling runs and sweeps.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="run a single configuration")
    run.add_argument("config", help="JSON configuration file")
    run.add_argument("--out", help="output directory (overrides output_path)")
    sweep = sub.add_parser("sweep", help="sweep one parameter")
    sweep.add_argument("config", help="JSON configuration file")
    sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sweep.add_argument("--values", required=True, help="comma-separated values")
    sweep.add_argument("--out", help="output directory (overrides output_path)")
    sweep.add_argument("--workers", type=int, default=None, help="parallel runs (default: CPU count)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise IoError(f"cannot read {args.config}: {exc}") from exc
        base = parse_config(text)
        if args.command == "run":
            reports = [execute(base)]
        else:
            if args.workers is not None and args.workers < 1:
                raise ConfigError("workers", "must be >= 1")
            reports = run_sweep(base, args.axis, _parse_values(args.values), args.workers)
        csv_path, _ = write_outputs(reports, args.out or base.output_path)
    except (ConfigError, IoError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    sys.stdout.write(summary_csv(reports))
    print(f"wrote {csv_path}", file=sys.stderr)
    return EXIT_OK if all(r.termination == COMPLETED for r in reports) else EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
