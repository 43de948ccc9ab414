"""Config-driven scenario runs: HJ pipeline versus the ODE oracle."""
from __future__ import annotations

import copy
import csv
import io
import json
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import expr as ex
from . import hj_solver as hj
from . import oracle
from . import phase_space as ps
from .errors import ConfigError, ExprSyntaxError, GrassHJError

CSV_COLUMNS = ("t", "x_hj", "x_ode", "q0_hj", "q0_ode", "a_re", "a_im", "energy", "resid_max")
SUMMARY_COLUMNS = ("value", "status", "exit_code", "dev_x", "dev_q0", "dev_a_re", "dev_a_im",
                   "resid_max", "energy_drift", "error")

EXIT_PASS, EXIT_COMPARE, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULT_TOLERANCES = {
    "quad_tol": hj.QUAD_TOL,
    "root_tol": hj.ROOT_TOL,
    "ode_tol": oracle.ODE_TOL,
    "compare_tol": 1e-6,
    "resid_tol": 1e-6,
}
_ICS = ("x0", "v0", "q00", "qdot00")


@dataclass
class ScenarioConfig:
    potential: str
    coupling: str
    constants: dict
    ics: dict
    window: dict
    tolerances: dict
    outputs: str
    name: str = "scenario"
    V: ex.Expr = field(default=None, repr=False, compare=False)
    U: ex.Expr = field(default=None, repr=False, compare=False)

    @property
    def psi0(self):
        re_, im_ = self.ics["psi0"]
        return complex(re_, im_)

    def sample_times(self):
        stride = self.window["out_stride"]
        n = int(round(self.window["t_max"] / stride))
        return stride * np.arange(n + 1)

    def to_dict(self):
        return {
            "name": self.name,
            "potential": self.potential,
            "coupling": self.coupling,
            "constants": dict(self.constants),
            "ics": dict(self.ics),
            "window": dict(self.window),
            "tolerances": dict(self.tolerances),
            "outputs": self.outputs,
        }


def _number(value, name, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"must be a number, got {value!r}", name)
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError("must be finite", name)
    if positive and value <= 0:
        raise ConfigError(f"must be positive, got {value}", name)
    return value


def _expression(text, name, constants):
    if not isinstance(text, str):
        raise ConfigError("must be an expression string", name)
    try:
        return ex.bind(ex.parse(text, constants=tuple(constants)), constants)
    except ExprSyntaxError as err:
        raise ConfigError(str(err), name) from err


def config_from_dict(data, base_dir=None):
    """Validate a parsed JSON document and build a :class:`ScenarioConfig`."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    known = {"name", "potential", "coupling", "constants", "ics", "window", "tolerances",
             "outputs"}
    extra = sorted(set(data) - known)
    if extra:
        raise ConfigError(f"unknown field {extra[0]!r}", extra[0])
    for key in ("potential", "ics", "window"):
        if key not in data:
            raise ConfigError(f"missing field {key!r}", key)

    constants = data.get("constants", {})
    if not isinstance(constants, dict):
        raise ConfigError("constants must be an object", "constants")
    constants = {str(k): _number(v, f"constants.{k}") for k, v in constants.items()}
    for k in constants:
        if not re.fullmatch(r"[A-Za-z_]\w*", k) or k == ex.VARIABLE or k in ex.FUNCTIONS:
            raise ConfigError(f"invalid constant name {k!r}", f"constants.{k}")

    V = _expression(data["potential"], "potential", constants)
    coupling = data.get("coupling", "susy")
    if coupling == "susy":
        U = ex.diff(V)
    else:
        U = _expression(coupling, "coupling", constants)

    ics_in = data["ics"]
    if not isinstance(ics_in, dict):
        raise ConfigError("ics must be an object", "ics")
    ics = {}
    for key in _ICS:
        if key not in ics_in:
            raise ConfigError(f"missing field 'ics.{key}'", f"ics.{key}")
        ics[key] = _number(ics_in[key], f"ics.{key}")
    psi0 = ics_in.get("psi0", [1.0, 0.0])
    if not (isinstance(psi0, list) and len(psi0) == 2):
        raise ConfigError("must be [re, im]", "ics.psi0")
    psi0 = [_number(psi0[0], "ics.psi0"), _number(psi0[1], "ics.psi0")]
    if abs(math.hypot(*psi0) - 1.0) > 1e-12:
        raise ConfigError("must have modulus 1", "ics.psi0")
    ics["psi0"] = psi0
    extra = sorted(set(ics_in) - set(_ICS) - {"psi0"})
    if extra:
        raise ConfigError(f"unknown field 'ics.{extra[0]}'", f"ics.{extra[0]}")
    if ics["v0"] == 0:
        raise ConfigError("v0 = 0 is a turning point at t=0", "ics.v0")

    win = data["window"]
    if not isinstance(win, dict):
        raise ConfigError("window must be an object", "window")
    window = {}
    for key in ("t_max", "out_stride"):
        if key not in win:
            raise ConfigError(f"missing field 'window.{key}'", f"window.{key}")
        window[key] = _number(win[key], f"window.{key}", positive=True)

    tol_in = data.get("tolerances", {})
    if not isinstance(tol_in, dict):
        raise ConfigError("tolerances must be an object", "tolerances")
    extra = sorted(set(tol_in) - set(DEFAULT_TOLERANCES))
    if extra:
        raise ConfigError(f"unknown field 'tolerances.{extra[0]}'", f"tolerances.{extra[0]}")
    tolerances = dict(DEFAULT_TOLERANCES)
    for key, value in tol_in.items():
        tolerances[key] = _number(value, f"tolerances.{key}", positive=True)

    outputs = data.get("outputs", "output")
    if not isinstance(outputs, str):
        raise ConfigError("outputs must be a path string", "outputs")
    if base_dir is not None and not os.path.isabs(outputs):
        outputs = str(Path(base_dir) / outputs)
    name = str(data.get("name", "scenario"))
    return ScenarioConfig(potential=data["potential"], coupling=coupling, constants=constants,
                          ics=ics, window=window, tolerances=tolerances, outputs=outputs,
                          name=name, V=V, U=U)


def load_config(path):
    """Read and validate a JSON scenario file.

    Relative ``outputs`` paths are resolved against the current directory.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"invalid JSON at line {err.lineno}, column {err.colno}: {err.msg}")
    return config_from_dict(data)


# -- running ----------------------------------------------------------------------------

@dataclass
class ComparisonReport:
    name: str
    status: str = "pass"
    exit_code: int = EXIT_PASS
    deviations: dict = field(default_factory=dict)
    resid_max: float = float("nan")
    energy_drift: float = float("nan")
    constraints: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    error: str = ""
    error_type: str = ""
    rows: list = field(default_factory=list, repr=False)

    @property
    def passed(self):
        return self.exit_code == EXIT_PASS

    def to_dict(self):
        return {
            "name": self.name,
            "status": self.status,
            "exit_code": self.exit_code,
            "deviations": self.deviations,
            "resid_max": _finite_or_none(self.resid_max),
            "energy_drift": _finite_or_none(self.energy_drift),
            "constraints": self.constraints,
            "checks": self.checks,
            "constants": self.constants,
            "error": self.error,
            "error_type": self.error_type,
        }

    def to_text(self):
        lines = [f"scenario: {self.name}", f"status: {self.status} (exit {self.exit_code})"]
        if self.error:
            lines.append(f"error: {self.error_type}: {self.error}")
        for key, value in self.constants.items():
            lines.append(f"constant {key}: {value!r}")
        for key, value in self.deviations.items():
            lines.append(f"max |{key}|: {value!r}")
        lines.append(f"hj residual max: {self.resid_max!r}")
        lines.append(f"energy drift (relative): {self.energy_drift!r}")
        for key, value in self.constraints.items():
            lines.append(f"constraint {key}: {_plain(value)!r}")
        for key, ok in self.checks.items():
            lines.append(f"check {key}: {'PASS' if ok else 'FAIL'}")
        return "\n".join(lines) + "\n"


def _finite_or_none(v):
    return v if math.isfinite(v) else None


def _plain(value):
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def constraint_flags(cfg):
    report = ps.verify_constraint_algebra(cfg.V, cfg.U)
    flags = {k: _plain(v) for k, v in report.flags().items()}
    return report, flags


def _compare(cfg):
    tol = cfg.tolerances
    ics = cfg.ics
    ts = cfg.sample_times()
    t_max = float(ts[-1])
    state = oracle.initial_state(ics["x0"], ics["v0"], ics["q00"], ics["qdot00"])
    ode = oracle.integrate(state, cfg.V, cfg.U, t_max, cfg.window["out_stride"],
                           ode_tol=tol["ode_tol"])
    a_ode = oracle.fermion_amplitude(ode, cfg.psi0)

    c = hj.constants_from_ics(cfg.V, cfg.U, ics["x0"], ics["v0"], ics["q00"], ics["qdot00"])
    traj = hj.hj_trajectory(cfg.V, cfg.U, c, ics["x0"], ics["q00"], cfg.psi0, ode.t,
                            root_tol=tol["root_tol"], quad_tol=tol["quad_tol"])
    comps = hj.action_components(cfg.V, cfg.U, c, quad_tol=tol["quad_tol"])
    resid = np.array([hj.hj_residual(cfg.V, cfg.U, comps, x, t).max()
                      for x, t in zip(traj.x, traj.t)])
    energy = ode.energy(cfg.V)
    return c, ode, a_ode, traj, resid, energy


def run_scenario(cfg, output_dir=None, write=True):
    """Run every pipeline for ``cfg``; write CSV and reports when ``write``."""
    out = Path(output_dir if output_dir is not None else cfg.outputs)
    report = ComparisonReport(name=cfg.name)
    tol = cfg.tolerances
    try:
        cons, flags = constraint_flags(cfg)
        report.constraints = flags
        report.checks["constraint_algebra"] = bool(cons.passed)
        c, ode, a_ode, traj, resid, energy = _compare(cfg)
    except GrassHJError as err:
        report.status = "error"
        report.exit_code = EXIT_NUMERIC
        report.error = str(err)
        report.error_type = type(err).__name__
        if write:
            _write_reports(out, report)
        return report

    report.constants = {"E": c.E, "A": c.A, "branch_sign": c.branch_sign}
    a_hj = traj.a
    dev = {
        "x_hj - x_ode": float(np.max(np.abs(traj.x - ode.x))),
        "q0_hj - q0_ode": float(np.max(np.abs(traj.q0 - ode.q0))),
        "Re a_hj - Re a_ode": float(np.max(np.abs(a_hj.real - a_ode.real))),
        "Im a_hj - Im a_ode": float(np.max(np.abs(a_hj.imag - a_ode.imag))),
    }
    report.deviations = dev
    report.resid_max = float(np.max(resid))
    report.energy_drift = float(np.max(np.abs(energy - energy[0])) / abs(energy[0]))
    report.checks.update({
        "x": dev["x_hj - x_ode"] <= tol["compare_tol"],
        "q0": dev["q0_hj - q0_ode"] <= tol["compare_tol"],
        "a_re": dev["Re a_hj - Re a_ode"] <= tol["compare_tol"],
        "a_im": dev["Im a_hj - Im a_ode"] <= tol["compare_tol"],
        "hj_residual": report.resid_max <= tol["resid_tol"],
    })
    report.rows = [
        (ode.t[k], traj.x[k], ode.x[k], traj.q0[k], ode.q0[k], a_hj[k].real, a_hj[k].imag,
         energy[k], resid[k])
        for k in range(len(ode.t))
    ]
    if not all(report.checks.values()):
        report.status = "fail"
        report.exit_code = EXIT_COMPARE
    if write:
        _write_reports(out, report)
    return report


def _fmt(v):
    return "" if v is None else repr(float(v))


def _write_reports(out, report):
    out.mkdir(parents=True, exist_ok=True)
    if report.rows:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in report.rows:
            writer.writerow([_fmt(v) for v in row])
        (out / "trajectory.csv").write_text(buf.getvalue())
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True)
                                     + "\n")
    (out / "report.txt").write_text(report.to_text())


# -- sweeps -----------------------------------------------------------------------------

def _apply_param(data, param, value):
    """Return a copy of the raw config with ``param`` set to ``value``.

    ``param`` is a dotted field (``ics.v0``, ``window.t_max``), a constant
    name, or ``E``: the energy, realised by rescaling ``ics.v0`` with its sign kept.
    """
    data = copy.deepcopy(data)
    constants = data.setdefault("constants", {})
    if param in constants:
        constants[param] = value
        return data
    if param == "E":
        cfg = config_from_dict(data)
        vx = ex.evaluate(cfg.V, cfg.ics["x0"])
        kinetic = 2.0 * value - vx * vx
        if kinetic < 0:
            raise ConfigError(f"E={value} is below the potential energy at x0", "E")
        data["ics"]["v0"] = math.copysign(math.sqrt(kinetic), cfg.ics["v0"])
        return data
    section, _, key = param.partition(".")
    numeric = {"ics": _ICS, "window": ("t_max", "out_stride"),
               "tolerances": tuple(DEFAULT_TOLERANCES)}
    if key and key in numeric.get(section, ()):
        data.setdefault(section, {})[key] = value
        return data
    raise ConfigError(f"unknown sweep parameter {param!r}", param)


def _sweep_one(args):
    data, param, value, out = args
    try:
        cfg = config_from_dict(_apply_param(data, param, value))
    except GrassHJError as err:
        report = ComparisonReport(name=f"{param}={value!r}", status="error",
                                  exit_code=EXIT_CONFIG, error=str(err),
                                  error_type=type(err).__name__)
        _write_reports(Path(out), report)
        return report.to_dict()
    cfg.name = f"{param}={value!r}"
    return run_scenario(cfg, output_dir=out).to_dict()


def _slug(param, value):
    return re.sub(r"[^A-Za-z0-9_.=+-]", "_", f"{param}={value!r}")


def sweep(data, param, values, output_dir, jobs=1):
    """Run one scenario per value; write per-value reports and summary.csv.

    ``data`` is the raw (parsed JSON) config. Returns the list of report dicts.
    """
    if param != "E":
        # fail fast on names that can never apply
        _apply_param(data, param, 0.0)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(data, param, float(v), str(out / _slug(param, float(v)))) for v in values]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_sweep_one, tasks))
    else:
        reports = [_sweep_one(t) for t in tasks]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for value, rep in zip(values, reports):
        devs = list(rep["deviations"].values()) or [float("nan")] * 4
        writer.writerow([_fmt(value), rep["status"], rep["exit_code"], *map(_fmt, devs),
                         _fmt(rep["resid_max"]), _fmt(rep["energy_drift"]), rep["error"]])
    (out / "summary.csv").write_text(buf.getvalue())
    return reports
