"""Command-line entry point.

Every command is driven by an :class:`ExperimentConfig`, either read from
``--config <path>`` or assembled from per-command flags.  The config is
validated against a JSON schema, completed with defaults and hashed; the
hash and the command name head every artifact written.

Exit status: 0 on success, 2 on a validation error, 3 on a numerical
failure (eigen-solver breakdown, precision or resource budget, failed
certificate or fit).
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

import jsonschema
import numpy as np

from . import kernels, parallel
from .intervals import IntervalError, IntervalUnion, as_fraction
from .probe import (ProbeError, ProbeFailure, ProbeParams, check_exterior_decay,
                    check_interior_asymptotics, determine_eta, necessity_experiment)
from .spectral import (GridSpec, SpectralError, calibrate_lr_constants, cell_weights,
                       centered_complement, fit_growth, fit_lr_factors, observability_constant,
                       predicted_cobs, spectral_constant)
from .svc import DivergentSeriesError, ResourceBudgetError, SvcParams, SvcSet, svc_construct
from .thickness import (FitError, ThicknessProfile, ThicknessSample, fit_alpha, log_spaced,
                        svc_min_local_measure, min_local_measure, verify_svc_bounds)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

COMMANDS = ("svc-build", "thickness", "fit-alpha", "svc-verify", "spectral",
            "observability", "probe-asymptotics", "necessity")


class ConfigError(ValueError):
    """Schema violation, located by a JSON pointer into the config."""

    def __init__(self, pointer: str, message: str):
        super().__init__(message)
        self.pointer = pointer or "/"
        self.message = message

    def __str__(self) -> str:
        return f"{self.pointer}: {self.message}"


# ----------------------------------------------------------------------
# schemas

_RATIONAL_PATTERN = r"^[+-]?(\d+(/\d+)?|\d*\.\d+([eE][+-]?\d+)?|\d+[eE][+-]?\d+)$"

RATIONAL = {"oneOf": [{"type": "integer"},
                      {"type": "string", "pattern": _RATIONAL_PATTERN}]}
REAL = {"oneOf": [{"type": "number"},
                  {"type": "string", "pattern": _RATIONAL_PATTERN}]}
POS_INT = {"type": "integer", "minimum": 1}
FORMAT = {"enum": ["csv", "json"]}

SVC_PARAMS = {
    "type": "object",
    "required": ["mode"],
    "properties": {
        "mode": {"enum": ["explicit", "constant", "geometric", "parametric"]},
        "values": {"type": "array", "items": RATIONAL, "minItems": 1},
        "first": RATIONAL,
        "ratio": RATIONAL,
        "c": RATIONAL,
        "C": RATIONAL,
        "alpha": RATIONAL,
        "precision_bits": {"type": "integer", "minimum": 8},
    },
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"mode": {"enum": ["explicit", "constant"]}}},
         "then": {"required": ["values"]}},
        {"if": {"properties": {"mode": {"const": "geometric"}}},
         "then": {"required": ["first", "ratio"]}},
        {"if": {"properties": {"mode": {"const": "parametric"}}},
         "then": {"required": ["c", "C", "alpha"]}},
    ],
}

INTERVALS = {
    "type": "array",
    "items": {"type": "array", "items": RATIONAL, "minItems": 2, "maxItems": 4},
}

SVC_SET = {"type": "object", "required": ["svc", "depth"],
           "properties": {"svc": SVC_PARAMS, "depth": {"type": "integer", "minimum": 0}},
           "additionalProperties": False}
UNION_SET = {"type": "object", "required": ["intervals"],
             "properties": {"intervals": INTERVALS}, "additionalProperties": False}

# a compact set K; "full-line" is the empty set (omega = R)
SET = {"oneOf": [{"const": "full-line"}, SVC_SET, UNION_SET]}

# observation set in the periodic window: a union given directly, or the
# complement of K centred in the window
OMEGA = {"oneOf": [
    UNION_SET,
    {"type": "object", "required": ["complement_of"],
     "properties": {"complement_of": {"oneOf": [SVC_SET, UNION_SET]}},
     "additionalProperties": False},
]}

EXACT_SWEEP = {"oneOf": [
    {"type": "array", "items": RATIONAL, "minItems": 1},
    {"type": "object", "required": ["lo", "hi", "count"],
     "properties": {"lo": RATIONAL, "hi": RATIONAL, "count": POS_INT},
     "additionalProperties": False},
]}
SWEEP = {"oneOf": [
    {"type": "array", "items": REAL, "minItems": 1},
    {"type": "object", "required": ["lo", "hi", "count"],
     "properties": {"lo": REAL, "hi": REAL, "count": POS_INT},
     "additionalProperties": False},
]}
DYADIC = {"oneOf": [
    {"type": "array", "items": REAL, "minItems": 1},
    {"type": "object", "required": ["k0", "k1"],
     "properties": {"k0": {"type": "integer"}, "k1": {"type": "integer"}},
     "additionalProperties": False},
]}

GRID = {"type": "object",
        "properties": {"X": REAL, "N": {"type": "integer", "minimum": 2}},
        "additionalProperties": False}

PROBE = {"type": "object", "required": ["s"],
         "properties": {"s": REAL, "xi0": REAL, "w": REAL, "p": REAL,
                        "quad_points": {"type": "integer", "minimum": 64}},
         "additionalProperties": False}


def _obj(required: list[str], props: dict) -> dict:
    return {"type": "object", "required": required, "properties": props,
            "additionalProperties": False}


PARAMETER_SCHEMAS: dict[str, dict] = {
    "svc-build": _obj(["svc", "depth"], {
        "svc": SVC_PARAMS, "depth": {"type": "integer", "minimum": 0}, "format": FORMAT}),
    "thickness": _obj(["set", "Ls"], {"set": SET, "Ls": EXACT_SWEEP, "format": FORMAT}),
    "fit-alpha": {
        "type": "object",
        "properties": {"profile": {"type": "string"}, "set": SET, "Ls": EXACT_SWEEP,
                       "min_samples": {"type": "integer", "minimum": 2}, "format": FORMAT},
        "additionalProperties": False,
        "oneOf": [{"required": ["profile"], "not": {"required": ["set"]}},
                  {"required": ["set", "Ls"], "not": {"required": ["profile"]}}],
    },
    "svc-verify": _obj(["svc", "depth", "Ls"], {
        "svc": SVC_PARAMS, "depth": {"type": "integer", "minimum": 0}, "Ls": EXACT_SWEEP,
        "kappa": RATIONAL, "level_ratio": {"type": "integer", "minimum": 2}, "format": FORMAT}),
    "spectral": _obj(["omega", "lambdas"], {
        "grid": GRID, "omega": OMEGA, "lambdas": SWEEP,
        "digits": {"oneOf": [{"type": "null"}, {"type": "integer", "minimum": 15}]},
        "format": FORMAT}),
    "observability": _obj(["omega", "s", "Ts", "lr"], {
        "grid": GRID, "omega": OMEGA, "s": REAL, "Ts": SWEEP, "kappa": REAL,
        "quad_nodes": {"type": "integer", "minimum": 4},
        "lr": _obj(["alpha", "mus"], {
            "alpha": REAL, "mus": SWEEP,
            "calibrate_at": {"oneOf": [{"enum": ["min", "max"]}, REAL]}}),
        "format": FORMAT}),
    "probe-asymptotics": _obj(["probe", "T"], {
        "probe": PROBE, "T": REAL, "hs": DYADIC,
        "eta": {"oneOf": [{"type": "null"}, REAL]},
        "interior_fraction": REAL, "tolerance": REAL,
        "nt": {"type": "integer", "minimum": 2}, "nx": {"type": "integer", "minimum": 2},
        "second_order": {"type": "boolean"},
        "x_exterior": {"type": "array", "items": REAL},
        "format": FORMAT}),
    "necessity": _obj(["set", "probe", "T"], {
        "set": SET, "probe": PROBE, "T": REAL, "hs": DYADIC, "r": REAL,
        "t_nodes": {"type": "integer", "minimum": 2},
        "eta": {"oneOf": [{"type": "null"}, REAL]},
        "tail_rtol": REAL, "format": FORMAT}),
}

DEFAULTS: dict[str, dict] = {
    "svc-build": {"format": "json"},
    "thickness": {"format": "csv"},
    "fit-alpha": {"min_samples": 8, "format": "json"},
    "svc-verify": {"kappa": 3, "level_ratio": 16, "format": "csv"},
    "spectral": {"grid": {"X": 8, "N": 1024}, "digits": None, "format": "csv"},
    "observability": {"grid": {"X": 8, "N": 1024}, "kappa": 10, "quad_nodes": 32,
                      "format": "csv"},
    "probe-asymptotics": {"hs": {"k0": 4, "k1": 10}, "eta": None, "interior_fraction": "1/2",
                          "tolerance": "3/10", "nt": 5, "nx": 9, "second_order": True,
                          "x_exterior": [], "format": "csv"},
    "necessity": {"hs": {"k0": 8, "k1": 12}, "r": "1/4", "t_nodes": 24, "eta": None,
                  "tail_rtol": "1/1000", "format": "csv"},
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["command", "parameters"],
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "parameters": {"type": "object"},
        "output_path": {"type": ["string", "null"]},
        "seed": {"type": "integer"},
    },
    "additionalProperties": False,
}


def _pointer(path) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in path)


def _validate(instance: Any, schema: dict, prefix: str = "") -> None:
    validator = jsonschema.Draft202012Validator(schema)
    err = jsonschema.exceptions.best_match(validator.iter_errors(instance))
    if err is not None:
        msg = err.message
        if err.validator == "pattern":
            msg = f"{err.instance!r} is not a rational literal (integer, p/q or decimal)"
        raise ConfigError(prefix + _pointer(err.absolute_path), msg)


# ----------------------------------------------------------------------
# config


@dataclass
class ExperimentConfig:
    """One experiment: a command, its parameters, an output path and a seed."""

    command: str
    parameters: dict = field(default_factory=dict)
    output_path: str | None = None
    seed: int = 0

    def to_json_obj(self) -> dict:
        return {"command": self.command, "parameters": copy.deepcopy(self.parameters),
                "output_path": self.output_path, "seed": self.seed}

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json_obj(cls, obj: Any) -> "ExperimentConfig":
        _validate(obj, CONFIG_SCHEMA)
        return cls(obj["command"], copy.deepcopy(obj["parameters"]),
                   obj.get("output_path"), int(obj.get("seed", 0)))

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("/", f"invalid JSON: {exc}") from None
        return cls.from_json_obj(obj)

    def resolved(self) -> "ExperimentConfig":
        """Validated copy with every default filled in."""
        params = copy.deepcopy(DEFAULTS.get(self.command, {}))
        params.update(copy.deepcopy(self.parameters))
        _validate(params, PARAMETER_SCHEMAS[self.command], "/parameters")
        return ExperimentConfig(self.command, params, self.output_path, self.seed)

    def content_hash(self) -> str:
        """SHA-256 of the canonical JSON of command, parameters and seed."""
        body = {"command": self.command, "parameters": self.parameters, "seed": self.seed}
        text = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


# ----------------------------------------------------------------------
# parameter decoding (pointer-aware)


def _rat(value, ptr: str) -> Fraction:
    try:
        return as_fraction(value)
    except (IntervalError, ValueError, ZeroDivisionError) as exc:
        raise ConfigError(ptr, str(exc)) from None


def _real(value, ptr: str) -> float:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        v = float(value)
    else:
        v = float(_rat(value, ptr))
    if not math.isfinite(v):
        raise ConfigError(ptr, "must be finite")
    return v


def _positive(value, ptr: str) -> float:
    v = _real(value, ptr)
    if v <= 0:
        raise ConfigError(ptr, "must be positive")
    return v


def _svc_params(obj: dict, ptr: str) -> SvcParams:
    try:
        return SvcParams.from_json_obj(obj)
    except (IntervalError, ValueError, ZeroDivisionError) as exc:
        raise ConfigError(ptr, str(exc)) from None


def _union(items: list, ptr: str) -> IntervalUnion:
    pairs = []
    for i, item in enumerate(items):
        p = f"{ptr}/{i}"
        if len(item) == 2:
            a, b = _rat(item[0], p + "/0"), _rat(item[1], p + "/1")
        elif len(item) == 4:
            na, da, nb, db = (_rat(v, f"{p}/{j}") for j, v in enumerate(item))
            if da <= 0 or db <= 0 or any(v.denominator != 1 for v in (na, da, nb, db)):
                raise ConfigError(p, "expected integers [num_a, den_a, num_b, den_b]")
            a, b = na / da, nb / db
        else:
            raise ConfigError(p, "expected [a, b] or [num_a, den_a, num_b, den_b]")
        if a > b:
            raise ConfigError(p, f"interval [{a}, {b}] has a > b")
        pairs.append((a, b))
    return IntervalUnion(pairs)


def _set(obj, ptr: str):
    """None (full line), an SvcSet or an IntervalUnion."""
    if obj == "full-line":
        return None
    if "svc" in obj:
        params = _svc_params(obj["svc"], ptr + "/svc")
        return SvcSet(params, int(obj["depth"]))
    return _union(obj["intervals"], ptr + "/intervals")


def _exact_sweep(obj, ptr: str) -> list[Fraction]:
    if isinstance(obj, list):
        vals = [_rat(v, f"{ptr}/{i}") for i, v in enumerate(obj)]
    else:
        lo, hi = _rat(obj["lo"], ptr + "/lo"), _rat(obj["hi"], ptr + "/hi")
        if not 0 < lo <= hi:
            raise ConfigError(ptr, "need 0 < lo <= hi")
        vals = log_spaced(lo, hi, int(obj["count"]))
    for i, v in enumerate(vals):
        if v <= 0:
            raise ConfigError(f"{ptr}/{i}", "must be positive")
    return vals


def _nonnegative(value, ptr: str) -> float:
    v = _real(value, ptr)
    if v < 0:
        raise ConfigError(ptr, "must be nonnegative")
    return v


def _sweep(obj, ptr: str, allow_zero: bool = False) -> list[float]:
    if isinstance(obj, list):
        check = _nonnegative if allow_zero else _positive
        return [check(v, f"{ptr}/{i}") for i, v in enumerate(obj)]
    lo, hi = _positive(obj["lo"], ptr + "/lo"), _positive(obj["hi"], ptr + "/hi")
    if lo > hi:
        raise ConfigError(ptr, "need lo <= hi")
    return np.geomspace(lo, hi, int(obj["count"])).tolist()


def _dyadic(obj, ptr: str) -> list[float]:
    if isinstance(obj, list):
        return [_positive(v, f"{ptr}/{i}") for i, v in enumerate(obj)]
    k0, k1 = int(obj["k0"]), int(obj["k1"])
    if k1 < k0:
        raise ConfigError(ptr, "need k0 <= k1")
    return [2.0 ** -k for k in range(k0, k1 + 1)]


def _grid(obj: dict, ptr: str) -> GridSpec:
    try:
        return GridSpec(_real(obj.get("X", 8), ptr + "/X"), int(obj.get("N", 1024)))
    except ValueError as exc:
        raise ConfigError(ptr, str(exc)) from None


def _omega(obj: dict, grid: GridSpec, ptr: str) -> IntervalUnion:
    if "intervals" in obj:
        om = _union(obj["intervals"], ptr + "/intervals")
        a, b = grid.window()
        hull = om.hull()
        if hull is not None and (hull[0] < a or hull[1] > b):
            raise ConfigError(ptr, f"omega exceeds the periodic window [{a}, {b}]")
        return om
    inner = obj["complement_of"]
    K = _set(inner, ptr + "/complement_of")
    if isinstance(K, SvcSet):
        K = K.level(K.depth)
    return centered_complement(K, grid)


def _probe(obj: dict, ptr: str) -> ProbeParams:
    kw = {k: (_real(v, f"{ptr}/{k}") if k != "quad_points" else int(v)) for k, v in obj.items()}
    try:
        return ProbeParams(**kw)
    except ProbeError as exc:
        raise ConfigError(ptr, str(exc)) from None


# ----------------------------------------------------------------------
# formatting


def fmt(x) -> str:
    """Floats with 17 significant digits; exact rationals as ``p/q``."""
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    return x


@dataclass
class Outcome:
    """What a command produced.

    ``header``/``rows`` form the CSV view, ``data`` the JSON view; ``extra``
    holds further CSV tables written next to the main artifact, and
    ``summary`` goes into the manifest.
    """

    header: list[str]
    rows: list[list]
    data: dict
    summary: dict = field(default_factory=dict)
    extra: dict[str, tuple[list[str], list[list]]] = field(default_factory=dict)


# ----------------------------------------------------------------------
# commands


def _cmd_svc_build(p: dict) -> Outcome:
    params = _svc_params(p["svc"], "/parameters/svc")
    K = svc_construct(params, int(p["depth"]))
    ivs = K.intervals
    data = {"params": params.to_json_obj(), "depth": int(p["depth"]), "count": len(ivs),
            "measure": str(K.measure()), "intervals": [[str(a), str(b)] for a, b in ivs]}
    return Outcome(["a", "b"], [[a, b] for a, b in ivs], data,
                   {"count": len(ivs), "measure": str(K.measure())})


def _theta_at(args) -> ThicknessSample:
    K, L = args
    r = svc_min_local_measure(K, L) if isinstance(K, SvcSet) else min_local_measure(K, L)
    return ThicknessSample(L, r.theta, r.argmin_x, r.depth_used, r.truncation_bound)


def _profile(p: dict) -> ThicknessProfile:
    K = _set(p["set"], "/parameters/set")
    if K is None:
        K = IntervalUnion([])
    Ls = sorted(_exact_sweep(p["Ls"], "/parameters/Ls"))
    return ThicknessProfile(parallel.pmap(_theta_at, [(K, L) for L in Ls]))


def _profile_outcome(prof: ThicknessProfile) -> Outcome:
    # certified enclosure of theta: the coarse level bounds it from below
    rows = [[float(s.L), float(s.theta), float(s.argmin_x), float(s.theta),
             float(min(Fraction(1), s.theta + s.truncation_bound))]
            for s in prof.samples]
    data = {"samples": [{"L": str(s.L), "theta": str(s.theta), "theta_float": float(s.theta),
                         "argmin_x": str(s.argmin_x), "depth_used": s.depth_used,
                         "truncation_bound": float(s.truncation_bound)}
                        for s in prof.samples]}
    return Outcome(["L", "theta", "argmin_x", "lower_bound", "upper_bound"], rows, data,
                   {"samples": len(rows)})


def _cmd_thickness(p: dict) -> Outcome:
    return _profile_outcome(_profile(p))


def read_profile_csv(path: str) -> list[tuple[Fraction, Fraction]]:
    """``(L, theta)`` pairs from a thickness CSV; ``#`` lines are skipped."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("/parameters/profile", str(exc)) from None
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or not {"L", "theta"} <= set(reader.fieldnames):
        raise ConfigError("/parameters/profile", "profile CSV needs columns L and theta")
    out = []
    for i, row in enumerate(reader):
        out.append((_rat(row["L"], f"/parameters/profile#{i}"),
                    _rat(row["theta"], f"/parameters/profile#{i}")))
    return out


def _cmd_fit_alpha(p: dict) -> Outcome:
    if "profile" in p:
        pairs = read_profile_csv(p["profile"])
    else:
        pairs = [(s.L, s.theta) for s in _profile(p).samples]
    fit = fit_alpha(pairs, min_samples=int(p["min_samples"]))
    vals = {"alpha_hat": fit.alpha_hat, "c_hat": fit.c_hat, "C_hat": fit.C_hat, "r2": fit.r2}
    return Outcome(list(vals), [list(vals.values())], dict(vals, samples=len(pairs)), vals)


def _cmd_svc_verify(p: dict) -> Outcome:
    params = _svc_params(p["svc"], "/parameters/svc")
    Ls = _exact_sweep(p["Ls"], "/parameters/Ls")
    rep = verify_svc_bounds(params, int(p["depth"]), Ls,
                            kappa=_rat(p["kappa"], "/parameters/kappa"),
                            level_ratio=int(p["level_ratio"]))
    header = ["L", "theta", "lower", "upper", "truncation_bound", "n_lo", "n_hi", "passed"]
    rows = [[float(r.L), float(r.theta), r.lower, r.upper, float(r.truncation_bound),
             r.lower_index, r.upper_index, r.passed] for r in rep.rows]
    summary = {"passed": rep.passed, "c": rep.c_fit, "C": rep.C_fit,
               "L0": None if rep.L0 is None else str(rep.L0), "c0": float(rep.c0),
               "c0_truncation_bound": float(rep.c0_truncation_bound),
               "kappa": str(rep.kappa), "note": rep.rounding_note}
    data = dict(summary, rows=[dict(zip(header, r)) for r in rows])
    return Outcome(header, rows, data, summary)


def _d_at(args) -> float:
    omega, lam, grid, digits = args
    return spectral_constant(omega, lam, grid, digits=digits)


def _cmd_spectral(p: dict) -> Outcome:
    grid = _grid(p["grid"], "/parameters/grid")
    omega = _omega(p["omega"], grid, "/parameters/omega")
    lams = sorted(_sweep(p["lambdas"], "/parameters/lambdas", allow_zero=True))
    digits = p["digits"]
    target = omega if digits is not None else cell_weights(omega, grid)
    d = parallel.pmap(_d_at, [(target, lam, grid, digits) for lam in lams])
    summary: dict = {"omega_measure": str(omega.measure()), "X": grid.X, "N": grid.N,
                     "digits": digits}
    if len(lams) >= 2 and lams[0] > 0:
        try:
            fit = fit_growth(lams, d, floor=0.0 if digits is not None else 1e-13)
            summary.update(growth_exponent=fit.exponent, r2=fit.r2)
        except SpectralError as exc:
            summary.update(growth_exponent=None, fit_error=str(exc))
    rows = [[lam, dv] for lam, dv in zip(lams, d)]
    data = dict(summary, rows=[{"lambda": lam, "d_lambda": dv} for lam, dv in zip(lams, d)])
    return Outcome(["lambda", "d_lambda"], rows, data, summary)


def _cobs_at(args) -> float:
    w, T, s, lam_max, grid, nodes = args
    return observability_constant(w, T, s, lam_max, grid, nodes)


def _cmd_observability(p: dict) -> Outcome:
    grid = _grid(p["grid"], "/parameters/grid")
    omega = _omega(p["omega"], grid, "/parameters/omega")
    w = cell_weights(omega, grid)
    s = _positive(p["s"], "/parameters/s")
    kappa = _positive(p["kappa"], "/parameters/kappa")
    Ts = sorted(_sweep(p["Ts"], "/parameters/Ts"))
    lr_p = p["lr"]
    alpha = _positive(lr_p["alpha"], "/parameters/lr/alpha")
    if not alpha < s:
        raise ConfigError("/parameters/lr/alpha", "need alpha < s")
    mus = _sweep(lr_p["mus"], "/parameters/lr/mus")
    lr = calibrate_lr_constants(w, s, alpha, mus, grid)
    # band cut-off (kappa / T)^(2/s): frequencies whose decay over [0, T] stays above e^-kappa
    C = parallel.pmap(_cobs_at, [(w, T, s, (kappa / T) ** (2 / s), grid, int(p["quad_nodes"]))
                                 for T in Ts])
    cal = lr_p.get("calibrate_at", "min")
    if cal == "min":
        i_cal = 0
    elif cal == "max":
        i_cal = len(Ts) - 1
    else:
        T_cal = _positive(cal, "/parameters/lr/calibrate_at")
        i_cal = int(np.argmin([abs(math.log(T / T_cal)) for T in Ts]))
    lr = fit_lr_factors(lr, Ts[i_cal], C[i_cal])
    pred = [predicted_cobs(lr, T) / T for T in Ts]
    others = [i for i in range(len(Ts)) if i != i_cal]
    consistent = all(pred[i] >= C[i] for i in others)
    summary = {"lr": {"d0": lr.d0, "d1": lr.d1, "zeta": lr.zeta, "c1": lr.c1, "c2": lr.c2,
                      "c3": lr.c3},
               "T_cal": Ts[i_cal], "one_sided_consistent": consistent,
               "min_ratio_predicted_over_measured": min((pred[i] / C[i] for i in others),
                                                        default=None)}
    rows = [[T, c, q] for T, c, q in zip(Ts, C, pred)]
    data = dict(summary, rows=[{"T": T, "C_meas": c, "C_predicted": q} for T, c, q in rows])
    return Outcome(["T", "C_meas", "C_predicted"], rows, data, summary)


def _cmd_probe_asymptotics(p: dict) -> Outcome:
    params = _probe(p["probe"], "/parameters/probe")
    T = _positive(p["T"], "/parameters/T")
    hs = _dyadic(p["hs"], "/parameters/hs")
    if p["eta"] is None:
        eta = determine_eta(params, T, hs)
        if eta <= 0:
            raise ProbeFailure("closed form does not reach 10% accuracy at any radius")
    else:
        eta = _positive(p["eta"], "/parameters/eta")
    frac = _positive(p["interior_fraction"], "/parameters/interior_fraction")
    rep = check_interior_asymptotics(params, T, eta * frac, _real(p["tolerance"], "/parameters/tolerance"),
                                     hs, int(p["nt"]), int(p["nx"]), bool(p["second_order"]))
    rows = [[w.h, w.rel_error, w.t, w.x] for w in rep.worst]
    summary = {"probe": params.to_json_obj(), "eta": eta, "radius": eta * frac,
               "order": rep.order, "expected_order": rep.expected_order,
               "monotone": rep.monotone, "interior_passed": rep.passed}
    extra = {}
    xs = [_real(v, f"/parameters/x_exterior/{i}") for i, v in enumerate(p["x_exterior"])]
    if xs:
        ext = check_exterior_decay(params, T, eta, xs, hs, int(p["nt"]))
        erows = [[h, x, float(ext.sup_abs[i, j]), bool(ext.resolved[i, j])]
                 for i, h in enumerate(ext.hs) for j, x in enumerate(ext.x_list)]
        extra["exterior"] = (["h", "x", "sup_abs_g", "resolved"], erows)
        summary.update(exterior_c=ext.c, exterior_C=ext.C, exterior_passed=ext.passed,
                       exterior_prefactors={fmt(k): v for k, v in ext.prefactors.items()})
    data = dict(summary, rows=[{"h": r[0], "max_rel_error": r[1], "t": r[2], "x": r[3]}
                               for r in rows])
    return Outcome(["h", "max_rel_error", "t", "x"], rows, data, summary, extra)


def _cmd_necessity(p: dict) -> Outcome:
    K = _set(p["set"], "/parameters/set")
    params = _probe(p["probe"], "/parameters/probe")
    T = _positive(p["T"], "/parameters/T")
    hs = _dyadic(p["hs"], "/parameters/hs")
    eta = None if p["eta"] is None else _positive(p["eta"], "/parameters/eta")
    rep = necessity_experiment(K, params, T, hs, r=_positive(p["r"], "/parameters/r"),
                               t_nodes=int(p["t_nodes"]), eta=eta,
                               tail_rtol=_positive(p["tail_rtol"], "/parameters/tail_rtol"))
    fields = list(rep.CSV_FIELDS)
    rows = [[getattr(r, f) for f in fields] for r in rep.rows]
    summary = {"probe": params.to_json_obj(), "T": rep.T, "r": rep.r, "set": rep.set_note,
               "growth": rep.growth, "spread": rep.spread,
               "certificates": rep.certificates,
               "rows_detail": [{"h": r.h, "L": r.L, "shift": r.shift, "omega_mass": r.omega_mass,
                                "lhs_plancherel": r.lhs_plancherel,
                                "lhs_tail_bound": r.lhs_tail_bound, "rhs_error": r.rhs_error,
                                "level": r.level} for r in rep.rows]}
    data = dict(summary, rows=[dict(zip(fields, r)) for r in rows])
    return Outcome(fields, rows, data, summary)


RUNNERS: dict[str, Callable[[dict], Outcome]] = {
    "svc-build": _cmd_svc_build,
    "thickness": _cmd_thickness,
    "fit-alpha": _cmd_fit_alpha,
    "svc-verify": _cmd_svc_verify,
    "spectral": _cmd_spectral,
    "observability": _cmd_observability,
    "probe-asymptotics": _cmd_probe_asymptotics,
    "necessity": _cmd_necessity,
}


# ----------------------------------------------------------------------
# running


def _banner(cfg: ExperimentConfig, digest: str) -> str:
    return f"fracthick {cfg.command} config_sha256={digest}"


def render(cfg: ExperimentConfig, out: Outcome, digest: str) -> tuple[str, dict[str, str]]:
    """Main artifact text and the extra CSV tables, each headed by the banner."""
    banner = _banner(cfg, digest)
    extras = {name: f"# {banner}\n" + _csv(h, rows) for name, (h, rows) in out.extra.items()}
    if cfg.parameters.get("format", "csv") == "json":
        body = {"comment": banner, "command": cfg.command}
        body.update(_jsonable(out.data))
        return json.dumps(body, indent=2) + "\n", extras
    return f"# {banner}\n" + _csv(out.header, out.rows), extras


def _sibling(path: Path, name: str) -> Path:
    suffix = path.suffix or ""
    return path.with_name(f"{path.stem}.{name}{suffix}" if suffix else f"{path.name}.{name}")


def manifest_path(output_path: str | Path) -> Path:
    path = Path(output_path)
    return path.with_name(f"{path.stem if path.suffix else path.name}.manifest.json")


def run(cfg: ExperimentConfig, stdout=None) -> int:
    """Execute one experiment; returns the exit status.

    Artifacts go to ``cfg.output_path`` (plus sibling tables and a
    ``.manifest.json``), or the main artifact to ``stdout`` when no path is
    given.  Errors are reported on stderr.
    """
    stdout = stdout or sys.stdout
    try:
        resolved = cfg.resolved()
        digest = resolved.content_hash()
        out = RUNNERS[resolved.command](resolved.parameters)
        main, extras = render(resolved, out, digest)
    except ConfigError as exc:
        print(f"validation error at {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FitError, SpectralError, ResourceBudgetError, ProbeFailure,
            ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (IntervalError, ProbeError, DivergentSeriesError, ValueError, TypeError) as exc:
        print(f"validation error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    if resolved.output_path is None:
        stdout.write(main)
        return EXIT_OK
    path = Path(resolved.output_path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(main)
        written = [path.name]
        for name, text in sorted(extras.items()):
            side = _sibling(path, name)
            side.write_text(text)
            written.append(side.name)
        manifest = {
            "comment": _banner(resolved, digest),
            "config": resolved.to_json_obj(),
            "config_sha256": digest,
            "backend": kernels.BACKEND,
            "artifacts": written,
            "results": _jsonable(out.summary),
        }
        manifest_path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        print(f"validation error: output path not writable: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


# ----------------------------------------------------------------------
# argument parsing


def _svc_from_flags(ns) -> dict | None:
    given = [x for x in (ns.r_const, ns.r_list, ns.r_param, ns.r_geometric) if x is not None]
    if len(given) > 1:
        raise ConfigError("/parameters/svc", "give only one of --r-const, --r-list, --r-param, --r-geometric")
    if ns.r_const is not None:
        return {"mode": "constant", "values": [ns.r_const]}
    if ns.r_list is not None:
        return {"mode": "explicit", "values": [v.strip() for v in ns.r_list.split(",")]}
    if ns.r_geometric is not None:
        first, ratio = (v.strip() for v in ns.r_geometric.split(","))
        return {"mode": "geometric", "first": first, "ratio": ratio}
    if ns.r_param is not None:
        parts = [v.strip() for v in ns.r_param.split(",")]
        if len(parts) != 3:
            raise ConfigError("/parameters/svc", "--r-param expects c,C,alpha")
        obj = {"mode": "parametric", "c": parts[0], "C": parts[1], "alpha": parts[2]}
        if ns.precision_bits is not None:
            obj["precision_bits"] = ns.precision_bits
        return obj
    return None


def _exact_sweep_flags(ns) -> Any:
    if ns.L:
        return list(ns.L)
    if ns.L_range:
        lo, hi, n = ns.L_range.split(",")
        return {"lo": lo.strip(), "hi": hi.strip(), "count": int(n)}
    return None


def _set_from_flags(ns) -> Any:
    kind = ns.set
    if kind is None:
        return None
    if kind == "full-line":
        return "full-line"
    if kind == "svc":
        svc = _svc_from_flags(ns)
        if svc is None or ns.depth is None:
            raise ConfigError("/parameters/set", "--set svc needs gap ratios and --depth")
        return {"svc": svc, "depth": ns.depth}
    if ns.intervals is None:
        raise ConfigError("/parameters/set", "--set intervals needs --intervals")
    try:
        return {"intervals": json.loads(ns.intervals)}
    except json.JSONDecodeError as exc:
        raise ConfigError("/parameters/set/intervals", f"invalid JSON: {exc}") from None


def _float_sweep(text: str | None) -> Any:
    """``a,b,c`` list or ``lo:hi:count`` geometric range."""
    if text is None:
        return None
    if ":" in text:
        lo, hi, n = text.split(":")
        return {"lo": lo.strip(), "hi": hi.strip(), "count": int(n)}
    return [v.strip() for v in text.split(",")]


def _hs(text: str | None) -> Any:
    if text is None:
        return None
    if ":" in text:
        k0, k1 = text.split(":")
        return {"k0": int(k0), "k1": int(k1)}
    return [v.strip() for v in text.split(",")]


def _omega_from_flags(ns) -> Any:
    if ns.omega is not None:
        try:
            return json.loads(ns.omega)
        except json.JSONDecodeError as exc:
            raise ConfigError("/parameters/omega", f"invalid JSON: {exc}") from None
    inner = _set_from_flags(ns)
    if inner is None or inner == "full-line":
        return None
    return {"complement_of": inner}


def _probe_from_flags(ns) -> dict:
    obj = {"s": ns.s}
    for key in ("xi0", "w", "p"):
        v = getattr(ns, key)
        if v is not None:
            obj[key] = v
    if ns.quad_points is not None:
        obj["quad_points"] = ns.quad_points
    return obj


def _params_from_flags(cmd: str, ns) -> dict:
    p: dict = {}

    def put(key, value):
        if value is not None:
            p[key] = value

    put("format", ns.format)
    if cmd in ("svc-build", "svc-verify"):
        put("svc", _svc_from_flags(ns))
        put("depth", ns.depth)
    if cmd in ("thickness", "fit-alpha", "svc-verify"):
        put("Ls", _exact_sweep_flags(ns))
    if cmd in ("thickness", "fit-alpha", "necessity"):
        put("set", _set_from_flags(ns))
    if cmd == "fit-alpha":
        put("profile", ns.profile)
        put("min_samples", ns.min_samples)
    if cmd == "svc-verify":
        put("kappa", ns.kappa)
        put("level_ratio", ns.level_ratio)
    if cmd in ("spectral", "observability"):
        grid = {}
        if ns.X is not None:
            grid["X"] = ns.X
        if ns.N is not None:
            grid["N"] = ns.N
        if grid:
            p["grid"] = grid
        put("omega", _omega_from_flags(ns))
    if cmd == "spectral":
        put("lambdas", _float_sweep(ns.lambdas))
        put("digits", ns.digits)
    if cmd == "observability":
        put("s", ns.s)
        put("Ts", _float_sweep(ns.Ts))
        put("kappa", ns.kappa)
        put("quad_nodes", ns.quad_nodes)
        if ns.alpha is not None or ns.mus is not None:
            lr = {}
            if ns.alpha is not None:
                lr["alpha"] = ns.alpha
            if ns.mus is not None:
                lr["mus"] = _float_sweep(ns.mus)
            if ns.calibrate_at is not None:
                lr["calibrate_at"] = ns.calibrate_at
            p["lr"] = lr
    if cmd in ("probe-asymptotics", "necessity"):
        if ns.s is not None:
            p["probe"] = _probe_from_flags(ns)
        put("T", ns.T)
        put("hs", _hs(ns.hs))
        put("eta", ns.eta)
    if cmd == "probe-asymptotics":
        put("tolerance", ns.tolerance)
        put("interior_fraction", ns.interior_fraction)
        if ns.x_exterior is not None:
            p["x_exterior"] = [v.strip() for v in ns.x_exterior.split(",")]
        if ns.first_order:
            p["second_order"] = False
    if cmd == "necessity":
        put("r", ns.r)
        put("t_nodes", ns.t_nodes)
    return p


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fracthick",
        description="Exponentially thick sets and fractional heat observability experiments.",
        epilog=f"Set {parallel.ENV_VAR} to cap the number of worker processes.")
    sub = ap.add_subparsers(dest="command", required=True, metavar="command")

    def common(sp):
        sp.add_argument("--config", help="JSON ExperimentConfig; flags given as well override its parameters")
        sp.add_argument("--output", "-o", help="artifact path (stdout if omitted)")
        sp.add_argument("--format", choices=["csv", "json"])
        sp.add_argument("--seed", type=int)

    def svc_flags(sp):
        sp.add_argument("--r-const", help="constant gap ratio, e.g. 1/2")
        sp.add_argument("--r-list", help="explicit ratios r_0,r_1,...")
        sp.add_argument("--r-geometric", help="first,ratio")
        sp.add_argument("--r-param", help="c,C,alpha for r_n = c exp(-C 2^(n alpha))")
        sp.add_argument("--precision-bits", type=int)
        sp.add_argument("--depth", type=int)

    def set_flags(sp):
        sp.add_argument("--set", choices=["full-line", "svc", "intervals"])
        sp.add_argument("--intervals", help='JSON list of [a, b] pairs, e.g. [["0","1/2"]]')

    def scale_flags(sp):
        sp.add_argument("--L", action="append", help="scale (repeatable), e.g. 1/16")
        sp.add_argument("--L-range", help="lo,hi,count of log-spaced dyadic scales")

    def probe_flags(sp):
        sp.add_argument("--s", help="fractional order")
        sp.add_argument("--xi0")
        sp.add_argument("--w")
        sp.add_argument("--p")
        sp.add_argument("--quad-points", type=int)
        sp.add_argument("--T")
        sp.add_argument("--hs", help="k0:k1 for h = 2^-k0..2^-k1, or a list")
        sp.add_argument("--eta")

    sp = sub.add_parser("run", help="run the experiment described by --config")
    common(sp)

    sp = sub.add_parser("svc-build", help="construct K_n exactly")
    common(sp); svc_flags(sp)

    sp = sub.add_parser("thickness", help="thickness profile theta(L)")
    common(sp); svc_flags(sp); set_flags(sp); scale_flags(sp)

    sp = sub.add_parser("fit-alpha", help="fit theta(L) ~ c exp(-C L^-alpha)")
    common(sp); svc_flags(sp); set_flags(sp); scale_flags(sp)
    sp.add_argument("--profile", help="thickness CSV to fit instead of computing one")
    sp.add_argument("--min-samples", type=int)

    sp = sub.add_parser("svc-verify", help="check the two-sided SVC thickness bounds")
    common(sp); svc_flags(sp); scale_flags(sp)
    sp.add_argument("--kappa")
    sp.add_argument("--level-ratio", type=int)

    for name, helptext in (("spectral", "spectral-inequality constants d(lambda)"),
                           ("observability", "observability constants and LR prediction")):
        sp = sub.add_parser(name, help=helptext)
        common(sp); svc_flags(sp); set_flags(sp)
        sp.add_argument("--X")
        sp.add_argument("--N", type=int)
        sp.add_argument("--omega", help="JSON omega object")
        if name == "spectral":
            sp.add_argument("--lambdas", help="list a,b,c or lo:hi:count")
            sp.add_argument("--digits", type=int)
        else:
            sp.add_argument("--s")
            sp.add_argument("--Ts", help="list a,b,c or lo:hi:count")
            sp.add_argument("--kappa")
            sp.add_argument("--quad-nodes", type=int)
            sp.add_argument("--alpha")
            sp.add_argument("--mus", help="calibration levels, list or lo:hi:count")
            sp.add_argument("--calibrate-at")

    sp = sub.add_parser("probe-asymptotics", help="coherent-state asymptotics and decay")
    common(sp); probe_flags(sp)
    sp.add_argument("--tolerance")
    sp.add_argument("--interior-fraction")
    sp.add_argument("--x-exterior", help="comma-separated exterior points")
    sp.add_argument("--first-order", action="store_true", help="compare with the leading term only")

    sp = sub.add_parser("necessity", help="observability ratio for the coherent probe")
    common(sp); probe_flags(sp); svc_flags(sp); set_flags(sp)
    sp.add_argument("--r")
    sp.add_argument("--t-nodes", type=int)
    return ap


def config_from_args(argv: list[str] | None = None) -> ExperimentConfig:
    ns = build_parser().parse_args(argv)
    if ns.command == "run":
        if not ns.config:
            raise ConfigError("/", "run needs --config")
        flags = {} if ns.format is None else {"format": ns.format}
    else:
        flags = _params_from_flags(ns.command, ns)
    if ns.config:
        try:
            text = Path(ns.config).read_text()
        except OSError as exc:
            raise ConfigError("/", f"cannot read config: {exc}") from None
        cfg = ExperimentConfig.from_json(text)
        if ns.command != "run" and cfg.command != ns.command:
            raise ConfigError("/command", f"config is for {cfg.command!r}, not {ns.command!r}")
        cfg.parameters.update(flags)
    else:
        cfg = ExperimentConfig(ns.command, flags)
    if ns.output is not None:
        cfg.output_path = ns.output
    if ns.seed is not None:
        cfg.seed = ns.seed
    return cfg


def main(argv: list[str] | None = None) -> int:
    try:
        cfg = config_from_args(argv)
    except ConfigError as exc:
        print(f"validation error at {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SystemExit as exc:  # argparse usage errors
        return EXIT_VALIDATION if exc.code not in (0, None) else EXIT_OK
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
