"""JSON run configuration: schema, defaults and canonical hashing.

Top-level keys::

    experiment   solution_dependence | invariant_dependence | counterexample | picard | simulate | check
    model        {"name": ..., "params": {...}}
    family       {"name": ..., "values": [...], "limit": ...}
    integrator   {"N", "dt", "T", "record_every", "blowup_threshold"}
    seed         integer in [0, 2**64)
    replicates   integer >= 1
    init         {"kind": gaussian|deterministic|uniform|atom, ...}
    settings     per-experiment knobs (see DEFAULT_SETTINGS)
    outputs      {"dir": path or null, "snapshots": bool}
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import ContractError
from .model import BUILTIN_MODELS
from .particle import IntegratorConfig, atom, deterministic, gaussian, steps_for, uniform


class ConfigError(ContractError):
    """Schema violation; the message names the offending key path."""


EXPERIMENTS = ("solution_dependence", "invariant_dependence", "counterexample", "picard", "simulate", "check")
TOP_KEYS = ("experiment", "model", "family", "integrator", "seed", "replicates", "init", "settings", "outputs")
FAMILIES = ("example1", "example2", "example3")
CHECK_SUITES = (
    "example1-drift",
    "example1-growth",
    "example1-monotone-negative",
    "example2-drift",
    "example3-monotone",
)

DEFAULT_INTEGRATOR = {
    "solution_dependence": {"N": 10_000, "dt": 1e-3, "T": 0.5, "record_every": 50},
    "invariant_dependence": {"N": 10_000, "dt": 1e-3, "T": 1.0, "record_every": 1000},
    "counterexample": {"N": 10_000, "dt": 1e-3, "T": 1.0, "record_every": None},
    "picard": {"N": 10_000, "dt": 1e-3, "T": 1.0, "record_every": 1},
    "simulate": {"N": 10_000, "dt": 1e-3, "T": 1.0, "record_every": 100},
    "check": {"N": 2_000, "dt": 1e-3, "T": 0.5, "record_every": 100},
}
DEFAULT_SETTINGS = {
    "solution_dependence": {"times": None},
    "invariant_dependence": {"burn_in": 5.0, "checkpoint_gap": 1.0, "stationarity_tol": 0.02, "max_time": 20.0},
    "counterexample": {"eps": 0.5, "k_list": [10, 100, 1000], "times": None},
    "picard": {"max_iter": 20, "tol": 1e-6},
    "simulate": {},
    "check": {"suites": list(CHECK_SUITES)},
}
DEFAULT_FAMILY = {
    "solution_dependence": {"name": "example1", "values": [0.5, 0.8, 0.9, 0.99], "limit": 1.0},
    "invariant_dependence": {"name": "example3", "values": [0.0, 0.2, 0.5, 0.9], "limit": 0.0},
}
DEFAULT_MODEL = {
    "picard": {"name": "counterexample", "params": {}},
    "simulate": {"name": "counterexample", "params": {}},
    "counterexample": {"name": "counterexample", "params": {}},
}
DEFAULT_INIT = {
    "solution_dependence": {"kind": "gaussian", "mean": 0.0, "var": 0.25},
    "invariant_dependence": {"kind": "gaussian", "mean": 0.0, "var": 1.0},
    "picard": {"kind": "deterministic", "x0": 1.0},
    "simulate": {"kind": "gaussian", "mean": 0.0, "var": 1.0},
    "counterexample": {"kind": "atom"},
    "check": {"kind": "gaussian", "mean": 0.0, "var": 0.25},
}
DEFAULT_REPLICATES = {"picard": 1, "simulate": 1, "check": 1}
INIT_KEYS = {
    "gaussian": {"mean": 0.0, "var": 1.0},
    "deterministic": {"x0": 0.0},
    "uniform": {"low": 0.0, "high": 1.0},
    "atom": {"k": 1.0},
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    resolved: dict

    @property
    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(**self.resolved["integrator"])

    @property
    def seed(self) -> int:
        return self.resolved["seed"]

    @property
    def replicates(self) -> int:
        return self.resolved["replicates"]

    @property
    def settings(self) -> dict:
        return self.resolved["settings"]

    @property
    def family(self) -> dict | None:
        return self.resolved.get("family")

    @property
    def model(self) -> dict | None:
        return self.resolved.get("model")

    @property
    def outputs(self) -> dict:
        return self.resolved["outputs"]

    def init_sampler(self):
        return make_init(self.resolved["init"])

    @property
    def config_hash(self) -> str:
        return config_hash(self.resolved)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def make_init(spec: dict):
    kind = spec["kind"]
    if kind == "gaussian":
        return gaussian(spec["mean"], spec["var"])
    if kind == "deterministic":
        return deterministic(spec["x0"])
    if kind == "uniform":
        return uniform(spec["low"], spec["high"])
    if kind == "atom":
        return atom(spec["k"])
    raise ConfigError(f"init.kind: unknown initial law {kind!r}")


def _reject_unknown(d: dict, allowed, path: str):
    for key in d:
        if key not in allowed:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"unknown key {where!r}; allowed keys: {sorted(allowed)}")


def _num(v, path, *, integer=False, lo=None, lo_open=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {v!r}")
    if integer:
        if isinstance(v, float) and not v.is_integer():
            raise ConfigError(f"{path}: expected an integer, got {v!r}")
        v = int(v)
    else:
        v = float(v)
        if not math.isfinite(v):
            raise ConfigError(f"{path}: must be finite")
    if lo is not None and (v <= lo if lo_open else v < lo):
        raise ConfigError(f"{path}: must be {'>' if lo_open else '>='} {lo}, got {v}")
    return v


def _obj(v, path):
    if not isinstance(v, dict):
        raise ConfigError(f"{path}: expected an object")
    return v


def resolve_config(raw: dict) -> ExperimentConfig:
    """Validate a raw config mapping and fill in every default."""
    raw = _obj(copy.deepcopy(raw), "<root>")
    _reject_unknown(raw, TOP_KEYS, "")
    if "experiment" not in raw:
        raise ConfigError("experiment: required key missing")
    exp = raw["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment: unknown experiment {exp!r}; expected one of {EXPERIMENTS}")
    out = {"experiment": exp}

    seed = raw.get("seed", 0)
    seed = _num(seed, "seed", integer=True, lo=0)
    if seed >= 2**64:
        raise ConfigError("seed: must be < 2**64")
    out["seed"] = seed
    out["replicates"] = _num(raw.get("replicates", DEFAULT_REPLICATES.get(exp, 10)), "replicates", integer=True, lo=1)

    integ = dict(DEFAULT_INTEGRATOR[exp])
    integ["blowup_threshold"] = 1e12
    user_integ = _obj(raw.get("integrator", {}), "integrator")
    _reject_unknown(user_integ, integ, "integrator")
    integ.update(user_integ)
    integ["N"] = _num(integ["N"], "integrator.N", integer=True, lo=1)
    integ["dt"] = _num(integ["dt"], "integrator.dt", lo=0, lo_open=True)
    integ["T"] = _num(integ["T"], "integrator.T", lo=0)
    integ["blowup_threshold"] = _num(integ["blowup_threshold"], "integrator.blowup_threshold", lo=0, lo_open=True)
    if integ["record_every"] is None:
        integ["record_every"] = max(1, steps_for(integ["T"], integ["dt"]))
    integ["record_every"] = _num(integ["record_every"], "integrator.record_every", integer=True, lo=1)
    out["integrator"] = integ

    if exp in DEFAULT_FAMILY:
        fam = dict(DEFAULT_FAMILY[exp])
        user_fam = _obj(raw.get("family", {}), "family")
        _reject_unknown(user_fam, fam, "family")
        fam.update(user_fam)
        if fam["name"] not in FAMILIES:
            raise ConfigError(f"family.name: unknown family {fam['name']!r}; expected one of {FAMILIES}")
        if not isinstance(fam["values"], list) or not fam["values"]:
            raise ConfigError("family.values: must be a non-empty list")
        fam["values"] = [_num(v, f"family.values[{i}]") for i, v in enumerate(fam["values"])]
        fam["limit"] = _num(fam["limit"], "family.limit")
        out["family"] = fam
    elif "family" in raw:
        raise ConfigError(f"family: not used by experiment {exp!r}")

    if exp in DEFAULT_MODEL:
        model = dict(DEFAULT_MODEL[exp])
        user_model = _obj(raw.get("model", {}), "model")
        _reject_unknown(user_model, ("name", "params"), "model")
        model.update(user_model)
        if model["name"] not in BUILTIN_MODELS or model["name"] == "frozen_flow":
            raise ConfigError(f"model.name: unknown model {model['name']!r}")
        params = _obj(model.get("params", {}), "model.params")
        model["params"] = {k: _num(v, f"model.params.{k}") for k, v in params.items()}
        if model["name"] in FAMILIES and "lambda" not in model["params"]:
            raise ConfigError(f"model.params.lambda: required for model {model['name']!r}")
        if exp == "counterexample" and model["name"] != "counterexample":
            raise ConfigError("model.name: the counterexample experiment uses the counterexample model")
        out["model"] = model
    elif "model" in raw:
        raise ConfigError(f"model: not used by experiment {exp!r}")

    init = dict(DEFAULT_INIT[exp])
    user_init = _obj(raw.get("init", {}), "init")
    if "kind" in user_init and user_init["kind"] != init["kind"]:
        init = {"kind": user_init["kind"]}
    if init["kind"] not in INIT_KEYS:
        raise ConfigError(f"init.kind: unknown initial law {init['kind']!r}")
    allowed = {"kind", *INIT_KEYS[init["kind"]]}
    _reject_unknown(user_init, allowed, "init")
    init = {**INIT_KEYS[init["kind"]], **init, **user_init}
    for k in INIT_KEYS[init["kind"]]:
        init[k] = _num(init[k], f"init.{k}")
    if init["kind"] == "gaussian" and init["var"] < 0:
        raise ConfigError("init.var: must be >= 0")
    if exp == "counterexample" and init["kind"] != "atom":
        raise ConfigError("init.kind: the counterexample experiment uses the atom family")
    out["init"] = init

    settings = copy.deepcopy(DEFAULT_SETTINGS[exp])
    user_settings = _obj(raw.get("settings", {}), "settings")
    _reject_unknown(user_settings, settings, "settings")
    settings.update(user_settings)
    out["settings"] = _check_settings(exp, settings, integ)

    outputs = {"dir": None, "snapshots": False}
    user_out = _obj(raw.get("outputs", {}), "outputs")
    _reject_unknown(user_out, outputs, "outputs")
    outputs.update(user_out)
    if outputs["dir"] is not None and not isinstance(outputs["dir"], str):
        raise ConfigError("outputs.dir: expected a string path or null")
    if not isinstance(outputs["snapshots"], bool):
        raise ConfigError("outputs.snapshots: expected true or false")
    out["outputs"] = outputs
    return ExperimentConfig(exp, out)


def _check_settings(exp, s, integ):
    T = integ["T"]
    if "times" in s:
        if s["times"] is None:
            s["times"] = [T] if exp == "counterexample" else None
        if s["times"] is not None:
            if not isinstance(s["times"], list) or not s["times"]:
                raise ConfigError("settings.times: must be a non-empty list or null")
            s["times"] = [_num(t, f"settings.times[{i}]", lo=0) for i, t in enumerate(s["times"])]
            for i, t in enumerate(s["times"]):
                if t > T + 1e-12:
                    raise ConfigError(f"settings.times[{i}]: {t} lies outside [0, T={T}]")
    if exp == "counterexample":
        s["eps"] = _num(s["eps"], "settings.eps", lo=0, lo_open=True)
        if not isinstance(s["k_list"], list) or not s["k_list"]:
            raise ConfigError("settings.k_list: must be a non-empty list")
        s["k_list"] = [_num(k, f"settings.k_list[{i}]", integer=True, lo=1) for i, k in enumerate(s["k_list"])]
    if exp == "invariant_dependence":
        for k in ("burn_in", "checkpoint_gap", "stationarity_tol", "max_time"):
            s[k] = _num(s[k], f"settings.{k}", lo=0, lo_open=k != "burn_in")
        if s["burn_in"] >= s["max_time"]:
            raise ConfigError("settings.burn_in: must be smaller than settings.max_time")
    if exp == "picard":
        s["max_iter"] = _num(s["max_iter"], "settings.max_iter", integer=True, lo=1)
        s["tol"] = _num(s["tol"], "settings.tol", lo=0, lo_open=True)
    if exp == "check":
        if not isinstance(s["suites"], list) or not s["suites"]:
            raise ConfigError("settings.suites: must be a non-empty list")
        for i, name in enumerate(s["suites"]):
            if name not in CHECK_SUITES:
                raise ConfigError(f"settings.suites[{i}]: unknown suite {name!r}; expected one of {CHECK_SUITES}")
    return s


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return resolve_config(raw)
