"""JSON run configuration for the ball-and-beam model and simulations.

Sections: ``physical``, ``dimensionless_overrides``, ``tuning``,
``domain``, ``sim``, ``grid``. A user file is merged over the packaged
default section by section; unknown keys are rejected with the dotted key
name. Numbers may be given as JSON numbers or decimal strings.
"""
from __future__ import annotations

import copy
import json
from dataclasses import fields, replace
from importlib import resources
from pathlib import Path

from .ballbeam.model import BallBeamModel
from .ballbeam.params import DimensionlessParams, PhysicalParams, rescale_params
from .ballbeam.tuning import tuning_from_config
from .errors import ConfigError
from .geometry import ConfigState
from .sim import SimConfig

__all__ = ["default_config", "load_config", "merge_config", "build_model", "sim_config", "initial_state",
           "grid_axes", "SECTIONS"]

SECTIONS = ("physical", "dimensionless_overrides", "tuning", "domain", "sim", "grid")
_STATE_KEYS = ("s", "theta", "s_dot", "theta_dot")
_SIM_KEYS = ("dt", "duration_s", "controller_mode", "sample_rate_hz", "velocity_estimator", "v_sat",
             "divergence_halfwidth", "initial")
_GRID_KEYS = ("s", "theta", "qdot", "tolerance", "lambda_tolerance")
_DOMAIN_KEYS = ("s", "theta", "theta_working")


def default_config() -> dict:
    text = resources.files("matchctl.data").joinpath("default_config.json").read_text()
    return json.loads(text)


def _num(value, where: str) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"key '{where}' must be numeric, got {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"key '{where}' must be numeric, got {value!r}") from None


def _check_keys(section: dict, allowed, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"key '{where}' must be an object")
    for k in section:
        if k not in allowed:
            raise ConfigError(f"unknown key '{where}.{k}'")


def merge_config(base: dict, user: dict) -> dict:
    """Section-wise merge of ``user`` over ``base`` with schema checks."""
    if not isinstance(user, dict):
        raise ConfigError("configuration root must be an object")
    out = copy.deepcopy(base)
    for sec, val in user.items():
        if sec not in SECTIONS:
            raise ConfigError(f"unknown key '{sec}'")
        if not isinstance(val, dict):
            raise ConfigError(f"key '{sec}' must be an object")
        if sec in ("sim",):
            _check_keys(val, _SIM_KEYS, sec)
            for sub in ("divergence_halfwidth", "initial"):
                if sub in val:
                    _check_keys(val[sub], _STATE_KEYS, f"sim.{sub}")
                    out[sec][sub] = {**out[sec][sub], **val[sub]}
            out[sec].update({k: v for k, v in val.items() if k not in ("divergence_halfwidth", "initial")})
        else:
            out[sec].update(val)
    validate_config(out)
    return out


def validate_config(cfg: dict) -> None:
    """Raise :class:`ConfigError` naming the first offending key."""
    for sec in SECTIONS:
        if sec not in cfg:
            raise ConfigError(f"missing key '{sec}'")
    phys_names = PhysicalParams.field_names()
    _check_keys(cfg["physical"], phys_names, "physical")
    for k, v in cfg["physical"].items():
        _num(v, f"physical.{k}")
    dim_names = tuple(f.name for f in fields(DimensionlessParams))
    _check_keys(cfg["dimensionless_overrides"], dim_names, "dimensionless_overrides")
    for k, v in cfg["dimensionless_overrides"].items():
        _num(v, f"dimensionless_overrides.{k}")
    _check_keys(cfg["domain"], _DOMAIN_KEYS, "domain")
    for k in _DOMAIN_KEYS:
        iv = cfg["domain"].get(k)
        if not isinstance(iv, list) or len(iv) != 2:
            raise ConfigError(f"key 'domain.{k}' must be a [lo, hi] pair")
        lo, hi = (_num(x, f"domain.{k}") for x in iv)
        if not lo < hi:
            raise ConfigError(f"key 'domain.{k}' must have lo < hi")
    sim = cfg["sim"]
    _check_keys(sim, _SIM_KEYS, "sim")
    for k in ("dt", "duration_s", "sample_rate_hz", "v_sat"):
        if _num(sim.get(k), f"sim.{k}") <= 0:
            raise ConfigError(f"key 'sim.{k}' must be positive")
    for sub in ("divergence_halfwidth", "initial"):
        _check_keys(sim[sub], _STATE_KEYS, f"sim.{sub}")
        for k in _STATE_KEYS:
            _num(sim[sub].get(k), f"sim.{sub}.{k}")
    if sim["controller_mode"] not in ("continuous", "sampled"):
        raise ConfigError("key 'sim.controller_mode' must be 'continuous' or 'sampled'")
    if sim["velocity_estimator"] not in ("exact", "forward-difference"):
        raise ConfigError("key 'sim.velocity_estimator' must be 'exact' or 'forward-difference'")
    grid = cfg["grid"]
    _check_keys(grid, _GRID_KEYS, "grid")
    for k in ("s", "theta"):
        ax = grid.get(k)
        if not isinstance(ax, list) or len(ax) != 3:
            raise ConfigError(f"key 'grid.{k}' must be [lo, hi, n]")
        [_num(x, f"grid.{k}") for x in ax]
    if not isinstance(grid.get("qdot"), list) or len(grid["qdot"]) != 2:
        raise ConfigError("key 'grid.qdot' must be a pair")
    for k in ("tolerance", "lambda_tolerance"):
        _num(grid.get(k), f"grid.{k}")


def load_config(path=None) -> dict:
    """Packaged defaults, optionally overridden by the JSON file at ``path``."""
    base = default_config()
    if path is None:
        validate_config(base)
        return base
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        user = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}") from None
    return merge_config(base, user)


def _physical(cfg) -> PhysicalParams:
    try:
        return PhysicalParams(**{k: _num(v, f"physical.{k}") for k, v in cfg["physical"].items()})
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"section 'physical': {exc}") from None


def build_model(cfg: dict) -> BallBeamModel:
    phys = _physical(cfg)
    dims = rescale_params(phys)
    over = {k: _num(v, f"dimensionless_overrides.{k}") for k, v in cfg["dimensionless_overrides"].items()}
    try:
        dims = replace(dims, **over)
    except ValueError as exc:
        raise ConfigError(f"section 'dimensionless_overrides': {exc}") from None
    try:
        tuning = tuning_from_config(_numeric_tuning(cfg["tuning"]))
    except ConfigError:
        raise
    dom = cfg["domain"]
    iv = lambda k: tuple(_num(x, f"domain.{k}") for x in dom[k])
    try:
        return BallBeamModel(phys, dims, tuning, theta_range=iv("theta_working"), s_domain=iv("s"),
                             theta_domain=iv("theta"), v_sat=_num(cfg["sim"]["v_sat"], "sim.v_sat"))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"model construction failed: {exc}") from None


def _numeric_tuning(t: dict) -> dict:
    out = {}
    for name, sec in t.items():
        if isinstance(sec, dict):
            conv = {}
            for k, v in sec.items():
                if k == "kind":
                    conv[k] = v
                elif k == "coeffs":
                    if not isinstance(v, list):
                        raise ConfigError(f"key 'tuning.{name}.coeffs' must be a list")
                    conv[k] = [_num(x, f"tuning.{name}.coeffs") for x in v]
                else:
                    conv[k] = _num(v, f"tuning.{name}.{k}")
            out[name] = conv
        else:
            out[name] = sec
    return out


def sim_config(cfg: dict, model: BallBeamModel) -> SimConfig:
    s = cfg["sim"]
    tau = model.scales.tau
    hw = s["divergence_halfwidth"]
    return SimConfig(
        dt=_num(s["dt"], "sim.dt"),
        duration=_num(s["duration_s"], "sim.duration_s") / tau,
        controller_mode=s["controller_mode"],
        sample_rate_hz=_num(s["sample_rate_hz"], "sim.sample_rate_hz"),
        time_scale=tau,
        velocity_estimator=s["velocity_estimator"],
        v_sat=_num(s["v_sat"], "sim.v_sat"),
        divergence_center=(model.dims.s0_star, 0.0, 0.0, 0.0),
        divergence_halfwidth=tuple(_num(hw[k], f"sim.divergence_halfwidth.{k}") for k in _STATE_KEYS),
    )


def initial_state(cfg: dict) -> ConfigState:
    i = cfg["sim"]["initial"]
    v = [_num(i[k], f"sim.initial.{k}") for k in _STATE_KEYS]
    return ConfigState(v[:2], v[2:])


def grid_axes(cfg: dict):
    g = cfg["grid"]
    out = []
    for k in ("s", "theta"):
        lo, hi, n = (_num(x, f"grid.{k}") for x in g[k])
        if n < 1 or n != int(n):
            raise ConfigError(f"key 'grid.{k}' needs a positive integer count")
        out.append((lo, hi, int(n)))
    return out
