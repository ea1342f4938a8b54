"""Free functional parameters of the explicit ball-and-beam family."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from numpy.polynomial import Polynomial

from ..errors import ConfigError

__all__ = ["TuningFunctions", "default_tuning", "tuning_from_config", "DEFAULT_TUNING_CONFIG", "PSI_MODES"]

PSI_MODES = ("ode", "candidate")


@dataclass(frozen=True)
class TuningFunctions:
    """Tuning functions with the derivatives the family needs.

    ``c2_hat(s, theta, sdot, thetadot, g12_hat, mu, sigma)`` is the free
    dissipation component; it must be odd in ``(sdot, thetadot)``.
    ``psi_mode`` selects how the integrating factor psi is obtained
    ("ode" integrates ``psi' = -5 (mu1 / mu1') psi``; "candidate" is
    ``exp(+5 int mu1/mu1')``).
    """

    mu1: Callable[[float], float]
    dmu1: Callable[[float], float]
    d2mu1: Callable[[float], float]
    h: Callable[[float], float]
    dh: Callable[[float], float]
    w: Callable[[float], float]
    dw: Callable[[float], float]
    c2_hat: Callable[..., float]
    psi_mode: str = "ode"
    config: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.psi_mode not in PSI_MODES:
            raise ValueError(f"psi_mode must be one of {PSI_MODES}")


DEFAULT_TUNING_CONFIG = {
    "mu1": {"kind": "exp_sin", "c": 1.0849, "k": 4.7845},
    "h": {"kind": "polynomial", "coeffs": [1.1031]},
    "w": {"kind": "polynomial", "coeffs": [0.0, 0.0, 0.0023]},
    "c2_hat": {"kind": "velocity_weighted", "gain": 1.0, "s_weight": 1.0, "theta_weight": 10.0},
    "psi": "ode",
}


def _mu1_exp_sin(c: float, k: float):
    def mu1(a):
        return c * math.exp(k * math.sin(a))

    def dmu1(a):
        return c * k * math.cos(a) * math.exp(k * math.sin(a))

    def d2mu1(a):
        ca, sa = math.cos(a), math.sin(a)
        return c * k * (k * ca * ca - sa) * math.exp(k * sa)

    return mu1, dmu1, d2mu1


def _polynomial(coeffs):
    c = [float(x) for x in Polynomial(coeffs).coef]
    dc = [float(x) for x in Polynomial(coeffs).deriv().coef]

    def horner(cs, y):
        acc = 0.0
        for a in reversed(cs):
            acc = acc * y + a
        return acc

    return (lambda y: horner(c, y)), (lambda y: horner(dc, y))


def _c2_velocity_weighted(gain: float, s_weight: float, theta_weight: float):
    def c2_hat(s, theta, sdot, thetadot, g12_hat, mu, sigma):
        return -gain * g12_hat * (1.0 + s_weight * sdot * sdot + theta_weight * thetadot * thetadot) \
            * (-mu * sdot + sigma * thetadot)

    return c2_hat


def _get(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing key '{where}.{key}'")
    try:
        return float(section[key])
    except (TypeError, ValueError):
        raise ConfigError(f"key '{where}.{key}' must be numeric, got {section[key]!r}") from None


def tuning_from_config(cfg: dict) -> TuningFunctions:
    """Build tuning functions from selector dictionaries (see DEFAULT_TUNING_CONFIG)."""
    merged = {**DEFAULT_TUNING_CONFIG, **(cfg or {})}
    unknown = set(merged) - set(DEFAULT_TUNING_CONFIG)
    if unknown:
        raise ConfigError(f"unknown key 'tuning.{sorted(unknown)[0]}'")

    m = merged["mu1"]
    if not isinstance(m, dict) or m.get("kind") != "exp_sin":
        raise ConfigError("key 'tuning.mu1.kind' must be 'exp_sin'")
    mu1, dmu1, d2mu1 = _mu1_exp_sin(_get(m, "c", "tuning.mu1"), _get(m, "k", "tuning.mu1"))

    fns = {}
    for name in ("h", "w"):
        sec = merged[name]
        if not isinstance(sec, dict) or sec.get("kind") != "polynomial":
            raise ConfigError(f"key 'tuning.{name}.kind' must be 'polynomial'")
        coeffs = sec.get("coeffs")
        if not isinstance(coeffs, list) or not coeffs:
            raise ConfigError(f"key 'tuning.{name}.coeffs' must be a nonempty list")
        try:
            fns[name] = _polynomial(coeffs)
        except (TypeError, ValueError):
            raise ConfigError(f"key 'tuning.{name}.coeffs' must hold numbers") from None

    c = merged["c2_hat"]
    if not isinstance(c, dict) or c.get("kind") != "velocity_weighted":
        raise ConfigError("key 'tuning.c2_hat.kind' must be 'velocity_weighted'")
    c2 = _c2_velocity_weighted(_get(c, "gain", "tuning.c2_hat"), _get(c, "s_weight", "tuning.c2_hat"),
                               _get(c, "theta_weight", "tuning.c2_hat"))

    psi = merged["psi"]
    if psi not in PSI_MODES:
        raise ConfigError(f"key 'tuning.psi' must be one of {PSI_MODES}")
    return TuningFunctions(mu1=mu1, dmu1=dmu1, d2mu1=d2mu1, h=fns["h"][0], dh=fns["h"][1],
                           w=fns["w"][0], dw=fns["w"][1], c2_hat=c2, psi_mode=psi, config=merged)


def default_tuning(psi_mode: str = "ode") -> TuningFunctions:
    """``mu1 = 1.0849 exp(4.7845 sin a)``, ``h = 1.1031``, ``w = 0.0023 y^2``,
    ``C2_hat = -g12_hat (1 + sdot^2 + 10 thetadot^2)(-mu sdot + sigma thetadot)``."""
    return tuning_from_config({"psi": psi_mode})
