"""Permanent-magnet DC servo: torque to armature voltage and back."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import PhysicalParams, Scales, unit_scales

__all__ = ["ServoActuator", "VoltageCommand", "torque_to_voltage", "voltage_to_torque", "si_torque_to_voltage"]


@dataclass(frozen=True)
class VoltageCommand:
    """Commanded voltage after clamping and whether the clamp was active."""

    v_in: float
    v_raw: float
    saturated: bool


def si_torque_to_voltage(phys: PhysicalParams, u_si: float, thetadot_si: float,
                         v_sat: float = float("inf")) -> VoltageCommand:
    """``v = R_m u / (K_m N_g) + K_m N_g thetadot`` clamped to ``+-v_sat``."""
    kn = phys.K_m * phys.N_g
    v = phys.R_m * u_si / kn + kn * thetadot_si
    clamped = min(max(v, -v_sat), v_sat)
    return VoltageCommand(clamped, v, clamped != v)


def torque_to_voltage(phys: PhysicalParams, u2: float, thetadot: float, v_sat: float = float("inf"),
                      scales: Scales = None) -> VoltageCommand:
    """Dimensionless servo torque and speed to armature voltage."""
    sc = unit_scales(phys) if scales is None else scales
    return si_torque_to_voltage(phys, u2 * sc.E0, thetadot / sc.tau, v_sat)


def voltage_to_torque(phys: PhysicalParams, v_in: float, thetadot: float, scales: Scales = None) -> float:
    """Dimensionless torque delivered by ``v_in`` at dimensionless speed ``thetadot``."""
    sc = unit_scales(phys) if scales is None else scales
    kn = phys.K_m * phys.N_g
    u_si = kn * (v_in - kn * thetadot / sc.tau) / phys.R_m
    return u_si / sc.E0


class ServoActuator:
    """Servo on the ``theta`` coordinate of the dimensionless model.

    The signal is the clamped armature voltage; the applied torque is
    recomputed from it with the current servo speed.
    """

    def __init__(self, phys: PhysicalParams, v_sat: float = 5.0, scales: Scales = None):
        sc = unit_scales(phys) if scales is None else scales
        self.phys = phys
        self.v_sat = float(v_sat)
        self._kn = phys.K_m * phys.N_g
        self._R = phys.R_m
        self._E0 = sc.E0
        self._tau = sc.tau

    def signal(self, u, q, qdot):
        kn = self._kn
        v = self._R * u[1] * self._E0 / kn + kn * qdot[1] / self._tau
        c = min(max(v, -self.v_sat), self.v_sat)
        return c, c != v

    def force(self, signal, q, qdot):
        kn = self._kn
        u_si = kn * (signal - kn * qdot[1] / self._tau) / self._R
        return np.array([0.0, u_si / self._E0])

    def voltage(self, signal) -> float:
        return float(signal)
