"""Physical parameters, dimensionless groups and unit scales."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

__all__ = [
    "PhysicalParams",
    "DimensionlessParams",
    "Scales",
    "PRINTED_DIMENSIONLESS",
    "rescale_params",
    "unit_scales",
    "params_report",
]


@dataclass(frozen=True)
class PhysicalParams:
    """SI parameters of the ball-and-beam rig and its servo.

    Defaults are the values listed for the Quanser apparatus.
    """

    l_b: float = 0.43          # beam length, m
    l_l: float = 0.11          # link length, m
    r_g: float = 0.03          # gear radius, m
    r_B: float = 0.01          # ball radius, m
    m_B: float = 0.07          # ball mass, kg
    m_b: float = 0.15          # beam mass, kg
    m_l: float = 0.01          # link mass, kg
    I_B: float = 4.25e-6       # ball inertia, kg m^2
    I_b: float = 0.001         # beam inertia, kg m^2
    I_s: float = 0.002         # effective servo inertia, kg m^2
    grav: float = 9.8          # m/s^2
    s0: float = 0.22           # desired ball position, m
    c0: float = 9.33e-10       # servo dissipation, kg m^2/s
    R_m: float = 2.6           # armature resistance, ohm
    N_g: float = 70.5          # gear ratio
    K_m: float = 0.00767       # motor torque constant, V s

    def __post_init__(self):
        positive = ("l_b", "l_l", "r_g", "r_B", "m_B", "m_b", "m_l", "I_B", "I_b", "I_s", "grav",
                    "R_m", "N_g", "K_m")
        for name in positive:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"physical parameter {name} must be positive, got {v!r}")
        if self.c0 < 0:
            raise ValueError("c0 must be nonnegative")
        if not 0 < self.s0 < self.l_b:
            raise ValueError("s0 must lie strictly inside the beam")

    @property
    def solid_sphere_inertia(self) -> float:
        return 0.4 * self.m_B * self.r_B ** 2

    def inertia_defect(self) -> float:
        """Relative gap between ``I_B`` and ``(2/5) m_B r_B^2``."""
        return abs(self.I_B - self.solid_sphere_inertia) / self.solid_sphere_inertia

    def with_solid_sphere_inertia(self) -> "PhysicalParams":
        """Copy with ``I_B`` reset to ``(2/5) m_B r_B^2``.

        Only then do the rotational and gravitational energy scales coincide
        and the physical Lagrangian map exactly onto the rescaled one.
        """
        return replace(self, I_B=self.solid_sphere_inertia)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> tuple:
        return tuple(f.name for f in fields(cls))


@dataclass(frozen=True)
class DimensionlessParams:
    a1: float
    a2: float
    a3: float
    a4: float
    a5: float
    a6: float
    a7: float
    s0_star: float

    def __post_init__(self):
        if not 0 < self.a1 < 1:
            raise ValueError("a1 must lie in (0, 1)")
        if self.a2 <= 0 or self.a3 <= 0 or self.a4 <= 0:
            raise ValueError("a2, a3, a4 must be positive")
        if self.a7 < 0:
            raise ValueError("a7 must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


# Values used on the experimental rig (they differ from Table 1 recomputation).
PRINTED_DIMENSIONLESS = DimensionlessParams(
    a1=0.2547, a2=0.0588, a3=236.294, a4=471.126, a5=0.1889, a6=42.0, a7=5e-6, s0_star=22.0,
)


@dataclass(frozen=True)
class Scales:
    """Length ``L`` (m), time ``tau`` (s) and energy/torque ``E0`` (J)."""

    L: float
    tau: float
    E0: float


def unit_scales(phys: PhysicalParams) -> Scales:
    tau = math.sqrt(2.0 * phys.r_B / (5.0 * phys.grav))
    return Scales(L=phys.r_B, tau=tau, E0=phys.m_B * phys.grav * phys.r_B)


def rescale_params(phys: PhysicalParams) -> DimensionlessParams:
    p = phys
    return DimensionlessParams(
        a1=p.l_l / p.l_b,
        a2=p.r_g / p.l_b,
        a3=(p.I_b + p.I_B) / p.I_B,
        a4=p.I_s / p.I_B,
        a5=p.m_l * p.r_g / (2.0 * p.m_B * p.r_B),
        a6=p.l_b * (p.m_b + p.m_l) / (2.0 * p.m_B * p.r_B),
        a7=math.sqrt(5.0 / (2.0 * p.r_B ** 3 * p.grav)) * p.c0 / p.m_B,
        s0_star=p.s0 / p.r_B,
    )


def params_report(phys: PhysicalParams, printed: DimensionlessParams = PRINTED_DIMENSIONLESS,
                  flag_rtol: float = 1e-3) -> dict:
    """Recomputed dimensionless groups next to the printed ones."""
    derived = rescale_params(phys)
    sc = unit_scales(phys)
    rows = []
    for name in ("a1", "a2", "a3", "a4", "a5", "a6", "a7", "s0_star"):
        d = getattr(derived, name)
        pr = getattr(printed, name)
        rel = abs(d - pr) / abs(pr) if pr != 0 else float("inf")
        rows.append({"name": name, "derived": d, "printed": pr, "rel_discrepancy": rel,
                     "flagged": bool(rel > flag_rtol)})
    return {
        "rows": rows,
        "scales": {"L": sc.L, "tau": sc.tau, "E0": sc.E0},
        "ball_inertia": {
            "I_B": phys.I_B,
            "solid_sphere": phys.solid_sphere_inertia,
            "rel_defect": phys.inertia_defect(),
            "I_B_over_tau2": phys.I_B / sc.tau ** 2,
        },
    }
