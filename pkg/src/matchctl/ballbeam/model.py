"""Ball-and-beam Lagrangian, its explicit closed-loop family and helpers.

Coordinates are ``q = (s, theta)``: ball position along the beam and servo
angle, both dimensionless (length unit ``r_B``). Only ``theta`` is
actuated. The beam angle ``alpha(theta)`` comes from the linkage.

Dimensionless open-loop data::

    g = [[1, a'], [a', a4 + (a3 + 5/2 s^2) a'^2]]
    V = a5 sin(theta) + (s + a6) sin(alpha)
    C = (0, a7 thetadot)

The closed-loop metric, potential and dissipation are built from the
tuning functions and the alpha-tables. Every field carries analytic
partials; scalar fast paths exist for the control law, the closed-loop
energy and the open-loop acceleration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import SingularMatrixError
from ..geometry import (
    DissipationField,
    Domain,
    LagrangianSystem,
    MetricField,
    ProjectionField,
    ScalarField,
    fd_partials,
)
from ..geometry import ConfigState
from ..linear import LinearFeedback
from ..matching import ClosedLoopSpec, control_law
from .kinematics import KinematicsContext, Linkage
from .params import PRINTED_DIMENSIONLESS, DimensionlessParams, PhysicalParams, Scales, unit_scales
from .tables import AlphaTables
from .tuning import TuningFunctions, default_tuning

__all__ = [
    "BallBeamModel",
    "BallBeamClosedLoop",
    "open_loop_system",
    "physical_system",
    "closed_loop_family",
    "alpha_of_theta",
    "alpha_derivatives",
    "linearize_control",
    "default_tuning",
    "S_DOMAIN",
    "THETA_DOMAIN",
]

S_DOMAIN = (2.0, 41.0)
THETA_DOMAIN = (-0.6, 0.6)


class BallBeamModel:
    """Parameters, linkage and alpha-tables of one ball-and-beam instance.

    Immutable after construction; the quadrature tables are built eagerly.

    Parameters
    ----------
    phys : PhysicalParams
        SI parameters (unit scales and motor constants).
    dims : DimensionlessParams
        Groups used by the dimensionless model. Defaults to the values used
        on the experimental rig.
    tuning : TuningFunctions
        Free functions of the closed-loop family.
    theta_range : tuple
        Working interval of the linkage solver.
    s_domain, theta_domain : tuple
        Validity box of the dimensionless model.
    v_sat : float
        Servo voltage limit in volts.
    """

    def __init__(self, phys: PhysicalParams = None, dims: DimensionlessParams = None,
                 tuning: TuningFunctions = None, theta_range=(-0.9, 0.9),
                 s_domain=S_DOMAIN, theta_domain=THETA_DOMAIN, v_sat: float = 5.0,
                 n_alpha_nodes: int = 2001):
        self.phys = PhysicalParams() if phys is None else phys
        self.dims = PRINTED_DIMENSIONLESS if dims is None else dims
        self.tuning = default_tuning() if tuning is None else tuning
        if not (theta_range[0] <= theta_domain[0] and theta_domain[1] <= theta_range[1]):
            raise ValueError("theta domain must lie inside the linkage working interval")
        if s_domain[0] <= 0:
            raise ValueError("s domain must exclude s = 0")
        self.linkage = Linkage(self.dims.a1, self.dims.a2, theta_range)
        self.domain = Domain(np.array([s_domain[0], theta_domain[0]]), np.array([s_domain[1], theta_domain[1]]))
        self.v_sat = float(v_sat)
        lo, hi = self.linkage.alpha_range()
        self.tables = AlphaTables(self.tuning, 1.05 * max(abs(lo), abs(hi)), n_alpha_nodes)
        self.scales: Scales = unit_scales(self.phys)
        # single-slot caches, stored as one (key, value) tuple so readers
        # never see a key paired with another key's value
        self._kin_cache = (None, None)
        self._terms_cache = (None, None)

    # -- kinematics -------------------------------------------------------
    def kin(self, theta: float):
        """``(alpha, alpha', alpha'')`` at ``theta``; the last query is cached."""
        c = self._kin_cache
        if theta == c[0]:
            return c[1]
        lk = self.linkage
        a = lk.alpha(theta)
        d1, d2 = lk.derivatives(theta, a)
        val = (a, d1, d2)
        self._kin_cache = (theta, val)
        return val

    # -- open loop --------------------------------------------------------
    def metric(self, s, theta):
        _, d1, _ = self.kin(theta)
        p = self.dims
        return 1.0, d1, p.a4 + (p.a3 + 2.5 * s * s) * d1 * d1

    def metric_partials(self, s, theta):
        """``(d_s g, d_theta g)`` each as ``(g11, g12, g22)`` tuples."""
        _, d1, d2 = self.kin(theta)
        p = self.dims
        return (0.0, 0.0, 5.0 * s * d1 * d1), (0.0, d2, 2.0 * (p.a3 + 2.5 * s * s) * d1 * d2)

    def potential(self, s, theta):
        a, _, _ = self.kin(theta)
        p = self.dims
        return p.a5 * math.sin(theta) + (s + p.a6) * math.sin(a)

    def potential_grad(self, s, theta):
        a, d1, _ = self.kin(theta)
        p = self.dims
        return math.sin(a), p.a5 * math.cos(theta) + (s + p.a6) * math.cos(a) * d1

    # -- closed-loop family -----------------------------------------------
    def family_terms(self, s, theta):
        """Closed-loop quantities and their partials at ``(s, theta)``.

        Returns a dict with ``gh`` (g11, g12, g22), ``dgh_s``, ``dgh_t``,
        ``Vh``, ``dVh`` (s and theta partials), ``mu``, ``sigma``.
        The last evaluation is cached.
        """
        key = (s, theta)
        c = self._terms_cache
        if key == c[0]:
            return c[1]
        val = self._family_terms(s, theta)
        self._terms_cache = (key, val)
        return val

    def _family_terms(self, s, theta):
        tn = self.tuning
        a, d1, d2 = self.kin(theta)
        (psi, Psi, J, F, G), (dpsi, _, dJ, dF, dG) = self.tables.eval_all(a)
        s0 = self.dims.s0_star
        y = psi * s - s0 + Psi
        y_a = dpsi * s + psi
        hy, dhy = tn.h(y), tn.dh(y)

        m1, dm1, d2m1 = tn.mu1(a), tn.dmu1(a), tn.d2mu1(a)
        mu = dm1 / (5.0 * s * d1)
        sigma = m1 - dm1 / (5.0 * s)
        if mu == 0.0:
            raise SingularMatrixError(f"mu vanishes at q = {[s, theta]}", q=(s, theta))
        mu_s = -mu / s
        mu_t = d2m1 / (5.0 * s) - mu * d2 / d1
        sg_s = dm1 / (5.0 * s * s)
        sg_t = d1 * (dm1 - d2m1 / (5.0 * s))

        psi2 = psi * psi
        base = hy + 10.0 * J
        g11 = psi2 * base
        g11_s = psi2 * dhy * psi
        g11_t = d1 * (2.0 * psi * dpsi * base + psi2 * (dhy * y_a + 10.0 * dJ))

        g12 = (1.0 - sigma * g11) / mu
        g12_s = (-sg_s * g11 - sigma * g11_s - g12 * mu_s) / mu
        g12_t = (-sg_t * g11 - sigma * g11_t - g12 * mu_t) / mu

        g22 = (d1 - sigma * g12) / mu
        g22_s = (-sg_s * g12 - sigma * g12_s - g22 * mu_s) / mu
        g22_t = (d2 - sg_t * g12 - sigma * g12_t - g22 * mu_t) / mu

        w, dw = tn.w(y), tn.dw(y)
        Vh = w + (y + s0) * F - G
        Vh_s = (dw + F) * psi
        Vh_t = d1 * ((dw + F) * y_a + (y + s0) * dF - dG)
        return {
            "gh": (g11, g12, g22),
            "dgh_s": (g11_s, g12_s, g22_s),
            "dgh_t": (g11_t, g12_t, g22_t),
            "Vh": Vh,
            "dVh": (Vh_s, Vh_t),
            "mu": mu,
            "sigma": sigma,
            "y": y,
        }

    def dissipation_hat(self, s, theta, sdot, thetadot, terms=None):
        t = self.family_terms(s, theta) if terms is None else terms
        mu, sigma = t["mu"], t["sigma"]
        c2 = self.tuning.c2_hat(s, theta, sdot, thetadot, t["gh"][1], mu, sigma)
        # row 1 of g g_hat^-1 is (sigma, mu) and C1 = 0
        c1 = -mu * c2 / sigma
        return c1, c2


def _sym(t):
    return np.array([[t[0], t[1]], [t[1], t[2]]])


def _quad_force(g, dg_s, dg_t, sdot, thetadot):
    """``[jk, r] qdot^j qdot^k = gdot qdot - 1/2 qdot.(d_r g).qdot`` for 2 DOF."""
    gd11 = dg_s[0] * sdot + dg_t[0] * thetadot
    gd12 = dg_s[1] * sdot + dg_t[1] * thetadot
    gd22 = dg_s[2] * sdot + dg_t[2] * thetadot
    qs = dg_s[0] * sdot * sdot + 2.0 * dg_s[1] * sdot * thetadot + dg_s[2] * thetadot * thetadot
    qt = dg_t[0] * sdot * sdot + 2.0 * dg_t[1] * sdot * thetadot + dg_t[2] * thetadot * thetadot
    return gd11 * sdot + gd12 * thetadot - 0.5 * qs, gd12 * sdot + gd22 * thetadot - 0.5 * qt


def _solve2(g, b):
    det = g[0] * g[2] - g[1] * g[1]
    if det == 0.0 or not math.isfinite(det):
        raise SingularMatrixError("singular 2x2 metric")
    return (g[2] * b[0] - g[1] * b[1]) / det, (g[0] * b[1] - g[1] * b[0]) / det


def _actuation_projection_2(g11, g12, g22):
    """Projection for ``B = e2`` and its metric-derivative map."""
    det = g11 * g22 - g12 * g12
    # a = g^-1 e2, S = a_2
    a = np.array([-g12 / det, g11 / det])
    S = a[1]
    return np.eye(2) - np.outer(a, [0.0, 1.0]) / S, a, S


def open_loop_system(model: BallBeamModel) -> LagrangianSystem:
    """Dimensionless open-loop Lagrangian system with ``s`` unactuated."""
    m = model
    p = m.dims

    def g_val(q):
        return _sym(m.metric(q[0], q[1]))

    def g_d(q):
        ds, dt = m.metric_partials(q[0], q[1])
        return np.stack([_sym(ds), _sym(dt)])

    def P_val(q):
        return _actuation_projection_2(*m.metric(q[0], q[1]))[0]

    def P_d(q):
        g = g_val(q)
        _, a, S = _actuation_projection_2(g[0, 0], g[0, 1], g[1, 1])
        ginv = np.linalg.inv(g)
        out = []
        for dg in g_d(q):
            da = -ginv @ dg @ a
            dS = da[1]
            out.append(-np.outer(da, [0.0, 1.0]) / S + np.outer(a, [0.0, 1.0]) * dS / S ** 2)
        return np.stack(out)

    def accel(q, qdot, u):
        s, th = q[0], q[1]
        sd, td = qdot[0], qdot[1]
        g = m.metric(s, th)
        ds, dt = m.metric_partials(s, th)
        w = _quad_force(g, ds, dt, sd, td)
        dV = m.potential_grad(s, th)
        rhs = (u[0] - w[0] - dV[0], u[1] - w[1] - p.a7 * td - dV[1])
        return _solve2(g, rhs)

    metric = MetricField(g_val, 2, partials=g_d, domain=m.domain)
    return LagrangianSystem(
        metric=metric,
        potential=ScalarField(lambda q: m.potential(q[0], q[1]),
                              lambda q: np.array(m.potential_grad(q[0], q[1])), domain=m.domain),
        dissipation=DissipationField(lambda q, qd: np.array([0.0, p.a7 * qd[1]])),
        projection=ProjectionField(P_val, rank=1, partials=P_d, domain=m.domain),
        domain=m.domain,
        accel=accel,
    )


def physical_system(phys: PhysicalParams, dims: DimensionlessParams = None,
                    theta_range=(-0.9, 0.9)) -> LagrangianSystem:
    """SI Lagrangian assembled directly from the physical parameters.

    Coordinates ``(s [m], theta [rad])``. The ball's kinetic energy is its
    rolling term ``1/2 I_B (sdot / r_B)^2`` plus ``1/2 m_B s^2 alphadot^2``.
    The linkage uses ``a1, a2`` from ``dims`` (default: recomputed from
    ``phys``).
    """
    from .params import rescale_params

    p = phys
    d = rescale_params(p) if dims is None else dims
    lk = Linkage(d.a1, d.a2, theta_range)
    kB = p.I_B / p.r_B ** 2
    rot = p.I_b + p.I_B

    def kin(th):
        a = lk.alpha(th)
        d1, d2 = lk.derivatives(th, a)
        return a, d1, d2

    def parts(s, th):
        a, d1, d2 = kin(th)
        g = (kB, p.I_B * d1 / p.r_B, p.I_s + (rot + p.m_B * s * s) * d1 * d1)
        ds = (0.0, 0.0, 2.0 * p.m_B * s * d1 * d1)
        dt = (0.0, p.I_B * d2 / p.r_B, 2.0 * (rot + p.m_B * s * s) * d1 * d2)
        return a, d1, g, ds, dt

    def V(q):
        s, th = q
        a = lk.alpha(th)
        return (0.5 * p.m_l * p.grav * p.r_g * math.sin(th)
                + 0.5 * (p.m_b + p.m_l) * p.grav * p.l_b * math.sin(a)
                + p.m_B * p.grav * s * math.sin(a))

    def dV(s, th, a, d1):
        return (p.m_B * p.grav * math.sin(a),
                0.5 * p.m_l * p.grav * p.r_g * math.cos(th)
                + (0.5 * (p.m_b + p.m_l) * p.grav * p.l_b + p.m_B * p.grav * s) * math.cos(a) * d1)

    def accel(q, qdot, u):
        s, th = q[0], q[1]
        a, d1, g, ds, dt = parts(s, th)
        w = _quad_force(g, ds, dt, qdot[0], qdot[1])
        f = dV(s, th, a, d1)
        return _solve2(g, (u[0] - w[0] - f[0], u[1] - w[1] - p.c0 * qdot[1] - f[1]))

    def g_val(q):
        return _sym(parts(q[0], q[1])[2])

    def g_d(q):
        _, _, _, ds, dt = parts(q[0], q[1])
        return np.stack([_sym(ds), _sym(dt)])

    metric = MetricField(g_val, 2, partials=g_d)

    return LagrangianSystem(
        metric=metric,
        potential=ScalarField(V, lambda q: np.array(dV(q[0], q[1], *kin(q[1])[:2]))),
        dissipation=DissipationField(lambda q, qd: np.array([0.0, p.c0 * qd[1]])),
        projection=ProjectionField.from_actuation(metric, [[0.0], [1.0]]),
        accel=accel,
    )


@dataclass(frozen=True)
class BallBeamClosedLoop(ClosedLoopSpec):
    """Closed-loop family with scalar fast paths for control and energy."""

    model: Optional[BallBeamModel] = field(default=None, compare=False)

    def control(self, q, qdot):
        """Matching control force ``u = (u_s, u_theta)``; ``u_s`` is zero up to rounding."""
        m = self.model
        s, th = float(q[0]), float(q[1])
        sd, td = float(qdot[0]), float(qdot[1])
        g = m.metric(s, th)
        ds, dt = m.metric_partials(s, th)
        t = m.family_terms(s, th)
        gh = t["gh"]
        w = _quad_force(g, ds, dt, sd, td)
        wh = _quad_force(gh, t["dgh_s"], t["dgh_t"], sd, td)
        c1, c2 = m.dissipation_hat(s, th, sd, td, t)
        dV = m.potential_grad(s, th)
        dVh = t["dVh"]
        x = _solve2(gh, (wh[0] + c1 + dVh[0], wh[1] + c2 + dVh[1]))
        gx = (g[0] * x[0] + g[1] * x[1], g[1] * x[0] + g[2] * x[1])
        a7 = m.dims.a7
        return np.array([w[0] + dV[0] - gx[0], w[1] + a7 * td + dV[1] - gx[1]])

    def energy(self, q, qdot):
        """``(H_hat, dH_hat/dt)`` along closed-loop solutions."""
        m = self.model
        s, th = float(q[0]), float(q[1])
        sd, td = float(qdot[0]), float(qdot[1])
        t = m.family_terms(s, th)
        g11, g12, g22 = t["gh"]
        H = 0.5 * (g11 * sd * sd + 2.0 * g12 * sd * td + g22 * td * td) + t["Vh"]
        c1, c2 = m.dissipation_hat(s, th, sd, td, t)
        return H, -(c1 * sd + c2 * td)


def closed_loop_family(model: BallBeamModel) -> BallBeamClosedLoop:
    """Explicit closed-loop data ``(g_hat, V_hat, C_hat)`` for the model's tuning."""
    m = model

    def gh(q):
        return _sym(m.family_terms(q[0], q[1])["gh"])

    def gh_d(q):
        t = m.family_terms(q[0], q[1])
        return np.stack([_sym(t["dgh_s"]), _sym(t["dgh_t"])])

    def ch(q, qd):
        return np.array(m.dissipation_hat(q[0], q[1], qd[0], qd[1]))

    return BallBeamClosedLoop(
        metric_hat=MetricField(gh, 2, partials=gh_d, domain=m.domain),
        potential_hat=ScalarField(lambda q: m.family_terms(q[0], q[1])["Vh"],
                                  lambda q: np.array(m.family_terms(q[0], q[1])["dVh"]), domain=m.domain),
        dissipation_hat=DissipationField(ch),
        model=m,
    )


def alpha_of_theta(model: BallBeamModel, theta: float, context: KinematicsContext = None) -> float:
    return model.linkage.alpha(theta, context)


def alpha_derivatives(model: BallBeamModel, theta: float):
    return model.linkage.derivatives(theta)


def linearize_control(model: BallBeamModel, closed: ClosedLoopSpec = None, step: float = 1e-5) -> LinearFeedback:
    """Linearization of the matching law about ``(s0_star, 0, 0, 0)``.

    Gains come from central differences of the control law in the state
    ``x = (q, qdot)``; the result is ``u = v + a (q - q_eq) + b qdot``.
    """
    closed = closed_loop_family(model) if closed is None else closed
    if isinstance(closed, BallBeamClosedLoop):
        law = lambda q, qd: closed.control(q, qd)
    else:
        opn = open_loop_system(model)
        law = lambda q, qd: control_law(opn, closed, ConfigState(q, qd))
    q_eq = np.array([model.dims.s0_star, 0.0])
    zero = np.zeros(2)
    u0 = law(q_eq, zero)
    jac = fd_partials(lambda x: law(x[:2], x[2:]), np.concatenate([q_eq, zero]), step=step)
    # jac[k, r] = du_r / dx_k
    return LinearFeedback(v=u0, a=jac[:2].T, b=jac[2:].T, q_ref=q_eq)
