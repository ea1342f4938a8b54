"""Matching conditions, lambda-equation residuals and the matching control law."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MatchCtlError
from .geometry import (
    ConfigState,
    DissipationField,
    LagrangianSystem,
    MetricField,
    ScalarField,
    _inv,
    christoffel_first,
    christoffel_second,
    fd_partials,
)

__all__ = [
    "ClosedLoopSpec",
    "MatchingResidual",
    "matching_residuals",
    "lambda_tensor",
    "lambda_pde_residuals",
    "derivation_residuals",
    "control_law",
    "closed_loop_energy",
    "residual_sweep",
]


@dataclass(frozen=True)
class ClosedLoopSpec:
    """Target closed-loop data ``(g_hat, V_hat, C_hat)``."""

    metric_hat: MetricField
    potential_hat: ScalarField
    dissipation_hat: DissipationField

    @classmethod
    def from_open(cls, sys: LagrangianSystem) -> "ClosedLoopSpec":
        return cls(sys.metric, sys.potential, sys.dissipation)


@dataclass(frozen=True)
class MatchingResidual:
    """Projected residual blocks of the three matching conditions.

    Blocks live in the ambient index space: ``geodesic[r, i, j]``,
    ``dissipative[r]``, ``potential[r]``.
    """

    geodesic: np.ndarray
    dissipative: np.ndarray
    potential: np.ndarray

    @property
    def geodesic_norm(self) -> float:
        return float(np.max(np.abs(self.geodesic)))

    @property
    def dissipative_norm(self) -> float:
        return float(np.max(np.abs(self.dissipative)))

    @property
    def potential_norm(self) -> float:
        return float(np.max(np.abs(self.potential)))

    @property
    def max_norm(self) -> float:
        return max(self.geodesic_norm, self.dissipative_norm, self.potential_norm)

    def to_record(self, q, qdot) -> dict:
        return {
            "q": np.asarray(q, dtype=float).tolist(),
            "qdot": np.asarray(qdot, dtype=float).tolist(),
            "geodesic_norm": self.geodesic_norm,
            "dissipative_norm": self.dissipative_norm,
            "potential_norm": self.potential_norm,
        }


def matching_residuals(open: LagrangianSystem, closed: ClosedLoopSpec, q, qdot) -> MatchingResidual:
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    open.domain.check(q)
    P = open.projection(q)
    g = open.metric(q)
    gh = closed.metric_hat(q)
    ginv = _inv(g, q)
    ghinv = _inv(gh, q)

    gamma = christoffel_second(open.metric, q)
    gamma_hat = christoffel_second(closed.metric_hat, q)
    geodesic = np.einsum("rk,kij->rij", P, gamma - gamma_hat)

    diss = P @ (ginv @ open.dissipation(q, qdot) - ghinv @ closed.dissipation_hat(q, qdot))
    pot = P @ (ginv @ open.potential.grad(q) - ghinv @ closed.potential_hat.grad(q))
    return MatchingResidual(geodesic, diss, pot)


def lambda_tensor(open: LagrangianSystem, closed: ClosedLoopSpec, q) -> np.ndarray:
    """``g @ inv(g_hat)``; entry ``[i, k]`` is ``lambda^k_i = g_ij g_hat^{jk}``."""
    q = np.asarray(q, dtype=float)
    gh = closed.metric_hat(q)
    _inv(gh, q)
    return np.linalg.solve(gh, open.metric(q)).T


def _lambda_pieces(open, closed, q):
    dom = open.domain
    g = open.metric(q)
    gh = closed.metric_hat(q)
    P = open.projection(q)
    L = lambda_tensor(open, closed, q)
    dg = open.metric.d(q)
    dgh = closed.metric_hat.d(q)
    c = christoffel_first(open.metric, q)
    dL = fd_partials(lambda x: lambda_tensor(open, closed, x), q, domain=dom)
    dP = fd_partials(open.projection, q, domain=dom) if open.projection.partials is None else open.projection.d(q)
    return g, gh, P, L, dg, dgh, c, dL, dP


def lambda_pde_residuals(open: LagrangianSystem, closed: ClosedLoopSpec, q):
    """Residuals of the first-order lambda system.

    Returns
    -------
    res6 : ndarray ``[k, t, j]``
        The symmetrized lambda equation contracted with ``P^s_k P^r_t``.
    res7 : ndarray ``[t, n, m]``
        Left minus right side of the metric transport equation.

    Partials of lambda and P come from :func:`fd_partials`.
    """
    q = np.asarray(q, dtype=float)
    open.domain.check(q)
    g, gh, P, L, dg, dgh, c, dL, dP = _lambda_pieces(open, closed, q)
    # lam[l, r] = lambda^l_r ; dlam[j, l, r] = d_j lambda^l_r
    lam = L.T
    dlam = np.transpose(dL, (0, 2, 1))

    inner = (
        np.einsum("ls,jlr->srj", g, dlam)
        + np.einsum("ljs,lr->srj", c, lam)
        - np.einsum("rji,is->srj", c, lam)
        + np.einsum("ir,jis->srj", g, dlam)
        + np.einsum("ijr,is->srj", c, lam)
        - np.einsum("sjl,lr->srj", c, lam)
    )
    res6 = np.einsum("sk,rt,srj->ktj", P, P, inner)

    # Q[l, t] = lambda^l_r P^r_t
    Q = lam @ P
    dQ = np.einsum("mlr,rt->mlt", dlam, P) + np.einsum("lr,mrt->mlt", lam, dP)
    lhs = (
        np.einsum("lt,lnm->tnm", Q, dgh)
        + np.einsum("ln,mlt->tnm", gh, dQ)
        + np.einsum("lm,nlt->tnm", gh, dQ)
    )
    rhs = (
        np.einsum("lt,lnm->tnm", P, dg)
        + np.einsum("ln,mlt->tnm", g, dP)
        + np.einsum("lm,nlt->tnm", g, dP)
    )
    return res6, lhs - rhs


def derivation_residuals(open: LagrangianSystem, closed: ClosedLoopSpec, q):
    """Residuals of two intermediate identities of the indicial derivation.

    ``res8[t, i, j]`` is the geodesic condition multiplied through by
    ``g``; ``res12[k, t, j]`` is the unsymmetrized lambda equation. Both
    vanish wherever the geodesic matching block does.
    """
    q = np.asarray(q, dtype=float)
    open.domain.check(q)
    g, gh, P, L, dg, dgh, c, dL, dP = _lambda_pieces(open, closed, q)
    lam = L.T
    dlam = np.transpose(dL, (0, 2, 1))

    # (d_l gh_ij - d_j gh_li - d_i gh_jl) in [l, i, j] layout
    comb_h = dgh - np.einsum("jli->lij", dgh) - np.einsum("ijl->lij", dgh)
    comb = dg - np.einsum("jri->rij", dg) - np.einsum("irj->rij", dg)
    res8 = np.einsum("rt,lr,lij->tij", P, lam, comb_h) - np.einsum("rt,rij->tij", P, comb)

    lhs = (
        np.einsum("ls,jlr->srj", g, dlam)
        + np.einsum("lr,ljs->srj", lam, dg)
        - np.einsum("is,rij->srj", lam, dg)
    )
    rhs = (
        np.einsum("ij,lr,lis->srj", gh, lam, dlam)
        - np.einsum("is,lj,ilr->srj", lam, gh, dlam)
    )
    res12 = np.einsum("sk,rt,srj->ktj", P, P, lhs - rhs)
    return res8, res12


def control_law(open: LagrangianSystem, closed: ClosedLoopSpec, state: ConfigState) -> np.ndarray:
    """Matching control law.

    ``u = g (Gamma - Gamma_hat) qdot qdot + g (g^-1 C - g_hat^-1 C_hat)
    + g (g^-1 dV - g_hat^-1 dV_hat)``, the force that turns the open loop
    into the closed-loop Euler-Lagrange system.
    """
    q, qdot = state.q, state.qdot
    g = open.metric(q)
    gh = closed.metric_hat(q)
    ghinv = _inv(gh, q)
    _inv(g, q)
    gamma = christoffel_second(open.metric, q)
    gamma_hat = christoffel_second(closed.metric_hat, q)
    quad = np.einsum("kij,i,j->k", gamma - gamma_hat, qdot, qdot)
    C = open.dissipation(q, qdot)
    dV = open.potential.grad(q)
    force_hat = closed.dissipation_hat(q, qdot) + closed.potential_hat.grad(q)
    return g @ quad + C + dV - g @ (ghinv @ force_hat)


def closed_loop_energy(closed: ClosedLoopSpec, state: ConfigState):
    """``(H_hat, dH_hat/dt)`` with ``H_hat = 1/2 qdot.g_hat.qdot + V_hat``.

    Along closed-loop solutions ``dH_hat/dt = -C_hat . qdot``.
    """
    q, qdot = state.q, state.qdot
    gh = closed.metric_hat(q)
    H = 0.5 * qdot @ gh @ qdot + closed.potential_hat(q)
    rate = -float(closed.dissipation_hat(q, qdot) @ qdot)
    return float(H), rate


def residual_sweep(open: LagrangianSystem, closed: ClosedLoopSpec, points, qdot, with_lambda: bool = True) -> list:
    """Residual norms at each configuration in ``points``.

    Singular or out-of-domain points are recorded with an ``error`` entry
    and the sweep continues.
    """
    out = []
    qdot = np.asarray(qdot, dtype=float)
    for q in points:
        q = np.asarray(q, dtype=float)
        try:
            rec = matching_residuals(open, closed, q, qdot).to_record(q, qdot)
            if with_lambda:
                r6, r7 = lambda_pde_residuals(open, closed, q)
                rec["eq6_norm"] = float(np.max(np.abs(r6)))
                rec["eq7_norm"] = float(np.max(np.abs(r7)))
        except (MatchCtlError, np.linalg.LinAlgError) as exc:
            rec = {"q": q.tolist(), "qdot": qdot.tolist(), "error": f"{type(exc).__name__}: {exc}"}
        out.append(rec)
    return out
