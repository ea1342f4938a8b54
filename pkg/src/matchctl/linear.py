"""Constant-coefficient matching: every linear state feedback is a matching law.

The quadratic potential convention is ``V = 1/2 q.V2.q + v1.q`` so that
``dV/dq = V2 q + v1``; with it the closed-loop data satisfy
``V2_hat = g_hat g^-1 (V2 - a)`` and ``C2_hat = g_hat g^-1 (C2 - b)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import qmc

from .errors import AdmissibilityError, Lemma1Error
from .geometry import (
    ConfigState,
    DissipationField,
    Domain,
    LagrangianSystem,
    MetricField,
    ProjectionField,
    ScalarField,
    actuation_projection,
    is_positive_definite,
    projection_defects,
)
from .matching import ClosedLoopSpec, control_law, matching_residuals

__all__ = [
    "LTISystem",
    "LinearFeedback",
    "ConstantClosedLoop",
    "symmetric_basis",
    "symmetric_solution_basis",
    "lemma1_solve",
    "lemma1_residual",
    "JordanOracleResult",
    "jordan_oracle",
    "theorem2_match",
    "random_admissible_instance",
    "verify_theorem2",
]

NULL_RTOL = 1e-10
NONDEGENERACY = 1e-8


@dataclass(frozen=True)
class LTISystem:
    """Constant mechanical data ``(g, V2, v1, C2, P)``."""

    g: np.ndarray
    V2: np.ndarray
    v1: np.ndarray
    C2: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        for name in ("g", "V2", "v1", "C2", "P"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))
        n = self.g.shape[0]
        if self.g.shape != (n, n) or self.V2.shape != (n, n) or self.C2.shape != (n, n) \
                or self.P.shape != (n, n) or self.v1.shape != (n,):
            raise ValueError("inconsistent LTI system dimensions")
        if not np.array_equal(self.g, self.g.T) or not is_positive_definite(self.g):
            raise ValueError("g must be symmetric positive definite")
        if not np.allclose(self.V2, self.V2.T, rtol=0, atol=1e-12 * (1 + np.abs(self.V2).max())):
            raise ValueError("V2 must be symmetric")
        d = projection_defects(self.P, self.g)
        if d["idempotency"] > 1e-10 or d["self_adjoint"] > 1e-10:
            raise ValueError(f"P is not a g-orthogonal projection: {d}")

    @property
    def n(self) -> int:
        return self.g.shape[0]

    @property
    def n_u(self) -> int:
        return projection_defects(self.P, self.g)["rank"]

    def lagrangian_system(self) -> LagrangianSystem:
        return LagrangianSystem(
            metric=MetricField.constant(self.g),
            potential=ScalarField.quadratic(self.V2, self.v1),
            dissipation=DissipationField.linear(self.C2),
            projection=ProjectionField.constant(self.P, rank=self.n_u),
            domain=Domain.unbounded(self.n),
        )


@dataclass(frozen=True)
class LinearFeedback:
    """``u = v + a (q - q_ref) + b qdot``."""

    v: np.ndarray
    a: np.ndarray
    b: np.ndarray
    q_ref: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("v", "a", "b"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))
        ref = np.zeros(self.v.size) if self.q_ref is None else np.array(self.q_ref, dtype=float)
        object.__setattr__(self, "q_ref", ref)

    def __call__(self, q, qdot) -> np.ndarray:
        return self.v + self.a @ (np.asarray(q) - self.q_ref) + self.b @ np.asarray(qdot)

    def violations(self, g, P, tol=1e-9) -> list:
        """Names of the admissibility constraints ``P g^-1 X = 0`` that fail."""
        PG = P @ np.linalg.inv(g)
        out = []
        for name in ("v", "a", "b"):
            M = PG @ getattr(self, name)
            scale = 1.0 + np.abs(getattr(self, name)).max()
            if np.abs(M).max() > tol * scale:
                out.append(f"P g^-1 {name} = 0 (max |.| = {np.abs(M).max():.3e})")
        return out


@dataclass(frozen=True)
class ConstantClosedLoop:
    """Constant ``g_hat``, ``V_hat = 1/2 q.V2_hat.q + v1_hat.q``, ``C_hat = C2_hat qdot``.

    ``v1_hat`` is zero whenever the feedback offset equals the open-loop
    linear potential term (equilibrium at the origin).
    """

    g_hat: np.ndarray
    V2_hat: np.ndarray
    C2_hat: np.ndarray
    v1_hat: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.v1_hat is None:
            object.__setattr__(self, "v1_hat", np.zeros(self.g_hat.shape[0]))

    @property
    def positive_definite(self) -> bool:
        return is_positive_definite(self.g_hat)

    def closed_loop_spec(self) -> ClosedLoopSpec:
        return ClosedLoopSpec(
            metric_hat=MetricField.constant(self.g_hat),
            potential_hat=ScalarField.quadratic(self.V2_hat, self.v1_hat),
            dissipation_hat=DissipationField.linear(self.C2_hat),
        )


def symmetric_basis(n: int) -> list:
    """Frobenius-orthonormal basis of symmetric n x n matrices."""
    basis = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            if i == j:
                E[i, i] = 1.0
            else:
                E[i, j] = E[j, i] = 1.0 / np.sqrt(2.0)
            basis.append(E)
    return basis


def lemma1_residual(R, X) -> float:
    R = np.asarray(R, dtype=float)
    X = np.asarray(X, dtype=float)
    return float(np.linalg.norm(R @ X - X @ R.T))


def symmetric_solution_basis(R, rtol: float = NULL_RTOL) -> list:
    """Orthonormal basis of ``{X = X^T : R X - X R^T = 0}``.

    The linear map is assembled on the symmetric basis and its nullspace
    read off the SVD with singular values below ``rtol * sigma_max``.
    """
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n = R.shape[0]
    E = symmetric_basis(n)
    A = np.stack([(R @ Ek - Ek @ R.T).ravel() for Ek in E], axis=1)
    _, sv, Vt = np.linalg.svd(A)
    smax = sv[0] if sv.size and sv[0] > 0 else 1.0
    m = len(E)
    rank = int(np.sum(sv > rtol * smax)) if sv[0] > 0 else 0
    null = Vt[rank:m]
    return [sum(c * Ek for c, Ek in zip(row, E)) for row in null]


def _is_nondegenerate(X) -> bool:
    s = np.linalg.svd(X, compute_uv=False)
    return s[0] > 0 and s[-1] > NONDEGENERACY * s[0]


def lemma1_solve(R, seed=None, max_sweep: int = 256) -> np.ndarray:
    """Symmetric nondegenerate X with ``R X = X R^T``.

    The first candidate is the orthogonal projection of ``seed`` (identity
    by default) onto the solution space; if it is degenerate, combinations
    of the basis with coefficients from an unscrambled Halton sequence are
    tried in order. The result is scaled to ``||X||_F = sqrt(n)`` with sign
    chosen so that ``<X, seed> >= 0``.
    """
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n = R.shape[0]
    S = np.eye(n) if seed is None else np.asarray(seed, dtype=float)
    basis = symmetric_solution_basis(R)
    if not basis:
        raise Lemma1Error("solution space is empty at the nullspace threshold", basis=basis)

    coeffs = np.array([np.sum(B * S) for B in basis])
    candidates = [coeffs] if np.any(coeffs != 0) else []
    halton = qmc.Halton(d=len(basis), scramble=False).random(max_sweep + 1)[1:]
    candidates.extend(2.0 * halton - 1.0)

    for c in candidates:
        X = sum(ci * B for ci, B in zip(c, basis))
        X = 0.5 * (X + X.T)
        if _is_nondegenerate(X):
            X = X * (np.sqrt(n) / np.linalg.norm(X))
            if np.sum(X * S) < 0:
                X = -X
            return X
    raise Lemma1Error(f"no nondegenerate element found in a {len(basis)}-dimensional solution space",
                      basis=basis)


@dataclass(frozen=True)
class JordanOracleResult:
    X: np.ndarray
    dimension: int


def _solution_dimension(eigs, tol) -> Optional[int]:
    """Symmetric-solution dimension for diagonalizable R from its spectrum."""
    eigs = list(eigs)
    used = [False] * len(eigs)
    dim = 0
    for i, lam in enumerate(eigs):
        if used[i]:
            continue
        group = [j for j in range(len(eigs)) if not used[j] and abs(eigs[j] - lam) <= tol * (1 + abs(lam))]
        for j in group:
            used[j] = True
        m = len(group)
        if abs(lam.imag) <= tol * (1 + abs(lam)):
            dim += m * (m + 1) // 2
        else:
            if m > 1:
                return None
            dim += 1  # each member of a simple conjugate pair contributes one
    return dim


def jordan_oracle(R, tol: float = 1e-8) -> Optional[JordanOracleResult]:
    """Blockwise construction ``X = Q Y Q^T`` from a real Jordan form.

    Handles diagonalizable R (real and complex-pair blocks) and R that is a
    single real Jordan block. Returns ``None`` (declines) for n > 4 or when
    the structure cannot be resolved reliably at ``tol``. Test oracle only.
    """
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n = R.shape[0]
    if n > 4:
        return None
    w, V = np.linalg.eig(R)
    condV = np.linalg.cond(V)
    if np.isfinite(condV) and condV < 1.0 / tol:
        blocks = []
        cols = []
        done = np.zeros(n, dtype=bool)
        for i in range(n):
            if done[i]:
                continue
            if abs(w[i].imag) <= tol * (1 + abs(w[i])):
                cols.append(np.real(V[:, i]) / np.linalg.norm(np.real(V[:, i])))
                blocks.append(1)
                done[i] = True
            else:
                j = next((j for j in range(n) if not done[j] and j != i
                          and abs(w[j] - np.conj(w[i])) <= tol * (1 + abs(w[i]))), None)
                if j is None:
                    return None
                v = V[:, i] if w[i].imag > 0 else V[:, j]
                cols.extend([np.real(v), -np.imag(v)])
                blocks.append(2)
                done[i] = done[j] = True
        Q = np.column_stack(cols)
        Y = np.zeros((n, n))
        k = 0
        for size in blocks:
            Y[k:k + size, k:k + size] = np.fliplr(np.eye(size))
            k += size
        X = Q @ Y @ Q.T
        dim = _solution_dimension(w, tol)
        if dim is None:
            return None
        return JordanOracleResult(X, dim)

    # single real Jordan block: one eigenvalue, R - lam I nilpotent of index n
    lam = float(np.mean(np.real(w)))
    if np.max(np.abs(w - lam)) > 1e-4 * (1 + abs(lam)):
        return None
    N = R - lam * np.eye(n)
    Nn1 = np.linalg.matrix_power(N, n - 1)
    if np.linalg.norm(Nn1) <= tol * (1 + np.linalg.norm(R)) ** (n - 1):
        return None
    top = np.argmax(np.linalg.norm(Nn1, axis=0))
    chain = [np.eye(n)[:, top]]
    for _ in range(n - 1):
        chain.append(N @ chain[-1])
    Q = np.column_stack(chain[::-1])
    Y = np.fliplr(np.eye(n))
    return JordanOracleResult(Q @ Y @ Q.T, n)


def theorem2_match(sys: LTISystem, fb: LinearFeedback) -> ConstantClosedLoop:
    """Constant closed-loop data whose matching law is the given feedback."""
    bad = fb.violations(sys.g, sys.P)
    if bad:
        raise AdmissibilityError("inadmissible feedback: " + "; ".join(bad))
    M = np.linalg.solve(sys.g, sys.V2 - fb.a)
    g_hat = lemma1_solve(M.T, seed=sys.g)
    g_hat = 0.5 * (g_hat + g_hat.T)
    V2_hat = g_hat @ M
    V2_hat = 0.5 * (V2_hat + V2_hat.T)
    C2_hat = g_hat @ np.linalg.solve(sys.g, sys.C2 - fb.b)
    v1_hat = g_hat @ np.linalg.solve(sys.g, sys.v1 - fb.v)
    return ConstantClosedLoop(g_hat, V2_hat, C2_hat, v1_hat)


def random_admissible_instance(n: int, rng: np.random.Generator, n_actuated: Optional[int] = None):
    """Random LTI system with a random admissible linear feedback.

    Forces are restricted to ``range(B)`` for a random n x m matrix ``B``;
    the projection is the g-orthogonal one annihilating ``g^-1 B`` and the
    gains are ``B K`` for random ``K``.
    """
    if n_actuated is None:
        n_actuated = int(rng.integers(1, n + 1))
    A = rng.normal(size=(n, n))
    g = A @ A.T + n * np.eye(n)
    g = 0.5 * (g + g.T)
    W = rng.normal(size=(n, n))
    V2 = 0.5 * (W + W.T)
    v1 = rng.normal(size=n)
    C2 = rng.normal(size=(n, n))
    B = rng.normal(size=(n, n_actuated))
    P = actuation_projection(g, B)
    sys = LTISystem(g=g, V2=V2, v1=v1, C2=C2, P=P)
    fb = LinearFeedback(
        v=B @ rng.normal(size=n_actuated),
        a=B @ rng.normal(size=(n_actuated, n)),
        b=B @ rng.normal(size=(n_actuated, n)),
    )
    return sys, fb


def verify_theorem2(sys: LTISystem, fb: LinearFeedback, closed: ConstantClosedLoop, rng: np.random.Generator,
                    n_states: int = 20) -> dict:
    """Round-trip check of a constructed closed loop at random states.

    Returns the largest matching-residual norm and the largest gap between
    the matching control law and the feedback, both relative to
    ``1 + |feedback|``.
    """
    open_sys = sys.lagrangian_system()
    spec = closed.closed_loop_spec()
    worst_res = 0.0
    worst_gap = 0.0
    for _ in range(n_states):
        q = rng.normal(size=sys.n)
        qd = rng.normal(size=sys.n)
        r = matching_residuals(open_sys, spec, q, qd)
        u = control_law(open_sys, spec, ConfigState(q, qd))
        target = fb(q, qd)
        scale = 1.0 + np.abs(target).max()
        worst_res = max(worst_res, r.max_norm / scale)
        worst_gap = max(worst_gap, float(np.abs(u - target).max()) / scale)
    return {"max_matching_residual": worst_res, "max_round_trip_error": worst_gap}
