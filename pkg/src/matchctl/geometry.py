"""Configuration-space fields and Christoffel symbols.

Tensor layout conventions used throughout the package (all dense numpy):

* metric partials ``d[k, i, j] = dg_ij / dq^k``
* first-kind symbols ``c[j, k, i] = [jk, i]``
* second-kind symbols ``G[k, i, j] = Gamma^k_ij``
* projections ``P[i, j] = P^i_j`` (row index up, column index down)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, SingularMatrixError

__all__ = [
    "ConfigState",
    "Domain",
    "MetricField",
    "ScalarField",
    "DissipationField",
    "ProjectionField",
    "LagrangianSystem",
    "fd_partials",
    "default_step",
    "christoffel_first",
    "christoffel_second",
    "lower_second_kind",
    "actuation_projection",
    "projection_defects",
    "is_positive_definite",
]


@dataclass(frozen=True)
class ConfigState:
    """Generalized coordinates and velocities."""

    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        qdot = np.atleast_1d(np.asarray(self.qdot, dtype=float))
        if q.ndim != 1 or q.shape != qdot.shape or q.size < 1:
            raise ValueError(f"q and qdot must be equal-length vectors, got {q.shape} and {qdot.shape}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qdot)

    @property
    def n(self) -> int:
        return self.q.size


@dataclass(frozen=True)
class Domain:
    """Axis-aligned validity box ``lo <= q <= hi``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("domain bounds must have equal shape with lo <= hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def unbounded(cls, n: int) -> "Domain":
        return cls(np.full(n, -np.inf), np.full(n, np.inf))

    def contains(self, q) -> bool:
        q = np.asarray(q, dtype=float)
        return bool(np.all(q >= self.lo) and np.all(q <= self.hi))

    def check(self, q) -> None:
        if not self.contains(q):
            raise DomainError(f"q = {np.asarray(q).tolist()} outside domain "
                              f"[{self.lo.tolist()}, {self.hi.tolist()}]", q=q)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if not np.all(np.isfinite(self.lo) & np.isfinite(self.hi)):
            raise ValueError("cannot sample an unbounded domain")
        return rng.uniform(self.lo, self.hi, size=(size, self.lo.size))


def default_step(q) -> np.ndarray:
    """Per-coordinate finite-difference step ``1e-5 * max(1, |q_k|)``."""
    return 1e-5 * np.maximum(1.0, np.abs(np.asarray(q, dtype=float)))


def fd_partials(func: Callable, q, step=None, domain: Optional[Domain] = None) -> np.ndarray:
    """Central-difference partials of ``func`` with one Richardson refinement.

    Parameters
    ----------
    func : callable
        Maps an n-vector to an array of any shape ``S``.
    q : array_like
        Evaluation point.
    step : float or array_like, optional
        Base step per coordinate; defaults to :func:`default_step`.
    domain : Domain, optional
        If given, the stencil must stay inside it. The step is shrunk once by
        a factor of 10 when it does not; a second failure raises
        :class:`DomainError`.

    Returns
    -------
    ndarray of shape ``(n,) + S`` with ``out[k] = d func / d q^k``.
    """
    q = np.asarray(q, dtype=float)
    n = q.size
    h = default_step(q) if step is None else np.broadcast_to(np.asarray(step, dtype=float), (n,)).copy()
    if np.any(h <= 0):
        raise ValueError("finite-difference step must be positive")
    out = []
    for k in range(n):
        hk = h[k]
        if domain is not None:
            for attempt in range(2):
                lo, hi = q.copy(), q.copy()
                lo[k] -= hk
                hi[k] += hk
                if domain.contains(lo) and domain.contains(hi):
                    break
                if attempt == 1:
                    raise DomainError(f"finite-difference stencil leaves the domain at q = {q.tolist()}", q=q)
                hk = hk / 10.0
        e = np.zeros(n)
        e[k] = hk
        f_pp = np.asarray(func(q + e), dtype=float)
        f_mm = np.asarray(func(q - e), dtype=float)
        f_p = np.asarray(func(q + 0.5 * e), dtype=float)
        f_m = np.asarray(func(q - 0.5 * e), dtype=float)
        coarse = (f_pp - f_mm) / (2.0 * hk)
        fine = (f_p - f_m) / hk
        out.append((4.0 * fine - coarse) / 3.0)
    return np.stack(out)


@dataclass(frozen=True)
class MetricField:
    """Symmetric positive-definite mass matrix ``g_ij(q)``.

    ``partials`` returns ``d[k, i, j] = dg_ij/dq^k``; when omitted the
    finite-difference fallback is used.
    """

    value: Callable[[np.ndarray], np.ndarray]
    dim: int
    partials: Optional[Callable[[np.ndarray], np.ndarray]] = None
    domain: Optional[Domain] = None

    def __call__(self, q) -> np.ndarray:
        return np.asarray(self.value(np.asarray(q, dtype=float)), dtype=float)

    def d(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.partials is not None:
            return np.asarray(self.partials(q), dtype=float)
        return fd_partials(self.value, q, domain=self.domain)

    @classmethod
    def constant(cls, g) -> "MetricField":
        g = np.array(g, dtype=float)
        n = g.shape[0]
        zeros = np.zeros((n, n, n))
        return cls(value=lambda q: g, dim=n, partials=lambda q: zeros)


@dataclass(frozen=True)
class ScalarField:
    """Scalar function with gradient (finite differences when not supplied)."""

    value: Callable[[np.ndarray], float]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    domain: Optional[Domain] = None

    def __call__(self, q) -> float:
        return float(self.value(np.asarray(q, dtype=float)))

    def grad(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.gradient is not None:
            return np.asarray(self.gradient(q), dtype=float)
        return fd_partials(self.value, q, domain=self.domain)

    @classmethod
    def quadratic(cls, K, k=None) -> "ScalarField":
        """``V = 1/2 q^T K q + k.q`` with K symmetric."""
        K = np.array(K, dtype=float)
        k = np.zeros(K.shape[0]) if k is None else np.array(k, dtype=float)
        return cls(value=lambda q: 0.5 * q @ K @ q + k @ q, gradient=lambda q: K @ q + k)


@dataclass(frozen=True)
class DissipationField:
    """Generalized dissipative force ``C_r(q, qdot)``."""

    value: Callable[[np.ndarray, np.ndarray], np.ndarray]
    odd: bool = True

    def __call__(self, q, qdot) -> np.ndarray:
        return np.asarray(self.value(np.asarray(q, dtype=float), np.asarray(qdot, dtype=float)), dtype=float)

    @classmethod
    def linear(cls, D) -> "DissipationField":
        D = np.array(D, dtype=float)
        return cls(value=lambda q, qdot: D @ qdot, odd=True)

    @classmethod
    def zero(cls, n: int) -> "DissipationField":
        z = np.zeros(n)
        return cls(value=lambda q, qdot: z, odd=True)


@dataclass(frozen=True)
class ProjectionField:
    """g-orthogonal projection ``P^i_j(q)`` whose range is the unactuated subspace."""

    value: Callable[[np.ndarray], np.ndarray]
    rank: int
    partials: Optional[Callable[[np.ndarray], np.ndarray]] = None
    domain: Optional[Domain] = None

    def __call__(self, q) -> np.ndarray:
        return np.asarray(self.value(np.asarray(q, dtype=float)), dtype=float)

    def d(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.partials is not None:
            return np.asarray(self.partials(q), dtype=float)
        return fd_partials(self.value, q, domain=self.domain)

    @classmethod
    def constant(cls, P, rank=None) -> "ProjectionField":
        P = np.array(P, dtype=float)
        n = P.shape[0]
        r = int(np.linalg.matrix_rank(P)) if rank is None else int(rank)
        zeros = np.zeros((n, n, n))
        return cls(value=lambda q: P, rank=r, partials=lambda q: zeros)

    @classmethod
    def from_actuation(cls, metric: MetricField, B, domain: Optional[Domain] = None) -> "ProjectionField":
        """Projection annihilating ``g^-1 B``, for forces restricted to ``range(B)``."""
        B = np.atleast_2d(np.array(B, dtype=float))
        if B.shape[0] != metric.dim:
            B = B.T
        rank = metric.dim - np.linalg.matrix_rank(B)
        return cls(value=lambda q: actuation_projection(metric(q), B), rank=int(rank), domain=domain)


@dataclass(frozen=True)
class LagrangianSystem:
    """Open-loop data ``(g, V, C, P)`` on a validity box.

    ``accel`` is an optional fast path returning ``qddot`` for
    ``(q, qdot, u)``; when present it must agree with the generic solve of
    the Euler-Lagrange equations.
    """

    metric: MetricField
    potential: ScalarField
    dissipation: DissipationField
    projection: ProjectionField
    domain: Domain = None
    accel: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.domain is None:
            object.__setattr__(self, "domain", Domain.unbounded(self.metric.dim))
        if self.domain.lo.size != self.metric.dim:
            raise ValueError("domain dimension does not match the metric")

    @property
    def n(self) -> int:
        return self.metric.dim


def _inv(g: np.ndarray, q=None) -> np.ndarray:
    try:
        ginv = np.linalg.inv(g)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"singular metric at q = {q}", q=q) from exc
    if not np.all(np.isfinite(ginv)):
        raise SingularMatrixError(f"singular metric at q = {q}", q=q)
    return ginv


def christoffel_first(metric: MetricField, q, domain: Optional[Domain] = None) -> np.ndarray:
    """First-kind symbols ``c[j, k, i] = [jk, i]``.

    ``[jk, i] = 1/2 (d_k g_ij + d_j g_ki - d_i g_jk)``; exactly symmetric
    in ``(j, k)`` whenever the partials are symmetric in their last two
    indices.
    """
    q = np.asarray(q, dtype=float)
    dom = domain if domain is not None else metric.domain
    if dom is not None:
        dom.check(q)
    d = metric.d(q)
    t1 = np.einsum("kij->jki", d)
    t2 = d
    t3 = np.einsum("ijk->jki", d)
    return 0.5 * (t1 + t2 - t3)


def christoffel_second(metric: MetricField, q, domain: Optional[Domain] = None) -> np.ndarray:
    """Second-kind symbols ``G[k, i, j] = g^{kl} [ij, l]``."""
    q = np.asarray(q, dtype=float)
    c = christoffel_first(metric, q, domain=domain)
    ginv = _inv(metric(q), q=q)
    return np.einsum("kl,ijl->kij", ginv, c)


def lower_second_kind(metric: MetricField, q, gamma: np.ndarray) -> np.ndarray:
    """``g_il Gamma^l_jk`` rearranged to the first-kind layout ``[j, k, i]``."""
    g = metric(q)
    return np.einsum("il,ljk->jki", g, gamma)


def actuation_projection(g: np.ndarray, B: np.ndarray) -> np.ndarray:
    """``P = I - g^-1 B (B^T g^-1 B)^-1 B^T``.

    Idempotent, g-self-adjoint, and ``P g^-1 B = 0``: an applied force
    ``u = B w`` satisfies the actuation constraint.
    """
    n = g.shape[0]
    gi_B = np.linalg.solve(g, B)
    S = B.T @ gi_B
    return np.eye(n) - gi_B @ np.linalg.solve(S, B.T)


def projection_defects(P: np.ndarray, g: np.ndarray) -> dict:
    """Relative idempotency and self-adjointness defects plus numerical rank."""
    ginv = np.linalg.inv(g)
    nP = max(np.linalg.norm(P), 1.0)
    return {
        "idempotency": float(np.linalg.norm(P @ P - P) / nP),
        "self_adjoint": float(np.linalg.norm(P @ ginv - ginv @ P.T) / np.linalg.norm(ginv)),
        "rank": int(np.linalg.matrix_rank(P, tol=1e-9 * nP)),
    }


def is_positive_definite(g: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        return False
    return True
