"""Beam angle alpha as an implicit function of the servo angle theta.

Rescaled closure constraint of the four-bar linkage::

    F(alpha, theta) = (1 - cos a - a2 (1 - cos t))**2 + (sin a + a1 - a2 sin t)**2 - a1**2 = 0

The branch through ``(0, 0)`` is followed by Newton's method. A branch
table built once by continuation seeds every query, so results depend on
``theta`` only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from ..errors import KinematicBranchError

__all__ = ["Linkage", "KinematicsContext", "BRANCH_JUMP", "MAX_NEWTON"]

MAX_NEWTON = 50
BRANCH_JUMP = 0.3


@dataclass
class KinematicsContext:
    """Continuation state for one caller: last solved ``(theta, alpha, alpha')``."""

    theta: float = 0.0
    alpha: float = 0.0
    dalpha: float = None


class Linkage:
    """Kinematics on the branch ``alpha(0) = 0``."""

    def __init__(self, a1: float, a2: float, theta_range=(-0.9, 0.9), n_table: int = 721):
        self.a1 = float(a1)
        self.a2 = float(a2)
        self.theta_range = (float(theta_range[0]), float(theta_range[1]))
        if not self.theta_range[0] < 0 < self.theta_range[1]:
            raise ValueError("working theta interval must contain 0")
        self._table = self._build_branch_table(n_table)

    # -- constraint and its derivatives --------------------------------
    def residual(self, alpha: float, theta: float) -> float:
        a1, a2 = self.a1, self.a2
        A = 1.0 - math.cos(alpha) - a2 * (1.0 - math.cos(theta))
        B = math.sin(alpha) + a1 - a2 * math.sin(theta)
        return A * A + B * B - a1 * a1

    def _partials(self, alpha: float, theta: float):
        a2 = self.a2
        ca, sa = math.cos(alpha), math.sin(alpha)
        ct, st = math.cos(theta), math.sin(theta)
        A = 1.0 - ca - a2 * (1.0 - ct)
        B = sa + self.a1 - a2 * st
        Fa = 2.0 * (A * sa + B * ca)
        Ft = -2.0 * a2 * (A * st + B * ct)
        Faa = 2.0 * (1.0 + A * ca - B * sa)
        Ftt = 2.0 * a2 * (a2 - A * ct + B * st)
        Fat = -2.0 * a2 * math.cos(alpha - theta)
        return Fa, Ft, Faa, Ftt, Fat

    def _newton(self, theta: float, seed: float) -> float:
        a1, a2 = self.a1, self.a2
        ct, st = math.cos(theta), math.sin(theta)
        c0 = a2 * (1.0 - ct)
        b0 = a1 - a2 * st
        alpha = seed
        F = math.inf
        for _ in range(MAX_NEWTON):
            ca, sa = math.cos(alpha), math.sin(alpha)
            A = 1.0 - ca - c0
            B = sa + b0
            F = A * A + B * B - a1 * a1
            Fa = 2.0 * (A * sa + B * ca)
            if Fa == 0.0 or not math.isfinite(F):
                break
            step = F / Fa
            alpha -= step
            if abs(step) <= 1e-15 * (1.0 + abs(alpha)):
                break
        if not (math.isfinite(alpha) and abs(self.residual(alpha, theta)) <= 1e-12):
            raise KinematicBranchError(f"Newton iteration for alpha did not converge at theta = {theta}")
        return alpha

    # -- branch table -----------------------------------------------------
    def _build_branch_table(self, n: int):
        lo, hi = self.theta_range
        thetas = np.linspace(lo, hi, n)
        i0 = int(np.argmin(np.abs(thetas)))
        thetas[i0] = 0.0
        alphas = np.zeros(n)
        ctx_up = KinematicsContext()
        for i in range(i0 + 1, n):
            alphas[i] = self.alpha(thetas[i], ctx_up, _check_range=False)
        ctx_dn = KinematicsContext()
        for i in range(i0 - 1, -1, -1):
            alphas[i] = self.alpha(thetas[i], ctx_dn, _check_range=False)
        slopes = np.array([self.derivatives(t, a)[0] for t, a in zip(thetas, alphas)])
        self._tab = (float(thetas[0]), float(thetas[1] - thetas[0]), alphas.tolist(), slopes.tolist(), n - 2)
        return CubicHermiteSpline(thetas, alphas, slopes)

    def _seed(self, theta: float) -> float:
        t0, h, y, d, imax = self._tab
        u = (theta - t0) / h
        i = min(max(int(u), 0), imax)
        t = u - i
        t2 = t * t
        return ((2 * t2 * t - 3 * t2 + 1) * y[i] + (t2 * t - 2 * t2 + t) * h * d[i]
                + (3 * t2 - 2 * t2 * t) * y[i + 1] + (t2 * t - t2) * h * d[i + 1])

    # -- public queries ---------------------------------------------------
    def in_range(self, theta: float) -> bool:
        return self.theta_range[0] <= theta <= self.theta_range[1]

    def alpha(self, theta: float, context: KinematicsContext = None, _check_range: bool = True) -> float:
        """Solve the constraint for alpha on the branch through the origin.

        With a ``context`` the Newton seed is the first-order continuation
        of the previous query and jumps larger than ``BRANCH_JUMP`` raise;
        without one the seed comes from the branch table.
        """
        theta = float(theta)
        if _check_range and not self.in_range(theta):
            raise KinematicBranchError(f"theta = {theta} outside the working interval {self.theta_range}")
        if theta == 0.0:
            alpha = 0.0
        elif context is None:
            alpha = self._newton(theta, self._seed(theta))
        else:
            slope = self.a2 if context.dalpha is None else context.dalpha
            seed = context.alpha + slope * (theta - context.theta)
            alpha = self._newton(theta, seed)
            if abs(alpha - context.alpha) > BRANCH_JUMP:
                raise KinematicBranchError(
                    f"branch jump at theta = {theta}: alpha moved {alpha - context.alpha:+.3f}")
        if context is not None:
            context.theta = theta
            context.alpha = alpha
            context.dalpha = self.derivatives(theta, alpha)[0]
        return alpha

    def derivatives(self, theta: float, alpha: float = None):
        """``(alpha', alpha'')`` by implicit differentiation of the constraint."""
        if alpha is None:
            alpha = self.alpha(theta)
        Fa, Ft, Faa, Ftt, Fat = self._partials(alpha, theta)
        if Fa == 0.0:
            raise KinematicBranchError(f"fold point of the linkage at theta = {theta}")
        d1 = self.a2 if theta == 0.0 and alpha == 0.0 else -Ft / Fa
        d2 = -(Ftt + 2.0 * Fat * d1 + Faa * d1 * d1) / Fa
        return d1, d2

    def alpha_range(self):
        lo, hi = self.theta_range
        return self.alpha(lo), self.alpha(hi)
