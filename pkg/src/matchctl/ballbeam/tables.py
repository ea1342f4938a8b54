"""Cached alpha-integrals of the explicit family.

Five functions of alpha are tabulated on a uniform grid symmetric about 0:

* ``psi``  integrating factor, ``psi(0) = 1``
* ``Psi``  ``int_0^a psi``
* ``J``    ``int_0^a dphi / (mu1' psi^2)``
* ``F``    ``5 int_0^a sin(phi) / (mu1' psi) dphi``
* ``G``    ``5 int_0^a sin(phi) / (mu1' psi) Psi(phi) dphi``

Each table stores node values and exact node derivatives (the integrands)
and is evaluated by cubic Hermite interpolation, so value and slope come
from one C^1 piecewise cubic.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad_vec, solve_ivp

from ..errors import DomainError, TuningError
from .tuning import TuningFunctions

__all__ = ["AlphaTables", "NAMES"]

NAMES = ("psi", "Psi", "J", "F", "G")
QUAD_EPSABS = 1e-10


def _hermite_eval(x, y, d, xq):
    """Vectorized cubic Hermite interpolation on a uniform grid."""
    h = x[1] - x[0]
    u = (np.asarray(xq, dtype=float) - x[0]) / h
    i = np.clip(np.floor(u).astype(int), 0, x.size - 2)
    t = u - i
    t2, t3 = t * t, t * t * t
    h00 = 2 * t3 - 3 * t2 + 1
    h10 = t3 - 2 * t2 + t
    h01 = -2 * t3 + 3 * t2
    h11 = t3 - t2
    return h00 * y[i] + h10 * h * d[i] + h01 * y[i + 1] + h11 * h * d[i + 1]


class AlphaTables:
    """Quadrature tables over ``[-alpha_max, alpha_max]``."""

    def __init__(self, tuning: TuningFunctions, alpha_max: float, n_nodes: int = 2001):
        if n_nodes % 2 == 0:
            n_nodes += 1
        self.tuning = tuning
        self.alpha_max = float(alpha_max)
        self.x = np.linspace(-alpha_max, alpha_max, n_nodes)
        self.x[n_nodes // 2] = 0.0
        self.h = float(self.x[1] - self.x[0])
        self._check_mu1()
        self.values = {}
        self.slopes = {}
        self._build()
        # flat lists for the scalar evaluator
        self._y = [self.values[n].tolist() for n in NAMES]
        self._d = [self.slopes[n].tolist() for n in NAMES]
        self._x0 = float(self.x[0])
        self._imax = n_nodes - 2

    def _check_mu1(self):
        dmu = np.array([self.tuning.dmu1(a) for a in self.x])
        if np.any(dmu == 0) or np.any(np.sign(dmu) != np.sign(dmu[0])):
            raise TuningError("mu1' vanishes on the working alpha interval")

    def _vec(self, f):
        return np.vectorize(f, otypes=[float])

    def _cumulative(self, integrand):
        """Node values of ``int_0^x integrand`` by adaptive quadrature per cell."""
        x, h = self.x, self.h
        left = x[:-1]
        cells = quad_vec(lambda t: h * integrand(left + t * h), 0.0, 1.0,
                         epsabs=QUAD_EPSABS * 1e-3, epsrel=1e-13, norm="max")[0]
        c = np.concatenate([[0.0], np.cumsum(cells)])
        mid = x.size // 2
        return c - c[mid]

    def _build(self):
        tn = self.tuning
        mu1 = self._vec(tn.mu1)
        dmu1 = self._vec(tn.dmu1)
        ratio = lambda a: mu1(a) / dmu1(a)
        x = self.x
        mid = x.size // 2

        if tn.psi_mode == "ode":
            sign = -5.0
            psi = np.empty_like(x)
            psi[mid] = 1.0
            rhs = lambda a, p: sign * tn.mu1(a) / tn.dmu1(a) * p
            for stop, sl in ((x[-1], slice(mid, None)), (x[0], slice(mid, None, -1))):
                sol = solve_ivp(rhs, (0.0, stop), [1.0], t_eval=x[sl],
                                method="DOP853", rtol=1e-13, atol=1e-15)
                if not sol.success:
                    raise TuningError(f"psi integration failed: {sol.message}")
                psi[sl] = sol.y[0]
        else:
            sign = 5.0
            psi = np.exp(sign * self._cumulative(ratio))
        dpsi = sign * ratio(x) * psi
        self.values["psi"], self.slopes["psi"] = psi, dpsi

        psi_i = lambda a: _hermite_eval(x, psi, dpsi, a)
        self.values["Psi"] = self._cumulative(psi_i)
        self.slopes["Psi"] = psi.copy()

        j_int = lambda a: 1.0 / (dmu1(a) * psi_i(a) ** 2)
        self.values["J"] = self._cumulative(j_int)
        self.slopes["J"] = 1.0 / (dmu1(x) * psi ** 2)

        f_int = lambda a: 5.0 * np.sin(a) / (dmu1(a) * psi_i(a))
        self.values["F"] = self._cumulative(f_int)
        self.slopes["F"] = 5.0 * np.sin(x) / (dmu1(x) * psi)

        Psi, dPsi = self.values["Psi"], self.slopes["Psi"]
        g_int = lambda a: f_int(a) * _hermite_eval(x, Psi, dPsi, a)
        self.values["G"] = self._cumulative(g_int)
        self.slopes["G"] = self.slopes["F"] * Psi

    # -- evaluation -------------------------------------------------------
    def __call__(self, name: str, alpha):
        return _hermite_eval(self.x, self.values[name], self.slopes[name], alpha)

    def eval_all(self, alpha: float):
        """Values and alpha-derivatives of all five tables at a scalar alpha."""
        if not -self.alpha_max <= alpha <= self.alpha_max:
            raise DomainError(f"alpha = {alpha} outside the tabulated interval +-{self.alpha_max}")
        h = self.h
        u = (alpha - self._x0) / h
        i = int(math.floor(u))
        if i < 0:
            i = 0
        elif i > self._imax:
            i = self._imax
        t = u - i
        t2 = t * t
        t3 = t2 * t
        h00 = 2 * t3 - 3 * t2 + 1
        h10 = (t3 - 2 * t2 + t) * h
        h01 = -2 * t3 + 3 * t2
        h11 = (t3 - t2) * h
        g00 = (6 * t2 - 6 * t) / h
        g10 = 3 * t2 - 4 * t + 1
        g01 = -g00
        g11 = 3 * t2 - 2 * t
        vals = []
        ders = []
        for y, d in zip(self._y, self._d):
            y0, y1, d0, d1 = y[i], y[i + 1], d[i], d[i + 1]
            vals.append(h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1)
            ders.append(g00 * y0 + g10 * d0 + g01 * y1 + g11 * d1)
        return vals, ders
