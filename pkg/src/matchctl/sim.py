"""Fixed-step simulation of controlled Lagrangian systems.

The integrator is classical RK4 on ``(q, qdot)``. A controller produces a
desired force; an actuator turns it into a physical signal (for the ball
and beam, a clamped servo voltage) and back into the force actually
applied. In sampled mode the signal is computed at the sample instants
from latched positions and held in between.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, KinematicBranchError, MatchCtlError
from .geometry import ConfigState, LagrangianSystem, _inv, christoffel_first
from .linear import LinearFeedback
from .matching import ClosedLoopSpec, closed_loop_energy, control_law

__all__ = [
    "SimConfig",
    "Trajectory",
    "LyapunovReport",
    "IdentityActuator",
    "MatchingController",
    "LinearController",
    "SampledController",
    "sampled_controller",
    "dynamics_rhs",
    "rk4_step",
    "simulate",
    "lyapunov_report",
    "CSV_HEADER",
]

CSV_HEADER = ("t", "s", "theta", "s_dot", "theta_dot", "u", "v_in", "H_hat", "H_hat_rate", "saturated")
CONTROLLER_MODES = ("continuous", "sampled")
ESTIMATORS = ("exact", "forward-difference")


@dataclass(frozen=True)
class SimConfig:
    """Integration and controller-emulation settings.

    Parameters
    ----------
    dt : float
        Integrator step in model time units.
    duration : float
        Total simulated time in model time units.
    controller_mode : {"continuous", "sampled"}
    sample_rate_hz : float
        Sampling rate in physical units; the sample period in model units
        is ``1 / (sample_rate_hz * time_scale)``.
    time_scale : float
        Seconds per model time unit.
    velocity_estimator : {"exact", "forward-difference"}
    v_sat : float
        Actuator signal limit, passed to the actuator factory by callers.
    divergence_center, divergence_halfwidth : sequence, optional
        State box ``|x - center| <= halfwidth`` over ``x = (q, qdot)``;
        leaving it ends the run as diverged.
    """

    dt: float = 1e-3
    duration: float = 10.0
    controller_mode: str = "continuous"
    sample_rate_hz: float = 300.0
    time_scale: float = 1.0
    velocity_estimator: str = "exact"
    v_sat: float = 5.0
    divergence_center: Optional[tuple] = None
    divergence_halfwidth: Optional[tuple] = None

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive")
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise ValueError("duration must be positive")
        if self.controller_mode not in CONTROLLER_MODES:
            raise ValueError(f"controller_mode must be one of {CONTROLLER_MODES}")
        if self.velocity_estimator not in ESTIMATORS:
            raise ValueError(f"velocity_estimator must be one of {ESTIMATORS}")
        if self.controller_mode == "sampled" and not self.sample_rate_hz > 0:
            raise ValueError("sampled mode requires sample_rate_hz > 0")
        if not self.time_scale > 0:
            raise ValueError("time_scale must be positive")
        if (self.divergence_center is None) != (self.divergence_halfwidth is None):
            raise ValueError("divergence box needs both center and halfwidth")
        for name in ("divergence_center", "divergence_halfwidth"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, tuple(float(x) for x in v))

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def sample_period(self) -> float:
        return 1.0 / (self.sample_rate_hz * self.time_scale)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Trajectory:
    """Recorded run. Arrays are indexed by record; ``u`` is the applied force."""

    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    u: np.ndarray
    v_in: np.ndarray
    H: np.ndarray
    H_rate: np.ndarray
    saturated: np.ndarray
    status: str
    reason: str = ""
    config: Optional[SimConfig] = field(default=None, compare=False)

    def __len__(self) -> int:
        return self.t.size

    @property
    def final_state(self) -> ConfigState:
        return ConfigState(self.q[-1], self.qdot[-1])

    def to_csv(self, path=None) -> str:
        """CSV text (written to ``path`` when given), one row per record."""
        n = self.q.shape[1]
        if n == 2:
            header = CSV_HEADER
        else:
            header = (("t",) + tuple(f"q{i}" for i in range(n)) + tuple(f"q{i}_dot" for i in range(n))
                      + ("u", "v_in", "H_hat", "H_hat_rate", "saturated"))
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(header)
        for k in range(self.t.size):
            row = [self.t[k], *self.q[k], *self.qdot[k], self.u[k, -1], self.v_in[k], self.H[k], self.H_rate[k]]
            wr.writerow([repr(float(x)) for x in row] + [int(self.saturated[k])])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def summary(self) -> dict:
        return {
            "status": self.status,
            "reason": self.reason,
            "n_records": int(self.t.size),
            "t_final": float(self.t[-1]),
            "q_final": self.q[-1].tolist(),
            "qdot_final": self.qdot[-1].tolist(),
            "saturated_fraction": float(np.mean(self.saturated)),
        }

    def to_json(self, path=None) -> str:
        doc = {"config": None if self.config is None else self.config.to_dict(), **self.summary()}
        text = json.dumps(doc, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


# -- actuators and controllers ---------------------------------------------
class IdentityActuator:
    """Signal equals force; never saturates."""

    def signal(self, u, q, qdot):
        return np.asarray(u, dtype=float), False

    def force(self, signal, q, qdot):
        return signal

    def voltage(self, signal) -> float:
        return float("nan")


class MatchingController:
    """Matching control law; uses the closed loop's ``control`` fast path when present."""

    def __init__(self, open: LagrangianSystem, closed: ClosedLoopSpec):
        self.open = open
        self.closed = closed
        fast = getattr(closed, "control", None)
        self._fast = fast if callable(fast) else None

    def __call__(self, t, q, qdot):
        if self._fast is not None:
            return self._fast(q, qdot)
        return control_law(self.open, self.closed, ConfigState(q, qdot))


class LinearController:
    def __init__(self, fb: LinearFeedback):
        self.fb = fb

    def __call__(self, t, q, qdot):
        return self.fb(q, qdot)


class SampledController:
    """Zero-order-hold wrapper around a continuous controller.

    :meth:`update` is called at integrator step starts; a new sample is
    taken once the sample instant is reached. With the forward-difference
    estimator the velocity is ``(q_k - q_{k-1}) / Ts``, and zero at the
    first sample.
    """

    def __init__(self, inner: Callable, period: float, estimator: str = "forward-difference"):
        if not period > 0:
            raise ValueError("sample period must be positive")
        if estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        self.inner = inner
        self.period = float(period)
        self.estimator = estimator
        self.reset()

    def reset(self):
        self._k = 0
        self._q_prev = None
        self.held = None

    def due(self, t: float) -> bool:
        return t >= self._k * self.period - 1e-9 * self.period

    def update(self, t, q, qdot):
        """Latch a new sample if due; returns ``(u, q_latched, qdot_estimate)`` or ``None``."""
        if not self.due(t):
            return None
        q = np.array(q, dtype=float)
        if self.estimator == "exact":
            v = np.array(qdot, dtype=float)
        elif self._q_prev is None:
            v = np.zeros_like(q)
        else:
            v = (q - self._q_prev) / self.period
        self._q_prev = q
        self._k += 1
        u = self.inner(t, q, v)
        return u, q, v


def sampled_controller(inner: Callable, rate_hz: float, estimator: str = "forward-difference",
                       time_scale: float = 1.0) -> SampledController:
    if not rate_hz > 0:
        raise ValueError("rate must be positive")
    return SampledController(inner, 1.0 / (rate_hz * time_scale), estimator)


# -- dynamics ----------------------------------------------------------------
def dynamics_rhs(sys: LagrangianSystem, state: ConfigState, u) -> tuple:
    """``(qdot, qddot)`` with ``g qddot = u - [jk, .] qdot qdot - C - dV``."""
    q, qdot = state.q, state.qdot
    u = np.asarray(u, dtype=float)
    if sys.accel is not None:
        return qdot, np.asarray(sys.accel(q, qdot, u), dtype=float)
    g = sys.metric(q)
    ginv = _inv(g, q)
    c = christoffel_first(sys.metric, q)
    quad = np.einsum("jki,j,k->i", c, qdot, qdot)
    rhs = u - quad - sys.dissipation(q, qdot) - sys.potential.grad(q)
    return qdot, ginv @ rhs


def rk4_step(sys: LagrangianSystem, force: Callable, state: ConfigState, dt: float, t: float = 0.0) -> ConfigState:
    """One classical RK4 step; ``force(t, q, qdot)`` is evaluated at every stage."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    q0, v0 = state.q, state.qdot

    def f(tt, q, v):
        return dynamics_rhs(sys, ConfigState(q, v), force(tt, q, v))

    k1q, k1v = f(t, q0, v0)
    k2q, k2v = f(t + 0.5 * dt, q0 + 0.5 * dt * k1q, v0 + 0.5 * dt * k1v)
    k3q, k3v = f(t + 0.5 * dt, q0 + 0.5 * dt * k2q, v0 + 0.5 * dt * k2v)
    k4q, k4v = f(t + dt, q0 + dt * k3q, v0 + dt * k3v)
    q1 = q0 + dt / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
    v1 = v0 + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    return ConfigState(q1, v1)


class _State:
    # light stand-in for ConfigState inside the integration loop
    __slots__ = ("q", "qdot")

    def __init__(self, q, qdot):
        self.q = q
        self.qdot = qdot


def _fast_step(sys: LagrangianSystem):
    """RK4 step on plain arrays through the system's ``accel`` fast path."""
    accel = sys.accel

    def step(force, state, dt, t):
        q0, v0 = state.q, state.qdot
        h2 = 0.5 * dt
        a1 = np.asarray(accel(q0, v0, force(t, q0, v0)))
        q2, v2 = q0 + h2 * v0, v0 + h2 * a1
        a2 = np.asarray(accel(q2, v2, force(t + h2, q2, v2)))
        q3, v3 = q0 + h2 * v2, v0 + h2 * a2
        a3 = np.asarray(accel(q3, v3, force(t + h2, q3, v3)))
        q4, v4 = q0 + dt * v3, v0 + dt * a3
        a4 = np.asarray(accel(q4, v4, force(t + dt, q4, v4)))
        q1 = q0 + dt / 6.0 * (v0 + 2.0 * v2 + 2.0 * v3 + v4)
        v1 = v0 + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        return _State(q1, v1)

    return step


def _energy_fn(closed):
    if closed is None:
        return lambda q, v: (float("nan"), float("nan"))
    fast = getattr(closed, "energy", None)
    if callable(fast):
        return fast
    return lambda q, v: closed_loop_energy(closed, ConfigState(q, v))


def simulate(sys: LagrangianSystem, closed: Optional[ClosedLoopSpec], config: SimConfig, initial: ConfigState,
             controller: Callable = None, actuator=None) -> Trajectory:
    """Integrate the controlled system.

    Parameters
    ----------
    sys : LagrangianSystem
        Plant.
    closed : ClosedLoopSpec or None
        Target closed loop. Supplies the default matching controller and
        the recorded energy ``H_hat``.
    config : SimConfig
    initial : ConfigState
    controller : callable, optional
        ``u = controller(t, q, qdot)``; a :class:`LinearFeedback` is also
        accepted. Defaults to the matching law for ``closed``.
    actuator : object, optional
        Provides ``signal(u, q, qdot) -> (signal, saturated)``,
        ``force(signal, q, qdot) -> u`` and ``voltage(signal)``.

    Returns
    -------
    Trajectory
        Failures end the run with status ``"diverged"`` or ``"error"``;
        nothing is raised once integration has started.
    """
    if controller is None:
        if closed is None:
            raise ValueError("need a closed-loop spec or an explicit controller")
        controller = MatchingController(sys, closed)
    elif isinstance(controller, LinearFeedback):
        controller = LinearController(controller)
    act = IdentityActuator() if actuator is None else actuator
    energy = _energy_fn(closed)
    cfg = config
    n = sys.n
    sys.domain.check(initial.q)

    box = None
    if cfg.divergence_center is not None:
        box = (np.array(cfg.divergence_center), np.array(cfg.divergence_halfwidth))
        if box[0].size != 2 * n:
            raise ValueError("divergence box must have 2n entries")

    sampled = None
    if cfg.controller_mode == "sampled":
        sampled = SampledController(controller, cfg.sample_period, cfg.velocity_estimator)

    N = cfg.n_steps
    dt = cfg.dt
    T = np.empty(N + 1)
    Q = np.empty((N + 1, n))
    V = np.empty((N + 1, n))
    U = np.empty((N + 1, n))
    VIN = np.empty(N + 1)
    H = np.empty(N + 1)
    HR = np.empty(N + 1)
    SAT = np.zeros(N + 1, dtype=bool)

    step = _fast_step(sys) if sys.accel is not None else (lambda f, st, h, tt: rk4_step(sys, f, st, h, tt))
    state = _State(np.array(initial.q, dtype=float), np.array(initial.qdot, dtype=float))
    status, reason = "completed", ""
    held = None
    k = 0

    def stage_force(tt, q, v):
        if sampled is not None:
            return act.force(held[0], q, v)
        sig, _ = act.signal(controller(tt, q, v), q, v)
        return act.force(sig, q, v)

    def outside(q, v):
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
            return "non-finite state"
        if not sys.domain.contains(q):
            return "left the model domain"
        if box is not None and np.any(np.abs(np.concatenate([q, v]) - box[0]) > box[1]):
            return "left the divergence box"
        return ""

    while True:
        t = k * dt
        q, v = state.q, state.qdot
        try:
            if sampled is not None:
                latched = sampled.update(t, q, v)
                if latched is not None:
                    u_cmd, ql, vl = latched
                    held = act.signal(u_cmd, ql, vl)
                sig, sat = held
            else:
                sig, sat = act.signal(controller(t, q, v), q, v)
            T[k], Q[k], V[k] = t, q, v
            U[k] = act.force(sig, q, v)
            VIN[k] = act.voltage(sig)
            SAT[k] = sat
            H[k], HR[k] = energy(q, v)
        except (DomainError, KinematicBranchError) as exc:
            status, reason = "diverged", str(exc)
            break
        except (MatchCtlError, ArithmeticError, ValueError) as exc:
            status, reason = "error", str(exc)
            break
        if k == N:
            k += 1
            break
        try:
            state = step(stage_force, state, dt, t)
        except (DomainError, KinematicBranchError) as exc:
            status, reason = "diverged", str(exc)
            k += 1
            break
        except (MatchCtlError, ArithmeticError, ValueError) as exc:
            status, reason = "error", str(exc)
            k += 1
            break
        k += 1
        why = outside(state.q, state.qdot)
        if why:
            status, reason = "diverged", f"{why} at t = {k * dt:.6g}"
            break

    m = k
    return Trajectory(T[:m].copy(), Q[:m].copy(), V[:m].copy(), U[:m].copy(), VIN[:m].copy(), H[:m].copy(),
                      HR[:m].copy(), SAT[:m].copy(), status, reason, cfg)


@dataclass(frozen=True)
class LyapunovReport:
    max_positive_increment: float
    max_H: float
    rate_correlation: float
    max_rate_mismatch: float
    first_violation: Optional[int]

    def to_dict(self) -> dict:
        return asdict(self)


def lyapunov_report(traj: Trajectory, rel_tol: float = 1e-6) -> LyapunovReport:
    """Monotonicity and energy-rate diagnostics of recorded ``H_hat``.

    ``max_rate_mismatch`` compares the difference quotient of ``H_hat``
    with the trapezoidal mean of the recorded rates over each step; a
    violation is a step whose increment exceeds ``rel_tol * max |H_hat|``.
    """
    H, R, t = traj.H, traj.H_rate, traj.t
    if H.size < 2:
        return LyapunovReport(0.0, float(np.max(np.abs(H))) if H.size else 0.0, float("nan"), 0.0, None)
    dH = np.diff(H)
    dHdt = dH / np.diff(t)
    mid = 0.5 * (R[1:] + R[:-1])
    scale = float(np.max(np.abs(H)))
    bad = np.nonzero(dH > rel_tol * scale)[0]
    if np.std(dHdt) > 0 and np.std(mid) > 0:
        corr = float(np.corrcoef(dHdt, mid)[0, 1])
    else:
        corr = float("nan")
    return LyapunovReport(
        max_positive_increment=float(max(0.0, dH.max())),
        max_H=scale,
        rate_correlation=corr,
        max_rate_mismatch=float(np.max(np.abs(dHdt - mid))),
        first_violation=int(bad[0]) if bad.size else None,
    )
