import json
import math

import numpy as np
import pytest

from matchctl.geometry import (
    ConfigState,
    DissipationField,
    Domain,
    LagrangianSystem,
    MetricField,
    ProjectionField,
    ScalarField,
)
from matchctl.linear import LinearFeedback
from matchctl.matching import ClosedLoopSpec
from matchctl.sim import (
    CSV_HEADER,
    SampledController,
    SimConfig,
    Trajectory,
    lyapunov_report,
    rk4_step,
    sampled_controller,
    simulate,
)

OMEGA = 2.0


def oscillator(accel=False, damping=0.0, domain=None):
    """``q'' + damping q' + OMEGA^2 q = u`` on the line, fully actuated."""
    fast = (lambda q, v, u: u - damping * v - OMEGA ** 2 * q) if accel else None
    return LagrangianSystem(
        metric=MetricField.constant([[1.0]]),
        potential=ScalarField.quadratic([[OMEGA ** 2]]),
        dissipation=DissipationField.linear([[damping]]),
        projection=ProjectionField.constant([[0.0]]),
        domain=domain,
        accel=fast,
    )


def oscillator_2d():
    return LagrangianSystem(
        metric=MetricField.constant(np.eye(2)),
        potential=ScalarField.quadratic(np.diag([1.0, 4.0])),
        dissipation=DissipationField.zero(2),
        projection=ProjectionField.constant(np.diag([1.0, 0.0])),
    )


def exact_oscillator(t):
    return np.cos(OMEGA * t), -OMEGA * np.sin(OMEGA * t)


def rk4_error(sys, dt, T=2.0):
    state = ConfigState([1.0], [0.0])
    zero = lambda t, q, v: np.zeros(1)
    for k in range(int(round(T / dt))):
        state = rk4_step(sys, zero, state, dt, k * dt)
    q, v = exact_oscillator(T)
    return math.hypot(state.q[0] - q, state.qdot[0] - v)


def test_rk4_fourth_order_generic_path():
    sys = oscillator()
    ratio = rk4_error(sys, 0.02) / rk4_error(sys, 0.01)
    assert ratio == pytest.approx(16.0, rel=0.10)


def test_rk4_fourth_order_fast_path_through_simulate():
    sys = oscillator(accel=True)
    errs = []
    for dt in (0.02, 0.01):
        tr = simulate(sys, None, SimConfig(dt=dt, duration=2.0), ConfigState([1.0], [0.0]),
                      controller=lambda t, q, v: np.zeros(1))
        q, v = exact_oscillator(tr.t[-1])
        errs.append(math.hypot(tr.q[-1, 0] - q, tr.qdot[-1, 0] - v))
    assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.10)


def test_rk4_rejects_nonpositive_step():
    with pytest.raises(ValueError):
        rk4_step(oscillator(), lambda t, q, v: np.zeros(1), ConfigState([1.0], [0.0]), 0.0)


@pytest.mark.parametrize("kwargs", [
    {"dt": 0.0}, {"duration": -1.0}, {"controller_mode": "async"}, {"velocity_estimator": "kalman"},
    {"time_scale": 0.0}, {"divergence_center": (0.0, 0.0)},
])
def test_sim_config_validation(kwargs):
    with pytest.raises(ValueError):
        SimConfig(**kwargs)


def test_sim_config_derived_quantities():
    cfg = SimConfig(dt=0.01, duration=1.0, sample_rate_hz=300.0, time_scale=0.02)
    assert cfg.n_steps == 100
    assert cfg.sample_period == pytest.approx(1.0 / 6.0)
    assert cfg.to_dict()["dt"] == 0.01


def test_energy_conserved_for_open_equals_closed():
    sys = oscillator_2d()
    closed = ClosedLoopSpec.from_open(sys)
    tr = simulate(sys, closed, SimConfig(dt=0.01, duration=5.0), ConfigState([1.0, 0.5], [0.0, -0.3]))
    assert tr.status == "completed"
    assert np.all(tr.u == 0.0)
    assert np.ptp(tr.H) < 1e-7
    assert np.all(tr.H_rate == 0.0)


def test_damped_closed_loop_energy_decreases():
    sys = oscillator_2d()
    # damping only the actuated coordinate keeps the matching conditions exact
    spec = ClosedLoopSpec(sys.metric, sys.potential, DissipationField.linear(np.diag([0.0, 0.5])))
    tr = simulate(sys, spec, SimConfig(dt=1e-3, duration=5.0), ConfigState([1.0, 0.5], [0.0, 0.0]))
    assert np.all(tr.u[:, 0] == 0.0)
    rep = lyapunov_report(tr)
    assert rep.first_violation is None
    assert rep.max_rate_mismatch < 1e-5
    assert tr.H[-1] < tr.H[0]


def test_csv_layout_and_idempotent_output(tmp_path):
    sys = oscillator(accel=True)
    cfg = SimConfig(dt=0.05, duration=1.0)
    runs = []
    for i in range(2):
        tr = simulate(sys, ClosedLoopSpec.from_open(sys), cfg, ConfigState([1.0], [0.0]))
        p = tmp_path / f"run{i}.csv"
        tr.to_csv(p)
        runs.append(p.read_bytes())
    assert runs[0] == runs[1]
    lines = runs[0].decode().splitlines()
    assert lines[0].split(",")[0] == "t"
    assert len(lines) == 1 + cfg.n_steps + 1
    doc = json.loads(tr.to_json())
    assert doc["status"] == "completed" and doc["n_records"] == cfg.n_steps + 1


def test_two_dof_csv_header():
    tr = simulate(oscillator_2d(), None, SimConfig(dt=0.1, duration=0.2), ConfigState([0.0, 0.0], [0.0, 0.0]),
                  controller=lambda t, q, v: np.zeros(2))
    assert tr.to_csv().splitlines()[0] == ",".join(CSV_HEADER)


def test_divergence_box_ends_run():
    sys = oscillator(accel=True)
    cfg = SimConfig(dt=0.01, duration=10.0, divergence_center=(0.0, 0.0), divergence_halfwidth=(0.5, 10.0))
    tr = simulate(sys, None, cfg, ConfigState([0.4], [0.0]), controller=lambda t, q, v: np.array([5.0]))
    assert tr.status == "diverged"
    assert "divergence box" in tr.reason
    assert np.all(np.abs(tr.q[:, 0]) <= 0.5)


def test_domain_exit_ends_run():
    sys = oscillator(accel=True, domain=Domain([-1.0], [1.0]))
    tr = simulate(sys, None, SimConfig(dt=0.01, duration=10.0), ConfigState([0.0], [0.0]),
                  controller=lambda t, q, v: np.array([10.0]))
    assert tr.status == "diverged" and "domain" in tr.reason


def test_controller_failure_is_reported_not_raised():
    def bad(t, q, v):
        if t > 0.1:
            raise ArithmeticError("singular")
        return np.zeros(1)

    tr = simulate(oscillator(accel=True), None, SimConfig(dt=0.01, duration=1.0), ConfigState([1.0], [0.0]),
                  controller=bad)
    assert tr.status == "error" and "singular" in tr.reason
    assert len(tr) > 5


def test_linear_feedback_accepted_as_controller():
    fb = LinearFeedback(v=[0.0], a=[[-5.0]], b=[[-3.0]])
    tr = simulate(oscillator(accel=True), None, SimConfig(dt=0.01, duration=10.0), ConfigState([1.0], [0.0]),
                  controller=fb)
    assert abs(tr.q[-1, 0]) < 1e-3


def test_sampled_controller_holds_between_samples():
    calls = []

    def inner(t, q, v):
        calls.append((t, q.copy(), v.copy()))
        return np.array([-float(q[0])])

    cfg = SimConfig(dt=0.01, duration=1.0, controller_mode="sampled", sample_rate_hz=10.0,
                    velocity_estimator="forward-difference")
    sys = oscillator(accel=True)
    tr = simulate(sys, None, cfg, ConfigState([1.0], [0.0]), controller=inner)
    assert len(calls) == 11
    assert np.all(calls[0][2] == 0.0)
    np.testing.assert_allclose(calls[1][2], (calls[1][1] - calls[0][1]) / 0.1)
    # applied force is piecewise constant with breaks only at sample instants
    jumps = np.nonzero(np.diff(tr.u[:, 0]))[0] + 1
    phase = tr.t[jumps] / 0.1
    np.testing.assert_allclose(phase, np.round(phase), atol=1e-9)


def test_sampled_controller_unit():
    sc = sampled_controller(lambda t, q, v: v, rate_hz=2.0)
    assert sc.period == 0.5
    assert sc.update(0.0, [1.0], [9.0])[2][0] == 0.0
    assert sc.update(0.2, [2.0], [9.0]) is None
    assert sc.update(0.5, [2.0], [9.0])[2][0] == pytest.approx(2.0)
    exact = SampledController(lambda t, q, v: v, 0.5, "exact")
    assert exact.update(0.0, [1.0], [9.0])[2][0] == 9.0
    with pytest.raises(ValueError):
        SampledController(lambda t, q, v: v, 0.0)


def test_lyapunov_report_on_synthetic_records():
    t = np.linspace(0, 1, 11)
    H = np.exp(-t)
    tr = Trajectory(t, np.zeros((11, 1)), np.zeros((11, 1)), np.zeros((11, 1)), np.zeros(11), H, -H,
                    np.zeros(11, bool), "completed")
    rep = lyapunov_report(tr)
    assert rep.first_violation is None
    assert rep.max_rate_mismatch < 1e-3
    H2 = H.copy()
    H2[5] += 0.1
    rep2 = lyapunov_report(Trajectory(t, tr.q, tr.qdot, tr.u, tr.v_in, H2, -H2, tr.saturated, "completed"))
    assert rep2.first_violation == 4
