import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from matchctl.ballbeam import (
    PRINTED_DIMENSIONLESS,
    BallBeamModel,
    KinematicsContext,
    Linkage,
    PhysicalParams,
    ServoActuator,
    alpha_derivatives,
    alpha_of_theta,
    default_tuning,
    params_report,
    rescale_params,
    si_torque_to_voltage,
    torque_to_voltage,
    tuning_from_config,
    unit_scales,
    voltage_to_torque,
)
from matchctl.errors import ConfigError, KinematicBranchError
from matchctl.geometry import ConfigState, is_positive_definite
from matchctl.matching import control_law
from matchctl.sim import SimConfig, simulate

P = PRINTED_DIMENSIONLESS


def bisection_alpha(theta, a1=P.a1, a2=P.a2):
    F = lambda a: ((1 - math.cos(a) - a2 * (1 - math.cos(theta))) ** 2
                   + (math.sin(a) + a1 - a2 * math.sin(theta)) ** 2 - a1 ** 2)
    return brentq(F, -0.3, 0.3, xtol=1e-15, rtol=1e-15) if theta != 0 else 0.0


# -- kinematics ---------------------------------------------------------------
def test_alpha_at_origin_is_zero(model):
    assert alpha_of_theta(model, 0.0) == 0.0
    d1, _ = alpha_derivatives(model, 0.0)
    assert d1 == P.a2


@pytest.mark.parametrize("theta", [-0.9, -0.6, -0.1, 0.1, 0.35, 0.6, 0.9])
def test_alpha_matches_bisection_oracle(model, theta):
    a = alpha_of_theta(model, theta)
    assert a == pytest.approx(bisection_alpha(theta), abs=1e-12)
    assert abs(model.linkage.residual(a, theta)) <= 1e-12


def test_alpha_first_order_near_origin(model):
    assert abs(alpha_of_theta(model, 0.1) - 0.00588) < 1e-4
    assert alpha_of_theta(model, -0.1) < 0.0 < alpha_of_theta(model, 0.1)


def test_alpha_derivatives_match_finite_differences(model):
    h = 1e-5
    worst = 0.0
    for th in np.linspace(-0.85, 0.85, 50):
        d1, d2 = alpha_derivatives(model, th)
        fd1 = (bisection_alpha(th + h) - bisection_alpha(th - h)) / (2 * h)
        worst = max(worst, abs(d1 - fd1))
    assert worst < 1e-8
    d1, d2 = alpha_derivatives(model, 0.0)
    fd2 = (alpha_of_theta(model, 1e-3) - 2 * 0.0 + alpha_of_theta(model, -1e-3)) / 1e-6
    assert d2 == pytest.approx(fd2, abs=1e-6)


def test_branch_continuity_on_fine_grid(model):
    th = np.linspace(-0.9, 0.9, 181)
    a = np.array([alpha_of_theta(model, t) for t in th])
    assert np.abs(np.diff(a)).max() < 0.05


def test_continuation_context_follows_branch_and_detects_jumps():
    lk = Linkage(P.a1, P.a2)
    ctx = KinematicsContext()
    for th in np.linspace(0.0, 0.8, 81):
        assert lk.alpha(th, ctx) == pytest.approx(bisection_alpha(th), abs=1e-12)
    ctx2 = KinematicsContext(theta=0.0, alpha=2.5, dalpha=0.0)
    with pytest.raises(KinematicBranchError):
        lk.alpha(0.01, ctx2)


def test_alpha_outside_working_interval_raises(model):
    with pytest.raises(KinematicBranchError):
        alpha_of_theta(model, 1.2)


# -- parameters ------------------------------------------------------------------
def test_rescale_table_values():
    d = rescale_params(PhysicalParams())
    assert d.a3 == pytest.approx(236.294, rel=1e-5)
    assert d.a4 == pytest.approx(0.002 / 4.25e-6, rel=1e-12)
    assert d.a1 == pytest.approx(0.11 / 0.43, rel=1e-12)
    assert d.s0_star == pytest.approx(22.0)
    assert d.a7 > 0 and math.isfinite(d.a7)


def test_unit_scales():
    p = PhysicalParams()
    sc = unit_scales(p)
    assert sc.L == 0.01
    assert sc.tau == pytest.approx(math.sqrt(0.02 / 49.0))
    assert sc.E0 == pytest.approx(0.07 * 9.8 * 0.01)
    assert sc.E0 == pytest.approx(p.with_solid_sphere_inertia().I_B / sc.tau ** 2, rel=1e-12)


def test_params_report_flags_a2_and_not_a3():
    rep = params_report(PhysicalParams())
    rows = {r["name"]: r for r in rep["rows"]}
    assert rows["a3"]["rel_discrepancy"] < 1e-4 and not rows["a3"]["flagged"]
    assert rows["a2"]["flagged"]
    assert rows["a2"]["derived"] == pytest.approx(0.0698, abs=1e-4)
    assert rep["ball_inertia"]["rel_defect"] > 0.5


def test_parameter_validation():
    with pytest.raises(ValueError):
        PhysicalParams(m_B=-1.0)
    with pytest.raises(ValueError):
        PhysicalParams(s0=0.5)
    with pytest.raises(ValueError):
        type(P)(**{**P.to_dict(), "a1": 1.5})


# -- tuning ------------------------------------------------------------------
def test_default_tuning_values():
    t = default_tuning()
    assert t.mu1(0.0) == pytest.approx(1.0849)
    assert t.w(10.0) == pytest.approx(0.23)
    assert t.h(3.0) == pytest.approx(1.1031)


@settings(max_examples=50, deadline=None)
@given(*(st.floats(-3, 3) for _ in range(4)))
def test_c2_hat_is_odd_in_velocities(sd, td, g12, mu):
    c2 = default_tuning().c2_hat
    a = c2(10.0, 0.1, sd, td, g12, mu, 1.1)
    b = c2(10.0, 0.1, -sd, -td, g12, mu, 1.1)
    assert a == pytest.approx(-b, abs=1e-12)


def test_tuning_config_errors_name_the_key():
    with pytest.raises(ConfigError, match="tuning.h.kind"):
        tuning_from_config({"h": {"kind": "spline"}})
    with pytest.raises(ConfigError, match="tuning.bogus"):
        tuning_from_config({"bogus": 1})


def test_psi_candidate_mode_fails_matching_gate():
    from matchctl.ballbeam import closed_loop_family, open_loop_system
    from matchctl.matching import matching_residuals

    m = BallBeamModel(tuning=default_tuning("candidate"))
    r = matching_residuals(open_loop_system(m), closed_loop_family(m), [20.0, 0.3], [0.3, -0.2])
    assert r.geodesic_norm > 1e-3


# -- open loop -----------------------------------------------------------------
def test_open_loop_metric_and_potential_at_equilibrium(plant):
    g = plant.metric([22.0, 0.0])
    assert g[0, 0] == 1.0
    assert g[0, 1] == P.a2
    assert g[1, 1] == pytest.approx(P.a4 + (P.a3 + 2.5 * 484) * P.a2 ** 2, rel=1e-14)
    assert plant.potential([22.0, 0.0]) == 0.0


def test_open_loop_metric_positive_definite_on_domain(plant):
    for s in np.linspace(2, 41, 15):
        for th in np.linspace(-0.6, 0.6, 15):
            assert is_positive_definite(plant.metric([s, th]))


def test_open_loop_projection_annihilates_actuation(plant):
    q = [17.0, 0.2]
    Pq = plant.projection(q)
    np.testing.assert_allclose(Pq @ np.linalg.solve(plant.metric(q), [0.0, 1.0]), 0.0, atol=1e-14)


def test_fast_accel_matches_generic(plant):
    from matchctl.sim import dynamics_rhs

    state = ConfigState([14.0, -0.3], [0.5, 1.2])
    u = np.array([0.0, 3.0])
    fast = plant.accel(state.q, state.qdot, u)
    slow = dynamics_rhs(type(plant)(plant.metric, plant.potential, plant.dissipation, plant.projection,
                                    plant.domain), state, u)[1]
    np.testing.assert_allclose(fast, slow, rtol=1e-9, atol=1e-12)


# -- closed-loop family -----------------------------------------------------------
def test_family_at_alpha_zero_reduces_to_h(model):
    t = model.family_terms(22.0, 0.0)
    assert t["gh"][0] == pytest.approx(1.1031, rel=1e-12)
    assert t["y"] == pytest.approx(0.0, abs=1e-12)
    assert model.family_terms(30.0, 0.0)["y"] == pytest.approx(8.0, rel=1e-12)


def test_family_metric_symmetric_invertible_constant_det_sign(family):
    signs = set()
    for s in np.linspace(5, 38, 12):
        for th in np.linspace(-0.4, 0.4, 12):
            G = family.metric_hat([s, th])
            assert np.array_equal(G, G.T)
            signs.add(np.sign(np.linalg.det(G)))
    assert len(signs) == 1 and 0 not in signs


def test_family_partials_agree_with_finite_differences(family):
    from matchctl.geometry import fd_partials

    for q in ([8.0, 0.2], [25.0, -0.35]):
        np.testing.assert_allclose(family.metric_hat.d(q), fd_partials(family.metric_hat, q), atol=1e-8)
        np.testing.assert_allclose(family.potential_hat.grad(q),
                                   fd_partials(lambda x: np.array([family.potential_hat(x)]), q)[:, 0],
                                   atol=1e-9)


def test_energy_has_strict_minimum_at_equilibrium(family, rng):
    H0 = family.energy([22.0, 0.0], [0.0, 0.0])[0]
    for r in (0.05, 0.2, 0.5):
        x = rng.normal(size=(200, 4))
        x = r * x / np.linalg.norm(x, axis=1, keepdims=True)
        for v in x:
            assert family.energy([22.0 + v[0], v[1]], v[2:])[0] - H0 > 0.0


def test_dissipation_identity(model, rng):
    for _ in range(300):
        s, th = rng.uniform(5, 38), rng.uniform(-0.4, 0.4)
        sd, td = rng.normal(size=2)
        t = model.family_terms(s, th)
        c1, c2 = model.dissipation_hat(s, th, sd, td, t)
        K = 1 + sd * sd + 10 * td * td
        expected = -t["gh"][1] * K * (t["sigma"] * td - t["mu"] * sd) ** 2 / t["sigma"]
        assert c1 * sd + c2 * td == pytest.approx(expected, rel=1e-9, abs=1e-12)


def test_dissipation_nonnegative_where_coupling_negative(model, rng):
    n = 0
    while n < 1000:
        s, th = rng.uniform(2, 41), rng.uniform(-0.6, 0.6)
        t = model.family_terms(s, th)
        if t["gh"][1] > 0:
            continue
        sd, td = rng.normal(size=2) * 2
        c1, c2 = model.dissipation_hat(s, th, sd, td, t)
        assert c1 * sd + c2 * td >= -1e-12
        n += 1


def test_dissipation_sign_changes_near_beam_start(model):
    # with the default tuning the coupling entry is positive for small s at theta = 0
    assert model.family_terms(5.0, 0.0)["gh"][1] > 0
    assert model.family_terms(22.0, 0.0)["gh"][1] < 0


# -- linearization -------------------------------------------------------------------
def test_linearization_taylor_ratio(plant, family, linear_gains):
    x_eq = np.array([22.0, 0.0, 0.0, 0.0])
    d = np.array([0.6, -0.5, 0.4, 0.7]) / np.linalg.norm([0.6, -0.5, 0.4, 0.7])
    errs = []
    for eps in (1e-2, 1e-3):
        x = x_eq + eps * d
        u = control_law(plant, family, ConfigState(x[:2], x[2:]))
        errs.append(np.linalg.norm(u - linear_gains(x[:2], x[2:])))
    assert 70 < errs[0] / errs[1] < 130


def test_linearization_respects_admissibility(plant, linear_gains):
    q = [22.0, 0.0]
    viol = linear_gains.violations(plant.metric(q), plant.projection(q), tol=1e-7)
    assert viol == []


def test_linearized_controller_drives_ball_toward_setpoint(model, plant, family, linear_gains):
    cfg = SimConfig(dt=0.02, duration=200.0)
    tr = simulate(plant, family, cfg, ConfigState([18.0, 0.0], [0.0, 0.0]), controller=linear_gains)
    assert tr.status == "completed"
    assert abs(tr.q[-1, 0] - 22.0) < 0.2


# -- servo --------------------------------------------------------------------------
def test_voltage_conversions():
    p = PhysicalParams()
    assert si_torque_to_voltage(p, 1.0, 0.0).v_in == pytest.approx(2.6 / (0.00767 * 70.5), rel=1e-12)
    assert si_torque_to_voltage(p, 1.0, 0.0).v_in == pytest.approx(4.808, abs=1e-3)
    assert si_torque_to_voltage(p, 0.0, 1.0).v_in == pytest.approx(0.5407, abs=1e-4)
    assert torque_to_voltage(p, 0.0, 0.0).v_in == 0.0
    cmd = si_torque_to_voltage(p, 10.0, 0.0, v_sat=5.0)
    assert cmd.saturated and cmd.v_in == 5.0


def test_voltage_torque_round_trip():
    p = PhysicalParams()
    v = torque_to_voltage(p, 0.37, 1.5).v_in
    assert voltage_to_torque(p, v, 1.5) == pytest.approx(0.37, rel=1e-12)


def test_servo_actuator_consistent_with_conversions():
    p = PhysicalParams()
    act = ServoActuator(p, v_sat=5.0)
    qd = np.array([0.0, 0.05])
    sig, sat = act.signal(np.array([0.0, 0.2]), None, qd)
    assert not sat
    assert sig == pytest.approx(torque_to_voltage(p, 0.2, 0.05).v_in)
    np.testing.assert_allclose(act.force(sig, None, qd), [0.0, 0.2], rtol=1e-12)
    sig, sat = act.signal(np.array([0.0, 500.0]), None, np.zeros(2))
    assert sat and sig == 5.0
