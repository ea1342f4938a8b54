import json

import pytest

from matchctl.ballbeam import PRINTED_DIMENSIONLESS, PhysicalParams
from matchctl.config import (
    build_model,
    default_config,
    grid_axes,
    initial_state,
    load_config,
    merge_config,
    sim_config,
)
from matchctl.errors import ConfigError


def test_default_config_reproduces_reference_setup():
    cfg = default_config()
    phys = {k: float(v) for k, v in cfg["physical"].items()}
    assert phys == PhysicalParams().to_dict()
    over = {k: float(v) for k, v in cfg["dimensionless_overrides"].items()}
    assert over == PRINTED_DIMENSIONLESS.to_dict()
    assert cfg["tuning"]["psi"] == "ode"
    assert [float(x) for x in cfg["domain"]["s"]] == [2.0, 41.0]


def test_numbers_are_decimal_strings_in_shipped_file():
    cfg = default_config()
    assert all(isinstance(v, str) for v in cfg["physical"].values())


def test_build_model_uses_printed_overrides():
    m = build_model(load_config())
    assert m.dims == PRINTED_DIMENSIONLESS
    assert m.domain.lo.tolist() == [2.0, -0.6]


def test_sim_config_converts_physical_duration():
    cfg = load_config()
    m = build_model(cfg)
    sc = sim_config(cfg, m)
    assert sc.duration == pytest.approx(30.0 / m.scales.tau)
    assert sc.time_scale == m.scales.tau
    assert sc.divergence_center == (22.0, 0.0, 0.0, 0.0)
    st = initial_state(cfg)
    assert st.q.tolist() == [5.0, 0.0] and st.qdot.tolist() == [0.0, 0.0]
    assert grid_axes(cfg) == [(5.0, 38.0, 21), (-0.4, 0.4, 21)]


def test_user_file_merges_over_defaults(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"sim": {"dt": 0.002, "initial": {"s": 10}}}))
    cfg = load_config(p)
    assert cfg["sim"]["dt"] == 0.002
    assert cfg["sim"]["initial"]["s"] == 10
    assert cfg["sim"]["initial"]["theta"] == "0"
    assert cfg["physical"] == default_config()["physical"]


@pytest.mark.parametrize("user,key", [
    ({"bogus": {}}, "bogus"),
    ({"physical": {"m_X": 1}}, "physical.m_X"),
    ({"physical": {"m_B": "heavy"}}, "physical.m_B"),
    ({"sim": {"dt": -1}}, "sim.dt"),
    ({"sim": {"initial": {"phi": 0}}}, "sim.initial.phi"),
    ({"sim": {"controller_mode": "fast"}}, "sim.controller_mode"),
    ({"grid": {"s": [1, 2]}}, "grid.s"),
    ({"domain": {"s": [5, 2]}}, "domain.s"),
    ({"dimensionless_overrides": {"a9": 1}}, "dimensionless_overrides.a9"),
])
def test_schema_errors_name_the_key(user, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        merge_config(default_config(), user)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(bad)


def test_invalid_physical_values_become_config_errors():
    cfg = merge_config(default_config(), {"physical": {"s0": "0.9"}})
    with pytest.raises(ConfigError, match="physical"):
        build_model(cfg)
