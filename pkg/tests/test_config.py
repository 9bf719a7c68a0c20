import copy

import numpy as np
import pytest
import yaml

from reachfilter.config import ConfigError, load_scenario, parse_scenario
from reachfilter.filters import FilterKind
from reachfilter.hji import Mode
from reachfilter.nominal import PriorKind
from reachfilter.sim import Baseline, DisturbanceKind

from conftest import SCENARIOS

SMALL = {
    "name": "tiny",
    "model": {"name": "vrocket2"},
    "target": {"kind": "rectangle_band", "dims": [0], "lower": [0.0], "upper": [20.0]},
    "grid": {"dims": [{"count": 21, "lo": -150.0, "hi": 200.0}, {"count": 21, "lo": -300.0, "hi": 300.0}]},
    "nominal": {"horizon_steps": 5, "num_samples": 8, "cost": {"kind": "rocket_landing"}},
    "sim": {"x0": [100.0, 0.0], "dt": 0.01, "duration": 0.1},
}


def doc(**changes):
    d = copy.deepcopy(SMALL)
    for path, value in changes.items():
        node = d
        keys = path.split("__")
        for k in keys[:-1]:
            node = node[k]
        node[keys[-1]] = value
    return d


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_scenarios_parse(path):
    sf = load_scenario(path)
    assert sf.name and sf.scenario.grid.ndim == sf.scenario.model.state_dim


def test_defaults_filled_in():
    sf = parse_scenario(doc())
    sc = sf.scenario
    assert sc.problem is Mode.LIVENESS
    assert sc.controller.kind is FilterKind.LEAST_RESTRICTIVE and sc.controller.epsilon == 0.0
    assert sc.nominal.prior is PriorKind.UNIFORM_BOX and sc.nominal.dt == 0.01
    assert sc.solver.cfl == 0.5 and sc.solver.max_horizon == 1.0
    assert sc.disturbance.kind is DisturbanceKind.NONE


def test_default_controller_needs_no_nominal():
    d = doc(filter={"kind": "default"})
    del d["nominal"]
    assert parse_scenario(d).scenario.controller is Baseline.DEFAULT_ONLY
    d["filter"] = {"kind": "lr"}
    with pytest.raises(ConfigError, match="^nominal"):
        parse_scenario(d)


@pytest.mark.parametrize("changes,prefix", [
    ({"colour": "red"}, "colour: unknown key"),
    ({"model__speed": 1.0}, "model.speed: unknown key"),
    ({"grid__dims": [{"count": 21, "lo": 0, "hi": 1, "step": 2}, {"count": 21, "lo": 0, "hi": 1}]},
     "grid.dims[0].step: unknown key"),
    ({"nominal__cost__weight": 1.0}, "nominal.cost.weight: unknown key"),
    ({"sim__disturbance": {"kind": "none", "strength": 2}}, "sim.disturbance.strength: unknown key"),
    ({"filter": {"kind": "slr", "gamma": 2.0}}, "filter.gamma: only used"),
    ({"filter": {"kind": "blending", "gamma": -1.0}}, "filter.gamma: must be >= 0"),
    ({"filter": {"kind": "smooth"}}, "filter.kind: 'smooth' is not one of"),
    ({"solver": {"cfl": 0.95}}, "solver.cfl: must be <= 0.9"),
    ({"solver": {"store_every": 1.5}}, "solver.store_every: expected an integer"),
    ({"sim__dt": 0.0}, "sim.dt: must be > 0"),
    ({"sim__x0": [900.0, 0.0]}, "sim.x0: lies outside"),
    ({"sim__x0": [1.0]}, "sim.x0: expected 2 entries"),
    ({"grid__dims": [{"count": 21, "lo": 0, "hi": 1}]}, "grid.dims: expected 2 entries"),
    ({"grid__dims": [{"count": 21, "lo": 0, "hi": 1}, {"count": 21, "periodic": True}]},
     "grid.dims[1].periodic: state 1 is not an angle"),
    ({"model__name": "unicycle"}, "model.name"),
    ({"target__kind": "ellipse"}, "target.kind"),
    ({"target__dims": [4]}, "target.dims[0]: index 4 out of range"),
    ({"nominal__seed": -3}, "nominal.seed: must be >= 0"),
])
def test_errors_carry_key_path(changes, prefix):
    with pytest.raises(ConfigError) as e:
        parse_scenario(doc(**changes))
    assert str(e.value).startswith(prefix)


def test_root_must_be_mapping_and_required_sections():
    with pytest.raises(ConfigError, match="<root>"):
        parse_scenario([1, 2])
    d = doc()
    del d["grid"]
    with pytest.raises(ConfigError, match="^grid: required"):
        parse_scenario(d)


def test_unreadable_and_invalid_files(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("model: [unclosed\n")
    with pytest.raises(ConfigError, match="not valid YAML"):
        load_scenario(bad)


def test_yaml_round_trip(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text(yaml.safe_dump(SMALL))
    sc = load_scenario(p).scenario
    np.testing.assert_array_equal(sc.x0, [100.0, 0.0])
    assert sc.grid.counts == (21, 21) and sc.duration == 0.1


def test_override_seed_and_dt():
    sf = parse_scenario(doc(sim__disturbance={"kind": "random", "seed": 1}, model={"name": "vrocket2"}))
    o = sf.override(seed=42, dt=0.002)
    assert o.scenario.nominal.rng_seed == 42 and o.scenario.sim_dt == 0.002
    assert sf.scenario.nominal.rng_seed == 0  # original untouched
    with pytest.raises(ConfigError):
        sf.override(dt=-1.0)
