import json
import math

import numpy as np
import pytest

from spinwave.ensemble import RB87_MASS
from spinwave.scenario import (
    Scenario,
    ScenarioError,
    get_field,
    load_scenario,
    parse_scenario,
    scenario_hash,
    set_field,
    time_grid,
)


def test_defaults_describe_the_default_cell():
    sc = parse_scenario({})
    assert sc.cell.length_m == 0.05 and sc.cell.radius_m == 0.0025
    assert sc.thermal.temperature_k == pytest.approx(351.15)
    assert sc.thermal.atomic_mass_kg == RB87_MASS
    assert sc.optics.write_wavelength_m == 795e-9
    assert sc.analysis.convention == "phased_array"
    assert sc.stimulation is None
    assert sc.cell_geometry().wall_model.spin_destruction_prob == 1e-4


@pytest.mark.parametrize("data, path", [
    ({"cel": {}}, "cel"),
    ({"cell": {"radius_m": -1}}, "cell.radius_m"),
    ({"cell": {"wall": {"kind": "glass"}}}, "cell.wall.kind"),
    ({"gas": {"kind": "none", "velocity_reset_rate_hz": 5.0}}, "gas"),
    ({"sim": {"time_grid": {"spacing": "cubic"}}}, "sim.time_grid.spacing"),
    ({"stimulation": {"gain_per_watt": 1, "decay_rate_hz": 1, "powers_w": [2e-3, 1e-3]}},
     "stimulation.powers_w"),
    ({"analysis": {"fit_models": ["exp3"]}}, "analysis.fit_models.0"),
])
def test_schema_errors_name_the_field(data, path):
    with pytest.raises(ScenarioError) as info:
        parse_scenario(data)
    assert info.value.path == path


def test_load_reports_bad_json(tmp_path):
    f = tmp_path / "s.json"
    f.write_text("{not json")
    with pytest.raises(ScenarioError):
        load_scenario(f)
    f.write_text("[1, 2]")
    with pytest.raises(ScenarioError):
        load_scenario(f)


def test_time_grids():
    sc = parse_scenario({"sim": {"time_grid": {"t_max_s": 1e-3, "n_points": 11}}})
    np.testing.assert_allclose(sc.time_grid(), np.linspace(0, 1e-3, 11))
    g = time_grid(parse_scenario({"sim": {"time_grid": {
        "t_max_s": 1e-3, "n_points": 5, "spacing": "log", "t_min_s": 1e-7}}}).sim.time_grid)
    np.testing.assert_allclose(g, [0, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3][:1] + list(np.geomspace(1e-7, 1e-3, 4)))
    with pytest.raises(ScenarioError):
        parse_scenario({"sim": {"time_grid": {"t_max_s": 1e-3, "spacing": "log", "t_min_s": 1e-2}}})


def test_set_and_get_field():
    sc = parse_scenario({})
    out = set_field(sc, "optics.detection_angle_rad", 0.0349)
    assert get_field(out, "optics.detection_angle_rad") == 0.0349
    assert sc.optics.detection_angle_rad == 0.0  # original untouched
    assert set_field(sc, "cell.wall.spin_destruction_prob", 0.1).cell.wall.spin_destruction_prob == 0.1
    with pytest.raises(ScenarioError):
        set_field(sc, "optics", 1)
    with pytest.raises(ScenarioError):
        set_field(sc, "optics.nope", 1)
    with pytest.raises(ScenarioError):
        set_field(sc, "stimulation.gain_per_watt", 1.0)
    with pytest.raises(ScenarioError):
        set_field(sc, "cell.radius_m", -1.0)


def test_hash_tracks_content():
    a, b = parse_scenario({}), parse_scenario({"sim": {"seed": 1}})
    assert scenario_hash(a) == scenario_hash(b)
    assert scenario_hash(a) != scenario_hash(set_field(a, "sim.seed", 2))
    assert parse_scenario(json.loads(a.to_json())) == a


def test_null_read_waist_means_uniform_read():
    sc = parse_scenario({"optics": {"read_waist_m": None}})
    assert math.isinf(sc.beam_geometry().read_waist)


def test_bundled_scenarios_parse():
    from importlib import resources
    names = [p.name for p in (resources.files("spinwave") / "scenarios").iterdir() if p.name.endswith(".json")]
    assert {"collinear_paraffin.json", "skewed_paraffin.json"} <= set(names)
    for name in names:
        path = resources.files("spinwave") / "scenarios" / name
        assert isinstance(load_scenario(str(path)), Scenario)
