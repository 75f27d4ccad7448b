import numpy as np
import pytest

from ares.scenario import ConfigurationError, ScenarioError, load_scenario, parse_scenario, spawn_grid

MINIMAL = """\
venue:
  bounds: [0, 0, 20, 10]
  obstacles:
    - [[0, 0], [20, 0]]
    - [[0, 10], [20, 10]]
  exit_line: [[0, 0], [0, 10]]
spawn:
  region: [10, 0, 20, 10]
"""


def test_bundled_venue(scenario):
    assert scenario.waypoint_centers == [(-10.0, -6.0), (-30.0, -6.0), (-50.0, -6.0)]
    assert scenario.walkable["right_ramp"][3] - scenario.walkable["right_ramp"][1] == 22
    assert scenario.walkable["bridge"][3] - scenario.walkable["bridge"][1] == 44
    assert scenario.model.pref_speed == 1.04
    assert scenario.geo is not None
    venue = scenario.venue()
    # three pillar rectangles of four sides each, plus the outline
    assert len(venue.obstacles) == 1 + 5 + 5 + 12


def test_round_trip_is_lossless(scenario):
    again = parse_scenario(scenario.dumps(), scenario.name)
    assert again == scenario
    assert again.dumps() == scenario.dumps()


def test_minimal_document_uses_defaults():
    sc = parse_scenario(MINIMAL)
    assert sc.spawn_spacing == 0.55
    assert sc.waypoint_centers == []
    assert sc.geo is None
    assert parse_scenario(sc.dumps()) == sc


def test_unknown_key_names_line():
    text = MINIMAL + "  denisty: 3\n"
    with pytest.raises(ScenarioError, match=r":9: spawn\.denisty: unknown key"):
        parse_scenario(text)


def test_unknown_section_names_line():
    with pytest.raises(ScenarioError, match=r":1: crowd: unknown section"):
        parse_scenario("crowd: {}\n" + MINIMAL)


def test_bad_value_names_key_and_line():
    text = MINIMAL.replace("region: [10, 0, 20, 10]", "region: [10, 0, oops, 10]")
    with pytest.raises(ScenarioError, match=r":8: spawn\.region\.2: expected a number"):
        parse_scenario(text)


def test_missing_required_key():
    text = MINIMAL.replace("  exit_line: [[0, 0], [0, 10]]\n", "")
    with pytest.raises(ScenarioError, match="venue.exit_line: missing required key"):
        parse_scenario(text)


def test_malformed_yaml():
    with pytest.raises(ScenarioError, match="malformed YAML"):
        parse_scenario("venue: [1, 2\n")


@pytest.mark.parametrize("patch", [
    ("region: [10, 0, 20, 10]", "region: [20, 0, 10, 10]"),
    ("[[0, 0], [20, 0]]", "[[0, 0], [0, 0]]"),
    ("spawn:\n", "model:\n  dt: -1\nspawn:\n"),
    ("spawn:\n", "geo:\n  lat0: 95\n  lon0: 0\nspawn:\n"),
])
def test_invalid_documents(patch):
    with pytest.raises(ScenarioError):
        parse_scenario(MINIMAL.replace(*patch))


def test_load_from_path(tmp_path):
    p = tmp_path / "tiny.yaml"
    p.write_text(MINIMAL)
    assert load_scenario(p).name == str(p)


# --- spawn grid ----------------------------------------------------------------


def test_spawn_grid_spacing(scenario):
    pos = spawn_grid(scenario, 200)
    assert pos.shape == (200, 2)
    d = np.hypot(*(pos[:, None] - pos[None]).transpose(2, 0, 1))
    np.fill_diagonal(d, np.inf)
    assert d.min() == pytest.approx(0.55)
    x0, y0, x1, y1 = scenario.spawn_region
    assert np.all((pos[:, 0] > x0) & (pos[:, 0] < x1) & (pos[:, 1] > y0) & (pos[:, 1] < y1))


def test_spawn_grid_fills_from_the_bridge_end(scenario):
    pos = spawn_grid(scenario, 45)
    assert pos[:, 0].min() == pytest.approx(15.275)
    assert len(np.unique(pos[:, 0])) == 2
    # the partial column is centred on the ramp axis
    last = pos[pos[:, 0] > pos[:, 0].min()]
    assert abs(last[:, 1].mean()) < 0.55


def test_single_agent_spawns_on_axis(scenario):
    pos = spawn_grid(scenario, 1)
    assert abs(pos[0, 1]) < 0.55


def test_full_study_size_fits(scenario):
    assert len(spawn_grid(scenario, 10240)) == 10240


def test_spawn_overflow(scenario):
    with pytest.raises(ConfigurationError, match="exceed spawn grid capacity"):
        spawn_grid(scenario, 12001)
    with pytest.raises(ConfigurationError):
        spawn_grid(scenario, 0)
