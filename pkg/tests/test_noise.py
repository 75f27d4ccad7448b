import math

import numpy as np
import pytest
from scipy import stats

from ares.core import AgentState
from ares.noise import (
    NoiseConfig,
    magnitude_from_uniform,
    perturb_positions,
    rayleigh_cdf,
    sample_displacements,
    sample_error_magnitude,
)


def test_inverse_cdf_at_zero():
    assert magnitude_from_uniform(0.0, 3.0) == 0.0


def test_median_closed_form():
    assert magnitude_from_uniform(0.5, 5.0) == pytest.approx(5 * math.sqrt(math.log(2)), abs=1e-12)
    assert magnitude_from_uniform(0.5, 5.0) == pytest.approx(4.1628, abs=1e-4)


def test_cdf_inverts_sampler():
    u = np.linspace(0, 0.999, 50)
    assert rayleigh_cdf(magnitude_from_uniform(u, 2.5), 2.5) == pytest.approx(u, abs=1e-12)


def test_e_must_be_positive(rng):
    with pytest.raises(ValueError):
        sample_error_magnitude(0.0, rng)
    with pytest.raises(ValueError):
        NoiseConfig(-1.0)


def test_scalar_draw(rng):
    z = sample_error_magnitude(1.0, rng)
    assert isinstance(z, float) and z >= 0


def test_mean_matches_rayleigh_mean(rng):
    z = sample_error_magnitude(1.0, rng, 1_000_000)
    assert abs(z.mean() - math.sqrt(math.pi) / 2) / (math.sqrt(math.pi) / 2) < 0.01


@pytest.mark.parametrize("E", [1.0, 4.0, 10.0])
def test_ks_against_cdf(E, rng):
    z = sample_error_magnitude(E, rng, 1_000_000)
    ks = stats.kstest(z, lambda x: rayleigh_cdf(x, E)).statistic
    assert ks < 0.005


@pytest.mark.parametrize("E", [0.5, 3.0, 7.0])
def test_rms_equals_e(E, rng):
    z = sample_error_magnitude(E, rng, 100_000)
    assert abs(math.sqrt(np.mean(z * z)) - E) / E < 0.01
    assert abs(z.mean() - E * math.sqrt(math.pi) / 2) / E < 0.01


def test_direction_uniform(rng):
    d = sample_displacements(100_000, 2.0, rng)
    theta = np.arctan2(d[:, 1], d[:, 0])
    counts, _ = np.histogram(theta, bins=36, range=(-math.pi, math.pi))
    assert stats.chisquare(counts).pvalue > 0.01


def test_components_are_gaussian(rng):
    E = 3.0
    d = sample_displacements(50_000, E, rng)
    for k in range(2):
        assert stats.kstest(d[:, k], "norm", args=(0, E / math.sqrt(2))).pvalue > 0.01


def test_zero_noise_is_identity(rng):
    pos = rng.uniform(0, 10, (50, 2))
    out = perturb_positions(pos, 0.0, rng)
    assert np.array_equal(out, pos)
    assert out is not pos


def test_agents_keep_velocity(rng):
    agents = [AgentState(i, (i, 0.0), velocity=(0.5, 0.0)) for i in range(20)]
    out = perturb_positions(agents, 2.0, rng)
    assert [a.id for a in out] == list(range(20))
    assert all(a.velocity == (0.5, 0.0) for a in out)
    assert any(a.position != b.position for a, b in zip(agents, out))
    assert perturb_positions(agents, 0.0, rng) == agents


def test_large_noise_leaves_the_walkway(scenario, rng):
    from ares.scenario import spawn_grid
    pos = spawn_grid(scenario, 1000)
    out = perturb_positions(pos, 10.0, rng)
    x0, y0, x1, y1 = scenario.walkable["right_ramp"]
    outside = (out[:, 1] < y0) | (out[:, 1] > y1)
    assert outside.any()
