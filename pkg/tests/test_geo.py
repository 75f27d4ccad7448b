import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ares.core import Vec2
from ares.geo import EARTH_RADIUS, GeoOrigin, to_global, to_local, velocity_to_global, velocity_to_local


def haversine(lat1, lon1, lat2, lon2, R=EARTH_RADIUS):
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp, dl = p2 - p1, math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * R * math.asin(math.sqrt(a))


MECCA = GeoOrigin(21.4225, 39.8726, rotation=0.3)


def test_origin_maps_to_zero():
    p = to_local(MECCA, MECCA.lat0, MECCA.lon0)
    assert p == pytest.approx((0.0, 0.0), abs=1e-12)


def test_one_degree_north():
    p = to_local(GeoOrigin(0.0, 0.0), 1.0, 0.0)
    assert p.x == pytest.approx(0.0, abs=1e-9)
    assert p.y == pytest.approx(111_194.9, abs=0.1)


def test_zero_maps_back_to_origin():
    assert to_global(MECCA, Vec2(0, 0)) == pytest.approx((MECCA.lat0, MECCA.lon0), abs=1e-12)


def test_rotation_turns_axes():
    # venue x-axis pointing north: a point due north lands on +x
    o = GeoOrigin(10.0, 20.0, rotation=math.pi / 2)
    p = to_local(o, 10.001, 20.0)
    assert p.x == pytest.approx(111.19, abs=0.01)
    assert p.y == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("lat,lon", [(91.0, 0.0), (-90.5, 0.0), (0.0, 181.0), (math.nan, 0.0)])
def test_out_of_range(lat, lon):
    with pytest.raises(ValueError):
        to_local(GeoOrigin(0.0, 0.0), lat, lon)
    with pytest.raises(ValueError):
        GeoOrigin(lat, lon)


def test_dateline_wrap():
    o = GeoOrigin(0.0, 179.9999)
    p = to_local(o, 0.0, -179.9999)
    assert p.x == pytest.approx(2 * 0.0001 * math.pi / 180 * EARTH_RADIUS, rel=1e-6)


@given(dx=st.floats(-10_000, 10_000), dy=st.floats(-10_000, 10_000),
       lat0=st.floats(-60, 60), rot=st.floats(-math.pi, math.pi))
def test_round_trip(dx, dy, lat0, rot):
    o = GeoOrigin(lat0, 45.0, rot)
    if math.hypot(dx, dy) > 10_000:
        return
    lat, lon = to_global(o, (dx, dy))
    back = to_local(o, lat, lon)
    assert back.x == pytest.approx(dx, abs=1e-6)
    assert back.y == pytest.approx(dy, abs=1e-6)
    lat2, lon2 = to_global(o, back)
    assert abs(lat2 - lat) < 1e-9 and abs(lon2 - lon) < 1e-9


@given(lat0=st.floats(-60, 60), bearing=st.floats(0, 2 * math.pi), dist=st.floats(1.0, 1000.0))
def test_distance_faithful_against_great_circle(lat0, bearing, dist):
    o = GeoOrigin(lat0, 10.0)
    lat, lon = to_global(o, (dist * math.cos(bearing), dist * math.sin(bearing)))
    gc = haversine(o.lat0, o.lon0, lat, lon)
    assert abs(gc - dist) / dist < 1e-3


def test_pairwise_distance_faithful(rng):
    o = GeoOrigin(21.4225, 39.8726)
    for _ in range(200):
        a = rng.uniform(-400, 400, 2)
        b = rng.uniform(-400, 400, 2)
        la, lo = to_global(o, a)
        lb, lob = to_global(o, b)
        d = float(np.hypot(*(a - b)))
        if d < 1.0:
            continue
        assert abs(haversine(la, lo, lb, lob) - d) / d < 1e-3


def test_velocity_zero_speed():
    assert velocity_to_local(MECCA, 0.0, 1.234) == pytest.approx((0.0, 0.0), abs=1e-15)


def test_velocity_along_venue_axis():
    v = velocity_to_local(MECCA, 1.04, MECCA.rotation)
    assert v.x == pytest.approx(1.04, abs=1e-12)
    assert v.y == pytest.approx(0.0, abs=1e-12)


def test_velocity_negative_speed_rejected():
    with pytest.raises(ValueError):
        velocity_to_local(MECCA, -0.1, 0.0)


def test_velocity_magnitude_preserved(rng):
    for _ in range(100):
        s, b = rng.uniform(0, 3), rng.uniform(-10, 10)
        v = velocity_to_local(MECCA, s, b)
        assert math.hypot(*v) == pytest.approx(s, abs=1e-12)
        s2, b2 = velocity_to_global(MECCA, v)
        assert s2 == pytest.approx(s, abs=1e-12)
        if s > 1e-9:
            assert math.cos(b2 - b) == pytest.approx(1.0, abs=1e-9)
