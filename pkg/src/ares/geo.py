"""Latitude/longitude <-> venue-local metric frame.

Equirectangular projection about a venue origin on a spherical earth. Angles
for the venue axis and for velocity headings are measured counter-clockwise
from east, so ``rotation = 0`` puts the venue x-axis due east and the y-axis
due north.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .core import Vec2

EARTH_RADIUS = 6_371_000.0


@dataclass(frozen=True)
class GeoOrigin:
    lat0: float
    lon0: float
    rotation: float = 0.0
    earth_radius: float = EARTH_RADIUS

    def __post_init__(self):
        _check_latlon(self.lat0, self.lon0)


def _check_latlon(lat: float, lon: float) -> None:
    if not (math.isfinite(lat) and math.isfinite(lon)):
        raise ValueError("non-finite coordinate")
    if not -90.0 <= lat <= 90.0:
        raise ValueError(f"latitude {lat} out of range [-90, 90]")
    if not -180.0 <= lon <= 180.0:
        raise ValueError(f"longitude {lon} out of range [-180, 180]")


def _wrap_dlon(dlon: float) -> float:
    return (dlon + 180.0) % 360.0 - 180.0


def to_local(origin: GeoOrigin, lat: float, lon: float) -> Vec2:
    _check_latlon(lat, lon)
    east = origin.earth_radius * math.cos(math.radians(origin.lat0)) * math.radians(_wrap_dlon(lon - origin.lon0))
    north = origin.earth_radius * math.radians(lat - origin.lat0)
    c, s = math.cos(origin.rotation), math.sin(origin.rotation)
    return Vec2(c * east + s * north, -s * east + c * north)


def to_global(origin: GeoOrigin, p) -> tuple[float, float]:
    x, y = float(p[0]), float(p[1])
    c, s = math.cos(origin.rotation), math.sin(origin.rotation)
    east = c * x - s * y
    north = s * x + c * y
    lat = origin.lat0 + math.degrees(north / origin.earth_radius)
    coslat = math.cos(math.radians(origin.lat0))
    if coslat == 0.0:
        return lat, origin.lon0
    lon = origin.lon0 + math.degrees(east / (origin.earth_radius * coslat))
    return lat, _wrap_dlon(lon)


def velocity_to_local(origin: GeoOrigin, speed: float, bearing: float) -> Vec2:
    """Planar velocity in venue axes for a fix moving at ``speed`` along ``bearing``.

    ``bearing`` uses the same east-based counter-clockwise convention as
    ``origin.rotation``.
    """
    if speed < 0:
        raise ValueError("speed must be non-negative")
    theta = bearing - origin.rotation
    return Vec2(speed * math.cos(theta), speed * math.sin(theta))


def velocity_to_global(origin: GeoOrigin, v) -> tuple[float, float]:
    """Inverse of :func:`velocity_to_local`: returns (speed, bearing)."""
    speed = math.hypot(v[0], v[1])
    bearing = math.atan2(v[1], v[0]) + origin.rotation
    return speed, bearing
