"""Scenario files: venue geometry, waypoints, spawn grid, model and geo settings.

Scenarios are YAML documents. Unknown keys and malformed values are reported
with the line they occur on.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .core import Rect, Segment, VenueMap, Vec2, Waypoint
from .geo import GeoOrigin
from .pedmodel import PedModelConfig

DEFAULT_SCENARIO = "jamarat.yaml"


class ScenarioError(ValueError):
    """Invalid scenario document."""


class ConfigurationError(ValueError):
    """A trial cannot be set up as requested (for example, spawn overflow)."""


_SCHEMA: dict[str, Any] = {
    "venue": {"bounds": None, "walkable": "*", "obstacles": None, "pillars": None, "exit_line": None},
    "waypoints": {"centers": None, "arrival_radius": None, "mean_wait": None},
    "spawn": {"region": None, "spacing": None},
    "model": {name: None for name in PedModelConfig.field_names()},
    "geo": {"lat0": None, "lon0": None, "rotation": None},
}
_REQUIRED = {"venue": ("bounds", "obstacles", "exit_line"), "spawn": ("region",)}


@dataclass
class Scenario:
    bounds: tuple[float, float, float, float]
    obstacles: list[list[tuple[float, float]]]
    exit_line: tuple[tuple[float, float], tuple[float, float]]
    spawn_region: tuple[float, float, float, float]
    spawn_spacing: float = 0.55
    walkable: dict[str, tuple[float, float, float, float]] = field(default_factory=dict)
    pillars: list[tuple[float, float, float, float]] = field(default_factory=list)
    waypoint_centers: list[tuple[float, float]] = field(default_factory=list)
    arrival_radius: float = 4.0
    mean_wait: float = 60.0
    model: PedModelConfig = field(default_factory=PedModelConfig)
    geo: GeoOrigin | None = None
    name: str = ""

    def venue(self) -> VenueMap:
        segs = []
        for line in self.obstacles:
            for a, b in zip(line[:-1], line[1:]):
                segs.append(Segment(Vec2(*a), Vec2(*b)))
        for x0, y0, x1, y1 in self.pillars:
            corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]
            for a, b in zip(corners[:-1], corners[1:]):
                segs.append(Segment(Vec2(*a), Vec2(*b)))
        wps = [Waypoint(Vec2(*c), self.arrival_radius, self.mean_wait) for c in self.waypoint_centers]
        return VenueMap(
            obstacles=segs,
            spawn_region=Rect(*self.spawn_region),
            waypoints=wps,
            exit_line=Segment(Vec2(*self.exit_line[0]), Vec2(*self.exit_line[1])),
            bounds=Rect(*self.bounds),
            spawn_spacing=self.spawn_spacing,
        )

    def to_dict(self) -> dict:
        doc: dict[str, Any] = {
            "venue": {
                "bounds": list(self.bounds),
                "walkable": {k: list(v) for k, v in self.walkable.items()},
                "obstacles": [[list(p) for p in line] for line in self.obstacles],
                "pillars": [list(p) for p in self.pillars],
                "exit_line": [list(p) for p in self.exit_line],
            },
            "waypoints": {
                "centers": [list(c) for c in self.waypoint_centers],
                "arrival_radius": self.arrival_radius,
                "mean_wait": self.mean_wait,
            },
            "spawn": {"region": list(self.spawn_region), "spacing": self.spawn_spacing},
            "model": asdict(self.model),
        }
        if self.geo is not None:
            doc["geo"] = {"lat0": self.geo.lat0, "lon0": self.geo.lon0, "rotation": self.geo.rotation}
        return doc

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


# --- parsing -----------------------------------------------------------------


def _line_index(node, path=()) -> dict[tuple, int]:
    """Map key paths to 1-based source lines."""
    out = {path: node.start_mark.line + 1}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = k.value
            out[path + (key,)] = k.start_mark.line + 1
            for p, line in _line_index(v, path + (key,)).items():
                if p != path + (key,):
                    out[p] = line
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            out.update(_line_index(v, path + (i,)))
    return out


class _Reader:
    def __init__(self, lines: dict[tuple, int], source: str):
        self.lines = lines
        self.source = source

    def fail(self, path: tuple, msg: str):
        line = None
        for cut in range(len(path), -1, -1):
            if path[:cut] in self.lines:
                line = self.lines[path[:cut]]
                break
        key = ".".join(str(p) for p in path) or "<root>"
        where = f"{self.source}:{line}" if line is not None else self.source
        raise ScenarioError(f"{where}: {key}: {msg}")

    def number(self, value, path) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(path, f"expected a number, got {value!r}")
        if not math.isfinite(value):
            self.fail(path, "number must be finite")
        return float(value)

    def point(self, value, path) -> tuple[float, float]:
        if not isinstance(value, list) or len(value) != 2:
            self.fail(path, f"expected [x, y], got {value!r}")
        return (self.number(value[0], path + (0,)), self.number(value[1], path + (1,)))

    def rect(self, value, path) -> tuple[float, float, float, float]:
        if not isinstance(value, list) or len(value) != 4:
            self.fail(path, f"expected [xmin, ymin, xmax, ymax], got {value!r}")
        r = tuple(self.number(v, path + (i,)) for i, v in enumerate(value))
        if not (r[2] > r[0] and r[3] > r[1]):
            self.fail(path, "rectangle must have xmax > xmin and ymax > ymin")
        return r  # type: ignore[return-value]


def _check_keys(doc: dict, r: _Reader) -> None:
    if not isinstance(doc, dict):
        r.fail((), "scenario must be a mapping")
    for section, body in doc.items():
        if section not in _SCHEMA:
            r.fail((section,), f"unknown section (expected one of {', '.join(_SCHEMA)})")
        if not isinstance(body, dict):
            r.fail((section,), "section must be a mapping")
        allowed = _SCHEMA[section]
        for key in body:
            if key not in allowed:
                r.fail((section, key), f"unknown key (allowed: {', '.join(allowed)})")
    for section, keys in _REQUIRED.items():
        if section not in doc:
            r.fail((section,), "missing required section")
        for key in keys:
            if key not in doc[section]:
                r.fail((section, key), "missing required key")


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    try:
        node = yaml.compose(text)
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f":{mark.line + 1}" if mark is not None else ""
        raise ScenarioError(f"{source}{line}: malformed YAML: {getattr(exc, 'problem', exc)}") from None
    if node is None:
        raise ScenarioError(f"{source}: empty scenario")
    r = _Reader(_line_index(node), source)
    _check_keys(doc, r)

    v = doc["venue"]
    bounds = r.rect(v["bounds"], ("venue", "bounds"))
    obstacles = []
    if not isinstance(v["obstacles"], list):
        r.fail(("venue", "obstacles"), "expected a list of polylines")
    for i, line in enumerate(v["obstacles"]):
        path = ("venue", "obstacles", i)
        if not isinstance(line, list) or len(line) < 2:
            r.fail(path, "a polyline needs at least two points")
        pts = [r.point(p, path + (k,)) for k, p in enumerate(line)]
        for k in range(len(pts) - 1):
            if pts[k] == pts[k + 1]:
                r.fail(path + (k + 1,), "zero-length obstacle segment")
        obstacles.append(pts)
    pillars = [r.rect(p, ("venue", "pillars", i)) for i, p in enumerate(v.get("pillars") or [])]
    walk = v.get("walkable") or {}
    if not isinstance(walk, dict):
        r.fail(("venue", "walkable"), "expected a mapping of name: rectangle")
    walkable = {str(k): r.rect(rv, ("venue", "walkable", k)) for k, rv in walk.items()}
    el = v["exit_line"]
    if not isinstance(el, list) or len(el) != 2:
        r.fail(("venue", "exit_line"), "expected [[x0, y0], [x1, y1]]")
    exit_line = (r.point(el[0], ("venue", "exit_line", 0)), r.point(el[1], ("venue", "exit_line", 1)))
    if exit_line[0] == exit_line[1]:
        r.fail(("venue", "exit_line"), "exit line has zero length")

    w = doc.get("waypoints") or {}
    centers = [r.point(c, ("waypoints", "centers", i)) for i, c in enumerate(w.get("centers") or [])]
    arrival = r.number(w.get("arrival_radius", 4.0), ("waypoints", "arrival_radius"))
    mean_wait = r.number(w.get("mean_wait", 60.0), ("waypoints", "mean_wait"))
    if arrival <= 0:
        r.fail(("waypoints", "arrival_radius"), "must be positive")
    if mean_wait < 0:
        r.fail(("waypoints", "mean_wait"), "must be non-negative")

    s = doc["spawn"]
    region = r.rect(s["region"], ("spawn", "region"))
    spacing = r.number(s.get("spacing", 0.55), ("spawn", "spacing"))
    if spacing <= 0:
        r.fail(("spawn", "spacing"), "must be positive")

    model_kw = {}
    for key, val in (doc.get("model") or {}).items():
        if key == "density_aware":
            if not isinstance(val, bool):
                r.fail(("model", key), "expected true/false")
            model_kw[key] = val
        elif key == "max_neighbors":
            if isinstance(val, bool) or not isinstance(val, int):
                r.fail(("model", key), "expected an integer")
            model_kw[key] = val
        else:
            model_kw[key] = r.number(val, ("model", key))
    try:
        model = PedModelConfig(**model_kw)
    except (ValueError, NotImplementedError) as exc:
        r.fail(("model",), str(exc))

    geo = None
    if "geo" in doc:
        g = doc["geo"]
        try:
            geo = GeoOrigin(r.number(g.get("lat0"), ("geo", "lat0")), r.number(g.get("lon0"), ("geo", "lon0")),
                            r.number(g.get("rotation", 0.0), ("geo", "rotation")))
        except ValueError as exc:
            if isinstance(exc, ScenarioError):
                raise
            r.fail(("geo",), str(exc))

    return Scenario(bounds=bounds, obstacles=obstacles, exit_line=exit_line, spawn_region=region,
                    spawn_spacing=spacing, walkable=walkable, pillars=pillars, waypoint_centers=centers,
                    arrival_radius=arrival, mean_wait=mean_wait, model=model, geo=geo, name=source)


def load_scenario(path: str | Path | None = None) -> Scenario:
    """Load a scenario file; ``None`` loads the bundled Jamarat venue."""
    if path is None:
        text = resources.files("ares.data").joinpath(DEFAULT_SCENARIO).read_text(encoding="utf-8")
        return parse_scenario(text, DEFAULT_SCENARIO)
    p = Path(path)
    return parse_scenario(p.read_text(encoding="utf-8"), str(p))


# --- spawning ----------------------------------------------------------------


def spawn_grid(scenario: Scenario, n: int) -> np.ndarray:
    """Rectangular start grid, filled column by column from the bridge end.

    Each column spans the region's width; a partial final column is centred
    on the region's axis.
    """
    if n < 1:
        raise ConfigurationError("need at least one agent")
    x0, y0, x1, y1 = scenario.spawn_region
    h = scenario.spawn_spacing
    rows = int(math.floor((y1 - y0) / h + 1e-9))
    cols = int(math.floor((x1 - x0) / h + 1e-9))
    if rows < 1 or cols < 1:
        raise ConfigurationError("spawn region smaller than one grid cell")
    if n > rows * cols:
        raise ConfigurationError(f"{n} agents exceed spawn grid capacity {rows * cols} ({cols} x {rows})")
    ys = y0 + h * (np.arange(rows) + 0.5) + ((y1 - y0) - rows * h) / 2
    full, rem = divmod(n, rows)
    out = np.empty((n, 2))
    k = 0
    for c in range(full + (1 if rem else 0)):
        x = x0 + h * (c + 0.5)
        if c < full:
            col = ys
        else:
            mid = (rows - rem) // 2
            col = ys[mid:mid + rem]
        out[k:k + len(col), 0] = x
        out[k:k + len(col), 1] = col
        k += len(col)
    return out
