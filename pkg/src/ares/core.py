"""Geometry primitives, agent and venue records, and the uniform-grid index.

Everything that runs per step works on struct-of-arrays numpy buffers; the
dataclasses here are the public, per-agent view of that state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence, Union

import numpy as np
from numba import njit

DEFAULT_RADIUS = 0.19
DEFAULT_MAX_SPEED = 2.0
DEFAULT_PREF_SPEED = 1.04
MIN_MASS = 50.0
MAX_MASS = 100.0

# integer phase codes used by the kernels
TRAVELLING = 0
WAITING = 1
EXITING = 2
DONE = 3


class Vec2(NamedTuple):
    x: float
    y: float

    def __add__(self, other):  # type: ignore[override]
        return Vec2(self.x + other[0], self.y + other[1])

    def __sub__(self, other):
        return Vec2(self.x - other[0], self.y - other[1])

    def __mul__(self, k):  # type: ignore[override]
        return Vec2(self.x * k, self.y * k)

    __rmul__ = __mul__

    def dot(self, other) -> float:
        return self.x * other[0] + self.y * other[1]

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y)


def as_vec2(v) -> Vec2:
    out = Vec2(float(v[0]), float(v[1]))
    if not out.is_finite():
        raise ValueError(f"non-finite vector {v!r}")
    return out


# --- behaviour phases --------------------------------------------------------


@dataclass(frozen=True)
class Travelling:
    waypoint_index: int


@dataclass(frozen=True)
class Waiting:
    remaining: float
    waypoint_index: int

    def __post_init__(self):
        if self.remaining < 0:
            raise ValueError("remaining wait must be >= 0")


@dataclass(frozen=True)
class Exiting:
    pass


@dataclass(frozen=True)
class Done:
    pass


BehaviorPhase = Union[Travelling, Waiting, Exiting, Done]


def phase_code(phase: BehaviorPhase) -> tuple[int, int, float]:
    """Encode a phase as (code, waypoint_index, remaining)."""
    if isinstance(phase, Travelling):
        return TRAVELLING, phase.waypoint_index, 0.0
    if isinstance(phase, Waiting):
        return WAITING, phase.waypoint_index, phase.remaining
    if isinstance(phase, Exiting):
        return EXITING, -1, 0.0
    if isinstance(phase, Done):
        return DONE, -1, 0.0
    raise TypeError(f"unknown phase {phase!r}")


def phase_from_code(code: int, waypoint: int, remaining: float) -> BehaviorPhase:
    if code == TRAVELLING:
        return Travelling(int(waypoint))
    if code == WAITING:
        return Waiting(float(remaining), int(waypoint))
    if code == EXITING:
        return Exiting()
    return Done()


PHASE_NAMES = {TRAVELLING: "travelling", WAITING: "waiting", EXITING: "exiting", DONE: "done"}


# --- records -----------------------------------------------------------------


@dataclass
class AgentState:
    id: int
    position: Vec2
    velocity: Vec2 = Vec2(0.0, 0.0)
    prev_velocity: Vec2 = Vec2(0.0, 0.0)
    radius: float = DEFAULT_RADIUS
    mass: float = 70.0
    pref_speed: float = DEFAULT_PREF_SPEED
    max_speed: float = DEFAULT_MAX_SPEED
    behavior: BehaviorPhase = field(default_factory=lambda: Travelling(0))

    def __post_init__(self):
        self.position = as_vec2(self.position)
        self.velocity = as_vec2(self.velocity)
        self.prev_velocity = as_vec2(self.prev_velocity)
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if not MIN_MASS <= self.mass <= MAX_MASS:
            raise ValueError(f"mass {self.mass} outside [{MIN_MASS}, {MAX_MASS}] kg")
        if not 0 < self.pref_speed <= self.max_speed:
            raise ValueError("need 0 < pref_speed <= max_speed")
        if self.velocity.norm() > self.max_speed + 1e-9:
            raise ValueError("velocity exceeds max_speed")


@dataclass(frozen=True)
class Rect:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError(f"degenerate rectangle {self}")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    def contains(self, p) -> bool:
        return self.xmin <= p[0] <= self.xmax and self.ymin <= p[1] <= self.ymax


@dataclass(frozen=True)
class Segment:
    a: Vec2
    b: Vec2

    def __post_init__(self):
        object.__setattr__(self, "a", as_vec2(self.a))
        object.__setattr__(self, "b", as_vec2(self.b))
        if (self.b - self.a).norm() == 0.0:
            raise ValueError("obstacle segment has zero length")


@dataclass(frozen=True)
class Waypoint:
    center: Vec2
    arrival_radius: float = 4.0
    mean_wait: float = 60.0


@dataclass
class VenueMap:
    obstacles: list[Segment]
    spawn_region: Rect
    waypoints: list[Waypoint]
    exit_line: Segment
    bounds: Rect
    spawn_spacing: float = 0.55

    def obstacle_array(self) -> np.ndarray:
        """Obstacles as an (M, 4) array of ``ax, ay, bx, by`` rows."""
        if not self.obstacles:
            return np.zeros((0, 4))
        return np.array([[s.a.x, s.a.y, s.b.x, s.b.y] for s in self.obstacles], dtype=np.float64)

    def waypoint_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        centers = np.array([[w.center[0], w.center[1]] for w in self.waypoints], dtype=np.float64)
        centers = centers.reshape(-1, 2)
        radii = np.array([w.arrival_radius for w in self.waypoints], dtype=np.float64)
        waits = np.array([w.mean_wait for w in self.waypoints], dtype=np.float64)
        return centers, radii, waits

    def exit_array(self) -> np.ndarray:
        e = self.exit_line
        return np.array([e.a.x, e.a.y, e.b.x, e.b.y], dtype=np.float64)


# --- small geometry kernels --------------------------------------------------


@njit(cache=True)
def closest_point_on_segment(px, py, ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    L2 = dx * dx + dy * dy
    t = ((px - ax) * dx + (py - ay) * dy) / L2
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    return ax + t * dx, ay + t * dy


@njit(cache=True)
def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


@njit(cache=True)
def segments_cross(p0x, p0y, p1x, p1y, ax, ay, bx, by):
    """True if segment p0-p1 intersects segment a-b (touching counts)."""
    d1 = _orient(ax, ay, bx, by, p0x, p0y)
    d2 = _orient(ax, ay, bx, by, p1x, p1y)
    d3 = _orient(p0x, p0y, p1x, p1y, ax, ay)
    d4 = _orient(p0x, p0y, p1x, p1y, bx, by)
    if ((d1 > 0.0 and d2 < 0.0) or (d1 < 0.0 and d2 > 0.0)) and (
        (d3 > 0.0 and d4 < 0.0) or (d3 < 0.0 and d4 > 0.0)
    ):
        return True
    # collinear / endpoint contact
    if d1 == 0.0 and _on_box(ax, ay, bx, by, p0x, p0y):
        return True
    if d2 == 0.0 and _on_box(ax, ay, bx, by, p1x, p1y):
        return True
    if d3 == 0.0 and _on_box(p0x, p0y, p1x, p1y, ax, ay):
        return True
    if d4 == 0.0 and _on_box(p0x, p0y, p1x, p1y, bx, by):
        return True
    return False


@njit(cache=True)
def _on_box(ax, ay, bx, by, px, py):
    return min(ax, bx) <= px <= max(ax, bx) and min(ay, by) <= py <= max(ay, by)


# --- uniform grid ------------------------------------------------------------
#
# CSR layout: cells are numbered column-major over (cx, cy) so that walking
# cell numbers in order visits cells sorted by coordinates; ``items`` holds
# agent rows in ascending row order within each cell.


@njit(cache=True)
def grid_build(pos, active, cell_size):
    n = pos.shape[0]
    inv = 1.0 / cell_size
    cx0 = 0
    cy0 = 0
    cx1 = -1
    cy1 = -1
    first = True
    cells = np.empty(n, dtype=np.int64)
    for i in range(n):
        if not active[i]:
            continue
        cx = int(math.floor(pos[i, 0] * inv))
        cy = int(math.floor(pos[i, 1] * inv))
        if first:
            cx0 = cx
            cx1 = cx
            cy0 = cy
            cy1 = cy
            first = False
        else:
            cx0 = min(cx0, cx)
            cx1 = max(cx1, cx)
            cy0 = min(cy0, cy)
            cy1 = max(cy1, cy)
    nx = cx1 - cx0 + 1
    ny = cy1 - cy0 + 1
    if first:
        nx = 0
        ny = 0
    starts = np.zeros(nx * ny + 1, dtype=np.int64)
    for i in range(n):
        if not active[i]:
            cells[i] = -1
            continue
        cx = int(math.floor(pos[i, 0] * inv))
        cy = int(math.floor(pos[i, 1] * inv))
        c = (cx - cx0) * ny + (cy - cy0)
        cells[i] = c
        starts[c + 1] += 1
    for c in range(nx * ny):
        starts[c + 1] += starts[c]
    fill = starts[:-1].copy()
    items = np.empty(starts[nx * ny], dtype=np.int64)
    for i in range(n):
        c = cells[i]
        if c < 0:
            continue
        items[fill[c]] = i
        fill[c] += 1
    meta = np.array([cx0, cy0, nx, ny], dtype=np.int64)
    return meta, starts, items


@njit(cache=True)
def grid_query(meta, starts, items, pos, cell_size, x, y, R, exclude, out_idx, out_d):
    """Collect rows within distance R of (x, y); returns the count written."""
    cx0 = meta[0]
    cy0 = meta[1]
    nx = meta[2]
    ny = meta[3]
    count = 0
    if nx == 0:
        return 0
    inv = 1.0 / cell_size
    ax = int(math.floor((x - R) * inv)) - cx0
    bx = int(math.floor((x + R) * inv)) - cx0
    ay = int(math.floor((y - R) * inv)) - cy0
    by = int(math.floor((y + R) * inv)) - cy0
    if ax < 0:
        ax = 0
    if ay < 0:
        ay = 0
    if bx > nx - 1:
        bx = nx - 1
    if by > ny - 1:
        by = ny - 1
    R2 = R * R
    for gx in range(ax, bx + 1):
        for gy in range(ay, by + 1):
            c = gx * ny + gy
            for k in range(starts[c], starts[c + 1]):
                j = items[k]
                if j == exclude:
                    continue
                dx = pos[j, 0] - x
                dy = pos[j, 1] - y
                d2 = dx * dx + dy * dy
                if d2 <= R2:
                    out_idx[count] = j
                    out_d[count] = math.sqrt(d2)
                    count += 1
    return count


@njit(cache=True)
def grid_knn(meta, starts, items, pos, cell_size, i, k, max_r, out_idx, out_d2):
    """Up to k nearest rows to row i within max_r, nearest first.

    Cells are scanned in growing Chebyshev rings and the scan stops once the
    k-th candidate is closer than anything an outer ring could hold.
    """
    cx0 = meta[0]
    cy0 = meta[1]
    nx = meta[2]
    ny = meta[3]
    if nx == 0 or k == 0:
        return 0
    x = pos[i, 0]
    y = pos[i, 1]
    inv = 1.0 / cell_size
    hx = int(math.floor(x * inv)) - cx0
    hy = int(math.floor(y * inv)) - cy0
    max_r2 = max_r * max_r
    count = 0
    max_ring = int(math.ceil(max_r * inv)) + 1
    # distance from the point to the edge of its own cell, the guaranteed
    # coverage after finishing ring r is (r + frac) * cell_size
    fx = x * inv - math.floor(x * inv)
    fy = y * inv - math.floor(y * inv)
    frac = min(min(fx, 1.0 - fx), min(fy, 1.0 - fy))
    for ring in range(max_ring + 1):
        for gx in range(hx - ring, hx + ring + 1):
            if gx < 0 or gx >= nx:
                continue
            edge_x = gx == hx - ring or gx == hx + ring
            step = 1 if edge_x else 2 * ring
            if step == 0:
                step = 1
            gy = hy - ring
            while gy <= hy + ring:
                if 0 <= gy < ny:
                    c = gx * ny + gy
                    for s in range(starts[c], starts[c + 1]):
                        j = items[s]
                        if j == i:
                            continue
                        dx = pos[j, 0] - x
                        dy = pos[j, 1] - y
                        d2 = dx * dx + dy * dy
                        if d2 > max_r2:
                            continue
                        if count < k:
                            pos_ins = count
                            count += 1
                        elif d2 < out_d2[k - 1] or (d2 == out_d2[k - 1] and j < out_idx[k - 1]):
                            pos_ins = k - 1
                        else:
                            continue
                        # insertion keeps (d2, row) ascending
                        while pos_ins > 0 and (
                            out_d2[pos_ins - 1] > d2
                            or (out_d2[pos_ins - 1] == d2 and out_idx[pos_ins - 1] > j)
                        ):
                            out_d2[pos_ins] = out_d2[pos_ins - 1]
                            out_idx[pos_ins] = out_idx[pos_ins - 1]
                            pos_ins -= 1
                        out_d2[pos_ins] = d2
                        out_idx[pos_ins] = j
                gy += step
        covered = (ring + frac) * cell_size
        if count == k and out_d2[k - 1] <= covered * covered:
            break
        if covered >= max_r:
            break
    return count


# --- public index ------------------------------------------------------------


class SpatialIndex:
    """Uniform grid over agent positions.

    Cells are keyed by ``(floor(x / cell_size), floor(y / cell_size))``.
    Iteration order is deterministic: cells sorted by coordinates, ids in
    ascending row order inside each cell.
    """

    def __init__(self, positions: np.ndarray, ids: np.ndarray, cell_size: float,
                 active: np.ndarray | None = None):
        if not cell_size > 0:
            raise ValueError("cell_size must be positive")
        positions = np.ascontiguousarray(positions, dtype=np.float64).reshape(-1, 2)
        if not np.all(np.isfinite(positions)):
            raise ValueError("non-finite agent position")
        self.cell_size = float(cell_size)
        self.positions = positions
        self.ids = np.asarray(ids, dtype=np.int64)
        if active is None:
            active = np.ones(len(positions), dtype=np.bool_)
        self.active = np.asarray(active, dtype=np.bool_)
        self.meta, self.starts, self.items = grid_build(positions, self.active, self.cell_size)

    def __len__(self) -> int:
        return len(self.items)

    @property
    def cells(self) -> dict[tuple[int, int], list[int]]:
        cx0, cy0, nx, ny = (int(v) for v in self.meta)
        out: dict[tuple[int, int], list[int]] = {}
        for c in range(nx * ny):
            lo, hi = self.starts[c], self.starts[c + 1]
            if hi > lo:
                key = (cx0 + c // ny, cy0 + c % ny)
                out[key] = [int(self.ids[j]) for j in self.items[lo:hi]]
        return out

    def all_ids(self) -> list[int]:
        return [int(self.ids[j]) for j in self.items]

    def row_of(self, agent_id: int) -> int:
        hits = np.nonzero(self.ids == agent_id)[0]
        return int(hits[0]) if len(hits) else -1

    def query(self, center, R: float, exclude_row: int = -1) -> tuple[np.ndarray, np.ndarray]:
        """Rows and distances of agents within R of ``center``."""
        n = len(self.positions)
        idx = np.empty(n, dtype=np.int64)
        dist = np.empty(n, dtype=np.float64)
        m = grid_query(self.meta, self.starts, self.items, self.positions, self.cell_size,
                       float(center[0]), float(center[1]), float(R), exclude_row, idx, dist)
        return idx[:m], dist[:m]


def _agent_arrays(agents: Sequence[AgentState]) -> tuple[np.ndarray, np.ndarray]:
    pos = np.array([[a.position[0], a.position[1]] for a in agents], dtype=np.float64).reshape(-1, 2)
    ids = np.array([a.id for a in agents], dtype=np.int64)
    return pos, ids


def index_build(agents: Sequence[AgentState], cell_size: float) -> SpatialIndex:
    pos, ids = _agent_arrays(agents)
    return SpatialIndex(pos, ids, cell_size)


def neighbors_within(index: SpatialIndex, agents: Sequence[AgentState] | None, center, R: float,
                     exclude: int | None = None) -> list[tuple[int, float]]:
    """Agents whose centre lies in the closed disc of radius R around ``center``.

    ``agents`` is accepted for symmetry with the index builder; positions are
    read from the snapshot the index was built on.
    """
    if not R > 0:
        raise ValueError("R must be positive")
    exclude_row = -1 if exclude is None else index.row_of(exclude)
    rows, dist = index.query(center, R, exclude_row)
    return [(int(index.ids[r]), float(d)) for r, d in zip(rows, dist)]
