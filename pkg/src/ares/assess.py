"""Stampede assessment: crowd pressure, physical force and neighbour density."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .core import MAX_MASS, MIN_MASS, AgentState, SpatialIndex, Vec2, grid_build, grid_query
from .pedmodel import World


class Method(enum.IntEnum):
    PRESSURE = 0
    FORCE = 1
    DENSITY = 2

    @classmethod
    def parse(cls, name: "str | Method") -> "Method":
        if isinstance(name, Method):
            return name
        try:
            return cls[str(name).strip().upper()]
        except KeyError:
            raise ValueError(f"unknown assessment method {name!r}") from None


@dataclass(frozen=True)
class AssessmentConfig:
    method: Method = Method.PRESSURE
    R: float = 1.0
    pressure_threshold: float = 0.04
    turbulence_threshold: float = 0.02
    force_threshold: float = 4500.0
    density_threshold: float = 7.0
    weight_cutoff_radius: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "method", Method.parse(self.method))
        if not self.R > 0:
            raise ValueError("R must be positive")
        if min(self.pressure_threshold, self.turbulence_threshold, self.force_threshold,
               self.density_threshold) <= 0:
            raise ValueError("thresholds must be positive")
        if not self.turbulence_threshold < self.pressure_threshold:
            raise ValueError("turbulence threshold must be below the pressure threshold")

    @property
    def cutoff(self) -> float:
        return 3.0 * self.R if self.weight_cutoff_radius is None else float(self.weight_cutoff_radius)

    @property
    def threshold(self) -> float:
        return {Method.PRESSURE: self.pressure_threshold, Method.FORCE: self.force_threshold,
                Method.DENSITY: self.density_threshold}[self.method]

    @property
    def uses_radius(self) -> bool:
        return self.method != Method.FORCE

    def to_array(self) -> np.ndarray:
        return np.array([float(self.method), self.R, self.threshold, self.turbulence_threshold, self.cutoff])


@dataclass(frozen=True)
class DetectionReport:
    stampede: bool
    turbulence: bool
    max_value: float
    location: Vec2
    step: int
    agent_id: int = -1


# --- formulas ----------------------------------------------------------------


@njit(cache=True)
def gauss_weight(d, R):
    """(1 / (pi R^2)) exp(-d^2 / R^2)."""
    return math.exp(-(d * d) / (R * R)) / (math.pi * R * R)


@njit(cache=True)
def _moments(pos, vel, rows, n, x, y, R):
    """Weight sum, weighted mean velocity and weighted velocity variance."""
    s0 = 0.0
    sx = 0.0
    sy = 0.0
    for k in range(n):
        j = rows[k]
        dx = pos[j, 0] - x
        dy = pos[j, 1] - y
        f = gauss_weight(math.sqrt(dx * dx + dy * dy), R)
        s0 += f
        sx += f * vel[j, 0]
        sy += f * vel[j, 1]
    if s0 == 0.0:
        return 0.0, np.nan, np.nan, np.nan
    mx = sx / s0
    my = sy / s0
    sv = 0.0
    for k in range(n):
        j = rows[k]
        dx = pos[j, 0] - x
        dy = pos[j, 1] - y
        f = gauss_weight(math.sqrt(dx * dx + dy * dy), R)
        ex = vel[j, 0] - mx
        ey = vel[j, 1] - my
        sv += f * (ex * ex + ey * ey)
    return s0, mx, my, sv / s0


def physical_force(mass: float, v_prev, v_cur, dt: float) -> float:
    """m * |v_cur - v_prev| / dt."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return mass * math.hypot(v_cur[0] - v_prev[0], v_cur[1] - v_prev[1]) / dt


def sample_mass(rng: np.random.Generator, size=None, mean: float = 70.0, sd: float = 10.0,
                lo: float = MIN_MASS, hi: float = MAX_MASS):
    """Normal(mean, sd) truncated to [lo, hi] by redrawing."""
    n = 1 if size is None else int(size)
    out = rng.normal(mean, sd, n)
    bad = (out < lo) | (out > hi)
    while bad.any():
        out[bad] = rng.normal(mean, sd, int(bad.sum()))
        bad = (out < lo) | (out > hi)
    return float(out[0]) if size is None else out


def neighbor_density(L: int, R: float) -> float:
    if not R > 0:
        raise ValueError("R must be positive")
    if L < 0:
        raise ValueError("L must be non-negative")
    return L / (math.pi * R * R)


# --- snapshot helpers --------------------------------------------------------


def _as_world(snapshot) -> World:
    if isinstance(snapshot, World):
        return snapshot
    return World.from_agents(list(snapshot))


def _rows_near(world: World, index: SpatialIndex | None, r, radius: float) -> np.ndarray:
    if index is None or index.cell_size <= 0:
        index = SpatialIndex(world.pos, world.ids, radius, world.active)
    rows, _ = index.query(r, radius)
    return rows


def _local_moments(snapshot, index, r, R, cutoff=None):
    w = _as_world(snapshot)
    cutoff = 3.0 * R if cutoff is None else cutoff
    rows = _rows_near(w, index, r, cutoff)
    return _moments(w.pos, w.vel, rows, len(rows), float(r[0]), float(r[1]), float(R))


def local_density(snapshot, index: SpatialIndex | None, r, R: float, cutoff: float | None = None) -> float:
    """Gaussian-weighted agent density at ``r``; agents beyond ``cutoff`` (3R) are ignored."""
    if not R > 0:
        raise ValueError("R must be positive")
    return float(_local_moments(snapshot, index, r, R, cutoff)[0])


def local_velocity(snapshot, index: SpatialIndex | None, r, R: float, cutoff: float | None = None) -> Vec2:
    s0, mx, my, _ = _local_moments(snapshot, index, r, R, cutoff)
    if s0 == 0.0:
        raise ValueError("no agents within the cutoff radius")
    return Vec2(float(mx), float(my))


def velocity_variance(snapshot, index: SpatialIndex | None, r, R: float, cutoff: float | None = None) -> float:
    s0, _, _, var = _local_moments(snapshot, index, r, R, cutoff)
    if s0 == 0.0:
        raise ValueError("no agents within the cutoff radius")
    return float(var)


def crowd_pressure(snapshot, index: SpatialIndex | None, r, R: float, cutoff: float | None = None) -> float:
    s0, _, _, var = _local_moments(snapshot, index, r, R, cutoff)
    if s0 == 0.0:
        raise ValueError("no agents within the cutoff radius")
    return float(s0 * var)


# --- whole-snapshot evaluation -----------------------------------------------


@njit(cache=True)
def evaluate_kernel(pos, vel, prev_vel, mass, active, acfg, dt):
    """Returns (stampede, turbulence, max_value, argmax_row)."""
    method = int(acfg[0])
    R = acfg[1]
    thr = acfg[2]
    turb = acfg[3]
    cutoff = acfg[4]
    n = pos.shape[0]
    best = -1.0
    arg = -1
    if method == 1:
        for i in range(n):
            if not active[i]:
                continue
            dx = vel[i, 0] - prev_vel[i, 0]
            dy = vel[i, 1] - prev_vel[i, 1]
            f = mass[i] * math.sqrt(dx * dx + dy * dy) / dt
            if f > best:
                best = f
                arg = i
        return best >= thr, False, max(best, 0.0), arg
    radius = cutoff if method == 0 else R
    meta, starts, items = grid_build(pos, active, radius)
    rows = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    for i in range(n):
        if not active[i]:
            continue
        if method == 0:
            m = grid_query(meta, starts, items, pos, radius, pos[i, 0], pos[i, 1], radius, -1, rows, dist)
            s0, mx, my, var = _moments(pos, vel, rows, m, pos[i, 0], pos[i, 1], R)
            value = s0 * var
        else:
            m = grid_query(meta, starts, items, pos, radius, pos[i, 0], pos[i, 1], radius, i, rows, dist)
            value = m / (math.pi * R * R)
        if value > best:
            best = value
            arg = i
    if arg < 0:
        return False, False, 0.0, -1
    return best >= thr, method == 0 and best >= turb, best, arg


def evaluate(snapshot, index: SpatialIndex | None, cfg: AssessmentConfig, step: int = 0,
             dt: float = 0.1) -> DetectionReport:
    """Evaluate one snapshot; ``dt`` is the step length used by the force method.

    ``index`` is accepted for API symmetry; the kernel builds its own grid
    with cell size matched to the query radius.
    """
    w = _as_world(snapshot)
    hit, turb, value, arg = evaluate_kernel(w.pos, w.vel, w.prev_vel, w.mass, w.active, cfg.to_array(), dt)
    return _report(w, bool(hit), bool(turb), float(value), int(arg), step)


def _report(w: World, hit: bool, turb: bool, value: float, arg: int, step: int) -> DetectionReport:
    if arg < 0:
        return DetectionReport(False, False, 0.0, Vec2(math.nan, math.nan), step)
    return DetectionReport(hit, turb, value, Vec2(*w.pos[arg]), step, int(w.ids[arg]))


def agents_world(agents: Sequence[AgentState]) -> World:
    return World.from_agents(agents)
