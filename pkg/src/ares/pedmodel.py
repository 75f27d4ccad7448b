"""Pedestrian stepping model.

A velocity-obstacle crowd model in the ORCA/PedVO family:

* a preferred velocity from the agent's behaviour phase, with its per-step
  change limited by ``max_pref_accel``;
* a stride-length speed ceiling from the clear distance ahead (the
  fundamental-diagram mechanism);
* reciprocal velocity-obstacle half-planes against the nearest neighbours and
  nearby wall segments, resolved by an incremental 2-D linear program with
  the usual least-violation fallback;
* explicit Euler position update and the waypoint/wait/exit state machine.

The hot path is a numba kernel over struct-of-arrays state; the Python
functions below expose the individual pieces for inspection and testing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np
from numba import njit

from . import core
from .core import (
    DONE,
    EXITING,
    TRAVELLING,
    WAITING,
    AgentState,
    VenueMap,
    Vec2,
    closest_point_on_segment,
    grid_build,
    grid_knn,
    phase_code,
    phase_from_code,
    segments_cross,
)

RVO_EPS = 1e-12
CONE_COS = math.cos(math.radians(45.0))


@dataclass(frozen=True)
class PedModelConfig:
    factor: float = 1.57
    buffer: float = 0.9
    tau: float = 3.0
    tau_obst: float = 0.1
    turning_bias: float = 1.0
    density_aware: bool = False
    dt: float = 0.1
    pref_speed: float = 1.04
    max_speed: float = 2.0
    max_pref_accel: float = 5.0
    neighbor_limit_radius: float = 5.0
    max_neighbors: int = 10
    grid_cell: float = 1.0

    def __post_init__(self):
        if not (self.dt > 0 and self.tau > 0 and self.tau_obst > 0):
            raise ValueError("dt, tau and tau_obst must be positive")
        if not 0 < self.pref_speed <= self.max_speed:
            raise ValueError("need 0 < pref_speed <= max_speed")
        if self.turning_bias <= 0:
            raise ValueError("turning_bias must be positive")
        if self.max_neighbors < 0 or self.neighbor_limit_radius <= 0 or self.grid_cell <= 0:
            raise ValueError("bad neighbour settings")
        if self.density_aware:
            raise NotImplementedError("density-aware preferred speed is not modelled")

    def to_array(self) -> np.ndarray:
        return np.array([
            self.factor, self.buffer, self.tau, self.tau_obst, self.turning_bias, self.dt,
            self.max_pref_accel, self.neighbor_limit_radius, float(self.max_neighbors), self.grid_cell,
        ], dtype=np.float64)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


# indices into PedModelConfig.to_array()
C_FACTOR, C_BUFFER, C_TAU, C_TAU_OBST, C_TURN, C_DT, C_ACCEL, C_NRADIUS, C_KMAX, C_CELL = range(10)


@dataclass(frozen=True)
class HalfPlane:
    """Permitted velocities v satisfy (v - point) . normal >= 0."""
    point: Vec2
    normal: Vec2

    def __post_init__(self):
        if abs(math.hypot(*self.normal) - 1.0) > 1e-9:
            raise ValueError("half-plane normal must be a unit vector")

    def contains(self, v, tol: float = 0.0) -> bool:
        return (v[0] - self.point[0]) * self.normal[0] + (v[1] - self.point[1]) * self.normal[1] >= -tol


# --- world state -------------------------------------------------------------


class World:
    """Struct-of-arrays crowd state for one simulation."""

    def __init__(self, positions, radius=core.DEFAULT_RADIUS, mass=70.0,
                 pref_speed=core.DEFAULT_PREF_SPEED, max_speed=core.DEFAULT_MAX_SPEED, seed: int = 0):
        pos = np.ascontiguousarray(positions, dtype=np.float64).reshape(-1, 2).copy()
        n = len(pos)
        if not np.all(np.isfinite(pos)):
            raise ValueError("non-finite agent position")
        self.pos = pos
        self.vel = np.zeros((n, 2))
        self.prev_vel = np.zeros((n, 2))
        self.pref = np.zeros((n, 2))
        self.radius = np.broadcast_to(np.asarray(radius, dtype=np.float64), (n,)).copy()
        self.mass = np.broadcast_to(np.asarray(mass, dtype=np.float64), (n,)).copy()
        self.pref_speed = np.broadcast_to(np.asarray(pref_speed, dtype=np.float64), (n,)).copy()
        self.max_speed = np.broadcast_to(np.asarray(max_speed, dtype=np.float64), (n,)).copy()
        self.phase = np.full(n, TRAVELLING, dtype=np.int64)
        self.waypoint = np.zeros(n, dtype=np.int64)
        self.remaining = np.zeros(n)
        self.ids = np.arange(n, dtype=np.int64)
        self.seed = int(seed)
        self.step_count = 0

    def __len__(self) -> int:
        return len(self.pos)

    @classmethod
    def from_agents(cls, agents: Sequence[AgentState], seed: int = 0) -> "World":
        w = cls(np.array([[a.position.x, a.position.y] for a in agents]).reshape(-1, 2), seed=seed)
        for i, a in enumerate(agents):
            w.vel[i] = a.velocity
            w.prev_vel[i] = a.prev_velocity
            w.radius[i] = a.radius
            w.mass[i] = a.mass
            w.pref_speed[i] = a.pref_speed
            w.max_speed[i] = a.max_speed
            w.ids[i] = a.id
            w.phase[i], w.waypoint[i], w.remaining[i] = phase_code(a.behavior)
        return w

    def agents(self) -> list[AgentState]:
        out = []
        for i in range(len(self)):
            out.append(AgentState(
                id=int(self.ids[i]),
                position=Vec2(*self.pos[i]),
                velocity=Vec2(*self.vel[i]),
                prev_velocity=Vec2(*self.prev_vel[i]),
                radius=float(self.radius[i]),
                mass=float(self.mass[i]),
                pref_speed=float(self.pref_speed[i]),
                max_speed=float(self.max_speed[i]),
                behavior=phase_from_code(int(self.phase[i]), int(self.waypoint[i]), float(self.remaining[i])),
            ))
        return out

    @property
    def active(self) -> np.ndarray:
        return self.phase != DONE

    def copy(self) -> "World":
        w = World.__new__(World)
        for k, v in self.__dict__.items():
            setattr(w, k, v.copy() if isinstance(v, np.ndarray) else v)
        return w

    def start_exiting_if_no_waypoints(self, venue: VenueMap) -> None:
        if not venue.waypoints:
            self.phase[self.phase == TRAVELLING] = EXITING


# --- counter-based random draws ---------------------------------------------



@njit(cache=True)
def _splitmix64(x):
    x = x + np.uint64(0x9E3779B97F4A7C15)
    z = x
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def stream_uniform(seed, agent_id, step):
    """Uniform [0, 1) draw keyed by (seed, agent id, step)."""
    h = _splitmix64(np.uint64(seed))
    h = _splitmix64(h ^ np.uint64(agent_id))
    h = _splitmix64(h ^ np.uint64(step))
    return float(h >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def wait_duration(seed, agent_id, step, mean):
    u = stream_uniform(seed, agent_id, step)
    return -mean * math.log1p(-u)


# --- preferred velocity ------------------------------------------------------


@njit(cache=True)
def _raw_preferred(px, py, phase, wp, speed, wp_c, exitl):
    if phase == WAITING or phase == DONE:
        return 0.0, 0.0
    if phase == TRAVELLING:
        tx = wp_c[wp, 0]
        ty = wp_c[wp, 1]
    else:
        tx, ty = closest_point_on_segment(px, py, exitl[0], exitl[1], exitl[2], exitl[3])
    dx = tx - px
    dy = ty - py
    d = math.sqrt(dx * dx + dy * dy)
    if d < 1e-12:
        return 0.0, 0.0
    return dx / d * speed, dy / d * speed


@njit(cache=True)
def _clamp_change(nx, ny, ox, oy, max_change):
    dx = nx - ox
    dy = ny - oy
    d = math.sqrt(dx * dx + dy * dy)
    if d <= max_change or d == 0.0:
        return nx, ny
    s = max_change / d
    return ox + dx * s, oy + dy * s


# --- stride cap --------------------------------------------------------------


@njit(cache=True)
def _stride_cap(i, pos, vel, radius, max_speed, nbr, n_nbr, dirx, diry, factor, buf):
    """Speed ceiling from the clear gap to the nearest neighbour ahead of agent i.

    Only agents count as blockers: walls are already handled by their
    half-planes, and capping on them stops agents from sliding along a face.
    Neighbours walking against us are skipped too; two people meeting head on
    step aside rather than both shuffling to a halt.
    """
    norm = math.sqrt(dirx * dirx + diry * diry)
    if norm < 1e-12:
        return max_speed
    ux = dirx / norm
    uy = diry / norm
    px = pos[i, 0]
    py = pos[i, 1]
    ri = radius[i]
    d_free = np.inf
    for s in range(n_nbr):
        j = nbr[s]
        if vel[j, 0] * ux + vel[j, 1] * uy < -1e-9:
            continue
        rx = pos[j, 0] - px
        ry = pos[j, 1] - py
        dist = math.sqrt(rx * rx + ry * ry)
        if dist < 1e-12:
            d_free = min(d_free, -ri - radius[j])
            continue
        if (rx * ux + ry * uy) >= CONE_COS * dist - 1e-12:
            d_free = min(d_free, dist - ri - radius[j])
    if d_free == np.inf:
        return max_speed
    cap = (d_free - buf * ri) / factor
    if cap < 0.0:
        cap = 0.0
    return min(cap, max_speed)


# --- half-planes (RVO2 line convention: point + direction, permitted side on the left)


@njit(cache=True)
def _agent_line(px, py, vx, vy, r, opx, opy, ovx, ovy, orr, tau, dt, tiebreak):
    rpx = opx - px
    rpy = opy - py
    rvx = vx - ovx
    rvy = vy - ovy
    dist_sq = rpx * rpx + rpy * rpy
    comb = r + orr
    comb_sq = comb * comb
    inv_tau = 1.0 / tau
    if dist_sq > comb_sq:
        wx = rvx - inv_tau * rpx
        wy = rvy - inv_tau * rpy
        w_len_sq = wx * wx + wy * wy
        dot1 = wx * rpx + wy * rpy
        if dot1 < 0.0 and dot1 * dot1 > comb_sq * w_len_sq:
            w_len = math.sqrt(w_len_sq)
            ux_ = wx / w_len
            uy_ = wy / w_len
            dirx = uy_
            diry = -ux_
            s = comb * inv_tau - w_len
            ux = s * ux_
            uy = s * uy_
        else:
            leg = math.sqrt(dist_sq - comb_sq)
            if rpx * wy - rpy * wx > 0.0:
                dirx = (rpx * leg - rpy * comb) / dist_sq
                diry = (rpx * comb + rpy * leg) / dist_sq
            else:
                dirx = -(rpx * leg + rpy * comb) / dist_sq
                diry = -(-rpx * comb + rpy * leg) / dist_sq
            dot2 = rvx * dirx + rvy * diry
            ux = dot2 * dirx - rvx
            uy = dot2 * diry - rvy
    else:
        inv_dt = 1.0 / dt
        wx = rvx - inv_dt * rpx
        wy = rvy - inv_dt * rpy
        w_len = math.sqrt(wx * wx + wy * wy)
        if w_len < 1e-12:
            # coincident centres with equal velocities: separate along a fixed direction
            wx = math.cos(tiebreak)
            wy = math.sin(tiebreak)
            w_len = 1.0
            s = comb * inv_dt
        else:
            s = comb * inv_dt - w_len
        ux_ = wx / w_len
        uy_ = wy / w_len
        dirx = uy_
        diry = -ux_
        ux = s * ux_
        uy = s * uy_
    return vx + 0.5 * ux, vy + 0.5 * uy, dirx, diry


@njit(cache=True)
def _obstacle_line(px, py, r, ax, ay, bx, by, tau_obst, dt):
    """Half-plane keeping the agent clear of segment a-b for tau_obst seconds.

    Built on the segment's closest point: since distance to a segment is
    convex along any straight path, v . n >= -(d - r) / tau_obst keeps the
    gap non-negative over the whole horizon.
    """
    cx, cy = closest_point_on_segment(px, py, ax, ay, bx, by)
    nx = px - cx
    ny = py - cy
    d = math.sqrt(nx * nx + ny * ny)
    if d < 1e-12:
        ex = bx - ax
        ey = by - ay
        el = math.sqrt(ex * ex + ey * ey)
        nx = -ey / el
        ny = ex / el
    else:
        nx /= d
        ny /= d
    if d > r:
        off = -(d - r) / tau_obst
    else:
        off = (r - d) / dt
    # permitted side is left of direction; normal = left perpendicular of direction
    return off * nx, off * ny, ny, -nx


# --- linear program ----------------------------------------------------------


@njit(cache=True)
def _det(ax, ay, bx, by):
    return ax * by - ay * bx


@njit(cache=True)
def _lp1(lines, line_no, radius, optx, opty, dir_opt, w00, w01, w11, rx, ry):
    px = lines[line_no, 0]
    py = lines[line_no, 1]
    dx = lines[line_no, 2]
    dy = lines[line_no, 3]
    dot = px * dx + py * dy
    disc = dot * dot + radius * radius - (px * px + py * py)
    if disc < 0.0:
        return False, rx, ry
    sq = math.sqrt(disc)
    t_left = -dot - sq
    t_right = -dot + sq
    for i in range(line_no):
        den = _det(dx, dy, lines[i, 2], lines[i, 3])
        num = _det(lines[i, 2], lines[i, 3], px - lines[i, 0], py - lines[i, 1])
        if abs(den) <= RVO_EPS:
            if num < 0.0:
                return False, rx, ry
            continue
        t = num / den
        if den >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)
        if t_left > t_right:
            return False, rx, ry
    if dir_opt:
        if optx * dx + opty * dy > 0.0:
            t = t_right
        else:
            t = t_left
    else:
        # minimise (p + t d - opt)^T W (p + t d - opt) along the line
        gx = px - optx
        gy = py - opty
        wdx = w00 * dx + w01 * dy
        wdy = w01 * dx + w11 * dy
        t = -(gx * wdx + gy * wdy) / (dx * wdx + dy * wdy)
        if t < t_left:
            t = t_left
        elif t > t_right:
            t = t_right
    return True, px + t * dx, py + t * dy


@njit(cache=True)
def _lp2(lines, n_lines, radius, optx, opty, dir_opt, w00, w01, w11):
    if dir_opt:
        rx = optx * radius
        ry = opty * radius
    elif optx * optx + opty * opty > radius * radius:
        s = radius / math.sqrt(optx * optx + opty * opty)
        rx = optx * s
        ry = opty * s
    else:
        rx = optx
        ry = opty
    for i in range(n_lines):
        if _det(lines[i, 2], lines[i, 3], lines[i, 0] - rx, lines[i, 1] - ry) > 0.0:
            ok, nx, ny = _lp1(lines, i, radius, optx, opty, dir_opt, w00, w01, w11, rx, ry)
            if not ok:
                return i, rx, ry
            rx = nx
            ry = ny
    return n_lines, rx, ry


@njit(cache=True)
def _lp3(lines, n_lines, n_obst, begin, radius, rx, ry, proj):
    distance = 0.0
    for i in range(begin, n_lines):
        if _det(lines[i, 2], lines[i, 3], lines[i, 0] - rx, lines[i, 1] - ry) > distance:
            for k in range(n_obst):
                for c in range(4):
                    proj[k, c] = lines[k, c]
            n_proj = n_obst
            for j in range(n_obst, i):
                det = _det(lines[i, 2], lines[i, 3], lines[j, 2], lines[j, 3])
                if abs(det) <= RVO_EPS:
                    if lines[i, 2] * lines[j, 2] + lines[i, 3] * lines[j, 3] > 0.0:
                        continue
                    lpx = 0.5 * (lines[i, 0] + lines[j, 0])
                    lpy = 0.5 * (lines[i, 1] + lines[j, 1])
                else:
                    s = _det(lines[j, 2], lines[j, 3], lines[i, 0] - lines[j, 0], lines[i, 1] - lines[j, 1]) / det
                    lpx = lines[i, 0] + s * lines[i, 2]
                    lpy = lines[i, 1] + s * lines[i, 3]
                ddx = lines[j, 2] - lines[i, 2]
                ddy = lines[j, 3] - lines[i, 3]
                dl = math.sqrt(ddx * ddx + ddy * ddy)
                proj[n_proj, 0] = lpx
                proj[n_proj, 1] = lpy
                proj[n_proj, 2] = ddx / dl
                proj[n_proj, 3] = ddy / dl
                n_proj += 1
            fail, nx, ny = _lp2(proj, n_proj, radius, -lines[i, 3], lines[i, 2], True, 1.0, 0.0, 1.0)
            if fail == n_proj:
                rx = nx
                ry = ny
            distance = _det(lines[i, 2], lines[i, 3], lines[i, 0] - rx, lines[i, 1] - ry)
    return rx, ry


@njit(cache=True)
def _metric(prefx, prefy, turning_bias):
    """Weights for the LP objective: 1 along the preferred heading, turning_bias across it."""
    n = math.sqrt(prefx * prefx + prefy * prefy)
    if n < 1e-12 or turning_bias == 1.0:
        return 1.0, 0.0, 1.0
    px = -prefy / n
    py = prefx / n
    k = turning_bias - 1.0
    return 1.0 + k * px * px, k * px * py, 1.0 + k * py * py


@njit(cache=True)
def lp_solve(lines, n_lines, n_obst, prefx, prefy, max_speed, turning_bias, proj):
    w00, w01, w11 = _metric(prefx, prefy, turning_bias)
    fail, rx, ry = _lp2(lines, n_lines, max_speed, prefx, prefy, False, w00, w01, w11)
    if fail < n_lines:
        rx, ry = _lp3(lines, n_lines, n_obst, fail, max_speed, rx, ry, proj)
    # guard against round-off pushing |v| a hair above the disc
    s2 = rx * rx + ry * ry
    if s2 > max_speed * max_speed:
        s = max_speed / math.sqrt(s2)
        rx *= s
        ry *= s
    return rx, ry


# --- per-agent velocity and the step kernel ----------------------------------


@njit(cache=True)
def _agent_velocity(i, pos, vel, radius, max_speed, nbr, n_nbr, obst, prefx, prefy, cfg, lines, proj):
    tau = cfg[C_TAU]
    tau_obst = cfg[C_TAU_OBST]
    dt = cfg[C_DT]
    px = pos[i, 0]
    py = pos[i, 1]
    r = radius[i]
    vmax = max_speed[i]
    reach = r + vmax * tau_obst + 1e-9
    m = 0
    for s in range(obst.shape[0]):
        cx, cy = closest_point_on_segment(px, py, obst[s, 0], obst[s, 1], obst[s, 2], obst[s, 3])
        if (px - cx) ** 2 + (py - cy) ** 2 >= reach * reach:
            continue
        lpx, lpy, ldx, ldy = _obstacle_line(px, py, r, obst[s, 0], obst[s, 1], obst[s, 2], obst[s, 3], tau_obst, dt)
        lines[m, 0] = lpx
        lines[m, 1] = lpy
        lines[m, 2] = ldx
        lines[m, 3] = ldy
        m += 1
    n_obst = m
    for s in range(n_nbr):
        j = nbr[s]
        tb = 2.399963 * (min(i, j) * 7 + max(i, j))
        if j < i:
            tb += math.pi
        lpx, lpy, ldx, ldy = _agent_line(px, py, vel[i, 0], vel[i, 1], r, pos[j, 0], pos[j, 1],
                                         vel[j, 0], vel[j, 1], radius[j], tau, dt, tb)
        lines[m, 0] = lpx
        lines[m, 1] = lpy
        lines[m, 2] = ldx
        lines[m, 3] = ldy
        m += 1
    vx, vy = lp_solve(lines, m, n_obst, prefx, prefy, vmax, cfg[C_TURN], proj)
    # never let a centre cross a wall, whatever the LP returned
    for s in range(obst.shape[0]):
        if segments_cross(px, py, px + vx * dt, py + vy * dt, obst[s, 0], obst[s, 1], obst[s, 2], obst[s, 3]):
            vx = 0.0
            vy = 0.0
            break
    return vx, vy


@njit(cache=True)
def step_kernel(pos, vel, prev_vel, pref, radius, pref_speed, max_speed, phase, wp, remaining, ids,
                obst, wp_c, wp_r, wp_wait, exitl, cfg, seed, step_no):
    """Advance every active agent by one step in place.

    All new velocities are computed from the current snapshot before any
    position is committed.
    """
    n = pos.shape[0]
    dt = cfg[C_DT]
    kmax = int(cfg[C_KMAX])
    cell = cfg[C_CELL]
    active = np.empty(n, dtype=np.bool_)
    for i in range(n):
        active[i] = phase[i] != DONE
    meta, starts, items = grid_build(pos, active, cell)
    nbr = np.empty(max(kmax, 1), dtype=np.int64)
    nbr_d2 = np.empty(max(kmax, 1), dtype=np.float64)
    lines = np.empty((obst.shape[0] + kmax + 1, 4))
    proj = np.empty((obst.shape[0] + kmax + 1, 4))
    new_vel = np.zeros((n, 2))
    new_pref = np.zeros((n, 2))
    max_change = cfg[C_ACCEL] * dt
    n_wp = wp_c.shape[0]
    for i in range(n):
        if not active[i]:
            continue
        rpx, rpy = _raw_preferred(pos[i, 0], pos[i, 1], phase[i], wp[i], pref_speed[i], wp_c, exitl)
        prx, pry = _clamp_change(rpx, rpy, pref[i, 0], pref[i, 1], max_change)
        k = grid_knn(meta, starts, items, pos, cell, i, kmax, cfg[C_NRADIUS], nbr, nbr_d2)
        sp = math.sqrt(prx * prx + pry * pry)
        if sp > 0.0:
            cap = _stride_cap(i, pos, vel, radius, max_speed[i], nbr, k, prx, pry, cfg[C_FACTOR], cfg[C_BUFFER])
            if sp > cap:
                prx *= cap / sp
                pry *= cap / sp
        new_pref[i, 0] = prx
        new_pref[i, 1] = pry
        vx, vy = _agent_velocity(i, pos, vel, radius, max_speed, nbr, k, obst, prx, pry, cfg, lines, proj)
        new_vel[i, 0] = vx
        new_vel[i, 1] = vy
    for i in range(n):
        if not active[i]:
            continue
        prev_vel[i, 0] = vel[i, 0]
        prev_vel[i, 1] = vel[i, 1]
        vel[i, 0] = new_vel[i, 0]
        vel[i, 1] = new_vel[i, 1]
        pref[i, 0] = new_pref[i, 0]
        pref[i, 1] = new_pref[i, 1]
        ox = pos[i, 0]
        oy = pos[i, 1]
        pos[i, 0] = ox + vel[i, 0] * dt
        pos[i, 1] = oy + vel[i, 1] * dt
        ph = phase[i]
        if ph == TRAVELLING:
            w = wp[i]
            dx = pos[i, 0] - wp_c[w, 0]
            dy = pos[i, 1] - wp_c[w, 1]
            if dx * dx + dy * dy <= wp_r[w] * wp_r[w]:
                phase[i] = WAITING
                remaining[i] = wait_duration(seed, ids[i], step_no, wp_wait[w])
        elif ph == WAITING:
            remaining[i] -= dt
            if remaining[i] <= 1e-9:
                remaining[i] = 0.0
                if wp[i] + 1 < n_wp:
                    wp[i] += 1
                    phase[i] = TRAVELLING
                else:
                    phase[i] = EXITING
        elif ph == EXITING:
            if segments_cross(ox, oy, pos[i, 0], pos[i, 1], exitl[0], exitl[1], exitl[2], exitl[3]):
                phase[i] = DONE
                vel[i, 0] = 0.0
                vel[i, 1] = 0.0


class VenueArrays:
    """Kernel-ready arrays for a :class:`VenueMap`."""

    def __init__(self, venue: VenueMap):
        self.obst = venue.obstacle_array()
        wp_c, wp_r, wp_wait = venue.waypoint_arrays()
        if len(wp_c) == 0:
            wp_c = np.zeros((1, 2))
            wp_r = np.zeros(1)
            wp_wait = np.zeros(1)
            self.n_waypoints = 0
        else:
            self.n_waypoints = len(wp_c)
        self.wp_c, self.wp_r, self.wp_wait = wp_c, wp_r, wp_wait
        self.exitl = venue.exit_array()


def step(world: World, venue: VenueMap, cfg: PedModelConfig, seed: int | None = None,
         *, inplace: bool = False, arrays: VenueArrays | None = None) -> World:
    """Advance ``world`` one time step; returns the new world.

    Waiting times come from per-agent counter-based streams keyed by
    ``(seed, agent id, step)``, so results do not depend on evaluation order.
    """
    w = world if inplace else world.copy()
    if seed is not None:
        w.seed = int(seed)
    va = arrays if arrays is not None else VenueArrays(venue)
    w.step_count += 1
    step_kernel(w.pos, w.vel, w.prev_vel, w.pref, w.radius, w.pref_speed, w.max_speed, w.phase, w.waypoint,
                w.remaining, w.ids, va.obst, va.wp_c, va.wp_r, va.wp_wait, va.exitl, cfg.to_array(),
                np.uint64(w.seed), w.step_count)
    return w


# --- per-piece public API ----------------------------------------------------


def preferred_velocity(agent: AgentState, venue: VenueMap, cfg: PedModelConfig,
                       previous: Vec2 | None = None) -> Vec2:
    """Preferred velocity for one agent, its change limited to ``max_pref_accel * dt``.

    ``previous`` is the preferred velocity used on the prior step; when omitted
    no clamp is applied.
    """
    code, wp, _ = phase_code(agent.behavior)
    if code == DONE:
        raise ValueError("agent has left the venue")
    va = VenueArrays(venue)
    speed = agent.pref_speed
    vx, vy = _raw_preferred(agent.position.x, agent.position.y, code, max(wp, 0), speed, va.wp_c, va.exitl)
    if previous is not None:
        vx, vy = _clamp_change(vx, vy, float(previous[0]), float(previous[1]), cfg.max_pref_accel * cfg.dt)
    return Vec2(vx, vy)


def _neighbour_arrays(agent: AgentState, neighbors: Sequence[AgentState]):
    everyone = [agent, *neighbors]
    pos = np.array([[a.position.x, a.position.y] for a in everyone]).reshape(-1, 2)
    vel = np.array([[a.velocity.x, a.velocity.y] for a in everyone]).reshape(-1, 2)
    radius = np.array([a.radius for a in everyone])
    maxs = np.array([a.max_speed for a in everyone])
    return pos, vel, radius, maxs


def _obstacles(obstacles) -> np.ndarray:
    if isinstance(obstacles, VenueMap):
        return obstacles.obstacle_array()
    if obstacles is None or len(obstacles) == 0:
        return np.zeros((0, 4))
    if isinstance(obstacles, np.ndarray):
        return np.ascontiguousarray(obstacles, dtype=np.float64).reshape(-1, 4)
    return np.array([[s.a.x, s.a.y, s.b.x, s.b.y] for s in obstacles], dtype=np.float64)


def _line_to_halfplane(px, py, dx, dy) -> HalfPlane:
    n = math.hypot(dx, dy)
    return HalfPlane(Vec2(px, py), Vec2(-dy / n, dx / n))


def vo_halfplanes(agent: AgentState, neighbors: Sequence[AgentState], obstacles,
                  cfg: PedModelConfig) -> list[HalfPlane]:
    """Velocity-space constraints for ``agent``: nearby walls first, then neighbours.

    Walls further than ``radius + max_speed * tau_obst`` cannot be reached in
    one horizon and contribute nothing.
    """
    obst = _obstacles(obstacles)
    pos, vel, radius, _ = _neighbour_arrays(agent, neighbors)
    px, py = pos[0]
    r = agent.radius
    reach = r + agent.max_speed * cfg.tau_obst + 1e-9
    out = []
    for s in range(len(obst)):
        cx, cy = closest_point_on_segment(px, py, *obst[s])
        if (px - cx) ** 2 + (py - cy) ** 2 >= reach * reach:
            continue
        out.append(_line_to_halfplane(*_obstacle_line(px, py, r, *obst[s], cfg.tau_obst, cfg.dt)))
    for j in range(1, len(pos)):
        line = _agent_line(px, py, vel[0, 0], vel[0, 1], r, pos[j, 0], pos[j, 1], vel[j, 0], vel[j, 1],
                           radius[j], cfg.tau, cfg.dt, 2.399963 * j)
        out.append(_line_to_halfplane(*line))
    return out


def solve_velocity(halfplanes: Sequence[HalfPlane], v_pref, max_speed: float, turning_bias: float = 1.0,
                   cfg: PedModelConfig | None = None, n_hard: int = 0) -> Vec2:
    """Feasible velocity closest to ``v_pref`` under the turning-bias metric.

    The first ``n_hard`` half-planes are kept exactly when the set is
    infeasible; the remaining ones are then relaxed to minimise the largest
    violation.
    """
    if not max_speed > 0:
        raise ValueError("max_speed must be positive")
    m = len(halfplanes)
    lines = np.empty((m + 1, 4))
    for k, h in enumerate(halfplanes):
        lines[k] = (h.point[0], h.point[1], h.normal[1], -h.normal[0])
    proj = np.empty((m + 1, 4))
    vx, vy = lp_solve(lines, m, n_hard, float(v_pref[0]), float(v_pref[1]), float(max_speed),
                      float(turning_bias), proj)
    return Vec2(vx, vy)


def stride_cap(agent: AgentState, neighbors: Sequence[AgentState], cfg: PedModelConfig,
               heading=None) -> float:
    """Speed ceiling from the clear gap to the nearest neighbour within a 45 degree cone.

    ``heading`` is the direction of travel (normally the preferred velocity).
    """
    if heading is None:
        heading = agent.velocity
    pos, vel, radius, _ = _neighbour_arrays(agent, neighbors)
    nbr = np.arange(1, len(pos), dtype=np.int64)
    return float(_stride_cap(0, pos, vel, radius, agent.max_speed, nbr, len(nbr),
                             float(heading[0]), float(heading[1]), cfg.factor, cfg.buffer))


TRAJECTORY_HEADER = ["step", "id", "x", "y", "vx", "vy", "phase"]


def trajectory_rows(world: World, step_no: int):
    for i in range(len(world)):
        yield (step_no, int(world.ids[i]), float(world.pos[i, 0]), float(world.pos[i, 1]),
               float(world.vel[i, 0]), float(world.vel[i, 1]), core.PHASE_NAMES[int(world.phase[i])])
