"""Slow, obviously-correct reference computations used by the tests."""
import math

import numpy as np
from numba import njit

from ares.pedmodel import HalfPlane


@njit(cache=True)
def _cost(x, y, prefx, prefy, ux, uy, tb):
    dx = x - prefx
    dy = y - prefy
    a = dx * ux + dy * uy
    b = -dx * uy + dy * ux
    return a * a + tb * b * b


@njit(cache=True)
def _feasible(x, y, pts, nrm, vmax, tol):
    if x * x + y * y > vmax * vmax * (1.0 + tol):
        return False
    for k in range(pts.shape[0]):
        if (x - pts[k, 0]) * nrm[k, 0] + (y - pts[k, 1]) * nrm[k, 1] < -tol:
            return False
    return True


@njit(cache=True)
def _sample_argmin(pts, nrm, prefx, prefy, vmax, tb, n_grid, n_edge):
    sp = math.sqrt(prefx * prefx + prefy * prefy)
    if sp > 1e-12:
        ux, uy = prefx / sp, prefy / sp
    else:
        ux, uy = 1.0, 0.0
    tol = 1e-9
    best = np.inf
    bx = np.nan
    by = np.nan
    # the pref itself
    if _feasible(prefx, prefy, pts, nrm, vmax, tol):
        return prefx, prefy
    # interior lattice
    h = 2.0 * vmax / n_grid
    for i in range(n_grid + 1):
        x = -vmax + i * h
        for j in range(n_grid + 1):
            y = -vmax + j * h
            if _feasible(x, y, pts, nrm, vmax, tol):
                c = _cost(x, y, prefx, prefy, ux, uy, tb)
                if c < best:
                    best, bx, by = c, x, y
    # every constraint line, sampled across the speed disc
    for k in range(pts.shape[0]):
        dx = nrm[k, 1]
        dy = -nrm[k, 0]
        t0 = -(pts[k, 0] * dx + pts[k, 1] * dy)
        for m in range(n_edge + 1):
            t = t0 - vmax + 2.0 * vmax * m / n_edge
            x = pts[k, 0] + t * dx
            y = pts[k, 1] + t * dy
            if _feasible(x, y, pts, nrm, vmax, tol):
                c = _cost(x, y, prefx, prefy, ux, uy, tb)
                if c < best:
                    best, bx, by = c, x, y
    # the speed circle
    for m in range(n_edge):
        th = 2.0 * math.pi * m / n_edge
        x = vmax * math.cos(th)
        y = vmax * math.sin(th)
        if _feasible(x, y, pts, nrm, vmax, tol):
            c = _cost(x, y, prefx, prefy, ux, uy, tb)
            if c < best:
                best, bx, by = c, x, y
    return bx, by


def sampling_argmin(halfplanes, v_pref, vmax, turning_bias=1.0, points=1_000_000):
    """Brute-force arg-min over about ``points`` candidate velocities.

    Half the budget is a square lattice over the speed disc; the rest is
    spread along every constraint line and the disc boundary, where a convex
    optimum away from ``v_pref`` must lie.
    """
    pts = np.array([h.point for h in halfplanes], dtype=np.float64).reshape(-1, 2)
    nrm = np.array([h.normal for h in halfplanes], dtype=np.float64).reshape(-1, 2)
    n_grid = int(math.sqrt(points / 2))
    n_edge = max(1000, points // (2 * (len(halfplanes) + 1)))
    bx, by = _sample_argmin(pts, nrm, float(v_pref[0]), float(v_pref[1]), float(vmax), float(turning_bias),
                            n_grid, n_edge)
    return np.array([bx, by])


def random_feasible_instance(rng, m=5, vmax=2.0):
    """``m`` half-planes sharing a strictly feasible point inside the speed disc."""
    c = rng.uniform(-1, 1, 2) * vmax * 0.6
    hps = []
    for _ in range(m):
        t = rng.uniform(0, 2 * math.pi)
        n = np.array([math.cos(t), math.sin(t)])
        margin = rng.uniform(0.05, 1.0)
        hps.append(HalfPlane(tuple(c - margin * n), tuple(n)))
    theta = rng.uniform(0, 2 * math.pi)
    pref = rng.uniform(0.2, 1.0) * vmax * np.array([math.cos(theta), math.sin(theta)])
    return hps, pref


def min_pair_gap(pos, radius):
    """Smallest centre distance minus the sum of radii over all pairs."""
    d = np.hypot(*(pos[:, None, :] - pos[None, :, :]).transpose(2, 0, 1))
    np.fill_diagonal(d, np.inf)
    r = radius[:, None] + radius[None, :]
    return float((d - r).min())
