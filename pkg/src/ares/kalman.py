"""Constant-velocity Kalman filter over (x, y, vx, vy) and the error study around it.

The filter runs batched over agents: means are (n, 4) arrays and covariances
(n, 4, 4). Single-agent ``kf_init``/``kf_step`` wrap the batched code.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .noise import sample_displacements

MIN_POSN_VAR = 1e-9


@dataclass(frozen=True)
class KalmanConfig:
    dt: float = 0.1
    q: float = 1.0
    posn_var: float = 0.5
    vel_var: float = 1e-4

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not (self.q >= 0 and self.posn_var > 0 and self.vel_var > 0):
            raise ValueError("variances must be positive")

    @classmethod
    def for_noise(cls, E: float, dt: float = 0.1, q: float = 1.0, vel_var: float = 1e-4) -> "KalmanConfig":
        """Position variance per axis E^2 / 2, floored so that E = 0 stays well posed."""
        return cls(dt=dt, q=q, posn_var=max(E * E / 2.0, MIN_POSN_VAR), vel_var=vel_var)

    def transition(self) -> np.ndarray:
        F = np.eye(4)
        F[0, 2] = F[1, 3] = self.dt
        return F

    def process_noise(self) -> np.ndarray:
        """Continuous white-noise acceleration, integrated over one step."""
        dt, q = self.dt, self.q
        Q = np.zeros((4, 4))
        for a, v in ((0, 2), (1, 3)):
            Q[a, a] = q * dt ** 3 / 3.0
            Q[a, v] = Q[v, a] = q * dt ** 2 / 2.0
            Q[v, v] = q * dt
        return Q

    def measurement_noise(self) -> np.ndarray:
        return np.diag([self.posn_var, self.posn_var, self.vel_var, self.vel_var])


@dataclass
class KalmanState:
    mean: np.ndarray
    covariance: np.ndarray


def batch_init(z: np.ndarray, cfg: KalmanConfig) -> tuple[np.ndarray, np.ndarray]:
    z = np.asarray(z, dtype=np.float64).reshape(-1, 4)
    P = np.broadcast_to(cfg.measurement_noise(), (len(z), 4, 4)).copy()
    return z.copy(), P


def batch_predict(x: np.ndarray, P: np.ndarray, cfg: KalmanConfig) -> tuple[np.ndarray, np.ndarray]:
    F = cfg.transition()
    x = x @ F.T
    P = F @ P @ F.T + cfg.process_noise()
    return x, P


def batch_update(x: np.ndarray, P: np.ndarray, z: np.ndarray, cfg: KalmanConfig) -> tuple[np.ndarray, np.ndarray]:
    """Measurement update with H = I, Joseph form for the covariance."""
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite measurement")
    R = cfg.measurement_noise()
    S = P + R
    # K = P S^-1; both symmetric so K^T = S^-1 P
    K = np.linalg.solve(S, P).transpose(0, 2, 1)
    x = x + np.einsum("nij,nj->ni", K, z - x)
    A = np.eye(4) - K
    P = A @ P @ A.transpose(0, 2, 1) + K @ R @ K.transpose(0, 2, 1)
    P = 0.5 * (P + P.transpose(0, 2, 1))
    return x, P


def kf_init(first_measurement, cfg: KalmanConfig) -> KalmanState:
    x, P = batch_init(first_measurement, cfg)
    return KalmanState(x[0], P[0])


def kf_predict(state: KalmanState, cfg: KalmanConfig) -> KalmanState:
    x, P = batch_predict(state.mean[None], state.covariance[None], cfg)
    return KalmanState(x[0], P[0])


def kf_step(state: KalmanState, cfg: KalmanConfig, z) -> KalmanState:
    """One predict/update cycle with measurement z = (x, y, vx, vy)."""
    z = np.asarray(z, dtype=np.float64).reshape(1, 4)
    x, P = batch_predict(state.mean[None], state.covariance[None], cfg)
    x, P = batch_update(x, P, z, cfg)
    return KalmanState(x[0], P[0])


def run_filter(positions: np.ndarray, velocities: np.ndarray, noisy: np.ndarray | None,
               cfg: KalmanConfig) -> np.ndarray:
    """Filter whole tracks; arrays are (steps, agents, 2). Returns final means (agents, 4)."""
    obs = positions if noisy is None else noisy
    z = np.concatenate([obs[0], velocities[0]], axis=1)
    x, P = batch_init(z, cfg)
    for s in range(1, len(positions)):
        x, P = batch_predict(x, P, cfg)
        z = np.concatenate([obs[s], velocities[s]], axis=1)
        x, P = batch_update(x, P, z, cfg)
    return x


def evaluate_filter(true_positions: np.ndarray, true_velocities: np.ndarray, E: float,
                    cfg: KalmanConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per-agent (measured, estimated) final-step errors for noise level E.

    Fresh Rayleigh noise is added to every position at every step; velocities
    are passed through exact.
    """
    pos = np.asarray(true_positions, dtype=np.float64)
    vel = np.asarray(true_velocities, dtype=np.float64)
    if pos.ndim != 3 or pos.shape[0] == 0 or pos.shape[1] == 0:
        raise ValueError("need a non-empty (steps, agents, 2) trajectory array")
    if vel.shape != pos.shape:
        raise ValueError("positions and velocities must have the same shape")
    steps, n, _ = pos.shape

    def noisy(s):
        if E == 0:
            return pos[s]
        return pos[s] + sample_displacements(n, E, rng)

    z0 = noisy(0)
    x, P = batch_init(np.concatenate([z0, vel[0]], axis=1), cfg)
    last = z0
    for s in range(1, steps):
        last = noisy(s)
        x, P = batch_predict(x, P, cfg)
        x, P = batch_update(x, P, np.concatenate([last, vel[s]], axis=1), cfg)
    measured = np.hypot(*(last - pos[-1]).T)
    estimated = np.hypot(*(x[:, :2] - pos[-1]).T)
    return measured, estimated


def mae(errors) -> float:
    e = np.asarray(errors, dtype=np.float64)
    if e.size == 0:
        raise ValueError("mae of an empty list")
    return float(np.mean(np.abs(e)))


def silverman_bandwidth(samples) -> float:
    x = np.asarray(samples, dtype=np.float64)
    return 1.06 * float(np.std(x, ddof=1)) * len(x) ** (-0.2)


def kde(samples, bandwidth: float | None = None, points: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian KDE on an even grid over [min - 3h, max + 3h]."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 2:
        raise ValueError("kde needs at least two samples")
    if np.ptp(x) == 0:
        raise ValueError("kde of identical samples is degenerate")
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    grid = np.linspace(x.min() - 3 * h, x.max() + 3 * h, points)
    dens = np.zeros(points)
    norm = 1.0 / (len(x) * h * math.sqrt(2 * math.pi))
    for chunk in np.array_split(x, max(1, len(x) // 4096)):
        u = (grid[:, None] - chunk[None, :]) / h
        dens += np.exp(-0.5 * u * u).sum(axis=1)
    return grid, dens * norm
