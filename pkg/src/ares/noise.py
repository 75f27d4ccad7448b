"""Rayleigh horizontal GPS error injected into starting positions."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import AgentState, Vec2


@dataclass(frozen=True)
class NoiseConfig:
    E: float
    seed: int = 0

    def __post_init__(self):
        if not self.E >= 0:
            raise ValueError("E must be >= 0")


def rayleigh_cdf(z, E: float):
    """P(Z <= z) = 1 - exp(-z^2 / E^2)."""
    z = np.asarray(z, dtype=np.float64)
    return np.where(z > 0, -np.expm1(-(z * z) / (E * E)), 0.0)


def magnitude_from_uniform(u, E: float):
    """Inverse CDF: z = E * sqrt(-ln(1 - u)) for u in [0, 1)."""
    u = np.asarray(u, dtype=np.float64)
    return E * np.sqrt(-np.log1p(-u))


def sample_error_magnitude(E: float, rng: np.random.Generator, size=None):
    if not E > 0:
        raise ValueError("E must be > 0; E = 0 means no noise and is handled by the caller")
    z = magnitude_from_uniform(rng.random(size), E)
    return float(z) if size is None else z


def sample_displacements(n: int, E: float, rng: np.random.Generator) -> np.ndarray:
    """(n, 2) displacement vectors: Rayleigh magnitude, uniform direction."""
    z = sample_error_magnitude(E, rng, n)
    theta = rng.random(n) * (2.0 * np.pi)
    return np.column_stack((z * np.cos(theta), z * np.sin(theta)))


def perturb_positions(agents, E: float, rng: np.random.Generator):
    """Displace starting positions by Rayleigh noise; velocities are left alone.

    ``agents`` is either an (n, 2) position array or a list of
    :class:`AgentState`; the result has the same form. E = 0 returns the
    input unchanged (a copy for arrays). Displaced agents are not pulled back
    onto the walkway.
    """
    if isinstance(agents, (list, tuple)) and agents and isinstance(agents[0], AgentState):
        if E == 0:
            return list(agents)
        shift = sample_displacements(len(agents), E, rng)
        return [replace(a, position=Vec2(a.position.x + dx, a.position.y + dy))
                for a, (dx, dy) in zip(agents, shift)]
    positions = np.asarray(agents, dtype=np.float64)
    if E == 0:
        return positions.copy()
    return positions + sample_displacements(len(positions), E, rng)
