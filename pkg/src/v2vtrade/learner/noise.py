from __future__ import annotations

import numpy as np


class OUNoise:
    """Ornstein-Uhlenbeck process, one independent state per (agent, action dim) row.

    dx = theta * (mu - x) * dt + sigma * sqrt(dt) * N(0, 1)
    """

    def __init__(self, dim: int, rng: np.random.Generator, theta: float = 0.15, sigma: float = 0.2,
                 mu: float = 0.0, dt: float = 1.0):
        self.dim = dim
        self.rng = rng
        self.theta = theta
        self.sigma = sigma
        self.mu = mu
        self.dt = dt
        self.states: dict[int, np.ndarray] = {}

    def reset(self) -> None:
        self.states.clear()

    def sample(self, key: int) -> np.ndarray:
        x = self.states.get(key)
        if x is None:
            x = np.full(self.dim, self.mu)
        x = x + self.theta * (self.mu - x) * self.dt + self.sigma * np.sqrt(self.dt) * self.rng.standard_normal(self.dim)
        self.states[key] = x
        return x

    def forget(self, keep) -> None:
        """Drop states of agents no longer present."""
        keep = set(keep)
        for k in [k for k in self.states if k not in keep]:
            del self.states[k]


def annealed_sigma(sigma0: float, episode: int, n_episodes: int, frac: float = 0.5, floor: float = 0.0) -> float:
    """Linear decay from sigma0 to ``floor`` over the first ``frac`` of training."""
    horizon = max(1.0, frac * n_episodes)
    return max(floor, sigma0 * (1.0 - min(1.0, episode / horizon)))
