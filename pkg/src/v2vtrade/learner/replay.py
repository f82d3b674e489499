from __future__ import annotations

import numpy as np

FIELDS = ("obs", "act", "present", "ego", "reward", "next_obs", "next_present", "next_ego", "done")


class ReplayBuffer:
    """Fixed-capacity FIFO of per-agent transitions over padded joint states.

    Storage is float32 and allocated on the first ``add``.
    """

    def __init__(self, capacity: int = 100_000):
        self.capacity = int(capacity)
        self.data: dict[str, np.ndarray] | None = None
        self.ptr = 0
        self.size = 0

    def __len__(self):
        return self.size

    def _alloc(self, sample: dict) -> None:
        self.data = {}
        for k in FIELDS:
            v = np.asarray(sample[k])
            dtype = np.int64 if k in ("ego", "next_ego") else np.float32
            self.data[k] = np.zeros((self.capacity, *v.shape), dtype=dtype)

    def add(self, **tr) -> None:
        if self.data is None:
            self._alloc(tr)
        for k in FIELDS:
            self.data[k][self.ptr] = tr[k]
        self.ptr = (self.ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        """Uniform draw without replacement within the batch."""
        n = min(batch_size, self.size)
        idx = rng.choice(self.size, size=n, replace=False)
        return {k: v[idx].astype(np.float64) if v.dtype == np.float32 else v[idx] for k, v in self.data.items()}
