"""Streaming Monte Carlo summaries."""

from __future__ import annotations

import numpy as np


class RunningMoments:
    """Accumulates first and second moments of per-path values, chunk by chunk."""

    def __init__(self, shape=()):
        self.n = 0
        self.s1 = np.zeros(shape)
        self.s2 = np.zeros(shape)

    def add(self, values) -> None:
        values = np.asarray(values, dtype=float)
        self.n += values.shape[0]
        self.s1 += values.sum(axis=0)
        self.s2 += (values**2).sum(axis=0)

    @property
    def mean(self):
        return self.s1 / self.n

    @property
    def var(self):
        """Unbiased sample variance."""
        return np.maximum(self.s2 / self.n - self.mean**2, 0.0) * self.n / max(self.n - 1, 1)

    @property
    def se(self):
        return np.sqrt(self.var / self.n)


def mean_se(values) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(values.size))
