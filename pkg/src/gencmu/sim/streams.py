"""Seeded renewal primitives.

Each (replication, class, arrival|service) triple owns an independent
counter-based Philox stream derived from the master seed, so a class sees
the same draws whatever the number of classes or replications around it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..model import Distribution, SystemConfig

ARRIVAL = 0
SERVICE = 1


def stream_rng(master_seed: int, replication: int, cls: int, kind: int) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(replication), int(cls), int(kind)))
    return np.random.Generator(np.random.Philox(seq))


@dataclass
class RenewalStream:
    """I.i.d. unit-mean increments divided by ``rate``."""

    cls: int
    kind: int
    dist: Distribution
    rate: float
    rng: np.random.Generator

    def increments(self, size: int) -> np.ndarray:
        return self.dist.sample(self.rng, size) / self.rate

    def epochs_until(self, T: float) -> np.ndarray:
        """Renewal epochs in ``[0, T]`` (partial sums of the increments)."""
        mean_count = self.rate * T
        chunk = int(mean_count + 6.0 * math.sqrt(mean_count + 1.0) + 16)
        total = 0.0
        parts = []
        while True:
            block = np.cumsum(self.increments(chunk)) + total
            parts.append(block)
            total = block[-1]
            if total > T:
                break
        epochs = np.concatenate(parts)
        return epochs[: np.searchsorted(epochs, T, side="right")]


@dataclass
class Primitives:
    """Arrival epochs and per-job service requirements for one replication."""

    arrivals: list[np.ndarray]
    requirements: list[np.ndarray]

    def padded(self):
        d = len(self.arrivals)
        counts = np.array([len(a) for a in self.arrivals], dtype=np.int64)
        width = max(1, int(counts.max()) if d else 1)
        arr = np.full((d, width + 1), np.inf)
        svc = np.zeros((d, width + 1))
        for i in range(d):
            arr[i, : counts[i]] = self.arrivals[i]
            svc[i, : counts[i]] = self.requirements[i]
        return arr, svc, counts


def draw_primitives(config: SystemConfig, seed: int, replication: int = 0) -> Primitives:
    """Arrivals up to ``T`` and one service requirement per arriving job.

    A job can only depart if it arrived, so ``A_i(T)`` service draws are
    always enough.
    """
    arrivals, requirements = [], []
    for i in range(config.d):
        ia = RenewalStream(i, ARRIVAL, config.ia_dist[i], float(config.lam_n[i]),
                           stream_rng(seed, replication, i, ARRIVAL))
        st = RenewalStream(i, SERVICE, config.st_dist[i], float(config.mu_n[i]),
                           stream_rng(seed, replication, i, SERVICE))
        epochs = ia.epochs_until(config.T)
        arrivals.append(epochs)
        requirements.append(st.increments(len(epochs)))
    return Primitives(arrivals, requirements)
