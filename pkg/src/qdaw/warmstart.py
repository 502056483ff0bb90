"""Pluggable MaxCut warm-start providers.

A provider is any callable ``(n, edges, seed) -> tuple of bits``. The default
relaxes the cut problem to unit vectors in a low-dimensional sphere
(Burer-Monteiro factorisation of the Goemans-Williamson SDP), then rounds with
random hyperplanes. An exact SDP solver can be dropped in by passing another
callable to :func:`qdaw.problems.warm_start`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


def cut_size(bits: Sequence[int], edges: Sequence[tuple[int, int]]) -> int:
    return sum(bits[u] != bits[v] for u, v in edges)


@dataclass(frozen=True)
class BurerMonteiroMaxCut:
    rank: int = 3
    hyperplanes: int = 20
    steps: int = 500
    step_size: float = 0.1
    tol: float = 1e-10

    def relax(self, n: int, edges, rng: np.random.Generator) -> np.ndarray:
        V = rng.normal(size=(n, self.rank))
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        if not edges:
            return V
        A = np.zeros((n, n))
        for u, v in edges:
            A[u, v] = A[v, u] = 1.0
        prev = np.inf
        for _ in range(self.steps):
            # ascent on sum_{uv} (1 - v_u . v_v) / 2, projected back to the sphere
            V = V - self.step_size * (A @ V) / 2
            V /= np.linalg.norm(V, axis=1, keepdims=True)
            energy = float(np.sum(A * (V @ V.T)))
            if abs(prev - energy) < self.tol:
                break
            prev = energy
        return V

    def __call__(self, n: int, edges, seed: int) -> tuple[int, ...]:
        rng = np.random.default_rng([int(seed), 0x6F])
        V = self.relax(n, list(edges), rng)
        best: tuple[int, tuple[int, ...]] | None = None
        for _ in range(self.hyperplanes):
            r = rng.normal(size=self.rank)
            bits = tuple(int(x) for x in (V @ r > 0))
            score = cut_size(bits, edges)
            if best is None or score > best[0] or (score == best[0] and bits < best[1]):
                best = (score, bits)
        return best[1]
