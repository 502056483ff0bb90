"""QUBO and Ising representations with exact conversion between them.

Bit/spin convention used throughout the package: ``x_i = (1 - z_i) / 2``, so
spin ``+1`` is bit ``0``. Assignment vectors are indexed big-endian, i.e. the
integer ``k`` encodes bit ``i`` as ``(k >> (n - 1 - i)) & 1``; this makes integer
order coincide with lexicographic order of bitstrings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_CHUNK = 1 << 16


def bit_matrix(n: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Rows are the assignments ``start..stop-1`` as 0/1 ``int8`` vectors."""
    stop = (1 << n) if stop is None else stop
    idx = np.arange(start, stop, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts[None, :]) & 1).astype(np.int8)


def bits_to_index(bits) -> int:
    k = 0
    for b in bits:
        k = (k << 1) | int(b)
    return k


def index_to_bits(k: int, n: int) -> tuple[int, ...]:
    return tuple((k >> (n - 1 - i)) & 1 for i in range(n))


def parse_bits(bits, n: int | None = None) -> tuple[int, ...]:
    """Accept a ``"0101"`` string or any int sequence; validate 0/1 entries."""
    if isinstance(bits, str):
        out = tuple(int(c) for c in bits)
    else:
        out = tuple(int(b) for b in bits)
    if any(b not in (0, 1) for b in out):
        raise ValueError(f"bits must be 0/1, got {bits!r}")
    if n is not None and len(out) != n:
        raise ValueError(f"expected {n} bits, got {len(out)}")
    return out


def _chunked(n: int, fn) -> np.ndarray:
    total = 1 << n
    out = np.empty(total, dtype=np.float64)
    for start in range(0, total, _CHUNK):
        stop = min(total, start + _CHUNK)
        out[start:stop] = fn(bit_matrix(n, start, stop))
    return out


@dataclass
class Qubo:
    """Minimise ``x^T Q x + offset`` over ``x in {0,1}^n``.

    ``quad`` maps ``(i, j)`` with ``i <= j`` to a coefficient; diagonal entries
    are linear terms because ``x_i^2 = x_i``.
    """

    n: int
    quad: dict[tuple[int, int], float] = field(default_factory=dict)
    offset: float = 0.0

    def __post_init__(self):
        for (i, j), c in self.quad.items():
            if not (0 <= i <= j < self.n):
                raise ValueError(f"bad QUBO index {(i, j)} for n={self.n}")
            if not math.isfinite(c):
                raise ValueError(f"non-finite coefficient at {(i, j)}")
        self.quad = dict(sorted(self.quad.items()))

    def add(self, i: int, j: int, c: float) -> None:
        if i > j:
            i, j = j, i
        key = (i, j)
        self.quad[key] = self.quad.get(key, 0.0) + c

    def add_linear(self, i: int, c: float) -> None:
        self.add(i, i, c)

    def add_product(self, a: tuple[float, dict[int, float]], b: tuple[float, dict[int, float]]) -> None:
        """Add the product of two affine forms ``c0 + sum_k c_k x_k``."""
        a0, at = a
        b0, bt = b
        self.offset += a0 * b0
        for k, c in at.items():
            self.add(k, k, c * b0)
        for k, c in bt.items():
            self.add(k, k, c * a0)
        for i, ci in at.items():
            for j, cj in bt.items():
                self.add(i, j, ci * cj)

    def items(self):
        return sorted(self.quad.items())

    def evaluate(self, bits) -> float:
        x = parse_bits(bits, self.n)
        total = self.offset
        for (i, j), c in self.items():
            total += c * x[i] * x[j]
        return total

    def energies(self) -> np.ndarray:
        """Objective value of every assignment, big-endian index order."""
        terms = self.items()

        def block(b):
            e = np.full(b.shape[0], self.offset)
            for (i, j), c in terms:
                if i == j:
                    e += c * b[:, i]
                else:
                    e += c * (b[:, i] & b[:, j])
            return e

        return _chunked(self.n, block)

    def to_ising(self) -> "IsingModel":
        h: dict[int, float] = {}
        J: dict[tuple[int, int], float] = {}
        offset = self.offset
        for (i, j), c in self.items():
            if i == j:
                offset += c / 2
                h[i] = h.get(i, 0.0) - c / 2
            else:
                offset += c / 4
                h[i] = h.get(i, 0.0) - c / 4
                h[j] = h.get(j, 0.0) - c / 4
                J[(i, j)] = J.get((i, j), 0.0) + c / 4
        return IsingModel(self.n, h, J, offset)


@dataclass
class IsingModel:
    """Minimise ``sum h_i z_i + sum J_ij z_i z_j + offset`` over ``z in {-1,1}^n``."""

    n: int
    linear: dict[int, float] = field(default_factory=dict)
    quadratic: dict[tuple[int, int], float] = field(default_factory=dict)
    offset: float = 0.0

    def __post_init__(self):
        for i in self.linear:
            if not 0 <= i < self.n:
                raise ValueError(f"bad linear index {i}")
        for i, j in self.quadratic:
            if not (0 <= i < j < self.n):
                raise ValueError(f"bad coupling index {(i, j)}")
        self.linear = dict(sorted(self.linear.items()))
        self.quadratic = dict(sorted(self.quadratic.items()))

    def evaluate_spins(self, spins) -> float:
        z = [int(s) for s in spins]
        total = self.offset
        for i, h in self.linear.items():
            total += h * z[i]
        for (i, j), c in self.quadratic.items():
            total += c * z[i] * z[j]
        return total

    def evaluate(self, bits) -> float:
        x = parse_bits(bits, self.n)
        return self.evaluate_spins([1 - 2 * b for b in x])

    def energies(self) -> np.ndarray:
        lin = list(self.linear.items())
        quad = list(self.quadratic.items())

        def block(b):
            z = 1 - 2 * b.astype(np.int64)
            e = np.full(b.shape[0], self.offset)
            for i, h in lin:
                e += h * z[:, i]
            for (i, j), c in quad:
                e += c * (z[:, i] * z[:, j])
            return e

        return _chunked(self.n, block)

    def to_qubo(self) -> Qubo:
        q = Qubo(self.n, offset=self.offset)
        for i, h in self.linear.items():
            q.offset += h
            q.add(i, i, -2 * h)
        for (i, j), c in self.quadratic.items():
            q.offset += c
            q.add(i, i, -2 * c)
            q.add(j, j, -2 * c)
            q.add(i, j, 4 * c)
        q.quad = dict(sorted(q.quad.items()))
        return q

    def substitute(self, i: int, sign: int, j: int | None = None) -> "IsingModel":
        """Impose ``z_i = sign * z_j`` (or ``z_i = sign`` when ``j`` is None).

        Variable ``i`` is removed and higher indices shift down by one.
        """
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if j == i:
            raise ValueError("cannot tie a variable to itself")
        h = dict(self.linear)
        J = dict(self.quadratic)
        offset = self.offset
        hi = h.pop(i, 0.0)
        if j is None:
            offset += sign * hi
        else:
            h[j] = h.get(j, 0.0) + sign * hi
        for (a, b) in list(J):
            if i not in (a, b):
                continue
            c = J.pop((a, b))
            k = b if a == i else a
            if j is None:
                h[k] = h.get(k, 0.0) + sign * c
            elif k == j:
                offset += sign * c
            else:
                key = (min(k, j), max(k, j))
                J[key] = J.get(key, 0.0) + sign * c

        def shift(v):
            return v - 1 if v > i else v

        h2 = {shift(k): v for k, v in h.items()}
        J2 = {(shift(a), shift(b)): v for (a, b), v in J.items()}
        return IsingModel(self.n - 1, h2, J2, offset)
