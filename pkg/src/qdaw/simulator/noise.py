"""Device noise model: depolarising gate errors plus thermal relaxation.

The noise level ``l`` scales both the depolarising probabilities and the gate
durations; ``l = 1`` reproduces the baseline device parameters and ``l = 0`` is
noiseless.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

PAULIS = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)

KRAUS_TOL = 1e-12


@dataclass(frozen=True)
class NoiseParams:
    p1: float = 0.0003
    p2: float = 0.01
    t1q: float = 35e-9
    t2q: float = 400e-9
    T1: float = 100e-6
    T2: float = 85e-6
    t_meas: float = 4e-6
    level: float = 1.0
    measurement_relaxation: bool = True

    def __post_init__(self):
        for name in ("p1", "p2"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("t1q", "t2q", "t_meas"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.T1 <= 0 or self.T2 <= 0:
            raise ValueError("T1 and T2 must be positive")
        if self.T2 > 2 * self.T1:
            raise ValueError("T2 must not exceed 2*T1")
        if self.level < 0:
            raise ValueError("noise level must be non-negative")
        if self.level * max(self.p1, self.p2) >= 1:
            raise ValueError("level * p2 must stay below 1")

    def at_level(self, level: float) -> "NoiseParams":
        return replace(self, level=float(level))

    def scaled_gate_times(self) -> tuple[float, float]:
        return self.level * self.t1q, self.level * self.t2q


# --------------------------------------------------------------------------
# Kraus operators
# --------------------------------------------------------------------------


def check_kraus(ops, tol: float = KRAUS_TOL) -> None:
    dim = ops[0].shape[0]
    total = sum(K.conj().T @ K for K in ops)
    err = np.max(np.abs(total - np.eye(dim)))
    if err > tol:
        raise ValueError(f"Kraus operators incomplete (error {err:.3e})")


def depolarizing_kraus(p: float, n_qubits: int = 1) -> list[np.ndarray]:
    """Replace the state by ``I / 2^k`` with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("probability must lie in [0, 1]")
    d2 = 4 ** n_qubits
    ops = []
    for idx in itertools.product(range(4), repeat=n_qubits):
        P = PAULIS[idx[0]]
        for k in idx[1:]:
            P = np.kron(P, PAULIS[k])
        weight = 1 - p + p / d2 if not any(idx) else p / d2
        ops.append(math.sqrt(weight) * P)
    check_kraus(ops)
    return ops


def amplitude_damping_kraus(gamma: float) -> list[np.ndarray]:
    return [
        np.array([[1, 0], [0, math.sqrt(1 - gamma)]], dtype=complex),
        np.array([[0, math.sqrt(gamma)], [0, 0]], dtype=complex),
    ]


def phase_damping_kraus(lam: float) -> list[np.ndarray]:
    return [
        np.array([[1, 0], [0, math.sqrt(1 - lam)]], dtype=complex),
        np.array([[0, 0], [0, math.sqrt(lam)]], dtype=complex),
    ]


def thermal_relaxation_kraus(t: float, T1: float, T2: float) -> list[np.ndarray]:
    """Amplitude damping toward |0> composed with pure dephasing.

    Coherences decay as ``exp(-t/T2)`` overall, with ``1/T2 = 1/(2 T1) + 1/T_phi``.
    """
    gamma = 1.0 - math.exp(-t / T1)
    rate_phi = 1.0 / T2 - 1.0 / (2.0 * T1)
    lam = 1.0 - math.exp(-2.0 * t * rate_phi)
    ops = [P @ A for P in phase_damping_kraus(lam) for A in amplitude_damping_kraus(gamma)]
    check_kraus(ops)
    return ops


def tensor_kraus(a, b) -> list[np.ndarray]:
    return [np.kron(x, y) for x in a for y in b]


# --------------------------------------------------------------------------
# superoperators, layout (rows..., cols...)
# --------------------------------------------------------------------------


def kraus_superop(ops) -> np.ndarray:
    return sum(np.kron(K, K.conj()) for K in ops)


def unitary_superop(U: np.ndarray) -> np.ndarray:
    return np.kron(U, U.conj())


class ChannelCache:
    """The per-gate noise superoperators for one :class:`NoiseParams`."""

    def __init__(self, noise: NoiseParams):
        self.noise = noise
        l = noise.level
        t1, t2 = noise.scaled_gate_times()
        relax1 = thermal_relaxation_kraus(t1, noise.T1, noise.T2)
        relax2_single = thermal_relaxation_kraus(t2, noise.T1, noise.T2)
        self.one_kraus = relax1
        self.two_relax_kraus = tensor_kraus(relax2_single, relax2_single)
        self.dep1_kraus = depolarizing_kraus(l * noise.p1, 1)
        self.dep2_kraus = depolarizing_kraus(l * noise.p2, 2)
        self.one = kraus_superop(self.dep1_kraus) @ kraus_superop(relax1)
        self.two = kraus_superop(self.dep2_kraus) @ kraus_superop(self.two_relax_kraus)
        self.measure_kraus = thermal_relaxation_kraus(l * noise.t_meas, noise.T1, noise.T2)
        self.measure = kraus_superop(self.measure_kraus)

    def all_kraus_sets(self):
        return [self.one_kraus, self.two_relax_kraus, self.dep1_kraus, self.dep2_kraus, self.measure_kraus]
