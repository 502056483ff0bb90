"""Statevector and density-matrix simulation of native circuits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .circuit import CX_MATRIX, SX_MATRIX, Circuit, gate_matrix
from .noise import ChannelCache, NoiseParams, unitary_superop

MAX_IDEAL_QUBITS = 24
MAX_NOISY_QUBITS = 12


@dataclass
class StateVector:
    amplitudes: np.ndarray  # flat, length 2^n, big-endian

    @property
    def n_qubits(self) -> int:
        return int(round(math.log2(self.amplitudes.size)))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass
class DensityState:
    matrix: np.ndarray  # 2^n x 2^n

    @property
    def n_qubits(self) -> int:
        return int(round(math.log2(self.matrix.shape[0])))

    def probabilities(self) -> np.ndarray:
        return np.clip(np.real(np.diag(self.matrix)).copy(), 0.0, None)

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


# --------------------------------------------------------------------------
# statevector
# --------------------------------------------------------------------------


def _apply_1q(psi: np.ndarray, U: np.ndarray, q: int) -> np.ndarray:
    out = np.tensordot(U, psi, axes=([1], [q]))
    return np.moveaxis(out, 0, q)


def _apply_rz(psi: np.ndarray, theta: float, q: int) -> np.ndarray:
    shape = [1] * psi.ndim
    shape[q] = 2
    phase = np.array([np.exp(-0.5j * theta), np.exp(0.5j * theta)]).reshape(shape)
    return psi * phase


def _apply_cx(psi: np.ndarray, c: int, t: int) -> np.ndarray:
    out = psi.copy()
    idx = [slice(None)] * psi.ndim
    idx[c] = 1
    sub = out[tuple(idx)]
    axis = t if t < c else t - 1
    sub[...] = np.flip(psi[tuple(idx)], axis=axis)
    return out


def run_ideal(circuit: Circuit) -> StateVector:
    """Apply the circuit to ``|0...0>``."""
    n = circuit.n_qubits
    if n > MAX_IDEAL_QUBITS:
        raise ValueError(f"ideal simulation capped at {MAX_IDEAL_QUBITS} qubits")
    psi = np.zeros((2,) * n, dtype=complex)
    psi[(0,) * n] = 1.0
    for g in circuit.ops:
        if g.name == "RZ":
            psi = _apply_rz(psi, g.theta, g.qubits[0])
        elif g.name == "SX":
            psi = _apply_1q(psi, SX_MATRIX, g.qubits[0])
        else:
            psi = _apply_cx(psi, *g.qubits)
    return StateVector(psi.reshape(-1))


# --------------------------------------------------------------------------
# density matrix
# --------------------------------------------------------------------------


def apply_superop(rho: np.ndarray, S: np.ndarray, qubits: tuple[int, ...], n: int) -> np.ndarray:
    """Apply a ``4^k x 4^k`` superoperator to qubits of a ``(2,)*2n`` tensor."""
    k = len(qubits)
    S = S.reshape((2,) * (4 * k))
    axes = list(qubits) + [n + q for q in qubits]
    out = np.tensordot(S, rho, axes=(list(range(2 * k, 4 * k)), axes))
    return np.moveaxis(out, list(range(2 * k)), axes)


def run_noisy(circuit: Circuit, noise: NoiseParams) -> DensityState:
    """Density-matrix simulation with relaxation then depolarising after every gate.

    Relaxation acts on the gate's own qubits for the scaled gate duration;
    measurement relaxes every qubit for ``t_meas`` (switchable via
    ``noise.measurement_relaxation``).
    """
    n = circuit.n_qubits
    if n > MAX_NOISY_QUBITS:
        raise ValueError(f"noisy simulation capped at {MAX_NOISY_QUBITS} qubits")
    channels = ChannelCache(noise)
    rho = np.zeros((2,) * (2 * n), dtype=complex)
    rho[(0,) * (2 * n)] = 1.0
    two = channels.two @ unitary_superop(CX_MATRIX)
    sx = channels.one @ unitary_superop(SX_MATRIX)
    for g in circuit.ops:
        if g.name == "CX":
            rho = apply_superop(rho, two, g.qubits, n)
        elif g.name == "SX":
            rho = apply_superop(rho, sx, g.qubits, n)
        else:
            rho = apply_superop(rho, channels.one @ unitary_superop(gate_matrix(g)), g.qubits, n)
    if circuit.measured and noise.measurement_relaxation:
        for q in range(n):
            rho = apply_superop(rho, channels.measure, (q,), n)
    dim = 1 << n
    return DensityState(rho.reshape(dim, dim))


# --------------------------------------------------------------------------
# readout
# --------------------------------------------------------------------------


def probabilities(state) -> np.ndarray:
    if isinstance(state, (StateVector, DensityState)):
        return state.probabilities()
    arr = np.asarray(state)
    if arr.ndim == 2:
        return np.clip(np.real(np.diag(arr)), 0.0, None)
    return np.abs(arr) ** 2


def sample_indices(probs: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Multinomial counts per basis index."""
    p = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    p = p / p.sum()
    return rng.multinomial(shots, p)


def sample(state, shots: int, seed) -> dict[str, int]:
    """Seeded Born-rule sampling; keys are bitstrings with qubit 0 first."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    probs = probabilities(state)
    n = int(round(math.log2(probs.size)))
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    counts = sample_indices(probs, shots, rng)
    return {format(int(k), f"0{n}b"): int(counts[k]) for k in np.flatnonzero(counts)}


def expectation(state, instance) -> float:
    """Exact expected solution value of the state's Born distribution."""
    from ..problems import all_solution_values

    probs = probabilities(state)
    if probs.size != 1 << instance.n_qubits:
        raise ValueError("state dimension does not match the instance")
    return float(probs @ all_solution_values(instance))
