from .circuit import Circuit, CircuitStats, Gate, circuit_stats, gate_matrix, transpile
from .noise import NoiseParams
from .state import (
    MAX_IDEAL_QUBITS,
    MAX_NOISY_QUBITS,
    DensityState,
    StateVector,
    expectation,
    probabilities,
    run_ideal,
    run_noisy,
    sample,
)

__all__ = [
    "Circuit",
    "CircuitStats",
    "DensityState",
    "Gate",
    "MAX_IDEAL_QUBITS",
    "MAX_NOISY_QUBITS",
    "NoiseParams",
    "StateVector",
    "circuit_stats",
    "expectation",
    "gate_matrix",
    "probabilities",
    "run_ideal",
    "run_noisy",
    "sample",
    "transpile",
]
