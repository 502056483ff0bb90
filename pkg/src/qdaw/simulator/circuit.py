"""Circuits over the native gate set {RZ, SX, CX} and transpilation into it."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

NATIVE_GATES = ("RZ", "SX", "CX")
ABSTRACT_GATES = ("RX", "RY", "RZ", "H", "X", "CX", "RZZ", "SX")

HEADER = "QDAW-CIRCUIT v1"


class Gate(NamedTuple):
    name: str
    qubits: tuple[int, ...]
    theta: float | None = None


@dataclass
class Circuit:
    n_qubits: int
    ops: list[Gate] = field(default_factory=list)
    measured: bool = True

    def __post_init__(self):
        for g in self.ops:
            _check_gate(g, self.n_qubits, NATIVE_GATES)

    def __len__(self):
        return len(self.ops)

    def dumps(self) -> str:
        lines = [f"{HEADER} n={self.n_qubits}"]
        for g in self.ops:
            if g.name == "RZ":
                lines.append(f"RZ {g.qubits[0]} {g.theta!r}")
            elif g.name == "SX":
                lines.append(f"SX {g.qubits[0]}")
            else:
                lines.append(f"CX {g.qubits[0]} {g.qubits[1]}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Circuit":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith(HEADER + " n="):
            raise ValueError("missing circuit header")
        n = int(lines[0].split("n=")[1])
        ops = []
        for lineno, ln in enumerate(lines[1:], start=2):
            parts = ln.split()
            name = parts[0]
            if name == "RZ" and len(parts) == 3:
                ops.append(Gate("RZ", (int(parts[1]),), float(parts[2])))
            elif name == "SX" and len(parts) == 2:
                ops.append(Gate("SX", (int(parts[1]),)))
            elif name == "CX" and len(parts) == 3:
                ops.append(Gate("CX", (int(parts[1]), int(parts[2]))))
            else:
                raise ValueError(f"line {lineno}: cannot parse {ln!r}")
        return cls(n, ops)


def _check_gate(g: Gate, n: int, allowed: Iterable[str]) -> None:
    if g.name not in allowed:
        raise ValueError(f"unsupported gate {g.name!r}")
    arity = 2 if g.name in ("CX", "RZZ") else 1
    if len(g.qubits) != arity:
        raise ValueError(f"{g.name} acts on {arity} qubit(s)")
    if any(not 0 <= q < n for q in g.qubits):
        raise ValueError(f"qubit index out of range in {g}")
    if arity == 2 and g.qubits[0] == g.qubits[1]:
        raise ValueError("two-qubit gate on a single qubit")
    needs_angle = g.name in ("RX", "RY", "RZ", "RZZ")
    if needs_angle and (g.theta is None or not math.isfinite(g.theta)):
        raise ValueError(f"{g.name} needs a finite angle")


# --------------------------------------------------------------------------
# gate matrices
# --------------------------------------------------------------------------

SX_MATRIX = 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]])
CX_MATRIX = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)


def rz_matrix(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def rx_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def ry_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rzz_matrix(theta: float) -> np.ndarray:
    a, b = np.exp(-0.5j * theta), np.exp(0.5j * theta)
    return np.diag([a, b, b, a])


H_MATRIX = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
X_MATRIX = np.array([[0, 1], [1, 0]], dtype=complex)


def gate_matrix(g: Gate) -> np.ndarray:
    if g.name == "RZ":
        return rz_matrix(g.theta)
    if g.name == "SX":
        return SX_MATRIX
    if g.name == "CX":
        return CX_MATRIX
    if g.name == "RX":
        return rx_matrix(g.theta)
    if g.name == "RY":
        return ry_matrix(g.theta)
    if g.name == "H":
        return H_MATRIX
    if g.name == "X":
        return X_MATRIX
    if g.name == "RZZ":
        return rzz_matrix(g.theta)
    raise ValueError(f"unsupported gate {g.name!r}")


# --------------------------------------------------------------------------
# transpilation
# --------------------------------------------------------------------------

_HALF_PI = math.pi / 2


def _expand(g: Gate) -> list[Gate]:
    q = g.qubits
    if g.name in ("RZ", "SX", "CX"):
        return [g]
    if g.name == "H":
        return [Gate("RZ", q, _HALF_PI), Gate("SX", q), Gate("RZ", q, _HALF_PI)]
    if g.name == "X":
        return [Gate("SX", q), Gate("SX", q)]
    if g.name == "RX":
        # H RZ(theta) H with the inner RZ(pi/2) pairs merged
        return [
            Gate("RZ", q, _HALF_PI),
            Gate("SX", q),
            Gate("RZ", q, g.theta + math.pi),
            Gate("SX", q),
            Gate("RZ", q, _HALF_PI),
        ]
    if g.name == "RY":
        # S RX(theta) S^dagger
        return [Gate("RZ", q, -_HALF_PI)] + _expand(Gate("RX", q, g.theta)) + [Gate("RZ", q, _HALF_PI)]
    if g.name == "RZZ":
        a, b = q
        return [Gate("CX", (a, b)), Gate("RZ", (b,), g.theta), Gate("CX", (a, b))]
    raise ValueError(f"unsupported gate {g.name!r}")


def transpile(abstract_ops: Iterable, n_qubits: int) -> Circuit:
    """Rewrite abstract gates into {RZ, SX, CX}, equal up to global phase.

    Consecutive RZ rotations on a qubit are merged and exact zero rotations
    dropped.
    """
    ops: list[Gate] = []
    last_rz: dict[int, int] = {}
    for raw in abstract_ops:
        g = raw if isinstance(raw, Gate) else Gate(*raw)
        g = Gate(g.name.upper(), tuple(int(x) for x in g.qubits), None if g.theta is None else float(g.theta))
        _check_gate(g, n_qubits, ABSTRACT_GATES)
        for ng in _expand(g):
            if ng.name == "RZ":
                q = ng.qubits[0]
                pos = last_rz.get(q)
                if pos is not None:
                    prev = ops[pos]
                    ops[pos] = Gate("RZ", prev.qubits, prev.theta + ng.theta)
                    continue
                last_rz[q] = len(ops)
                ops.append(ng)
            else:
                for q in ng.qubits:
                    last_rz.pop(q, None)
                ops.append(ng)
    ops = [g for g in ops if not (g.name == "RZ" and g.theta == 0.0)]
    return Circuit(n_qubits, ops)


# --------------------------------------------------------------------------
# statistics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CircuitStats:
    d_cx: int
    n_cx: int
    duration: float


def circuit_stats(circuit: Circuit, noise=None) -> CircuitStats:
    """CX depth and count, and the estimated wall time of one shot.

    Gate times are taken from ``noise`` (a :class:`NoiseParams`), scaled by its
    level; the measurement time is added unscaled.
    """
    from .noise import NoiseParams

    noise = NoiseParams() if noise is None else noise
    t1, t2 = noise.scaled_gate_times()
    depth = [0] * circuit.n_qubits
    clock = [0.0] * circuit.n_qubits
    n_cx = 0
    for g in circuit.ops:
        if g.name == "CX":
            c, t = g.qubits
            n_cx += 1
            level = max(depth[c], depth[t]) + 1
            depth[c] = depth[t] = level
            end = max(clock[c], clock[t]) + t2
            clock[c] = clock[t] = end
        else:
            q = g.qubits[0]
            clock[q] += t1
    d_cx = max(depth, default=0)
    critical = max(clock, default=0.0)
    return CircuitStats(d_cx, n_cx, critical + (noise.t_meas if circuit.measured else 0.0))
