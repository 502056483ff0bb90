"""The five benchmark problems: generation, QUBO encoding, valuation and bounds.

All solution values are in maximisation convention:

* MaxCut: number of cut edges
* MIS: size of the independent set, or 1 if the set is not independent
* MVC: ``1 / |cover|``, or ``1 / n`` if the set is not a cover
* Partition: total weight of the lighter side
* Max3Sat: number of satisfied clauses (ancilla qubits are ignored)
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .qubo import IsingModel, Qubo, _CHUNK, bit_matrix, index_to_bits, parse_bits

MAX_BRUTE_FORCE_QUBITS = 24
DEFAULT_LB_SAMPLES = 2000

Literal = tuple[int, bool]
Clause = tuple[Literal, Literal, Literal]


class ProblemKind(str, enum.Enum):
    MAXCUT = "maxcut"
    MVC = "mvc"
    MIS = "mis"
    PARTITION = "partition"
    MAX3SAT = "max3sat"

    @classmethod
    def parse(cls, value) -> "ProblemKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(
                f"unknown problem {value!r}; expected one of {[k.value for k in cls]}"
            ) from None

    @property
    def is_graph(self) -> bool:
        return self in (ProblemKind.MAXCUT, ProblemKind.MVC, ProblemKind.MIS)


@dataclass(frozen=True)
class ProblemInstance:
    kind: ProblemKind
    n_qubits: int
    seed: int
    edges: tuple[tuple[int, int], ...] = ()
    weights: tuple[float, ...] = ()
    clauses: tuple[Clause, ...] = ()
    n_vars: int = 0

    def __post_init__(self):
        kind = ProblemKind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        if kind.is_graph:
            edges = tuple(sorted((min(u, v), max(u, v)) for u, v in self.edges))
            if any(u == v for u, v in edges):
                raise ValueError("graph contains a self-loop")
            if len(set(edges)) != len(edges):
                raise ValueError("graph contains duplicate edges")
            if any(not 0 <= u < self.n_qubits or not 0 <= v < self.n_qubits for u, v in edges):
                raise ValueError("edge endpoint out of range")
            object.__setattr__(self, "edges", edges)
        elif kind is ProblemKind.PARTITION:
            if len(self.weights) != self.n_qubits:
                raise ValueError("Partition needs one weight per qubit")
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        else:
            clauses = tuple(
                tuple((int(v), bool(neg)) for v, neg in clause) for clause in self.clauses
            )
            if any(len(c) != 3 for c in clauses):
                raise ValueError("each clause needs exactly three literals")
            if any(not 0 <= v < self.n_vars for c in clauses for v, _ in c):
                raise ValueError("literal refers to unknown variable")
            if self.n_vars + len(clauses) != self.n_qubits:
                raise ValueError("Max3Sat needs one qubit per variable and per clause")
            object.__setattr__(self, "clauses", clauses)

    @property
    def n_vertices(self) -> int:
        return self.n_qubits

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "n_qubits": self.n_qubits, "seed": self.seed}
        if self.kind.is_graph:
            d["edges"] = [[u, v] for u, v in self.edges]
        elif self.kind is ProblemKind.PARTITION:
            d["weights"] = list(self.weights)
        else:
            d["clauses"] = [[[v, neg] for v, neg in c] for c in self.clauses]
            d["n_vars"] = self.n_vars
        return d

    def to_json(self, indent: int | None = None) -> str:
        if indent is None:
            return json.dumps(self.to_dict(), separators=(",", ":"))
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemInstance":
        kind = ProblemKind.parse(d["kind"])
        kw = dict(kind=kind, n_qubits=int(d["n_qubits"]), seed=int(d["seed"]))
        if kind.is_graph:
            kw["edges"] = tuple((int(u), int(v)) for u, v in d["edges"])
        elif kind is ProblemKind.PARTITION:
            kw["weights"] = tuple(float(w) for w in d["weights"])
        else:
            kw["clauses"] = tuple(tuple((int(v), bool(neg)) for v, neg in c) for c in d["clauses"])
            kw["n_vars"] = int(d["n_vars"])
        return cls(**kw)

    @classmethod
    def from_json(cls, text: str) -> "ProblemInstance":
        return cls.from_dict(json.loads(text))

    @property
    def instance_id(self) -> str:
        return fnv1a_64(self.to_json().encode("utf-8"))


def fnv1a_64(data: bytes) -> str:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return f"{h:016x}"


# --------------------------------------------------------------------------
# generation
# --------------------------------------------------------------------------


def _is_tautology(clause: Clause) -> bool:
    lits = set(clause)
    return any((v, not neg) in lits for v, neg in lits)


def _draw(kind: ProblemKind, n: int, seed: int) -> ProblemInstance:
    rng = np.random.default_rng(seed)
    if kind.is_graph:
        edges = tuple(
            (u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.5
        )
        return ProblemInstance(kind, n, seed, edges=edges)
    if kind is ProblemKind.PARTITION:
        return ProblemInstance(kind, n, seed, weights=tuple(rng.random(n).tolist()))
    n_vars = int(rng.integers(1, n // 3 + 1))
    n_clauses = n - n_vars
    clauses = []
    for _ in range(n_clauses):
        picks = rng.integers(0, 2 * n_vars, size=3)
        clauses.append(tuple((int(k) // 2, bool(k % 2)) for k in picks))
    return ProblemInstance(kind, n, seed, clauses=tuple(clauses), n_vars=n_vars)


def _degenerate(inst: ProblemInstance) -> bool:
    if inst.kind.is_graph:
        return len(inst.edges) == 0
    if inst.kind is ProblemKind.MAX3SAT:
        return all(_is_tautology(c) for c in inst.clauses)
    return False


def generate_instance(kind, n_qubits: int, seed: int) -> ProblemInstance:
    """Draw a random instance; degenerate draws are retried with ``seed + 1``.

    Graphs are G(n, 1/2); Partition numbers are uniform on [0, 1]; Max3Sat has
    a uniform number of variables in ``[1, n // 3]`` and ``n - n_vars`` clauses,
    each uniform over the ``(2 n_vars)^3`` literal triples.
    """
    kind = ProblemKind.parse(kind)
    minimum = 4 if kind is ProblemKind.MAX3SAT else 2
    if not isinstance(n_qubits, (int, np.integer)) or n_qubits < minimum:
        raise ValueError(f"{kind.value} needs n_qubits >= {minimum}, got {n_qubits!r}")
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    for attempt in range(10_000):
        inst = _draw(kind, int(n_qubits), (seed + attempt) & 0xFFFFFFFFFFFFFFFF)
        if not _degenerate(inst):
            return inst
    raise RuntimeError("could not draw a non-degenerate instance")


# --------------------------------------------------------------------------
# encoding
# --------------------------------------------------------------------------


def _literal_form(lit: Literal) -> tuple[float, dict[int, float]]:
    v, neg = lit
    return (1.0, {v: -1.0}) if neg else (0.0, {v: 1.0})


def encode_qubo(instance: ProblemInstance) -> Qubo:
    """Minimisation QUBO whose minimisers are optimal solutions.

    MIS and MVC weigh the constraint term twice the objective term. Max3Sat
    uses one ancilla ``w_c`` per clause (qubit ``n_vars + c``) via
    ``l1 l2 l3 = max_w w (l1 + l2 + l3 - 2)``.
    """
    n = instance.n_qubits
    q = Qubo(n)
    kind = instance.kind
    if kind is ProblemKind.MAXCUT:
        for u, v in instance.edges:
            q.add_linear(u, -1.0)
            q.add_linear(v, -1.0)
            q.add(u, v, 2.0)
    elif kind is ProblemKind.MVC:
        for u, v in instance.edges:
            q.offset += 2.0
            q.add_linear(u, -2.0)
            q.add_linear(v, -2.0)
            q.add(u, v, 2.0)
        for v in range(n):
            q.add_linear(v, 1.0)
    elif kind is ProblemKind.MIS:
        for u, v in instance.edges:
            q.add(u, v, 2.0)
        for v in range(n):
            q.add_linear(v, -1.0)
    elif kind is ProblemKind.PARTITION:
        w = instance.weights
        ising = IsingModel(
            n,
            {},
            {(i, j): 2.0 * w[i] * w[j] for i in range(n) for j in range(i + 1, n)},
            float(sum(x * x for x in w)),
        )
        q = ising.to_qubo()
    else:
        for c, clause in enumerate(instance.clauses):
            anc = instance.n_vars + c
            forms = [_literal_form(l) for l in clause]
            # negate: minimise -(l1+l2+l3 - l1l2 - l1l3 - l2l3 + w(l1+l2+l3-2))
            for c0, terms in forms:
                q.offset -= c0
                for k, ck in terms.items():
                    q.add_linear(k, -ck)
                q.add_product((0.0, {anc: -1.0}), (c0, terms))
            q.add_linear(anc, 2.0)
            for a in range(3):
                for b in range(a + 1, 3):
                    q.add_product(forms[a], forms[b])
    q.quad = {k: v for k, v in sorted(q.quad.items()) if v != 0.0}
    return q


# --------------------------------------------------------------------------
# valuation
# --------------------------------------------------------------------------


def solution_values(instance: ProblemInstance, bits: np.ndarray) -> np.ndarray:
    """Vectorised :func:`solution_value` over the rows of a 0/1 matrix."""
    b = np.asarray(bits, dtype=np.int64)
    if b.ndim != 2 or b.shape[1] != instance.n_qubits:
        raise ValueError(f"expected rows of {instance.n_qubits} bits")
    kind = instance.kind
    n = instance.n_qubits
    if kind is ProblemKind.MAXCUT:
        out = np.zeros(b.shape[0])
        for u, v in instance.edges:
            out += b[:, u] ^ b[:, v]
        return out
    if kind is ProblemKind.MIS:
        conflict = np.zeros(b.shape[0], dtype=bool)
        for u, v in instance.edges:
            conflict |= (b[:, u] & b[:, v]).astype(bool)
        return np.where(conflict, 1.0, b.sum(axis=1).astype(float))
    if kind is ProblemKind.MVC:
        uncovered = np.zeros(b.shape[0], dtype=bool)
        for u, v in instance.edges:
            uncovered |= ((1 - b[:, u]) & (1 - b[:, v])).astype(bool)
        size = b.sum(axis=1)
        invalid = uncovered | (size == 0)
        return np.where(invalid, 1.0 / n, 1.0 / np.maximum(size, 1))
    if kind is ProblemKind.PARTITION:
        w = np.asarray(instance.weights)
        s = b @ w
        t = (1 - b) @ w
        return np.minimum(s, t)
    out = np.zeros(b.shape[0])
    for clause in instance.clauses:
        sat = np.zeros(b.shape[0], dtype=bool)
        for v, neg in clause:
            sat |= (b[:, v] == (0 if neg else 1))
        out += sat
    return out


def solution_value(instance: ProblemInstance, bits) -> float:
    x = parse_bits(bits, instance.n_qubits)
    return float(solution_values(instance, np.array([x]))[0])


def all_solution_values(instance: ProblemInstance) -> np.ndarray:
    """Value of every assignment of all qubits, big-endian index order."""
    n = instance.n_qubits
    if n > MAX_BRUTE_FORCE_QUBITS:
        raise ValueError(f"enumeration capped at {MAX_BRUTE_FORCE_QUBITS} qubits")
    total = 1 << n
    out = np.empty(total)
    for start in range(0, total, _CHUNK):
        stop = min(total, start + _CHUNK)
        out[start:stop] = solution_values(instance, bit_matrix(n, start, stop))
    return out


def brute_force_optimum(instance: ProblemInstance) -> tuple[tuple[int, ...], float]:
    """Exact maximiser; ties go to the lowest bitstring."""
    values = all_solution_values(instance)
    k = int(np.argmax(values))
    return index_to_bits(k, instance.n_qubits), float(values[k])


# --------------------------------------------------------------------------
# bounds
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Bounds:
    lb: float
    ub: float


def mis_upper_bound(n: int, m: int) -> float:
    return 0.5 + math.sqrt(0.25 + n * n - n - 2 * m)


def _clause_probability(clause: Clause) -> float:
    vars_ = sorted({v for v, _ in clause})
    hits = 0
    for k in range(1 << len(vars_)):
        assign = {v: (k >> i) & 1 for i, v in enumerate(vars_)}
        if any(assign[v] == (0 if neg else 1) for v, neg in clause):
            hits += 1
    return hits / (1 << len(vars_))


def bounds(instance: ProblemInstance, sample_count: int = DEFAULT_LB_SAMPLES, seed: int | None = None) -> Bounds:
    """Random-solution lower bound and classical upper bound.

    The lower bound is analytic for MaxCut and Max3Sat and the mean over
    ``sample_count`` uniform bitstrings otherwise (seeded from the instance).
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    kind = instance.kind
    n = instance.n_qubits
    m = len(instance.edges)
    if kind is ProblemKind.MAXCUT:
        lb, ub = m / 2, float(m)
    elif kind is ProblemKind.MAX3SAT:
        lb = float(sum(_clause_probability(c) for c in instance.clauses))
        ub = float(len(instance.clauses))
    else:
        rng = np.random.default_rng([instance.seed if seed is None else int(seed), 0x1B])
        samples = rng.integers(0, 2, size=(sample_count, n))
        lb = float(solution_values(instance, samples).mean())
        if kind is ProblemKind.PARTITION:
            ub = sum(instance.weights) / 2
        elif kind is ProblemKind.MIS:
            ub = mis_upper_bound(n, m)
        else:
            cover_floor = n - mis_upper_bound(n, m)
            ub = 1.0 / cover_floor if cover_floor > 0 else math.inf
    if not (lb < ub) or not math.isfinite(ub):
        raise ValueError(f"degenerate bounds lb={lb} ub={ub} for {kind.value} instance")
    return Bounds(lb, ub)


# --------------------------------------------------------------------------
# warm starts
# --------------------------------------------------------------------------


def greedy_matching_cover(n: int, edges: Sequence[tuple[int, int]]) -> tuple[int, ...]:
    matched = [False] * n
    for u, v in sorted(edges):
        if not matched[u] and not matched[v]:
            matched[u] = matched[v] = True
    return tuple(int(m) for m in matched)


def list_scheduling(weights: Sequence[float]) -> tuple[int, ...]:
    order = sorted(range(len(weights)), key=lambda i: (-weights[i], i))
    load = [0.0, 0.0]
    bits = [0] * len(weights)
    for i in order:
        side = 0 if load[0] <= load[1] else 1
        bits[i] = side
        load[side] += weights[i]
    return tuple(bits)


def _conditional_sat(clause: Clause, fixed: dict[int, int]) -> float:
    free = sorted({v for v, _ in clause if v not in fixed})
    hits = 0
    for k in range(1 << len(free)):
        assign = dict(fixed)
        assign.update({v: (k >> i) & 1 for i, v in enumerate(free)})
        if any(assign[v] == (0 if neg else 1) for v, neg in clause):
            hits += 1
    return hits / (1 << len(free))


def derandomized_max3sat(instance: ProblemInstance) -> tuple[int, ...]:
    """Method of conditional expectations, variables in index order."""
    fixed: dict[int, int] = {}
    for v in range(instance.n_vars):
        scores = []
        for value in (0, 1):
            trial = dict(fixed)
            trial[v] = value
            scores.append(sum(_conditional_sat(c, trial) for c in instance.clauses))
        fixed[v] = 1 if scores[1] > scores[0] else 0
    bits = [fixed[v] for v in range(instance.n_vars)]
    for clause in instance.clauses:
        true_lits = sum(fixed[v] == (0 if neg else 1) for v, neg in clause)
        bits.append(1 if true_lits == 3 else 0)
    return tuple(bits)


def warm_start(instance: ProblemInstance, maxcut_provider=None) -> tuple[int, ...]:
    """Classical approximate solution used by the warm-started variants.

    ``maxcut_provider`` is any callable ``(n, edges, seed) -> bits``; the
    default is :class:`qdaw.warmstart.BurerMonteiroMaxCut`.
    """
    kind = instance.kind
    if kind is ProblemKind.MAXCUT:
        if maxcut_provider is None:
            from .warmstart import BurerMonteiroMaxCut

            maxcut_provider = BurerMonteiroMaxCut()
        return tuple(maxcut_provider(instance.n_qubits, instance.edges, instance.seed))
    if kind is ProblemKind.MVC:
        return greedy_matching_cover(instance.n_qubits, instance.edges)
    if kind is ProblemKind.MIS:
        return tuple(1 - b for b in greedy_matching_cover(instance.n_qubits, instance.edges))
    if kind is ProblemKind.PARTITION:
        return list_scheduling(instance.weights)
    return derandomized_max3sat(instance)
