"""QAOA, the two warm-started variants and recursive QAOA.

Each run optimises circuit angles with COBYLA against a shot-sampled estimate
of the QUBO energy, then reports the exact expected solution value of the
optimised state together with an execution-time estimate.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .problems import (
    ProblemInstance,
    all_solution_values,
    bounds as problem_bounds,
    encode_qubo,
    warm_start,
)
from .qubo import IsingModel, index_to_bits
from .simulator import (
    MAX_IDEAL_QUBITS,
    MAX_NOISY_QUBITS,
    Circuit,
    Gate,
    NoiseParams,
    circuit_stats,
    run_ideal,
    run_noisy,
    transpile,
)
from .simulator.state import sample_indices

MAX_IDEAL_LAYERS = 7
MAX_NOISY_LAYERS = 4


class Variant(str, enum.Enum):
    QAOA = "QAOA"
    WSQAOA = "WSQAOA"
    WSINITQAOA = "WSInitQAOA"
    RQAOA = "RQAOA"

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, cls):
            return value
        for v in cls:
            if str(value).lower() in (v.value.lower(), v.name.lower()):
                return v
        raise ValueError(f"unknown variant {value!r}; expected one of {[v.value for v in cls]}")

    @property
    def order(self) -> int:
        return list(Variant).index(self)


@dataclass(frozen=True)
class AlgorithmSpec:
    variant: Variant
    layers: int
    shots: int = 10_000
    tolerance: float = 0.01
    max_iters: int = 150
    ws_epsilon: float = 0.25
    rqaoa_cutoff: int = 5

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if not 1 <= self.layers <= MAX_IDEAL_LAYERS:
            raise ValueError(f"layers must lie in [1, {MAX_IDEAL_LAYERS}]")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0.0 <= self.ws_epsilon <= 0.5:
            raise ValueError("ws_epsilon must lie in [0, 0.5]")
        if self.rqaoa_cutoff < 1:
            raise ValueError("rqaoa_cutoff must be >= 1")

    def label(self) -> str:
        return f"{self.variant.value}(p={self.layers})"


@dataclass(frozen=True)
class Backend:
    """Ideal statevector backend when ``noise`` is None, density matrix otherwise.

    With ``exact=True`` the optimiser sees the exact expectation instead of a
    shot-sampled estimate (shots are still charged to the runtime estimate).
    """

    noise: NoiseParams | None = None
    exact: bool = False

    @classmethod
    def ideal(cls, exact: bool = False) -> "Backend":
        return cls(None, exact)

    @classmethod
    def noisy(cls, noise: NoiseParams | None = None, level: float | None = None) -> "Backend":
        noise = NoiseParams() if noise is None else noise
        if level is not None:
            noise = noise.at_level(level)
        return cls(noise)

    @property
    def level(self) -> float:
        return 0.0 if self.noise is None else self.noise.level

    @property
    def max_qubits(self) -> int:
        return MAX_IDEAL_QUBITS if self.noise is None else MAX_NOISY_QUBITS

    @property
    def timing(self) -> NoiseParams:
        # ideal runs are timed with the baseline device gate durations
        return NoiseParams() if self.noise is None else self.noise

    def probabilities(self, circuit: Circuit) -> np.ndarray:
        if self.noise is None:
            return run_ideal(circuit).probabilities()
        return run_noisy(circuit, self.noise).probabilities()


@dataclass(frozen=True)
class WarmStart:
    values: tuple[float, ...]
    epsilon: float = 0.25

    def angles(self) -> np.ndarray:
        c = np.clip(np.asarray(self.values, dtype=float), self.epsilon, 1 - self.epsilon)
        return 2 * np.arcsin(np.sqrt(c))


@dataclass
class Outcome:
    variant: str
    layers: int
    quality: float
    normalized_y: float
    lb: float
    ub: float
    runtime: float
    quantum_runtime: float
    classical_runtime: float
    d_cx: int
    n_cx: int
    optimizer_iters: int
    best_bits: str
    noise_level: float
    shots: int

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# circuits
# --------------------------------------------------------------------------


def qaoa_ops(ising: IsingModel, gammas, betas, initial: WarmStart | None = None,
             mixer: WarmStart | None = None) -> list[Gate]:
    n = ising.n
    ops: list[Gate] = []
    if initial is None:
        ops += [Gate("H", (q,)) for q in range(n)]
    else:
        ops += [Gate("RY", (q,), float(t)) for q, t in enumerate(initial.angles())]
    mixer_angles = None if mixer is None else mixer.angles()
    for gamma, beta in zip(gammas, betas):
        for i, h in ising.linear.items():
            if h != 0.0:
                ops.append(Gate("RZ", (i,), 2 * gamma * h))
        for (i, j), J in ising.quadratic.items():
            if J != 0.0:
                ops.append(Gate("RZZ", (i, j), 2 * gamma * J))
        for q in range(n):
            if mixer_angles is None:
                ops.append(Gate("RX", (q,), 2 * beta))
            else:
                t = float(mixer_angles[q])
                ops += [Gate("RY", (q,), -t), Gate("RZ", (q,), -2 * beta), Gate("RY", (q,), t)]
    return ops


def build_qaoa_circuit(ising: IsingModel, gammas, betas, initial: WarmStart | None = None,
                       mixer: WarmStart | None = None) -> Circuit:
    """Transpiled QAOA circuit; ``None`` selects the |+> state / X mixer."""
    gammas = list(gammas)
    betas = list(betas)
    if ising.n < 1 or not gammas or len(gammas) != len(betas):
        raise ValueError("need n >= 1 and matching, non-empty angle lists")
    return transpile(qaoa_ops(ising, gammas, betas, initial, mixer), ising.n)


# --------------------------------------------------------------------------
# angle optimisation
# --------------------------------------------------------------------------


@dataclass
class OptimizationResult:
    params: np.ndarray
    value: float
    evaluations: int
    circuit_time: float = 0.0  # wall time spent building/transpiling circuits
    overhead_time: float = 0.0  # optimiser wall time outside circuit work


def optimize_angles(builder: Callable[[np.ndarray], Circuit], backend: Backend, spec: AlgorithmSpec,
                    energies: np.ndarray, rng: np.random.Generator) -> OptimizationResult:
    """Minimise the (sampled) expected energy over ``2 * layers`` angles.

    COBYLA with ``tol=spec.tolerance`` and at most ``spec.max_iters`` objective
    evaluations; the initial point is uniform on ``(0, pi/2)``. Returns the best
    evaluated point.
    """
    p = spec.layers
    x0 = rng.uniform(0.0, math.pi / 2, size=2 * p)
    best = {"value": math.inf, "params": x0.copy()}
    timers = {"build": 0.0, "inner": 0.0, "evals": 0}

    def objective(x):
        t0 = time.perf_counter()
        circuit = builder(x)
        t1 = time.perf_counter()
        probs = backend.probabilities(circuit)
        if backend.exact:
            value = float(probs @ energies)
        else:
            counts = sample_indices(probs, spec.shots, rng)
            value = float(counts @ energies) / spec.shots
        t2 = time.perf_counter()
        timers["build"] += t1 - t0
        timers["inner"] += t2 - t0
        timers["evals"] += 1
        if value < best["value"]:
            best["value"] = value
            best["params"] = np.array(x, dtype=float)
        return value

    start = time.perf_counter()
    minimize(objective, x0, method="COBYLA", tol=spec.tolerance, options={"maxiter": spec.max_iters})
    total = time.perf_counter() - start
    return OptimizationResult(
        params=best["params"],
        value=best["value"],
        evaluations=timers["evals"],
        circuit_time=timers["build"],
        overhead_time=max(0.0, total - timers["inner"]),
    )


def split_params(x, layers: int) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    return x[:layers], x[layers:]


# --------------------------------------------------------------------------
# runs
# --------------------------------------------------------------------------


def _check_feasible(spec: AlgorithmSpec, instance: ProblemInstance, backend: Backend) -> None:
    if instance.n_qubits > backend.max_qubits:
        raise ValueError(f"{instance.n_qubits} qubits exceed the backend cap of {backend.max_qubits}")
    if backend.noise is not None and spec.layers > MAX_NOISY_LAYERS:
        raise ValueError(f"noisy runs are limited to {MAX_NOISY_LAYERS} layers")


def _ws_config(spec: AlgorithmSpec, ws_bits) -> tuple[WarmStart | None, WarmStart | None]:
    if spec.variant is Variant.WSINITQAOA:
        return WarmStart(tuple(float(b) for b in ws_bits), spec.ws_epsilon), None
    if spec.variant is Variant.WSQAOA:
        w = WarmStart(tuple(float(b) for b in ws_bits), spec.ws_epsilon)
        return w, w
    return None, None


class _Ledger:
    """Accumulates runtime components over all circuit executions of a run."""

    def __init__(self, backend: Backend, shots: int, measure_classical: bool):
        self.backend = backend
        self.shots = shots
        self.measure_classical = measure_classical
        self.quantum = 0.0
        self.classical = 0.0
        self.evaluations = 0
        self.first_stats = None

    def add_classical(self, seconds: float) -> None:
        if self.measure_classical:
            self.classical += seconds

    def add_circuit_runs(self, circuit: Circuit, runs: int) -> None:
        stats = circuit_stats(circuit, self.backend.timing)
        if self.first_stats is None:
            self.first_stats = stats
        self.quantum += runs * self.shots * stats.duration


def _optimise_ising(ising: IsingModel, spec: AlgorithmSpec, backend: Backend, rng, ledger: _Ledger,
                    initial=None, mixer=None) -> tuple[np.ndarray, Callable]:
    energies = ising.energies()
    p = spec.layers

    def builder(x):
        g, b = split_params(x, p)
        return build_qaoa_circuit(ising, g, b, initial, mixer)

    res = optimize_angles(builder, backend, spec, energies, rng)
    t0 = time.perf_counter()
    final_circuit = builder(res.params)
    ledger.add_classical(res.circuit_time + res.overhead_time + time.perf_counter() - t0)
    # optimiser evaluations plus one final read-out of the optimised state
    ledger.add_circuit_runs(final_circuit, res.evaluations + 1)
    ledger.evaluations += res.evaluations
    return backend.probabilities(final_circuit), builder


def _best_sampled_bits(probs, values, shots, rng, n) -> str:
    counts = sample_indices(probs, shots, rng)
    seen = np.flatnonzero(counts)
    k = int(seen[np.argmax(values[seen])])  # first max -> lexicographically lowest
    return "".join(str(b) for b in index_to_bits(k, n))


def _correlations(probs: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    P = probs.reshape((2,) * n)
    Z = np.array([1.0, -1.0])
    single = np.empty(n)
    for i in range(n):
        marg = P.sum(axis=tuple(a for a in range(n) if a != i))
        single[i] = marg @ Z
    pair = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            marg = P.sum(axis=tuple(a for a in range(n) if a not in (i, j)))
            pair[i, j] = pair[j, i] = Z @ marg @ Z
    return single, pair


def _rqaoa(instance: ProblemInstance, spec: AlgorithmSpec, backend: Backend, rng, ledger: _Ledger):
    ising = encode_qubo(instance).to_ising()
    active = list(range(instance.n_qubits))  # original index of each current variable
    fixes: list[tuple[int, int, int | None]] = []
    while ising.n > spec.rqaoa_cutoff:
        candidates = []
        if ising.linear or ising.quadratic:
            probs, _ = _optimise_ising(ising, spec, backend, rng, ledger)
            single, pair = _correlations(probs, ising.n)
            candidates += [(round(abs(single[i]), 10), (i,), single[i]) for i, h in ising.linear.items() if h != 0.0]
            candidates += [(round(abs(pair[i, j]), 10), (i, j), pair[i, j])
                           for (i, j), c in ising.quadratic.items() if c != 0.0]
        if not candidates:
            break
        _, key, m = min(candidates, key=lambda c: (-c[0], c[1]))
        sign = 1 if m >= 0 else -1
        if len(key) == 1:
            i = key[0]
            fixes.append((active[i], sign, None))
            ising = ising.substitute(i, sign)
        else:
            i, j = key
            fixes.append((active[i], sign, active[j]))
            ising = ising.substitute(i, sign, j)
        del active[i]
    t0 = time.perf_counter()
    k = int(np.argmin(ising.energies())) if ising.n else 0
    spins = {orig: 1 - 2 * b for orig, b in zip(active, index_to_bits(k, ising.n))}
    for orig, sign, other in reversed(fixes):
        spins[orig] = sign * (1 if other is None else spins[other])
    ledger.add_classical(time.perf_counter() - t0)
    return "".join("0" if spins[q] == 1 else "1" for q in range(instance.n_qubits))


def run_algorithm(spec: AlgorithmSpec, instance: ProblemInstance, backend: Backend | None = None,
                  seed=0, measure_classical: bool = True, warm_start_provider=None) -> Outcome:
    """Execute one (instance, algorithm, backend) combination."""
    backend = Backend.ideal() if backend is None else backend
    _check_feasible(spec, instance, backend)
    rng = np.random.default_rng(seed)
    b = problem_bounds(instance)
    values = all_solution_values(instance)
    ledger = _Ledger(backend, spec.shots, measure_classical)
    n = instance.n_qubits

    if spec.variant is Variant.RQAOA:
        bits = _rqaoa(instance, spec, backend, rng, ledger)
        quality = float(values[int(bits, 2)])
        best_bits = bits
    else:
        ising = encode_qubo(instance).to_ising()
        initial = mixer = None
        if spec.variant in (Variant.WSQAOA, Variant.WSINITQAOA):
            t0 = time.perf_counter()
            ws = warm_start(instance, warm_start_provider)
            ledger.add_classical(time.perf_counter() - t0)
            initial, mixer = _ws_config(spec, ws)
        probs, _ = _optimise_ising(ising, spec, backend, rng, ledger, initial, mixer)
        quality = float(probs @ values)
        best_bits = _best_sampled_bits(probs, values, spec.shots, rng, n)

    if ledger.first_stats is None:
        # RQAOA that finished classically still reports the first circuit shape
        ising = encode_qubo(instance).to_ising()
        c = build_qaoa_circuit(ising, [0.1] * spec.layers, [0.1] * spec.layers)
        ledger.first_stats = circuit_stats(c, backend.timing)
    stats = ledger.first_stats
    return Outcome(
        variant=spec.variant.value,
        layers=spec.layers,
        quality=quality,
        normalized_y=(quality - b.lb) / (b.ub - b.lb),
        lb=b.lb,
        ub=b.ub,
        runtime=ledger.quantum + ledger.classical,
        quantum_runtime=ledger.quantum,
        classical_runtime=ledger.classical,
        d_cx=stats.d_cx,
        n_cx=stats.n_cx,
        optimizer_iters=ledger.evaluations,
        best_bits=best_bits,
        noise_level=backend.level,
        shots=spec.shots,
    )


def evaluate_angles(spec: AlgorithmSpec, instance: ProblemInstance, gammas, betas,
                    backend: Backend | None = None, warm_start_provider=None) -> float:
    """Exact expected solution value of one QAOA-type circuit at fixed angles."""
    backend = Backend.ideal() if backend is None else backend
    ising = encode_qubo(instance).to_ising()
    initial = mixer = None
    if spec.variant in (Variant.WSQAOA, Variant.WSINITQAOA):
        initial, mixer = _ws_config(spec, warm_start(instance, warm_start_provider))
    circuit = build_qaoa_circuit(ising, gammas, betas, initial, mixer)
    return float(backend.probabilities(circuit) @ all_solution_values(instance))


def first_circuit(spec: AlgorithmSpec, instance: ProblemInstance, ws_bits=None,
                  warm_start_provider=None) -> Circuit:
    """The (first) circuit a run of ``spec`` executes, at placeholder angles.

    Structure and therefore CX statistics do not depend on the angle values.
    """
    ising = encode_qubo(instance).to_ising()
    initial = mixer = None
    if spec.variant in (Variant.WSQAOA, Variant.WSINITQAOA):
        if ws_bits is None:
            ws_bits = warm_start(instance, warm_start_provider)
        initial, mixer = _ws_config(spec, ws_bits)
    angles = [0.1] * spec.layers
    return build_qaoa_circuit(ising, angles, angles, initial, mixer)
