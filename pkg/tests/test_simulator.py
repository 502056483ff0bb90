import math
from functools import reduce

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_native
from qdaw.algorithms import build_qaoa_circuit
from qdaw.problems import bounds, encode_qubo, generate_instance, solution_value, ProblemInstance
from qdaw.simulator import (
    Circuit,
    Gate,
    NoiseParams,
    circuit_stats,
    expectation,
    gate_matrix,
    probabilities,
    run_ideal,
    run_noisy,
    sample,
    transpile,
)
from qdaw.simulator.noise import (
    ChannelCache,
    check_kraus,
    depolarizing_kraus,
    kraus_superop,
    thermal_relaxation_kraus,
)
from qdaw.simulator.state import DensityState, StateVector

I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0]).astype(complex)
H = np.array([[1, 1], [1, -1]]) / math.sqrt(2)


def ref_1q(name, theta=None):
    """Textbook single-qubit matrices, built independently of the simulator."""
    if name == "H":
        return H
    if name == "X":
        return X
    if name == "SX":
        return 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]])
    P = {"RX": X, "RY": Y, "RZ": Z}[name]
    return math.cos(theta / 2) * I2 - 1j * math.sin(theta / 2) * P


def embed(U, qubits, n):
    """Full 2^n operator for a gate; qubit 0 is the leftmost factor."""
    if len(qubits) == 1:
        mats = [U if q == qubits[0] else I2 for q in range(n)]
        return reduce(np.kron, mats)
    # two-qubit: permute a 4x4 into place via basis enumeration
    a, b = qubits
    dim = 1 << n
    full = np.zeros((dim, dim), dtype=complex)
    for col in range(dim):
        bits = [(col >> (n - 1 - q)) & 1 for q in range(n)]
        sub_in = 2 * bits[a] + bits[b]
        for sub_out in range(4):
            amp = U[sub_out, sub_in]
            if amp == 0:
                continue
            out = list(bits)
            out[a], out[b] = sub_out >> 1, sub_out & 1
            row = sum(bit << (n - 1 - q) for q, bit in enumerate(out))
            full[row, col] += amp
    return full


CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def ref_unitary(ops, n):
    U = np.eye(1 << n, dtype=complex)
    for name, qubits, *rest in ops:
        theta = rest[0] if rest else None
        if name == "CX":
            G = embed(CNOT, qubits, n)
        elif name == "RZZ":
            G = embed(np.diag(np.exp(-0.5j * theta * np.array([1, -1, -1, 1]))), qubits, n)
        else:
            G = embed(ref_1q(name, theta), qubits, n)
        U = G @ U
    return U


def equal_up_to_phase(a, b, tol=1e-9):
    k = np.argmax(np.abs(b))
    if abs(b.flat[k]) < 1e-12:
        return np.allclose(a, b, atol=tol)
    phase = a.flat[k] / b.flat[k]
    return abs(abs(phase) - 1) < tol and np.allclose(a, phase * b, atol=tol)


@st.composite
def abstract_circuits(draw, max_qubits=3, max_len=12):
    n = draw(st.integers(1, max_qubits))
    angle = st.floats(-2 * math.pi, 2 * math.pi, allow_nan=False)
    names = ["RX", "RY", "RZ", "H", "X", "SX"] + (["CX", "RZZ"] if n > 1 else [])
    ops = []
    for _ in range(draw(st.integers(0, max_len))):
        name = draw(st.sampled_from(names))
        if name in ("CX", "RZZ"):
            a, b = draw(st.permutations(range(n)))[:2]
            qubits = (a, b)
        else:
            qubits = (draw(st.integers(0, n - 1)),)
        theta = draw(angle) if name in ("RX", "RY", "RZ", "RZZ") else None
        ops.append((name, qubits, theta) if theta is not None else (name, qubits))
    return n, ops


class TestTranspile:
    def test_h_decomposition(self):
        c = transpile([("H", (0,))], 1)
        assert [g.name for g in c.ops] == ["RZ", "SX", "RZ"]
        assert all(g.theta == pytest.approx(math.pi / 2) for g in c.ops if g.name == "RZ")
        U = reduce(lambda acc, g: gate_matrix(g) @ acc, c.ops, np.eye(2))
        assert equal_up_to_phase(U, H)

    def test_rzz_uses_two_cx(self):
        c = transpile([("RZZ", (0, 1), 0.7)], 2)
        assert [g.name for g in c.ops] == ["CX", "RZ", "CX"]
        assert c.ops[1] == Gate("RZ", (1,), 0.7)
        assert circuit_stats(c).n_cx == 2

    def test_rz_native(self):
        assert transpile([("RZ", (0,), 0.3)], 1).ops == [Gate("RZ", (0,), 0.3)]

    def test_output_is_native(self):
        c = transpile([("RY", (0,), 0.1), ("RX", (1,), 0.2), ("H", (2,)), ("RZZ", (0, 2), 1.0)], 3)
        assert {g.name for g in c.ops} <= {"RZ", "SX", "CX"}

    @pytest.mark.parametrize("op", [("U3", (0,), 0.1), ("RX", (0,)), ("CX", (0, 0)), ("RZ", (5,), 0.1),
                                    ("RZ", (0,), float("nan"))])
    def test_rejects(self, op):
        with pytest.raises(ValueError):
            transpile([op], 2)

    def test_native_circuit_rejects_abstract(self):
        with pytest.raises(ValueError):
            Circuit(1, [Gate("H", (0,))])

    @settings(max_examples=80, deadline=None)
    @given(abstract_circuits())
    def test_equivalence_up_to_global_phase(self, case):
        n, ops = case
        want = ref_unitary(ops, n)[:, 0]
        got = run_ideal(transpile(ops, n)).amplitudes
        assert equal_up_to_phase(got, want)

    @settings(max_examples=30, deadline=None)
    @given(abstract_circuits(max_qubits=2, max_len=6))
    def test_full_unitary_equivalence(self, case):
        n, ops = case
        c = transpile(ops, n)
        U = np.eye(1 << n, dtype=complex)
        for g in c.ops:
            U = (embed(CNOT, g.qubits, n) if g.name == "CX" else embed(ref_1q(g.name, g.theta), g.qubits, n)) @ U
        assert equal_up_to_phase(U, ref_unitary(ops, n))


class TestDump:
    def test_round_trip(self):
        c = random_native(3, 25, np.random.default_rng(0))
        text = c.dumps()
        assert text.startswith("QDAW-CIRCUIT v1 n=3\n")
        back = Circuit.loads(text)
        assert back.ops == c.ops and back.n_qubits == 3

    def test_format(self):
        c = Circuit(2, [Gate("RZ", (0,), 0.5), Gate("SX", (1,)), Gate("CX", (0, 1))])
        assert c.dumps().splitlines()[1:] == ["RZ 0 0.5", "SX 1", "CX 0 1"]

    @pytest.mark.parametrize("text", ["", "QDAW-CIRCUIT v1 n=2\nRX 0 1.0\n", "junk\n"])
    def test_bad_input(self, text):
        with pytest.raises(ValueError):
            Circuit.loads(text)


class TestIdeal:
    def test_empty(self):
        psi = run_ideal(Circuit(3)).amplitudes
        assert psi[0] == 1 and np.allclose(psi[1:], 0)

    def test_x_then_cx(self):
        psi = run_ideal(transpile([("X", (0,)), ("CX", (0, 1))], 2)).amplitudes
        assert abs(psi[3]) == pytest.approx(1.0)

    def test_norm_preserved(self):
        rng = np.random.default_rng(4)
        for n in (1, 4, 7):
            psi = run_ideal(random_native(n, 60, rng)).amplitudes
            assert abs(np.linalg.norm(psi) - 1) < 1e-10

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(5)
        c = random_native(4, 40, rng)
        U = np.eye(16, dtype=complex)
        for g in c.ops:
            U = (embed(CNOT, g.qubits, 4) if g.name == "CX" else embed(ref_1q(g.name, g.theta), g.qubits, 4)) @ U
        assert np.allclose(run_ideal(c).amplitudes, U[:, 0], atol=1e-10)

    def test_size_cap(self):
        with pytest.raises(ValueError, match="capped"):
            run_ideal(Circuit(25))

    def test_single_edge_landscape_optimum(self):
        # brute-force grid over (gamma, beta) for one edge; the p=1 optimum is a cut value of 1
        ising = encode_qubo(ProblemInstance("maxcut", 2, 0, edges=((0, 1),))).to_ising()
        inst = ProblemInstance("maxcut", 2, 0, edges=((0, 1),))
        grid = np.linspace(0, np.pi, 33)
        best = max(expectation(run_ideal(build_qaoa_circuit(ising, [g], [b])), inst) for g in grid for b in grid)
        assert best == pytest.approx(1.0, abs=1e-9)
        at = expectation(run_ideal(build_qaoa_circuit(ising, [np.pi / 2], [7 * np.pi / 8])), inst)
        assert at == pytest.approx(1.0, abs=1e-12)


class TestChannels:
    def test_depolarising_full_on_plus(self):
        plus = np.full((2, 2), 0.5, dtype=complex)
        out = sum(K @ plus @ K.conj().T for K in depolarizing_kraus(1.0))
        assert np.allclose(out, np.eye(2) / 2, atol=1e-12)

    def test_two_qubit_depolarising_replaces_by_identity_over_four(self):
        rho = np.zeros((4, 4), dtype=complex)
        rho[3, 3] = 1
        out = sum(K @ rho @ K.conj().T for K in depolarizing_kraus(1.0, 2))
        assert np.allclose(out, np.eye(4) / 4, atol=1e-12)

    def test_relaxation_ten_t1(self):
        one = np.diag([0.0, 1.0]).astype(complex)
        T1 = 100e-6
        out = sum(K @ one @ K.conj().T for K in thermal_relaxation_kraus(10 * T1, T1, 85e-6))
        z = float(np.real(np.trace(Z @ out)))
        assert z >= 1 - 2 * math.exp(-10)

    def test_relaxation_coherence_decay(self):
        plus = np.full((2, 2), 0.5, dtype=complex)
        t, T1, T2 = 3e-6, 100e-6, 85e-6
        out = sum(K @ plus @ K.conj().T for K in thermal_relaxation_kraus(t, T1, T2))
        assert abs(out[0, 1]) == pytest.approx(0.5 * math.exp(-t / T2), rel=1e-12)
        assert out[1, 1].real == pytest.approx(0.5 * math.exp(-t / T1), rel=1e-12)

    def test_kraus_complete(self):
        for level in (0.0, 0.5, 1.0, 3.0):
            for ops in ChannelCache(NoiseParams(level=level)).all_kraus_sets():
                check_kraus(ops)

    def test_incomplete_kraus_rejected(self):
        with pytest.raises(ValueError):
            check_kraus([np.eye(2) * 0.9])

    @pytest.mark.parametrize("kw", [{"p1": 1.5}, {"T2": 300e-6}, {"level": -1}, {"level": 100.0}, {"t1q": -1}])
    def test_invalid_params(self, kw):
        with pytest.raises(ValueError):
            NoiseParams(**kw)

    def test_level_scales_times(self):
        n = NoiseParams(level=2.0)
        assert n.scaled_gate_times() == (70e-9, 800e-9)


class TestNoisy:
    def test_zero_level_matches_ideal(self):
        rng = np.random.default_rng(6)
        for n in (1, 3, 4):
            c = random_native(n, 30, rng)
            psi = run_ideal(c).amplitudes
            rho = run_noisy(c, NoiseParams(level=0.0)).matrix
            assert np.allclose(rho, np.outer(psi, psi.conj()), atol=1e-9)

    def test_density_invariants(self):
        rng = np.random.default_rng(7)
        c = random_native(4, 40, rng)
        rho = run_noisy(c, NoiseParams(level=2.0)).matrix
        assert abs(np.trace(rho) - 1) < 1e-9
        assert np.allclose(rho, rho.conj().T, atol=1e-12)
        assert np.linalg.eigvalsh(rho).min() >= -1e-9

    def test_purity_drops(self):
        rng = np.random.default_rng(8)
        for level in (0.1, 1.0):
            c = random_native(3, 5, rng)
            assert run_noisy(c, NoiseParams(level=level)).purity() < 1

    def test_matches_kraus_oracle(self):
        # apply every channel with explicit Kraus sums on the full matrix
        n = 2
        c = Circuit(n, [Gate("SX", (0,)), Gate("CX", (0, 1)), Gate("RZ", (1,), 0.4)])
        noise = NoiseParams(level=5.0)
        cache = ChannelCache(noise)
        rho = np.zeros((4, 4), dtype=complex)
        rho[0, 0] = 1

        def channel(rho, kraus, qubits):
            return sum(embed(K, qubits, n) @ rho @ embed(K, qubits, n).conj().T for K in kraus)

        for g in c.ops:
            if g.name == "CX":
                U = embed(CNOT, g.qubits, n)
                rho = U @ rho @ U.conj().T
                rho = channel(rho, cache.two_relax_kraus, g.qubits)
                rho = channel(rho, cache.dep2_kraus, g.qubits)
            else:
                U = embed(ref_1q(g.name, g.theta), g.qubits, n)
                rho = U @ rho @ U.conj().T
                rho = channel(rho, cache.one_kraus, g.qubits)
                rho = channel(rho, cache.dep1_kraus, g.qubits)
        for q in range(n):
            rho = channel(rho, cache.measure_kraus, (q,))
        assert np.allclose(run_noisy(c, noise).matrix, rho, atol=1e-12)

    def test_measurement_relaxation_switch(self):
        c = transpile([("X", (0,))], 1)
        on = run_noisy(c, NoiseParams(level=1.0)).probabilities()
        off = run_noisy(c, NoiseParams(level=1.0, measurement_relaxation=False)).probabilities()
        assert on[0] > off[0]

    def test_size_cap(self):
        with pytest.raises(ValueError, match="capped"):
            run_noisy(Circuit(13), NoiseParams())

    def test_noise_monotone_in_level(self):
        means = []
        insts = [generate_instance("maxcut", 4, s) for s in range(20)]
        prepared = []
        for inst in insts:
            b = bounds(inst)
            # angles in the improving direction; noise then pulls quality back toward lb
            c = build_qaoa_circuit(encode_qubo(inst).to_ising(), [0.4], [-0.3])
            prepared.append((inst, b, c))
        for level in (0.0, 0.5, 1.0, 2.0):
            ys = [(expectation(run_noisy(c, NoiseParams(level=level)), inst) - b.lb) / (b.ub - b.lb)
                  for inst, b, c in prepared]
            means.append(np.mean(ys))
        assert all(later <= earlier + 0.01 for earlier, later in zip(means, means[1:]))


class TestReadout:
    def test_sample_ground(self):
        assert sample(run_ideal(Circuit(3)), 100, 0) == {"000": 100}

    def test_sample_plus(self):
        counts = sample(run_ideal(transpile([("H", (0,))], 1)), 10_000, 3)
        assert abs(counts.get("0", 0) - 5000) <= 3 * 50
        assert sum(counts.values()) == 10_000

    def test_sample_deterministic(self):
        state = run_ideal(transpile([("H", (0,)), ("H", (1,))], 2))
        assert sample(state, 500, 9) == sample(state, 500, 9)

    def test_sample_density(self):
        rho = np.diag([0.0, 1.0, 0.0, 0.0]).astype(complex)
        assert sample(DensityState(rho), 10, 1) == {"01": 10}

    def test_sample_validates_shots(self):
        with pytest.raises(ValueError):
            sample(run_ideal(Circuit(1)), 0, 0)

    def test_big_endian_probabilities(self):
        p = probabilities(run_ideal(transpile([("X", (0,))], 2)))
        assert p[2] == pytest.approx(1.0)

    def test_expectation_ground_cut(self):
        inst = generate_instance("maxcut", 5, 2)
        assert expectation(run_ideal(Circuit(5)), inst) == 0

    def test_expectation_basis(self):
        inst = generate_instance("mis", 4, 3)
        ops = [("X", (0,)), ("X", (2,))]
        assert expectation(run_ideal(transpile(ops, 4)), inst) == solution_value(inst, "1010")

    def test_expectation_uniform_is_lb(self):
        for kind in ("maxcut", "max3sat", "partition"):
            inst = generate_instance(kind, 6, 1)
            uniform = StateVector(np.full(64, 1 / 8, dtype=complex))
            assert expectation(uniform, inst) == pytest.approx(bounds(inst).lb, rel=0.03)

    def test_expectation_dimension(self):
        with pytest.raises(ValueError):
            expectation(run_ideal(Circuit(2)), generate_instance("maxcut", 3, 0))


class TestStats:
    def test_single_edge_p1(self):
        inst = ProblemInstance("maxcut", 2, 0, edges=((0, 1),))
        c = build_qaoa_circuit(encode_qubo(inst).to_ising(), [0.3], [0.2])
        s = circuit_stats(c)
        assert (s.n_cx, s.d_cx) == (2, 2)

    def test_no_cx(self):
        s = circuit_stats(transpile([("H", (0,)), ("H", (1,))], 2))
        assert s.d_cx == 0 and s.n_cx == 0

    def test_parallel_cx(self):
        s = circuit_stats(Circuit(4, [Gate("CX", (0, 1)), Gate("CX", (2, 3))]))
        assert (s.d_cx, s.n_cx) == (1, 2)

    def test_chain_depth(self):
        s = circuit_stats(Circuit(3, [Gate("CX", (0, 1)), Gate("CX", (1, 2)), Gate("CX", (0, 1))]))
        assert (s.d_cx, s.n_cx) == (3, 3)

    def test_duration_critical_path(self):
        noise = NoiseParams()
        c = Circuit(3, [Gate("SX", (0,)), Gate("SX", (0,)), Gate("CX", (1, 2)), Gate("CX", (0, 1))])
        # qubit 0: 2 x 35 ns, then CX waits for max(70, 400) ns
        expected = 400e-9 + 400e-9 + 4e-6
        assert circuit_stats(c, noise).duration == pytest.approx(expected)

    def test_duration_scales_with_level(self):
        c = Circuit(2, [Gate("CX", (0, 1))])
        assert circuit_stats(c, NoiseParams(level=2.0)).duration == pytest.approx(800e-9 + 4e-6)
