import itertools

import numpy as np
import pytest
from scipy.special import expit, roots_jacobi

from qdaw.records import ResultRecord
from qdaw.simulator import Circuit, Gate


# one line per acceptance criterion, echoed in the terminal summary
VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)


def make_record(instance_id="i0", problem="maxcut", n=5, layers=1, y=0.5, variant="QAOA", level=0.0,
                lb=1.0, ub=3.0, runtime=1.0, d_cx=None, n_cx=None, seed=0, timestamp="t"):
    d_cx = 2 * layers * n if d_cx is None else d_cx
    n_cx = 4 * layers * n if n_cx is None else n_cx
    return ResultRecord(
        instance_id=instance_id, problem=problem, n_qubits=n, instance_seed=seed, variant=variant,
        layers=layers, noise_level=float(level), shots=100, quality=lb + y * (ub - lb), normalized_y=y,
        lb=lb, ub=ub, runtime=runtime, quantum_runtime=runtime, classical_runtime=0.0, d_cx=d_cx,
        n_cx=n_cx, optimizer_iters=3, run_seed=seed, best_bits="0" * n, timestamp=timestamp,
    )


def synthetic_records(sizes=(5, 6, 7, 8, 9), per_size=12, layers=(1, 2, 3), coef=(1.0, -0.25, 0.3),
                      phi=60.0, seed=0, variant="QAOA", problem="maxcut"):
    """Beta-distributed normalised Y from a planted logit-linear mean."""
    rng = np.random.default_rng(seed)
    out = []
    for n in sizes:
        for i in range(per_size):
            iid = f"{problem}-{n}-{i}"
            for d in layers:
                mu = expit(coef[0] + coef[1] * n + coef[2] * d)
                y = float(rng.beta(mu * phi, (1 - mu) * phi))
                runtime = 1e-3 * (2 * d * n) ** 1.1
                out.append(make_record(iid, problem, n, d, y, variant, runtime=runtime, seed=i))
    return out


def quadrature_sample(alpha, beta_n, gamma_d, phi, sizes=range(5, 10), depths=range(1, 5), nodes=80):
    """Noise-free stand-in for an infinite Beta sample at every design point.

    The weighted likelihood over Gauss-Jacobi nodes is the expected
    log-likelihood, which the planted parameters maximise exactly.
    """
    n_all, d_all, y_all, w_all = [], [], [], []
    for n, d in itertools.product(sizes, depths):
        mu = expit(alpha + beta_n * n + gamma_d * d)
        a, b = mu * phi, (1 - mu) * phi
        x, w = roots_jacobi(nodes, b - 1, a - 1)
        n_all += [n] * nodes
        d_all += [d] * nodes
        y_all.append((1 + x) / 2)
        w_all.append(w / w.sum())
    return np.array(n_all), np.array(d_all), np.concatenate(y_all), np.concatenate(w_all)


def central_diff(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def random_native(n, length, rng):
    ops = []
    for _ in range(length):
        kind = rng.integers(3) if n > 1 else rng.integers(2)
        if kind == 0:
            ops.append(Gate("RZ", (int(rng.integers(n)),), float(rng.uniform(-np.pi, np.pi))))
        elif kind == 1:
            ops.append(Gate("SX", (int(rng.integers(n)),)))
        else:
            a, b = rng.choice(n, 2, replace=False)
            ops.append(Gate("CX", (int(a), int(b))))
    return Circuit(n, ops)


@pytest.fixture
def records():
    return synthetic_records()
