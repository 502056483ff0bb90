"""Box-constrained Levenberg-Marquardt for small nonlinear least-squares fits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class NLSError(RuntimeError):
    """Raised when a least-squares fit fails; carries the best point seen."""

    def __init__(self, message: str, best_x=None, best_cost=None):
        super().__init__(message)
        self.best_x = best_x
        self.best_cost = best_cost


@dataclass(frozen=True)
class NLSResult:
    x: np.ndarray
    cost: float  # 0.5 * sum of squared residuals
    iterations: int
    converged: bool

    @property
    def residual_ss(self) -> float:
        return 2.0 * self.cost


def numeric_jacobian(fun: Callable, x: np.ndarray, f0: np.ndarray | None = None) -> np.ndarray:
    """Central-difference Jacobian of ``fun`` at ``x``."""
    x = np.asarray(x, dtype=float)
    f0 = fun(x) if f0 is None else f0
    J = np.empty((f0.size, x.size))
    for k in range(x.size):
        h = 1e-6 * max(1.0, abs(x[k]))
        e = np.zeros_like(x)
        e[k] = h
        J[:, k] = (fun(x + e) - fun(x - e)) / (2 * h)
    return J


def levenberg_marquardt(fun: Callable, x0, jac: Callable | None = None, lower=None, upper=None,
                        max_iter: int = 500, ftol: float = 1e-15, xtol: float = 1e-12,
                        gtol: float = 1e-12) -> NLSResult:
    """Minimise ``0.5 * ||fun(x)||^2`` subject to ``lower <= x <= upper``.

    Steps solve ``(J^T J + mu * diag(J^T J)) dx = -J^T r`` (Marquardt scaling)
    and are projected onto the box. ``mu`` shrinks after accepted steps and
    grows after rejected ones.
    """
    x = np.asarray(x0, dtype=float).copy()
    lo = np.full_like(x, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    hi = np.full_like(x, np.inf) if upper is None else np.asarray(upper, dtype=float)
    if np.any(lo > hi):
        raise ValueError("lower bound above upper bound")
    x = np.clip(x, lo, hi)
    jac = jac or (lambda z: numeric_jacobian(fun, z))

    r = np.asarray(fun(x), dtype=float)
    if not np.all(np.isfinite(r)):
        raise NLSError("residuals not finite at the starting point", x, np.inf)
    cost = 0.5 * float(r @ r)
    mu = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        J = np.asarray(jac(x), dtype=float)
        g = J.T @ r
        # projected gradient: ignore components pushing against an active bound
        active = ((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0))
        if np.max(np.abs(np.where(active, 0.0, g)), initial=0.0) < gtol or cost == 0.0:
            converged = True
            break
        A = J.T @ J
        scale = np.maximum(np.diag(A), 1e-12)
        improved = False
        while mu < 1e16:
            try:
                step = np.linalg.solve(A + mu * np.diag(scale), -g)
            except np.linalg.LinAlgError:
                mu *= 10
                continue
            x_new = np.clip(x + step, lo, hi)
            r_new = np.asarray(fun(x_new), dtype=float)
            cost_new = 0.5 * float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf
            if cost_new < cost:
                improved = True
                break
            mu *= 10
        if not improved:
            converged = True  # no descent direction left at machine precision
            break
        dx = np.linalg.norm(x_new - x)
        dcost = cost - cost_new
        x, r, cost = x_new, r_new, cost_new
        mu = max(mu / 10, 1e-12)
        if dcost <= ftol * max(cost, 1e-300) or dx <= xtol * (np.linalg.norm(x) + xtol):
            converged = True
            break
    return NLSResult(x, cost, it, converged)


def multistart(fun: Callable, starts, **kwargs) -> NLSResult:
    """Best :func:`levenberg_marquardt` result over several starting points."""
    best = None
    errors = []
    for x0 in starts:
        try:
            res = levenberg_marquardt(fun, x0, **kwargs)
        except NLSError as exc:
            errors.append(exc)
            continue
        if best is None or res.cost < best.cost:
            best = res
    if best is None:
        err = min(errors, key=lambda e: e.best_cost if e.best_cost is not None else np.inf, default=None)
        raise NLSError("all starting points failed", getattr(err, "best_x", None), getattr(err, "best_cost", None))
    return best
