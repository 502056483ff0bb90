"""Solution-quality and runtime prediction models.

Quality is predicted in normalised form ``Y = (f - lb) / (ub - lb)`` by either
a beta regression ``Y ~ sigmoid(alpha + beta_n * n + gamma_d * d)`` or a power
law ``Y ~ ybar_d * (1 + alpha * (n - b)) ** beta`` anchored at a baseline size
``b``. Noisy quality is obtained from an ideal prediction through the
degradation model

    f_noisy = lb + (f_ideal - lb) * (1 - l*beta) ** (n * d_cx) * (1 - l*gamma) ** n_cx

and runtime follows ``T ~ alpha * d_cx ** beta`` fitted in log-log space.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import digamma, expit, gammaln, logit, polygamma

from .nls import NLSError, multistart

MIN_RECORDS = 20
BETA_GTOL = 1e-6
BETA_MAX_ITER = 500
QUALITY_MODELS = ("beta", "power_law")


class ModelFitError(RuntimeError):
    pass


class UntrainedModel(LookupError):
    """No trained model exists for the requested scope."""


# --------------------------------------------------------------------------
# features
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Features:
    n: int
    d: int
    d_cx: int
    n_cx: int
    lb: float
    ub: float


def _arrays(records, *names) -> list[np.ndarray]:
    return [np.array([getattr(r, k) for r in records], dtype=float) for k in names]


def y_to_f(y, lb, ub):
    return lb + np.asarray(y) * (ub - lb)


def f_to_y(f, lb, ub):
    return (np.asarray(f) - lb) / (ub - lb)


# --------------------------------------------------------------------------
# beta regression
# --------------------------------------------------------------------------


def compress_unit(y: np.ndarray) -> np.ndarray:
    """Smithson-Verkuilen squeeze of ``[0, 1]`` into the open interval."""
    y = np.clip(np.asarray(y, dtype=float), 0.0, 1.0)
    N = y.size
    return (y * (N - 1) + 0.5) / N


def prepare_response(y: np.ndarray) -> np.ndarray:
    """Clip to ``[0, 1]``; squeeze the whole sample if it touches an endpoint."""
    y = np.clip(np.asarray(y, dtype=float), 0.0, 1.0)
    if np.any((y == 0.0) | (y == 1.0)):
        return compress_unit(y)
    return y


def _weights(w, m: int) -> np.ndarray:
    if w is None:
        return np.full(m, 1.0 / m)
    w = np.asarray(w, dtype=float)
    return w / w.sum()


def beta_nll(params, X: np.ndarray, y: np.ndarray, w=None) -> tuple[float, np.ndarray]:
    """Mean (optionally weighted) negative log-likelihood and its gradient.

    ``params = (coefficients..., log_phi)``; the mean is ``expit(X @ coef)``.
    """
    w = _weights(w, y.size)
    coef, log_phi = np.asarray(params[:-1]), params[-1]
    phi = math.exp(log_phi)
    mu = expit(X @ coef)
    a, b = mu * phi, (1 - mu) * phi
    ly, l1y = np.log(y), np.log1p(-y)
    ll = gammaln(phi) - gammaln(a) - gammaln(b) + (a - 1) * ly + (b - 1) * l1y
    dig_a, dig_b = digamma(a), digamma(b)
    dmu = phi * (-dig_a + dig_b + ly - l1y)
    dphi = digamma(phi) - mu * dig_a - (1 - mu) * dig_b + mu * ly + (1 - mu) * l1y
    grad_coef = X.T @ (w * dmu * mu * (1 - mu))
    grad_logphi = float(w @ dphi) * phi
    return -float(w @ ll), -np.append(grad_coef, grad_logphi)


def _beta_hessian(params, X, y, w=None) -> np.ndarray:
    """Analytic Hessian of the mean negative log-likelihood."""
    w = _weights(w, y.size)
    coef, log_phi = np.asarray(params[:-1]), params[-1]
    phi = math.exp(log_phi)
    mu = expit(X @ coef)
    a, b = mu * phi, (1 - mu) * phi
    ly, l1y = np.log(y), np.log1p(-y)
    tri_a, tri_b = polygamma(1, a), polygamma(1, b)
    dig_a, dig_b = digamma(a), digamma(b)
    s = mu * (1 - mu)
    ystar = ly - l1y - dig_a + dig_b
    # d2 ll / d eta2
    w_eta = -phi**2 * (tri_a + tri_b) * s**2 + phi * ystar * s * (1 - 2 * mu)
    # d2 ll / d eta d phi, then chain rule for log phi
    d_eta_phi = s * (ystar - phi * (mu * tri_a - (1 - mu) * tri_b))
    dphi = digamma(phi) - mu * dig_a - (1 - mu) * dig_b + mu * ly + (1 - mu) * l1y
    d2phi = polygamma(1, phi) - mu**2 * tri_a - (1 - mu) ** 2 * tri_b
    k = X.shape[1]
    H = np.empty((k + 1, k + 1))
    H[:k, :k] = (X * (w * w_eta)[:, None]).T @ X
    H[:k, k] = H[k, :k] = X.T @ (w * d_eta_phi * phi)
    H[k, k] = float(w @ d2phi) * phi**2 + float(w @ dphi) * phi
    return -H


@dataclass(frozen=True)
class BetaRegModel:
    alpha: float
    beta_n: float
    gamma_d: float
    phi: float
    n_points: int = 0
    grad_norm: float = 0.0

    def linear_predictor(self, n, d):
        return self.alpha + self.beta_n * np.asarray(n, dtype=float) + self.gamma_d * np.asarray(d, dtype=float)

    def predict(self, n, d):
        return expit(self.linear_predictor(n, d))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BetaRegModel":
        return cls(**d)


def fit_beta_arrays(n, d, y, weights=None) -> BetaRegModel:
    """Maximum-likelihood beta regression on ``(n, d) -> y``.

    ``weights`` turns the likelihood into a weighted one (e.g. quadrature
    weights over the response distribution).
    """
    n, d, y = (np.asarray(v, dtype=float) for v in (n, d, y))
    if y.size < MIN_RECORDS:
        raise ModelFitError(f"beta regression needs >= {MIN_RECORDS} points, got {y.size}")
    if np.ptp(y) == 0:
        raise ModelFitError("degenerate data: all responses are equal")
    yc = prepare_response(y)
    w = _weights(weights, y.size)
    X = np.column_stack([np.ones_like(n), n, d])
    # start: least squares on the logit scale, moment estimate for phi
    coef0, *_ = np.linalg.lstsq(X, logit(yc), rcond=None)
    mu0 = expit(X @ coef0)
    var = max(float(w @ (yc - mu0) ** 2), 1e-12)
    phi0 = max(float(w @ (mu0 * (1 - mu0))) / var - 1.0, 1.0)
    x0 = np.append(coef0, math.log(phi0))

    def fun(p):
        return beta_nll(p, X, yc, w)

    res = minimize(fun, x0, jac=True, method="BFGS", options={"gtol": 1e-10, "maxiter": BETA_MAX_ITER})
    x = res.x
    _, g = fun(x)
    iters = int(res.nit)
    # Newton polish: BFGS often stalls just above the threshold on flat ridges
    while np.linalg.norm(g) >= BETA_GTOL * 1e-2 and iters < BETA_MAX_ITER:
        H = _beta_hessian(x, X, yc, w)
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            break
        # at large phi the likelihood is flat to ~1e-8, so a shrinking gradient
        # also counts as progress
        f0, g0 = fun(x)[0], np.linalg.norm(g)
        t = 1.0
        while t > 1e-8:
            f1, g1 = fun(x + t * step)
            if f1 <= f0 + 1e-4 * t * (g @ step) or np.linalg.norm(g1) < g0:
                break
            t /= 2
        if t <= 1e-8:
            break
        x = x + t * step
        g = g1
        iters += 1
    gnorm = float(np.linalg.norm(g))
    if not gnorm < BETA_GTOL:
        raise ModelFitError(f"beta regression did not converge (gradient norm {gnorm:.2e})")
    return BetaRegModel(float(x[0]), float(x[1]), float(x[2]), float(math.exp(x[3])), int(y.size), gnorm)


def fit_beta(records) -> BetaRegModel:
    n, d, y = _arrays(records, "n_qubits", "layers", "normalized_y")
    return fit_beta_arrays(n, d, y)


# --------------------------------------------------------------------------
# power law
# --------------------------------------------------------------------------

POWER_LAW_STARTS = [(a, b) for a in (0.01, 0.1, 0.5) for b in (-2.0, -1.0, -0.5)]
POWER_ALPHA_MAX = 1e3
POWER_BETA_BOUND = 50.0


@dataclass(frozen=True)
class PowerLawModel:
    b: int
    ybar: dict[int, float]
    alpha: float
    beta: float
    residual_ss: float = 0.0

    def raw(self, n, d):
        n = np.asarray(n, dtype=float)
        d = np.asarray(d)
        try:
            base = np.vectorize(lambda k: self.ybar[int(k)], otypes=[float])(d)
        except KeyError as exc:
            raise UntrainedModel(f"power law has no baseline for layers={exc.args[0]}") from None
        growth = 1.0 + self.alpha * (n - self.b)
        if np.any(growth <= 0):
            raise ValueError("power law evaluated outside its domain (1 + alpha*(n-b) <= 0)")
        return base * growth**self.beta

    def predict(self, n, d, return_clamped: bool = False):
        raw = self.raw(n, d)
        out = np.clip(raw, 0.0, 1.0)
        if return_clamped:
            return out, np.asarray(raw != out)
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ybar"] = {str(k): v for k, v in sorted(self.ybar.items())}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PowerLawModel":
        d = dict(d)
        d["ybar"] = {int(k): float(v) for k, v in d["ybar"].items()}
        return cls(**d)


def fit_power_law_arrays(n, d, y) -> PowerLawModel:
    n, y = np.asarray(n, dtype=float), np.asarray(y, dtype=float)
    d = np.asarray(d).astype(int)
    sizes = np.unique(n)
    if sizes.size < 2:
        raise ModelFitError("power law needs at least two distinct qubit counts")
    b = int(sizes[0])
    ybar = {int(k): float(np.mean(y[(n == b) & (d == k)])) for k in np.unique(d[n == b])}
    keep = np.isin(d, list(ybar))
    n, d, y = n[keep], d[keep], y[keep]
    base = np.array([ybar[int(k)] for k in d])
    dn = n - b

    def resid(p):
        return y - base * (1.0 + p[0] * dn) ** p[1]

    def jac(p):
        g = 1.0 + p[0] * dn
        val = base * g ** p[1]
        return -np.column_stack([val * p[1] * dn / g, val * np.log(g)])

    try:
        res = multistart(resid, POWER_LAW_STARTS, jac=jac, lower=[0.0, -POWER_BETA_BOUND],
                         upper=[POWER_ALPHA_MAX, POWER_BETA_BOUND])
    except NLSError as exc:
        raise ModelFitError(f"power-law fit failed: {exc} (best {exc.best_x})") from exc
    return PowerLawModel(b, ybar, float(res.x[0]), float(res.x[1]), res.residual_ss)


def fit_power_law(records) -> PowerLawModel:
    n, d, y = _arrays(records, "n_qubits", "layers", "normalized_y")
    return fit_power_law_arrays(n, d, y)


# --------------------------------------------------------------------------
# degradation
# --------------------------------------------------------------------------

DEGRADATION_STARTS = [(a, b) for a in (1e-4, 1e-3, 1e-2) for b in (1e-4, 1e-3, 1e-2)]


@dataclass(frozen=True)
class DegradationModel:
    beta_depth: float
    gamma_count: float
    max_level: float
    residual_ss: float = 0.0
    mode: str = "measured"

    def factor(self, l, n, d_cx, n_cx):
        l = np.asarray(l, dtype=float)
        a = (1.0 - l * self.beta_depth) ** (np.asarray(n) * np.asarray(d_cx))
        c = (1.0 - l * self.gamma_count) ** np.asarray(n_cx)
        return a * c

    def predict(self, f_ideal, lb, l, n, d_cx, n_cx):
        if np.any(np.asarray(l) == 0):
            # exact identity at l = 0
            f_ideal = np.asarray(f_ideal, dtype=float)
            out = lb + (f_ideal - lb) * self.factor(l, n, d_cx, n_cx)
            return np.where(np.asarray(l) == 0, f_ideal, out)
        return lb + (np.asarray(f_ideal) - lb) * self.factor(l, n, d_cx, n_cx)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DegradationModel":
        return cls(**d)


def fit_degradation_arrays(f_noisy, f_ideal, lb, l, n, d_cx, n_cx, mode: str = "measured") -> DegradationModel:
    f_noisy, f_ideal, lb, l, n, d_cx, n_cx = (np.asarray(v, dtype=float)
                                              for v in (f_noisy, f_ideal, lb, l, n, d_cx, n_cx))
    levels = np.unique(l[l > 0])
    if levels.size < 2:
        raise ModelFitError("degradation fit needs noisy data at two or more noise levels")
    lmax = float(levels.max())
    hi = (1.0 - 1e-9) / lmax
    e_depth, e_count = n * d_cx, n_cx
    gap = f_ideal - lb

    def resid(p):
        return f_noisy - (lb + gap * (1 - l * p[0]) ** e_depth * (1 - l * p[1]) ** e_count)

    def jac(p):
        u, v = 1 - l * p[0], 1 - l * p[1]
        val = gap * u**e_depth * v**e_count
        return np.column_stack([val * e_depth * l / u, val * e_count * l / v])

    try:
        res = multistart(resid, DEGRADATION_STARTS, jac=jac, lower=[0.0, 0.0], upper=[hi, hi])
    except NLSError as exc:
        raise ModelFitError(f"degradation fit failed: {exc}") from exc
    beta, gamma = (float(v) for v in res.x)
    if lmax * beta >= 1 or lmax * gamma >= 1:
        raise ModelFitError("degradation optimum violates l*beta < 1 or l*gamma < 1")
    return DegradationModel(beta, gamma, lmax, res.residual_ss, mode)


# --------------------------------------------------------------------------
# runtime
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RuntimeModel:
    log_alpha: float
    beta: float
    r2: float = 1.0

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha)

    def predict(self, d_cx):
        return np.exp(self.log_alpha + self.beta * np.log(np.asarray(d_cx, dtype=float)))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RuntimeModel":
        return cls(**d)


def fit_runtime_arrays(d_cx, runtime) -> RuntimeModel:
    d_cx, T = np.asarray(d_cx, dtype=float), np.asarray(runtime, dtype=float)
    if np.any(d_cx <= 0) or np.any(T <= 0):
        raise ModelFitError("runtime model needs positive depths and runtimes")
    if np.unique(d_cx).size < 2:
        raise ModelFitError("runtime model needs two or more distinct CX depths")
    x, z = np.log(d_cx), np.log(T)
    A = np.column_stack([np.ones_like(x), x])
    (c0, c1), *_ = np.linalg.lstsq(A, z, rcond=None)
    res = z - A @ np.array([c0, c1])
    ss_tot = float(np.sum((z - z.mean()) ** 2))
    r2 = 1.0 - float(res @ res) / ss_tot if ss_tot > 0 else 1.0
    return RuntimeModel(float(c0), float(c1), r2)


def fit_runtime(records) -> RuntimeModel:
    d_cx, T = _arrays(records, "d_cx", "runtime")
    return fit_runtime_arrays(d_cx, T)


# --------------------------------------------------------------------------
# bundles
# --------------------------------------------------------------------------


@dataclass
class EvalResult:
    rmse: float
    mean_residual: float
    count: int
    clamped: int = 0
    per_layer: dict[int, float] = field(default_factory=dict)


def rmse_table(y, yhat, layers=None) -> EvalResult:
    y, yhat = np.asarray(y, dtype=float), np.asarray(yhat, dtype=float)
    if y.size == 0:
        raise ValueError("empty test set")
    r = y - yhat
    per = {}
    if layers is not None:
        layers = np.asarray(layers).astype(int)
        per = {int(k): float(np.sqrt(np.mean(r[layers == k] ** 2))) for k in np.unique(layers)}
    return EvalResult(float(np.sqrt(np.mean(r**2))), float(np.mean(r)), int(y.size), 0, per)


@dataclass
class ModelBundle:
    """All models for one (variant, problem, noise level) scope."""

    variant: str
    problem: str
    level: float
    beta: BetaRegModel | None = None
    power_law: PowerLawModel | None = None
    degradation: DegradationModel | None = None
    runtime: RuntimeModel | None = None
    rmse: dict[str, dict[str, float]] = field(default_factory=dict)
    mean_residual: dict[str, dict[str, float]] = field(default_factory=dict)
    chosen_quality_model: str | None = None
    meta: dict = field(default_factory=dict)

    @property
    def scope(self) -> tuple[str, str, float]:
        return (self.variant, self.problem, float(self.level))

    def quality_model(self, name: str | None = None):
        name = name or self.chosen_quality_model
        model = {"beta": self.beta, "power_law": self.power_law}.get(name)
        if model is None:
            raise UntrainedModel(f"no {name!r} quality model for {self.scope}")
        return model

    def predict_y(self, n, d, model: str | None = None):
        return self.quality_model(model).predict(n, d)

    def choose(self) -> str | None:
        """Pick the quality model with the lowest held-out RMSE.

        Extrapolation error ranks first when available, then baseline error.
        """
        best = None
        for split in ("extrapolation", "baseline"):
            scores = {m: self.rmse[m][split] for m in QUALITY_MODELS
                      if m in self.rmse and self.rmse[m].get(split) is not None}
            if scores:
                best = min(sorted(scores), key=lambda m: scores[m])
                break
        if best is None:
            best = next((m for m in QUALITY_MODELS if getattr(self, m) is not None), None)
        self.chosen_quality_model = best
        return best

    def to_dict(self) -> dict:
        return {
            "scope": {"variant": self.variant, "problem": self.problem, "level": self.level},
            "models": {
                "beta": None if self.beta is None else self.beta.to_dict(),
                "power_law": None if self.power_law is None else self.power_law.to_dict(),
                "degradation": None if self.degradation is None else self.degradation.to_dict(),
                "runtime": None if self.runtime is None else self.runtime.to_dict(),
            },
            "rmse": self.rmse,
            "mean_residual": self.mean_residual,
            "chosen_quality_model": self.chosen_quality_model,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelBundle":
        m = d["models"]
        return cls(
            variant=d["scope"]["variant"],
            problem=d["scope"]["problem"],
            level=float(d["scope"]["level"]),
            beta=None if m["beta"] is None else BetaRegModel.from_dict(m["beta"]),
            power_law=None if m["power_law"] is None else PowerLawModel.from_dict(m["power_law"]),
            degradation=None if m["degradation"] is None else DegradationModel.from_dict(m["degradation"]),
            runtime=None if m["runtime"] is None else RuntimeModel.from_dict(m["runtime"]),
            rmse=d.get("rmse", {}),
            mean_residual=d.get("mean_residual", {}),
            chosen_quality_model=d.get("chosen_quality_model"),
            meta=d.get("meta", {}),
        )

    def filename(self) -> str:
        return f"{self.variant}_{self.problem}_{self.level:g}.json"

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False)


class BundleSet:
    """Bundles keyed by (variant, problem, level)."""

    def __init__(self, bundles: Iterable[ModelBundle] = ()):
        self._bundles: dict[tuple[str, str, float], ModelBundle] = {}
        for b in bundles:
            self.add(b)

    def add(self, bundle: ModelBundle) -> None:
        self._bundles[bundle.scope] = bundle

    def __iter__(self):
        return iter(self._bundles[k] for k in sorted(self._bundles))

    def __len__(self):
        return len(self._bundles)

    def __contains__(self, scope):
        return tuple(scope) in self._bundles

    def get(self, variant: str, problem: str, level: float = 0.0) -> ModelBundle:
        try:
            return self._bundles[(variant, problem, float(level))]
        except KeyError:
            raise UntrainedModel(f"no trained bundle for variant={variant} problem={problem} level={level:g}") from None

    def ideal(self, variant: str, problem: str) -> ModelBundle:
        return self.get(variant, problem, 0.0)

    def runtime_model(self, variant: str, problem: str, level: float) -> RuntimeModel:
        """Runtime model of the nearest trained noise level."""
        levels = sorted((k[2] for k, b in self._bundles.items()
                         if k[:2] == (variant, problem) and b.runtime is not None),
                        key=lambda v: (abs(v - level), v))
        if not levels:
            raise UntrainedModel(f"no runtime model for variant={variant} problem={problem}")
        return self._bundles[(variant, problem, levels[0])].runtime

    def save(self, directory) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for b in self:
            p = directory / b.filename()
            p.write_text(b.to_json() + "\n", encoding="utf-8")
            paths.append(p)
        return paths

    @classmethod
    def load(cls, directory) -> "BundleSet":
        directory = Path(directory)
        if not directory.is_dir():
            raise UntrainedModel(f"model directory {directory} does not exist")
        return cls(ModelBundle.from_dict(json.loads(p.read_text(encoding="utf-8")))
                   for p in sorted(directory.glob("*.json")))


# --------------------------------------------------------------------------
# prediction and evaluation
# --------------------------------------------------------------------------


def predict_ideal_f(bundle: ModelBundle, features: Features, model: str | None = None) -> float:
    y = float(bundle.predict_y(features.n, features.d, model))
    return float(y_to_f(y, features.lb, features.ub))


def predict_quality(bundle: ModelBundle, features: Features, l: float, model: str | None = None) -> float:
    """Predicted solution quality ``f`` at noise level ``l``, clamped to ``[lb, ub]``.

    ``bundle`` is the ideal (level 0) bundle; for ``l > 0`` its degradation
    model is applied to the ideal prediction.
    """
    f = predict_ideal_f(bundle, features, model)
    if l > 0:
        if bundle.degradation is None:
            raise UntrainedModel(f"no degradation model for {bundle.variant}/{bundle.problem}")
        f = float(bundle.degradation.predict(f, features.lb, l, features.n, features.d_cx, features.n_cx))
    return float(min(max(f, features.lb), features.ub))


def record_features(r) -> Features:
    return Features(int(r.n_qubits), int(r.layers), int(r.d_cx), int(r.n_cx), float(r.lb), float(r.ub))


def predict_records_y(bundle: ModelBundle, records: Sequence, model: str | None = None) -> tuple[np.ndarray, int]:
    """Normalised-Y predictions for ``records`` and the number of clamped values.

    ``model="degradation"`` runs the ideal-then-degrade path of ``bundle`` (an
    ideal bundle) at each record's own noise level.
    """
    if model == "degradation":
        out = []
        clamped = 0
        for r in records:
            feat = record_features(r)
            f_ideal = predict_ideal_f(bundle, feat)
            f = float(bundle.degradation.predict(f_ideal, feat.lb, r.noise_level, feat.n, feat.d_cx, feat.n_cx))
            fc = min(max(f, feat.lb), feat.ub)
            clamped += fc != f
            out.append(float(f_to_y(fc, feat.lb, feat.ub)))
        return np.array(out), clamped
    n, d = _arrays(records, "n_qubits", "layers")
    qm = bundle.quality_model(model)
    if isinstance(qm, PowerLawModel):
        yhat, mask = qm.predict(n, d, return_clamped=True)
        return yhat, int(np.sum(mask))
    return qm.predict(n, d), 0


def evaluate(bundle: ModelBundle, records: Sequence, split: str = "baseline", model: str | None = None) -> EvalResult:
    """RMSE and mean residual (observed minus predicted) of normalised Y."""
    if not records:
        raise ValueError(f"empty {split} test set")
    yhat, clamped = predict_records_y(bundle, records, model)
    y, layers = _arrays(records, "normalized_y", "layers")
    res = rmse_table(y, yhat, layers)
    res.clamped = clamped
    return res


def fit_quality_models(records) -> dict[str, object]:
    """Both quality models; a model that fails to fit is reported as the error."""
    out = {}
    for name, fn in (("beta", fit_beta), ("power_law", fit_power_law)):
        try:
            out[name] = fn(records)
        except ModelFitError as exc:
            out[name] = exc
    return out


def _subsample(records, fraction: float, rng) -> list:
    by_size: dict[int, list[str]] = {}
    for r in records:
        by_size.setdefault(r.n_qubits, [])
        if r.instance_id not in by_size[r.n_qubits]:
            by_size[r.n_qubits].append(r.instance_id)
    keep = set()
    for size in sorted(by_size):
        ids = sorted(by_size[size])
        k = max(1, int(round(fraction * len(ids))))
        keep.update(rng.choice(ids, size=k, replace=False).tolist())
    return [r for r in records if r.instance_id in keep]


def _best_rmse(train, test) -> float:
    best = math.inf
    for model in fit_quality_models(train).values():
        if isinstance(model, Exception):
            continue
        b = ModelBundle("", "", 0.0)
        key = "beta" if isinstance(model, BetaRegModel) else "power_law"
        setattr(b, key, model)
        b.chosen_quality_model = key
        try:
            best = min(best, evaluate(b, test, "extrapolation").rmse)
        except UntrainedModel:
            continue
    if not math.isfinite(best):
        raise ModelFitError("no quality model could be fitted")
    return best


def learning_curve(train_records, test_records, fractions, seed=0, repeats: int = 3) -> list[tuple[int, float]]:
    """RMSE ratio of models fitted on instance subsamples versus the full set.

    For each fraction, instances are subsampled per qubit count, both quality
    models are refitted and the lower extrapolation RMSE is divided by the
    full-data value. Ratios are averaged over ``repeats`` subsamples (a
    fraction of 1 uses the full set once).
    """
    fractions = list(fractions)
    if len(fractions) < 2:
        raise ValueError("need at least two fractions")
    full = _best_rmse(train_records, test_records)
    out = []
    for frac in fractions:
        if not 0 < frac <= 1:
            raise ValueError("fractions must lie in (0, 1]")
        if frac == 1:
            out.append((len(train_records), 1.0))
            continue
        ratios, sizes = [], []
        for rep in range(repeats):
            rng = np.random.default_rng([int(seed), rep, int(round(frac * 1e6))])
            sub = _subsample(train_records, frac, rng)
            try:
                ratios.append(_best_rmse(sub, test_records) / full)
            except ModelFitError as exc:
                raise ModelFitError(f"fraction {frac} too small to fit: {exc}") from exc
            sizes.append(len(sub))
        out.append((int(round(np.mean(sizes))), float(np.mean(ratios))))
    return out
