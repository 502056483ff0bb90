"""Algorithm selection under linear objectives and constraints.

Requirements are expressed over seven framework variables derived from the
predicted solution quality ``f`` and runtime ``T`` of each candidate. Scopes
nest: constraints of all active scopes apply, and the innermost scope that
declares an objective decides what is optimised.

>>> stack = ScopeStack()
>>> with stack.scope(minimize="RUNTIME"):
...     with stack.scope(constraints=["RELATIVE_SOLUTION_QUALITY >= 0.8"]):
...         flat = stack.flatten()
>>> flat.objective.direction, len(flat.constraints)
('minimize', 1)
"""

from __future__ import annotations

import contextlib
import enum
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .algorithms import AlgorithmSpec, Backend, Outcome, Variant, first_circuit, run_algorithm
from .models import BundleSet, Features, UntrainedModel, predict_quality
from .problems import ProblemInstance, bounds as problem_bounds, warm_start
from .simulator import NoiseParams, circuit_stats

RATIO_EPS = 1e-9
TIE_RTOL = 1e-12

__all__ = [
    "Candidate",
    "CandidateRegistry",
    "Constraint",
    "ExpressionError",
    "Infeasible",
    "LinearExpr",
    "Objective",
    "RequirementScope",
    "ScopeStack",
    "Selection",
    "UndefinedVariable",
    "UntrainedModel",
    "Variable",
    "evaluate_variables",
    "parse_constraint",
    "parse_expr",
    "select",
    "solve",
]


class Variable(str, enum.Enum):
    RUNTIME = "RUNTIME"
    SOLUTION_QUALITY = "SOLUTION_QUALITY"
    RELATIVE_SOLUTION_QUALITY = "RELATIVE_SOLUTION_QUALITY"
    SOLUTION_QUALITY_PER_RUNTIME = "SOLUTION_QUALITY_PER_RUNTIME"
    RELATIVE_SOLUTION_QUALITY_PER_RUNTIME = "RELATIVE_SOLUTION_QUALITY_PER_RUNTIME"
    RUNTIME_PER_SOLUTION_QUALITY = "RUNTIME_PER_SOLUTION_QUALITY"
    RUNTIME_PER_RELATIVE_SOLUTION_QUALITY = "RUNTIME_PER_RELATIVE_SOLUTION_QUALITY"


class Infeasible(RuntimeError):
    """No candidate satisfies the effective constraints."""


class UndefinedVariable(ValueError):
    def __init__(self, variable: Variable, reason: str):
        super().__init__(f"{variable.value} is undefined: {reason}")
        self.variable = variable


class ExpressionError(ValueError):
    def __init__(self, message: str, text: str, column: int):
        super().__init__(f"{message} at column {column}: {text!r}")
        self.column = column
        self.text = text


# --------------------------------------------------------------------------
# expressions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearExpr:
    terms: tuple[tuple[Variable, float], ...] = ()
    constant: float = 0.0

    def __post_init__(self):
        merged: dict[Variable, float] = {}
        for var, c in self.terms:
            var = Variable(var)
            if not math.isfinite(c):
                raise ValueError("coefficients must be finite")
            merged[var] = merged.get(var, 0.0) + float(c)
        if not math.isfinite(self.constant):
            raise ValueError("constant must be finite")
        order = list(Variable)
        object.__setattr__(self, "terms", tuple(sorted(merged.items(), key=lambda t: order.index(t[0]))))

    @classmethod
    def of(cls, value) -> "LinearExpr":
        if isinstance(value, LinearExpr):
            return value
        if isinstance(value, Variable):
            return cls(((value, 1.0),))
        if isinstance(value, Mapping):
            return cls(tuple((Variable(k), float(v)) for k, v in value.items()))
        return parse_expr(str(value))

    @property
    def variables(self) -> set[Variable]:
        return {v for v, c in self.terms if c != 0.0}

    def scaled(self, k: float) -> "LinearExpr":
        return LinearExpr(tuple((v, k * c) for v, c in self.terms), k * self.constant)

    def evaluate(self, values: Mapping[Variable, float]) -> float:
        return self.constant + sum(c * values[v] for v, c in self.terms if c != 0.0)

    def __str__(self):
        parts = [f"{c:g}*{v.value}" for v, c in self.terms]
        if self.constant or not parts:
            parts.append(f"{self.constant:g}")
        return " + ".join(parts).replace("+ -", "- ")


@dataclass(frozen=True)
class Constraint:
    expr: LinearExpr
    relation: str  # "<=" or ">="
    bound: float

    def __post_init__(self):
        if self.relation not in ("<=", ">="):
            raise ValueError("relation must be '<=' or '>='")
        if not math.isfinite(self.bound):
            raise ValueError("bound must be finite")

    def satisfied(self, values: Mapping[Variable, float]) -> bool:
        lhs = self.expr.evaluate(values)
        return lhs <= self.bound if self.relation == "<=" else lhs >= self.bound

    def __str__(self):
        return f"{self.expr} {self.relation} {self.bound:g}"


@dataclass(frozen=True)
class Objective:
    direction: str  # "maximize" or "minimize"
    expr: LinearExpr

    def __post_init__(self):
        if self.direction not in ("maximize", "minimize"):
            raise ValueError("direction must be 'maximize' or 'minimize'")

    def sign(self) -> float:
        return 1.0 if self.direction == "maximize" else -1.0


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op><=|>=|[-+*]))"
)


def _tokens(text: str):
    pos = 0
    out = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            col = pos + len(text[pos:]) - len(text[pos:].lstrip()) + 1
            raise ExpressionError("unexpected character", text, col)
        kind = m.lastgroup
        start = m.start(kind)
        out.append((kind, m.group(kind), start + 1))
        pos = m.end()
    out.append(("end", "", len(text) + 1))
    return out


def _variable(name: str, text: str, col: int) -> Variable:
    try:
        return Variable(name.upper())
    except ValueError:
        raise ExpressionError(f"unknown variable {name!r}", text, col) from None


def _parse_sum(toks, i: int, text: str, stop: tuple[str, ...]) -> tuple[LinearExpr, int]:
    terms: list[tuple[Variable, float]] = []
    constant = 0.0
    first = True
    while True:
        kind, val, col = toks[i]
        sign = 1.0
        if kind == "op" and val in "+-":
            sign = -1.0 if val == "-" else 1.0
            i += 1
            kind, val, col = toks[i]
        elif not first:
            raise ExpressionError("expected '+' or '-'", text, col)
        if kind == "num":
            coef = sign * float(val)
            i += 1
            if toks[i][:2] == ("op", "*"):
                i += 1
                kind, val, col = toks[i]
                if kind != "name":
                    raise ExpressionError("expected a variable after '*'", text, col)
                terms.append((_variable(val, text, col), coef))
                i += 1
            else:
                constant += coef
        elif kind == "name":
            terms.append((_variable(val, text, col), sign))
            i += 1
        else:
            raise ExpressionError("expected a number or variable", text, col)
        first = False
        kind, val, col = toks[i]
        if kind == "end" or (kind == "op" and val in stop):
            return LinearExpr(tuple(terms), constant), i


def parse_expr(text: str) -> LinearExpr:
    """Parse a signed sum of ``coef*VARIABLE`` terms (constants allowed)."""
    toks = _tokens(text)
    expr, i = _parse_sum(toks, 0, text, ())
    kind, val, col = toks[i]
    if kind != "end":
        raise ExpressionError("unexpected token", text, col)
    return expr


def parse_constraint(text: str) -> Constraint:
    """Parse ``expr (<=|>=) number``."""
    toks = _tokens(text)
    expr, i = _parse_sum(toks, 0, text, ("<=", ">="))
    kind, rel, col = toks[i]
    if kind != "op" or rel not in ("<=", ">="):
        raise ExpressionError("expected '<=' or '>='", text, col)
    i += 1
    sign = 1.0
    kind, val, col = toks[i]
    if kind == "op" and val in "+-":
        sign = -1.0 if val == "-" else 1.0
        i += 1
        kind, val, col = toks[i]
    if kind != "num":
        raise ExpressionError("expected a number", text, col)
    i += 1
    if toks[i][0] != "end":
        raise ExpressionError("unexpected token", text, toks[i][2])
    # move constants to the bound so equivalent forms compare equal
    return Constraint(LinearExpr(expr.terms), rel, sign * float(val) - expr.constant)


def _as_constraint(c) -> Constraint:
    return c if isinstance(c, Constraint) else parse_constraint(str(c))


# --------------------------------------------------------------------------
# scopes
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RequirementScope:
    objective: Objective | None = None
    constraints: tuple[Constraint, ...] = ()

    @classmethod
    def build(cls, maximize=None, minimize=None, constraints: Iterable = ()) -> "RequirementScope":
        if maximize is not None and minimize is not None:
            raise ValueError("a scope declares at most one objective")
        obj = None
        if maximize is not None:
            obj = Objective("maximize", LinearExpr.of(maximize))
        elif minimize is not None:
            obj = Objective("minimize", LinearExpr.of(minimize))
        return cls(obj, tuple(_as_constraint(c) for c in constraints))

    @property
    def variables(self) -> set[Variable]:
        out = set() if self.objective is None else set(self.objective.expr.variables)
        for c in self.constraints:
            out |= c.expr.variables
        return out

    @staticmethod
    def flatten_all(scopes: Sequence["RequirementScope"]) -> "RequirementScope":
        objective = None
        constraints: list[Constraint] = []
        for s in scopes:
            if s.objective is not None:
                objective = s.objective
            constraints.extend(s.constraints)
        return RequirementScope(objective, tuple(constraints))


class ScopeStack:
    """Nested requirement scopes; see the module docstring."""

    def __init__(self):
        self._stack: list[RequirementScope] = []

    def push(self, scope: RequirementScope) -> None:
        self._stack.append(scope)

    def pop(self) -> RequirementScope:
        if not self._stack:
            raise IndexError("pop from an empty scope stack")
        return self._stack.pop()

    def __len__(self):
        return len(self._stack)

    @contextlib.contextmanager
    def scope(self, maximize=None, minimize=None, constraints: Iterable = ()):
        s = RequirementScope.build(maximize, minimize, constraints)
        self.push(s)
        try:
            yield s
        finally:
            self.pop()

    def flatten(self) -> RequirementScope:
        return RequirementScope.flatten_all(self._stack)


# --------------------------------------------------------------------------
# candidates and variables
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Candidate:
    spec: AlgorithmSpec
    level: float = 0.0

    def key(self) -> tuple:
        return (self.spec.variant.order, self.spec.layers, self.level)


@dataclass
class CandidateRegistry:
    candidates: list[Candidate] = field(default_factory=list)

    @classmethod
    def grid(cls, variants: Iterable, max_layers: int, level: float = 0.0, **spec_kwargs) -> "CandidateRegistry":
        return cls([Candidate(AlgorithmSpec(Variant.parse(v), p, **spec_kwargs), float(level))
                    for v in variants for p in range(1, max_layers + 1)])

    def __iter__(self):
        return iter(self.candidates)

    def __len__(self):
        return len(self.candidates)


def derived_variables(f: float, T: float, ub: float) -> dict[Variable, float]:
    """The seven framework variables; ratios over non-positive values are NaN."""
    nan = float("nan")
    ok_f, ok_T = f > RATIO_EPS, T > RATIO_EPS
    return {
        Variable.RUNTIME: T,
        Variable.SOLUTION_QUALITY: f,
        Variable.RELATIVE_SOLUTION_QUALITY: f / ub,
        Variable.SOLUTION_QUALITY_PER_RUNTIME: f / T if ok_T else nan,
        Variable.RELATIVE_SOLUTION_QUALITY_PER_RUNTIME: f / (ub * T) if ok_T else nan,
        Variable.RUNTIME_PER_SOLUTION_QUALITY: T / f if ok_f else nan,
        Variable.RUNTIME_PER_RELATIVE_SOLUTION_QUALITY: T / (ub * f) if ok_f else nan,
    }


class _InstanceContext:
    """Per-instance quantities shared by all candidates (bounds, warm start)."""

    def __init__(self, instance: ProblemInstance, warm_start_provider=None):
        self.instance = instance
        self.bounds = problem_bounds(instance)
        self._ws = None
        self._provider = warm_start_provider

    @property
    def ws(self):
        if self._ws is None:
            self._ws = warm_start(self.instance, self._provider)
        return self._ws

    def features(self, candidate: Candidate, noise: NoiseParams | None = None) -> tuple[Features, float]:
        spec = candidate.spec
        ws = self.ws if spec.variant in (Variant.WSQAOA, Variant.WSINITQAOA) else None
        circuit = first_circuit(spec, self.instance, ws)
        timing = NoiseParams() if candidate.level == 0 else (noise or NoiseParams()).at_level(candidate.level)
        stats = circuit_stats(circuit, timing)
        b = self.bounds
        return Features(self.instance.n_qubits, spec.layers, stats.d_cx, stats.n_cx, b.lb, b.ub), stats.duration


def _predict(ctx: _InstanceContext, candidate: Candidate, bundles: BundleSet) -> dict[Variable, float]:
    spec = candidate.spec
    problem = ctx.instance.kind.value
    ideal = bundles.ideal(spec.variant.value, problem)
    feat, _ = ctx.features(candidate)
    f = predict_quality(ideal, feat, candidate.level)
    T = float(bundles.runtime_model(spec.variant.value, problem, candidate.level).predict(feat.d_cx))
    return derived_variables(f, T, feat.ub)


def evaluate_variables(instance: ProblemInstance, spec: AlgorithmSpec, bundles: BundleSet,
                       l: float = 0.0, warm_start_provider=None) -> dict[Variable, float]:
    """Predicted framework variables for one candidate.

    Raises :class:`UndefinedVariable` when a ratio variable would divide by a
    non-positive prediction.
    """
    ctx = _InstanceContext(instance, warm_start_provider)
    values = _predict(ctx, Candidate(spec, float(l)), bundles)
    for var, v in values.items():
        if math.isnan(v):
            which = "runtime" if "PER_RUNTIME" in var.value else "solution quality"
            raise UndefinedVariable(var, f"predicted {which} is not positive")
    return values


# --------------------------------------------------------------------------
# selection
# --------------------------------------------------------------------------


@dataclass
class Selection:
    candidate: Candidate
    values: dict[Variable, float]
    objective: float
    evaluated: int
    feasible: int

    @property
    def spec(self) -> AlgorithmSpec:
        return self.candidate.spec

    def to_dict(self) -> dict:
        return {
            "variant": self.spec.variant.value,
            "layers": self.spec.layers,
            "noise_level": self.candidate.level,
            "objective": self.objective,
            "variables": {k.value: v for k, v in self.values.items()},
            "candidates_evaluated": self.evaluated,
            "candidates_feasible": self.feasible,
        }


def _effective(scope) -> RequirementScope:
    if isinstance(scope, ScopeStack):
        return scope.flatten()
    if isinstance(scope, (list, tuple)):
        return RequirementScope.flatten_all(scope)
    return scope


def select(instance: ProblemInstance, scope, registry: CandidateRegistry, bundles: BundleSet,
           warm_start_provider=None, predictions: Mapping | None = None) -> Selection:
    """Best candidate under the effective objective and constraints.

    Ties in the objective (relative 1e-12) go to the lower predicted runtime,
    then fewer layers, then variant order. ``predictions`` may supply
    precomputed variable maps keyed by candidate, bypassing the models.
    """
    scope = _effective(scope)
    if not len(registry):
        raise ValueError("empty candidate registry")
    if scope.objective is None:
        raise ValueError("no effective objective in scope")
    needed = scope.variables
    ctx = None if predictions is not None else _InstanceContext(instance, warm_start_provider)
    feasible = []
    for cand in registry:
        values = predictions[cand] if predictions is not None else _predict(ctx, cand, bundles)
        if any(math.isnan(values[v]) for v in needed):
            continue
        if all(c.satisfied(values) for c in scope.constraints):
            feasible.append((cand, values, scope.objective.expr.evaluate(values)))
    if not feasible:
        raise Infeasible(f"infeasible: no candidate satisfies {len(scope.constraints)} constraint(s)")
    sign = scope.objective.sign()
    best = max(sign * v for _, _, v in feasible)
    tied = [t for t in feasible if sign * t[2] >= best - TIE_RTOL * max(abs(best), 1e-300)]
    cand, values, obj = min(tied, key=lambda t: (t[1][Variable.RUNTIME], t[0].spec.layers,
                                                 t[0].spec.variant.order, t[0].level))
    return Selection(cand, values, obj, len(registry), len(feasible))


def solve(instance: ProblemInstance, scope, registry: CandidateRegistry, bundles: BundleSet,
          backend: Backend | None = None, seed=0, store=None, measure_classical: bool = True,
          warm_start_provider=None) -> tuple[Selection, Outcome]:
    """Select, execute the chosen spec and record the outcome in ``store``."""
    choice = select(instance, scope, registry, bundles, warm_start_provider)
    if backend is None:
        level = choice.candidate.level
        backend = Backend.ideal() if level == 0 else Backend.noisy(level=level)
    try:
        outcome = run_algorithm(choice.spec, instance, backend, seed=seed,
                                measure_classical=measure_classical, warm_start_provider=warm_start_provider)
    except Exception as exc:
        if store is not None:
            store.record_failure(instance, choice.spec, backend.level, seed, exc)
        raise
    if store is not None:
        store.append_outcome(outcome, instance, seed)
    return choice, outcome
