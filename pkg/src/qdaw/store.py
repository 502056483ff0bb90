"""Result storage, benchmark sweeps, train/test splitting and model training."""

from __future__ import annotations

import csv
import fcntl
import io
import itertools
import json
import logging
import math
import os
import traceback
import warnings
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import models as M
from .algorithms import (
    MAX_NOISY_LAYERS,
    AlgorithmSpec,
    Backend,
    Variant,
    run_algorithm,
)
from .problems import ProblemInstance, ProblemKind, generate_instance
from .records import ResultRecord, utc_now
from .simulator import MAX_IDEAL_QUBITS, MAX_NOISY_QUBITS, NoiseParams

log = logging.getLogger(__name__)

RESULTS_FILE = "results.jsonl"
FAILURES_FILE = "failures.jsonl"
MODELS_DIR = "models"
TRAIN_STATE_FILE = "train_state.json"


# --------------------------------------------------------------------------
# storage
# --------------------------------------------------------------------------


@contextmanager
def _locked(path: Path, mode: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, mode, encoding="utf-8") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX if "a" in mode or "w" in mode else fcntl.LOCK_SH)
        try:
            yield fh
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


class ResultStore:
    """Append-only JSON-Lines store rooted at a directory.

    Layout: ``results.jsonl``, ``failures.jsonl``, ``models/`` and
    ``train_state.json`` (record counts at the last training, for retraining).
    """

    def __init__(self, root):
        self.root = Path(root)
        self.results_path = self.root / RESULTS_FILE
        self.failures_path = self.root / FAILURES_FILE
        self.models_dir = self.root / MODELS_DIR
        self.state_path = self.root / TRAIN_STATE_FILE
        self.corrupt_lines = 0

    # writes ---------------------------------------------------------------

    def append(self, record: ResultRecord) -> None:
        with _locked(self.results_path, "a") as fh:
            fh.write(record.to_json() + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def extend(self, records: Iterable[ResultRecord]) -> int:
        k = 0
        with _locked(self.results_path, "a") as fh:
            for r in records:
                fh.write(r.to_json() + "\n")
                k += 1
            fh.flush()
            os.fsync(fh.fileno())
        return k

    def append_outcome(self, outcome, instance: ProblemInstance, run_seed: int) -> ResultRecord:
        rec = ResultRecord.from_outcome(outcome, instance, run_seed)
        self.append(rec)
        return rec

    def record_failure(self, instance: ProblemInstance, spec: AlgorithmSpec, level: float, seed, exc) -> None:
        event = {
            "instance_id": instance.instance_id,
            "problem": instance.kind.value,
            "n_qubits": instance.n_qubits,
            "variant": spec.variant.value,
            "layers": spec.layers,
            "noise_level": float(level),
            "run_seed": int(seed),
            "error": f"{type(exc).__name__}: {exc}",
            "timestamp": utc_now(),
        }
        with _locked(self.failures_path, "a") as fh:
            fh.write(json.dumps(event, separators=(",", ":")) + "\n")

    # reads ----------------------------------------------------------------

    def records(self) -> list[ResultRecord]:
        if not self.results_path.exists():
            return []
        out = []
        bad = 0
        with _locked(self.results_path, "r") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    out.append(ResultRecord.from_json(line))
                except (ValueError, KeyError, TypeError) as exc:
                    bad += 1
                    warnings.warn(f"{self.results_path}:{lineno}: skipping corrupt record ({exc})", stacklevel=2)
        self.corrupt_lines = bad
        return out

    def query(self, **filters) -> list[ResultRecord]:
        """Records whose fields equal every given value (lists mean 'any of')."""
        def match(r):
            for k, v in filters.items():
                actual = getattr(r, k)
                if isinstance(v, (list, tuple, set, frozenset)):
                    if actual not in v:
                        return False
                elif actual != v:
                    return False
            return True

        return [r for r in self.records() if match(r)]

    def keys(self) -> set[tuple]:
        return {r.key for r in self.records()}

    def failures(self) -> list[dict]:
        if not self.failures_path.exists():
            return []
        return [json.loads(ln) for ln in self.failures_path.read_text(encoding="utf-8").splitlines() if ln.strip()]

    def __len__(self):
        return len(self.records())

    # models ---------------------------------------------------------------

    def load_bundles(self) -> M.BundleSet:
        return M.BundleSet.load(self.models_dir)

    def train_state(self) -> dict[str, int]:
        if not self.state_path.exists():
            return {}
        return json.loads(self.state_path.read_text(encoding="utf-8"))["counts"]

    def write_train_state(self, counts: dict[str, int]) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        self.state_path.write_text(json.dumps({"counts": counts}, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def scope_key(scope: tuple) -> str:
    variant, problem, level = scope
    return f"{variant}|{problem}|{float(level):g}"


def scope_counts(records: Iterable[ResultRecord]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for r in records:
        k = scope_key(r.scope)
        counts[k] = counts.get(k, 0) + 1
    return dict(sorted(counts.items()))


# --------------------------------------------------------------------------
# benchmark sweeps
# --------------------------------------------------------------------------


def derive_seed(*parts: int) -> int:
    """Stable 63-bit seed from integer parts."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, dtype=np.uint64)[0] >> 1)


def instance_seed(global_seed: int, kind: ProblemKind, n: int, index: int) -> int:
    return derive_seed(global_seed, list(ProblemKind).index(kind), n, index)


def run_seed(global_seed: int, instance_seed_: int, variant: Variant, layers: int, level: float) -> int:
    return derive_seed(global_seed, instance_seed_ & 0xFFFFFFFF, instance_seed_ >> 32, variant.order,
                       layers, int(round(level * 1_000_000)))


@dataclass(frozen=True)
class BenchmarkPlan:
    problems: tuple[str, ...]
    sizes: tuple[int, ...]
    instances_per_size: int
    variants: tuple[str, ...]
    layers: tuple[int, ...]
    noise_levels: tuple[float, ...] = (0.0,)
    seed: int = 0
    shots: int = 10_000
    tolerance: float = 0.01
    max_iters: int = 150
    ws_epsilon: float = 0.25
    rqaoa_cutoff: int = 5

    def __post_init__(self):
        for name in ("problems", "sizes", "variants", "layers", "noise_levels"):
            if not getattr(self, name):
                raise ValueError(f"plan field {name} is empty")
        for p in self.problems:
            ProblemKind.parse(p)
        for v in self.variants:
            Variant.parse(v)
        if self.instances_per_size < 1:
            raise ValueError("instances_per_size must be >= 1")
        noisy = any(l > 0 for l in self.noise_levels)
        cap = MAX_NOISY_QUBITS if noisy else MAX_IDEAL_QUBITS
        if max(self.sizes) > cap:
            raise ValueError(f"plan size {max(self.sizes)} exceeds the simulator cap of {cap}")
        if noisy and max(self.layers) > MAX_NOISY_LAYERS:
            raise ValueError(f"noisy plans are limited to {MAX_NOISY_LAYERS} layers")

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkPlan":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown plan key(s): {', '.join(unknown)}")
        kw = dict(d)
        for k in ("problems", "sizes", "variants", "layers", "noise_levels"):
            if k in kw:
                v = kw[k]
                kw[k] = tuple(v) if isinstance(v, (list, tuple)) else (v,)
        kw["noise_levels"] = tuple(float(x) for x in kw.get("noise_levels", (0.0,)))
        return cls(**kw)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def spec(self, variant: str, layers: int) -> AlgorithmSpec:
        return AlgorithmSpec(Variant.parse(variant), layers, self.shots, self.tolerance, self.max_iters,
                             self.ws_epsilon, self.rqaoa_cutoff)

    def instances(self) -> list[ProblemInstance]:
        out = []
        for p in self.problems:
            kind = ProblemKind.parse(p)
            for n in self.sizes:
                for i in range(self.instances_per_size):
                    out.append(generate_instance(kind, n, instance_seed(self.seed, kind, n, i)))
        return out

    def size(self) -> int:
        return (len(self.problems) * len(self.sizes) * self.instances_per_size * len(self.variants)
                * len(self.layers) * len(self.noise_levels))


def load_plans(path) -> list[BenchmarkPlan]:
    """Read a YAML/JSON plan file: one plan mapping or ``{sweeps: [...]}``."""
    import yaml

    data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict) and "sweeps" in data:
        extra = sorted(set(data) - {"sweeps"})
        if extra:
            raise ValueError(f"unknown plan key(s): {', '.join(extra)}")
        return [BenchmarkPlan.from_dict(s) for s in data["sweeps"]]
    return [BenchmarkPlan.from_dict(data)]


@dataclass(frozen=True)
class _Task:
    instance: ProblemInstance
    spec: AlgorithmSpec
    level: float
    seed: int
    noise: NoiseParams | None
    measure_classical: bool


def _execute(task: _Task):
    backend = Backend.ideal() if task.level == 0 else Backend.noisy(task.noise, task.level)
    try:
        outcome = run_algorithm(task.spec, task.instance, backend, seed=task.seed,
                                measure_classical=task.measure_classical)
        return ResultRecord.from_outcome(outcome, task.instance, task.seed), None
    except Exception as exc:  # recorded, sweep continues
        log.debug("run failed: %s", traceback.format_exc())
        return None, exc


@dataclass
class BenchmarkSummary:
    planned: int = 0
    skipped: int = 0
    succeeded: int = 0
    failed: int = 0
    records: list[ResultRecord] = field(default_factory=list)

    @property
    def success_rate(self) -> float:
        ran = self.succeeded + self.failed
        return 1.0 if ran == 0 else self.succeeded / ran


def run_benchmark(plan: BenchmarkPlan, store: ResultStore, workers: int = 1, noise: NoiseParams | None = None,
                  measure_classical: bool = True, progress: Callable[[int, int], None] | None = None,
                  ) -> BenchmarkSummary:
    """Sweep the plan, skipping (instance, variant, layers, level) runs already stored.

    Records are written in plan order through this process, whatever the
    worker count.
    """
    done = store.keys()
    tasks = []
    summary = BenchmarkSummary(planned=plan.size())
    for inst in plan.instances():
        for v, p, l in itertools.product(plan.variants, plan.layers, plan.noise_levels):
            spec = plan.spec(v, p)
            if (inst.instance_id, spec.variant.value, p, float(l)) in done:
                summary.skipped += 1
                continue
            seed = run_seed(plan.seed, inst.seed, spec.variant, p, l)
            tasks.append(_Task(inst, spec, float(l), seed, noise, measure_classical))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(_execute, tasks, chunksize=4)
            _consume(results, tasks, store, summary, progress)
    else:
        _consume(map(_execute, tasks), tasks, store, summary, progress)
    return summary


def _consume(results, tasks, store, summary, progress):
    total = len(tasks)
    for k, (task, (rec, exc)) in enumerate(zip(tasks, results), start=1):
        if rec is not None:
            store.append(rec)
            summary.records.append(rec)
            summary.succeeded += 1
        else:
            store.record_failure(task.instance, task.spec, task.level, task.seed, exc)
            summary.failed += 1
        if progress is not None:
            progress(k, total)


# --------------------------------------------------------------------------
# splits and training
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitPolicy:
    baseline_sizes: frozenset
    extrapolation_sizes: frozenset = frozenset()
    holdout_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "baseline_sizes", frozenset(int(s) for s in self.baseline_sizes))
        object.__setattr__(self, "extrapolation_sizes", frozenset(int(s) for s in self.extrapolation_sizes))
        if not self.baseline_sizes:
            raise ValueError("baseline sizes must not be empty")
        if self.baseline_sizes & self.extrapolation_sizes:
            raise ValueError("baseline and extrapolation sizes must be disjoint")
        if self.extrapolation_sizes and min(self.extrapolation_sizes) <= max(self.baseline_sizes):
            raise ValueError("extrapolation sizes must all exceed the baseline sizes")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must lie in [0, 1)")

    @classmethod
    def parse(cls, text: str, holdout_fraction: float = 0.2, seed: int = 0) -> "SplitPolicy":
        """``"5,6,7:8,9"`` means baseline {5,6,7}, extrapolation {8,9}."""
        base, _, extra = text.partition(":")
        def sizes(s):
            return [int(x) for x in s.split(",") if x.strip()]
        return cls(frozenset(sizes(base)), frozenset(sizes(extra)), holdout_fraction, seed)

    def holdout_ids(self, records: Sequence[ResultRecord]) -> set[str]:
        """Baseline-test instance ids: a fixed fraction of instances per (problem, size)."""
        groups: dict[tuple[str, int], set[str]] = {}
        for r in records:
            if r.n_qubits in self.baseline_sizes:
                groups.setdefault((r.problem, r.n_qubits), set()).add(r.instance_id)
        out = set()
        for key in sorted(groups):
            ids = sorted(groups[key])
            k = int(round(self.holdout_fraction * len(ids)))
            if k:
                rng = np.random.default_rng([self.seed, len(ids), list(ProblemKind).index(ProblemKind.parse(key[0])), key[1]])
                out.update(rng.choice(ids, size=k, replace=False).tolist())
        return out

    def split(self, records: Sequence[ResultRecord]):
        """(train, baseline test, extrapolation test) partitions."""
        held = self.holdout_ids(records)
        train, base, extra = [], [], []
        for r in records:
            if r.n_qubits in self.extrapolation_sizes:
                extra.append(r)
            elif r.n_qubits in self.baseline_sizes:
                (base if r.instance_id in held else train).append(r)
        return train, base, extra


@dataclass
class TrainReport:
    bundles: M.BundleSet
    rows: list[dict] = field(default_factory=list)
    skipped: list[tuple[tuple, str]] = field(default_factory=list)

    def rmse(self, variant: str, problem: str, level: float, model: str, split: str) -> float | None:
        for r in self.rows:
            if (r["variant"], r["problem"], r["level"], r["model"], r["split"]) == (variant, problem, float(level), model, split):
                return r["rmse"]
        return None

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["problem", "variant", "level", "model", "split", "rmse", "mean_residual", "count", "clamped"]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: r[k] for k in cols})
        return buf.getvalue()


def _group(records, key) -> dict:
    out: dict = {}
    for r in records:
        out.setdefault(key(r), []).append(r)
    return out


def _evaluate_into(target: M.ModelBundle, model: str, tests: dict, rows: list,
                   eval_bundle: M.ModelBundle | None = None):
    eval_bundle = eval_bundle or target
    for split, recs in tests.items():
        if not recs:
            continue
        try:
            res = M.evaluate(eval_bundle, recs, split, model)
        except (M.UntrainedModel, ValueError) as exc:
            log.info("cannot evaluate %s on %s for %s: %s", model, split, target.scope, exc)
            continue
        target.rmse.setdefault(model, {})[split] = res.rmse
        target.mean_residual.setdefault(model, {})[split] = res.mean_residual
        rows.append({"problem": target.problem, "variant": target.variant, "level": target.level, "model": model,
                     "split": split, "rmse": res.rmse, "mean_residual": res.mean_residual, "count": res.count,
                     "clamped": res.clamped, "per_layer": res.per_layer})


def _fit_direct(bundle: M.ModelBundle, train: list, skipped: list) -> None:
    for name, model in M.fit_quality_models(train).items():
        if isinstance(model, Exception):
            skipped.append((bundle.scope, f"{name}: {model}"))
        else:
            setattr(bundle, name, model)
    # runs finished purely classically (RQAOA at or below its cutoff) carry
    # no depth-driven runtime signal
    timed = [r for r in train if r.quantum_runtime > 0 and r.d_cx > 0]
    bundle.meta["n_runtime"] = len(timed)
    try:
        bundle.runtime = M.fit_runtime(timed)
    except M.ModelFitError as exc:
        skipped.append((bundle.scope, f"runtime: {exc}"))


def _degradation_obs(noisy: list, ideal_by_key: dict, ideal_bundle: M.ModelBundle | None, mode: str):
    cols = {k: [] for k in ("f_noisy", "f_ideal", "lb", "l", "n", "d_cx", "n_cx")}
    for r in noisy:
        if mode == "measured":
            ideal = ideal_by_key.get((r.instance_id, r.variant, r.layers))
            if ideal is None:
                continue
            f_ideal = ideal.quality
        else:
            f_ideal = M.predict_ideal_f(ideal_bundle, M.record_features(r))
        cols["f_noisy"].append(r.quality)
        cols["f_ideal"].append(f_ideal)
        cols["lb"].append(r.lb)
        cols["l"].append(r.noise_level)
        cols["n"].append(r.n_qubits)
        cols["d_cx"].append(r.d_cx)
        cols["n_cx"].append(r.n_cx)
    return cols


def train(records: Sequence[ResultRecord], split: SplitPolicy, models_dir=None,
          degradation_mode: str = "measured", min_records: int = M.MIN_RECORDS) -> TrainReport:
    """Fit every scope's models on the training partition and evaluate them.

    Ideal bundles (level 0) carry both quality models, the degradation model
    of their (variant, problem) pair and a runtime model; noisy bundles carry
    direct quality models and a runtime model for their level, plus the RMSE
    of the degradation path on their test sets.
    """
    if degradation_mode not in ("measured", "predicted"):
        raise ValueError("degradation_mode must be 'measured' or 'predicted'")
    records = sorted(records, key=lambda r: (r.problem, r.variant, r.noise_level, r.n_qubits, r.instance_id, r.layers))
    train_set, base_set, extra_set = split.split(records)
    train_by = _group(train_set, lambda r: r.scope)
    base_by = _group(base_set, lambda r: r.scope)
    extra_by = _group(extra_set, lambda r: r.scope)
    scopes = sorted(set(_group(records, lambda r: r.scope)), key=lambda s: (s[1], s[0], s[2]))
    ideal_by_key = {(r.instance_id, r.variant, r.layers): r for r in records if r.noise_level == 0}

    bundles = M.BundleSet()
    report = TrainReport(bundles)
    meta_common = {"split": {"baseline_sizes": sorted(split.baseline_sizes),
                             "extrapolation_sizes": sorted(split.extrapolation_sizes),
                             "holdout_fraction": split.holdout_fraction, "seed": split.seed},
                   "trained_at": utc_now()}

    # ideal scopes first, noisy scopes need their ideal bundle
    for scope in sorted(scopes, key=lambda s: s[2] > 0):
        variant, problem, level = scope
        tr = train_by.get(scope, [])
        if len(tr) < min_records:
            report.skipped.append((scope, f"only {len(tr)} training records (need {min_records})"))
            continue
        b = M.ModelBundle(variant, problem, level)
        b.meta = dict(meta_common, n_train=len(tr), n_baseline_test=len(base_by.get(scope, [])),
                      n_extrapolation_test=len(extra_by.get(scope, [])))
        _fit_direct(b, tr, report.skipped)
        if b.beta is None and b.power_law is None:
            report.skipped.append((scope, "no quality model could be fitted"))
            continue
        tests = {"baseline": base_by.get(scope, []), "extrapolation": extra_by.get(scope, [])}
        for name in M.QUALITY_MODELS:
            if getattr(b, name) is not None:
                _evaluate_into(b, name, tests, report.rows)
        b.choose()

        if level == 0:
            noisy_train = [r for s, rs in train_by.items() if s[:2] == (variant, problem) and s[2] > 0 for r in rs]
            if noisy_train:
                cols = _degradation_obs(noisy_train, ideal_by_key, b, degradation_mode)
                try:
                    b.degradation = M.fit_degradation_arrays(**cols, mode=degradation_mode)
                    b.meta["n_degradation"] = len(cols["l"])
                except M.ModelFitError as exc:
                    report.skipped.append((scope, f"degradation: {exc}"))
        else:
            try:
                ideal = bundles.ideal(variant, problem)
            except M.UntrainedModel:
                ideal = None
            if ideal is not None and ideal.degradation is not None:
                _evaluate_into(b, "degradation", tests, report.rows, eval_bundle=ideal)
        bundles.add(b)

    if models_dir is not None:
        M.BundleSet.save(bundles, models_dir)
    return report


class RetrainPolicy:
    """Refit a scope once ``threshold`` records arrived since its last training."""

    def __init__(self, threshold: int = 50):
        if threshold < 1:
            raise ValueError("threshold must be >= 1")
        self.threshold = threshold

    def stale_scopes(self, store: ResultStore) -> list[str]:
        trained = store.train_state()
        now = scope_counts(store.records())
        return [k for k, c in now.items() if c - trained.get(k, 0) >= self.threshold]

    def train_store(self, store: ResultStore, split: SplitPolicy, **kwargs) -> TrainReport:
        records = store.records()
        report = train(records, split, store.models_dir, **kwargs)
        store.write_train_state(scope_counts(records))
        return report

    def maybe_retrain(self, store: ResultStore, split: SplitPolicy, **kwargs) -> TrainReport | None:
        if not self.stale_scopes(store):
            return None
        return self.train_store(store, split, **kwargs)


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

REPORT_COLUMNS = ["problem", "variant", "layers", "n", "l", "count", "mean_y", "mean_T",
                  "rmse_beta", "rmse_power_law", "rmse_chosen", "rmse_degradation"]


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return ""
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def summary_report(records: Sequence[ResultRecord], bundles: M.BundleSet | None = None) -> str:
    """CSV of per-(problem, variant, layers, n, l) means and model errors."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    groups = _group(records, lambda r: (r.problem, r.variant, r.layers, r.n_qubits, r.noise_level))
    for key in sorted(groups):
        problem, variant, layers, n, l = key
        rs = groups[key]
        row = {"problem": problem, "variant": variant, "layers": layers, "n": n, "l": f"{l:g}", "count": len(rs),
               "mean_y": float(np.mean([r.normalized_y for r in rs])),
               "mean_T": float(np.mean([r.runtime for r in rs]))}
        if bundles is not None and (variant, problem, float(l)) in bundles:
            b = bundles.get(variant, problem, l)
            for name in ("beta", "power_law", None):
                col = f"rmse_{name or 'chosen'}"
                try:
                    row[col] = M.evaluate(b, rs, model=name).rmse
                except (M.UntrainedModel, ValueError):
                    row[col] = None
            if l > 0 and (variant, problem, 0.0) in bundles:
                ideal = bundles.ideal(variant, problem)
                if ideal.degradation is not None:
                    row["rmse_degradation"] = M.evaluate(ideal, rs, model="degradation").rmse
        w.writerow([_fmt(row.get(c)) for c in REPORT_COLUMNS])
    return buf.getvalue()
