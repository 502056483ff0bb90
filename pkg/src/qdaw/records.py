"""The benchmark result record shared by the store, models and selection."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from datetime import datetime, timezone

NORMALIZATION_TOL = 1e-9


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


@dataclass(frozen=True)
class ResultRecord:
    instance_id: str
    problem: str
    n_qubits: int
    instance_seed: int
    variant: str
    layers: int
    noise_level: float
    shots: int
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
    run_seed: int
    best_bits: str
    timestamp: str

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and not math.isfinite(v):
                raise ValueError(f"field {f.name} is not finite")
        expected = (self.quality - self.lb) / (self.ub - self.lb)
        if abs(expected - self.normalized_y) > NORMALIZATION_TOL:
            raise ValueError("normalized_y inconsistent with quality and bounds")

    @property
    def key(self) -> tuple:
        """Resume key: one run per (instance, variant, layers, noise level)."""
        return (self.instance_id, self.variant, self.layers, float(self.noise_level))

    @property
    def scope(self) -> tuple[str, str, float]:
        return (self.variant, self.problem, float(self.noise_level))

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        # field order is the dataclass order, which is canonical
        return json.dumps(self.to_dict(), separators=(",", ":"), allow_nan=False)

    @classmethod
    def from_dict(cls, d: dict) -> "ResultRecord":
        names = {f.name for f in fields(cls)}
        missing = names - d.keys()
        if missing:
            raise ValueError(f"record missing fields {sorted(missing)}")
        kw = {k: d[k] for k in names}
        for k in ("n_qubits", "instance_seed", "layers", "shots", "d_cx", "n_cx", "optimizer_iters", "run_seed"):
            kw[k] = int(kw[k])
        for k in ("noise_level", "quality", "normalized_y", "lb", "ub", "runtime",
                  "quantum_runtime", "classical_runtime"):
            kw[k] = float(kw[k])
        return cls(**kw)

    @classmethod
    def from_json(cls, line: str) -> "ResultRecord":
        return cls.from_dict(json.loads(line))

    @classmethod
    def from_outcome(cls, outcome, instance, run_seed: int, timestamp: str | None = None) -> "ResultRecord":
        return cls(
            instance_id=instance.instance_id,
            problem=instance.kind.value,
            n_qubits=instance.n_qubits,
            instance_seed=int(instance.seed),
            variant=outcome.variant,
            layers=outcome.layers,
            noise_level=float(outcome.noise_level),
            shots=outcome.shots,
            quality=outcome.quality,
            normalized_y=outcome.normalized_y,
            lb=outcome.lb,
            ub=outcome.ub,
            runtime=outcome.runtime,
            quantum_runtime=outcome.quantum_runtime,
            classical_runtime=outcome.classical_runtime,
            d_cx=outcome.d_cx,
            n_cx=outcome.n_cx,
            optimizer_iters=outcome.optimizer_iters,
            run_seed=int(run_seed),
            best_bits=outcome.best_bits,
            timestamp=timestamp or utc_now(),
        )
