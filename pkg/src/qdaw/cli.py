"""Command-line entry point: ``qdaw <command> [options]``.

Exit codes: 0 success, 1 error, 2 infeasible selection, 3 untrained model.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .algorithms import Backend
from .config import Config, ConfigError, load_config
from .models import UntrainedModel
from .problems import ProblemInstance, ProblemKind, generate_instance
from .selection import (
    CandidateRegistry,
    ExpressionError,
    Infeasible,
    RequirementScope,
    select,
    solve,
)
from .store import (
    BenchmarkPlan,
    ResultStore,
    RetrainPolicy,
    SplitPolicy,
    derive_seed,
    load_plans,
    run_benchmark,
    summary_report,
)

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_UNTRAINED = 0, 1, 2, 3

log = logging.getLogger("qdaw")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qdaw",
        description="Benchmark QAOA-family algorithms, fit performance models and select algorithms.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="YAML config file (default: $QDAW_CONFIG)")
    parser.add_argument("--store", help="store directory (overrides the config)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("gen", help="generate problem instances")
    p.add_argument("--problem", required=True, choices=[k.value for k in ProblemKind])
    p.add_argument("--n", type=int, required=True, help="qubit count")
    p.add_argument("--count", type=int, default=1, help="number of instances")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="instances", help="output directory")

    p = sub.add_parser("bench", help="run a benchmark plan into the store")
    p.add_argument("--plan", required=True, help="YAML plan file")
    p.add_argument("--workers", type=int, help="worker processes (overrides the config)")

    p = sub.add_parser("train", help="fit models on the stored results")
    p.add_argument("--split", help='sizes as "BASE,...:EXTRA,..." (default from config)')
    p.add_argument("--if-stale", action="store_true", help="only retrain when the retrain threshold is reached")

    p = sub.add_parser("eval", help="write the training evaluation as CSV")
    p.add_argument("--split", help='sizes as "BASE,...:EXTRA,..." (default from config)')
    p.add_argument("--report", required=True, help="output CSV path")

    for name, text in (("select", "choose an algorithm for an instance"),
                       ("solve", "choose, execute and record an algorithm run")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--instance", required=True, help="instance JSON file")
        p.add_argument("--objective", required=True,
                       help='"maximize EXPR" or "minimize EXPR", e.g. "maximize SOLUTION_QUALITY"')
        p.add_argument("--constraint", action="append", default=[], help='e.g. "RUNTIME <= 10" (repeatable)')
        p.add_argument("--noise-level", type=float, help="candidate noise level (default from config)")
        p.add_argument("--max-layers", type=int, help="registry layer limit (default from config)")
        p.add_argument("--variants", help="comma-separated registry variants (default from config)")
        if name == "solve":
            p.add_argument("--seed", type=int, help="run seed (default derived from the global seed)")

    p = sub.add_parser("report", help="CSV summary of stored results")
    p.add_argument("--out", help="output path (default stdout)")
    return parser


def parse_objective(text: str) -> RequirementScope:
    head, _, rest = text.strip().partition(" ")
    head = head.rstrip(":").lower()
    if head in ("max", "maximize", "maximise"):
        return RequirementScope.build(maximize=rest)
    if head in ("min", "minimize", "minimise"):
        return RequirementScope.build(minimize=rest)
    raise ExpressionError("objective must start with 'maximize' or 'minimize'", text, 1)


def _split(args, cfg: Config) -> SplitPolicy:
    if getattr(args, "split", None):
        return SplitPolicy.parse(args.split, cfg.split.holdout_fraction, cfg.seed)
    s = cfg.split
    return SplitPolicy(frozenset(s.baseline_sizes), frozenset(s.extrapolation_sizes), s.holdout_fraction, cfg.seed)


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_gen(args, cfg: Config, store: ResultStore) -> int:
    kind = ProblemKind.parse(args.problem)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        inst = generate_instance(kind, args.n, derive_seed(args.seed, i))
        path = out / f"{kind.value}_n{args.n}_{i}.json"
        path.write_text(inst.to_json() + "\n", encoding="utf-8")
        print(path)
    return EXIT_OK


def cmd_bench(args, cfg: Config, store: ResultStore) -> int:
    workers = args.workers or cfg.workers
    total_new = 0
    for plan in load_plans(args.plan):
        def progress(k, total):
            if k == total or k % 50 == 0:
                log.info("bench: %d/%d runs", k, total)
        s = run_benchmark(plan, store, workers, cfg.noise, cfg.measure_classical, progress)
        total_new += s.succeeded
        print(f"planned {s.planned}, skipped {s.skipped}, succeeded {s.succeeded}, failed {s.failed}")
    print(f"{total_new} new record(s) in {store.results_path}")
    return EXIT_OK


def cmd_train(args, cfg: Config, store: ResultStore) -> int:
    policy = RetrainPolicy(cfg.retrain_threshold)
    split = _split(args, cfg)
    report = policy.maybe_retrain(store, split) if args.if_stale else policy.train_store(store, split)
    if report is None:
        print("models are up to date")
        return EXIT_OK
    for b in report.bundles:
        print(f"trained {b.variant} {b.problem} l={b.level:g}: chosen={b.chosen_quality_model}")
    for scope, why in report.skipped:
        print(f"skipped {'/'.join(str(s) for s in scope)}: {why}")
    return EXIT_OK


def cmd_eval(args, cfg: Config, store: ResultStore) -> int:
    from .store import train

    report = train(store.records(), _split(args, cfg))
    Path(args.report).write_text(report.to_csv(), encoding="utf-8")
    print(args.report)
    return EXIT_OK


def _selection_inputs(args, cfg: Config, store: ResultStore):
    inst = ProblemInstance.from_json(Path(args.instance).read_text(encoding="utf-8"))
    scope = RequirementScope.flatten_all([
        parse_objective(args.objective), RequirementScope.build(constraints=args.constraint)])
    level = cfg.registry.noise_level if args.noise_level is None else args.noise_level
    max_layers = args.max_layers or cfg.registry.max_layers
    variants = args.variants.split(",") if args.variants else cfg.registry.variants
    registry = CandidateRegistry.grid(variants, max_layers, level, **cfg.spec_kwargs())
    return inst, scope, registry, store.load_bundles()


def cmd_select(args, cfg: Config, store: ResultStore) -> int:
    inst, scope, registry, bundles = _selection_inputs(args, cfg, store)
    _emit(select(inst, scope, registry, bundles).to_dict())
    return EXIT_OK


def cmd_solve(args, cfg: Config, store: ResultStore) -> int:
    inst, scope, registry, bundles = _selection_inputs(args, cfg, store)
    seed = args.seed if args.seed is not None else derive_seed(cfg.seed, inst.seed)
    level = registry.candidates[0].level
    backend = Backend.ideal() if level == 0 else Backend.noisy(cfg.noise, level)
    choice, outcome = solve(inst, scope, registry, bundles, backend, seed, store, cfg.measure_classical)
    stale = RetrainPolicy(cfg.retrain_threshold).stale_scopes(store)
    _emit({"selection": choice.to_dict(), "outcome": outcome.to_dict(), "stale_scopes": stale})
    return EXIT_OK


def cmd_report(args, cfg: Config, store: ResultStore) -> int:
    try:
        bundles = store.load_bundles()
    except UntrainedModel:
        bundles = None
    text = summary_report(store.records(), bundles)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "bench": cmd_bench,
    "train": cmd_train,
    "eval": cmd_eval,
    "select": cmd_select,
    "solve": cmd_solve,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config)
        if args.store:
            cfg = cfg.with_store(args.store)
        return COMMANDS[args.command](args, cfg, ResultStore(cfg.store.root))
    except Infeasible as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except UntrainedModel as exc:
        print(f"error: untrained model: {exc}", file=sys.stderr)
        return EXIT_UNTRAINED
    except (ConfigError, ExpressionError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
