"""Run specifications, persistence, and the command-line front end.

Verbs:

* ``search <spec.yaml> [--overwrite]`` executes the configured algorithm per
  replicate and writes an evaluation log, front export, metrics table, and
  plain-text report into the output directory.
* ``compare <logs...> [--p-max N]`` recomputes per-iteration hypervolume from
  evaluation logs and tallies win/tie/loss across paired seeds.
* ``inspect <code> [--catalog PATH]`` dumps the canonical form, widths,
  structural attributes, and cost estimates of one architecture code.

Everything emitted is a diff-able text artifact; evaluation logs end in a
checksum line so truncation is detected on load.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import yaml

from .baselines import EvoConfig, evolve, random_search
from .mlp import TrainingDiverged
from .oracle import CostModel, SyntheticEvaluator, SyntheticLandscape, load_cost_model
from .pareto import (
    Archive,
    EvaluatedRecord,
    PerformancePair,
    hypervolume,
    pareto_boundary,
    write_front_csv,
)
from .predictor import extract_attributes
from .search import OptimizerConfig, RunReport, best_in_band, run
from .space import (
    CatalogError,
    CellCatalog,
    code_from_string,
    code_to_string,
    default_catalog,
    load_catalog,
    stage_widths,
    structural_attributes,
)
from .oracle import flops_estimate, param_count

__all__ = [
    "RunSpec",
    "SpecError",
    "LogIntegrityError",
    "parse_run_spec",
    "write_eval_log",
    "read_eval_log",
    "metrics_rows",
    "write_metrics_csv",
    "cmd_search",
    "cmd_compare",
    "cmd_inspect",
    "main",
]

ALGORITHMS = ("moarr", "random", "evolutionary")
REPLICATE_FILES = ("evaluations.csv", "front.csv", "metrics.csv", "report.txt")
_CHECKSUM_PREFIX = "# sha256="


class SpecError(ValueError):
    """Malformed or inconsistent run specification."""


class LogIntegrityError(ValueError):
    """Evaluation log failed its terminal checksum."""


@dataclass(frozen=True)
class RunSpec:
    algorithm: str
    output_dir: Path
    replicates: int
    seeds: tuple[int, ...]
    catalog_path: Path | None
    landscape_seed: int
    noise_amplitude: float
    cost_model_path: Path | None
    optimizer: OptimizerConfig
    evolution: EvoConfig
    random_budget: int


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise SpecError(f"{context}: missing required key {key!r}")
    return mapping[key]


def parse_run_spec(path) -> RunSpec:
    """Parse and validate a YAML run spec; diagnostics carry file positions."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SpecError(f"{path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f":{mark.line + 1}" if mark is not None else ""
        raise SpecError(f"{path}{line}: {exc}") from exc
    if not isinstance(raw, dict):
        raise SpecError(f"{path}: run spec must be a mapping")

    algorithm = str(_require(raw, "algorithm", str(path)))
    if algorithm not in ALGORITHMS:
        raise SpecError(f"{path}: unknown algorithm {algorithm!r}, expected one of {ALGORITHMS}")
    output_dir = Path(str(_require(raw, "output_dir", str(path))))

    seeds = raw.get("seeds", [0])
    if not isinstance(seeds, list) or not all(isinstance(s, int) for s in seeds):
        raise SpecError(f"{path}: seeds must be a list of integers")
    replicates = int(raw.get("replicates", len(seeds)))
    if replicates != len(seeds):
        raise SpecError(
            f"{path}: replicates ({replicates}) must equal the seed list length ({len(seeds)})"
        )

    catalog_path = raw.get("catalog")
    if catalog_path is not None:
        catalog_path = Path(str(catalog_path))
        if not catalog_path.exists():
            raise SpecError(f"{path}: catalog file {catalog_path} does not exist")

    evaluator_block = raw.get("evaluator", {})
    if not isinstance(evaluator_block, dict):
        raise SpecError(f"{path}: evaluator must be a mapping")
    landscape = evaluator_block.get("landscape", {})
    if not isinstance(landscape, dict):
        raise SpecError(f"{path}: evaluator.landscape must be a mapping")
    landscape_seed = int(landscape.get("seed", 7))
    noise_amplitude = float(landscape.get("noise_amplitude", 0.02))
    cost_model_path = evaluator_block.get("cost_model")
    if cost_model_path is not None:
        cost_model_path = Path(str(cost_model_path))
        if not cost_model_path.exists():
            raise SpecError(f"{path}: cost model file {cost_model_path} does not exist")

    optimizer_block = raw.get("optimizer", {})
    if not isinstance(optimizer_block, dict):
        raise SpecError(f"{path}: optimizer must be a mapping")
    try:
        optimizer = OptimizerConfig(
            p_max=float(optimizer_block.get("p_max", 2_500_000.0)),
            batch_per_iteration=int(optimizer_block.get("batch_per_iteration", 50)),
            max_iterations=int(optimizer_block.get("max_iterations", 5)),
            bootstrap_count=int(optimizer_block.get("bootstrap_count", 200)),
            rr_target_count=int(optimizer_block.get("rr_target_count", 256)),
            use_fes_accuracy=bool(optimizer_block.get("use_fes_accuracy", True)),
            fes_refresh=bool(optimizer_block.get("fes_refresh", False)),
            resample_targets=bool(optimizer_block.get("resample_targets", True)),
            band_split=float(optimizer_block.get("band_split", 2_000_000.0)),
        )
    except ValueError as exc:
        raise SpecError(f"{path}: optimizer: {exc}") from exc

    evolution_block = raw.get("evolution", {})
    if not isinstance(evolution_block, dict):
        raise SpecError(f"{path}: evolution must be a mapping")
    try:
        evolution = EvoConfig(
            population_size=int(evolution_block.get("population_size", 50)),
            generations=int(evolution_block.get("generations", 5)),
            crossover_rate=float(evolution_block.get("crossover_rate", 0.9)),
            mutation_rate=float(evolution_block.get("mutation_rate", 1.0 / 17.0)),
        )
    except ValueError as exc:
        raise SpecError(f"{path}: evolution: {exc}") from exc

    random_block = raw.get("random", {})
    if not isinstance(random_block, dict):
        raise SpecError(f"{path}: random must be a mapping")
    random_budget = int(random_block.get("budget", 450))
    if random_budget < 1:
        raise SpecError(f"{path}: random.budget must be >= 1")

    return RunSpec(
        algorithm=algorithm,
        output_dir=output_dir,
        replicates=replicates,
        seeds=tuple(seeds),
        catalog_path=catalog_path,
        landscape_seed=landscape_seed,
        noise_amplitude=noise_amplitude,
        cost_model_path=cost_model_path,
        optimizer=optimizer,
        evolution=evolution,
        random_budget=random_budget,
    )


def _load_catalog(spec: RunSpec) -> CellCatalog:
    if spec.catalog_path is None:
        return default_catalog()
    return load_catalog(spec.catalog_path)


def _build_evaluator(spec: RunSpec, catalog: CellCatalog) -> SyntheticEvaluator:
    if spec.cost_model_path is not None:
        cost_model = load_cost_model(spec.cost_model_path, catalog)
    else:
        cost_model = CostModel(catalog=catalog)
    landscape = SyntheticLandscape.generate(
        catalog, seed=spec.landscape_seed, noise_amplitude=spec.noise_amplitude
    )
    return SyntheticEvaluator(landscape, cost_model)


def write_eval_log(path, records: Sequence[EvaluatedRecord], meta: dict) -> None:
    """Append-only CSV of evaluations plus a terminal checksum line."""
    buffer = io.StringIO()
    for key in sorted(meta):
        buffer.write(f"# {key}={meta[key]}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["iteration", "code", "acc", "par", "quick_top1", "quick_top5", "quick_loss"])
    for r in records:
        quick = r.quick if r.quick is not None else ("", "", "")
        writer.writerow(
            [r.iteration, code_to_string(r.code), repr(r.perf.acc), repr(r.perf.par),
             *(repr(q) if q != "" else "" for q in quick)]
        )
    payload = buffer.getvalue()
    digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(payload)
        handle.write(f"{_CHECKSUM_PREFIX}{digest}\n")


def read_eval_log(path) -> tuple[dict, list[dict]]:
    """Load a log, verifying its checksum; returns (metadata, row dicts)."""
    with open(path, "r", encoding="utf-8", newline="") as handle:
        text = handle.read()
    lines = text.splitlines(keepends=True)
    if not lines or not lines[-1].startswith(_CHECKSUM_PREFIX):
        raise LogIntegrityError(f"{path}: missing terminal checksum line")
    stated = lines[-1].strip()[len(_CHECKSUM_PREFIX):]
    payload = "".join(lines[:-1])
    actual = hashlib.sha256(payload.encode("utf-8")).hexdigest()
    if stated != actual:
        raise LogIntegrityError(f"{path}: checksum mismatch, log truncated or edited")
    meta: dict = {}
    body: list[str] = []
    for line in payload.splitlines():
        if line.startswith("# ") and "=" in line:
            key, value = line[2:].split("=", 1)
            meta[key] = value
        else:
            body.append(line)
    reader = csv.DictReader(body)
    rows = []
    for row in reader:
        rows.append(
            {
                "iteration": int(row["iteration"]),
                "code": row["code"],
                "acc": float(row["acc"]),
                "par": float(row["par"]),
                "quick_top1": float(row["quick_top1"]) if row["quick_top1"] else None,
                "quick_top5": float(row["quick_top5"]) if row["quick_top5"] else None,
                "quick_loss": float(row["quick_loss"]) if row["quick_loss"] else None,
            }
        )
    return meta, rows


@dataclass(frozen=True)
class _LogPoint:
    """Just enough of a record to recompute trajectory metrics from a log."""

    iteration: int
    perf: PerformancePair


def metrics_rows(records: Sequence, p_max: float) -> list[dict]:
    """Cumulative per-iteration trajectory: hypervolume, boundary, best acc.

    Accepts anything with ``iteration`` and ``perf`` attributes (archive
    records or rows reloaded from an evaluation log).
    """
    if not records:
        return []
    rows = []
    last = max(r.iteration for r in records)
    for iteration in range(last + 1):
        upto = [r for r in records if r.iteration <= iteration]
        boundary = pareto_boundary([r.perf for r in upto])
        pairs = [upto[i].perf for i in boundary]
        feasible = [r.perf.acc for r in upto if r.perf.par <= p_max]
        rows.append(
            {
                "iteration": iteration,
                "evaluations": len(upto),
                "hypervolume": hypervolume(pairs, p_max),
                "boundary_size": len(boundary),
                "best_acc_under_pmax": max(feasible) if feasible else None,
            }
        )
    return rows


def write_metrics_csv(path, rows: Sequence[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["iteration", "evaluations", "hypervolume", "boundary_size", "best_acc_under_pmax"]
        )
        for row in rows:
            best = row["best_acc_under_pmax"]
            writer.writerow(
                [row["iteration"], row["evaluations"], repr(row["hypervolume"]),
                 row["boundary_size"], repr(best) if best is not None else ""]
            )


def _format_selection(label: str, record: EvaluatedRecord | None) -> str:
    if record is None:
        return f"{label}: (empty band)"
    return (
        f"{label}: acc={record.perf.acc!r} par={record.perf.par!r} "
        f"code={code_to_string(record.code)}"
    )


def _write_report(path, spec: RunSpec, seed: int, archive: Archive, report: RunReport | None) -> None:
    records = archive.records
    p_max = spec.optimizer.p_max
    boundary = archive.boundary_records()
    front = [r for r in boundary if r.perf.par <= p_max]
    small = best_in_band(front, spec.optimizer.band_split, p_max, inclusive_high=True)
    tiny = best_in_band(front, None, spec.optimizer.band_split, inclusive_high=False)
    rows = metrics_rows(records, p_max)
    lines = [
        "search run report",
        "=================",
        f"algorithm: {spec.algorithm}",
        f"seed: {seed}",
        f"landscape_seed: {spec.landscape_seed}",
        f"p_max: {p_max!r}",
        f"evaluations: {len(records)}",
        f"boundary size: {len(boundary)}",
        f"feasible front size (par <= p_max): {len(front)}",
        f"final hypervolume: {rows[-1]['hypervolume']!r}" if rows else "final hypervolume: 0.0",
        _format_selection(
            f"best in [{spec.optimizer.band_split:g}, {p_max:g}]", small
        ),
        _format_selection(f"best under {spec.optimizer.band_split:g}", tiny),
        "",
        "per-iteration metrics:",
        "iteration,evaluations,hypervolume,boundary_size,best_acc_under_pmax",
    ]
    for row in rows:
        best = row["best_acc_under_pmax"]
        lines.append(
            f"{row['iteration']},{row['evaluations']},{row['hypervolume']!r},"
            f"{row['boundary_size']},{repr(best) if best is not None else ''}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _run_replicate(spec: RunSpec, seed: int, out_dir: Path) -> None:
    catalog = _load_catalog(spec)
    evaluator = _build_evaluator(spec, catalog)
    if spec.algorithm == "moarr":
        config = replace(spec.optimizer, seed=seed)
        state, report = run(config, evaluator, catalog, evaluator.cost_model)
        archive = state.archive
    elif spec.algorithm == "random":
        archive = random_search(
            spec.random_budget, evaluator, catalog, seed=seed,
            iteration_size=spec.optimizer.batch_per_iteration,
        )
        report = None
    else:
        archive = evolve(replace(spec.evolution, seed=seed), evaluator, catalog)
        report = None

    records = archive.records
    p_max = spec.optimizer.p_max
    meta = {
        "algorithm": spec.algorithm,
        "seed": seed,
        "landscape_seed": spec.landscape_seed,
        "noise_amplitude": spec.noise_amplitude,
        "p_max": repr(p_max),
    }
    write_eval_log(out_dir / "evaluations.csv", records, meta)
    boundary_feasible = [r for r in archive.boundary_records() if r.perf.par <= p_max]
    write_front_csv(out_dir / "front.csv", boundary_feasible)
    write_metrics_csv(out_dir / "metrics.csv", metrics_rows(records, p_max))
    _write_report(out_dir / "report.txt", spec, seed, archive, report)


def cmd_search(spec_path, overwrite: bool = False) -> int:
    """Execute a run spec; one subdirectory of artifacts per replicate."""
    try:
        spec = parse_run_spec(spec_path)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        for index, seed in enumerate(spec.seeds):
            out_dir = spec.output_dir / f"replicate_{index:02d}"
            existing = [name for name in REPLICATE_FILES if (out_dir / name).exists()]
            if existing and not overwrite:
                print(
                    f"error: {out_dir} already holds {existing[0]}; rerun with --overwrite",
                    file=sys.stderr,
                )
                return 2
            out_dir.mkdir(parents=True, exist_ok=True)
            _run_replicate(spec, seed, out_dir)
    except (TrainingDiverged, RuntimeError, CatalogError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def _pairwise_outcomes(finals: dict[tuple[str, int], float]) -> list[str]:
    algorithms = sorted({alg for alg, _ in finals})
    lines = []
    for i, first in enumerate(algorithms):
        for second in algorithms[i + 1:]:
            shared = sorted(
                seed for alg, seed in finals if alg == first
                and (second, seed) in finals
            )
            if not shared:
                continue
            wins = ties = losses = 0
            for seed in shared:
                a, b = finals[(first, seed)], finals[(second, seed)]
                if a > b:
                    wins += 1
                elif a < b:
                    losses += 1
                else:
                    ties += 1
            lines.append(
                f"{first} vs {second}: wins={wins} ties={ties} losses={losses} "
                f"(over {len(shared)} paired seeds)"
            )
    return lines


def cmd_compare(log_paths: Sequence, p_max: float | None = None) -> int:
    """Tabulate per-iteration hypervolume across logs and tally pairings."""
    if len(log_paths) < 2:
        print("error: compare needs at least two evaluation logs", file=sys.stderr)
        return 2
    loaded = []
    try:
        for path in log_paths:
            meta, rows = read_eval_log(path)
            loaded.append((Path(path), meta, rows))
    except (OSError, LogIntegrityError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    p_values = {meta.get("p_max") for _, meta, _ in loaded}
    if len(p_values) != 1:
        print(f"error: logs disagree on p_max: {sorted(p_values)}", file=sys.stderr)
        return 2
    log_p_max = float(next(iter(p_values)))
    if p_max is not None and p_max != log_p_max:
        print(
            f"error: requested p_max {p_max!r} does not match logs ({log_p_max!r})",
            file=sys.stderr,
        )
        return 2
    p_max = log_p_max

    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(
        ["log", "algorithm", "seed", "iteration", "evaluations", "hypervolume"]
    )
    finals: dict[tuple[str, int], float] = {}
    for path, meta, rows in loaded:
        points = [
            _LogPoint(iteration=row["iteration"],
                      perf=PerformancePair(acc=row["acc"], par=row["par"]))
            for row in rows
        ]
        trajectory = _trajectory(points, p_max)
        for iteration, evaluations, hv in trajectory:
            writer.writerow(
                [path, meta.get("algorithm", "?"), meta.get("seed", "?"),
                 iteration, evaluations, repr(hv)]
            )
        if trajectory:
            key = (meta.get("algorithm", "?"), int(meta.get("seed", -1)))
            finals[key] = trajectory[-1][2]
    print()
    print("final hypervolume per log:")
    for path, meta, _ in loaded:
        key = (meta.get("algorithm", "?"), int(meta.get("seed", -1)))
        print(f"  {path}: {finals.get(key, 0.0)!r}")
    for line in _pairwise_outcomes(finals):
        print(line)
    return 0


def _trajectory(records: Sequence, p_max: float) -> list[tuple[int, int, float]]:
    rows = metrics_rows(records, p_max)
    return [(r["iteration"], r["evaluations"], r["hypervolume"]) for r in rows]


def cmd_inspect(code_string: str, catalog_path=None, cost_model_path=None) -> int:
    """Print the canonical form and derived attributes of one code."""
    try:
        catalog = default_catalog() if catalog_path is None else load_catalog(catalog_path)
    except (OSError, CatalogError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        code = code_from_string(code_string, catalog)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    cost_model = (
        CostModel(catalog=catalog)
        if cost_model_path is None
        else load_cost_model(cost_model_path, catalog)
    )
    density, layer_count, reduction_count = structural_attributes(code, catalog)
    widths = stage_widths(code)
    print(f"code: {code_to_string(code)}")
    print(f"stage widths: {widths}")
    print(f"density: {density!r}")
    print(f"layer_count: {layer_count}")
    print(f"reduction_count: {reduction_count}")
    print(f"params_estimate: {param_count(code, cost_model)!r}")
    print(f"flops_estimate: {flops_estimate(code, cost_model)!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moarr",
        description="Multi-objective architecture search toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_search = sub.add_parser("search", help="execute a run spec")
    p_search.add_argument("spec", type=Path)
    p_search.add_argument("--overwrite", action="store_true")

    p_compare = sub.add_parser("compare", help="compare evaluation logs")
    p_compare.add_argument("logs", nargs="+", type=Path)
    p_compare.add_argument("--p-max", type=float, default=None)

    p_inspect = sub.add_parser("inspect", help="inspect one architecture code")
    p_inspect.add_argument("code")
    p_inspect.add_argument("--catalog", type=Path, default=None)
    p_inspect.add_argument("--cost-model", type=Path, default=None)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "search":
        return cmd_search(args.spec, overwrite=args.overwrite)
    if args.command == "compare":
        return cmd_compare(args.logs, p_max=args.p_max)
    return cmd_inspect(args.code, catalog_path=args.catalog, cost_model_path=args.cost_model)
