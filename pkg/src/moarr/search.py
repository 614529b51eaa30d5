"""Outer optimization loop: bootstrap, surrogate retraining, recommendation.

Each iteration rebuilds the surrogate pair from scratch on the full archive,
recommends a fresh batch of candidate codes, evaluates them, and appends the
results.  The archive is only touched once per iteration, after everything
else succeeded, so a failed iteration leaves no trace.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import predictor as fes
from .mlp import MlpModel, TrainConfig
from .oracle import CostModel, Evaluator
from .recommender import (
    DEFAULT_FORWARD_TRAIN,
    DEFAULT_REVERSE_TRAIN,
    PerfNormalizer,
    build_forward_dataset,
    build_target_batch,
    recommend as recommend_batch,
    train_forward_model,
    train_reverse_model,
)
from .pareto import Archive, EvaluatedRecord, PerformancePair, hypervolume
from .space import ArchitectureCode, CellCatalog, code_to_string, random_code

__all__ = [
    "OptimizerConfig",
    "IterationMetrics",
    "RunState",
    "RunReport",
    "bootstrap",
    "iterate",
    "run",
    "best_in_band",
]

# Stream labels for deriving independent per-purpose generators from one seed.
_STREAMS = {"bootstrap": 0, "fes": 1, "fe": 2, "rr": 3, "targets": 4, "recommend": 5}


@dataclass(frozen=True)
class OptimizerConfig:
    p_max: float = 2_500_000.0
    batch_per_iteration: int = 50
    max_iterations: int = 5
    bootstrap_count: int = 200
    seed: int = 0
    rr_target_count: int = 256
    use_fes_accuracy: bool = True
    fes_refresh: bool = False
    resample_targets: bool = True
    band_split: float = 2_000_000.0
    fe_train: TrainConfig = field(default_factory=lambda: DEFAULT_FORWARD_TRAIN)
    rr_train: TrainConfig = field(default_factory=lambda: DEFAULT_REVERSE_TRAIN)
    # Weight decay keeps the accuracy predictor anchored to the quick scores
    # instead of extrapolating along the cost attributes for frontier codes.
    fes_train: TrainConfig = field(
        default_factory=lambda: TrainConfig(learning_rate=0.1, max_epochs=400, l2_penalty=1e-3)
    )

    def __post_init__(self) -> None:
        if self.batch_per_iteration < 1:
            raise ValueError("batch_per_iteration must be >= 1")
        if self.bootstrap_count < 10:
            raise ValueError("bootstrap_count must be >= 10")
        if self.p_max <= 0:
            raise ValueError("p_max must be positive")
        if not 0 < self.band_split <= self.p_max:
            raise ValueError("band_split must lie in (0, p_max]")


@dataclass(frozen=True)
class IterationMetrics:
    iteration: int
    evaluations: int
    hypervolume: float
    boundary_size: int
    best_acc_under_pmax: float | None


@dataclass
class RunState:
    archive: Archive
    iteration: int
    fe_model: MlpModel | None
    rr_model: MlpModel | None
    fes_model: fes.AccuracyPredictor | None
    metrics: list[IterationMetrics]


@dataclass(frozen=True)
class RunReport:
    """Final front and the two lightweight-band selections of a run."""

    total_evaluations: int
    front: tuple[EvaluatedRecord, ...]
    small_band: EvaluatedRecord | None
    tiny_band: EvaluatedRecord | None
    metrics: tuple[IterationMetrics, ...]


def _rng(config: OptimizerConfig, stream: str, iteration: int = 0) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence((config.seed, iteration, _STREAMS[stream]))
    )


def _train_seed(config: OptimizerConfig, stream: str, iteration: int = 0) -> int:
    return int(_rng(config, stream, iteration).integers(2**31 - 1))


def _distinct_random_codes(
    count: int, rng: np.random.Generator, catalog: CellCatalog, taken: set[str]
) -> list[ArchitectureCode]:
    codes: list[ArchitectureCode] = []
    seen = set(taken)
    while len(codes) < count:
        code = random_code(rng, catalog)
        key = code_to_string(code)
        if key not in seen:
            seen.add(key)
            codes.append(code)
    return codes


def _evaluate_batch(
    codes: Sequence[ArchitectureCode], evaluator: Evaluator
) -> list:
    results = []
    for code in codes:
        try:
            results.append(evaluator.evaluate(code))
        except Exception as exc:
            raise RuntimeError(f"evaluator failed on code {code}") from exc
    return results


def _metrics_entry(archive: Archive, config: OptimizerConfig, iteration: int) -> IterationMetrics:
    records, boundary = archive.snapshot()
    pairs = [records[i].perf for i in boundary]
    feasible = [r.perf.acc for r in records if r.perf.par <= config.p_max]
    return IterationMetrics(
        iteration=iteration,
        evaluations=len(records),
        hypervolume=hypervolume(pairs, config.p_max),
        boundary_size=len(boundary),
        best_acc_under_pmax=max(feasible) if feasible else None,
    )


def _train_fes(archive: Archive, config: OptimizerConfig, catalog, cost_model):
    samples = []
    for record in archive.records:
        if record.oracle_acc is None or record.quick is None:
            continue
        attrs = fes.extract_attributes(record.code, catalog, record.quick, cost_model)
        samples.append((attrs, record.oracle_acc))
    if len(samples) < fes.MIN_TRAINING_SAMPLES:
        raise RuntimeError(
            f"only {len(samples)} usable records to fit the accuracy predictor"
        )
    cfg = replace(config.fes_train, seed=_train_seed(config, "fes"))
    model, _ = fes.train_predictor(samples, cfg)
    return model


def bootstrap(
    config: OptimizerConfig,
    evaluator: Evaluator,
    catalog: CellCatalog,
    cost_model: CostModel,
) -> RunState:
    """Evaluate an initial random sample and fit the accuracy predictor."""
    rng = _rng(config, "bootstrap")
    codes = _distinct_random_codes(config.bootstrap_count, rng, catalog, set())
    results = _evaluate_batch(codes, evaluator)
    records = []
    for code, result in zip(codes, results):
        if result.acc is None:
            raise RuntimeError("bootstrap requires an evaluator that reports accuracy")
        records.append(
            EvaluatedRecord(
                code=code,
                perf=PerformancePair(acc=result.acc, par=result.par),
                quick=tuple(result.quick) if result.quick is not None else None,
                iteration=0,
                oracle_acc=result.acc,
            )
        )
    archive = Archive()
    archive.extend(records)
    fes_model = _train_fes(archive, config, catalog, cost_model)
    return RunState(
        archive=archive,
        iteration=0,
        fe_model=None,
        rr_model=None,
        fes_model=fes_model,
        metrics=[],
    )


def iterate(
    state: RunState,
    config: OptimizerConfig,
    evaluator: Evaluator,
    catalog: CellCatalog,
    cost_model: CostModel,
) -> RunState:
    """One optimization round; appends exactly one batch of new evaluations.

    Surrogates are retrained from scratch on the current archive, the
    reverse model proposes the batch, and recorded accuracy follows the
    configured path: the predictor's estimate (default) or the evaluator's
    own score.  Any failure before the final append leaves the archive
    unchanged.
    """
    if len(state.archive) == 0:
        raise ValueError("state has not been bootstrapped")
    iteration = state.iteration + 1
    normalizer = PerfNormalizer(p_max=config.p_max)

    X, Y = build_forward_dataset(state.archive, normalizer, catalog)
    fe_cfg = replace(config.fe_train, seed=_train_seed(config, "fe", iteration))
    fe_model, _ = train_forward_model(X, Y, fe_cfg)

    target_rng = _rng(config, "targets", iteration)
    targets = build_target_batch(state.archive, normalizer, config.rr_target_count, target_rng)
    rr_cfg = replace(config.rr_train, seed=_train_seed(config, "rr", iteration))
    rr_model, _ = train_reverse_model(fe_model, targets, rr_cfg, catalog)

    reco_rng = _rng(config, "recommend", iteration)
    codes = recommend_batch(
        rr_model,
        state.archive,
        normalizer,
        catalog,
        config.batch_per_iteration,
        reco_rng,
        cost_model=cost_model,
        targets=None if config.resample_targets else targets,
    )
    results = _evaluate_batch(codes, evaluator)

    fes_model = state.fes_model
    records = []
    for code, result in zip(codes, results):
        quick = tuple(result.quick) if result.quick is not None else None
        if config.use_fes_accuracy:
            if quick is None or fes_model is None:
                raise RuntimeError("predictor path needs quick metrics and a fitted predictor")
            attrs = fes.extract_attributes(code, catalog, quick, cost_model)
            acc = fes.predict_accuracy(fes_model, attrs)
        else:
            if result.acc is None:
                raise RuntimeError("evaluator does not report accuracy; enable the predictor path")
            acc = result.acc
        records.append(
            EvaluatedRecord(
                code=code,
                perf=PerformancePair(acc=acc, par=result.par),
                quick=quick,
                iteration=iteration,
                oracle_acc=result.acc,
            )
        )

    state.archive.extend(records)
    if config.fes_refresh:
        fes_model = _train_fes(state.archive, config, catalog, cost_model)
    metrics = state.metrics + [_metrics_entry(state.archive, config, iteration)]
    return RunState(
        archive=state.archive,
        iteration=iteration,
        fe_model=fe_model,
        rr_model=rr_model,
        fes_model=fes_model,
        metrics=metrics,
    )


def best_in_band(
    records: Sequence[EvaluatedRecord],
    low: float | None,
    high: float,
    inclusive_high: bool = True,
) -> EvaluatedRecord | None:
    """Highest-accuracy record with parameters inside the band, if any."""
    def in_band(r: EvaluatedRecord) -> bool:
        if low is not None and r.perf.par < low:
            return False
        return r.perf.par <= high if inclusive_high else r.perf.par < high

    candidates = [r for r in records if in_band(r)]
    if not candidates:
        return None
    return min(candidates, key=lambda r: (-r.perf.acc, r.perf.par))


def run(
    config: OptimizerConfig,
    evaluator: Evaluator,
    catalog: CellCatalog,
    cost_model: CostModel,
) -> tuple[RunState, RunReport]:
    """Bootstrap, iterate, and report the constrained front and band picks.

    The reported front honors the parameter budget: boundary records over
    ``p_max`` are excluded.  Band selections are the best-accuracy codes in
    [band_split, p_max] and below band_split; an empty band stays empty.
    """
    state = bootstrap(config, evaluator, catalog, cost_model)
    for _ in range(config.max_iterations):
        state = iterate(state, config, evaluator, catalog, cost_model)
    boundary_records = state.archive.boundary_records()
    front = tuple(r for r in boundary_records if r.perf.par <= config.p_max)
    report = RunReport(
        total_evaluations=len(state.archive),
        front=front,
        small_band=best_in_band(front, config.band_split, config.p_max, inclusive_high=True),
        tiny_band=best_in_band(front, None, config.band_split, inclusive_high=False),
        metrics=tuple(state.metrics),
    )
    return state, report
