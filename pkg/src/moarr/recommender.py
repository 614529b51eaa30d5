"""Surrogate pair and reverse recommendation of architecture codes.

Two small networks cooperate: a *forward model* fits the archive's
code-to-performance records, then a *reverse model* (performance in, relaxed
code encoding out) is trained against the frozen forward model with the
composed objective

    mean_i || target_i - forward(reverse(target_i)) ||^2

so the reverse model never needs labeled code outputs; feeding it targets
from the superior region of the current front yields candidate codes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import mlp
from .mlp import MlpModel, TrainConfig
from .oracle import CostModel, param_count
from .pareto import Archive, PerformancePair, sample_ideal_region
from .space import (
    ArchitectureCode,
    CellCatalog,
    block_layout,
    code_to_string,
    code_to_vector,
    mutate_field,
    random_code,
    vector_to_code,
)

__all__ = [
    "PerfNormalizer",
    "build_forward_dataset",
    "build_forward_model",
    "build_reverse_model",
    "train_forward_model",
    "build_target_batch",
    "train_reverse_model",
    "composed_loss",
    "recommend",
]

FORWARD_HIDDEN = (64, 32)
REVERSE_HIDDEN = (64,)
_TARGET_CLIP = 1e-3

# Calibrated fitting configs: the forward surrogate needs the longer schedule
# to resolve the width/cost interactions; the reverse model converges faster.
DEFAULT_FORWARD_TRAIN = TrainConfig(learning_rate=0.1, max_epochs=400)
DEFAULT_REVERSE_TRAIN = TrainConfig(learning_rate=0.05, max_epochs=200)


@dataclass(frozen=True)
class PerfNormalizer:
    """Scales the two objectives to comparable magnitude: (acc, par / p_max)."""

    p_max: float

    def __post_init__(self) -> None:
        if self.p_max <= 0:
            raise ValueError("p_max must be positive")

    def to_array(self, pair: PerformancePair) -> np.ndarray:
        return np.array([pair.acc, pair.par / self.p_max])

    def batch(self, pairs: Sequence[PerformancePair]) -> np.ndarray:
        return np.array([[p.acc, p.par / self.p_max] for p in pairs]).reshape(-1, 2)


def build_forward_dataset(
    archive: Archive, normalizer: PerfNormalizer, catalog: CellCatalog
) -> tuple[np.ndarray, np.ndarray]:
    """Code-to-performance training arrays, one row per archive record."""
    records = archive.records
    if not records:
        raise ValueError("archive is empty")
    X = np.stack([code_to_vector(r.code, catalog) for r in records])
    Y = normalizer.batch([r.perf for r in records])
    return X, Y


def build_forward_model(input_width: int, seed: int = 0) -> MlpModel:
    widths = [input_width, *FORWARD_HIDDEN, 2]
    activations = ["rectifier"] * len(FORWARD_HIDDEN) + ["sigmoid"]
    return mlp.init_model(widths, activations, seed=seed)


def build_reverse_model(catalog: CellCatalog, seed: int = 0) -> MlpModel:
    layout = tuple(len(opts) for _, opts in block_layout(catalog))
    widths = [2, *REVERSE_HIDDEN, sum(layout)]
    activations = ["rectifier"] * len(REVERSE_HIDDEN) + ["block_softmax"]
    return mlp.init_model(widths, activations, seed=seed, block_layout=layout)


def train_forward_model(
    X: np.ndarray,
    Y: np.ndarray,
    config: TrainConfig,
    model: MlpModel | None = None,
) -> tuple[MlpModel, float]:
    """Fit the code-to-performance surrogate; returns (model, holdout RMSE).

    A fifth of the data (seeded, index-based) is held out for the error
    estimate.  A zero-variance target column trains fine but is flagged,
    since the fit can then say nothing about that objective.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape[0] < 10:
        raise ValueError("need at least 10 samples to fit the forward model")
    if np.any(np.isclose(Y.var(axis=0), 0.0)):
        warnings.warn("forward-model targets have a zero-variance column", stacklevel=2)
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(X.shape[0])
    n_hold = max(1, X.shape[0] // 5)
    hold, fit = order[:n_hold], order[n_hold:]
    if model is None:
        model = build_forward_model(X.shape[1], seed=config.seed)
    trained, _ = mlp.train(model, X[fit], Y[fit], config)
    pred = mlp.forward(trained, X[hold])
    rmse = float(np.sqrt(np.mean((pred - Y[hold]) ** 2)))
    return trained, rmse


def build_target_batch(
    archive: Archive,
    normalizer: PerfNormalizer,
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Normalized performance targets for reverse-model training.

    Half come from the superior region beyond the current boundary, half
    from a uniform grid over the observed performance range, so the reverse
    map stays anchored across the whole explored region while being accurate
    near the frontier.  All components are clipped into the open unit square.
    """
    if n < 1:
        raise ValueError("need n >= 1 targets")
    boundary = archive.boundary_pairs()
    n_ideal = n // 2
    ideal = sample_ideal_region(boundary, normalizer.p_max, n_ideal, rng) if n_ideal else []
    rows = [normalizer.to_array(p) for p in ideal]

    n_grid = n - n_ideal
    observed = normalizer.batch([r.perf for r in archive.records])
    lo = observed.min(axis=0)
    hi = observed.max(axis=0)
    side = int(np.ceil(np.sqrt(n_grid)))
    accs = np.linspace(lo[0], hi[0], side)
    pars = np.linspace(lo[1], hi[1], side)
    grid = [np.array([a, p]) for a in accs for p in pars][:n_grid]
    rows.extend(grid)
    batch = np.clip(np.array(rows), _TARGET_CLIP, 1.0 - _TARGET_CLIP)
    return batch.reshape(n, 2)


def composed_loss(
    forward_model: MlpModel, reverse_model: MlpModel, targets: np.ndarray
) -> float:
    """Mean squared distance between targets and forward(reverse(targets))."""
    targets = np.asarray(targets, dtype=float).reshape(-1, 2)
    out = mlp.forward(forward_model, mlp.forward(reverse_model, targets))
    return float(np.mean(np.sum((out - targets) ** 2, axis=1)))


def train_reverse_model(
    forward_model: MlpModel,
    targets: np.ndarray,
    config: TrainConfig,
    catalog: CellCatalog,
    model: MlpModel | None = None,
) -> tuple[MlpModel, list[float]]:
    """Train the reverse model through the frozen forward model.

    The forward model supplies only its input gradient; its parameters are
    never updated.  The loss trace holds the composed objective per epoch.
    """
    if forward_model.output_width != 2:
        raise ValueError("forward model must emit (acc, par) pairs")
    targets = np.asarray(targets, dtype=float).reshape(-1, 2)
    if targets.shape[0] == 0:
        raise ValueError("need a non-empty target batch")
    if model is None:
        model = build_reverse_model(catalog, seed=config.seed)

    def grad_fn(outputs: np.ndarray, wanted: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        fe_out = mlp.forward(forward_model, outputs)
        resid = fe_out - wanted
        losses = np.sum(resid**2, axis=1)
        grads = mlp.backward(forward_model, outputs, 2.0 * resid)
        return losses, grads.input_grad

    return mlp.train(
        model, targets, targets, config,
        loss="external_gradient", output_grad_fn=grad_fn,
    )


def _decode_batch(
    reverse_model: MlpModel, targets: np.ndarray, catalog: CellCatalog
) -> list[ArchitectureCode]:
    outputs = mlp.forward(reverse_model, np.asarray(targets, dtype=float).reshape(-1, 2))
    return [vector_to_code(row, catalog) for row in outputs]


def recommend(
    reverse_model: MlpModel,
    archive: Archive,
    normalizer: PerfNormalizer,
    catalog: CellCatalog,
    k: int,
    rng: np.random.Generator,
    cost_model: CostModel | None = None,
    targets: np.ndarray | None = None,
) -> list[ArchitectureCode]:
    """Propose ``k`` distinct unevaluated codes for the next batch.

    Targets drawn from the superior region are mapped through the reverse
    model and decoded; candidates already evaluated, duplicated within the
    batch, or (when a cost model is supplied) predicted over the parameter
    budget are dropped.  Shortfalls are topped up first with single-field
    mutations of the surviving recommendations, then with uniform random
    codes; the budget filter is abandoned rather than loop forever if it
    alone keeps rejecting candidates.
    """
    if k < 1:
        raise ValueError("need k >= 1 recommendations")
    if targets is None:
        boundary = archive.boundary_pairs()
        raw = sample_ideal_region(boundary, normalizer.p_max, k, rng)
        targets = np.array([normalizer.to_array(p) for p in raw])
    else:
        targets = np.asarray(targets, dtype=float).reshape(-1, 2)[:k]

    chosen: list[ArchitectureCode] = []
    seen: set[str] = set()

    def admissible(code: ArchitectureCode, enforce_budget: bool) -> bool:
        key = code_to_string(code)
        if key in seen or archive.has_code(code):
            return False
        if enforce_budget and cost_model is not None:
            if param_count(code, cost_model) > normalizer.p_max:
                return False
        return True

    def take(code: ArchitectureCode) -> None:
        chosen.append(code)
        seen.add(code_to_string(code))

    # Decoded codes seed the mutation phase even when they themselves are
    # over budget: their near neighbors often sit just inside it.
    bases: list[ArchitectureCode] = []
    base_keys: set[str] = set()
    for code in _decode_batch(reverse_model, targets, catalog):
        key = code_to_string(code)
        if key not in base_keys and not archive.has_code(code):
            base_keys.add(key)
            bases.append(code)
        if len(chosen) < k and admissible(code, enforce_budget=True):
            take(code)

    attempts = 0
    while len(chosen) < k and bases and attempts < 50 * k:
        base = bases[attempts % len(bases)]
        candidate = mutate_field(base, rng, catalog)
        attempts += 1
        if admissible(candidate, enforce_budget=True):
            take(candidate)

    misses = 0
    while len(chosen) < k:
        candidate = random_code(rng, catalog)
        # Long miss streaks mean the filter (budget or sheer exhaustion) is
        # starving the batch; drop the budget filter before giving up.
        if admissible(candidate, enforce_budget=misses < 1000):
            take(candidate)
        else:
            misses += 1
            if misses > 200_000:
                raise RuntimeError("search space exhausted while topping up batch")
    return chosen
