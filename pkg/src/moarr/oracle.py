"""Pluggable evaluation oracles: surrogate cost model and synthetic landscapes.

Real network training is out of scope here; evaluation is abstracted behind
``Evaluator`` so a genuine trainer can slot in.  The built-in synthetic
landscape is a deterministic function of the architecture code: accuracy
decomposes additively over cell/stage affinities plus depth and width
response curves, with hash-seeded per-code noise, so repeated evaluation of
one code always returns identical results while the terrain stays rugged
enough that blind sampling is not optimal.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import NamedTuple, Protocol, runtime_checkable

import numpy as np
import yaml

from .space import (
    ArchitectureCode,
    CellCatalog,
    code_to_string,
    stage_widths,
)

__all__ = [
    "QuickMetrics",
    "EvalResult",
    "CostModel",
    "param_count",
    "flops_estimate",
    "SyntheticLandscape",
    "synthetic_evaluate",
    "Evaluator",
    "SyntheticEvaluator",
    "load_cost_model",
    "load_landscape_spec",
]

ACC_CLIP = (0.01, 0.99)
TOP5_OFFSET = 0.25
GAP_RANGE = (0.1, 0.3)


class QuickMetrics(NamedTuple):
    """Cheap early-training signals: top-1/top-5 scores and a loss value."""

    top1: float
    top5: float
    loss: float


class EvalResult(NamedTuple):
    acc: float
    par: float
    quick: QuickMetrics


@dataclass(frozen=True)
class CostModel:
    """Surrogate parameter/FLOP estimator driven by catalog coefficients.

    Each placed cell contributes ``coefficient * C_in * C_out``; FLOPs
    additionally scale every term (stem, cells, pooling, classifier alike)
    by the spatial area at which the term operates, so doubling the input
    resolution exactly quadruples the estimate.
    """

    catalog: CellCatalog
    stem_coefficient: float = 30.0
    classifier_coefficient: float = 1.0
    input_size: int = 32
    class_count: int = 10

    def __post_init__(self) -> None:
        if self.stem_coefficient < 0 or self.classifier_coefficient < 0:
            raise ValueError("cost constants must be non-negative")
        if self.input_size < 1 or self.class_count < 1:
            raise ValueError("input_size and class_count must be >= 1")


def _placed_terms(code: ArchitectureCode, cm: CostModel) -> list[tuple[float, float, int]]:
    """(param term, flop coefficient term, stage index) per placed cell."""
    catalog = cm.catalog
    w = stage_widths(code)
    terms: list[tuple[float, float, int]] = []

    def add(entry, c_in: float, c_out: float, stage: int) -> None:
        terms.append((entry.param_coefficient * c_in * c_out,
                      entry.flop_coefficient * c_in * c_out, stage))

    for i, (name, depth) in enumerate(
        ((code.normal1, code.depth1), (code.normal2, code.depth2), (code.normal3, code.depth3))
    ):
        entry = catalog.normal(name)
        stage = i + 1
        width = w[stage - 1]
        for _ in range(depth):
            add(entry, width, width, stage)
    add(catalog.reduction(code.reduce2), w[0], w[1], 2)
    add(catalog.reduction(code.reduce3), w[1], w[2], 3)
    if code.use_stage4:
        add(catalog.reduction(code.reduce4), w[2], w[3], 4)
    return terms


def _stage_areas(code: ArchitectureCode, cm: CostModel) -> list[float]:
    """Spatial area per stage: each active stride-2 reduction halves the side."""
    side = float(cm.input_size)
    areas = [side * side]
    for stage in (2, 3, 4):
        active = stage < 4 or code.use_stage4
        if active:
            side /= 2.0
        areas.append(side * side)
    return areas


def param_count(code: ArchitectureCode, cost_model: CostModel) -> float:
    """Estimated parameter count: cells plus stem and classifier terms."""
    w = stage_widths(code)
    total = cost_model.stem_coefficient * w[0]
    total += sum(p for p, _, _ in _placed_terms(code, cost_model))
    total += cost_model.catalog.pooling(code.pooling).param_coefficient * w[3]
    total += cost_model.classifier_coefficient * w[3] * cost_model.class_count
    return total


def flops_estimate(code: ArchitectureCode, cost_model: CostModel) -> float:
    """Estimated multiply-adds: every cost term weighted by its stage's area."""
    w = stage_widths(code)
    areas = _stage_areas(code, cost_model)
    total = cost_model.stem_coefficient * w[0] * areas[0]
    total += sum(f * areas[stage - 1] for _, f, stage in _placed_terms(code, cost_model))
    total += cost_model.catalog.pooling(code.pooling).flop_coefficient * w[3] * areas[3]
    total += cost_model.classifier_coefficient * w[3] * cost_model.class_count * areas[3]
    return total


def _hash_unit(seed: int, channel: str, key: str) -> float:
    """Deterministic uniform in [-1, 1) from (landscape seed, channel, code)."""
    digest = hashlib.sha256(f"{seed}:{channel}:{key}".encode("utf-8")).digest()
    u = int.from_bytes(digest[:8], "big") / 2**64
    return 2.0 * u - 1.0


# Cell-slot pairs that carry interaction weights: (label, slot_a, slot_b).
_INTERACTION_PAIRS = (
    ("n1n2", "normal1", "normal2"),
    ("n2n3", "normal2", "normal3"),
    ("n1r2", "normal1", "reduce2"),
    ("n2r3", "normal2", "reduce3"),
    ("n3r4", "normal3", "reduce4"),
    ("r2r3", "reduce2", "reduce3"),
)


@dataclass(frozen=True)
class SyntheticLandscape:
    """Deterministic accuracy terrain generated from a seed and a catalog.

    Besides per-(cell, stage) affinities, adjacent cell slots carry pairwise
    interaction weights, so how good a cell is depends on its neighbors; a
    single-field change moves several terms at once, which keeps the terrain
    from being trivially separable.
    """

    seed: int
    noise_amplitude: float
    base: float
    affinity: dict[tuple[str, int], float]
    interaction: dict[tuple[str, str, str], float]
    depth_peak: float
    depth_coefficient: float
    depth_width_coupling: float
    width_reference: float
    width_scale: float
    width_amplitude: float
    accuracy_gap: float

    @classmethod
    def generate(
        cls,
        catalog: CellCatalog,
        seed: int,
        noise_amplitude: float = 0.02,
        interaction_scale: float = 0.15,
    ) -> "SyntheticLandscape":
        """Regenerating with the same seed reproduces every table entry."""
        if noise_amplitude < 0:
            raise ValueError("noise_amplitude must be >= 0")
        if interaction_scale < 0:
            raise ValueError("interaction_scale must be >= 0")
        rng = np.random.default_rng(seed)
        affinity: dict[tuple[str, int], float] = {}
        for stage in (1, 2, 3):
            for entry in catalog.normal_cells:
                affinity[(entry.name, stage)] = float(rng.normal(0.0, 0.18))
        for stage in (2, 3, 4):
            for entry in catalog.reduction_cells:
                affinity[(entry.name, stage)] = float(rng.normal(0.0, 0.18))
        normals = [e.name for e in catalog.normal_cells]
        reductions = [e.name for e in catalog.reduction_cells]
        slot_names = {
            "normal1": normals, "normal2": normals, "normal3": normals,
            "reduce2": reductions, "reduce3": reductions, "reduce4": reductions,
        }
        interaction: dict[tuple[str, str, str], float] = {}
        for label, slot_a, slot_b in _INTERACTION_PAIRS:
            for name_a in slot_names[slot_a]:
                for name_b in slot_names[slot_b]:
                    interaction[(label, name_a, name_b)] = float(
                        rng.normal(0.0, interaction_scale)
                    )
        return cls(
            seed=seed,
            noise_amplitude=noise_amplitude,
            base=float(rng.uniform(0.5, 1.1)),
            affinity=affinity,
            interaction=interaction,
            depth_peak=float(rng.uniform(14.0, 18.0)),
            depth_coefficient=float(rng.uniform(0.020, 0.035)),
            depth_width_coupling=float(rng.uniform(1.5, 3.0)),
            width_reference=float(rng.uniform(0.9e6, 1.6e6)),
            width_scale=float(rng.uniform(0.7, 1.1)),
            width_amplitude=float(rng.uniform(0.5, 0.9)),
            accuracy_gap=float(rng.uniform(*GAP_RANGE)),
        )


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def synthetic_evaluate(
    code: ArchitectureCode,
    landscape: SyntheticLandscape,
    cost_model: CostModel,
) -> EvalResult:
    """Deterministic (accuracy, parameters, quick metrics) for one code."""
    par = param_count(code, cost_model)
    key = code_to_string(code)
    logit = landscape.base
    logit += landscape.affinity[(code.normal1, 1)]
    logit += landscape.affinity[(code.normal2, 2)]
    logit += landscape.affinity[(code.normal3, 3)]
    logit += landscape.affinity[(code.reduce2, 2)]
    logit += landscape.affinity[(code.reduce3, 3)]
    if code.use_stage4:
        logit += landscape.affinity[(code.reduce4, 4)]
    for label, slot_a, slot_b in _INTERACTION_PAIRS:
        if not code.use_stage4 and "reduce4" in (slot_a, slot_b):
            continue
        logit += landscape.interaction[
            (label, getattr(code, slot_a), getattr(code, slot_b))
        ]
    depth = code.depth1 + code.depth2 + code.depth3
    log_width = math.log(par) - math.log(landscape.width_reference)
    # The best depth shifts with width (a curved ridge): changing either
    # alone walks off the ridge, so coordinated moves are rewarded.
    best_depth = landscape.depth_peak + landscape.depth_width_coupling * log_width
    logit -= landscape.depth_coefficient * (depth - best_depth) ** 2
    logit += landscape.width_amplitude * math.tanh(log_width / landscape.width_scale)
    logit += landscape.noise_amplitude * _hash_unit(landscape.seed, "acc", key)
    lo, hi = ACC_CLIP
    acc = float(np.clip(_sigmoid(logit), lo, hi))

    top1 = acc - landscape.accuracy_gap
    top1 += landscape.noise_amplitude * _hash_unit(landscape.seed, "quick", key)
    top1 = float(np.clip(top1, lo, hi))
    top5 = float(np.clip(top1 + TOP5_OFFSET, lo, hi))
    quick = QuickMetrics(top1=top1, top5=top5, loss=-math.log(top1))
    return EvalResult(acc=acc, par=par, quick=quick)


@runtime_checkable
class Evaluator(Protocol):
    """Behavior contract: same code in, identical result out, every time."""

    def evaluate(self, code: ArchitectureCode) -> EvalResult: ...


class SyntheticEvaluator:
    """Evaluator over a synthetic landscape and surrogate cost model."""

    def __init__(self, landscape: SyntheticLandscape, cost_model: CostModel) -> None:
        self.landscape = landscape
        self.cost_model = cost_model

    def evaluate(self, code: ArchitectureCode) -> EvalResult:
        return synthetic_evaluate(code, self.landscape, self.cost_model)


def load_cost_model(path, catalog: CellCatalog) -> CostModel:
    """Cost-model constants from the same structured-text format as catalogs."""
    with open(path, "r", encoding="utf-8") as handle:
        raw = yaml.safe_load(handle) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: cost model file must be a mapping")
    return CostModel(
        catalog=catalog,
        stem_coefficient=float(raw.get("stem_coefficient", 30.0)),
        classifier_coefficient=float(raw.get("classifier_coefficient", 1.0)),
        input_size=int(raw.get("input_size", 32)),
        class_count=int(raw.get("class_count", 10)),
    )


def load_landscape_spec(path, catalog: CellCatalog) -> SyntheticLandscape:
    """Landscape generation parameters (seed, noise) from a structured file."""
    with open(path, "r", encoding="utf-8") as handle:
        raw = yaml.safe_load(handle) or {}
    if not isinstance(raw, dict) or "seed" not in raw:
        raise ValueError(f"{path}: landscape spec must be a mapping with a seed")
    return SyntheticLandscape.generate(
        catalog,
        seed=int(raw["seed"]),
        noise_amplitude=float(raw.get("noise_amplitude", 0.02)),
        interaction_scale=float(raw.get("interaction_scale", 0.15)),
    )
