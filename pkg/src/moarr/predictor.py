"""Fast accuracy prediction from eight cheap architecture attributes.

Fully training a candidate is the expensive step, so a small regressor
estimates the final accuracy from signals that are cheap to obtain: cost
estimates (FLOPs, parameters), structural attributes (density, layer count,
reduction count), and quick early-training scores (top-1, top-5, loss).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import mlp
from .mlp import MlpModel, TrainConfig
from .oracle import CostModel, QuickMetrics, flops_estimate, param_count
from .space import ArchitectureCode, CellCatalog, structural_attributes

__all__ = [
    "ATTRIBUTE_NAMES",
    "AttributeVector",
    "AccuracyPredictor",
    "extract_attributes",
    "train_predictor",
    "predict_accuracy",
    "write_attribute_csv",
    "read_attribute_csv",
]

ATTRIBUTE_NAMES = (
    "flops",
    "params",
    "density",
    "layer_count",
    "reduction_count",
    "quick_top1",
    "quick_top5",
    "quick_loss",
)

PREDICTOR_HIDDEN = 32
MIN_TRAINING_SAMPLES = 50


@dataclass(frozen=True)
class AttributeVector:
    """The eight predictor inputs for one architecture."""

    flops: float
    params: float
    density: float
    layer_count: int
    reduction_count: int
    quick_top1: float
    quick_top5: float
    quick_loss: float

    def __post_init__(self) -> None:
        if not all(np.isfinite(v) for v in self.to_array()):
            raise ValueError("attributes must be finite")
        if self.quick_top1 > self.quick_top5:
            raise ValueError("quick_top1 cannot exceed quick_top5")

    def to_array(self) -> np.ndarray:
        return np.array([float(getattr(self, name)) for name in ATTRIBUTE_NAMES])


@dataclass
class AccuracyPredictor:
    """Regressor plus the input standardization frozen at training time."""

    net: MlpModel
    mean: np.ndarray
    scale: np.ndarray

    def standardize(self, attrs: np.ndarray) -> np.ndarray:
        return (attrs - self.mean) / self.scale

    def destandardize(self, standardized: np.ndarray) -> np.ndarray:
        return standardized * self.scale + self.mean


def extract_attributes(
    code: ArchitectureCode,
    catalog: CellCatalog,
    quick: QuickMetrics | Sequence[float],
    cost_model: CostModel,
) -> AttributeVector:
    """Assemble the attribute vector; quick metrics pass through unchanged."""
    top1, top5, loss = (float(v) for v in quick)
    if top1 > top5:
        raise ValueError(f"quick_top1 {top1} exceeds quick_top5 {top5}")
    density, layer_count, reduction_count = structural_attributes(code, catalog)
    return AttributeVector(
        flops=flops_estimate(code, cost_model),
        params=param_count(code, cost_model),
        density=density,
        layer_count=layer_count,
        reduction_count=reduction_count,
        quick_top1=top1,
        quick_top5=top5,
        quick_loss=loss,
    )


def train_predictor(
    samples: Sequence[tuple[AttributeVector, float]],
    config: TrainConfig,
) -> tuple[AccuracyPredictor, float]:
    """Fit the accuracy regressor; returns (predictor, holdout R^2).

    Inputs are z-scored with constants frozen into the predictor.  Samples
    are put in a canonical sort order before the seeded index split, so the
    result does not depend on how the caller happened to order them.
    Refuses fewer than 50 samples; a constant target column is flagged and
    reported as an undefined (NaN) R^2.
    """
    if len(samples) < MIN_TRAINING_SAMPLES:
        raise ValueError(
            f"need at least {MIN_TRAINING_SAMPLES} samples, got {len(samples)}"
        )
    rows = sorted(samples, key=lambda s: (tuple(s[0].to_array()), s[1]))
    X = np.stack([attrs.to_array() for attrs, _ in rows])
    y = np.array([acc for _, acc in rows])

    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0.0] = 1.0
    Xs = (X - mean) / scale

    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(rows))
    n_hold = max(1, len(rows) // 5)
    hold, fit = order[:n_hold], order[n_hold:]

    net = mlp.init_model(
        [len(ATTRIBUTE_NAMES), PREDICTOR_HIDDEN, 1],
        ["rectifier", "sigmoid"],
        seed=config.seed,
    )
    net, _ = mlp.train(net, Xs[fit], y[fit], config)
    predictor = AccuracyPredictor(net=net, mean=mean, scale=scale)

    pred = mlp.forward(net, Xs[hold])[:, 0]
    ss_tot = float(np.sum((y[hold] - y[hold].mean()) ** 2))
    if np.isclose(y.var(), 0.0) or ss_tot == 0.0:
        warnings.warn("degenerate predictor targets: constant accuracy", stacklevel=2)
        return predictor, float("nan")
    ss_res = float(np.sum((y[hold] - pred) ** 2))
    return predictor, 1.0 - ss_res / ss_tot


def predict_accuracy(predictor: AccuracyPredictor, attrs: AttributeVector) -> float:
    """Sigmoid-bounded final-accuracy estimate in (0, 1)."""
    row = attrs.to_array()
    if not np.all(np.isfinite(row)):
        raise ValueError("attributes must be finite")
    out = mlp.forward(predictor.net, predictor.standardize(row))
    return float(out[0])


def write_attribute_csv(
    path, samples: Sequence[tuple[AttributeVector, float]]
) -> None:
    """Dump training samples as the eight attribute columns plus final_acc."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([*ATTRIBUTE_NAMES, "final_acc"])
        for attrs, acc in samples:
            writer.writerow([repr(float(v)) for v in attrs.to_array()] + [repr(float(acc))])


def read_attribute_csv(path) -> list[tuple[AttributeVector, float]]:
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if header != [*ATTRIBUTE_NAMES, "final_acc"]:
            raise ValueError(f"{path}: unexpected attribute header {header}")
        samples = []
        for row in reader:
            values = [float(v) for v in row]
            attrs = AttributeVector(
                flops=values[0],
                params=values[1],
                density=values[2],
                layer_count=int(values[3]),
                reduction_count=int(values[4]),
                quick_top1=values[5],
                quick_top5=values[6],
                quick_loss=values[7],
            )
            samples.append((attrs, values[8]))
    return samples
