"""Comparison optimizers: uniform random search and an evolutionary MOO.

Both share the evaluator and archive machinery with the recommendation-driven
search, so runs differ only in how the next batch is selected.  The
evolutionary baseline is the canonical two-objective scheme: nondominated
sorting plus crowding distance, binary tournaments, uniform per-field
crossover, and per-field mutation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .oracle import Evaluator
from .pareto import Archive, EvaluatedRecord, PerformancePair, dominates
from .space import (
    ArchitectureCode,
    CellCatalog,
    FIELD_NAMES,
    canonicalize,
    code_to_string,
    field_options,
    random_code,
)

__all__ = [
    "EvoConfig",
    "random_search",
    "evolve",
    "nondominated_sort",
    "crowding_distances",
]


@dataclass(frozen=True)
class EvoConfig:
    population_size: int = 50
    generations: int = 5
    crossover_rate: float = 0.9
    mutation_rate: float = 1.0 / 17.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        for name in ("crossover_rate", "mutation_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


def _record(code: ArchitectureCode, evaluator: Evaluator, iteration: int) -> EvaluatedRecord:
    result = evaluator.evaluate(code)
    return EvaluatedRecord(
        code=code,
        perf=PerformancePair(acc=result.acc, par=result.par),
        quick=tuple(result.quick) if result.quick is not None else None,
        iteration=iteration,
        oracle_acc=result.acc,
    )


def random_search(
    budget: int,
    evaluator: Evaluator,
    catalog: CellCatalog,
    seed: int = 0,
    iteration_size: int = 50,
) -> Archive:
    """Evaluate ``budget`` distinct uniform codes; iterations chunk the log."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    archive = Archive()
    seen: set[str] = set()
    records = []
    while len(records) < budget:
        code = random_code(rng, catalog)
        key = code_to_string(code)
        if key in seen:
            continue
        seen.add(key)
        records.append(_record(code, evaluator, len(records) // iteration_size))
    archive.extend(records)
    return archive


def nondominated_sort(pairs: list[PerformancePair]) -> list[list[int]]:
    """Indices grouped into fronts; front 0 is the Pareto boundary."""
    n = len(pairs)
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    counts = [0] * n
    fronts: list[list[int]] = [[]]
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if dominates(pairs[j], pairs[i]):
                dominated_by[i].append(j)
            elif dominates(pairs[i], pairs[j]):
                counts[i] += 1
        if counts[i] == 0:
            fronts[0].append(i)
    current = 0
    while fronts[current]:
        nxt: list[int] = []
        for i in fronts[current]:
            for j in dominated_by[i]:
                counts[j] -= 1
                if counts[j] == 0:
                    nxt.append(j)
        fronts.append(nxt)
        current += 1
    fronts.pop()
    return fronts


def crowding_distances(pairs: list[PerformancePair], front: list[int]) -> dict[int, float]:
    """Per-objective gap sums within one front; extremes get the inf sentinel."""
    dist = {i: 0.0 for i in front}
    if len(front) <= 2:
        return {i: np.inf for i in front}
    for key in (lambda p: p.acc, lambda p: p.par):
        ordered = sorted(front, key=lambda i: key(pairs[i]))
        lo = key(pairs[ordered[0]])
        hi = key(pairs[ordered[-1]])
        dist[ordered[0]] = np.inf
        dist[ordered[-1]] = np.inf
        if hi == lo:
            continue
        for prev, mid, nxt in zip(ordered, ordered[1:], ordered[2:]):
            dist[mid] += (key(pairs[nxt]) - key(pairs[prev])) / (hi - lo)
    return dist


def _rank_and_crowding(
    pairs: list[PerformancePair],
) -> tuple[list[int], list[float]]:
    ranks = [0] * len(pairs)
    crowd = [0.0] * len(pairs)
    for rank, front in enumerate(nondominated_sort(pairs)):
        distances = crowding_distances(pairs, front)
        for i in front:
            ranks[i] = rank
            crowd[i] = distances[i]
    return ranks, crowd


def _tournament(
    rng: np.random.Generator, ranks: list[int], crowd: list[float]
) -> int:
    a, b = int(rng.integers(len(ranks))), int(rng.integers(len(ranks)))
    if (ranks[a], -crowd[a]) <= (ranks[b], -crowd[b]):
        return a
    return b


def _uniform_crossover(
    a: ArchitectureCode, b: ArchitectureCode, rng: np.random.Generator
) -> ArchitectureCode:
    values = {
        name: getattr(a if rng.random() < 0.5 else b, name) for name in FIELD_NAMES
    }
    return ArchitectureCode(**values)


def _mutate(
    code: ArchitectureCode,
    rate: float,
    rng: np.random.Generator,
    catalog: CellCatalog,
) -> ArchitectureCode:
    values = {}
    for name in FIELD_NAMES:
        value = getattr(code, name)
        opts = field_options(catalog, name)
        if len(opts) > 1 and rng.random() < rate:
            others = [o for o in opts if o != value]
            value = others[int(rng.integers(len(others)))]
        values[name] = value
    return ArchitectureCode(**values)


def evolve(config: EvoConfig, evaluator: Evaluator, catalog: CellCatalog) -> Archive:
    """Run the evolutionary baseline; the archive keeps every evaluation.

    Each generation fills a child batch of population size via tournaments,
    crossover, and mutation; children colliding with anything already
    evaluated are replaced by fresh uniform codes so the evaluation budget
    is always ``population_size * (generations + 1)``.  Survivors are picked
    from parents plus children by rank, then crowding.
    """
    rng = np.random.default_rng(config.seed)
    archive = Archive()
    seen: set[str] = set()

    def claim(code: ArchitectureCode) -> bool:
        key = code_to_string(code)
        if key in seen:
            return False
        seen.add(key)
        return True

    population: list[EvaluatedRecord] = []
    while len(population) < config.population_size:
        code = random_code(rng, catalog)
        if claim(code):
            population.append(_record(code, evaluator, 0))
    archive.extend(population)

    for generation in range(1, config.generations + 1):
        pairs = [r.perf for r in population]
        ranks, crowd = _rank_and_crowding(pairs)
        children: list[EvaluatedRecord] = []
        for _ in range(config.population_size):
            parent = population[_tournament(rng, ranks, crowd)].code
            if rng.random() < config.crossover_rate:
                other = population[_tournament(rng, ranks, crowd)].code
                candidate = _uniform_crossover(parent, other, rng)
            else:
                candidate = parent
            candidate = _mutate(candidate, config.mutation_rate, rng, catalog)
            candidate = canonicalize(candidate, catalog)
            # A child colliding with anything already evaluated is replaced by
            # a fresh uniform code, keeping the evaluation budget exact.
            while not claim(candidate):
                candidate = random_code(rng, catalog)
            children.append(_record(candidate, evaluator, generation))
        archive.extend(children)

        pool = population + children
        pool_pairs = [r.perf for r in pool]
        pool_ranks, pool_crowd = _rank_and_crowding(pool_pairs)
        order = sorted(
            range(len(pool)), key=lambda i: (pool_ranks[i], -pool_crowd[i], i)
        )
        population = [pool[i] for i in order[: config.population_size]]
    return archive
