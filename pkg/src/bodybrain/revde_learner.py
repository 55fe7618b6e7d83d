"""Infant learning of CPG weights with reversible DE and a K-NN surrogate.

Each iteration turns X random triplets of the population into 3X candidates
through the reversible transform, crosses every candidate with the triplet
member it came from, ranks all candidates by a K-nearest-neighbour average
over everything evaluated so far, and spends real evaluations only on the X
most promising ones.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

TRACE_SCHEMA = "# schema: bodybrain-learning-trace/1"


@dataclass(frozen=True)
class LearnerParams:
    population: int = 10  # X
    scaling: float = 0.5  # F
    crossover: float = 0.9  # p
    neighbours: int = 3  # K
    iterations: int = 10  # g
    init_sigma: float = 0.5

    def __post_init__(self):
        if self.population < 4:
            raise ValueError("population must be at least 4")
        if self.scaling <= 0:
            raise ValueError("scaling factor must be positive")
        if not 0.0 <= self.crossover <= 1.0:
            raise ValueError("crossover probability must be in [0, 1]")
        if self.neighbours < 1 or self.iterations < 1:
            raise ValueError("neighbours and iterations must be >= 1")

    @property
    def budget(self) -> int:
        return self.population * (self.iterations + 1)


def revde_matrix(f: float) -> np.ndarray:
    return np.array(
        [
            [1.0, f, -f],
            [-f, 1.0 - f**2, f + f**2],
            [f + f**2, -f + f**2 + f**3, 1.0 - 2.0 * f**2 - f**3],
        ]
    )


def revde_triplet(xi, xj, xk, f: float):
    xi, xj, xk = (np.asarray(v, dtype=float) for v in (xi, xj, xk))
    if not xi.shape == xj.shape == xk.shape:
        raise ValueError(f"length mismatch: {xi.shape}, {xj.shape}, {xk.shape}")
    y1 = xi + f * (xj - xk)
    y2 = xj + f * (xk - y1)
    y3 = xk + f * (y1 - y2)
    return y1, y2, y3


def uniform_crossover(y, x, p: float, rng: np.random.Generator) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.shape != x.shape:
        raise ValueError("length mismatch")
    mask = rng.random(y.shape) < p
    return np.clip(np.where(mask, y, x), -1.0, 1.0)


@dataclass
class Archive:
    """Every really evaluated weight vector, in insertion order."""

    weights: list[np.ndarray] = field(default_factory=list)
    fitness: list[float] = field(default_factory=list)

    def add(self, w, f: float) -> None:
        self.weights.append(np.array(w, dtype=float))
        self.fitness.append(float(f))

    def __len__(self) -> int:
        return len(self.fitness)

    def best(self) -> tuple[np.ndarray, float]:
        i = int(np.argmax(self.fitness))  # first occurrence on ties
        return self.weights[i], self.fitness[i]


def knn_predict(archive: Archive, candidate, k: int) -> float:
    if len(archive) == 0:
        raise ValueError("cannot predict from an empty archive")
    pts = np.asarray(archive.weights)
    d = np.sqrt(((pts - np.asarray(candidate, dtype=float)) ** 2).sum(axis=1))
    nearest = np.argsort(d, kind="stable")[:k]
    return float(np.mean(np.asarray(archive.fitness)[nearest]))


@dataclass
class TraceRow:
    iteration: int
    best_fitness: float
    mean_abs_error: float
    evaluations: int


@dataclass
class LearningResult:
    best: np.ndarray
    best_fitness: float
    inherited_fitness: float
    evaluations: int
    trace: list[TraceRow]
    archive: Archive

    @property
    def delta(self) -> float:
        return self.best_fitness - self.inherited_fitness


def _triplets(rng: np.random.Generator, size: int, count: int) -> np.ndarray:
    return np.array([rng.choice(size, size=3, replace=False) for _ in range(count)])


def learn(
    inherited,
    evaluator: Callable[[np.ndarray], float],
    params: LearnerParams = LearnerParams(),
    rng: np.random.Generator | int | None = None,
) -> LearningResult:
    """Optimise brain weights starting from ``inherited``.

    ``evaluator`` is the real (expensive) fitness of a weight vector.  It is
    called exactly ``params.budget`` times, except for an empty weight vector
    (no joints), which is returned untouched without any evaluation.
    """
    rng = np.random.default_rng(rng)
    inherited = np.asarray(inherited, dtype=float)
    archive = Archive()
    if inherited.size == 0:
        return LearningResult(inherited, 0.0, 0.0, 0, [], archive)

    X = params.population
    noise = rng.normal(0.0, params.init_sigma, size=(X - 1, inherited.size))
    pop = np.vstack([inherited, np.clip(inherited + noise, -1.0, 1.0)])
    fit = np.array([evaluator(w) for w in pop], dtype=float)
    for w, f in zip(pop, fit):
        archive.add(w, f)
    inherited_fitness = float(fit[0])
    trace = [TraceRow(0, float(fit.max()), float("nan"), X)]

    for it in range(1, params.iterations + 1):
        candidates = []
        for i, j, k in _triplets(rng, X, X):
            ys = revde_triplet(pop[i], pop[j], pop[k], params.scaling)
            for y, base in zip(ys, (pop[i], pop[j], pop[k])):
                candidates.append(uniform_crossover(y, base, params.crossover, rng))
        predicted = np.array([knn_predict(archive, c, params.neighbours) for c in candidates])
        chosen = np.argsort(-predicted, kind="stable")[:X]
        new = np.array([candidates[c] for c in chosen])
        new_fit = np.array([evaluator(w) for w in new], dtype=float)
        for w, f in zip(new, new_fit):
            archive.add(w, f)

        merged = np.vstack([pop, new])
        merged_fit = np.concatenate([fit, new_fit])
        keep = np.argsort(-merged_fit, kind="stable")[:X]
        pop, fit = merged[keep], merged_fit[keep]
        trace.append(
            TraceRow(
                it,
                archive.best()[1],
                float(np.mean(np.abs(predicted[chosen] - new_fit))),
                X * (it + 1),
            )
        )

    best, best_fitness = archive.best()
    return LearningResult(best, best_fitness, inherited_fitness, len(archive), trace, archive)


def trace_csv(trace: list[TraceRow]) -> str:
    buf = io.StringIO()
    buf.write(TRACE_SCHEMA + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iteration", "best_fitness", "mean_abs_prediction_error", "evaluations"])
    for row in trace:
        writer.writerow([row.iteration, repr(row.best_fitness), repr(row.mean_abs_error), row.evaluations])
    return buf.getvalue()
