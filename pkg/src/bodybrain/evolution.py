"""(mu + lambda) co-evolution of bodies and brains, with optional infant learning.

All randomness is derived from the run seed plus a named stream and the
coordinates of the draw (generation, offspring index), so results do not
depend on how evaluations are scheduled across workers.  Genome variation
runs sequentially in the parent process because innovation ids come from a
run-wide counter; only evaluation is farmed out.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np

from .cpg_controller import build_cpg
from .cppn import (
    BODY_SHAPE,
    BRAIN_SHAPE,
    CppnGenome,
    InnovationTracker,
    MutationRates,
    crossover,
    mutate,
    random_genome,
)
from .fitness import TARGET_DIRECTIONS, BrainEvaluation, FitnessComponents, evaluate_brain
from .locomotion_sim import SimConfig, cpg_structure
from .morphology import DESCRIPTOR_NAMES, Morphology, compute_descriptors, decode_body
from .revde_learner import LearnerParams, learn

log = logging.getLogger(__name__)

STATS_SCHEMA = "# schema: bodybrain-stats/1"
POPULATION_SCHEMA = "# schema: bodybrain-individuals/1"
CHECKPOINT_VERSION = 1

# named random streams
INIT, SELECT, VARIATION, LEARN = 0, 1, 2, 3


class Mode(str, Enum):
    EVOLUTION_ONLY = "evolution-only"
    LEARNING = "learning"


def stream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


@dataclass(frozen=True)
class EvoParams:
    population: int = 100  # mu
    offspring: int = 50  # lambda
    generations: int = 30
    tournament: int = 2
    mutation: float = 0.8
    crossover: float = 0.8
    mode: Mode = Mode.EVOLUTION_ONLY
    learner: LearnerParams = LearnerParams()
    sim: SimConfig = SimConfig()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if not 1 <= self.offspring <= self.population:
            raise ValueError("need 1 <= offspring <= population")
        if self.generations < 0 or self.tournament < 1:
            raise ValueError("generations must be >= 0 and tournament >= 1")
        for name in ("mutation", "crossover"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} probability must be in [0, 1]")

    @property
    def rates(self) -> MutationRates:
        return MutationRates(probability=self.mutation)

    def to_dict(self) -> dict:
        return {
            "population": self.population,
            "offspring": self.offspring,
            "generations": self.generations,
            "tournament": self.tournament,
            "mutation": self.mutation,
            "crossover": self.crossover,
            "mode": self.mode.value,
            "seed": self.seed,
            "learner": vars(self.learner).copy(),
            "sim": vars(self.sim).copy(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvoParams":
        data = dict(data)
        learner = LearnerParams(**data.pop("learner", {}))
        sim = SimConfig(**data.pop("sim", {}))
        return cls(learner=learner, sim=sim, **data)


@dataclass
class Individual:
    id: int
    parents: tuple[int, ...]
    body: CppnGenome
    brain: CppnGenome
    generation: int
    inherited: np.ndarray = None
    learned: np.ndarray = None
    fitness_before: float = 0.0
    fitness_after: float = 0.0
    velocity: float = 0.0
    components: tuple[FitnessComponents, ...] = ()
    descriptors: dict = field(default_factory=dict)
    evaluations: int = 0

    @property
    def delta(self) -> float:
        return self.fitness_after - self.fitness_before

    def morphology(self) -> Morphology:
        return decode_body(self.body)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "parents": list(self.parents),
            "generation": self.generation,
            "body": self.body.to_dict(),
            "brain": self.brain.to_dict(),
            "inherited": [float(v) for v in self.inherited],
            "learned": [float(v) for v in self.learned],
            "fitness_before": self.fitness_before,
            "fitness_after": self.fitness_after,
            "velocity": self.velocity,
            "components": [vars(c).copy() for c in self.components],
            "descriptors": self.descriptors,
            "evaluations": self.evaluations,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Individual":
        return cls(
            id=int(d["id"]),
            parents=tuple(d["parents"]),
            body=CppnGenome.from_dict(d["body"]),
            brain=CppnGenome.from_dict(d["brain"]),
            generation=int(d["generation"]),
            inherited=np.asarray(d["inherited"], dtype=float),
            learned=np.asarray(d["learned"], dtype=float),
            fitness_before=float(d["fitness_before"]),
            fitness_after=float(d["fitness_after"]),
            velocity=float(d["velocity"]),
            components=tuple(FitnessComponents(**c) for c in d["components"]),
            descriptors=dict(d["descriptors"]),
            evaluations=int(d["evaluations"]),
        )


def develop(ind: Individual) -> Individual:
    """Decode the body, derive the inherited brain weights and descriptors."""
    body = decode_body(ind.body)
    weights = build_cpg(body, ind.brain).weights
    return replace(
        ind,
        inherited=weights,
        learned=weights.copy(),
        descriptors=compute_descriptors(body).as_dict(),
    )


def evaluate_individual(ind: Individual, mode: Mode, learner: LearnerParams, sim: SimConfig, seed: int) -> Individual:
    """Assess an individual; in learning mode the brain is trained first.

    ``seed`` feeds the learner's random stream.
    """
    mode = Mode(mode)
    body = decode_body(ind.body)
    net = cpg_structure(body)
    inherited = np.asarray(ind.inherited, dtype=float)
    seen: dict[bytes, BrainEvaluation] = {}

    def assess(w) -> float:
        key = np.asarray(w, dtype=float).tobytes()
        if key not in seen:
            seen[key] = evaluate_brain(net, w, sim)
        return seen[key].fitness

    if mode is Mode.LEARNING and inherited.size:
        result = learn(inherited, assess, learner, np.random.default_rng(seed))
        before = seen[inherited.tobytes()]
        best = seen[result.best.tobytes()]
        learned = result.best
        sims = result.evaluations * len(TARGET_DIRECTIONS)
    else:
        before = best = evaluate_brain(net, inherited, sim)
        learned = inherited.copy()
        sims = before.simulations
    return replace(
        ind,
        learned=np.array(learned, dtype=float),
        fitness_before=before.fitness,
        fitness_after=best.fitness,
        velocity=best.velocity,
        components=best.components,
        evaluations=sims,
    )


def _rank_key(ind: Individual):
    return (-ind.fitness_after, ind.id)


def tournament(pop: list[Individual], rng: np.random.Generator, size: int = 2) -> Individual:
    contestants = [pop[i] for i in rng.integers(len(pop), size=size)]
    # ties go to the first drawn contestant, which keeps a flat population uniform
    return max(contestants, key=lambda ind: ind.fitness_after)


def select_parents(pop: list[Individual], rng: np.random.Generator, pairs: int, size: int = 2):
    return [(tournament(pop, rng, size), tournament(pop, rng, size)) for _ in range(pairs)]


def reproduce(
    pair: tuple[Individual, Individual],
    rng: np.random.Generator,
    trackers: dict[str, InnovationTracker],
    params: EvoParams,
    child_id: int,
    generation: int,
) -> Individual:
    a, b = pair
    fa, fb = a.fitness_after, b.fitness_after
    body = crossover(a.body, b.body, rng, fa, fb, params.crossover)
    body = mutate(body, rng, params.rates, trackers["body"])
    brain = crossover(a.brain, b.brain, rng, fa, fb, params.crossover)
    brain = mutate(brain, rng, params.rates, trackers["brain"])
    parents = (a.id,) if a.id == b.id else (a.id, b.id)
    return develop(Individual(child_id, parents, body, brain, generation))


def select_survivors(parents: list[Individual], offspring: list[Individual], mu: int) -> list[Individual]:
    keep = sorted(parents, key=_rank_key)[: mu - len(offspring)]
    return keep + list(offspring)


def random_individual(ind_id: int, rng: np.random.Generator) -> Individual:
    body = random_genome(*BODY_SHAPE, rng)
    brain = random_genome(*BRAIN_SHAPE, rng)
    return develop(Individual(ind_id, (), body, brain, 0))


STAT_FIELDS = (
    "generation",
    "mean_fitness",
    "max_fitness",
    "mean_fitness_before",
    "mean_delta",
    *(f"mean_{n}" for n in DESCRIPTOR_NAMES),
    "mean_velocity",
    "max_velocity",
    "evaluations",
)


def generation_stats(generation: int, pop: list[Individual], evaluations: int) -> dict:
    row = {
        "generation": generation,
        "mean_fitness": float(np.mean([i.fitness_after for i in pop])),
        "max_fitness": float(max(i.fitness_after for i in pop)),
        "mean_fitness_before": float(np.mean([i.fitness_before for i in pop])),
        "mean_delta": float(np.mean([i.delta for i in pop])),
    }
    for name in DESCRIPTOR_NAMES:
        row[f"mean_{name}"] = float(np.mean([i.descriptors[name] for i in pop]))
    row["mean_velocity"] = float(np.mean([i.velocity for i in pop]))
    row["max_velocity"] = float(max(i.velocity for i in pop))
    row["evaluations"] = evaluations
    return row


@dataclass
class RunResult:
    params: EvoParams
    stats: list[dict]
    individuals: dict[int, Individual]
    population: list[Individual]
    evaluations: int

    @property
    def best(self) -> Individual:
        return min(self.population, key=_rank_key)


class _Evaluator:
    """Maps evaluate_individual over a batch, optionally in worker processes."""

    def __init__(self, params: EvoParams, workers: int):
        self.params = params
        self.pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None

    def __call__(self, batch: list[Individual], seeds: list[int]) -> list[Individual]:
        p = self.params
        args = ([p.mode] * len(batch), [p.learner] * len(batch), [p.sim] * len(batch), seeds)
        if self.pool is None:
            return list(map(evaluate_individual, batch, *args))
        return list(self.pool.map(evaluate_individual, batch, *args))

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()


def _learn_seed(seed: int, generation: int, index: int) -> int:
    return int(stream(seed, LEARN, generation, index).integers(2**63))


def run_evolution(
    params: EvoParams,
    workers: int = 1,
    checkpoint: Path | str | None = None,
    resume: bool = False,
    on_generation: Callable[[dict], None] | None = None,
) -> RunResult:
    """Run the full loop; when ``checkpoint`` is given, state is saved after every generation."""
    checkpoint = Path(checkpoint) if checkpoint else None
    evaluator = _Evaluator(params, workers)
    try:
        if resume and checkpoint and checkpoint.exists():
            state = load_checkpoint(checkpoint)
            if state["params"] != params.to_dict():
                raise ValueError("checkpoint was written with different parameters")
            individuals = state["individuals"]
            population = [individuals[i] for i in state["population"]]
            trackers = state["trackers"]
            stats = state["stats"]
            evaluations = state["evaluations"]
            start = state["generation"] + 1
            log.info("resuming from generation %d", start)
        else:
            rng = stream(params.seed, INIT)
            founders = [random_individual(i, rng) for i in range(params.population)]
            seeds = [_learn_seed(params.seed, 0, i) for i in range(len(founders))]
            population = evaluator(founders, seeds)
            individuals = {ind.id: ind for ind in population}
            trackers = {
                "body": InnovationTracker(*BODY_SHAPE),
                "brain": InnovationTracker(*BRAIN_SHAPE),
            }
            for ind in population:
                trackers["body"].observe(ind.body)
                trackers["brain"].observe(ind.brain)
            evaluations = sum(i.evaluations for i in population)
            stats = [generation_stats(0, population, evaluations)]
            start = 1
            _after_generation(checkpoint, params, 0, individuals, population, trackers, stats, evaluations, on_generation)

        for gen in range(start, params.generations + 1):
            pairs = select_parents(population, stream(params.seed, SELECT, gen), params.offspring, params.tournament)
            next_id = max(individuals) + 1
            children = [
                reproduce(pair, stream(params.seed, VARIATION, gen, k), trackers, params, next_id + k, gen)
                for k, pair in enumerate(pairs)
            ]
            seeds = [_learn_seed(params.seed, gen, k) for k in range(len(children))]
            children = evaluator(children, seeds)
            for child in children:
                individuals[child.id] = child
            evaluations += sum(c.evaluations for c in children)
            population = select_survivors(population, children, params.population)
            stats.append(generation_stats(gen, population, evaluations))
            _after_generation(checkpoint, params, gen, individuals, population, trackers, stats, evaluations, on_generation)
    finally:
        evaluator.close()
    return RunResult(params, stats, individuals, population, evaluations)


def _after_generation(checkpoint, params, gen, individuals, population, trackers, stats, evaluations, callback):
    row = stats[-1]
    log.info(
        "gen %d  mean %.4f  max %.4f  delta %.4f  evals %d",
        gen, row["mean_fitness"], row["max_fitness"], row["mean_delta"], evaluations,
    )
    if checkpoint is not None:
        save_checkpoint(checkpoint, params, gen, individuals, population, trackers, stats, evaluations)
    if callback is not None:
        callback(row)


def save_checkpoint(path, params, generation, individuals, population, trackers, stats, evaluations):
    data = {
        "version": CHECKPOINT_VERSION,
        "params": params.to_dict(),
        "generation": generation,
        "population": [i.id for i in population],
        "individuals": [individuals[k].to_dict() for k in sorted(individuals)],
        "trackers": {k: t.to_dict() for k, t in trackers.items()},
        "stats": stats,
        "evaluations": evaluations,
    }
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(data))
    tmp.replace(path)


def load_checkpoint(path) -> dict:
    data = json.loads(Path(path).read_text())
    if data.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {data.get('version')}")
    individuals = {d["id"]: Individual.from_dict(d) for d in data["individuals"]}
    return {
        "params": data["params"],
        "generation": data["generation"],
        "population": data["population"],
        "individuals": individuals,
        "trackers": {k: InnovationTracker.from_dict(v) for k, v in data["trackers"].items()},
        "stats": data["stats"],
        "evaluations": data["evaluations"],
    }


def nominal_evaluation_counts(params: EvoParams) -> dict:
    """Single-direction evaluation totals under different accounting rules."""
    dirs = len(TARGET_DIRECTIONS)
    per_robot = params.learner.budget if params.mode is Mode.LEARNING else 1
    return {
        "all_robots": (params.population + params.offspring * params.generations) * dirs * per_robot,
        "offspring_formula": (params.offspring + params.offspring * params.generations) * dirs * per_robot,
    }


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def stats_csv(stats: list[dict]) -> str:
    buf = io.StringIO()
    buf.write(STATS_SCHEMA + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(STAT_FIELDS)
    for row in stats:
        writer.writerow([_fmt(row[k]) for k in STAT_FIELDS])
    return buf.getvalue()


INDIVIDUAL_FIELDS = (
    "id", "generation", "parents", "fitness_before", "fitness_after", "delta",
    "velocity", *DESCRIPTOR_NAMES, "evaluations",
)


def individuals_csv(individuals: dict[int, Individual]) -> str:
    buf = io.StringIO()
    buf.write(POPULATION_SCHEMA + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(INDIVIDUAL_FIELDS)
    for k in sorted(individuals):
        ind = individuals[k]
        writer.writerow(
            [ind.id, ind.generation, " ".join(map(str, ind.parents)), repr(ind.fitness_before),
             repr(ind.fitness_after), repr(ind.delta), repr(ind.velocity)]
            + [_fmt(ind.descriptors[n]) for n in DESCRIPTOR_NAMES]
            + [ind.evaluations]
        )
    return buf.getvalue()


def _ramp(t: float) -> str:
    """Light yellow (low) to dark purple (high)."""
    lo, hi = (255, 255, 204), (63, 0, 125)
    rgb = [round(a + (b - a) * t) for a, b in zip(lo, hi)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def genealogy_dot(individuals: dict[int, Individual]) -> str:
    fits = [i.fitness_after for i in individuals.values()]
    lo, hi = min(fits), max(fits)
    span = hi - lo if hi > lo else 1.0
    lines = ["digraph genealogy {", "  node [shape=ellipse, style=filled];"]
    for k in sorted(individuals):
        ind = individuals[k]
        lines.append(
            f'  {ind.id} [label="{ind.id}", generation={ind.generation}, '
            f'fitness="{ind.fitness_after!r}", fillcolor="{_ramp((ind.fitness_after - lo) / span)}"];'
        )
    for k in sorted(individuals):
        for p in individuals[k].parents:
            lines.append(f"  {p} -> {k};")
    lines.append("}")
    return "\n".join(lines) + "\n"
