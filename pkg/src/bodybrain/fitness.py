"""Targeted-locomotion fitness over three fixed target directions."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, asdict

import numpy as np

from .cpg_controller import CpgNetwork
from .locomotion_sim import (
    CpgRollout,
    SimConfig,
    Trajectory,
    cpg_structure,
    displacement_velocity,
    simulate,
)
from .morphology import Morphology

TARGET_DIRECTIONS = (0.0, 2.0 * math.pi / 3.0, 4.0 * math.pi / 3.0)
OMEGA = 0.01
EPSILON = 1e-10
MIN_PROGRESS = 0.1  # metres towards the target, below which fitness is zero

EVAL_LOG_SCHEMA = "# schema: bodybrain-evaluations/1"
EVAL_LOG_FIELDS = ("robot_id", "target_deg", "gamma", "theta", "alpha", "beta", "path_length", "fitness")


@dataclass(frozen=True)
class FitnessComponents:
    gamma: float
    theta: float
    alpha: float
    beta: float
    path_length: float
    omega: float = OMEGA
    epsilon: float = EPSILON


def deviation_angle(delta: float, target: float) -> float:
    two_pi = 2.0 * math.pi
    diff = abs(delta % two_pi - target % two_pi)
    return two_pi - diff if diff > math.pi else diff


def fitness_components(tr: Trajectory, target: float) -> FitnessComponents:
    x, y = tr.end
    gamma = math.hypot(x, y)
    theta = deviation_angle(tr.delta, target)
    alpha = gamma * math.sin(theta)
    sign = 1.0 if theta < math.pi / 2.0 else -1.0
    # sign applies to the projected magnitude; sign * gamma * cos(theta) would double-negate
    beta = sign * abs(gamma * math.cos(theta))
    return FitnessComponents(gamma, theta, alpha, beta, tr.path_length)


def fitness(c: FitnessComponents) -> float:
    if c.beta < MIN_PROGRESS:
        return 0.0
    return abs(c.beta) / (c.path_length + c.epsilon) * (c.beta / (c.theta + 1.0) - c.omega * c.alpha)


def aggregate_fitness(*values: float) -> float:
    if len(values) == 1 and np.ndim(values[0]):
        values = tuple(values[0])
    return float(sum(values) / len(values))


@dataclass(frozen=True)
class BrainEvaluation:
    fitness: float
    per_direction: tuple[float, ...]
    components: tuple[FitnessComponents, ...]
    velocity: float
    trajectories: tuple[Trajectory, ...]

    @property
    def simulations(self) -> int:
        return len(self.trajectories)


def evaluate_brain(
    body: Morphology | CpgNetwork,
    weights,
    cfg: SimConfig = SimConfig(),
    directions=TARGET_DIRECTIONS,
) -> BrainEvaluation:
    """Simulate one brain towards every target direction, each from a fresh start."""
    net = body if isinstance(body, CpgNetwork) else cpg_structure(body)
    rollout = CpgRollout(net.with_weights(weights), cfg)
    trajectories, comps, scores = [], [], []
    for td in directions:
        tr = simulate(net, None, td, cfg, rollout=rollout)
        c = fitness_components(tr, td)
        trajectories.append(tr)
        comps.append(c)
        scores.append(fitness(c))
    return BrainEvaluation(
        fitness=aggregate_fitness(scores),
        per_direction=tuple(scores),
        components=tuple(comps),
        velocity=float(np.mean([displacement_velocity(tr) for tr in trajectories])),
        trajectories=tuple(trajectories),
    )


def evaluation_rows(robot_id, components, directions=TARGET_DIRECTIONS):
    """Evaluation-log rows for one robot's per-direction components."""
    for td, c in zip(directions, components):
        yield (robot_id, round(math.degrees(td), 6), c.gamma, c.theta, c.alpha, c.beta, c.path_length, fitness(c))


def evaluation_log_csv(rows) -> str:
    buf = io.StringIO()
    buf.write(EVAL_LOG_SCHEMA + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(EVAL_LOG_FIELDS)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()
