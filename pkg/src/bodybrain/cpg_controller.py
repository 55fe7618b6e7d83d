"""CPG brains: one oscillator per active hinge, coupled to nearby hinges.

Each joint i has an (x_i, y_i) neuron pair.  In isolation

    dx_i/dt =  w_i * y_i
    dy_i/dt = -w_i * x_i

and neighbouring joints (Manhattan distance <= 2 on the grid) feed their x
neurons into each other with antisymmetric weights, so the whole system is
``dz/dt = A z`` with a skew-symmetric ``A``.  The joint command is
``tanh(x_i)``, optionally attenuated by the steering policy.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations

import numpy as np

from .cppn import BRAIN_SHAPE, CppnGenome, cppn_eval
from .morphology import Morphology

INITIAL_STATE = math.sqrt(2.0) / 2.0
NEIGHBOUR_DISTANCE = 2
STEERING_EXPONENT = 7


class Side(str, Enum):
    LEFT = "left"
    RIGHT = "right"
    CENTER = "center"


def side_of(position) -> Side:
    if position[0] < 0:
        return Side.LEFT
    if position[0] > 0:
        return Side.RIGHT
    return Side.CENTER


def manhattan(a, b) -> int:
    return sum(abs(p - q) for p, q in zip(a, b))


@dataclass
class CpgNetwork:
    positions: list[tuple[int, int, int]]
    sides: list[Side]
    pairs: list[tuple[int, int]]
    intra_weights: np.ndarray
    coupling_weights: np.ndarray
    x: np.ndarray = field(default=None)
    y: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.positions)
        self.intra_weights = np.asarray(self.intra_weights, dtype=float).reshape(n)
        self.coupling_weights = np.asarray(self.coupling_weights, dtype=float).reshape(len(self.pairs))
        if self.x is None:
            self.x = np.full(n, INITIAL_STATE)
        if self.y is None:
            self.y = np.full(n, INITIAL_STATE)

    @property
    def n_joints(self) -> int:
        return len(self.positions)

    def neighbours(self, i: int) -> list[int]:
        return sorted({b if a == i else a for a, b in self.pairs if i in (a, b)})

    def coupling_matrix(self) -> np.ndarray:
        """W with W[i, j] the weight from x_j into x_i; W = -W.T."""
        n = self.n_joints
        w = np.zeros((n, n))
        for (i, j), v in zip(self.pairs, self.coupling_weights):
            w[i, j] = v
            w[j, i] = -v
        return w

    def system_matrix(self) -> np.ndarray:
        """A for the stacked state z = (x, y): dz/dt = A z."""
        n = self.n_joints
        a = np.zeros((2 * n, 2 * n))
        a[:n, :n] = self.coupling_matrix()
        a[:n, n:] = np.diag(self.intra_weights)
        a[n:, :n] = -np.diag(self.intra_weights)
        return a

    @property
    def weights(self) -> np.ndarray:
        return brain_weights(self)

    def with_weights(self, weights) -> "CpgNetwork":
        """Copy with new brain weights and reset oscillator states."""
        weights = np.asarray(weights, dtype=float)
        n = self.n_joints
        if weights.shape != (n + len(self.pairs),):
            raise ValueError(f"expected {n + len(self.pairs)} weights, got {weights.shape}")
        return CpgNetwork(
            list(self.positions), list(self.sides), list(self.pairs),
            weights[:n].copy(), weights[n:].copy(),
        )

    def reset(self) -> None:
        self.x = np.full(self.n_joints, INITIAL_STATE)
        self.y = np.full(self.n_joints, INITIAL_STATE)


def coupled_pairs(positions) -> list[tuple[int, int]]:
    return [
        (i, j)
        for i, j in combinations(range(len(positions)), 2)
        if manhattan(positions[i], positions[j]) <= NEIGHBOUR_DISTANCE
    ]


def build_cpg(body: Morphology, brain: CppnGenome) -> CpgNetwork:
    """Query the brain CPPN for every intra-joint and coupling weight.

    Joints are numbered in body order.  A coupling weight is queried once,
    with the lower-numbered joint's coordinates first.
    """
    if brain.shape != BRAIN_SHAPE:
        raise ValueError(f"brain genome must have shape {BRAIN_SHAPE}, got {brain.shape}")
    positions = [m.position for m in body.hinges()]
    pairs = coupled_pairs(positions)
    intra = [cppn_eval(brain, (*p, *p))[0] for p in positions]
    coupling = [cppn_eval(brain, (*positions[i], *positions[j]))[0] for i, j in pairs]
    return CpgNetwork(
        positions=positions,
        sides=[side_of(p) for p in positions],
        pairs=pairs,
        intra_weights=np.clip(intra, -1.0, 1.0),
        coupling_weights=np.clip(coupling, -1.0, 1.0),
    )


def brain_weights(net: CpgNetwork) -> np.ndarray:
    """Flat search vector: all w_i, then all w_ij in (i, j) order."""
    return np.concatenate([net.intra_weights, net.coupling_weights])


def weights_to_json(net: CpgNetwork, weights=None) -> str:
    weights = brain_weights(net) if weights is None else np.asarray(weights, dtype=float)
    return json.dumps(
        {
            "ordering": {
                "intra": [list(p) for p in net.positions],
                "coupling": [list(p) for p in net.pairs],
            },
            "weights": [float(v) for v in weights],
        }
    )


def weights_from_json(text: str) -> np.ndarray:
    data = json.loads(text)
    if isinstance(data, list):
        return np.asarray(data, dtype=float)
    return np.asarray(data["weights"], dtype=float)


def _derivative(a: np.ndarray, z: np.ndarray) -> np.ndarray:
    return a @ z


def step_cpg(net: CpgNetwork, dt: float) -> CpgNetwork:
    """Advance the oscillator states in place by one classical RK4 step."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if net.n_joints == 0:
        return net
    a = net.system_matrix()
    n = net.n_joints
    z = np.concatenate([net.x, net.y])
    k1 = _derivative(a, z)
    k2 = _derivative(a, z + 0.5 * dt * k1)
    k3 = _derivative(a, z + 0.5 * dt * k2)
    k4 = _derivative(a, z + dt * k3)
    z = z + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    net.x, net.y = z[:n], z[n:]
    return net


def rk4_transition(a: np.ndarray, dt: float, steps: int = 1) -> np.ndarray:
    """Matrix that applies ``steps`` RK4 steps of ``dz/dt = A z``.

    For a linear autonomous system one RK4 step is exactly the degree-4
    Taylor polynomial of ``dt * A``.
    """
    h = dt * a
    eye = np.eye(a.shape[0])
    h2 = h @ h
    m = eye + h + h2 / 2.0 + h2 @ h / 6.0 + h2 @ h2 / 24.0
    return np.linalg.matrix_power(m, steps)


def output_signal(x):
    """Joint command 2 / (1 + exp(-2x)) - 1 (scalar or array)."""
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        out = 2.0 / (1.0 + np.exp(-2.0 * x)) - 1.0
    return float(out) if out.ndim == 0 else out


def steering_gain(theta: float, n: int = STEERING_EXPONENT) -> float:
    return ((math.pi - abs(theta)) / math.pi) ** n


def side_gains(theta: float, n: int = STEERING_EXPONENT) -> dict[Side, float]:
    """Gain applied to each side for error angle theta (>0: target on the right)."""
    g = steering_gain(theta, n)
    if theta < 0:
        return {Side.LEFT: g, Side.RIGHT: 1.0, Side.CENTER: 1.0}
    return {Side.LEFT: 1.0, Side.RIGHT: g, Side.CENTER: 1.0}


def apply_steering(out: float, theta: float, side: Side, n: int = STEERING_EXPONENT) -> float:
    return side_gains(theta, n)[Side(side)] * out
