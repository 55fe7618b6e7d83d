"""Deterministic planar locomotion surrogate.

Stands in for a rigid-body simulator.  Joint oscillation produces thrust and a
left/right activity imbalance produces turning, like a differential drive:

    v     = c_v   * (A_left + A_right) / 2
    dpsi  = c_psi * (A_right - A_left)

Heading ``psi`` is counter-clockwise from +X, so a livelier left side turns
the robot right (psi decreases).  ``A_side`` is the mean absolute change of
the steered joint commands on that side over one control step; centre joints
count half towards each side.  The robot starts at the origin facing the
target direction, which makes the model exactly equivariant under rotation
of the target.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .cpg_controller import (
    STEERING_EXPONENT,
    CpgNetwork,
    Side,
    coupled_pairs,
    output_signal,
    rk4_transition,
    side_gains,
    side_of,
)
from .morphology import Morphology

CSV_SCHEMA = "# schema: bodybrain-trajectory/1"


@dataclass(frozen=True)
class SimConfig:
    duration: float = 50.0
    sample_interval: float = 0.2
    control_step: float = 0.2
    dt: float = 0.005
    thrust: float = 0.05  # c_v, m/s per unit activity
    turn: float = 2.0  # c_psi, rad/s per unit asymmetry
    target_distance: float = 10.0
    steering_exponent: int = STEERING_EXPONENT

    def __post_init__(self):
        for name in ("duration", "sample_interval", "control_step", "dt"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        _ratio(self.control_step, self.dt, "control_step / dt")
        _ratio(self.sample_interval, self.control_step, "sample_interval / control_step")
        _ratio(self.duration, self.sample_interval, "duration / sample_interval")

    @property
    def substeps(self) -> int:
        return _ratio(self.control_step, self.dt, "control_step / dt")

    @property
    def control_steps(self) -> int:
        return _ratio(self.duration, self.control_step, "duration / control_step")

    @property
    def sample_every(self) -> int:
        return _ratio(self.sample_interval, self.control_step, "sample_interval / control_step")


def _ratio(a: float, b: float, what: str) -> int:
    k = round(a / b)
    if k < 1 or abs(k * b - a) > 1e-9 * max(1.0, abs(a)):
        raise ValueError(f"{what} must be a positive integer, got {a / b}")
    return k


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    xy: np.ndarray
    heading: np.ndarray
    path_length: float

    @property
    def end(self) -> tuple[float, float]:
        return float(self.xy[-1, 0]), float(self.xy[-1, 1])

    @property
    def delta(self) -> float:
        """Direction of the end point seen from the start, in [0, 2*pi)."""
        x, y = self.xy[-1] - self.xy[0]
        return math.atan2(y, x) % (2.0 * math.pi)

    @property
    def final_heading(self) -> float:
        return float(self.heading[-1])


def cpg_structure(body: Morphology) -> CpgNetwork:
    """Joint layout of a body with all brain weights zero."""
    positions = [m.position for m in body.hinges()]
    pairs = coupled_pairs(positions)
    return CpgNetwork(
        positions=positions,
        sides=[side_of(p) for p in positions],
        pairs=pairs,
        intra_weights=np.zeros(len(positions)),
        coupling_weights=np.zeros(len(pairs)),
    )


class CpgRollout:
    """Unsteered joint commands at every control-step boundary.

    The oscillators never see the steering gains, so one rollout serves any
    number of target directions.
    """

    def __init__(self, net: CpgNetwork, cfg: SimConfig):
        self.cfg = cfg
        n = net.n_joints
        steps = cfg.control_steps
        self.n_joints = n
        if n == 0:
            self.outputs = np.zeros((steps + 1, 0))
        else:
            step = rk4_transition(net.system_matrix(), cfg.dt, cfg.substeps)
            z = np.empty((steps + 1, 2 * n))
            z[0] = np.concatenate([net.x, net.y])
            for k in range(steps):
                z[k + 1] = step @ z[k]
            self.outputs = output_signal(z[:, :n])
        change = np.abs(np.diff(self.outputs, axis=0))
        sides = np.array([s.value for s in net.sides], dtype=object)
        self.left = change[:, sides == Side.LEFT.value].sum(axis=1)
        self.right = change[:, sides == Side.RIGHT.value].sum(axis=1)
        self.center = change[:, sides == Side.CENTER.value].sum(axis=1)
        self.n_left = int(np.sum(sides == Side.LEFT.value))
        self.n_right = int(np.sum(sides == Side.RIGHT.value))
        self.n_center = int(np.sum(sides == Side.CENTER.value))

    def activity(self, k: int, theta: float) -> tuple[float, float]:
        """(A_left, A_right) during control step ``k`` at error angle ``theta``."""
        gains = side_gains(theta, self.cfg.steering_exponent)
        half_c = 0.5 * self.center[k]
        wl = self.n_left + 0.5 * self.n_center
        wr = self.n_right + 0.5 * self.n_center
        a_left = (gains[Side.LEFT] * self.left[k] + half_c) / wl if wl else 0.0
        a_right = (gains[Side.RIGHT] * self.right[k] + half_c) / wr if wr else 0.0
        return min(float(a_left), 1.0), min(float(a_right), 1.0)


def heading_rate(a_left: float, a_right: float, cfg: SimConfig) -> float:
    """Turn rate in rad/s; heading is counter-clockwise, so a weaker right side turns right."""
    return cfg.turn * (a_right - a_left)


def wrap_angle(a: float) -> float:
    """Wrap to [-pi, pi)."""
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def error_angle(heading: float, position, target) -> float:
    """Signed angle from the target bearing to the heading; > 0 means target on the right."""
    bearing = math.atan2(target[1] - position[1], target[0] - position[0])
    return wrap_angle(heading - bearing)


def simulate(
    body: Morphology | CpgNetwork,
    weights,
    target_dir: float,
    cfg: SimConfig = SimConfig(),
    rollout: CpgRollout | None = None,
) -> Trajectory:
    if rollout is None:
        net = body if isinstance(body, CpgNetwork) else cpg_structure(body)
        rollout = CpgRollout(net.with_weights(weights), cfg)
    target = (
        cfg.target_distance * math.cos(target_dir),
        cfg.target_distance * math.sin(target_dir),
    )
    steps, sub, dt = cfg.control_steps, cfg.substeps, cfg.dt
    every = cfg.sample_every

    x = y = 0.0
    psi = float(target_dir)
    length = 0.0
    ts, xs, ys, hs = [0.0], [0.0], [0.0], [psi]
    for k in range(steps):
        theta = error_angle(psi, (x, y), target)
        a_left, a_right = rollout.activity(k, theta)
        v = cfg.thrust * 0.5 * (a_left + a_right)
        turn = heading_rate(a_left, a_right, cfg) * dt
        # explicit Euler over the substeps, summed in closed form
        if v > 0.0:
            if abs(turn) < 1e-12:
                cx, cy = sub * math.cos(psi), sub * math.sin(psi)
            else:
                scale = math.sin(0.5 * sub * turn) / math.sin(0.5 * turn)
                mid = psi + 0.5 * (sub - 1) * turn
                cx, cy = scale * math.cos(mid), scale * math.sin(mid)
            x += v * dt * cx
            y += v * dt * cy
            length += sub * v * dt
        psi += sub * turn
        if (k + 1) % every == 0:
            ts.append((k + 1) * cfg.control_step)
            xs.append(x)
            ys.append(y)
            hs.append(psi)
    return Trajectory(
        t=np.array(ts),
        xy=np.column_stack([xs, ys]),
        heading=np.array(hs),
        path_length=length,
    )


def displacement_velocity(tr: Trajectory) -> float:
    if len(tr.t) < 2:
        raise ValueError("need at least two samples")
    elapsed = float(tr.t[-1] - tr.t[0])
    return float(np.hypot(*(tr.xy[-1] - tr.xy[0]))) / elapsed


def trajectories_csv(trajectories: dict) -> str:
    """CSV text for one or more trajectories keyed by a label (e.g. target degrees)."""
    buf = io.StringIO()
    buf.write(CSV_SCHEMA + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label", "t", "X", "Y", "psi"])
    for label, tr in trajectories.items():
        for t, (px, py), h in zip(tr.t, tr.xy, tr.heading):
            writer.writerow([label, repr(float(t)), repr(float(px)), repr(float(py)), repr(float(h))])
    return buf.getvalue()
