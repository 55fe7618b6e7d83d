"""Compositional pattern producing networks (CPPNs).

A genome is an immutable feed-forward graph of activation nodes and weighted
links.  The same representation encodes both the body (4 inputs, 5 outputs)
and the brain (6 inputs, 1 output) of a robot.

Node ids ``0 .. input_count-1`` are inputs, the next ``output_count`` ids are
outputs, and anything above is a hidden node.  Link innovation ids follow the
NEAT convention so that two genomes can be aligned for crossover.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

BODY_SHAPE = (4, 5)
BRAIN_SHAPE = (6, 1)


def _sigmoid(v: float) -> float:
    if v < -500.0:
        return 0.0
    return 1.0 / (1.0 + math.exp(-v))


def _gauss(v: float) -> float:
    if abs(v) > 30.0:
        return 0.0
    return math.exp(-v * v)


ACTIVATIONS = {
    "identity": lambda v: v,
    "tanh": math.tanh,
    "sin": math.sin,
    "gauss": _gauss,
    "sigmoid": _sigmoid,
    "abs": abs,
}

# "identity" doubles as the linear activation for hidden nodes
HIDDEN_ACTIVATIONS = ("sin", "gauss", "sigmoid", "identity", "abs")
OUTPUT_ACTIVATION = "tanh"


class ArityError(ValueError):
    """Raised when a genome is queried with the wrong number of inputs."""


class ShapeMismatchError(ValueError):
    """Raised when recombining genomes with different input/output counts."""


@dataclass(frozen=True)
class NodeGene:
    id: int
    activation: str
    bias: float = 0.0


@dataclass(frozen=True)
class LinkGene:
    source: int
    target: int
    weight: float
    innovation: int
    enabled: bool = True


@dataclass(frozen=True)
class CppnGenome:
    input_count: int
    output_count: int
    nodes: tuple[NodeGene, ...]
    links: tuple[LinkGene, ...]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.input_count, self.output_count)

    @property
    def input_ids(self) -> range:
        return range(self.input_count)

    @property
    def output_ids(self) -> range:
        return range(self.input_count, self.input_count + self.output_count)

    @cached_property
    def _plan(self):
        """Topological evaluation plan over non-input nodes."""
        order = topological_order(self)
        by_id = {n.id: n for n in self.nodes}
        incoming: dict[int, list[tuple[int, float]]] = {n.id: [] for n in self.nodes}
        for link in self.links:
            if link.enabled:
                incoming[link.target].append((link.source, link.weight))
        plan = []
        for nid in order:
            if nid < self.input_count:
                continue
            node = by_id[nid]
            plan.append((nid, node.activation, node.bias, tuple(incoming[nid])))
        return tuple(plan)

    def evaluate(self, inputs: Sequence[float]) -> list[float]:
        return cppn_eval(self, inputs)

    def node(self, node_id: int) -> NodeGene:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def to_dict(self) -> dict:
        return {
            "input_count": self.input_count,
            "output_count": self.output_count,
            "nodes": [
                {"id": n.id, "activation": n.activation, "bias": n.bias} for n in self.nodes
            ],
            "links": [
                {
                    "source": l.source,
                    "target": l.target,
                    "weight": l.weight,
                    "innovation": l.innovation,
                    "enabled": l.enabled,
                }
                for l in self.links
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CppnGenome":
        genome = cls(
            input_count=int(data["input_count"]),
            output_count=int(data["output_count"]),
            nodes=tuple(
                NodeGene(int(n["id"]), str(n["activation"]), float(n["bias"]))
                for n in data["nodes"]
            ),
            links=tuple(
                LinkGene(
                    int(l["source"]),
                    int(l["target"]),
                    float(l["weight"]),
                    int(l["innovation"]),
                    bool(l["enabled"]),
                )
                for l in data["links"]
            ),
        )
        validate(genome)
        return genome


def topological_order(genome: CppnGenome) -> list[int]:
    """Kahn's algorithm over all links (disabled ones included).

    Ties are resolved by node id so the order is deterministic.
    """
    indegree = {n.id: 0 for n in genome.nodes}
    children: dict[int, list[int]] = {n.id: [] for n in genome.nodes}
    for link in genome.links:
        indegree[link.target] += 1
        children[link.source].append(link.target)
    ready = sorted(nid for nid, d in indegree.items() if d == 0)
    order: list[int] = []
    while ready:
        nid = ready.pop(0)
        order.append(nid)
        for child in children[nid]:
            indegree[child] -= 1
            if indegree[child] == 0:
                ready.append(child)
        ready.sort()
    if len(order) != len(indegree):
        raise ValueError("genome contains a cycle")
    return order


def validate(genome: CppnGenome) -> None:
    """Raise ``ValueError`` if the genome violates a structural invariant."""
    ids = [n.id for n in genome.nodes]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate node ids")
    id_set = set(ids)
    required = set(genome.input_ids) | set(genome.output_ids)
    if not required <= id_set:
        raise ValueError("missing input or output nodes")
    innovations = [l.innovation for l in genome.links]
    if len(set(innovations)) != len(innovations):
        raise ValueError("duplicate innovation ids")
    pairs = [(l.source, l.target) for l in genome.links]
    if len(set(pairs)) != len(pairs):
        raise ValueError("duplicate links")
    for link in genome.links:
        if link.source not in id_set or link.target not in id_set:
            raise ValueError(f"dangling link {link.source}->{link.target}")
        if link.target < genome.input_count:
            raise ValueError("link into an input node")
        if link.source in genome.output_ids:
            raise ValueError("link out of an output node")
    for n in genome.nodes:
        if n.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {n.activation!r}")
    topological_order(genome)


def cppn_eval(genome: CppnGenome, inputs: Sequence[float]) -> list[float]:
    if len(inputs) != genome.input_count:
        raise ArityError(f"expected {genome.input_count} inputs, got {len(inputs)}")
    values: dict[int, float] = {i: float(v) for i, v in enumerate(inputs)}
    for nid, act, bias, incoming in genome._plan:
        total = bias
        for src, w in incoming:
            total += w * values[src]
        values[nid] = ACTIVATIONS[act](total)
    return [values[o] for o in genome.output_ids]


class InnovationTracker:
    """Run-wide registry of link innovations and split-node ids.

    The same structural mutation (same link added, same link split) receives
    the same id everywhere in a run, which is what crossover aligns on.
    Initial input->output links are pre-registered with ids
    ``i * output_count + o``.
    """

    def __init__(self, input_count: int, output_count: int):
        self.input_count = input_count
        self.output_count = output_count
        self._links: dict[tuple[int, int], int] = {}
        for i in range(input_count):
            for o in range(output_count):
                self._links[(i, input_count + o)] = i * output_count + o
        self._splits: dict[int, int] = {}
        self.next_innovation = input_count * output_count
        self.next_node = input_count + output_count

    @classmethod
    def for_genome(cls, genome: CppnGenome) -> "InnovationTracker":
        tracker = cls(genome.input_count, genome.output_count)
        tracker.observe(genome)
        return tracker

    def observe(self, genome: CppnGenome) -> None:
        for link in genome.links:
            self._links.setdefault((link.source, link.target), link.innovation)
            self.next_innovation = max(self.next_innovation, link.innovation + 1)
        for n in genome.nodes:
            self.next_node = max(self.next_node, n.id + 1)

    def link_innovation(self, source: int, target: int) -> int:
        key = (source, target)
        if key not in self._links:
            self._links[key] = self.next_innovation
            self.next_innovation += 1
        return self._links[key]

    def split_node(self, innovation: int) -> int:
        if innovation not in self._splits:
            self._splits[innovation] = self.fresh_node()
        return self._splits[innovation]

    def fresh_node(self) -> int:
        nid = self.next_node
        self.next_node += 1
        return nid

    def to_dict(self) -> dict:
        return {
            "input_count": self.input_count,
            "output_count": self.output_count,
            "links": [[s, t, i] for (s, t), i in sorted(self._links.items(), key=lambda kv: kv[1])],
            "splits": [[k, v] for k, v in sorted(self._splits.items())],
            "next_innovation": self.next_innovation,
            "next_node": self.next_node,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "InnovationTracker":
        tracker = cls(int(data["input_count"]), int(data["output_count"]))
        tracker._links = {(int(s), int(t)): int(i) for s, t, i in data["links"]}
        tracker._splits = {int(k): int(v) for k, v in data["splits"]}
        tracker.next_innovation = int(data["next_innovation"])
        tracker.next_node = int(data["next_node"])
        return tracker


def random_genome(
    input_count: int,
    output_count: int,
    rng: np.random.Generator | int | None = None,
    output_activation: str = OUTPUT_ACTIVATION,
) -> CppnGenome:
    """Minimal genome: every input wired to every output, weights U(-1, 1)."""
    if input_count < 1 or output_count < 1:
        raise ValueError("a CPPN needs at least one input and one output")
    rng = np.random.default_rng(rng)
    nodes = [NodeGene(i, "identity") for i in range(input_count)]
    nodes += [NodeGene(input_count + o, output_activation) for o in range(output_count)]
    weights = rng.uniform(-1.0, 1.0, size=(input_count, output_count))
    links = [
        LinkGene(i, input_count + o, float(weights[i, o]), i * output_count + o)
        for i in range(input_count)
        for o in range(output_count)
    ]
    return CppnGenome(input_count, output_count, tuple(nodes), tuple(links))


@dataclass(frozen=True)
class MutationRates:
    probability: float = 0.8
    weight: float = 0.8
    add_link: float = 0.1
    add_node: float = 0.1
    weight_sigma: float = 0.5
    # per-link chance of being perturbed in a weight mutation (at least one always is)
    weight_link_fraction: float = 0.3


def _reaches(links: Iterable[LinkGene], start: int, goal: int) -> bool:
    children: dict[int, list[int]] = {}
    for l in links:
        children.setdefault(l.source, []).append(l.target)
    stack, seen = [start], set()
    while stack:
        nid = stack.pop()
        if nid == goal:
            return True
        if nid in seen:
            continue
        seen.add(nid)
        stack.extend(children.get(nid, ()))
    return False


def _perturb_weights(genome: CppnGenome, rng: np.random.Generator, rates: MutationRates) -> CppnGenome:
    links = list(genome.links)
    enabled = [i for i, l in enumerate(links) if l.enabled] or list(range(len(links)))
    if not enabled:
        # no links at all: nudge output biases instead
        nodes = [
            replace(n, bias=n.bias + float(rng.normal(0.0, rates.weight_sigma)))
            if n.id in genome.output_ids else n
            for n in genome.nodes
        ]
        return replace(genome, nodes=tuple(nodes))
    mask = rng.random(len(enabled)) < rates.weight_link_fraction
    if not mask.any():
        mask[rng.integers(len(enabled))] = True
    noise = rng.normal(0.0, rates.weight_sigma, size=len(enabled))
    for k, idx in enumerate(enabled):
        if mask[k]:
            links[idx] = replace(links[idx], weight=links[idx].weight + float(noise[k]))
    return replace(genome, links=tuple(links))


def _link_candidates(genome: CppnGenome) -> list[tuple[int, int]]:
    outputs = set(genome.output_ids)
    existing = {(l.source, l.target) for l in genome.links}
    ids = sorted(n.id for n in genome.nodes)
    sources = [i for i in ids if i not in outputs]
    targets = [i for i in ids if i >= genome.input_count]
    out = []
    for s in sources:
        for t in targets:
            if s == t or (s, t) in existing:
                continue
            if _reaches(genome.links, t, s):
                continue
            out.append((s, t))
    return out


def _add_link(genome, rng, tracker, rates):
    candidates = _link_candidates(genome)
    if not candidates:
        return None
    s, t = candidates[rng.integers(len(candidates))]
    link = LinkGene(s, t, float(rng.uniform(-1.0, 1.0)), tracker.link_innovation(s, t))
    return replace(genome, links=genome.links + (link,))


def _add_node(genome, rng, tracker, activation: str | None = None):
    enabled = [i for i, l in enumerate(genome.links) if l.enabled]
    if not enabled:
        return None
    idx = enabled[rng.integers(len(enabled))]
    old = genome.links[idx]
    if activation is None:
        activation = HIDDEN_ACTIVATIONS[rng.integers(len(HIDDEN_ACTIVATIONS))]
    nid = tracker.split_node(old.innovation)
    if any(n.id == nid for n in genome.nodes):
        nid = tracker.fresh_node()
    links = list(genome.links)
    links[idx] = replace(old, enabled=False)
    links.append(LinkGene(old.source, nid, 1.0, tracker.link_innovation(old.source, nid)))
    links.append(LinkGene(nid, old.target, old.weight, tracker.link_innovation(nid, old.target)))
    nodes = genome.nodes + (NodeGene(nid, activation, 0.0),)
    return replace(genome, nodes=nodes, links=tuple(links))


def add_node(
    genome: CppnGenome,
    rng: np.random.Generator,
    tracker: InnovationTracker | None = None,
    activation: str | None = None,
) -> CppnGenome:
    """Split a random enabled link (NEAT rule: in-weight 1, out-weight unchanged)."""
    tracker = tracker or InnovationTracker.for_genome(genome)
    return _add_node(genome, rng, tracker, activation) or genome


def mutate(
    genome: CppnGenome,
    rng: np.random.Generator,
    rates: MutationRates = MutationRates(),
    tracker: InnovationTracker | None = None,
) -> CppnGenome:
    """Apply at most one structural or parametric mutation.

    When an add-link or add-node mutation has no valid target (no acyclic
    pair left, no enabled link) it falls back to a weight perturbation.
    """
    if rng.random() >= rates.probability:
        return genome
    tracker = tracker or InnovationTracker.for_genome(genome)
    roll = rng.random() * (rates.weight + rates.add_link + rates.add_node)
    child = None
    if roll >= rates.weight + rates.add_link:
        child = _add_node(genome, rng, tracker)
    elif roll >= rates.weight:
        child = _add_link(genome, rng, tracker, rates)
    if child is None:
        child = _perturb_weights(genome, rng, rates)
    return child


def crossover(
    parent_a: CppnGenome,
    parent_b: CppnGenome,
    rng: np.random.Generator,
    fitness_a: float = 0.0,
    fitness_b: float = 0.0,
    probability: float = 0.8,
) -> CppnGenome:
    """Innovation-aligned crossover.

    Matching links take weight (and enabled flag) from a uniformly chosen
    parent; disjoint and excess links come from the fitter parent
    (``parent_a`` on ties).  The child therefore has exactly the fitter
    parent's topology, which keeps it acyclic.
    """
    if parent_a.shape != parent_b.shape:
        raise ShapeMismatchError(f"{parent_a.shape} vs {parent_b.shape}")
    if rng.random() >= probability:
        return parent_a
    fit, other = (parent_a, parent_b) if fitness_a >= fitness_b else (parent_b, parent_a)
    other_links = {l.innovation: l for l in other.links}
    coins = rng.random(len(fit.links)) < 0.5
    links = []
    for coin, link in zip(coins, fit.links):
        match = other_links.get(link.innovation)
        if match is not None and match.source == link.source and match.target == link.target and coin:
            links.append(replace(link, weight=match.weight, enabled=match.enabled))
        else:
            links.append(link)
    return replace(fit, links=tuple(links))
