import dataclasses
import json

import numpy as np
import pytest

from bodybrain.cppn import random_genome, mutate, MutationRates
from bodybrain.morphology import (
    Face,
    Module,
    ModuleType,
    Morphology,
    check_morphology,
    compute_descriptors,
    decode_body,
    max_branching,
    max_limbs,
    render_ascii,
)

from conftest import body_from_cells, constant_genome, line_body


def test_core_front_faces_positive_y():
    core = Module(0, (0, 0, 0), ModuleType.CORE, 0, None, None)
    assert core.socket_direction(Face.FRONT) == (0, 1, 0)
    assert core.socket_direction(Face.RIGHT) == (1, 0, 0)


def test_first_child_sits_in_front_of_core():
    body = decode_body(constant_genome(4, 5, [1, 0, 0, 0, 0]))
    first = body.modules[1]
    assert first.position == (0, 1, 0)
    assert first.face is Face.FRONT


def test_empty_dominant_genome_gives_lone_core():
    body = decode_body(constant_genome(4, 5, [0, 0, 1, 0, 0]))
    assert body.size == 1
    assert body.core.type is ModuleType.CORE


def test_brick_dominant_genome_hits_cap():
    body = decode_body(constant_genome(4, 5, [1, 0, 0, 0, 0]))
    assert body.size == 10
    assert sum(m.type is ModuleType.BRICK for m in body.modules) == 9


def test_hinge_dominant_genome_grows_four_chains():
    body = decode_body(constant_genome(4, 5, [0, 1, 0, 0, 0]))
    assert body.size == 10
    cells = {m.position for m in body.modules}
    assert {(0, 2, 0), (0, -2, 0), (-2, 0, 0), (2, 0, 0)} <= cells


def test_rotated_brick_sockets_point_vertically():
    # rotation wins, so every child rolls its up vector
    body = decode_body(constant_genome(4, 5, [1, 0, 0, 0, 1]))
    front = next(m for m in body.modules if m.position == (0, 1, 0))
    assert front.rotation == 90
    lateral = {front.socket_direction(Face.LEFT), front.socket_direction(Face.RIGHT)}
    assert lateral == {(0, 0, 1), (0, 0, -1)}
    check_morphology(body)


def test_decode_rejects_wrong_shape():
    with pytest.raises(ValueError):
        decode_body(random_genome(6, 1, 0))


def test_decode_deterministic():
    g = random_genome(4, 5, 11)
    assert decode_body(g) == decode_body(g)


def test_random_bodies_are_valid_trees():
    rng = np.random.default_rng(7)
    rates = MutationRates(probability=1.0, weight=0.5, add_link=0.2, add_node=0.3)
    g = random_genome(4, 5, rng)
    sizes = set()
    for i in range(10_000):
        g = random_genome(4, 5, rng) if i % 5 == 0 else mutate(g, rng, rates)
        body = decode_body(g)
        check_morphology(body)
        assert 1 <= body.size <= 10
        assert body.core.position == (0, 0, 0)
        positions = [m.position for m in body.modules]
        assert len(set(positions)) == len(positions)
        for m in body.modules[1:]:
            parent = body.modules[m.parent]
            assert sum(abs(a - b) for a, b in zip(m.position, parent.position)) == 1
        d = compute_descriptors(body)
        for name in ("proportion", "rel_limbs", "symmetry", "branching"):
            assert 0.0 <= getattr(d, name) <= 1.0
        sizes.add(body.size)
    assert len(sizes) > 3


@pytest.mark.parametrize("m, limbs, branches", [
    (1, 0, 0), (2, 1, 0), (5, 4, 1), (6, 4, 1), (7, 5, 1), (8, 6, 2), (9, 6, 2), (10, 7, 2),
])
def test_normalisers(m, limbs, branches):
    assert max_limbs(m) == limbs
    assert max_branching(m) == branches


def test_snake_descriptors():
    d = compute_descriptors(line_body(10))
    assert d.absolute_size == 10
    assert d.rel_limbs == pytest.approx(1 / 7)
    assert d.proportion == pytest.approx(0.1)
    assert d.branching == 0.0


def test_cross_descriptors(cross_body):
    d = compute_descriptors(cross_body)
    assert d.rel_limbs == pytest.approx(1.0)
    assert d.proportion == pytest.approx(1.0)
    assert d.branching == pytest.approx(1.0)
    assert d.symmetry == pytest.approx(1.0)
    assert d.num_bricks == 0


def test_asymmetric_body_scores_low():
    B = ModuleType.BRICK
    H = ModuleType.HINGE
    body = body_from_cells([((1, 0, 0), B, 0), ((-1, 0, 0), H, 0), ((1, 1, 0), B, 1)])
    d = compute_descriptors(body)
    assert d.symmetry < 1.0


def test_lone_core_descriptors():
    d = compute_descriptors(line_body(1))
    assert (d.absolute_size, d.rel_limbs, d.branching, d.symmetry, d.proportion) == (1, 0.0, 0.0, 1.0, 1.0)


def _transform(body, fn):
    mods = tuple(dataclasses.replace(m, position=fn(m.position)) for m in body.modules)
    return Morphology(mods)


@pytest.mark.parametrize("seed", range(25))
def test_descriptors_invariant_to_translation_and_quarter_turn(seed):
    body = decode_body(random_genome(4, 5, seed))
    base = compute_descriptors(body)
    shifted = _transform(body, lambda p: (p[0] + 3, p[1] - 5, p[2] + 1))
    turned = _transform(body, lambda p: (-p[1], p[0], p[2]))
    assert compute_descriptors(shifted) == base
    assert compute_descriptors(turned) == base


def test_json_round_trip():
    body = decode_body(random_genome(4, 5, 3))
    back = Morphology.from_dict(json.loads(body.to_json()))
    assert back == body


def test_ascii_render(cross_body):
    assert render_ascii(cross_body) == ".H.\nHCH\n.H."
