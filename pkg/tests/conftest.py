
import numpy as np
import pytest

from bodybrain.cppn import CppnGenome, NodeGene
from bodybrain.morphology import Face, Module, ModuleType, Morphology


def constant_genome(input_count, output_count, biases, activation="identity"):
    """Genome with no links whose outputs are act(bias)."""
    nodes = [NodeGene(i, "identity") for i in range(input_count)]
    nodes += [NodeGene(input_count + o, activation, float(b)) for o, b in enumerate(biases)]
    return CppnGenome(input_count, output_count, tuple(nodes), ())


def line_body(n, axis=(0, 1, 0), kinds=None):
    """Core at the origin followed by a straight chain of n-1 modules."""
    kinds = kinds or [ModuleType.BRICK] * (n - 1)
    mods = [Module(0, (0, 0, 0), ModuleType.CORE, 0, None, None)]
    for k in range(1, n):
        pos = tuple(a * k for a in axis)
        mods.append(Module(k, pos, kinds[k - 1], 0, k - 1, Face.FRONT, forward=axis, depth=k))
    return Morphology(tuple(mods))


def body_from_cells(cells):
    """Tree body from ``[(position, type, parent_index), ...]``; core first."""
    mods = [Module(0, (0, 0, 0), ModuleType.CORE, 0, None, None)]
    for k, (pos, kind, parent) in enumerate(cells, start=1):
        mods.append(Module(k, tuple(pos), kind, 0, parent, Face.FRONT))
    return Morphology(tuple(mods))


@pytest.fixture
def cross_body():
    H = ModuleType.HINGE
    return body_from_cells([((0, 1, 0), H, 0), ((0, -1, 0), H, 0), ((-1, 0, 0), H, 0), ((1, 0, 0), H, 0)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed at the end of the session
ACCEPTANCE: list[str] = []


def record(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
