"""Modular robot bodies: decoding from a body CPPN and shape descriptors.

Bodies live on an integer grid.  The core sits at the origin facing +y, so a
module on the core's front face lands at (0, 1, 0) and the core's right face
points at +x.  Every module carries a local frame (forward, up); a child
attached to one of its parent's sockets inherits the parent's frame turned to
face the socket, then optionally rolls 90 degrees about its own forward axis.
A rolled brick has its left/right sockets pointing up/down, which is how
vertical structure appears.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .cppn import BODY_SHAPE, CppnGenome, cppn_eval

MAX_MODULES = 10

Vec = tuple[int, int, int]


class ModuleType(str, Enum):
    CORE = "core"
    BRICK = "brick"
    HINGE = "hinge"


class Face(str, Enum):
    FRONT = "front"
    BACK = "back"
    LEFT = "left"
    RIGHT = "right"


# Socket exploration order per module type.  The parent always occupies a
# non-core module's back face.
SOCKETS = {
    ModuleType.CORE: (Face.FRONT, Face.BACK, Face.LEFT, Face.RIGHT),
    ModuleType.BRICK: (Face.FRONT, Face.LEFT, Face.RIGHT),
    ModuleType.HINGE: (Face.FRONT,),
}

# Decoder output index -> module type (index 2 means empty space)
_OUTPUT_TYPES = (ModuleType.BRICK, ModuleType.HINGE, None)


def _cross(a: Vec, b: Vec) -> Vec:
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def _neg(a: Vec) -> Vec:
    return (-a[0], -a[1], -a[2])


def _add(a: Vec, b: Vec) -> Vec:
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


@dataclass(frozen=True)
class Module:
    id: int
    position: Vec
    type: ModuleType
    rotation: int  # 0 or 90 degrees
    parent: int | None
    face: Face | None  # parent's face this module is attached to
    forward: Vec = (0, 1, 0)
    up: Vec = (0, 0, 1)
    depth: int = 0

    @property
    def right(self) -> Vec:
        return _cross(self.forward, self.up)

    def socket_direction(self, face: Face) -> Vec:
        if face is Face.FRONT:
            return self.forward
        if face is Face.BACK:
            return _neg(self.forward)
        if face is Face.RIGHT:
            return self.right
        return _neg(self.right)


@dataclass(frozen=True)
class Morphology:
    modules: tuple[Module, ...]

    @property
    def size(self) -> int:
        return len(self.modules)

    @property
    def core(self) -> Module:
        return self.modules[0]

    def hinges(self) -> list[Module]:
        return [m for m in self.modules if m.type is ModuleType.HINGE]

    def children(self, module_id: int) -> list[Module]:
        return [m for m in self.modules if m.parent == module_id]

    def to_dict(self) -> dict:
        return {
            "modules": [
                {
                    "id": m.id,
                    "position": list(m.position),
                    "type": m.type.value,
                    "rotation": m.rotation,
                    "parent": m.parent,
                    "face": m.face.value if m.face else None,
                    "forward": list(m.forward),
                    "up": list(m.up),
                    "depth": m.depth,
                }
                for m in self.modules
            ]
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Morphology":
        modules = tuple(
            Module(
                id=int(d["id"]),
                position=tuple(int(v) for v in d["position"]),
                type=ModuleType(d["type"]),
                rotation=int(d.get("rotation", 0)),
                parent=None if d.get("parent") is None else int(d["parent"]),
                face=None if d.get("face") is None else Face(d["face"]),
                forward=tuple(int(v) for v in d.get("forward", (0, 1, 0))),
                up=tuple(int(v) for v in d.get("up", (0, 0, 1))),
                depth=int(d.get("depth", 0)),
            )
            for d in data["modules"]
        )
        body = cls(modules)
        check_morphology(body)
        return body

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def ascii(self) -> str:
        return render_ascii(self)


def check_morphology(body: Morphology) -> None:
    """Raise ``ValueError`` on any structural invariant violation."""
    mods = body.modules
    if not mods or mods[0].type is not ModuleType.CORE:
        raise ValueError("first module must be the core")
    if sum(m.type is ModuleType.CORE for m in mods) != 1:
        raise ValueError("exactly one core required")
    if len(mods) > MAX_MODULES:
        raise ValueError(f"{len(mods)} modules exceeds cap of {MAX_MODULES}")
    cells = [m.position for m in mods]
    if len(set(cells)) != len(cells):
        raise ValueError("two modules share a grid cell")
    ids = {m.id for m in mods}
    if len(ids) != len(mods):
        raise ValueError("duplicate module ids")
    by_id = {m.id: m for m in mods}
    for m in mods[1:]:
        if m.parent not in by_id:
            raise ValueError(f"module {m.id} has no valid parent")
        parent = by_id[m.parent]
        diff = tuple(a - b for a, b in zip(m.position, parent.position))
        if sum(abs(d) for d in diff) != 1:
            raise ValueError(f"module {m.id} is not adjacent to its parent")
    # reachability from the core (rules out parent cycles)
    seen, frontier = {mods[0].id}, [mods[0].id]
    while frontier:
        pid = frontier.pop()
        for m in mods:
            if m.parent == pid and m.id not in seen:
                seen.add(m.id)
                frontier.append(m.id)
    if len(seen) != len(mods):
        raise ValueError("body is not a tree rooted at the core")


def _roll(forward: Vec, up: Vec) -> Vec:
    """Up vector after a 90 degree roll about ``forward``."""
    return _cross(forward, up)


def decode_body(genome: CppnGenome, max_modules: int = MAX_MODULES) -> Morphology:
    """Grow a body breadth-first from the core by querying the body CPPN.

    Each open socket is queried at the target cell with inputs
    ``(x, y, z, tree distance to core)``.  Occupied cells end the branch.
    """
    if genome.shape != BODY_SHAPE:
        raise ValueError(f"body genome must have shape {BODY_SHAPE}, got {genome.shape}")
    core = Module(0, (0, 0, 0), ModuleType.CORE, 0, None, None)
    modules = [core]
    occupied = {core.position}
    queue = deque([core])
    while queue and len(modules) < max_modules:
        parent = queue.popleft()
        for face in SOCKETS[parent.type]:
            if len(modules) >= max_modules:
                break
            direction = parent.socket_direction(face)
            position = _add(parent.position, direction)
            if position in occupied:
                continue
            depth = parent.depth + 1
            out = cppn_eval(genome, (position[0], position[1], position[2], depth))
            mtype = _OUTPUT_TYPES[int(np.argmax(out[:3]))]
            if mtype is None:
                continue
            rotation = 90 if out[4] > out[3] else 0
            up = _roll(direction, parent.up) if rotation else parent.up
            child = Module(
                id=len(modules),
                position=position,
                type=mtype,
                rotation=rotation,
                parent=parent.id,
                face=face,
                forward=direction,
                up=up,
                depth=depth,
            )
            modules.append(child)
            occupied.add(position)
            queue.append(child)
    return Morphology(tuple(modules))


@dataclass(frozen=True)
class MorphDescriptors:
    absolute_size: int
    proportion: float
    num_bricks: int
    rel_limbs: float
    symmetry: float
    branching: float

    def as_dict(self) -> dict:
        return {
            "absolute_size": self.absolute_size,
            "proportion": self.proportion,
            "num_bricks": self.num_bricks,
            "rel_limbs": self.rel_limbs,
            "symmetry": self.symmetry,
            "branching": self.branching,
        }


DESCRIPTOR_NAMES = tuple(MorphDescriptors.__dataclass_fields__)


def max_limbs(m: int) -> int:
    if m >= 6:
        return 2 * ((m - 6) // 3) + (m - 6) % 3 + 4
    return m - 1


def max_branching(m: int) -> int:
    return max((m - 2) // 3, 0)


def _attachment_dirs(body: Morphology) -> dict[int, set[Vec]]:
    by_id = {m.id: m for m in body.modules}
    dirs: dict[int, set[Vec]] = {m.id: set() for m in body.modules}
    for m in body.modules[1:]:
        parent = by_id[m.parent]
        d = tuple(a - b for a, b in zip(m.position, parent.position))
        dirs[parent.id].add(d)
        dirs[m.id].add(_neg(d))
    return dirs


_LATERAL = {(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0)}


def _mirror_score(body: Morphology, axis: int) -> float | None:
    origin = body.core.position
    cells = {
        tuple(p - o for p, o in zip(m.position, origin)): m.type for m in body.modules
    }
    off_axis = [c for c in cells if c[axis] != 0]
    if not off_axis:
        return None
    matched = 0
    for c in off_axis:
        mirror = list(c)
        mirror[axis] = -mirror[axis]
        if cells.get(tuple(mirror)) is cells[c]:
            matched += 1
    return matched / len(off_axis)


def compute_descriptors(body: Morphology) -> MorphDescriptors:
    m = body.size
    num_bricks = sum(mod.type is ModuleType.BRICK for mod in body.modules)

    xs = [mod.position[0] for mod in body.modules]
    ys = [mod.position[1] for mod in body.modules]
    width = max(xs) - min(xs) + 1
    length = max(ys) - min(ys) + 1
    proportion = min(width, length) / max(width, length)

    dirs = _attachment_dirs(body)
    limbs = sum(1 for mod in body.modules[1:] if len(dirs[mod.id]) == 1)
    l_max = max_limbs(m)
    rel_limbs = limbs / l_max if l_max > 0 else 0.0

    branched = sum(1 for mod in body.modules if _LATERAL <= dirs[mod.id])
    b_max = max_branching(m)
    branching = branched / b_max if b_max > 0 else 0.0

    scores = [s for s in (_mirror_score(body, 0), _mirror_score(body, 1)) if s is not None]
    symmetry = max(scores) if scores else 1.0

    return MorphDescriptors(m, proportion, num_bricks, rel_limbs, symmetry, branching)


_GLYPHS = {ModuleType.CORE: "C", ModuleType.BRICK: "B", ModuleType.HINGE: "H"}


def render_ascii(body: Morphology) -> str:
    """Top-down view, +y up the page.  Stacked cells show the topmost module."""
    xs = [m.position[0] for m in body.modules]
    ys = [m.position[1] for m in body.modules]
    top: dict[tuple[int, int], Module] = {}
    for mod in body.modules:
        key = (mod.position[0], mod.position[1])
        if key not in top or mod.position[2] > top[key].position[2]:
            top[key] = mod
    rows = []
    for y in range(max(ys), min(ys) - 1, -1):
        row = []
        for x in range(min(xs), max(xs) + 1):
            mod = top.get((x, y))
            glyph = _GLYPHS[mod.type] if mod else "."
            if mod and mod.type is not ModuleType.CORE and mod.rotation:
                glyph = glyph.lower()
            row.append(glyph)
        rows.append("".join(row))
    return "\n".join(rows)
