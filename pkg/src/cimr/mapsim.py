"""Synthetic multi-modal action planning world.

An 8x8 grid where each cell holds up to two objects: a front one and, behind
it, a back one that is hidden from the default viewpoint. Three task kinds
live here (placement, multi-attribute identification, counting) together with
rendering to symbolic observations, move execution and goal evaluation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple, Union

import numpy as np

from .context import ContextState
from .errors import (
    AnswerKindMismatch,
    CellFull,
    MalformedObservation,
    NoSuchObject,
    OutOfBounds,
)

GRID = 8
COLORS = ("red", "green", "blue", "yellow", "gray")
SHAPES = ("cube", "sphere", "cylinder")
MATERIALS = ("metallic", "rubber")
FRONT, BACK = "front", "back"
DEPTHS = (FRONT, BACK)
RELATIONS = ("left_of", "right_of", "above", "below")
KINDS = ("place", "identify_all", "count")
ATTRIBUTES = {"color": COLORS, "shape": SHAPES, "material": MATERIALS}

# one-hot layout of a slot vector
SLOT_DIM = len(COLORS) + len(SHAPES) + len(MATERIALS) + 1
_C0, _S0, _M0, _P = 0, len(COLORS), len(COLORS) + len(SHAPES), SLOT_DIM - 1

# cell offset of the subject relative to the reference for each relation
RELATION_OFFSETS = {
    "left_of": (0, -1),
    "right_of": (0, 1),
    "above": (-1, 0),
    "below": (1, 0),
}
# offset applied to the correct destination by the placement error template
PLACE_ERROR_OFFSET = (-1, 0)


def in_bounds(pos) -> bool:
    r, c = pos
    return 0 <= r < GRID and 0 <= c < GRID


# --------------------------------------------------------------------------
# World state


@dataclass(frozen=True)
class ObjectSpec:
    id: int
    color: str
    shape: str
    material: str
    pos: tuple[int, int]
    depth: str = FRONT

    def __post_init__(self):
        if self.id < 0:
            raise ValueError("object id must be non-negative")
        if self.color not in COLORS or self.shape not in SHAPES or self.material not in MATERIALS:
            raise ValueError(f"bad attributes on object {self.id}")
        if self.depth not in DEPTHS:
            raise ValueError(f"bad depth {self.depth!r}")
        object.__setattr__(self, "pos", (int(self.pos[0]), int(self.pos[1])))
        if not in_bounds(self.pos):
            raise OutOfBounds(f"object {self.id} at {self.pos}")

    @property
    def attributes(self) -> tuple[str, str, str]:
        return (self.color, self.shape, self.material)

    def get(self, attr: str) -> str:
        return getattr(self, attr)

    def to_json(self) -> dict:
        return {"id": self.id, "color": self.color, "shape": self.shape,
                "material": self.material, "pos": list(self.pos), "depth": self.depth}

    @classmethod
    def from_json(cls, d: dict) -> "ObjectSpec":
        return cls(int(d["id"]), d["color"], d["shape"], d["material"],
                   tuple(d["pos"]), d.get("depth", FRONT))


@dataclass(frozen=True)
class Scene:
    objects: tuple[ObjectSpec, ...] = ()
    grid_size: int = GRID

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        if self.grid_size != GRID:
            raise ValueError("grid size is fixed at 8x8")
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique")
        slots = set()
        for o in self.objects:
            key = (o.pos, o.depth)
            if key in slots:
                raise ValueError(f"two objects in slot {key}")
            slots.add(key)
        for pos, depth in slots:
            if depth == BACK and (pos, FRONT) not in slots:
                raise ValueError(f"back object at {pos} without a front object")

    def by_id(self, object_id: int) -> ObjectSpec:
        for o in self.objects:
            if o.id == object_id:
                return o
        raise NoSuchObject(f"no object with id {object_id}")

    def at(self, pos, depth=FRONT):
        pos = tuple(pos)
        for o in self.objects:
            if o.pos == pos and o.depth == depth:
                return o
        return None

    def to_json(self) -> dict:
        return {"objects": [o.to_json() for o in self.objects]}

    @classmethod
    def from_json(cls, d: dict) -> "Scene":
        return cls(tuple(ObjectSpec.from_json(o) for o in d["objects"]))


# --------------------------------------------------------------------------
# Goals


@dataclass(frozen=True)
class Place:
    subject_id: int
    relation: str
    reference_id: int

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise ValueError(f"unknown relation {self.relation!r}")
        if self.subject_id == self.reference_id:
            raise ValueError("subject and reference must differ")


def _check_constraints(constraints: dict) -> tuple:
    items = tuple(sorted(constraints.items()))
    if not items:
        raise ValueError("at least one attribute constraint is required")
    for attr, value in items:
        if attr not in ATTRIBUTES or value not in ATTRIBUTES[attr]:
            raise ValueError(f"bad constraint {attr}={value}")
    return items


@dataclass(frozen=True)
class IdentifyAll:
    """Conjunction of attribute constraints, stored as sorted (attr, value) pairs."""

    constraints: tuple[tuple[str, str], ...]

    def __post_init__(self):
        object.__setattr__(self, "constraints", _check_constraints(dict(self.constraints)))

    @classmethod
    def of(cls, **constraints) -> "IdentifyAll":
        return cls(tuple(constraints.items()))

    def matches(self, attrs: dict) -> bool:
        return all(attrs[a] == v for a, v in self.constraints)


@dataclass(frozen=True)
class Count:
    attribute: str
    value: str

    def __post_init__(self):
        _check_constraints({self.attribute: self.value})

    def matches(self, attrs: dict) -> bool:
        return attrs[self.attribute] == self.value


Goal = Union[Place, IdentifyAll, Count]


def goal_kind(goal: Goal) -> str:
    if isinstance(goal, Place):
        return "place"
    if isinstance(goal, IdentifyAll):
        return "identify_all"
    if isinstance(goal, Count):
        return "count"
    raise TypeError(f"not a goal: {goal!r}")


def goal_to_json(goal: Goal) -> dict:
    kind = goal_kind(goal)
    if kind == "place":
        return {"variant": kind, "subject_id": goal.subject_id, "relation": goal.relation,
                "reference_id": goal.reference_id}
    if kind == "identify_all":
        return {"variant": kind, **dict(goal.constraints)}
    return {"variant": kind, goal.attribute: goal.value}


def goal_from_json(d: dict) -> Goal:
    d = dict(d)
    kind = d.pop("variant")
    if kind == "place":
        return Place(int(d["subject_id"]), d["relation"], int(d["reference_id"]))
    if kind == "identify_all":
        return IdentifyAll(tuple(d.items()))
    if kind == "count":
        ((attr, value),) = d.items()
        return Count(attr, value)
    raise ValueError(f"unknown goal variant {kind!r}")


# --------------------------------------------------------------------------
# Responses


@dataclass(frozen=True)
class MoveAction:
    object_id: int
    to: tuple[int, int]

    def __post_init__(self):
        object.__setattr__(self, "to", (int(self.to[0]), int(self.to[1])))


@dataclass(frozen=True)
class ActionPlan:
    moves: tuple[MoveAction, ...]
    kind = "plan"


@dataclass(frozen=True)
class IdSet:
    ids: frozenset
    kind = "ids"

    def __post_init__(self):
        object.__setattr__(self, "ids", frozenset(int(i) for i in self.ids))


@dataclass(frozen=True)
class CountValue:
    value: int
    kind = "count"

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("count must be non-negative")


_ANSWER_FOR_GOAL = {"place": ActionPlan, "identify_all": IdSet, "count": CountValue}


@dataclass(frozen=True)
class Response:
    answer: Union[ActionPlan, IdSet, CountValue]
    rationale: str = ""

    @property
    def kind(self) -> str:
        return self.answer.kind

    def value_json(self):
        a = self.answer
        if isinstance(a, ActionPlan):
            return [{"object_id": m.object_id, "to": list(m.to)} for m in a.moves]
        if isinstance(a, IdSet):
            return sorted(a.ids)
        return a.value

    def to_json(self) -> dict:
        return {"kind": self.kind, "value": self.value_json(), "rationale": self.rationale}

    @classmethod
    def from_json(cls, d: dict, rationale: str | None = None) -> "Response":
        """Parse ``{"kind", "value"[, "rationale"]}``; raises ValueError/KeyError/TypeError."""
        kind, value = d["kind"], d["value"]
        if kind == "plan":
            answer = ActionPlan(tuple(MoveAction(int(m["object_id"]), tuple(m["to"])) for m in value))
        elif kind == "ids":
            answer = IdSet(frozenset(int(i) for i in value))
        elif kind == "count":
            if isinstance(value, bool) or int(value) != value:
                raise ValueError("count value must be an integer")
            answer = CountValue(int(value))
        else:
            raise ValueError(f"unknown response kind {kind!r}")
        if rationale is None:
            rationale = d.get("rationale", "")
        return cls(answer, str(rationale))


def plan(*moves) -> Response:
    return Response(ActionPlan(tuple(MoveAction(i, to) for i, to in moves)))


def ids(*object_ids) -> Response:
    return Response(IdSet(frozenset(object_ids)))


def count(value: int) -> Response:
    return Response(CountValue(value))


# --------------------------------------------------------------------------
# Observation


class Sighting(NamedTuple):
    color: str
    shape: str
    material: str
    pos: tuple[int, int]
    depth: str

    @property
    def attributes(self):
        return (self.color, self.shape, self.material)

    def as_dict(self) -> dict:
        return {"color": self.color, "shape": self.shape, "material": self.material}


@dataclass(frozen=True, eq=False)
class Observation:
    """Symbolic render: ``cells[row, col, slot]`` is an 11-vector, slot 0 front, 1 back."""

    viewpoint: int
    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.int8)
        if cells.shape != (GRID, GRID, 2, SLOT_DIM):
            raise MalformedObservation(f"observation shape {cells.shape}")
        cells = cells.copy()
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    def __eq__(self, other):
        if not isinstance(other, Observation):
            return NotImplemented
        return self.viewpoint == other.viewpoint and np.array_equal(self.cells, other.cells)

    def __hash__(self):
        return hash((self.viewpoint, self.cells.tobytes()))


def encode_slot(obj: ObjectSpec) -> np.ndarray:
    v = np.zeros(SLOT_DIM, dtype=np.int8)
    v[_C0 + COLORS.index(obj.color)] = 1
    v[_S0 + SHAPES.index(obj.shape)] = 1
    v[_M0 + MATERIALS.index(obj.material)] = 1
    v[_P] = 1
    return v


def decode_slot(v) -> tuple[str, str, str] | None:
    """Attributes of one slot vector; None for an empty slot."""
    v = np.asarray(v)
    if v[_P] == 0:
        if v.any():
            raise MalformedObservation("attribute bits set on an empty slot")
        return None
    if v[_P] != 1:
        raise MalformedObservation("presence bit must be 0 or 1")
    out = []
    for lo, names in ((_C0, COLORS), (_S0, SHAPES), (_M0, MATERIALS)):
        block = v[lo:lo + len(names)]
        if not (np.all((block == 0) | (block == 1)) and block.sum() == 1):
            raise MalformedObservation(f"block {names} is not one-hot: {block.tolist()}")
        out.append(names[int(np.argmax(block))])
    return tuple(out)


def render(scene: Scene, viewpoint: int = 0) -> Observation:
    """Viewpoint 0 shows front objects only; any viewpoint >= 1 also shows back ones."""
    cells = np.zeros((GRID, GRID, 2, SLOT_DIM), dtype=np.int8)
    for o in scene.objects:
        if o.depth == BACK and viewpoint < 1:
            continue
        r, c = o.pos
        cells[r, c, 0 if o.depth == FRONT else 1] = encode_slot(o)
    return Observation(viewpoint, cells)


def validate_cells(cells) -> np.ndarray:
    """Check every slot of a ``(8, 8, 2, 11)`` grid; return indices of filled slots.

    Raises MalformedObservation for non-binary entries, attribute bits on an
    empty slot, non-one-hot blocks or a back slot without a front object.
    """
    cells = np.asarray(cells)
    if not np.all((cells == 0) | (cells == 1)):
        raise MalformedObservation("observation entries must be 0 or 1")
    present = cells[..., _P] == 1
    if np.any(~present & cells.any(axis=-1)):
        raise MalformedObservation("attribute bits set on an empty slot")
    for lo, hi in ((_C0, _S0), (_S0, _M0), (_M0, _P)):
        sums = cells[..., lo:hi].sum(axis=-1)
        if np.any(present & (sums != 1)):
            raise MalformedObservation("attribute block is not one-hot")
    if np.any(present[..., 1] & ~present[..., 0]):
        raise MalformedObservation("back slot filled without a front object")
    return np.argwhere(present)


def parse_observation(obs: Observation) -> list[Sighting]:
    """Visible objects in row-major order, front before back."""
    cells = obs.cells
    out = []
    for r, c, slot in validate_cells(cells):
        v = cells[r, c, slot]
        out.append(Sighting(
            COLORS[int(np.argmax(v[_C0:_S0]))],
            SHAPES[int(np.argmax(v[_S0:_M0]))],
            MATERIALS[int(np.argmax(v[_M0:_P]))],
            (int(r), int(c)),
            FRONT if slot == 0 else BACK,
        ))
    return out


def visible_objects(scene: Scene, viewpoint: int) -> list[ObjectSpec]:
    return [o for o in scene.objects if o.depth == FRONT or viewpoint >= 1]


def anchors_of(scene: Scene) -> dict[int, tuple[tuple[int, int], str]]:
    """Object id -> (cell, depth), the environment's object tracker."""
    return {o.id: (o.pos, o.depth) for o in scene.objects}


# --------------------------------------------------------------------------
# Actions


def apply_action(scene: Scene, action: MoveAction) -> Scene:
    """Move one object; the vacated back slot (if any) is promoted to front."""
    obj = scene.by_id(action.object_id)
    if not in_bounds(action.to):
        raise OutOfBounds(f"destination {action.to} is off the grid")
    rest = {}
    for o in scene.objects:
        if o.id == obj.id:
            continue
        if obj.depth == FRONT and o.pos == obj.pos and o.depth == BACK:
            o = replace(o, depth=FRONT)
        rest[o.id] = o
    taken = {o.depth for o in rest.values() if o.pos == action.to}
    if FRONT not in taken:
        depth = FRONT
    elif BACK not in taken:
        depth = BACK
    else:
        raise CellFull(f"cell {action.to} already holds two objects")
    rest[obj.id] = replace(obj, pos=action.to, depth=depth)
    # original object order is kept so scenes compare field-by-field
    return Scene(tuple(rest[o.id] for o in scene.objects))


def apply_plan(scene: Scene, response: Response) -> Scene:
    if not isinstance(response.answer, ActionPlan):
        raise AnswerKindMismatch(f"expected an action plan, got {response.kind}")
    for move in response.answer.moves:
        scene = apply_action(scene, move)
    return scene


# --------------------------------------------------------------------------
# Evaluation


@dataclass(frozen=True)
class TaskOutcome:
    violations: tuple[tuple[str, str], ...] = ()

    @property
    def success(self) -> bool:
        return not self.violations


def relation_target(reference: ObjectSpec, relation: str) -> tuple[int, int]:
    dr, dc = RELATION_OFFSETS[relation]
    return (reference.pos[0] + dr, reference.pos[1] + dc)


def evaluate_goal(goal: Goal, scene: Scene, answer: Response) -> TaskOutcome:
    """Judge an answer against ground truth.

    For placement goals the plan must already be applied to ``scene``; the
    answer is only checked for kind.
    """
    kind = goal_kind(goal)
    if not isinstance(answer.answer, _ANSWER_FOR_GOAL[kind]):
        raise AnswerKindMismatch(f"{kind} goal answered with {answer.kind}")
    if kind == "place":
        return _evaluate_place(goal, scene)
    if kind == "identify_all":
        return _evaluate_identify(goal, scene, answer.answer.ids)
    truth = sum(1 for o in scene.objects if goal.matches(_attrs(o)))
    if answer.answer.value != truth:
        return TaskOutcome((("count", f"expected {truth}, got {answer.answer.value}"),))
    return TaskOutcome()


def _attrs(o) -> dict:
    return {"color": o.color, "shape": o.shape, "material": o.material}


def _evaluate_place(goal: Place, scene: Scene) -> TaskOutcome:
    try:
        subj = scene.by_id(goal.subject_id)
        ref = scene.by_id(goal.reference_id)
    except NoSuchObject as e:
        return TaskOutcome(((goal.relation, str(e)),))
    tr, tc = relation_target(ref, goal.relation)
    v = []
    if subj.pos[0] != tr:
        v.append((goal.relation, "row mismatch"))
    if subj.pos[1] != tc:
        v.append((goal.relation, "column mismatch"))
    return TaskOutcome(tuple(v))


def _evaluate_identify(goal: IdentifyAll, scene: Scene, answered: frozenset) -> TaskOutcome:
    truth = {o.id for o in scene.objects if goal.matches(_attrs(o))}
    known = {o.id: o for o in scene.objects}
    v = []
    for i in sorted(answered - truth):
        if i not in known:
            v.append(("unknown_id", f"object {i} is not in the scene"))
            continue
        failed = [f"{a}={known[i].get(a)}!={val}" for a, val in goal.constraints
                  if known[i].get(a) != val]
        v.append(("constraint", f"object {i} fails " + ",".join(failed)))
    for i in sorted(truth - answered):
        v.append(("missing", f"object {i} matches but was not answered"))
    return TaskOutcome(tuple(v))


# --------------------------------------------------------------------------
# Instructions

_SHAPE_ADJ = {"cube": "cubic", "sphere": "spherical", "cylinder": "cylindrical"}
_REL_TEXT = {"left_of": "exactly to the left of", "right_of": "exactly to the right of",
             "above": "exactly above", "below": "exactly below"}


def _adjective(attr, value):
    return _SHAPE_ADJ[value] if attr == "shape" else value


def instruction_for(goal: Goal, scene: Scene) -> str:
    kind = goal_kind(goal)
    if kind == "place":
        s, r = scene.by_id(goal.subject_id), scene.by_id(goal.reference_id)
        return (f"place the {s.color} {s.shape} {_REL_TEXT[goal.relation]} "
                f"the {r.color} {r.shape}")
    if kind == "identify_all":
        words = [_adjective(a, v) for a, v in _display_order(goal.constraints)]
        if len(words) == 1:
            desc = words[0]
        elif len(words) == 2:
            desc = f"both {words[0]} and {words[1]}"
        else:
            desc = ", ".join(words[:-1]) + f" and {words[-1]}"
        return f"identify all objects that are {desc}"
    return (f"count the number of {_adjective(goal.attribute, goal.value)} objects, "
            f"then state their total")


def _display_order(constraints):
    order = {"color": 0, "material": 1, "shape": 2}
    return sorted(constraints, key=lambda kv: order[kv[0]])


# --------------------------------------------------------------------------
# Scenarios


@dataclass(frozen=True)
class Scenario:
    seed: int
    kind: str
    scene: Scene
    instruction: str
    goal: Goal
    initial_context: ContextState = field(default=None)

    def __post_init__(self):
        if self.initial_context is None:
            object.__setattr__(self, "initial_context", ContextState(self.instruction))

    def to_json(self) -> dict:
        return {"seed": self.seed, "kind": self.kind, "scene": self.scene.to_json(),
                "instruction": self.instruction, "goal": goal_to_json(self.goal)}

    @classmethod
    def from_json(cls, d: dict) -> "Scenario":
        return cls(int(d["seed"]), d["kind"], Scene.from_json(d["scene"]),
                   d["instruction"], goal_from_json(d["goal"]))


def write_scenarios(path, scenarios: Iterable[Scenario]) -> int:
    n = 0
    with open(path, "w") as f:
        for s in scenarios:
            f.write(json.dumps(s.to_json()) + "\n")
            n += 1
    return n


def read_scenarios(path) -> list[Scenario]:
    with open(path) as f:
        return [Scenario.from_json(json.loads(line)) for line in f if line.strip()]


# Templates are cycled by seed; the remaining layout is drawn from the seeded rng.
PLACE_TEMPLATES = (
    (("green", "cylinder"), ("yellow", "cube"), "right_of"),
    (("red", "cube"), ("blue", "sphere"), "left_of"),
    (("yellow", "sphere"), ("gray", "cylinder"), "above"),
    (("blue", "cube"), ("red", "cylinder"), "below"),
    (("gray", "sphere"), ("green", "cube"), "left_of"),
    (("red", "cylinder"), ("yellow", "sphere"), "right_of"),
)
IDENTIFY_TEMPLATES = (
    {"color": "red", "shape": "sphere"},
    {"material": "metallic", "shape": "cylinder"},
    {"color": "blue", "material": "rubber"},
    {"color": "green", "shape": "cube"},
    {"material": "rubber", "shape": "sphere"},
    {"color": "yellow", "material": "metallic"},
)
COUNT_TEMPLATES = (
    ("shape", "cube"),
    ("color", "green"),
    ("material", "metallic"),
    ("color", "red"),
    ("shape", "sphere"),
    ("color", "blue"),
)

_KIND_STREAM = {"place": 1, "identify_all": 2, "count": 3}
_ALL_CELLS = [(r, c) for r in range(GRID) for c in range(GRID)]


class _Layout:
    """Mutable scene builder used by the generator only."""

    def __init__(self, rng):
        self.rng = rng
        self.objects: list[ObjectSpec] = []
        self.front: set = set()
        self.back: set = set()

    def add(self, attrs, pos, depth=FRONT) -> ObjectSpec:
        o = ObjectSpec(len(self.objects), *attrs, pos, depth)
        self.objects.append(o)
        (self.front if depth == FRONT else self.back).add(pos)
        return o

    def free_cell(self, exclude=()):
        cells = [p for p in _ALL_CELLS if p not in self.front and p not in exclude]
        return cells[int(self.rng.integers(len(cells)))]

    def coverable_cell(self, exclude=()):
        cells = sorted(p for p in self.front if p not in self.back and p not in exclude)
        if not cells:
            return None
        return cells[int(self.rng.integers(len(cells)))]

    def random_attrs(self, reject=None):
        while True:
            attrs = (COLORS[self.rng.integers(len(COLORS))],
                     SHAPES[self.rng.integers(len(SHAPES))],
                     MATERIALS[self.rng.integers(len(MATERIALS))])
            if reject is None or not reject(dict(zip(("color", "shape", "material"), attrs))):
                return attrs

    def scene(self) -> Scene:
        return Scene(tuple(self.objects))


def generate_scenario(seed: int, kind: str) -> Scenario:
    """Deterministic scenario for ``(seed, kind)``; solvable by construction."""
    if kind not in KINDS:
        raise ValueError(f"unknown scenario kind {kind!r}")
    seed = int(seed) & 0xFFFF_FFFF_FFFF_FFFF
    rng = np.random.default_rng([seed, _KIND_STREAM[kind]])
    build = {"place": _gen_place, "identify_all": _gen_identify, "count": _gen_count}[kind]
    scene, goal = build(seed, rng)
    return Scenario(seed, kind, scene, instruction_for(goal, scene), goal)


def _gen_place(seed, rng):
    (s_col, s_shape), (r_col, r_shape), relation = PLACE_TEMPLATES[seed % len(PLACE_TEMPLATES)]
    lay = _Layout(rng)
    dr, dc = RELATION_OFFSETS[relation]
    er, ec = PLACE_ERROR_OFFSET
    candidates = []
    for ref in _ALL_CELLS:
        target = (ref[0] + dr, ref[1] + dc)
        wrong = (target[0] + er, target[1] + ec)
        if in_bounds(target) and in_bounds(wrong):
            candidates.append(ref)
    ref_pos = candidates[int(rng.integers(len(candidates)))]
    target = (ref_pos[0] + dr, ref_pos[1] + dc)
    wrong = (target[0] + er, target[1] + ec)
    material = lambda: MATERIALS[rng.integers(len(MATERIALS))]  # noqa: E731
    subject = lay.add((s_col, s_shape, material()), lay.free_cell({ref_pos, target, wrong}))
    reference = lay.add((r_col, r_shape, material()), ref_pos)
    keep_clear = {target, wrong, ref_pos, subject.pos}
    reserved = {(s_col, s_shape), (r_col, r_shape)}
    reject = lambda a: (a["color"], a["shape"]) in reserved  # noqa: E731
    for _ in range(int(rng.integers(5, 10))):
        lay.add(lay.random_attrs(reject), lay.free_cell(keep_clear))
    for _ in range(int(rng.integers(0, 3))):
        cell = lay.coverable_cell(keep_clear)
        if cell is not None:
            lay.add(lay.random_attrs(reject), cell, BACK)
    return lay.scene(), Place(subject.id, relation, reference.id)


def _gen_identify(seed, rng):
    constraints = IDENTIFY_TEMPLATES[seed % len(IDENTIFY_TEMPLATES)]
    goal = IdentifyAll.of(**constraints)
    lay = _Layout(rng)

    def fill(fixed):
        attrs = lay.random_attrs(lambda a: any(a[k] != v for k, v in fixed.items()))
        return attrs

    for _ in range(int(rng.integers(1, 4))):
        lay.add(fill(constraints), lay.free_cell())
    # decoys satisfy every constraint but one, so dropping that one admits them
    for attr, value in goal.constraints:
        others = {k: v for k, v in constraints.items() if k != attr}
        for _ in range(int(rng.integers(1, 3))):
            attrs = lay.random_attrs(
                lambda a: any(a[k] != v for k, v in others.items()) or a[attr] == value)
            lay.add(attrs, lay.free_cell())
    for _ in range(int(rng.integers(2, 6))):
        lay.add(lay.random_attrs(), lay.free_cell())
    for _ in range(int(rng.integers(0, 3))):
        cell = lay.coverable_cell()
        if cell is not None:
            lay.add(lay.random_attrs(), cell, BACK)
    return lay.scene(), goal


def _gen_count(seed, rng):
    attr, value = COUNT_TEMPLATES[seed % len(COUNT_TEMPLATES)]
    goal = Count(attr, value)
    lay = _Layout(rng)
    match = lambda a: a[attr] == value  # noqa: E731
    for _ in range(int(rng.integers(1, 5))):
        lay.add(lay.random_attrs(lambda a: not match(a)), lay.free_cell())
    for _ in range(int(rng.integers(3, 8))):
        lay.add(lay.random_attrs(match), lay.free_cell())
    for _ in range(int(rng.integers(1, 3))):
        cell = lay.coverable_cell()
        lay.add(lay.random_attrs(lambda a: not match(a)), cell, BACK)
    return lay.scene(), goal
