"""Shared fixtures and independent oracles for the test suite.

The helpers here deliberately avoid the package's own evaluation code: scenes
are scanned cell by cell so that they can serve as brute-force references.
"""

import numpy as np
import pytest

from cimr.mapsim import (
    COLORS,
    GRID,
    MATERIALS,
    RELATIONS,
    SHAPES,
    Count,
    IdentifyAll,
    ObjectSpec,
    Place,
    Scene,
    count,
    ids,
    plan,
)


def random_scene(rng, max_objects=14) -> Scene:
    n = int(rng.integers(0, max_objects + 1))
    cells = [(r, c) for r in range(GRID) for c in range(GRID)]
    order = rng.permutation(len(cells))
    objects, fronts = [], []
    for k in range(n):
        if fronts and rng.random() < 0.3:
            pos, depth = fronts.pop(int(rng.integers(len(fronts)))), "back"
        else:
            pos, depth = cells[order[k]], "front"
            fronts.append(pos)
        objects.append(ObjectSpec(
            k, COLORS[rng.integers(5)], SHAPES[rng.integers(3)], MATERIALS[rng.integers(2)],
            pos, depth))
    return Scene(tuple(objects))


def random_goal(rng, scene):
    kind = rng.integers(3)
    if kind == 0 and len(scene.objects) >= 2:
        a, b = rng.choice([o.id for o in scene.objects], size=2, replace=False)
        return Place(int(a), RELATIONS[rng.integers(4)], int(b))
    attrs = {"color": COLORS, "shape": SHAPES, "material": MATERIALS}
    if kind == 1:
        keys = rng.choice(list(attrs), size=int(rng.integers(1, 4)), replace=False)
        return IdentifyAll(tuple((k, attrs[k][rng.integers(len(attrs[k]))]) for k in keys))
    k = list(attrs)[rng.integers(3)]
    return Count(k, attrs[k][rng.integers(len(attrs[k]))])


def grid_scan(scene):
    """(row, col, depth) -> object, built by enumerating every slot."""
    table = {}
    for r in range(GRID):
        for c in range(GRID):
            for depth in ("front", "back"):
                hits = [o for o in scene.objects if o.pos == (r, c) and o.depth == depth]
                assert len(hits) <= 1
                if hits:
                    table[(r, c, depth)] = hits[0]
    return table


def brute_force_success(goal, scene, answer) -> bool:
    table = grid_scan(scene)
    if isinstance(goal, Place):
        where = {o.id: (r, c) for (r, c, _), o in table.items()}
        if goal.subject_id not in where or goal.reference_id not in where:
            return False
        (sr, sc), (rr, rc) = where[goal.subject_id], where[goal.reference_id]
        return {
            "left_of": sr == rr and rc - sc == 1,
            "right_of": sr == rr and sc - rc == 1,
            "above": sc == rc and rr - sr == 1,
            "below": sc == rc and sr - rr == 1,
        }[goal.relation]
    if isinstance(goal, IdentifyAll):
        want = set()
        for o in table.values():
            if all(getattr(o, a) == v for a, v in goal.constraints):
                want.add(o.id)
        return set(answer.answer.ids) == want
    n = 0
    for o in table.values():
        if getattr(o, goal.attribute) == goal.value:
            n += 1
    return answer.answer.value == n


def random_answer(rng, goal, scene):
    if isinstance(goal, Place):
        return plan()
    table = grid_scan(scene)
    if isinstance(goal, IdentifyAll):
        truth = {o.id for o in table.values()
                 if all(getattr(o, a) == v for a, v in goal.constraints)}
        pick = set(truth)
        if rng.random() < 0.5 and scene.objects:
            pick ^= {int(rng.choice([o.id for o in scene.objects]))}
        if rng.random() < 0.1:
            pick.add(999)
        return ids(*pick)
    truth = sum(1 for o in table.values() if getattr(o, goal.attribute) == goal.value)
    return count(max(0, truth + int(rng.integers(-1, 2))))


def visible_reference(scene, viewpoint):
    """Sorted (color, shape, material, pos, depth) tuples of visible objects."""
    out = []
    for (r, c, depth), o in grid_scan(scene).items():
        if depth == "back" and viewpoint == 0:
            continue
        out.append((o.color, o.shape, o.material, (r, c), depth))
    return sorted(out)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def archetype_cases():
    """Three hand-built (scenario, erroneous answer, expected category) cases.

    A cube placed one row too high, a metallic cube answered for "metallic
    cylinder", and a count that misses a green object hidden at the back.
    """
    from cimr.mapsim import Scenario, instruction_for

    def scenario(kind, objects, goal):
        scene = Scene(tuple(ObjectSpec(i, *o) for i, o in enumerate(objects)))
        return Scenario(0, kind, scene, instruction_for(goal, scene), goal)

    place = scenario("place", [
        ("red", "cube", "rubber", (6, 1)),
        ("blue", "sphere", "metallic", (3, 4)),
        ("gray", "cylinder", "rubber", (0, 0)),
    ], Place(0, "left_of", 1))
    identify = scenario("identify_all", [
        ("gray", "cylinder", "metallic", (1, 1)),
        ("yellow", "cube", "metallic", (2, 5)),
        ("red", "cylinder", "rubber", (4, 2)),
    ], IdentifyAll.of(material="metallic", shape="cylinder"))
    counting = scenario("count", [
        ("green", "sphere", "rubber", (0, 3)),
        ("green", "cube", "metallic", (5, 5)),
        ("blue", "cube", "rubber", (2, 2)),
        ("green", "cylinder", "rubber", (2, 2), "back"),
    ], Count("color", "green"))
    return [
        (place, plan((0, (2, 3))), "SPATIAL_MISALIGNMENT"),
        (identify, ids(0, 1), "CONSTRAINT_VIOLATION"),
        (counting, count(2), "COUNT_MISMATCH"),
    ]


# --------------------------------------------------------------------------
# Acceptance reporting: one PASS/FAIL line per criterion in the summary.

ACCEPTANCE_LINES: list[str] = []


def report(criterion: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
