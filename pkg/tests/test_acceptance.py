"""Acceptance suite: each test checks one criterion at its stated tolerance.

Every test reports a PASS/FAIL line, collected in the terminal summary.
"""

import time

import numpy as np
import pytest

from cimr.backends import OracleConfig, ScriptedOracle
from cimr.cli import main
from cimr.context import ContextState
from cimr.engine import (
    FULL,
    NO_DYNAMIC_CONTEXT,
    NO_SELF_CORRECTION,
    VARIANTS,
    VariantConfig,
    parse_feedback,
    run_episode,
)
from cimr.errors import DomainError
from cimr.fusion import default_attention_params, fuse
from cimr.harness import ExperimentConfig, correction_triplets, run_experiment
from cimr.mapsim import (
    KINDS,
    MoveAction,
    Place,
    Response,
    anchors_of,
    apply_action,
    apply_plan,
    evaluate_goal,
    generate_scenario,
    plan,
    relation_target,
    render,
)

from conftest import (
    archetype_cases,
    brute_force_success,
    random_answer,
    random_goal,
    random_scene,
    report,
)

TABLE4 = (78.5, 88.0, 91.0, 91.5)


@pytest.fixture(scope="session")
def sweep():
    cfg = ExperimentConfig(episodes=10_000, variants=VARIANTS)
    start = time.perf_counter()
    result = run_experiment(cfg)
    return result, time.perf_counter() - start


def test_c1_iteration_dynamics(sweep):
    result, elapsed = sweep
    got = [result.table.exact_accuracy(FULL, k) for k in (1, 2, 3, 4)]
    ok = all(abs(g - w) <= 1.0 for g, w in zip(got, TABLE4)) and elapsed <= 60.0
    report("C1 iteration dynamics", ok,
           " / ".join(f"{g:.2f}" for g in got) + f" (3 variants x 10k in {elapsed:.1f}s)")
    assert ok


def test_c2_ablation_ordering(sweep):
    result, _ = sweep
    full, ndc, nsc = (result.table.exact_accuracy(v, 4) for v in (FULL, NO_DYNAMIC_CONTEXT, NO_SELF_CORRECTION))
    ordered = full > ndc > nsc
    levels = abs(full - 91.5) <= 1.5 and abs(ndc - 84.7) <= 1.5 and (
        abs(nsc - 79.1) <= 1.5 or abs(nsc - 78.5) <= 1.5)
    report("C2 ablation ordering", ordered and levels,
           f"full {full:.2f} > no_dynamic_context {ndc:.2f} > no_self_correction {nsc:.2f}")
    assert ordered and levels


def test_c3_gradcheck(capsys):
    start = time.perf_counter()
    code = main(["gradcheck", "--instances", "100"])
    elapsed = time.perf_counter() - start
    out = capsys.readouterr().out
    err = float(out.split("max relative error:")[1].split()[0])
    ok = code == 0 and err < 1e-4 and elapsed <= 10.0
    report("C3 fusion gradient check", ok, f"max rel err {err:.2e} over 100 instances in {elapsed:.2f}s")
    assert ok


def test_c4_attention_normalization():
    rng = np.random.default_rng(4)
    params = default_attention_params()
    worst, shapes, finite = 0.0, 0, True
    while shapes < 1000:
        counts = rng.integers(0, 9, size=3)
        if counts.sum() == 0:
            continue
        scale = 10.0 ** rng.uniform(-2, 1.5)
        ins = [rng.uniform(-scale, scale, size=(int(n), 64)) for n in counts]
        out = fuse(*ins, params)
        finite &= bool(np.isfinite(out.attention).all() and np.isfinite(out.vectors).all())
        worst = max(worst, float(np.abs(out.attention.sum(axis=-1) - 1.0).max()))
        shapes += 1
    ok = worst <= 1e-6 and finite
    report("C4 attention normalization", ok, f"{shapes} shapes, max |row sum - 1| = {worst:.1e}")
    assert ok


def test_c5_evaluator_equivalence():
    rng = np.random.default_rng(5)
    checked = mismatches = positives = 0
    while checked < 2000:
        scene = random_scene(rng)
        goal = random_goal(rng, scene)
        if isinstance(goal, Place):
            if len(scene.objects) < 2:
                continue
            answer = plan()
            if rng.random() < 0.5:
                # move the subject next to its reference when the board allows it
                dest = relation_target(scene.by_id(goal.reference_id), goal.relation)
                try:
                    scene = apply_action(scene, MoveAction(goal.subject_id, dest))
                except DomainError:
                    pass
        else:
            answer = random_answer(rng, goal, scene)
        got = evaluate_goal(goal, scene, answer).success
        want = brute_force_success(goal, scene, answer)
        mismatches += got != want
        positives += want
        checked += 1
    ok = mismatches == 0
    report("C5 evaluator equivalence", ok, f"{checked} triples ({positives} successes), {mismatches} mismatches")
    assert ok


def test_c6_feedback_archetypes():
    lines, ok = [], True
    for scenario, wrong, category in archetype_cases():
        scene = apply_plan(scenario.scene, wrong) if scenario.kind == "place" else scenario.scene
        cats = parse_feedback(wrong, render(scene, 1), ContextState(scenario.instruction),
                              scenario.goal, anchors_of(scene)).categories
        trace = run_episode(scenario, ScriptedOracle(OracleConfig(1.0, (1.0, 1.0, 1.0))),
                            VariantConfig(FULL), np.random.default_rng(0))
        good = cats == (category,) and trace.success and trace.rounds_used <= 3 \
            and trace.rounds[0].feedback.categories == (category,)
        ok &= good
        lines.append(f"{scenario.kind} -> {','.join(cats)} fixed in {trace.rounds_used} rounds")
    report("C6 feedback archetypes", ok, "; ".join(lines))
    assert ok


def test_c7_determinism(tmp_path):
    outputs = []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        cfg = ExperimentConfig(episodes=1000, variants=VARIANTS, out=str(d / "results.csv"),
                               traces=str(d / "traces.jsonl"), triplets=str(d / "triplets.jsonl"))
        run_experiment(cfg)
        outputs.append({n: (d / n).read_bytes() for n in ("traces.jsonl", "results.csv", "triplets.jsonl")})
    same = outputs[0] == outputs[1]
    sizes = ", ".join(f"{n} {len(b)}B" for n, b in outputs[0].items())
    report("C7 determinism", same, f"byte-identical over 1000 episodes x 3 variants ({sizes})")
    assert same


def test_c8_termination_fuzz():
    rng = np.random.default_rng(8)
    bad, total = 0, 10_000
    for i in range(total):
        cfg = OracleConfig(float(rng.random()), tuple(float(x) for x in rng.random(int(rng.integers(0, 5)))),
                           float(rng.random()))
        T_max = int(rng.integers(1, 7))
        variant = VARIANTS[int(rng.integers(3))]
        kind = KINDS[int(rng.integers(3))]
        trace = run_episode(generate_scenario(int(rng.integers(2**31)), kind), ScriptedOracle(cfg),
                            VariantConfig(variant, T_max), rng, i)
        halted = all(r.feedback for r in trace.rounds[:-1])
        bad += not (1 <= trace.rounds_used <= T_max and halted)
    ok = bad == 0
    report("C8 termination and halt-on-clean", ok, f"{total} fuzzed episodes, {bad} violations")
    assert ok


def test_c9_triplet_soundness(sweep):
    result, _ = sweep
    triplets = correction_triplets(result.records())
    bad = 0
    for t in triplets:
        sc = generate_scenario(t["seed"], t["kind"])
        for key, want in (("corrected", True), ("erroneous", False)):
            resp = Response.from_json(t[key])
            scene = apply_plan(sc.scene, resp) if sc.kind == "place" else sc.scene
            bad += evaluate_goal(sc.goal, scene, resp).success is not want
    ok = bad == 0 and len(triplets) > 0
    report("C9 triplet soundness", ok, f"{len(triplets)} triplets, {bad} unsound")
    assert ok
