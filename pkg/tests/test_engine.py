import numpy as np
import pytest

from cimr.backends import DEFAULT_TARGETS, OracleConfig, ScriptedOracle, calibrate_oracle
from cimr.context import (
    COUNT_MISMATCH,
    EXTRANEOUS_ITEM,
    MISSING_ITEM,
    SPATIAL_MISALIGNMENT,
    ContextState,
    Discrepancy,
    FeedbackSignal,
    HistoryEntry,
)
from cimr.engine import (
    FULL,
    NO_DYNAMIC_CONTEXT,
    NO_SELF_CORRECTION,
    VariantConfig,
    compute_confidence,
    feedback_viewpoint,
    parse_feedback,
    run_episode,
    summarize_response,
    update_context,
)
from cimr.errors import AnswerKindMismatch, BackendError
from cimr.mapsim import (
    KINDS,
    anchors_of,
    apply_plan,
    count,
    generate_scenario,
    ids,
    plan,
    render,
)

from conftest import archetype_cases


def _fb(*cats):
    return FeedbackSignal.build([Discrepancy(c, (), "d") for c in cats])


def _feedback_for(scenario, response, history=()):
    scene = apply_plan(scenario.scene, response) if scenario.kind == "place" else scenario.scene
    ctx = ContextState(scenario.instruction, tuple(history), len(history))
    return parse_feedback(response, render(scene, 1), ctx, scenario.goal, anchors_of(scene))


def test_variant_config_validation():
    with pytest.raises(ValueError):
        VariantConfig("no_selfcorrection")
    with pytest.raises(ValueError):
        VariantConfig(FULL, T_max=0)


def test_feedback_viewpoint():
    assert [feedback_viewpoint(t) for t in (1, 2, 3, 4)] == [1, 1, 1, 1]
    assert feedback_viewpoint(0) == 0


def test_update_context_full_appends_history():
    ctx = ContextState("goal")
    ctx = update_context(ctx, count(3), _fb(COUNT_MISMATCH), FULL, round=1)
    ctx = update_context(ctx, count(4), FeedbackSignal(), FULL, round=2)
    assert ctx.iteration == 2
    assert ctx.history == (HistoryEntry(1, "count 3", (COUNT_MISMATCH,)),
                           HistoryEntry(2, "count 4", ()))


def test_update_context_static_variant_keeps_history():
    ctx = ContextState("goal")
    for t in (1, 2, 3):
        ctx = update_context(ctx, count(t), _fb(COUNT_MISMATCH), NO_DYNAMIC_CONTEXT, round=t)
    assert ctx == ContextState("goal", (), 3)


def test_update_context_is_pure_and_deterministic():
    ctx = ContextState("goal")
    a = update_context(ctx, ids(2, 1), _fb(MISSING_ITEM), FULL)
    b = update_context(ctx, ids(2, 1), _fb(MISSING_ITEM), FULL)
    assert a == b and ctx.history == ()
    assert a.history[0].response_summary == "ids 1,2"


def test_summaries():
    assert summarize_response(plan((3, (1, 2)))) == "move 3->1,2"
    assert summarize_response(ids()) == "ids none"
    assert summarize_response(count(0)) == "count 0"


def test_confidence():
    assert compute_confidence(FeedbackSignal()) == 1.0
    assert compute_confidence(_fb(COUNT_MISMATCH)) == 0.5
    assert compute_confidence(_fb(SPATIAL_MISALIGNMENT, MISSING_ITEM, COUNT_MISMATCH)) == 0.25


@pytest.mark.parametrize("case", range(3))
def test_archetype_categories(case):
    scenario, wrong, category = archetype_cases()[case]
    assert _feedback_for(scenario, wrong).categories == (category,)


def test_archetype_details():
    (place, wrong_place, _), _, (counting, wrong_count, _) = archetype_cases()
    (d,) = _feedback_for(place, wrong_place).discrepancies
    assert d.detail.endswith("offset (-1,0)")
    (d,) = _feedback_for(counting, wrong_count).discrepancies
    assert d.detail == "recounted 3 at viewpoint 1, answered 2"


def test_repeat_category_is_marked():
    scenario, wrong, category = archetype_cases()[2]
    hist = [HistoryEntry(1, "count 2", (category,))]
    (d,) = _feedback_for(scenario, wrong, hist).discrepancies
    assert d.detail.endswith("(again)")


def test_correct_answers_give_empty_feedback():
    from cimr.backends import correct_response
    for scenario, _, _ in archetype_cases():
        assert not _feedback_for(scenario, correct_response(scenario))


def test_identify_extraneous_and_missing():
    scenario, _, _ = archetype_cases()[1]
    fb = _feedback_for(scenario, ids(42))
    assert fb.categories == (EXTRANEOUS_ITEM, MISSING_ITEM)


def test_occluded_count_is_invisible_from_front():
    scenario, wrong, _ = archetype_cases()[2]
    ctx = ContextState(scenario.instruction)
    fb = parse_feedback(wrong, render(scenario.scene, 0), ctx, scenario.goal, anchors_of(scenario.scene))
    assert not fb


def test_place_feedback_reports_hidden_object():
    scenario, _, _ = archetype_cases()[0]
    # move the subject behind the reference: it is hidden from the front view
    moved = plan((0, (3, 4)))
    scene = apply_plan(scenario.scene, moved)
    ctx = ContextState(scenario.instruction)
    fb = parse_feedback(moved, render(scene, 0), ctx, scenario.goal, anchors_of(scene))
    assert fb.categories == (MISSING_ITEM,)


def test_parse_feedback_kind_mismatch():
    scenario, _, _ = archetype_cases()[2]
    with pytest.raises(AnswerKindMismatch):
        _feedback_for(scenario, ids(1))


# --------------------------------------------------------------------------
# Episodes


def _run(scenario, config, variant=FULL, seed=0, T_max=4):
    return run_episode(scenario, ScriptedOracle(config), VariantConfig(variant, T_max),
                       np.random.default_rng(seed))


@pytest.mark.parametrize("kind", KINDS)
def test_perfect_oracle_finishes_in_one_round(kind):
    for seed in range(10):
        tr = _run(generate_scenario(seed, kind), OracleConfig(0.0))
        assert tr.rounds_used == 1 and tr.success
        assert tr.rounds[0].confidence == 1.0


@pytest.mark.parametrize("kind", KINDS)
def test_no_self_correction_stops_after_one_round(kind):
    for seed in range(10):
        tr = _run(generate_scenario(seed, kind), OracleConfig(1.0, (1.0, 1.0, 1.0)), NO_SELF_CORRECTION)
        assert tr.rounds_used == 1 and not tr.success


@pytest.mark.parametrize("kind", KINDS)
def test_never_correcting_oracle_uses_every_round(kind):
    tr = _run(generate_scenario(3, kind), OracleConfig(1.0, (0.0, 0.0, 0.0)))
    assert tr.rounds_used == 4 and not tr.success
    assert all(r.feedback for r in tr.rounds)


@pytest.mark.parametrize("case", range(3))
def test_archetype_episode_corrects(case):
    scenario, _, category = archetype_cases()[case]
    tr = _run(scenario, OracleConfig(1.0, (1.0, 1.0, 1.0)))
    assert tr.rounds[0].feedback.categories == (category,)
    assert tr.success and tr.rounds_used == 2


def test_t_max_caps_rounds():
    tr = _run(generate_scenario(0, "count"), OracleConfig(1.0, (0.0,) * 3), T_max=2)
    assert tr.rounds_used == 2


def test_episode_determinism():
    sc = generate_scenario(17, "identify_all")
    cfg = calibrate_oracle(DEFAULT_TARGETS)
    a = [_run(sc, cfg, seed=s).to_records() for s in range(20)]
    b = [_run(sc, cfg, seed=s).to_records() for s in range(20)]
    assert a == b


def test_feedback_is_sound_and_halts_on_clean():
    cfg = calibrate_oracle(DEFAULT_TARGETS)
    rng = np.random.default_rng(0)
    for i in range(600):
        sc = generate_scenario(i, KINDS[i % 3])
        tr = run_episode(sc, ScriptedOracle(cfg), VariantConfig(FULL), rng, i)
        for k, r in enumerate(tr.rounds):
            # every later check sees the whole scene, so feedback flags exactly the failures
            assert bool(r.feedback) == (not r.outcome.success)
            if not r.feedback:
                assert k == len(tr.rounds) - 1


def test_cumulative_accuracy_is_monotone():
    cfg = calibrate_oracle(DEFAULT_TARGETS)
    rng = np.random.default_rng(1)
    traces = [run_episode(generate_scenario(i, KINDS[i % 3]), ScriptedOracle(cfg),
                          VariantConfig(FULL), rng, i) for i in range(900)]
    acc = [sum(t.success_by_round(k) for t in traces) for k in range(1, 5)]
    assert acc == sorted(acc) and acc[-1] > acc[0]


def test_records_shape():
    tr = _run(generate_scenario(3, "count"), OracleConfig(1.0, (0.0,) * 3))
    recs = tr.to_records()
    assert [r["round"] for r in recs] == [1, 2, 3, 4]
    assert "success" not in recs[0] and recs[-1]["rounds_used"] == 4
    assert recs[0]["feedback"][0]["category"] == COUNT_MISMATCH


class _Failing:
    def open_episode(self, scenario):
        return self

    def generate_initial(self, view, fused, rng):
        return count(1)

    def refine_response(self, *args, **kwargs):
        raise BackendError("down")


def test_backend_error_carries_partial_trace():
    sc = archetype_cases()[2][0]
    with pytest.raises(BackendError) as info:
        run_episode(sc, _Failing(), VariantConfig(FULL), np.random.default_rng(0))
    trace = info.value.trace
    assert trace.rounds_used == 1 and trace.error.startswith("BackendError")
    assert not trace.success


class _WrongKind(_Failing):
    def generate_initial(self, view, fused, rng):
        return ids(1)


def test_wrong_answer_kind_is_rejected():
    with pytest.raises(AnswerKindMismatch):
        run_episode(archetype_cases()[2][0], _WrongKind(), VariantConfig(FULL), np.random.default_rng(0))
