"""The closed reasoning loop: respond, act, observe, parse feedback, update context, refine.

Ordering note: the feedback of round ``t`` is parsed against the context as it
stood after round ``t-1`` (the provisional context), and only then is the
context finalized with that feedback. This breaks the otherwise circular
dependency between the context update and the feedback parser.

Feedback for a round-``t`` response is read from the next observation, whose
viewpoint is ``min(t, 1)``: the initial answer is formed from the default view,
and every later check sees occluded objects too.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .backends import ScenarioView
from .context import (
    CONSTRAINT_VIOLATION,
    COUNT_MISMATCH,
    EXTRANEOUS_ITEM,
    MISSING_ITEM,
    SPATIAL_MISALIGNMENT,
    ContextState,
    Discrepancy,
    FeedbackSignal,
    HistoryEntry,
)
from .encoders import (
    EncoderParams,
    default_encoder_params,
    encode_context,
    encode_text,
    encode_visual,
)
from .errors import AnswerKindMismatch, BackendError, DomainError
from .fusion import AttentionParams, default_attention_params, fuse
from .mapsim import (
    ActionPlan,
    Count,
    CountValue,
    Goal,
    IdentifyAll,
    IdSet,
    Observation,
    Place,
    Response,
    Scenario,
    TaskOutcome,
    anchors_of,
    apply_action,
    evaluate_goal,
    parse_observation,
    relation_target,
    render,
)

FULL = "full"
NO_SELF_CORRECTION = "no_self_correction"
NO_DYNAMIC_CONTEXT = "no_dynamic_context"
VARIANTS = (FULL, NO_SELF_CORRECTION, NO_DYNAMIC_CONTEXT)


@dataclass(frozen=True)
class VariantConfig:
    variant: str = FULL
    T_max: int = 4

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.T_max < 1:
            raise ValueError("T_max must be at least 1")


def feedback_viewpoint(round: int) -> int:
    """Viewpoint of the observation that checks the response of ``round``."""
    return min(round, 1)


def summarize_response(response: Response) -> str:
    a = response.answer
    if isinstance(a, ActionPlan):
        return " ".join(f"move {m.object_id}->{m.to[0]},{m.to[1]}" for m in a.moves) or "no-op"
    if isinstance(a, IdSet):
        return "ids " + (",".join(str(i) for i in sorted(a.ids)) or "none")
    return f"count {a.value}"


def update_context(prev: ContextState, response: Response, feedback: FeedbackSignal,
                   variant: str = FULL, round: Optional[int] = None) -> ContextState:
    """Fold one finished round into the context.

    The static-context ablation keeps the initial history and only advances
    the iteration counter.
    """
    if variant == NO_DYNAMIC_CONTEXT:
        return replace(prev, iteration=prev.iteration + 1)
    r = prev.iteration + 1 if round is None else round
    entry = HistoryEntry(r, summarize_response(response), feedback.categories)
    return replace(prev, history=prev.history + (entry,), iteration=prev.iteration + 1)


def compute_confidence(feedback: FeedbackSignal) -> float:
    return 1.0 / (1.0 + len(feedback))


# --------------------------------------------------------------------------
# Feedback parsing


def parse_feedback(prev_response: Response, new_obs: Observation, ctx: ContextState,
                   goal: Goal, anchors: dict) -> FeedbackSignal:
    """Compare a response with what the new observation shows.

    ``anchors`` maps object ids to ``(cell, depth)`` as tracked by the
    environment; the observation supplies what is actually visible there.
    Placement and counting are checked against the observation, the
    identification task by an internal consistency check of each answered
    object against the full attribute conjunction.
    """
    sightings = {(s.pos, s.depth): s for s in parse_observation(new_obs)}
    seen = {c for h in ctx.history for c in h.feedback_categories}
    if isinstance(goal, Place):
        if not isinstance(prev_response.answer, ActionPlan):
            raise AnswerKindMismatch(f"place goal answered with {prev_response.kind}")
        items = _place_feedback(goal, sightings, anchors)
    elif isinstance(goal, IdentifyAll):
        if not isinstance(prev_response.answer, IdSet):
            raise AnswerKindMismatch(f"identify goal answered with {prev_response.kind}")
        items = _identify_feedback(goal, prev_response.answer.ids, sightings, anchors)
    elif isinstance(goal, Count):
        if not isinstance(prev_response.answer, CountValue):
            raise AnswerKindMismatch(f"count goal answered with {prev_response.kind}")
        recount = sum(1 for s in sightings.values() if goal.matches(s.as_dict()))
        answered = prev_response.answer.value
        items = []
        if recount != answered:
            items.append(Discrepancy(COUNT_MISMATCH, (), (
                f"recounted {recount} at viewpoint {new_obs.viewpoint}, answered {answered}")))
    else:
        raise TypeError(f"not a goal: {goal!r}")
    items = [replace(d, detail=d.detail + " (again)") if d.category in seen else d for d in items]
    return FeedbackSignal.build(items)


def _place_feedback(goal: Place, sightings, anchors):
    items = []
    located = {}
    for oid in (goal.subject_id, goal.reference_id):
        anchor = anchors.get(oid)
        if anchor is None or anchor not in sightings:
            items.append(Discrepancy(MISSING_ITEM, (oid,), f"object {oid} is not visible"))
        else:
            located[oid] = anchor[0]
    if len(located) == 2:
        (sr, sc), ref_pos = located[goal.subject_id], located[goal.reference_id]
        tr, tc = relation_target(_At(ref_pos), goal.relation)
        if (sr, sc) != (tr, tc):
            items.append(Discrepancy(SPATIAL_MISALIGNMENT, (goal.subject_id,), (
                f"subject at ({sr},{sc}), expected ({tr},{tc}), offset ({sr - tr},{sc - tc})")))
    return items


@dataclass(frozen=True)
class _At:
    pos: tuple


def _identify_feedback(goal: IdentifyAll, answered, sightings, anchors):
    items = []
    for oid in sorted(answered):
        anchor = anchors.get(oid)
        s = sightings.get(anchor) if anchor is not None else None
        if s is None:
            items.append(Discrepancy(EXTRANEOUS_ITEM, (oid,), f"object {oid} is not in view"))
            continue
        attrs = s.as_dict()
        failed = [f"{a}={attrs[a]} needs {v}" for a, v in goal.constraints if attrs[a] != v]
        if failed:
            items.append(Discrepancy(CONSTRAINT_VIOLATION, (oid,),
                                     f"object {oid}: " + ", ".join(failed)))
    where = {anchor: oid for oid, anchor in anchors.items()}
    for key in sorted(sightings, key=lambda k: (k[0], k[1] != "front")):
        s = sightings[key]
        oid = where.get(key)
        if oid is not None and oid not in answered and goal.matches(s.as_dict()):
            items.append(Discrepancy(MISSING_ITEM, (oid,), f"object {oid} matches but is missing"))
    return items


# --------------------------------------------------------------------------
# Episodes


@dataclass(frozen=True)
class RoundRecord:
    round: int
    response: Response
    feedback: FeedbackSignal
    confidence: float
    outcome: TaskOutcome


@dataclass
class EpisodeTrace:
    episode: int
    seed: int
    kind: str
    variant: str
    rounds: list = field(default_factory=list)
    outcome: Optional[TaskOutcome] = None
    error: Optional[str] = None

    @property
    def rounds_used(self) -> int:
        return len(self.rounds)

    @property
    def success(self) -> bool:
        return self.outcome is not None and self.outcome.success and self.error is None

    def success_by_round(self, k: int) -> bool:
        """Solved at some round <= k (later rounds inherit the final state)."""
        return any(r.outcome.success for r in self.rounds[:k]) and self.error is None

    def to_records(self) -> list[dict]:
        out = []
        for i, r in enumerate(self.rounds):
            rec = {
                "episode": self.episode,
                "seed": self.seed,
                "kind": self.kind,
                "round": r.round,
                "variant": self.variant,
                "response": r.response.to_json(),
                "feedback": [{"category": d.category, "detail": d.detail}
                             for d in r.feedback.discrepancies],
                "confidence": r.confidence,
            }
            if i == len(self.rounds) - 1:
                rec["success"] = self.success
                rec["rounds_used"] = self.rounds_used
                if self.error is not None:
                    rec["error"] = self.error
            out.append(rec)
        return out


def _act(scene, response: Response):
    """Execute a plan move by move; rejected moves become feedback, not crashes."""
    rejected = []
    if isinstance(response.answer, ActionPlan):
        for move in response.answer.moves:
            try:
                scene = apply_action(scene, move)
            except DomainError as e:
                rejected.append(Discrepancy(SPATIAL_MISALIGNMENT, (move.object_id,),
                                            f"move rejected: {e}"))
    return scene, rejected


def run_episode(scenario: Scenario, backend, variant_config: VariantConfig, rng,
                episode: int = 0, encoder_params: Optional[EncoderParams] = None,
                attention_params: Optional[AttentionParams] = None) -> EpisodeTrace:
    enc = encoder_params or default_encoder_params()
    att = attention_params or default_attention_params()
    variant = variant_config.variant
    trace = EpisodeTrace(episode, scenario.seed, scenario.kind, variant)
    session = backend.open_episode(scenario)
    scene, goal, ctx = scenario.scene, scenario.goal, scenario.initial_context

    obs = render(scene, 0)
    f_t = encode_text(scenario.instruction, enc)
    fused = fuse(f_t, encode_visual(obs, enc), encode_context(ctx, enc), att)
    view = ScenarioView(scenario.instruction, obs, ctx.canonical_text())
    try:
        response = session.generate_initial(view, fused, rng)
        for t in range(1, variant_config.T_max + 1):
            if t > 1:
                view = ScenarioView(scenario.instruction, obs, ctx.canonical_text())
                response = session.refine_response(response, feedback, encode_context(ctx, enc),
                                                   t, rng, view)
            if response.kind != {"place": "plan", "identify_all": "ids",
                                 "count": "count"}[scenario.kind]:
                raise AnswerKindMismatch(f"{scenario.kind} task answered with {response.kind}")
            scene, rejected = _act(scene, response)
            obs = render(scene, feedback_viewpoint(t))
            parsed = parse_feedback(response, obs, ctx, goal, anchors_of(scene))
            feedback = FeedbackSignal.build(list(parsed.discrepancies) + rejected)
            outcome = evaluate_goal(goal, scene, response)
            trace.rounds.append(RoundRecord(t, response, feedback, compute_confidence(feedback),
                                            outcome))
            trace.outcome = outcome
            ctx = update_context(ctx, response, feedback, variant, round=t)
            if not feedback or variant == NO_SELF_CORRECTION:
                break
    except BackendError as e:
        trace.error = f"{type(e).__name__}: {e}"
        e.trace = trace
        raise
    return trace
