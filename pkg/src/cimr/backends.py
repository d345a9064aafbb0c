"""Reasoning backends: a calibrated scripted oracle and an HTTP client.

A backend is opened once per episode with :meth:`open_episode`; the returned
session answers ``generate_initial`` and ``refine_response``. The scripted
oracle reads the scenario's ground truth. The remote session only keeps the
task kind, so everything it sends comes from the :class:`ScenarioView` and the
feedback signal.
"""

from __future__ import annotations

import json
import os
import socket
import urllib.error
import urllib.request
from dataclasses import dataclass, field, replace
from typing import Optional, Protocol

from .context import (
    CONSTRAINT_VIOLATION,
    COUNT_MISMATCH,
    SPATIAL_MISALIGNMENT,
    FeedbackSignal,
)
from .errors import BadCalibration, BadReply, Unreachable
from .mapsim import (
    PLACE_ERROR_OFFSET,
    IdentifyAll,
    Observation,
    Response,
    Scenario,
    count,
    ids,
    plan,
    relation_target,
    visible_objects,
)

DEFAULT_TARGETS = (78.5, 88.0, 91.0, 91.5)
DEFAULT_TIMEOUT = 30.0
ENV_BACKEND_URL = "CIMR_BACKEND_URL"

# error archetype injected per task kind, and the feedback category that exposes it
ERROR_CATEGORY = {
    "place": SPATIAL_MISALIGNMENT,
    "identify_all": CONSTRAINT_VIOLATION,
    "count": COUNT_MISMATCH,
}


@dataclass(frozen=True, eq=False)
class ScenarioView:
    """What a backend may see of a scenario: no ground truth."""

    instruction: str
    observation: Observation
    context_text: str = ""


@dataclass(frozen=True)
class OracleConfig:
    p_initial_error: float = 0.215
    correction_rates: tuple[float, ...] = (0.0, 0.0, 0.0)  # rounds 2, 3, 4
    context_factor: float = 1.0
    error_templates: tuple = (
        ("place", "offset (-1, 0)"),
        ("identify_all", "drop one constraint"),
        ("count", "visible objects at viewpoint 0"),
    )

    def __post_init__(self):
        probs = (self.p_initial_error, self.context_factor, *self.correction_rates)
        if not all(0.0 <= p <= 1.0 for p in probs):
            raise BadCalibration(f"probabilities must lie in [0, 1]: {probs}")

    def rate(self, round: int) -> float:
        """Correction probability for refinement ``round`` (2-based); 0 past the last rate."""
        k = round - 2
        if 0 <= k < len(self.correction_rates):
            return self.correction_rates[k] * self.context_factor
        return 0.0


def calibrate_oracle(target_accuracies=DEFAULT_TARGETS, context_factor: float = 1.0) -> OracleConfig:
    """Fit the oracle to cumulative per-round accuracy targets (percent).

    The initial error rate is ``1 - a1/100``. Each later round corrects the
    remaining failures with probability ``(a_k - a_{k-1}) / (100 - a_{k-1})``.
    """
    a = [float(x) for x in target_accuracies]
    if len(a) < 1 or not all(0.0 < x < 100.0 for x in a):
        raise BadCalibration(f"targets must lie strictly inside (0, 100): {a}")
    if any(b <= prev for prev, b in zip(a, a[1:])):
        raise BadCalibration(f"targets must be strictly increasing: {a}")
    rates = tuple((cur - prev) / (100.0 - prev) for prev, cur in zip(a, a[1:]))
    return OracleConfig(1.0 - a[0] / 100.0, rates, context_factor)


def expected_accuracies(config: OracleConfig, rounds: int = 4) -> list[float]:
    """Closed-form cumulative accuracy (percent) after rounds 1..rounds."""
    fail = config.p_initial_error
    out = [100.0 * (1.0 - fail)]
    for r in range(2, rounds + 1):
        fail *= 1.0 - config.rate(r)
        out.append(100.0 * (1.0 - fail))
    return out


class EpisodeSession(Protocol):
    def generate_initial(self, view: ScenarioView, fused, rng) -> Response: ...

    def refine_response(self, prev: Response, feedback: FeedbackSignal, f_ct, round: int,
                        rng, view: Optional[ScenarioView] = None) -> Response: ...


class Backend(Protocol):
    def open_episode(self, scenario: Scenario) -> EpisodeSession: ...


# --------------------------------------------------------------------------
# Scripted oracle


def correct_response(scenario: Scenario) -> Response:
    """Goal-satisfying answer computed from ground truth."""
    scene, goal = scenario.scene, scenario.goal
    if scenario.kind == "place":
        ref = scene.by_id(goal.reference_id)
        return plan((goal.subject_id, relation_target(ref, goal.relation)))
    if scenario.kind == "identify_all":
        return ids(*(o.id for o in scene.objects if goal.matches(_attrs(o))))
    return count(sum(1 for o in scene.objects if goal.matches(_attrs(o))))


def erroneous_response(scenario: Scenario, drop_index: int = 0) -> Response:
    """The kind's error archetype; ``drop_index`` picks the ignored constraint."""
    scene, goal = scenario.scene, scenario.goal
    if scenario.kind == "place":
        ref = scene.by_id(goal.reference_id)
        r, c = relation_target(ref, goal.relation)
        dr, dc = PLACE_ERROR_OFFSET
        return plan((goal.subject_id, (r + dr, c + dc)))
    if scenario.kind == "identify_all":
        kept = [kv for i, kv in enumerate(goal.constraints) if i != drop_index % len(goal.constraints)]
        if kept:
            relaxed = IdentifyAll(tuple(kept))
            return ids(*(o.id for o in scene.objects if relaxed.matches(_attrs(o))))
        return ids(*(o.id for o in scene.objects))
    return count(sum(1 for o in visible_objects(scene, 0) if goal.matches(_attrs(o))))


def _attrs(o):
    return {"color": o.color, "shape": o.shape, "material": o.material}


@dataclass(frozen=True)
class ScriptedOracle:
    """Stochastic stand-in for the vision-language model; ignores fused features."""

    config: OracleConfig = field(default_factory=lambda: calibrate_oracle(DEFAULT_TARGETS))

    def open_episode(self, scenario: Scenario) -> "OracleSession":
        return OracleSession(self.config, scenario)

    def with_context_factor(self, factor: float) -> "ScriptedOracle":
        return ScriptedOracle(replace(self.config, context_factor=factor))


class OracleSession:
    def __init__(self, config: OracleConfig, scenario: Scenario):
        self.config = config
        self.scenario = scenario
        self.live_error: Optional[str] = None

    def generate_initial(self, view, fused, rng) -> Response:
        u = rng.random()
        drop = int(rng.integers(len(getattr(self.scenario.goal, "constraints", (0,)))))
        if u < self.config.p_initial_error:
            self.live_error = ERROR_CATEGORY[self.scenario.kind]
            return replace(erroneous_response(self.scenario, drop), rationale="first attempt")
        self.live_error = None
        return replace(correct_response(self.scenario), rationale="first attempt")

    def refine_response(self, prev, feedback, f_ct, round, rng, view=None) -> Response:
        if round < 2:
            raise ValueError("refinement rounds start at 2")
        if not feedback or self.live_error is None or self.live_error not in feedback:
            return prev
        if rng.random() < self.config.rate(round):
            self.live_error = None
            return replace(correct_response(self.scenario),
                           rationale=f"corrected after {feedback.categories[0].lower()}")
        return prev


# --------------------------------------------------------------------------
# Remote service


def resolve_backend_url(flag: Optional[str] = None, configured: Optional[str] = None) -> Optional[str]:
    return flag or configured or os.environ.get(ENV_BACKEND_URL) or None


@dataclass(frozen=True)
class RemoteBackend:
    endpoint: str
    timeout: float = DEFAULT_TIMEOUT

    def open_episode(self, scenario: Scenario) -> "RemoteSession":
        return RemoteSession(self.endpoint, self.timeout, scenario.kind)


_KIND_FOR_TASK = {"place": "plan", "identify_all": "ids", "count": "count"}


class RemoteSession:
    """Synchronous JSON client for ``POST {endpoint}/v1/respond``."""

    def __init__(self, endpoint: str, timeout: float, task_kind: str):
        self.url = endpoint.rstrip("/") + "/v1/respond"
        self.timeout = timeout
        self.task_kind = task_kind

    def generate_initial(self, view, fused, rng) -> Response:
        return self._call(view, None, 1)

    def refine_response(self, prev, feedback, f_ct, round, rng, view=None) -> Response:
        if view is None:
            raise ValueError("the remote backend needs a scenario view to refine")
        if not feedback:
            return prev
        return self._call(view, feedback, round)

    @staticmethod
    def request_body(view: ScenarioView, feedback: Optional[FeedbackSignal], round: int) -> dict:
        return {
            "instruction": view.instruction,
            "observation": view.observation.cells.tolist(),
            "context": view.context_text,
            "feedback": None if feedback is None else [
                {"category": d.category, "detail": d.detail} for d in feedback.discrepancies],
            "round": round,
        }

    def _call(self, view, feedback, round) -> Response:
        body = json.dumps(self.request_body(view, feedback, round)).encode()
        req = urllib.request.Request(self.url, data=body, method="POST",
                                     headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                raw = resp.read()
        except (urllib.error.URLError, socket.timeout, TimeoutError, ConnectionError, OSError) as e:
            raise Unreachable(f"{self.url}: {e}") from e
        return self.parse_reply(raw)

    def parse_reply(self, raw: bytes) -> Response:
        try:
            reply = json.loads(raw)
            response = Response.from_json(reply["response"], rationale=reply.get("rationale", ""))
        except (ValueError, KeyError, TypeError) as e:
            raise BadReply(f"unparseable reply: {e}") from e
        if response.kind != _KIND_FOR_TASK[self.task_kind]:
            raise BadReply(f"{self.task_kind} task answered with {response.kind!r}")
        return response


def solve_context_factor(target_final: float, targets=DEFAULT_TARGETS) -> float:
    """Context factor whose damped correction rates reach ``target_final`` percent."""
    from scipy.optimize import brentq

    base = calibrate_oracle(targets)
    rounds = len(base.correction_rates) + 1

    def gap(k):
        return expected_accuracies(replace(base, context_factor=k), rounds)[-1] - target_final

    return float(brentq(gap, 0.0, 1.0))


__all__ = [
    "OracleConfig", "ScriptedOracle", "RemoteBackend", "ScenarioView", "calibrate_oracle",
    "expected_accuracies", "solve_context_factor", "resolve_backend_url",
]
