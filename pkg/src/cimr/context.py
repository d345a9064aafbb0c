"""Context state and structured feedback records carried through the loop."""

from __future__ import annotations

from dataclasses import dataclass, field

SPATIAL_MISALIGNMENT = "SPATIAL_MISALIGNMENT"
CONSTRAINT_VIOLATION = "CONSTRAINT_VIOLATION"
COUNT_MISMATCH = "COUNT_MISMATCH"
MISSING_ITEM = "MISSING_ITEM"
EXTRANEOUS_ITEM = "EXTRANEOUS_ITEM"

CATEGORIES = (
    SPATIAL_MISALIGNMENT,
    CONSTRAINT_VIOLATION,
    COUNT_MISMATCH,
    MISSING_ITEM,
    EXTRANEOUS_ITEM,
)


@dataclass(frozen=True)
class Discrepancy:
    category: str
    subject_ids: tuple[int, ...] = ()
    detail: str = ""

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown discrepancy category {self.category!r}")

    def to_json(self) -> dict:
        return {"category": self.category, "subject_ids": list(self.subject_ids),
                "detail": self.detail}

    @classmethod
    def from_json(cls, d: dict) -> "Discrepancy":
        return cls(d["category"], tuple(d.get("subject_ids", ())), d.get("detail", ""))


@dataclass(frozen=True)
class FeedbackSignal:
    """Ordered discrepancies, at most one per category. Empty means no issue."""

    discrepancies: tuple[Discrepancy, ...] = ()

    def __post_init__(self):
        cats = [d.category for d in self.discrepancies]
        if len(set(cats)) != len(cats):
            raise ValueError("feedback categories must be deduplicated")

    @classmethod
    def build(cls, items) -> "FeedbackSignal":
        """Merge raw discrepancies sharing a category, keeping first-seen order."""
        merged: dict[str, list] = {}
        for d in items:
            if d.category in merged:
                ids, details = merged[d.category]
                ids.extend(i for i in d.subject_ids if i not in ids)
                details.append(d.detail)
            else:
                merged[d.category] = [list(d.subject_ids), [d.detail]]
        return cls(tuple(
            Discrepancy(cat, tuple(ids), "; ".join(x for x in details if x))
            for cat, (ids, details) in merged.items()
        ))

    @property
    def categories(self) -> tuple[str, ...]:
        return tuple(d.category for d in self.discrepancies)

    def __len__(self):
        return len(self.discrepancies)

    def __bool__(self):
        return bool(self.discrepancies)

    def __contains__(self, category):
        return category in self.categories

    def to_json(self) -> list:
        return [d.to_json() for d in self.discrepancies]

    @classmethod
    def from_json(cls, items) -> "FeedbackSignal":
        return cls(tuple(Discrepancy.from_json(d) for d in (items or ())))


@dataclass(frozen=True)
class HistoryEntry:
    round: int
    response_summary: str
    feedback_categories: tuple[str, ...]


@dataclass(frozen=True)
class ContextState:
    """Task record: the goal line plus one history entry per finished round.

    Under the static-context ablation ``history`` stays empty while
    ``iteration`` still advances.
    """

    goal_text: str
    history: tuple[HistoryEntry, ...] = field(default=())
    iteration: int = 0

    def canonical_text(self) -> str:
        lines = [self.goal_text]
        for h in self.history:
            cats = ",".join(h.feedback_categories) if h.feedback_categories else "none"
            lines.append(f"iter {h.round}: response {h.response_summary}; feedback {cats}")
        return "\n".join(lines)
