"""Reviewer workflow for candidate topics.

A ReviewSession snapshots the candidate list; apply_review demands a
decision for every candidate (accept, reject, or rename:<new phrase>) and
returns the accepted set plus the rename map the caller uses to rewrite
stored assignments.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field

from ..errors import IncompleteReview
from .phrases import TopicPhrase, normalize_phrase


@dataclass
class ReviewSession:
    candidates: list[TopicPhrase]
    id: str = field(default_factory=lambda: uuid.uuid4().hex[:12])

    def candidate_names(self) -> list[str]:
        return [t.normalized for t in self.candidates]


def review_candidates(topics: list[TopicPhrase]) -> ReviewSession:
    return ReviewSession(candidates=[t for t in topics if t.status == "candidate"])


def parse_decision(raw: str) -> tuple[str, str | None]:
    value = raw.strip()
    lowered = value.lower()
    if lowered == "accept":
        return "accept", None
    if lowered == "reject":
        return "reject", None
    if lowered.startswith("rename:"):
        new = value[len("rename:"):].strip()
        if not new:
            raise ValueError("rename decision needs a new phrase")
        return "rename", new
    raise ValueError(f"bad decision {raw!r}; use accept | reject | rename:<phrase>")


def apply_review(
    session: ReviewSession, decisions: dict[str, str]
) -> tuple[list[TopicPhrase], dict[str, str]]:
    """Apply a complete decision document.

    Returns (accepted topics, rename map old-normalized -> new display).
    Renamed topics count as accepted under their new phrase. Raises
    IncompleteReview when any candidate lacks a decision.
    """
    normalized_decisions = {
        normalize_phrase(topic): raw for topic, raw in decisions.items()
    }
    missing = [
        t.normalized for t in session.candidates
        if t.normalized not in normalized_decisions
    ]
    if missing:
        raise IncompleteReview(missing)

    accepted: list[TopicPhrase] = []
    renames: dict[str, str] = {}
    for topic in session.candidates:
        action, new_phrase = parse_decision(normalized_decisions[topic.normalized])
        if action == "reject":
            topic.status = "rejected"
            continue
        if action == "rename":
            assert new_phrase is not None
            renames[topic.normalized] = new_phrase
            renamed = TopicPhrase.make(
                new_phrase,
                origin=topic.origin,
                first_seen=topic.first_seen,
                count=topic.count,
            )
            renamed.status = "accepted"
            topic.status = "rejected"
            if all(renamed.normalized != t.normalized for t in accepted):
                accepted.append(renamed)
            continue
        topic.status = "accepted"
        accepted.append(topic)
    return accepted, renames
