"""Topic phrase and configuration types."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

OTHERS_TOPIC = "others"

MAX_PHRASE_WORDS = 8

_TERMINAL_PUNCT = ".,:;!?"


def normalize_phrase(raw: str, max_words: int = MAX_PHRASE_WORDS) -> str:
    """Lowercase, trim, collapse whitespace, strip edge punctuation, and
    cap at max_words words."""
    text = " ".join(raw.strip().split()).strip()
    text = text.strip("\"'`")
    text = text.rstrip(_TERMINAL_PUNCT).lstrip("-*• ").strip().lower()
    words = text.split()
    if len(words) > max_words:
        words = words[:max_words]
    return " ".join(words)


@dataclass
class TopicPhrase:
    """A human-readable topic with provenance and review status."""

    normalized: str
    display: str
    origin: str = "emergent"  # predefined | emergent | cluster_summary
    status: str = "candidate"  # candidate | accepted | rejected
    first_seen: str = ""
    count: int = 0

    def __post_init__(self) -> None:
        if not self.normalized:
            raise ValueError("topic phrase must be non-empty")
        if self.origin not in ("predefined", "emergent", "cluster_summary"):
            raise ValueError(f"bad origin {self.origin!r}")
        if self.status not in ("candidate", "accepted", "rejected"):
            raise ValueError(f"bad status {self.status!r}")

    def resolve(self, status: str) -> "TopicPhrase":
        """candidate -> accepted/rejected; any other transition is a bug."""
        if self.status != "candidate":
            raise ValueError(f"topic {self.normalized!r} already {self.status}")
        if status not in ("accepted", "rejected"):
            raise ValueError(f"bad review status {status!r}")
        return replace(self, status=status)

    @classmethod
    def make(
        cls, raw: str, origin: str = "emergent", first_seen: str = "", count: int = 0
    ) -> "TopicPhrase":
        display = " ".join(raw.strip().split()).strip("\"'`").rstrip(_TERMINAL_PUNCT).strip()
        return cls(
            normalized=normalize_phrase(raw),
            display=display or normalize_phrase(raw),
            origin=origin,
            first_seen=first_seen,
            count=count,
        )


@dataclass
class TopicConfig:
    """Everything the modeling prompt needs, plus loop thresholds.

    fixed_demos are (feedback text, topic phrases) pairs shown in every
    prompt; extra demos retrieved per record in round two are appended
    after them.
    """

    task_description: str = (
        "You are summarizing user feedback about a software product into"
        " short topic phrases."
    )
    topic_requirement: str = (
        "Each topic is a concise noun phrase of at most eight words;"
        " prefer topics from the known list and introduce a new one only"
        " when nothing fits. Separate multiple topics with ';'."
    )
    predefined_topics: list[TopicPhrase] = field(default_factory=list)
    fixed_demos: list[tuple[str, list[str]]] = field(default_factory=list)
    max_topics_per_record: int = 3
    n_extra_demos: int = 0
    quality_threshold: float = 0.0
    dedupe_threshold: float = 0.90
    max_phrase_words: int = MAX_PHRASE_WORDS

    def __post_init__(self) -> None:
        if self.max_topics_per_record < 1:
            raise ValueError("max_topics_per_record must be >= 1")
        seen = set()
        for topic in self.predefined_topics:
            if topic.normalized in seen:
                raise ValueError(f"duplicate predefined topic {topic.normalized!r}")
            seen.add(topic.normalized)
