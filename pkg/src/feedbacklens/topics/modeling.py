"""Progressive topic assignment and the refinement-round machinery.

Round one walks records in posting order; each completion may add new
phrases to the shared topic list, so later records see everything found
earlier. Round two reuses the same loop with the reviewer-refined list and
per-record retrieved demonstrations, and falls back to the catch-all topic
instead of failing when the model abstains.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

from ..errors import EmptyTopicOutput
from ..gateway import Gateway
from ..index import VectorIndex, cosine
from .phrases import OTHERS_TOPIC, TopicConfig, TopicPhrase, normalize_phrase

log = logging.getLogger(__name__)

# Pluggable summary-quality scorer: higher means the phrase summarizes the
# feedback better. The default is an embedding-cosine proxy; an external
# sequence-scoring service can be slotted in through the same signature.
QualityScorer = Callable[[str, str], float]


class CosineQualityScorer:
    """Scores a (phrase, feedback) pair by embedding cosine similarity."""

    def __init__(self, gateway: Gateway):
        self.gateway = gateway
        self._cache: dict[str, list[float]] = {}

    def _embed(self, text: str) -> list[float]:
        if text not in self._cache:
            self._cache[text] = self.gateway.embed([text])[0]
        return self._cache[text]

    def __call__(self, phrase: str, feedback_text: str) -> float:
        return cosine(self._embed(phrase), self._embed(feedback_text))


def score_topic_quality(
    phrase: str, feedback_text: str, scorer: QualityScorer
) -> float:
    return scorer(phrase, feedback_text)


class _PhraseEmbedder:
    def __init__(self, gateway: Gateway):
        self.gateway = gateway
        self.cache: dict[str, list[float]] = {}

    def get(self, phrase: str) -> list[float]:
        if phrase not in self.cache:
            self.cache[phrase] = self.gateway.embed([phrase])[0]
        return self.cache[phrase]


def render_topic_prompt(
    config: TopicConfig,
    topic_list: Sequence[str],
    demos: Sequence[tuple[str, Sequence[str]]],
    target_text: str,
) -> str:
    parts = [config.task_description.rstrip()]
    parts.append(f"Topic requirements: {config.topic_requirement}")
    if topic_list:
        parts.append("Known topics: " + "; ".join(topic_list))
    for text, topics in demos:
        parts.append(f"Feedback: {text}\nTopics: " + "; ".join(topics))
    parts.append(f"Feedback: {target_text}\nTopics:")
    return "\n\n".join(parts)


def parse_topic_completion(completion: str, max_words: int) -> list[str]:
    phrases = []
    for chunk in completion.split(";"):
        phrase = normalize_phrase(chunk, max_words=max_words)
        if phrase and phrase not in phrases:
            phrases.append(phrase)
    return phrases


def _canonicalize(
    phrase: str,
    topic_list: Sequence[str],
    embedder: _PhraseEmbedder,
    threshold: float,
) -> str:
    """Snap a near-duplicate phrase onto the existing list entry it matches."""
    if phrase in topic_list:
        return phrase
    vec = embedder.get(phrase)
    best_topic = None
    best_sim = threshold
    for topic in topic_list:
        sim = cosine(vec, embedder.get(topic))
        if sim >= best_sim and (best_topic is None or sim > best_sim):
            best_topic, best_sim = topic, sim
    return best_topic if best_topic is not None else phrase


def assign_topics(
    record_text: str,
    topic_list: Sequence[str],
    config: TopicConfig,
    gateway: Gateway,
    extra_demos: Sequence[tuple[str, Sequence[str]]] = (),
    embedder: _PhraseEmbedder | None = None,
    fallback_others: bool = False,
) -> list[str]:
    """Summarize one record into 1..max_topics_per_record phrases.

    The completion is split on ';', each piece normalized, and pieces that
    embed close enough to an existing list entry are canonicalized onto it.
    An empty completion gets one re-ask; after that it is either an
    EmptyTopicOutput error or, with fallback_others, the catch-all topic.
    """
    embedder = embedder or _PhraseEmbedder(gateway)
    demos = list(config.fixed_demos) + list(extra_demos)
    prompt = render_topic_prompt(config, topic_list, demos, record_text)
    completion = gateway.chat([("user", prompt)])
    phrases = parse_topic_completion(completion, config.max_phrase_words)
    if not phrases:
        retry = gateway.chat(
            [
                ("user", prompt),
                ("assistant", completion),
                (
                    "user",
                    "Answer with one to "
                    f"{config.max_topics_per_record} short topic phrases"
                    " separated by ';'.",
                ),
            ]
        )
        phrases = parse_topic_completion(retry, config.max_phrase_words)
    if not phrases:
        if fallback_others:
            return [OTHERS_TOPIC]
        raise EmptyTopicOutput(f"no topics parsed for record {record_text[:60]!r}")

    canonical: list[str] = []
    for phrase in phrases:
        snapped = _canonicalize(
            phrase, topic_list, embedder, config.dedupe_threshold
        )
        if snapped not in canonical:
            canonical.append(snapped)
    return canonical[: config.max_topics_per_record]


@dataclass
class StepTrace:
    record_id: str
    assigned: list[str]
    new_phrases: list[str]
    list_size: int


@dataclass
class RoundResult:
    assignments: dict[str, list[str]] = field(default_factory=dict)
    topics: list[TopicPhrase] = field(default_factory=list)
    steps: list[StepTrace] = field(default_factory=list)
    errors: list[tuple[str, str]] = field(default_factory=list)

    def topic_names(self) -> list[str]:
        return [t.normalized for t in self.topics]


def _run_round(
    records: Sequence[tuple[str, str]],
    config: TopicConfig,
    gateway: Gateway,
    demo_provider: Callable[[str, str], list[tuple[str, Sequence[str]]]] | None,
    fallback_others: bool,
) -> RoundResult:
    embedder = _PhraseEmbedder(gateway)
    result = RoundResult()
    by_name: dict[str, TopicPhrase] = {}
    for topic in config.predefined_topics:
        entry = TopicPhrase(
            normalized=topic.normalized,
            display=topic.display,
            origin=topic.origin,
            status="candidate",
            first_seen=topic.first_seen,
            count=0,
        )
        by_name[entry.normalized] = entry
        result.topics.append(entry)

    for record_id, text in records:
        topic_list = [t.normalized for t in result.topics]
        extra = demo_provider(record_id, text) if demo_provider else []
        try:
            assigned = assign_topics(
                text,
                topic_list,
                config,
                gateway,
                extra_demos=extra,
                embedder=embedder,
                fallback_others=fallback_others,
            )
        except EmptyTopicOutput as exc:
            result.errors.append((record_id, str(exc)))
            log.warning("record %s skipped: %s", record_id, exc)
            continue
        new_phrases = []
        for phrase in assigned:
            entry = by_name.get(phrase)
            if entry is None:
                entry = TopicPhrase.make(phrase, origin="emergent", first_seen=record_id)
                by_name[phrase] = entry
                result.topics.append(entry)
                new_phrases.append(phrase)
            entry.count += 1
        result.assignments[record_id] = assigned
        result.steps.append(
            StepTrace(
                record_id=record_id,
                assigned=assigned,
                new_phrases=new_phrases,
                list_size=len(result.topics),
            )
        )
    return result


def run_round_one(
    records: Sequence[tuple[str, str]], config: TopicConfig, gateway: Gateway
) -> RoundResult:
    """First modeling pass over (id, text) records already ordered by
    posting time. The topic list only ever grows; per-record failures are
    collected and the run continues."""
    return _run_round(records, config, gateway, demo_provider=None, fallback_others=False)


def run_round_two(
    records: Sequence[tuple[str, str]],
    refined_config: TopicConfig,
    gateway: Gateway,
    round_one_index: VectorIndex | None = None,
) -> RoundResult:
    """Second pass with the refined topic list. Each record's prompt gains
    up to n_extra_demos retrieved examples whose round-one topics scored at
    or above the quality threshold; records the model cannot place fall
    back to the catch-all topic."""
    provider = None
    if round_one_index is not None and refined_config.n_extra_demos > 0:
        def provider(record_id: str, text: str):
            return retrieve_extra_demos(
                text,
                round_one_index,
                refined_config.n_extra_demos,
                refined_config.quality_threshold,
                gateway,
                exclude_id=record_id,
            )
    return _run_round(
        records, refined_config, gateway, demo_provider=provider, fallback_others=True
    )


def build_round_one_index(
    gateway: Gateway,
    corpus: dict[str, str],
    assignments: dict[str, list[str]],
    scorer: QualityScorer,
) -> VectorIndex:
    """Index round-one results by feedback embedding. Each entry's payload
    keeps the text, its phrases, and a quality score (mean scorer value of
    the phrases against the text) used to gate demo retrieval."""
    index = VectorIndex()
    ids = [rid for rid in assignments if rid in corpus]
    if ids:
        vectors = gateway.embed([corpus[rid] for rid in ids])
        for rid, vec in zip(ids, vectors):
            phrases = assignments[rid]
            quality = (
                sum(scorer(p, corpus[rid]) for p in phrases) / len(phrases)
                if phrases
                else 0.0
            )
            index.add(
                rid,
                vec,
                payload={"text": corpus[rid], "topics": phrases, "quality": quality},
            )
    return index.finalize()


def retrieve_extra_demos(
    target_text: str,
    round_one_index: VectorIndex,
    n: int,
    quality_threshold: float,
    gateway: Gateway,
    exclude_id: str | None = None,
) -> list[tuple[str, list[str]]]:
    """Most similar round-one results that pass the quality gate; may
    return fewer than n."""
    if n <= 0 or len(round_one_index) == 0:
        return []
    query = gateway.embed([target_text])[0]
    hits = round_one_index.top_k(query, len(round_one_index))
    demos = []
    for entry_id, _score in hits:
        if entry_id == exclude_id:
            continue
        payload = round_one_index.get(entry_id).payload
        if payload["quality"] < quality_threshold:
            continue
        demos.append((payload["text"], list(payload["topics"])))
        if len(demos) == n:
            break
    return demos


def summarize_cluster(
    cluster, gateway: Gateway, config: TopicConfig
) -> TopicPhrase:
    """One high-level phrase per cluster. Singletons keep their phrase
    verbatim without spending a gateway call."""
    if not cluster.members:
        raise ValueError("cannot summarize an empty cluster")
    if len(cluster.members) == 1:
        return cluster.members[0]
    phrases = "; ".join(t.normalized for t in cluster.members)
    completion = gateway.chat(
        [
            (
                "user",
                "Summarize these related feedback topics into a single phrase"
                f" of at most {config.max_phrase_words} words: {phrases}\nSummary:",
            )
        ]
    )
    summary = normalize_phrase(completion, max_words=config.max_phrase_words)
    if not summary:
        summary = cluster.members[0].normalized
    return TopicPhrase.make(
        summary,
        origin="cluster_summary",
        first_seen=cluster.members[0].first_seen,
        count=sum(t.count for t in cluster.members),
    )
