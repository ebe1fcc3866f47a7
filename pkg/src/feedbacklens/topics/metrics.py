"""Topic quality metrics: pairwise NPMI coherence and the others rate.

Coherence of a topic is the mean normalized pointwise mutual information
over all pairs of its top-10 keywords, where keywords are the highest
term-frequency tokens in the topic's supporting records after stopword
removal and co-occurrence is counted at the document level across the
whole corpus.
"""

from __future__ import annotations

import logging
import math
import re
from collections import Counter

from .phrases import OTHERS_TOPIC

log = logging.getLogger(__name__)

_WORD_RE = re.compile(r"[a-z][a-z0-9'-]*")

# Small built-in stopword list; enough to keep glue words out of keywords.
STOPWORDS = frozenset(
    """a an and are as at be but by for from has have i if in into is it its
    me my no not of on or our so that the their them they this to was we were
    what when which who will with you your""".split()
)


def tokenize(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


def topic_keywords(
    assignments: dict[str, list[str]],
    corpus: dict[str, str],
    top_n: int = 10,
    stopwords: frozenset[str] = STOPWORDS,
) -> dict[str, list[str]]:
    """Top-N TF terms per topic from its supporting records; ties break
    alphabetically so the keyword list is deterministic."""
    supports: dict[str, Counter] = {}
    for record_id, topics in assignments.items():
        text = corpus.get(record_id, "")
        tokens = [t for t in tokenize(text) if t not in stopwords]
        for topic in topics:
            supports.setdefault(topic, Counter()).update(tokens)
    keywords = {}
    for topic, counts in supports.items():
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        keywords[topic] = [term for term, _ in ranked[:top_n]]
    return keywords


def npmi(w1: str, w2: str, doc_tokens: list[set[str]]) -> float:
    """Document-level NPMI in [-1, 1]. Never co-occurring pairs pin to -1;
    a pair present in every document pins to the upper bound 1."""
    n = len(doc_tokens)
    if n == 0:
        return 0.0
    d1 = sum(1 for toks in doc_tokens if w1 in toks)
    d2 = sum(1 for toks in doc_tokens if w2 in toks)
    d12 = sum(1 for toks in doc_tokens if w1 in toks and w2 in toks)
    if d12 == 0:
        return -1.0
    p1, p2, p12 = d1 / n, d2 / n, d12 / n
    if p12 == 1.0:
        return 1.0
    return math.log(p12 / (p1 * p2)) / -math.log(p12)


def coherence(
    assignments: dict[str, list[str]],
    corpus: dict[str, str],
    topics: list[str] | None = None,
    top_n_keywords: int = 10,
) -> dict[str, float]:
    """Mean pairwise NPMI per topic; topics without any supporting record
    are skipped with a warning."""
    keywords = topic_keywords(assignments, corpus, top_n=top_n_keywords)
    wanted = topics if topics is not None else sorted(keywords)
    doc_tokens = [set(tokenize(text)) for text in corpus.values()]
    scores: dict[str, float] = {}
    for topic in wanted:
        terms = keywords.get(topic, [])
        if not terms:
            log.warning("topic %r has no supporting records; skipped", topic)
            continue
        pairs = [
            (terms[i], terms[j])
            for i in range(len(terms))
            for j in range(i + 1, len(terms))
        ]
        if not pairs:
            scores[topic] = 0.0
            continue
        scores[topic] = sum(npmi(a, b, doc_tokens) for a, b in pairs) / len(pairs)
    return scores


def others_rate(assignments: dict[str, list[str]]) -> float:
    """Fraction of records whose assignment is only the catch-all topic."""
    if not assignments:
        return 0.0
    only_others = sum(
        1
        for topics in assignments.values()
        if topics and all(t.strip().lower() == OTHERS_TOPIC for t in topics)
    )
    return only_others / len(assignments)
