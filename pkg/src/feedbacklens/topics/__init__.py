"""Two-round abstractive topic modeling with a human review loop.

Round one summarizes each feedback into short phrases with a progressively
growing topic list. A reviewer then accepts/rejects/renames the candidate
phrases; the survivors are clustered, each cluster is summarized into one
higher-level phrase, and round two re-models every record with the refined
list plus quality-filtered retrieved demonstrations.
"""

from .phrases import TopicPhrase, TopicConfig, normalize_phrase, OTHERS_TOPIC
from .clustering import TopicCluster, cluster_topics
from .modeling import (
    RoundResult,
    StepTrace,
    assign_topics,
    run_round_one,
    run_round_two,
    summarize_cluster,
    score_topic_quality,
    retrieve_extra_demos,
    build_round_one_index,
    CosineQualityScorer,
)
from .review import ReviewSession, review_candidates, apply_review
from .metrics import coherence, others_rate, topic_keywords, npmi

__all__ = [
    "TopicPhrase",
    "TopicConfig",
    "TopicCluster",
    "RoundResult",
    "StepTrace",
    "ReviewSession",
    "OTHERS_TOPIC",
    "normalize_phrase",
    "assign_topics",
    "run_round_one",
    "run_round_two",
    "cluster_topics",
    "summarize_cluster",
    "score_topic_quality",
    "retrieve_extra_demos",
    "build_round_one_index",
    "CosineQualityScorer",
    "review_candidates",
    "apply_review",
    "coherence",
    "others_rate",
    "topic_keywords",
    "npmi",
]
