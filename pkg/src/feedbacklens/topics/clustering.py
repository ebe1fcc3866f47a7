"""Bottom-up agglomeration of topic phrases by embedding similarity.

Average linkage over cosine distance, merging the closest pair until the
minimum inter-cluster distance exceeds the stop threshold. Written out
by hand rather than delegated to a library so the merge order is fully
deterministic: ties break on the lowest pair of smallest member indices,
which a hand-executed trace can follow.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .phrases import TopicPhrase


@dataclass
class TopicCluster:
    members: list[TopicPhrase]
    centroid: np.ndarray
    summary: TopicPhrase | None = None
    member_indices: list[int] = field(default_factory=list)


def cosine_distance_matrix(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero embedding vector")
    unit = vectors / norms
    sims = np.clip(unit @ unit.T, -1.0, 1.0)
    return 1.0 - sims


def cluster_topics(
    topics: list[TopicPhrase],
    embeddings: list[list[float]] | np.ndarray,
    distance_threshold: float = 0.25,
) -> list[TopicCluster]:
    """Partition topics into clusters; merging stops once the closest pair
    of clusters is farther apart than distance_threshold."""
    if not topics:
        return []
    vectors = np.asarray(embeddings, dtype=np.float64)
    if vectors.shape[0] != len(topics):
        raise ValueError("one embedding per topic required")
    base = cosine_distance_matrix(vectors)

    clusters: list[list[int]] = [[i] for i in range(len(topics))]

    def linkage(a: list[int], b: list[int]) -> float:
        # average linkage over the original point distances
        return float(np.mean([base[i, j] for i in a for j in b]))

    while len(clusters) > 1:
        best: tuple[float, int, int] | None = None
        best_pair = (-1, -1)
        for x in range(len(clusters)):
            for y in range(x + 1, len(clusters)):
                d = linkage(clusters[x], clusters[y])
                lo = min(clusters[x][0], clusters[y][0])
                hi = max(clusters[x][0], clusters[y][0])
                key = (d, lo, hi)
                if best is None or key < best:
                    best = key
                    best_pair = (x, y)
        assert best is not None
        if best[0] > distance_threshold:
            break
        x, y = best_pair
        merged = sorted(clusters[x] + clusters[y])
        clusters = [c for i, c in enumerate(clusters) if i not in (x, y)]
        clusters.append(merged)
        # keep a canonical order so iteration and ties stay reproducible
        clusters.sort(key=lambda c: c[0])

    clusters.sort(key=lambda c: c[0])
    out = []
    for indices in clusters:
        member_vecs = vectors[indices]
        out.append(
            TopicCluster(
                members=[topics[i] for i in indices],
                centroid=member_vecs.mean(axis=0),
                member_indices=list(indices),
            )
        )
    return out
