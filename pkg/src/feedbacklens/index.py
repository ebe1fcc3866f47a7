"""Exact cosine top-K vector store.

Nothing approximate here: the corpora this engine targets are a few
thousand rows, so an exhaustive scan is both the implementation and its
own oracle. Vectors are stored unnormalized and cosine is computed on the
fly; ranking ties break on ascending id so retrieval is deterministic.

Build then finalize: `add` entries, call `finalize()`, and the index
becomes an immutable snapshot that is freely shareable across threads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import DimensionMismatch, DuplicateId, IndexFinalized, ZeroVector


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    """Cosine similarity in [-1, 1]; rejects zero vectors and dim mismatch."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.ndim != 1 or vb.ndim != 1 or va.shape != vb.shape:
        raise DimensionMismatch(f"dims {va.shape} vs {vb.shape}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine undefined for the zero vector")
    value = float(np.dot(va, vb) / (na * nb))
    return max(-1.0, min(1.0, value))


@dataclass
class IndexEntry:
    id: str
    vector: np.ndarray
    payload: Any = None


class VectorIndex:
    """In-memory exact index over (id, vector, payload) entries."""

    def __init__(self, dim: int | None = None):
        self.dim = dim
        self._entries: list[IndexEntry] = []
        self._ids: set[str] = set()
        self._matrix: np.ndarray | None = None
        self._norms: np.ndarray | None = None
        self._finalized = False

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def finalized(self) -> bool:
        return self._finalized

    def add(self, id: str, vector: Sequence[float], payload: Any = None) -> None:
        if self._finalized:
            raise IndexFinalized("index is finalized; no further insertions")
        vec = np.asarray(vector, dtype=np.float64)
        if vec.ndim != 1:
            raise DimensionMismatch("vector must be one-dimensional")
        if self.dim is None:
            self.dim = int(vec.shape[0])
        elif vec.shape[0] != self.dim:
            raise DimensionMismatch(f"expected dim {self.dim}, got {vec.shape[0]}")
        if not np.any(vec):
            raise ZeroVector(f"zero vector rejected for id {id!r}")
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"non-finite vector for id {id!r}")
        if id in self._ids:
            raise DuplicateId(f"id {id!r} already indexed")
        self._ids.add(id)
        self._entries.append(IndexEntry(id=id, vector=vec, payload=payload))

    def finalize(self) -> "VectorIndex":
        """Freeze the index; retrieval runs against the frozen snapshot."""
        if not self._finalized:
            if self._entries:
                self._matrix = np.stack([e.vector for e in self._entries])
                self._norms = np.linalg.norm(self._matrix, axis=1)
            self._finalized = True
        return self

    def get(self, id: str) -> IndexEntry:
        for entry in self._entries:
            if entry.id == id:
                return entry
        raise KeyError(id)

    def top_k(self, query: Sequence[float], k: int) -> list[tuple[str, float]]:
        """Top-k (id, cosine) pairs: descending score, ties by ascending id."""
        if k < 0:
            raise ValueError("k must be >= 0")
        if k == 0 or not self._entries:
            return []
        q = np.asarray(query, dtype=np.float64)
        if self.dim is not None and q.shape != (self.dim,):
            raise DimensionMismatch(f"query dim {q.shape} vs index dim {self.dim}")
        qnorm = float(np.linalg.norm(q))
        if qnorm == 0.0:
            raise ZeroVector("zero query vector")
        if self._finalized and self._matrix is not None:
            scores = (self._matrix @ q) / (self._norms * qnorm)
        else:
            scores = np.array(
                [float(np.dot(e.vector, q)) / (float(np.linalg.norm(e.vector)) * qnorm)
                 for e in self._entries]
            )
        order = sorted(
            range(len(self._entries)),
            key=lambda i: (-scores[i], self._entries[i].id),
        )
        return [
            (self._entries[i].id, float(scores[i])) for i in order[: min(k, len(order))]
        ]

    # --- on-disk snapshot ----------------------------------------------------
    # Layout: magic, dim, count, then count * dim little-endian float32,
    # then an id table (utf-8 strings, length-prefixed). Payloads are not
    # persisted; callers re-attach them from their own storage.

    _MAGIC = b"FLVIDX1\x00"

    def save(self, path: str | Path) -> None:
        if not self._finalized:
            raise IndexFinalized("finalize the index before saving")
        dim = self.dim or 0
        with open(path, "wb") as fh:
            fh.write(self._MAGIC)
            fh.write(struct.pack("<II", dim, len(self._entries)))
            for entry in self._entries:
                fh.write(entry.vector.astype("<f4").tobytes())
            for entry in self._entries:
                raw = entry.id.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)

    @classmethod
    def load(cls, path: str | Path) -> "VectorIndex":
        with open(path, "rb") as fh:
            magic = fh.read(8)
            if magic != cls._MAGIC:
                raise ValueError("not an index snapshot file")
            dim, count = struct.unpack("<II", fh.read(8))
            index = cls(dim=dim or None)
            vectors = []
            for _ in range(count):
                buf = fh.read(4 * dim)
                vectors.append(np.frombuffer(buf, dtype="<f4").astype(np.float64))
            for vec in vectors:
                (size,) = struct.unpack("<I", fh.read(4))
                id_ = fh.read(size).decode("utf-8")
                index.add(id_, vec)
        return index.finalize()
