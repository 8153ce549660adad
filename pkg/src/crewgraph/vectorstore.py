"""Flat (exhaustive-scan) vector index ranked by cosine similarity."""

from __future__ import annotations

import json
import os
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptIndex, DimensionMismatch, DuplicateId

FORMAT = "crewgraph-flat-index"
VERSION = 1


@dataclass(frozen=True)
class SearchHit:
    id: str
    score: float
    payload: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"id": self.id, "score": self.score, "payload": dict(self.payload)}


class VectorIndex:
    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.ids: list[str] = []
        self.payloads: list[dict[str, str]] = []
        self._rows: list[np.ndarray] = []
        self._matrix: np.ndarray | None = None
        self._id_set: set[str] = set()

    def __len__(self) -> int:
        return len(self.ids)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VectorIndex):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.ids == other.ids
            and self.payloads == other.payloads
            and all(np.array_equal(a, b) for a, b in zip(self._rows, other._rows))
        )

    def _as_vector(self, vector: Sequence[float]) -> np.ndarray:
        arr = np.asarray(vector, dtype=np.float64)
        if arr.ndim != 1 or arr.shape[0] != self.dim:
            raise DimensionMismatch(f"expected a vector of length {self.dim}, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("vector contains non-finite values")
        return arr

    def add(self, id: str, vector: Sequence[float], payload: Mapping[str, str] | None = None) -> VectorIndex:
        arr = self._as_vector(vector)
        if id in self._id_set:
            raise DuplicateId(f"id {id!r} already in index")
        self.ids.append(id)
        self._id_set.add(id)
        self._rows.append(arr.copy())
        self.payloads.append({str(k): str(v) for k, v in (payload or {}).items()})
        self._matrix = None
        return self

    def vector(self, id: str) -> list[float]:
        return self._rows[self.ids.index(id)].tolist()

    def _scores(self, query: np.ndarray) -> np.ndarray:
        if self._matrix is None:
            self._matrix = np.vstack(self._rows) if self._rows else np.zeros((0, self.dim))
        norms = np.linalg.norm(self._matrix, axis=1) * np.linalg.norm(query)
        dots = self._matrix @ query
        with np.errstate(divide="ignore", invalid="ignore"):
            scores = np.where(norms > 0, dots / np.where(norms > 0, norms, 1.0), 0.0)
        return np.clip(scores, -1.0, 1.0)

    def search(self, query: Sequence[float], k: int) -> list[SearchHit]:
        """Top ``min(k, len(self))`` hits, best first; equal scores order by id."""
        if k < 1:
            raise ValueError("k must be positive")
        q = self._as_vector(query)
        if not self.ids:
            return []
        scores = self._scores(q)
        order = sorted(range(len(self.ids)), key=lambda i: (-scores[i], self.ids[i]))
        return [SearchHit(self.ids[i], float(scores[i]), dict(self.payloads[i])) for i in order[:k]]

    def to_document(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "dim": self.dim,
            "count": len(self.ids),
            "records": [
                {"id": i, "vector": row.tolist(), "payload": p}
                for i, row, p in zip(self.ids, self._rows, self.payloads)
            ],
        }

    def save(self, path: str | os.PathLike) -> None:
        # float repr is the shortest string that round-trips, so vectors load bit-exact
        text = json.dumps(self.to_document(), ensure_ascii=False, allow_nan=False)
        tmp = Path(f"{path}.tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str | os.PathLike) -> VectorIndex:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (ValueError, UnicodeDecodeError) as exc:
            raise CorruptIndex(f"{path}: unreadable index: {exc}") from None
        return cls.from_document(doc, source=str(path))

    @classmethod
    def from_document(cls, doc: object, source: str = "<document>") -> VectorIndex:
        if not isinstance(doc, dict) or doc.get("format") != FORMAT:
            raise CorruptIndex(f"{source}: not a crewgraph index")
        if doc.get("version") != VERSION:
            raise CorruptIndex(f"{source}: unsupported version {doc.get('version')!r}")
        try:
            index = cls(int(doc["dim"]))
            records = doc["records"]
            if len(records) != doc["count"]:
                raise CorruptIndex(f"{source}: header says {doc['count']} records, found {len(records)}")
            for rec in records:
                index.add(rec["id"], rec["vector"], rec.get("payload", {}))
        except (KeyError, TypeError, ValueError, DimensionMismatch, DuplicateId) as exc:
            raise CorruptIndex(f"{source}: {exc}") from None
        return index
