# File: skelfit/retrieval/index.py
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np

from ..exception import InvalidInputException, RetrievalException


@dataclass(frozen=True)
class IndexItem:
    vectors: np.ndarray          # (V, D) one embedding per rendered view/pose
    shape_path: Optional[str] = None


@dataclass(frozen=True)
class EmbeddingIndex:
    dimension: int
    items: Mapping[str, IndexItem]

    def __len__(self) -> int:
        return len(self.items)

    def ids(self) -> List[str]:
        return sorted(self.items)


@dataclass(frozen=True)
class QuerySequence:
    vectors: np.ndarray  # (T, D) one embedding per input frame

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]


def _matrix(values, field: str) -> np.ndarray:
    array = np.asarray(values, dtype=np.float64)
    if array.ndim == 1:
        array = array[None, :]
    if array.ndim != 2 or array.shape[0] < 1 or array.shape[1] < 1:
        raise InvalidInputException(f"expected a nonempty (V, D) array, got shape {array.shape}", field=field)
    if not np.isfinite(array).all():
        raise InvalidInputException("non-finite embedding value", field=field)
    return array


def build_index(entries: Iterable[Tuple[str, object, Optional[str]]]) -> EmbeddingIndex:
    """Validated index from (id, vectors, shape path) triples"""
    items: Dict[str, IndexItem] = {}
    dimension = None
    for item_id, vectors, shape_path in entries:
        item_id = str(item_id)
        if item_id in items:
            raise InvalidInputException(f"duplicate item id '{item_id}'", field=f"index.{item_id}")
        matrix = _matrix(vectors, f"index.{item_id}.vectors")
        if dimension is None:
            dimension = matrix.shape[1]
        elif matrix.shape[1] != dimension:
            raise InvalidInputException(
                f"dimension {matrix.shape[1]} differs from index dimension {dimension}", field=f"index.{item_id}.vectors"
            )
        items[item_id] = IndexItem(matrix, shape_path)
    return EmbeddingIndex(dimension or 0, items)


def query_sequence(vectors) -> QuerySequence:
    return QuerySequence(_matrix(vectors, "query"))


def item_score(query: np.ndarray, vectors: np.ndarray) -> float:
    """min over query frames and stored views of the squared L2 distance"""
    diff = query[:, None, :] - vectors[None, :, :]
    return float((diff * diff).sum(-1).min())


def nearest(index: EmbeddingIndex, query: QuerySequence, k: int = 5) -> List[Tuple[str, float]]:
    """Items ranked by ascending score, ties broken by id; at most k results"""
    if len(index) == 0:
        raise RetrievalException("embedding index is empty")
    if query.dimension != index.dimension:
        raise InvalidInputException(
            f"query dimension {query.dimension} differs from index dimension {index.dimension}", field="query"
        )
    if k < 1:
        raise InvalidInputException(f"k must be >= 1, got {k}", field="k")
    scored = [(item_id, item_score(query.vectors, item.vectors)) for item_id, item in index.items.items()]
    scored.sort(key=lambda pair: (pair[1], pair[0]))
    return scored[:k]
