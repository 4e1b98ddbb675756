# File: skelfit/retrieval/__init__.py
"""Template retrieval by nearest neighbor over precomputed embedding vectors."""

from .index import EmbeddingIndex, IndexItem, QuerySequence, build_index, item_score, nearest, query_sequence
