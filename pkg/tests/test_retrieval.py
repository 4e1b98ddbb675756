import os
import sys
import unittest

import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from skelfit.exception import InvalidInputException, RetrievalException
from skelfit.retrieval import build_index, nearest, query_sequence


class TestEmbeddingIndex(unittest.TestCase):

    def test_single_item(self):
        index = build_index([("only", [[1.0, 2.0]], None)])
        self.assertEqual(len(index), 1)
        self.assertEqual(index.dimension, 2)

    def test_duplicate_id(self):
        with self.assertRaises(InvalidInputException):
            build_index([("a", [[1.0]], None), ("a", [[2.0]], None)])

    def test_mixed_dimensions(self):
        with self.assertRaises(InvalidInputException):
            build_index([("a", [[1.0, 2.0]], None), ("b", [[1.0, 2.0, 3.0]], None)])

    def test_non_finite_vector(self):
        with self.assertRaises(InvalidInputException):
            build_index([("a", [[np.nan]], None)])


class TestNearest(unittest.TestCase):
    """Min-over-frames-and-views squared distance, ascending"""

    def test_one_dimensional_ranks(self):
        """Items at 0 and 10, query 1: scores 1 and 81"""
        index = build_index([("item0", [[0.0]], None), ("item1", [[10.0]], None)])
        ranked = nearest(index, query_sequence([[1.0]]), k=5)
        self.assertEqual(ranked, [("item0", 1.0), ("item1", 81.0)])

    def test_exact_match_ranks_first(self):
        rng = np.random.default_rng(0)
        entries = [(f"item{i}", rng.normal(size=(3, 8)), None) for i in range(6)]
        index = build_index(entries)
        query = np.vstack([rng.normal(size=(1, 8)), entries[4][1][2:3]])
        ranked = nearest(index, query_sequence(query), k=2)
        self.assertEqual(ranked[0], ("item4", 0.0))
        self.assertEqual(len(ranked), 2)

    def test_small_noise_keeps_rank_one(self):
        """100 seeded trials; noise norm below half the smallest gap between any two items"""
        rng = np.random.default_rng(3)
        entries = [(f"item{i}", rng.normal(size=(3, 8)), None) for i in range(12)]
        index = build_index(entries)
        gap = min(
            float(np.linalg.norm(u - v))
            for i, (_, a, _) in enumerate(entries)
            for _, b, _ in entries[i + 1:]
            for u in a
            for v in b
        )
        for trial in range(100):
            item = int(rng.integers(len(entries)))
            frame = entries[item][1][int(rng.integers(3))]
            direction = rng.normal(size=8)
            noise = direction / np.linalg.norm(direction) * rng.uniform(0.0, 0.49 * gap)
            ranked = nearest(index, query_sequence((frame + noise)[None]), k=1)
            self.assertEqual(ranked[0][0], f"item{item}", f"trial {trial}")

    def test_ties_break_by_id(self):
        index = build_index([("b", [[1.0]], None), ("a", [[-1.0]], None)])
        self.assertEqual([item for item, _ in nearest(index, query_sequence([[0.0]]))], ["a", "b"])

    def test_matches_brute_force(self):
        rng = np.random.default_rng(1)
        entries = [(f"{i:03d}", rng.normal(size=(int(rng.integers(1, 4)), 4)), None) for i in range(40)]
        query = rng.normal(size=(3, 4))
        expected = []
        for item, vectors, _ in entries:
            score = min(float(((q - v) ** 2).sum()) for q in query for v in vectors)
            expected.append((item, score))
        expected.sort(key=lambda pair: (pair[1], pair[0]))
        ranked = nearest(build_index(entries), query_sequence(query), k=100)
        self.assertEqual([item for item, _ in ranked], [item for item, _ in expected])
        np.testing.assert_allclose([s for _, s in ranked], [s for _, s in expected], rtol=1e-12)

    def test_uniform_rescaling_preserves_order(self):
        rng = np.random.default_rng(2)
        entries = [(f"i{i}", rng.normal(size=(2, 5)), None) for i in range(10)]
        query = rng.normal(size=(2, 5))
        plain = nearest(build_index(entries), query_sequence(query), k=10)
        scaled = nearest(build_index([(i, 3.0 * v, s) for i, v, s in entries]), query_sequence(3.0 * query), k=10)
        self.assertEqual([i for i, _ in plain], [i for i, _ in scaled])
        np.testing.assert_allclose([9.0 * s for _, s in plain], [s for _, s in scaled], rtol=1e-12)

    def test_empty_index(self):
        with self.assertRaises(RetrievalException):
            nearest(build_index([]), query_sequence([[1.0]]))

    def test_dimension_mismatch(self):
        index = build_index([("a", [[1.0, 2.0]], None)])
        with self.assertRaises(InvalidInputException):
            nearest(index, query_sequence([[1.0, 2.0, 3.0]]))


if __name__ == '__main__':
    unittest.main()
