import itertools
import math
import os
import sys
import unittest

import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from skelfit.exception import InvalidInputException, MetricException, SkelfitException, ValidationException
from skelfit.metrics import (
    MetricReport,
    joint_cd,
    lap_solve,
    mean_chamfer,
    miou,
    scale_search,
    skinning_distance,
    union_bounds,
    voxelize,
)
from skelfit.skeleton import primitives


def cube(lo=0.0, hi=1.0, shift=(0.0, 0.0, 0.0)):
    mesh = primitives.cube_mesh(lo, hi)
    return mesh.vertices.numpy() + np.asarray(shift), mesh.faces.numpy()


def brute_force_cost(matrix):
    rows, cols = matrix.shape
    if rows > cols:
        return brute_force_cost(matrix.T)
    return min(sum(matrix[r, c] for r, c in enumerate(perm)) for perm in itertools.permutations(range(cols), rows))


class TestVoxelize(unittest.TestCase):
    """Majority vote of ray parity along the three axes"""

    def test_unit_cube_fills_grid(self):
        vertices, faces = cube()
        grid = voxelize(vertices, faces, ([0.0] * 3, [1.0] * 3), 4)
        self.assertEqual(grid.count(), 64)

    def test_mesh_outside_bounds(self):
        vertices, faces = cube(shift=(5.0, 0.0, 0.0))
        grid = voxelize(vertices, faces, ([0.0] * 3, [1.0] * 3), 8)
        self.assertEqual(grid.count(), 0)

    def test_single_cell(self):
        vertices, faces = cube()
        grid = voxelize(vertices, faces, ([0.25] * 3, [0.75] * 3), 1)
        self.assertEqual(grid.count(), 1)

    def test_degenerate_bounds(self):
        vertices, faces = cube()
        with self.assertRaises(InvalidInputException):
            voxelize(vertices, faces, ([0.0, 0.0, 1.0], [1.0, 1.0, 1.0]), 4)


class TestIoU(unittest.TestCase):

    def test_identical_and_disjoint(self):
        a_v, a_f = cube()
        b_v, b_f = cube(shift=(2.0, 0.0, 0.0))
        bounds = union_bounds(a_v, b_v)
        a = voxelize(a_v, a_f, bounds, 32)
        b = voxelize(b_v, b_f, bounds, 32)
        self.assertEqual(miou(a, a), 1.0)
        self.assertEqual(miou(a, b), 0.0)

    def test_both_empty(self):
        v, f = cube(shift=(5.0, 5.0, 5.0))
        grid = voxelize(v, f, ([0.0] * 3, [1.0] * 3), 4)
        self.assertEqual(miou(grid, grid), 1.0)

    def test_half_overlap(self):
        """Unit cubes sharing half their volume: 1/3"""
        a_v, a_f = cube()
        b_v, b_f = cube(shift=(0.5, 0.0, 0.0))
        bounds = (np.array([0.0, 0.0, 0.0]), np.array([1.5, 1.0, 1.0]))
        value = miou(voxelize(a_v, a_f, bounds, 64), voxelize(b_v, b_f, bounds, 64))
        self.assertAlmostEqual(value, 1.0 / 3.0, delta=1.0 / 64)

    def test_grid_mismatch(self):
        v, f = cube()
        with self.assertRaises(InvalidInputException):
            miou(voxelize(v, f, union_bounds(v), 8), voxelize(v, f, union_bounds(v), 16))


class TestPointMetrics(unittest.TestCase):

    def test_mean_chamfer(self):
        rng = np.random.default_rng(0)
        points = rng.normal(size=(10, 3))
        self.assertEqual(mean_chamfer(points, points), 0.0)
        self.assertEqual(mean_chamfer([[0.0, 0.0, 0.0]], [[1.0, 0.0, 0.0]]), 2.0)
        with self.assertRaises(InvalidInputException):
            mean_chamfer(np.zeros((0, 3)), points)

    def test_joint_distance(self):
        """Unsquared: single joints one unit apart give 2.0"""
        joints = np.random.default_rng(1).normal(size=(6, 3))
        self.assertEqual(joint_cd(joints, joints), 0.0)
        self.assertEqual(joint_cd([[0.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]]), 2.0)

    def test_joint_distance_brute_force(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            a = rng.normal(size=(int(rng.integers(1, 11)), 3))
            b = rng.normal(size=(int(rng.integers(1, 11)), 3))
            forward = np.mean([min(np.linalg.norm(p - q) for q in b) for p in a])
            backward = np.mean([min(np.linalg.norm(p - q) for p in a) for q in b])
            self.assertAlmostEqual(joint_cd(a, b), forward + backward, places=12)


class TestAssignment(unittest.TestCase):

    def test_examples(self):
        self.assertEqual(lap_solve([[0.0, 5.0], [5.0, 0.0]]), ([(0, 0), (1, 1)], 0.0))
        self.assertEqual(lap_solve([[1.0, 2.0], [3.0, 1.0]]), ([(0, 0), (1, 1)], 2.0))

    def test_matches_exhaustive_search(self):
        """Square and rectangular matrices up to 7x7 against factorial enumeration"""
        rng = np.random.default_rng(3)
        for _ in range(300):
            rows, cols = int(rng.integers(1, 8)), int(rng.integers(1, 8))
            matrix = rng.uniform(0.0, 10.0, size=(rows, cols))
            result = lap_solve(matrix)
            self.assertEqual(len(result.pairs), min(rows, cols))
            self.assertAlmostEqual(result.cost, brute_force_cost(matrix), places=9)

    def test_non_finite(self):
        with self.assertRaises(InvalidInputException):
            lap_solve([[1.0, math.inf]])


class TestSkinningDistance(unittest.TestCase):

    def setUp(self):
        rng = np.random.default_rng(4)
        self.vertices = rng.normal(size=(30, 3))
        self.weights = rng.dirichlet(np.ones(3), size=30)

    def test_self_distance(self):
        self.assertEqual(skinning_distance(self.vertices, self.weights, self.vertices, self.weights), 0.0)

    def test_label_permutation(self):
        """Swapping bone labels on one side changes nothing"""
        swapped = self.weights[:, [2, 0, 1]]
        self.assertEqual(skinning_distance(self.vertices, self.weights, self.vertices, swapped), 0.0)

    def test_matches_exhaustive_matching(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            kp, kr = int(rng.integers(1, 6)), int(rng.integers(1, 6))
            pv, rv = rng.normal(size=(25, 3)), rng.normal(size=(25, 3))
            pw, rw = rng.dirichlet(np.ones(kp), size=25), rng.dirichlet(np.ones(kr), size=25)
            pred_sets = [pv[pw.argmax(1) == k] for k in range(kp) if (pw.argmax(1) == k).any()]
            ref_sets = [rv[rw.argmax(1) == k] for k in range(kr) if (rw.argmax(1) == k).any()]
            cost = np.array([[mean_chamfer(p, r) for r in ref_sets] for p in pred_sets])
            expected = brute_force_cost(cost) / min(cost.shape)
            self.assertAlmostEqual(skinning_distance(pv, pw, rv, rw), expected, places=10)

    def test_weight_shape_mismatch(self):
        with self.assertRaises(InvalidInputException):
            skinning_distance(self.vertices, self.weights[:5], self.vertices, self.weights)


class TestScaleSearch(unittest.TestCase):

    def setUp(self):
        self.vertices, self.faces = cube(-0.5, 0.5)
        self.ref = voxelize(self.vertices, self.faces, union_bounds(self.vertices), 32)
        self.step = math.log(1.5) / 10

    def test_identical_shapes(self):
        scale, iou = scale_search(self.vertices, self.faces, self.ref)
        self.assertLessEqual(abs(math.log(scale)), self.step + 1e-9)
        self.assertEqual(iou, 1.0)

    def test_doubled_prediction(self):
        scale, _ = scale_search(2.0 * self.vertices, self.faces, self.ref)
        self.assertLessEqual(abs(math.log(scale / 0.5)), self.step + 1e-9)

    def test_single_step(self):
        scale, iou = scale_search(self.vertices, self.faces, self.ref, steps=1)
        grid = voxelize(self.vertices * scale, self.faces, (self.ref.lo, self.ref.hi), self.ref.resolution)
        self.assertEqual(iou, miou(grid, self.ref))

    def test_rejects_zero_steps(self):
        with self.assertRaises(InvalidInputException):
            scale_search(self.vertices, self.faces, self.ref, steps=0)


class TestMetricReport(unittest.TestCase):

    def test_row_follows_header(self):
        report = MetricReport(0.5, 0.25, 0.125, 1.0, 2.0).validate()
        self.assertEqual(MetricReport.header(), "miou,mcham,joint,skinning,reanim")
        self.assertEqual(report.row(), "0.5,0.25,0.125,1,2")
        self.assertEqual(report.as_dict()["joint"], 0.125)

    def test_rejects_out_of_range(self):
        with self.assertRaises(MetricException):
            MetricReport(1.5, 0.0, 0.0, 0.0, 0.0).validate()
        with self.assertRaises(MetricException):
            MetricReport(0.5, -1.0, 0.0, 0.0, 0.0).validate()

    def test_nan_is_a_runtime_failure(self):
        with self.assertRaises(MetricException) as caught:
            MetricReport(0.5, 0.0, float("nan"), 0.0, 0.0).validate()
        self.assertIsInstance(caught.exception, SkelfitException)
        self.assertNotIsInstance(caught.exception, ValidationException)
        self.assertEqual(caught.exception.error_code, "METRIC_ERROR")


if __name__ == '__main__':
    unittest.main()
