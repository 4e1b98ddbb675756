import math
import os
import sys
import unittest

import numpy as np
import torch

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from skelfit.energy import (
    EnergyWeights,
    SceneState,
    chamfer,
    e_cue,
    e_smooth,
    e_symm,
    householder_reflect,
    total_energy,
)
from skelfit.exception import InvalidInputException
from skelfit.optim.gradcheck import make_scene
from skelfit.render import Camera, FlowMap
from skelfit.skeleton import PoseSequence, RigidTransform, ShapeParams, primitives, quaternion
from skelfit.workbench import render_observations

DTYPE = torch.float64


class TestChamfer(unittest.TestCase):

    def test_self_distance_is_zero(self):
        a = torch.as_tensor(np.random.default_rng(0).normal(size=(12, 3)), dtype=DTYPE)
        self.assertEqual(float(chamfer(a, a)), 0.0)

    def test_unit_apart(self):
        """One point each, one unit apart: 1.0 in each direction"""
        self.assertEqual(float(chamfer([[0.0, 0.0, 0.0]], [[1.0, 0.0, 0.0]])), 2.0)

    def test_matches_double_loop(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            a = rng.normal(size=(int(rng.integers(1, 21)), 3))
            b = rng.normal(size=(int(rng.integers(1, 21)), 3))
            forward = np.mean([min(((p - q) ** 2).sum() for q in b) for p in a])
            backward = np.mean([min(((p - q) ** 2).sum() for p in a) for q in b])
            self.assertAlmostEqual(float(chamfer(a, b)), forward + backward, places=12)

    def test_empty_set(self):
        with self.assertRaises(InvalidInputException):
            chamfer(torch.zeros(0, 3, dtype=DTYPE), torch.zeros(1, 3, dtype=DTYPE))


class TestCueTerms(unittest.TestCase):

    def test_perfect_fit(self):
        masks = torch.ones(2, 4, 4, dtype=DTYPE)
        flows = [FlowMap(torch.ones(4, 4, 2, dtype=DTYPE), torch.ones(4, 4, dtype=torch.bool))]
        mask_term, flow_term = e_cue(masks, masks, flows, flows)
        self.assertEqual(float(mask_term), 0.0)
        self.assertEqual(float(flow_term), 0.0)

    def test_full_mask_residual(self):
        """All ones against all zeros on a 2x2 image: mean of four unit residuals"""
        mask_term, _ = e_cue(torch.ones(1, 2, 2, dtype=DTYPE), torch.zeros(1, 2, 2, dtype=DTYPE), [], [])
        self.assertEqual(float(mask_term), 1.0)

    def test_flow_residual_on_common_pixels(self):
        """Flow off by (1, 0) on valid pixels gives 1.0; pixels invalid on one side are ignored"""
        valid = torch.ones(3, 3, dtype=torch.bool)
        mine = FlowMap(torch.zeros(3, 3, 2, dtype=DTYPE), valid)
        flow = torch.zeros(3, 3, 2, dtype=DTYPE)
        flow[..., 0] = 1.0
        partial = valid.clone()
        partial[0, 0] = False
        flow[0, 0] = 0.0
        theirs = FlowMap(flow, partial)
        masks = torch.zeros(2, 3, 3, dtype=DTYPE)
        _, flow_term = e_cue(masks, masks, [mine], [theirs])
        self.assertEqual(float(flow_term), 1.0)

    def test_no_common_valid_pixel(self):
        masks = torch.zeros(2, 2, 2, dtype=DTYPE)
        empty = FlowMap.empty(2, 2)
        _, flow_term = e_cue(masks, masks, [empty], [empty])
        self.assertEqual(float(flow_term), 0.0)

    def test_dimension_mismatch(self):
        with self.assertRaises(InvalidInputException):
            e_cue(torch.zeros(1, 2, 2, dtype=DTYPE), torch.zeros(1, 3, 3, dtype=DTYPE), [], [])


class TestPoseSmoothness(unittest.TestCase):

    def sequence(self, joints):
        t = joints.shape[0]
        return PoseSequence(quaternion.identity(t), torch.zeros(t, 3, dtype=DTYPE), joints)

    def test_constant_sequence(self):
        q = quaternion.from_axis_angle([0.0, 1.0, 1.0], 0.7)
        self.assertEqual(float(e_smooth(self.sequence(q.expand(3, 1, 4).clone()))), 0.0)

    def test_sign_flip_is_free(self):
        q = quaternion.from_axis_angle([1.0, 0.0, 0.0], 0.4)
        self.assertAlmostEqual(float(e_smooth(self.sequence(torch.stack([q, -q])[:, None]))), 0.0, places=14)

    def test_quarter_turn(self):
        """90 degrees about x between two frames: 2 - sqrt(2)"""
        joints = torch.stack([quaternion.identity(), quaternion.from_axis_angle([1.0, 0.0, 0.0], math.pi / 2)])[:, None]
        self.assertAlmostEqual(float(e_smooth(self.sequence(joints))), 2.0 - math.sqrt(2.0), places=12)

    def test_single_frame(self):
        self.assertEqual(float(e_smooth(self.sequence(quaternion.identity(1, 2)))), 0.0)


class TestSymmetry(unittest.TestCase):

    def test_axis_reflection(self):
        out = householder_reflect(torch.tensor([[1.0, 2.0, 3.0]], dtype=DTYPE), (1.0, 0.0, 0.0))
        np.testing.assert_array_equal(out.numpy(), [[-1.0, 2.0, 3.0]])

    def test_plane_points_fixed_and_involution(self):
        n = torch.tensor([1.0, 2.0, 2.0], dtype=DTYPE) / 3.0
        points = torch.as_tensor(np.random.default_rng(2).normal(size=(10, 3)), dtype=DTYPE)
        on_plane = points - (points @ n)[:, None] * n
        np.testing.assert_allclose(householder_reflect(on_plane, n).numpy(), on_plane.numpy(), atol=1e-12)
        twice = householder_reflect(householder_reflect(points, n), n)
        np.testing.assert_allclose(twice.numpy(), points.numpy(), atol=1e-12)

    def test_bad_normals(self):
        with self.assertRaises(InvalidInputException):
            householder_reflect(torch.zeros(1, 3, dtype=DTYPE), (0.0, 0.0, 0.0))
        with self.assertRaises(InvalidInputException):
            householder_reflect(torch.zeros(1, 3, dtype=DTYPE), (2.0, 0.0, 0.0))

    def test_single_point(self):
        """(1,0,0) against its mirror (-1,0,0): squared distance 4 each way"""
        self.assertEqual(float(e_symm([[1.0, 0.0, 0.0]], (1.0, 0.0, 0.0))), 8.0)

    def test_symmetric_set_and_in_plane_translation(self):
        rng = np.random.default_rng(3)
        half = rng.normal(size=(8, 3))
        mirrored = half * [-1.0, 1.0, 1.0]
        points = torch.as_tensor(np.concatenate([half, mirrored]), dtype=DTYPE)
        self.assertAlmostEqual(float(e_symm(points, (1.0, 0.0, 0.0))), 0.0, places=14)
        skewed = torch.as_tensor(rng.normal(size=(9, 3)), dtype=DTYPE)
        moved = skewed + torch.tensor([0.0, 3.0, -1.5], dtype=DTYPE)
        self.assertAlmostEqual(
            float(e_symm(skewed, (1.0, 0.0, 0.0))), float(e_symm(moved, (1.0, 0.0, 0.0))), places=10
        )


class TestTotalEnergy(unittest.TestCase):
    """Weighted sum of the four terms over a rendered scene"""

    def test_weighted_sum(self):
        state, observations = make_scene(4)
        weights = EnergyWeights(w_mask=2.0, w_flow=3.0, w_smooth=5.0, w_symm=7.0)
        b = total_energy(state, observations, weights)
        expected = 2.0 * b.mask + 3.0 * b.flow + 5.0 * b.smooth + 7.0 * b.symm
        self.assertAlmostEqual(float(b.total), float(expected), delta=1e-9)
        for term in (b.total, b.mask, b.flow, b.smooth, b.symm):
            self.assertGreaterEqual(float(term), 0.0)

    def test_all_weights_zero(self):
        state, observations = make_scene(5)
        b = total_energy(state, observations, EnergyWeights(w_mask=0.0, w_flow=0.0, w_smooth=0.0, w_symm=0.0))
        self.assertEqual(float(b.total), 0.0)

    def test_self_rendered_scene_has_zero_flow(self):
        """Observations rendered from the state itself: no flow residual, mask residual only from soft edges"""
        shape = primitives.tube_shape(num_bones=2, rings_per_bone=1, segments=6)
        params = ShapeParams.initial(shape, hidden=8)
        camera = Camera(fx=24.0, fy=24.0, cx=12.0, cy=12.0, width=24, height=24)
        root = RigidTransform(
            quaternion.from_axis_angle([1.0, 0.0, 0.0], math.pi / 2), torch.tensor([0.0, 1.0, 4.0], dtype=DTYPE)
        )
        poses = primitives.perturbed_poses(np.random.default_rng(0), 2, 3, 0.2, root)
        observations = render_observations(shape, params, poses, camera)
        state = SceneState(shape, params, poses, camera, sigma=1e-6)
        b = total_energy(state, observations, EnergyWeights(w_smooth=0.0, w_symm=0.0))
        self.assertLess(float(b.flow), 1e-20)
        self.assertLess(float(b.mask), 1e-2)

    def test_frame_count_mismatch(self):
        state, observations = make_scene(6)
        shorter = PoseSequence.from_frames(state.poses.frames[:1])
        with self.assertRaises(InvalidInputException):
            total_energy(SceneState(state.shape, state.params, shorter, state.camera), observations, EnergyWeights())


if __name__ == '__main__':
    unittest.main()
