import os
import sys
import unittest

import numpy as np
import torch

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from skelfit.exception import InvalidInputException
from skelfit.skeleton import (
    DisplacementField,
    FramePose,
    KinematicTree,
    RigidTransform,
    ShapeParams,
    apply_displacement,
    deform,
    endpoint_weights,
    forward_kinematics,
    rest_transforms,
    skin_lbs,
    skin_stretchable,
)
from skelfit.skeleton import primitives, quaternion

DTYPE = torch.float64


def homogeneous(rotation, translation):
    m = np.eye(4)
    m[:3, :3] = rotation
    m[:3, 3] = translation
    return m


def oracle_transforms(tree, bone_scales, joints, root):
    """Explicit 4x4 composition down the tree: (world matrices, heads, tails)"""
    world = []
    root_m = homogeneous(quaternion.to_matrix(root.rotation).numpy(), root.translation.numpy())
    heads, tails = [], []
    for k, parent in enumerate(tree.parents):
        local = quaternion.to_matrix(tree.rest_rotations[k]).numpy() @ quaternion.to_matrix(joints[k]).numpy()
        offset = float(bone_scales[k]) * float(tree.offset_lengths[k])
        relative = homogeneous(local, [0.0, 0.0, offset])
        m = (root_m if parent is None else world[parent]) @ relative
        world.append(m)
        heads.append((m @ [0.0, 0.0, 0.0, 1.0])[:3])
        segment = float(bone_scales[k]) * float(tree.segment_lengths[k])
        tails.append((m @ [0.0, 0.0, segment, 1.0])[:3])
    return world, np.array(heads), np.array(tails)


def chain(offsets, segments):
    parents = tuple([None] + list(range(len(offsets) - 1)))
    return KinematicTree(
        parents,
        torch.tensor(offsets, dtype=DTYPE),
        torch.tensor(segments, dtype=DTYPE),
        quaternion.identity(len(offsets)),
    ).validate()


class TestForwardKinematics(unittest.TestCase):
    """Bone transforms against hand values and a matrix-composition oracle"""

    def test_identity_chain(self):
        """Two bones, identity rotations: pure z translation"""
        tree = chain([0.0, 1.0], [1.0, 1.0])
        bones = forward_kinematics(tree, torch.ones(2, dtype=DTYPE), quaternion.identity(2), RigidTransform.identity())
        np.testing.assert_allclose(bones.heads.numpy(), [[0, 0, 0], [0, 0, 1]], atol=1e-12)

    def test_rotated_first_joint(self):
        """A quarter turn about x on the first joint swings the child head to -y"""
        tree = chain([0.0, 1.0], [1.0, 1.0])
        joints = torch.stack([quaternion.from_axis_angle([1.0, 0.0, 0.0], np.pi / 2), quaternion.identity()])
        bones = forward_kinematics(tree, torch.ones(2, dtype=DTYPE), joints, RigidTransform.identity())
        np.testing.assert_allclose(bones.heads[1].numpy(), [0.0, -1.0, 0.0], atol=1e-12)

    def test_root_translation_shifts_every_head(self):
        """Identity rotations with a translated root move every head by the translation"""
        rng = np.random.default_rng(3)
        tree = primitives.random_tree(rng, 5)
        ones = torch.ones(5, dtype=DTYPE)
        base = forward_kinematics(tree, ones, quaternion.identity(5), RigidTransform.identity())
        shift = torch.tensor([0.5, -2.0, 3.0], dtype=DTYPE)
        moved = forward_kinematics(tree, ones, quaternion.identity(5), RigidTransform(quaternion.identity(), shift))
        np.testing.assert_allclose((moved.heads - base.heads).numpy(), np.tile(shift.numpy(), (5, 1)), atol=1e-12)

    def test_matches_matrix_composition_on_random_trees(self):
        """100 random trees agree with 4x4 composition within 1e-9"""
        rng = np.random.default_rng(0)
        for _ in range(100):
            k = int(rng.integers(1, 11))
            tree = primitives.random_tree(rng, k)
            scales = torch.as_tensor(rng.uniform(0.5, 2.0, size=k), dtype=DTYPE)
            joints = quaternion.random_unit(rng, k)
            root = RigidTransform(quaternion.random_unit(rng), torch.as_tensor(rng.normal(size=3), dtype=DTYPE))
            bones = forward_kinematics(tree, scales, joints, root)
            world, heads, tails = oracle_transforms(tree, scales, joints, root)
            np.testing.assert_allclose(bones.heads.numpy(), heads, atol=1e-9)
            np.testing.assert_allclose(bones.tails.numpy(), tails, atol=1e-9)
            np.testing.assert_allclose(bones.rotations.numpy(), np.array([m[:3, :3] for m in world]), atol=1e-9)

    def test_rejects_non_unit_quaternion(self):
        """Joint quaternions off the unit sphere are invalid input"""
        tree = chain([0.0, 1.0], [1.0, 1.0])
        joints = quaternion.identity(2) * 2.0
        with self.assertRaises(InvalidInputException):
            forward_kinematics(tree, torch.ones(2, dtype=DTYPE), joints, RigidTransform.identity())

    def test_rejects_length_mismatch(self):
        tree = chain([0.0, 1.0], [1.0, 1.0])
        with self.assertRaises(InvalidInputException):
            forward_kinematics(tree, torch.ones(3, dtype=DTYPE), quaternion.identity(2), RigidTransform.identity())


class TestSkinning(unittest.TestCase):
    """Endpoint weights, linear blend skinning and the stretch-aware variant"""

    def setUp(self):
        self.tree = chain([0.0], [1.0])
        self.rest = rest_transforms(self.tree)

    def test_endpoint_weights(self):
        """Projection onto the rest segment, clamped at both ends"""
        vertices = torch.tensor([[0.3, 0.0, 0.5], [0.0, 0.0, -1.0], [0.0, 0.0, 2.0], [0.0, 0.0, 0.0]], dtype=DTYPE)
        e = endpoint_weights(vertices, self.rest)
        np.testing.assert_allclose(e[:, 0].numpy(), [0.5, 0.0, 1.0, 0.0], atol=1e-15)

    def test_endpoint_zero_segment(self):
        """Bones with a zero-length segment give 0"""
        rest = rest_transforms(chain([0.0], [0.0]))
        e = endpoint_weights(torch.tensor([[0.0, 0.0, 1.0]], dtype=DTYPE), rest)
        self.assertEqual(float(e[0, 0]), 0.0)

    def test_lbs_weighted_translations(self):
        """Two pure translations blended half and half"""
        tree = chain([0.0, 1.0], [1.0, 1.0])
        bones = forward_kinematics(tree, torch.ones(2, dtype=DTYPE), quaternion.identity(2), RigidTransform.identity())
        bones = bones.__class__(
            torch.eye(3, dtype=DTYPE).repeat(2, 1, 1),
            torch.tensor([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], dtype=DTYPE),
            bones.heads,
            bones.tails,
        )
        out = skin_lbs(torch.zeros(1, 3, dtype=DTYPE), torch.tensor([[0.5, 0.5]], dtype=DTYPE), bones)
        np.testing.assert_allclose(out.numpy(), [[0.5, 0.5, 0.0]], atol=1e-15)

    def test_stretch_at_tail_and_head(self):
        """Bone scale 2 carries the tail vertex to (0,0,2) and leaves the head in place"""
        posed = forward_kinematics(
            self.tree, torch.tensor([2.0], dtype=DTYPE), quaternion.identity(1), RigidTransform.identity()
        )
        vertices = torch.tensor([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0]], dtype=DTYPE)
        weights = torch.ones(2, 1, dtype=DTYPE)
        endpoint = endpoint_weights(vertices, self.rest)
        out = skin_stretchable(vertices, weights, posed, self.rest, torch.tensor([2.0], dtype=DTYPE), endpoint)
        np.testing.assert_allclose(out.numpy(), [[0.0, 0.0, 2.0], [0.0, 0.0, 0.0]], atol=1e-15)

    def test_unit_scales_reduce_to_lbs(self):
        """100 random configurations: unit bone scales reproduce rest-relative LBS within 1e-12"""
        rng = np.random.default_rng(1)
        for _ in range(100):
            k = int(rng.integers(1, 6))
            n = int(rng.integers(1, 30))
            tree = primitives.random_tree(rng, k)
            ones = torch.ones(k, dtype=DTYPE)
            rest = rest_transforms(tree)
            root = RigidTransform(quaternion.random_unit(rng), torch.as_tensor(rng.normal(size=3), dtype=DTYPE))
            posed = forward_kinematics(tree, ones, quaternion.random_unit(rng, k), root)
            vertices = torch.as_tensor(rng.normal(size=(n, 3)), dtype=DTYPE)
            weights = torch.softmax(torch.as_tensor(rng.normal(size=(n, k)), dtype=DTYPE), dim=-1)
            stretch = skin_stretchable(vertices, weights, posed, rest, ones, endpoint_weights(vertices, rest))
            lbs = skin_lbs(vertices, weights, posed.relative_to(rest))
            np.testing.assert_allclose(stretch.numpy(), lbs.numpy(), atol=1e-12)

    def test_stretch_rejects_endpoint_shape(self):
        vertices = torch.zeros(2, 3, dtype=DTYPE)
        with self.assertRaises(InvalidInputException):
            skin_stretchable(
                vertices, torch.ones(2, 1, dtype=DTYPE), self.rest, self.rest,
                torch.ones(1, dtype=DTYPE), torch.zeros(3, 1, dtype=DTYPE),
            )


class TestDisplacement(unittest.TestCase):

    def test_zero_field_is_identity(self):
        """Fresh field with unit scale leaves vertices unchanged"""
        field = DisplacementField.initialize(hidden=16, seed=4)
        v = torch.as_tensor(np.random.default_rng(0).normal(size=(10, 3)), dtype=DTYPE)
        np.testing.assert_array_equal(apply_displacement(v, field, torch.tensor(1.0, dtype=DTYPE)).numpy(), v.numpy())

    def test_zero_field_scales(self):
        field = DisplacementField.initialize(hidden=16)
        v = torch.tensor([[1.0, 1.0, 1.0]], dtype=DTYPE)
        np.testing.assert_allclose(apply_displacement(v, field, torch.tensor(2.0, dtype=DTYPE)).numpy(), [[2.0, 2.0, 2.0]])

    def test_field_gradient_matches_finite_differences(self):
        """Autograd against central differences with h = 1e-4 on sampled weights"""
        rng = np.random.default_rng(2)
        field = DisplacementField.initialize(hidden=8, seed=1)
        weights = list(field.weights)
        weights[-1] = torch.as_tensor(rng.normal(scale=0.1, size=tuple(weights[-1].shape)), dtype=DTYPE)
        field = DisplacementField(tuple(weights), field.biases)
        v = torch.as_tensor(rng.normal(size=(6, 3)), dtype=DTYPE)
        scale = torch.tensor(1.3, dtype=DTYPE)
        params = [p.clone().requires_grad_(True) for p in field.parameters()]
        out = apply_displacement(v, DisplacementField.from_parameters(params), scale).pow(2).sum()
        grads = torch.autograd.grad(out, params)
        h = 1e-4
        for layer in range(len(params)):
            flat = params[layer].detach().view(-1)
            for index in rng.choice(flat.numel(), size=min(3, flat.numel()), replace=False):
                values = []
                for sign in (1.0, -1.0):
                    probe = [p.detach().clone() for p in params]
                    probe[layer].view(-1)[index] += sign * h
                    values.append(float(apply_displacement(v, DisplacementField.from_parameters(probe), scale).pow(2).sum()))
                numeric = (values[0] - values[1]) / (2 * h)
                analytic = float(grads[layer].view(-1)[index])
                self.assertLessEqual(abs(analytic - numeric), max(1e-6, 1e-3 * max(abs(analytic), abs(numeric))))


class TestDeform(unittest.TestCase):

    def setUp(self):
        self.shape = primitives.tube_shape(num_bones=3)
        self.params = ShapeParams.initial(self.shape, hidden=16)

    def test_rest_pose_is_canonical(self):
        """Identity pose, unit scales and a zero field keep the template"""
        out = deform(self.shape, self.params, FramePose.rest(3))
        np.testing.assert_allclose(out.numpy(), self.shape.mesh.vertices.numpy(), atol=1e-12)

    def test_root_motion_is_rigid(self):
        rotation = quaternion.from_axis_angle([0.3, 1.0, -0.2], 0.8)
        translation = torch.tensor([1.0, -0.5, 2.0], dtype=DTYPE)
        frame = FramePose(RigidTransform(rotation, translation), quaternion.identity(3))
        out = deform(self.shape, self.params, frame)
        expected = self.shape.mesh.vertices @ quaternion.to_matrix(rotation).T + translation
        np.testing.assert_allclose(out.numpy(), expected.numpy(), atol=1e-12)

    def test_matches_straight_line_evaluation(self):
        """Random small model against an independent numpy pass through the three stages"""
        rng = np.random.default_rng(5)
        shape = primitives.tube_shape(num_bones=4, rings_per_bone=1, segments=6)
        k = shape.num_bones
        field = DisplacementField.initialize(hidden=8, seed=2)
        weights = list(field.weights)
        weights[-1] = torch.as_tensor(rng.normal(scale=0.05, size=tuple(weights[-1].shape)), dtype=DTYPE)
        params = ShapeParams(
            scale=torch.tensor(1.2, dtype=DTYPE),
            bone_scales=torch.as_tensor(rng.uniform(0.7, 1.4, size=k), dtype=DTYPE),
            displacement=DisplacementField(tuple(weights), field.biases),
            skin_logits=torch.as_tensor(rng.normal(size=(shape.mesh.num_vertices, k)), dtype=DTYPE),
        )
        frame = FramePose(
            RigidTransform(quaternion.random_unit(rng), torch.as_tensor(rng.normal(size=3), dtype=DTYPE)),
            quaternion.random_unit(rng, k),
        )
        out = deform(shape, params, frame).numpy()

        # displacement
        x = shape.mesh.vertices.numpy() * 1.2
        h = x
        for i, (w, b) in enumerate(zip(params.displacement.weights, params.displacement.biases)):
            h = h @ w.numpy().T + b.numpy()
            if i < params.displacement.num_layers - 1:
                h = np.maximum(h, 0.0)
        canonical = x + h
        # bones
        scaled_tree = KinematicTree(
            shape.tree.parents, shape.tree.offset_lengths * 1.2, shape.tree.segment_lengths * 1.2, shape.tree.rest_rotations
        )
        rest_world, rest_heads, rest_tails = oracle_transforms(
            scaled_tree, np.ones(k), quaternion.identity(k), RigidTransform.identity()
        )
        posed_world, posed_heads, _ = oracle_transforms(
            scaled_tree,
            params.bone_scales.numpy(), frame.joints, frame.root,
        )
        # skinning
        w = torch.softmax(params.skin_logits, dim=-1).numpy()
        expected = np.zeros_like(canonical)
        for i, v in enumerate(canonical):
            for b in range(k):
                axis = rest_tails[b] - rest_heads[b]
                length2 = axis @ axis
                e = 0.0 if length2 == 0 else min(max((v - rest_heads[b]) @ axis / length2, 0.0), 1.0)
                s = (params.bone_scales[b].item() - 1.0) * axis
                relative = posed_world[b][:3, :3] @ rest_world[b][:3, :3].T
                expected[i] += w[i, b] * (posed_heads[b] + relative @ (e * s + v - rest_heads[b]))
        np.testing.assert_allclose(out, expected, atol=1e-10)


class TestQuadruped(unittest.TestCase):
    """Branching procedural rig"""

    def setUp(self):
        self.shape = primitives.quadruped_shape()
        self.rest = rest_transforms(self.shape.tree)

    def test_structure(self):
        tree = self.shape.tree
        self.assertEqual(tree.num_bones, 12)
        self.assertEqual(sum(1 for p in tree.parents if p == 0), 6)
        sums = self.shape.mesh.skinning.sum(dim=1).numpy()
        np.testing.assert_allclose(sums, 1.0, atol=1e-12)

    def test_legs_point_down_and_split(self):
        tails = self.rest.tails.numpy()
        heads = self.rest.heads.numpy()
        legs = [5, 7, 9, 11]
        for leg in legs:
            self.assertLess(tails[leg, 1], heads[leg, 1] - 0.5)
        self.assertAlmostEqual(tails[5, 0], -tails[7, 0], places=12)
        self.assertGreater(abs(tails[5, 0]), 0.1)

    def test_rest_pose_is_canonical(self):
        params = ShapeParams.initial(self.shape, hidden=8)
        vertices = deform(self.shape, params, FramePose.rest(12))
        np.testing.assert_allclose(vertices.detach().numpy(), self.shape.mesh.vertices.numpy(), atol=1e-12)

    def test_skips_zero_length_bones(self):
        tree = KinematicTree.from_offsets([None, 0], [0.0, 1.0], tip_length=0.0)
        shape = primitives.rigged_tubes(tree, segments=4, rings_per_bone=1)
        self.assertEqual(shape.mesh.num_vertices, 2 * 4 + 2)
        np.testing.assert_array_equal(shape.mesh.skinning[:, 1].numpy(), 0.0)


if __name__ == '__main__':
    unittest.main()
