"""Rotation algebra, FK, error functions and augmentations against independent oracles."""

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from protores.errors import DegenerateLookAt, DegenerateRotation, ShapeError
from protores.kinematics import (
    Pose,
    euler_to_matrix,
    fk_pose,
    forward_kinematics,
    geodesic_distance,
    l2_error,
    lookat_error,
    matrix_to_quaternion,
    matrix_to_rotation6d,
    mirror_pose,
    quaternion_multiply,
    quaternion_to_matrix,
    random_unit_quaternions,
    rotate_pose_about_y,
    rotation6d_to_matrix,
)
from protores.skeleton import Joint, SkeletonSpec

from conftest import small_random_quaternions


def assert_rotation_matrix(r: np.ndarray, tol: float = 1e-6):
    eye = np.eye(3)
    assert np.linalg.norm(r.T @ r - eye) < tol
    assert abs(np.linalg.det(r) - 1.0) < tol


def gram_schmidt_oracle(v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
    """Independent reconstruction: orthonormalize, then complete a right-handed frame."""
    x = v1 / np.linalg.norm(v1)
    y = v2 - np.dot(x, v2) * x
    y = y / np.linalg.norm(y)
    z = np.cross(x, y)
    return np.stack([x, y, z], axis=-1)


class TestRotation6d:
    def test_identity(self):
        r = rotation6d_to_matrix(np.array([1.0, 0, 0, 0, 1, 0]))
        assert np.allclose(r.numpy(), np.eye(3), atol=1e-12)

    def test_scale_invariance(self):
        r = rotation6d_to_matrix(np.array([2.0, 0, 0, 0, 3, 0]))
        assert np.allclose(r.numpy(), np.eye(3), atol=1e-12)

    def test_hand_evaluated_cross(self):
        r = rotation6d_to_matrix(np.array([0.0, 1, 0, 1, 0, 0])).numpy()
        expected = np.stack(
            [np.array([0.0, 1, 0]), np.array([1.0, 0, 0]), np.array([0.0, 0, -1])], axis=-1
        )
        assert np.allclose(r, expected, atol=1e-12)
        assert np.allclose(r, gram_schmidt_oracle(np.array([0.0, 1, 0]), np.array([1.0, 0, 0])),
                           atol=1e-12)

    def test_matches_gram_schmidt_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            r6 = rng.standard_normal(6)
            got = rotation6d_to_matrix(r6).numpy()
            assert np.allclose(got, gram_schmidt_oracle(r6[:3], r6[3:]), atol=1e-9)

    def test_orthonormality_batch(self):
        rng = np.random.default_rng(4)
        r6 = rng.standard_normal((500, 6))
        r = rotation6d_to_matrix(r6).numpy()
        for m in r:
            assert_rotation_matrix(m)

    def test_degenerate_zero_first_vector(self):
        with pytest.raises(DegenerateRotation) as err:
            rotation6d_to_matrix(np.array([0.0, 0, 0, 0, 1, 0]))
        assert err.value.norm is not None

    def test_degenerate_parallel(self):
        with pytest.raises(DegenerateRotation):
            rotation6d_to_matrix(np.array([1.0, 0, 0, 2.0, 0, 0]))

    def test_non_strict_stays_finite(self):
        r = rotation6d_to_matrix(np.zeros(6), strict=False)
        assert np.all(np.isfinite(r.numpy()))

    def test_round_trip(self):
        rng = np.random.default_rng(5)
        quats = random_unit_quaternions(rng, (1000,))
        r = quaternion_to_matrix(torch.from_numpy(quats))
        back = rotation6d_to_matrix(matrix_to_rotation6d(r))
        err = torch.linalg.norm((back - r).reshape(-1, 9), dim=-1)
        assert float(err.max()) < 1e-5

    def test_6d_is_first_two_columns(self):
        rng = np.random.default_rng(6)
        r = quaternion_to_matrix(torch.from_numpy(random_unit_quaternions(rng, (10,))))
        r6 = matrix_to_rotation6d(r).numpy()
        assert np.allclose(r6[:, :3], r.numpy()[:, :, 0], atol=1e-15)
        assert np.allclose(r6[:, 3:], r.numpy()[:, :, 1], atol=1e-15)
        assert np.allclose(matrix_to_rotation6d(np.eye(3)).numpy(), [1, 0, 0, 0, 1, 0])


class TestEuler:
    def test_zero_is_identity(self):
        assert np.allclose(euler_to_matrix(np.zeros(3)).numpy(), np.eye(3))

    def test_first_factor_by_hand(self):
        got = euler_to_matrix(np.array([np.pi / 2, 0.0, 0.0])).numpy()
        assert np.allclose(got, [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-12)

    def test_composition_order_oracle(self):
        def axis_factor(angle, axis):
            c, s = np.cos(angle), np.sin(angle)
            if axis == "z":
                return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
            if axis == "y":
                return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
            return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])

        rng = np.random.default_rng(7)
        for _ in range(100):
            a, b, g = rng.uniform(-np.pi, np.pi, 3)
            expected = axis_factor(a, "z") @ axis_factor(b, "y") @ axis_factor(g, "x")
            assert np.allclose(euler_to_matrix(np.array([a, b, g])).numpy(), expected,
                               atol=1e-12)


class TestQuaternion:
    def test_identity(self):
        assert np.allclose(quaternion_to_matrix(np.array([0.0, 0, 0, 1])).numpy(), np.eye(3))

    def test_z_rotation_axis_angle_oracle(self):
        got = quaternion_to_matrix(
            np.array([0.0, 0.0, np.sin(np.pi / 4), np.cos(np.pi / 4)])
        ).numpy()
        assert np.allclose(got, [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-12)

    def test_sign_invariance(self):
        rng = np.random.default_rng(8)
        q = random_unit_quaternions(rng, (1000,))
        a = quaternion_to_matrix(torch.from_numpy(q))
        b = quaternion_to_matrix(torch.from_numpy(-q))
        assert torch.allclose(a, b)

    def test_zero_quaternion_raises(self):
        with pytest.raises(DegenerateRotation):
            quaternion_to_matrix(np.zeros(4))

    def test_matrix_quaternion_round_trip(self):
        rng = np.random.default_rng(9)
        q = random_unit_quaternions(rng, (500,))
        r = quaternion_to_matrix(torch.from_numpy(q))
        back = matrix_to_quaternion(r.numpy())
        r2 = quaternion_to_matrix(torch.from_numpy(back))
        assert float((r2 - r).abs().max()) < 1e-9

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_always_orthonormal(self, seed):
        q = random_unit_quaternions(np.random.default_rng(seed), ())
        assert_rotation_matrix(quaternion_to_matrix(q).numpy(), tol=1e-12)


def naive_fk_oracle(skeleton: SkeletonSpec, root_position, rotations) -> np.ndarray:
    """Per-joint independent chain walk with explicit 4x4 products."""

    def homogeneous(r, t):
        m = np.eye(4)
        m[:3, :3] = r
        m[:3, 3] = t
        return m

    positions = np.zeros((skeleton.joint_count, 3))
    for j in range(skeleton.joint_count):
        chain = []
        k = j
        while k >= 0:
            chain.append(k)
            k = int(skeleton.parents[k])
        chain.reverse()
        m = np.eye(4)
        for k in chain:
            t = root_position if skeleton.parents[k] < 0 else skeleton.offsets[k]
            m = m @ homogeneous(rotations[k], t)
        positions[j] = m[:3, 3]
    return positions


def random_tree_skeleton(rng: np.random.Generator, joint_count: int) -> SkeletonSpec:
    zones = ["hips"] + [
        ("left-arm", "right-arm", "left-leg", "right-leg")[(i - 1) % 4]
        for i in range(1, joint_count)
    ]
    joints = [Joint("j0", None, (0.0, 0.0, 0.0), "j0", zones[0])]
    for i in range(1, joint_count):
        parent = int(rng.integers(0, i))
        offset = tuple(rng.normal(0.0, 0.3, 3))
        joints.append(Joint(f"j{i}", parent, offset, f"j{i}", zones[i]))
    return SkeletonSpec(joints)


class TestForwardKinematics:
    def test_two_joint_chain(self, tiny_skeleton):
        eye = torch.eye(3, dtype=torch.float64).repeat(5, 1, 1)
        out = forward_kinematics(tiny_skeleton, np.zeros(3), eye)
        assert np.allclose(out.positions[1].numpy(), [0.4, 0.5, 0.0])

    def test_rotated_root_by_hand(self):
        sk = SkeletonSpec([
            Joint("root", None, (0, 0, 0), "root", "hips"),
            Joint("a", 0, (1.0, 0.0, 0.0), "b", "left-arm"),
            Joint("b", 0, (1.0, 0.0, 0.0), "a", "right-arm"),
            Joint("c", 0, (0.0, -1.0, 0.0), "d", "left-leg"),
            Joint("d", 0, (0.0, -1.0, 0.0), "c", "right-leg"),
        ])
        rot = torch.eye(3, dtype=torch.float64).repeat(5, 1, 1)
        rot[0] = euler_to_matrix(np.array([np.pi / 2, 0.0, 0.0]))
        out = forward_kinematics(sk, np.zeros(3), rot)
        assert np.allclose(out.positions[1].numpy(), [0.0, 1.0, 0.0], atol=1e-12)

    def test_against_naive_oracle_random_trees(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            joint_count = int(rng.integers(5, 17))
            sk = random_tree_skeleton(rng, joint_count)
            rotations = quaternion_to_matrix(
                torch.from_numpy(random_unit_quaternions(rng, (joint_count,)))
            )
            root = rng.standard_normal(3)
            got = forward_kinematics(sk, root, rotations).positions.numpy()
            expected = naive_fk_oracle(sk, root, rotations.numpy())
            assert np.abs(got - expected).max() < 1e-5

    def test_bone_length_preservation(self, skeleton):
        rng = np.random.default_rng(11)
        rotations = quaternion_to_matrix(
            torch.from_numpy(random_unit_quaternions(rng, (skeleton.joint_count,)))
        )
        out = forward_kinematics(skeleton, rng.standard_normal(3), rotations)
        positions = out.positions.numpy()
        for j in range(1, skeleton.joint_count):
            parent = int(skeleton.parents[j])
            bone = np.linalg.norm(positions[j] - positions[parent])
            expected = np.linalg.norm(skeleton.offsets[j])
            assert abs(bone - expected) <= 1e-5 * max(expected, 1.0)

    def test_global_rotation_orthonormal(self, skeleton):
        rng = np.random.default_rng(12)
        rotations = quaternion_to_matrix(
            torch.from_numpy(random_unit_quaternions(rng, (skeleton.joint_count,)))
        )
        out = forward_kinematics(skeleton, np.zeros(3), rotations)
        for m in out.rotations.numpy():
            assert_rotation_matrix(m)

    def test_wrong_joint_count(self, skeleton):
        with pytest.raises(ShapeError):
            forward_kinematics(skeleton, np.zeros(3), torch.eye(3).repeat(3, 1, 1))


class TestErrorFunctions:
    def test_l2_examples(self):
        assert l2_error([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert l2_error([0.0, 0, 0], [1.0, 0, 0]) == 1.0
        assert l2_error([1.0, 2.0], [3.0, 5.0]) == 13.0

    def test_l2_length_mismatch(self):
        with pytest.raises(ShapeError):
            l2_error([1.0, 2.0], [1.0, 2.0, 3.0])

    def test_geodesic_identity_within_clamp(self):
        rng = np.random.default_rng(13)
        r = quaternion_to_matrix(torch.from_numpy(random_unit_quaternions(rng, ())))
        assert float(geodesic_distance(r, r)) <= 5e-4

    def test_geodesic_pi(self):
        z_pi = euler_to_matrix(np.array([np.pi, 0.0, 0.0]))
        d = float(geodesic_distance(torch.eye(3, dtype=torch.float64), z_pi))
        assert abs(d - np.pi) < 1e-3

    def test_geodesic_half_pi_trace_oracle(self):
        x_half = euler_to_matrix(np.array([0.0, 0.0, np.pi / 2]))
        d = float(geodesic_distance(torch.eye(3, dtype=torch.float64), x_half))
        assert abs(d - np.pi / 2) < 1e-6

    def test_geodesic_symmetric_and_axis_angle(self):
        rng = np.random.default_rng(14)
        for _ in range(1000):
            base = quaternion_to_matrix(torch.from_numpy(random_unit_quaternions(rng, ())))
            axis = rng.standard_normal(3)
            axis /= np.linalg.norm(axis)
            theta = rng.uniform(0.011, np.pi - 0.011)
            q = np.concatenate([axis * np.sin(theta / 2), [np.cos(theta / 2)]])
            rotated = base @ quaternion_to_matrix(torch.from_numpy(q))
            forward = float(geodesic_distance(base, rotated))
            backward = float(geodesic_distance(rotated, base))
            assert forward == backward
            assert abs(forward - theta) < 1e-4

    def test_lookat_examples(self):
        eye = torch.eye(3, dtype=torch.float64)
        origin = np.zeros(3)
        ahead = float(lookat_error([0.0, 0, 5], [0.0, 0, 1], eye, origin))
        assert ahead <= 5e-4
        behind = float(lookat_error([0.0, 0, -5], [0.0, 0, 1], eye, origin))
        assert abs(behind - np.pi) < 1e-3
        side = float(lookat_error([0.0, 5, 0], [0.0, 0, 1], eye, origin))
        assert abs(side - np.pi / 2) < 1e-6  # dot-product oracle: cos(pi/2) = 0

    def test_lookat_degenerate(self):
        eye = torch.eye(3, dtype=torch.float64)
        with pytest.raises(DegenerateLookAt):
            lookat_error([0.0, 0, 0], [0.0, 0, 1], eye, np.zeros(3))
        with pytest.raises(DegenerateLookAt):
            lookat_error([0.0, 0, 5], [0.0, 0, 0], eye, np.zeros(3))

    def test_lookat_direction_normalized_internally(self):
        eye = torch.eye(3, dtype=torch.float64)
        a = float(lookat_error([0.0, 5, 0], [0.0, 0, 1], eye, np.zeros(3)))
        b = float(lookat_error([0.0, 5, 0], [0.0, 0, 7.5], eye, np.zeros(3)))
        assert abs(a - b) < 1e-12


def central_difference(fn, x: torch.Tensor, step: float = 1e-4) -> torch.Tensor:
    grad = torch.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.numel()):
        orig = float(flat[i])
        flat[i] = orig + step
        upper = float(fn(x))
        flat[i] = orig - step
        lower = float(fn(x))
        flat[i] = orig
        gflat[i] = (upper - lower) / (2 * step)
    return grad


def max_relative_error(a: torch.Tensor, b: torch.Tensor, floor: float = 1e-6) -> float:
    denom = torch.maximum(torch.maximum(a.abs(), b.abs()), torch.tensor(floor, dtype=a.dtype))
    return float(((a - b).abs() / denom).max())


class TestGradients:
    def test_geodesic_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(15)
        target = quaternion_to_matrix(torch.from_numpy(random_unit_quaternions(rng, ())))
        predicted = quaternion_to_matrix(
            torch.from_numpy(random_unit_quaternions(rng, ()))
        ).clone().requires_grad_(True)
        geodesic_distance(target, predicted).backward()
        numeric = central_difference(
            lambda m: geodesic_distance(target, m), predicted.detach().clone()
        )
        assert max_relative_error(predicted.grad, numeric) < 1e-3

    def test_lookat_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(16)
        rotation = quaternion_to_matrix(
            torch.from_numpy(random_unit_quaternions(rng, ()))
        ).clone().requires_grad_(True)
        target = rng.standard_normal(3) * 2.0
        direction = rng.standard_normal(3)
        position = rng.standard_normal(3) * 0.1
        lookat_error(target, direction, rotation, position).backward()
        numeric = central_difference(
            lambda m: lookat_error(target, direction, m, position),
            rotation.detach().clone(),
        )
        assert max_relative_error(rotation.grad, numeric) < 1e-3

    def test_geodesic_gradient_finite_at_equal_rotations(self):
        eye = torch.eye(3, dtype=torch.float64, requires_grad=True)
        geodesic_distance(torch.eye(3, dtype=torch.float64), eye).backward()
        assert torch.all(torch.isfinite(eye.grad))


class TestAugmentations:
    def _random_pose(self, skeleton, seed=17):
        rng = np.random.default_rng(seed)
        return Pose(rng.standard_normal(3),
                    small_random_quaternions(rng, (skeleton.joint_count,)))

    def test_rotate_zero_identity(self, skeleton):
        pose = self._random_pose(skeleton)
        rotated = rotate_pose_about_y(pose, 0.0)
        assert np.allclose(rotated.root_position, pose.root_position)
        assert np.allclose(rotated.joint_rotations, pose.joint_rotations)

    def test_rotate_full_turn(self, skeleton):
        pose = self._random_pose(skeleton)
        rotated = rotate_pose_about_y(pose, 2 * np.pi)
        assert np.allclose(rotated.root_position, pose.root_position, atol=1e-6)
        # q and -q encode the same rotation
        fk_a = fk_pose(skeleton, pose).positions.numpy()
        fk_b = fk_pose(skeleton, rotated).positions.numpy()
        assert np.abs(fk_a - fk_b).max() < 1e-6

    def test_rotate_commutes_with_fk(self, skeleton):
        rng = np.random.default_rng(18)
        for _ in range(10):
            pose = Pose(rng.standard_normal(3),
                        small_random_quaternions(rng, (skeleton.joint_count,)))
            angle = rng.uniform(0, 2 * np.pi)
            c, s = np.cos(angle), np.sin(angle)
            ry = np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
            direct = fk_pose(skeleton, rotate_pose_about_y(pose, angle)).positions.numpy()
            expected = fk_pose(skeleton, pose).positions.numpy() @ ry.T
            assert np.abs(direct - expected).max() < 1e-5

    def test_mirror_involution(self, skeleton):
        pose = self._random_pose(skeleton, seed=19)
        back = mirror_pose(skeleton, mirror_pose(skeleton, pose))
        assert np.abs(back.root_position - pose.root_position).max() < 1e-6
        assert np.abs(back.joint_rotations - pose.joint_rotations).max() < 1e-6

    def test_mirror_symmetric_pose_unchanged(self, skeleton):
        pose = Pose.identity(skeleton.joint_count)
        mirrored = mirror_pose(skeleton, pose)
        assert np.abs(mirrored.root_position - pose.root_position).max() < 1e-6
        assert np.abs(mirrored.joint_rotations - pose.joint_rotations).max() < 1e-6

    def test_mirror_fk_reflection(self, skeleton):
        rng = np.random.default_rng(20)
        for _ in range(10):
            pose = Pose(rng.standard_normal(3),
                        small_random_quaternions(rng, (skeleton.joint_count,)))
            mirrored_fk = fk_pose(skeleton, mirror_pose(skeleton, pose)).positions.numpy()
            reflected = fk_pose(skeleton, pose).positions.numpy() * np.array([-1.0, 1.0, 1.0])
            assert np.abs(mirrored_fk - reflected[skeleton.mirror_indices]).max() < 1e-5


class TestQuaternionHelpers:
    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_multiply_matches_matrix_product(self, seed):
        rng = np.random.default_rng(seed)
        q1 = random_unit_quaternions(rng, ())
        q2 = random_unit_quaternions(rng, ())
        left = quaternion_to_matrix(quaternion_multiply(q1, q2))
        right = quaternion_to_matrix(q1) @ quaternion_to_matrix(q2)
        assert float((left - right).abs().max()) < 1e-12
