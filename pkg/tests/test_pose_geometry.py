import unittest

import numpy as np

from guided_pose.errors import ParameterError, ProjectionError, SolverError, ValidationError
from guided_pose.pose_geometry import (
    CameraIntrinsics,
    EvaluationRecord,
    KeypointModel,
    PoseEstimate,
    RansacParams,
    add_metric,
    epnp,
    fps_keypoints,
    model_diameter,
    pose_from_rotvec,
    project,
    projection_metric,
    ransac_pnp,
    recall_report,
    rotation_error,
    translation_error,
)
from guided_pose.synthgen import Primitive

K = CameraIntrinsics(500.0, 500.0, 320.0, 240.0)


def _cloud(seed, count=9):
    return np.random.default_rng(seed).uniform(-0.05, 0.05, size=(count, 3))


def _plane(seed, count=9, rotvec=(0.0, 0.0, 0.0)):
    """Points on a flat patch, optionally tilted out of the z = 0 plane."""
    flat = np.random.default_rng(seed).uniform(-0.05, 0.05, size=(count, 2))
    points = np.hstack([flat, np.zeros((count, 1))])
    return points @ pose_from_rotvec(rotvec, np.zeros(3)).R.T


def _flat_model():
    grid = np.stack(np.meshgrid(np.linspace(-0.05, 0.05, 5), np.linspace(-0.05, 0.05, 5)), axis=-1).reshape(-1, 2)
    vertices = np.hstack([grid, np.zeros((len(grid), 1))])
    return KeypointModel(1, _cloud(0, 4), vertices, model_diameter(vertices))


class FpsKeypointTests(unittest.TestCase):
    def test_square_corners(self):
        square = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]])
        np.testing.assert_allclose(fps_keypoints(square, 2), [[0.5, 0.5, 0.0], [0.0, 0.0, 0.0]])
        np.testing.assert_allclose(fps_keypoints(square, 1), [[0.5, 0.5, 0.0]])

    def test_each_pick_is_the_farthest_remaining_vertex(self):
        vertices = np.random.default_rng(1).normal(size=(200, 3))
        keypoints = fps_keypoints(vertices, 9)
        chosen = [vertices.mean(axis=0)]
        for _ in range(8):
            best, best_distance = None, -1.0
            for i, v in enumerate(vertices):
                distance = min(np.linalg.norm(v - c) for c in chosen)
                if distance > best_distance:
                    best, best_distance = i, distance
            chosen.append(vertices[best])
        np.testing.assert_allclose(keypoints, chosen)

    def test_bounding_box_centre(self):
        vertices = np.array([[0.0, 0.0, 0.0], [4.0, 0.0, 0.0], [4.0, 0.0, 0.0], [4.0, 2.0, 2.0]])
        np.testing.assert_allclose(fps_keypoints(vertices, 1, centre="bbox")[0], [2.0, 1.0, 1.0])

    def test_too_few_vertices(self):
        with self.assertRaises(ValidationError):
            fps_keypoints(np.zeros((5, 3)), 2)

    def test_diameter_of_a_box(self):
        box = Primitive("box", (0.03, 0.02, 0.01))
        self.assertAlmostEqual(model_diameter(box.vertices()), 2.0 * np.linalg.norm([0.03, 0.02, 0.01]))


class ProjectTests(unittest.TestCase):
    def test_optical_axis_and_offset(self):
        uv = project(np.array([[0.0, 0.0, 1.0], [0.1, 0.0, 1.0]]), PoseEstimate.identity(), K)
        np.testing.assert_allclose(uv, [[320.0, 240.0], [370.0, 240.0]])

    def test_points_on_the_camera_plane(self):
        with self.assertRaises(ProjectionError) as ctx:
            project(np.array([[0.0, 0.0, 1.0], [0.2, 0.1, 0.0]]), PoseEstimate.identity(), K)
        self.assertEqual(list(ctx.exception.indices), [1])


class EpnpTests(unittest.TestCase):
    def test_recovers_a_known_pose(self):
        for seed in range(5):
            pose = pose_from_rotvec(np.random.default_rng(seed).normal(scale=0.8, size=3), [0.02, -0.03, 0.6])
            points = _cloud(seed + 10)
            estimate = epnp(points, project(points, pose, K), K)
            self.assertLess(rotation_error(estimate.R, pose.R), 1e-5)
            self.assertLess(translation_error(estimate.t, pose.t), 1e-6)

    def test_identity_pose(self):
        points = _cloud(3) + [0.0, 0.0, 1.0]
        estimate = epnp(points, project(points, PoseEstimate.identity(), K), K)
        self.assertLess(rotation_error(estimate.R, np.eye(3)), 1e-6)
        self.assertLess(translation_error(estimate.t, np.zeros(3)), 1e-6)

    def test_three_correspondences(self):
        with self.assertRaises(ParameterError):
            epnp(_cloud(4, 3), np.zeros((3, 2)), K)

    def test_recovers_a_pose_from_coplanar_points(self):
        pose = pose_from_rotvec([0.3, -0.2, 0.5], [0.01, 0.02, 0.55])
        for seed, tilt in ((0, (0.0, 0.0, 0.0)), (1, (0.4, 0.0, 0.0)), (2, (-0.3, 0.7, 0.2))):
            points = _plane(seed, rotvec=tilt)
            estimate = epnp(points, project(points, pose, K), K)
            self.assertLess(rotation_error(estimate.R, pose.R), 1e-5, tilt)
            self.assertLess(translation_error(estimate.t, pose.t), 1e-5, tilt)

    def test_four_coplanar_points_are_enough(self):
        pose = pose_from_rotvec([-0.1, 0.25, 0.05], [0.0, -0.01, 0.6])
        points = np.array([[-0.04, -0.03, 0.0], [0.05, -0.02, 0.0], [0.03, 0.04, 0.0], [-0.02, 0.05, 0.0]])
        estimate = epnp(points, project(points, pose, K), K)
        self.assertLess(rotation_error(estimate.R, pose.R), 1e-5)

    def test_collinear_points(self):
        points = np.outer(np.linspace(-0.05, 0.05, 6), [1.0, 2.0, -0.5])
        uv = project(points, PoseEstimate(np.eye(3), [0.0, 0.0, 0.5]), K)
        with self.assertRaises(SolverError):
            epnp(points, uv, K)
        self.assertIsNone(ransac_pnp(points, uv, K))


class RansacPnpTests(unittest.TestCase):
    def setUp(self):
        self.pose = pose_from_rotvec([0.3, -0.2, 0.5], [0.01, 0.02, 0.55])
        self.points = _cloud(7)
        self.uv = project(self.points, self.pose, K)

    def test_clean_correspondences(self):
        estimate = ransac_pnp(self.points, self.uv, K)
        self.assertLess(rotation_error(estimate.R, self.pose.R), 1e-6)
        self.assertEqual(estimate.inlier_count, 9)

    def test_planted_outliers_are_rejected(self):
        noisy = self.uv.copy()
        noisy[[1, 4, 7]] += [50.0, -50.0]
        estimate = ransac_pnp(self.points, noisy, K, RansacParams(seed=3))
        self.assertIsNotNone(estimate)
        self.assertLess(rotation_error(estimate.R, self.pose.R), 1e-3)
        self.assertEqual(estimate.inlier_count, 6)

    def test_flat_object(self):
        points = _plane(5)
        uv = project(points, self.pose, K)
        estimate = ransac_pnp(points, uv, K)
        self.assertIsNotNone(estimate)
        self.assertEqual(estimate.inlier_count, 9)
        self.assertLess(rotation_error(estimate.R, self.pose.R), 1e-5)
        self.assertLess(translation_error(estimate.t, self.pose.t), 1e-6)

        noisy = uv.copy()
        noisy[[2, 6]] += [40.0, 35.0]
        estimate = ransac_pnp(points, noisy, K, RansacParams(seed=3))
        self.assertIsNotNone(estimate)
        self.assertEqual(estimate.inlier_count, 7)
        self.assertLess(rotation_error(estimate.R, self.pose.R), 1e-3)

    def test_nothing_consistent(self):
        scrambled = np.random.default_rng(9).uniform(0.0, 640.0, size=(9, 2))
        self.assertIsNone(ransac_pnp(self.points, scrambled, K, RansacParams(reprojection_threshold=0.01)))

    def test_seed_makes_runs_repeatable(self):
        noisy = self.uv.copy()
        noisy[[0, 5]] += 30.0
        a = ransac_pnp(self.points, noisy, K, RansacParams(seed=11))
        b = ransac_pnp(self.points, noisy, K, RansacParams(seed=11))
        np.testing.assert_array_equal(a.R, b.R)
        np.testing.assert_array_equal(a.t, b.t)


class MetricTests(unittest.TestCase):
    def test_identical_poses(self):
        model = Primitive("box", (0.03, 0.02, 0.01)).keypoint_model(1)
        pose = pose_from_rotvec([0.1, 0.2, 0.3], [0.0, 0.0, 0.5])
        self.assertEqual(add_metric(pose, pose, model).value, 0.0)
        self.assertTrue(add_metric(pose, pose, model).correct)

    def test_translation_offset_of_a_fifth_of_the_diameter(self):
        model = Primitive("box", (0.03, 0.02, 0.01)).keypoint_model(1)
        gt = pose_from_rotvec([0.1, 0.2, 0.3], [0.0, 0.0, 0.5])
        est = PoseEstimate(gt.R, gt.t + [0.2 * model.diameter, 0.0, 0.0])
        result = add_metric(est, gt, model)
        self.assertAlmostEqual(result.value, 0.2 * model.diameter, places=12)
        self.assertFalse(result.correct)

    def test_symmetric_sphere_ignores_rotation(self):
        model = Primitive("sphere", (0.05,)).keypoint_model(1)
        gt = pose_from_rotvec([0.0, 0.0, 0.0], [0.0, 0.0, 0.5])
        est = pose_from_rotvec([0.7, -1.1, 0.4], [0.0, 0.0, 0.5])
        result = add_metric(est, gt, model)
        self.assertLess(result.value, 0.05 * model.diameter)
        self.assertTrue(result.correct)
        asymmetric = KeypointModel(1, model.keypoints3d, model.vertices, model.diameter, symmetric=False)
        self.assertFalse(add_metric(est, gt, asymmetric).correct)

    def test_projection_shift(self):
        model = _flat_model()
        gt = PoseEstimate(np.eye(3), [0.0, 0.0, 1.0])
        for shift, correct in ((0.0, True), (6.0, False), (4.9, True)):
            est = PoseEstimate(np.eye(3), [shift / 500.0, 0.0, 1.0])
            result = projection_metric(est, gt, model, K)
            self.assertAlmostEqual(result.value, shift, places=9)
            self.assertEqual(result.correct, correct)

    def test_projection_behind_camera_is_undefined(self):
        model = _flat_model()
        result = projection_metric(PoseEstimate(np.eye(3), [0.0, 0.0, -1.0]), PoseEstimate(np.eye(3), [0.0, 0.0, 1.0]), model, K)
        self.assertFalse(result.defined)
        self.assertFalse(result.correct)


class RecallReportTests(unittest.TestCase):
    def test_all_correct(self):
        report = recall_report([EvaluationRecord(1, True, True)] * 10)
        self.assertEqual(report.per_class, {1: 100.0})

    def test_undetected_count_against_recall(self):
        records = (
            [EvaluationRecord(2, True, True)] * 4
            + [EvaluationRecord(2, True, False)] * 2
            + [EvaluationRecord(2, False, False)] * 2
        )
        report = recall_report(records)
        self.assertEqual(report.per_class[2], 50.0)
        self.assertEqual(report.annotated[2], 8)

    def test_unweighted_mean(self):
        report = recall_report([EvaluationRecord(1, True, True), EvaluationRecord(3, False, False)])
        self.assertEqual(report.mean, 50.0)

    def test_empty(self):
        self.assertEqual(recall_report([]).mean, 0.0)


if __name__ == "__main__":
    unittest.main()
