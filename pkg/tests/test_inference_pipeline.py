import math
import unittest
from collections import deque

import numpy as np

from guided_pose.dkr import Keypoints2D
from guided_pose.errors import ShapeError, ValidationError
from guided_pose.inference_pipeline import (
    ClassResult,
    PipelineConfig,
    VotingParams,
    connected_components,
    decoder_channel_count,
    describe_timings,
    format_pose_record,
    infer_poses,
    largest_component_per_class,
    parse_pose_records,
    ransac_voting,
    select_regions,
    split_decoder_output,
)
from guided_pose.pose_geometry import add_metric, pose_from_rotvec, projection_metric, rotation_error, translation_error
from guided_pose.semantic_norm import SoftSegmentation
from guided_pose.synthgen import NoiseSpec, default_scene, render_sample


def _seg(labels, num_classes=None):
    labels = np.asarray(labels)
    return SoftSegmentation.from_labels(labels, num_classes or int(labels.max()) + 2)


def _flood_fill_count(labels):
    seen = np.zeros(labels.shape, dtype=bool)
    count = 0
    for start in zip(*np.nonzero(labels)):
        if seen[start]:
            continue
        count += 1
        queue = deque([start])
        seen[start] = True
        while queue:
            y, x = queue.popleft()
            for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                if (
                    0 <= ny < labels.shape[0]
                    and 0 <= nx < labels.shape[1]
                    and not seen[ny, nx]
                    and labels[ny, nx] == labels[y, x]
                ):
                    seen[ny, nx] = True
                    queue.append((ny, nx))
    return count


def _field_towards(shape, pixels, target):
    field = np.zeros(shape + (2,))
    for x, y in pixels:
        diff = np.asarray(target, dtype=np.float64) - (x, y)
        field[y, x] = diff / np.linalg.norm(diff)
    return field


class ChannelArithmeticTests(unittest.TestCase):
    def test_thirteen_objects_nine_keypoints(self):
        self.assertEqual(decoder_channel_count(13, 9), 41)

    def test_split_accepts_only_the_exact_count(self):
        tensor = np.arange(4 * 5 * 41, dtype=np.float64).reshape(4, 5, 41)
        seg, field, conf = split_decoder_output(tensor, 13, 9)
        self.assertEqual((seg.shape[2], field.shape[2], conf.shape[2]), (14, 18, 9))
        np.testing.assert_array_equal(conf, tensor[..., 32:])
        for channels in (40, 42):
            with self.assertRaises(ShapeError):
                split_decoder_output(np.zeros((4, 5, channels)), 13, 9)


class ConnectedComponentTests(unittest.TestCase):
    def test_single_blob(self):
        labels = np.zeros((5, 5), dtype=int)
        labels[1:4, 1:3] = 1
        labeling = connected_components(_seg(labels))
        self.assertEqual(len(labeling.components), 1)
        self.assertEqual(labeling.components[0].pixel_count, 6)
        self.assertEqual(labeling.components[0].bbox, (1, 1, 2, 3))

    def test_diagonal_neighbours_are_separate(self):
        labels = np.array([[1, 0], [0, 1]])
        labeling = connected_components(_seg(labels))
        self.assertEqual(len(labeling.for_class(1)), 2)

    def test_labels_follow_first_pixel_order(self):
        labels = np.array([[0, 2, 0, 1], [0, 0, 0, 0], [1, 0, 2, 2]])
        labeling = connected_components(_seg(labels))
        self.assertEqual([c.class_id for c in labeling.components], [2, 1, 1, 2])
        self.assertEqual(labeling.labels[0, 1], 1)
        self.assertEqual(labeling.labels[2, 3], 4)

    def test_matches_flood_fill(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            labels = rng.integers(0, 3, size=(20, 25))
            labeling = connected_components(_seg(labels, 3))
            self.assertEqual(len(labeling.components), _flood_fill_count(labels))


class RegionSelectionTests(unittest.TestCase):
    def setUp(self):
        labels = np.zeros((12, 12), dtype=int)
        labels[0:5, 0:10] = 1
        labels[8, 0:3] = 1
        labels[11, 11] = 2
        self.labeling = connected_components(_seg(labels, 3))
        self.labels = labels

    def test_largest_blob_wins(self):
        regions = largest_component_per_class(self.labeling, min_component_pixels=2)
        self.assertEqual(int(regions[1].sum()), 50)
        self.assertNotIn(2, regions)

    def test_other_strategies(self):
        second = select_regions(self.labeling, 2, "second")
        self.assertEqual(int(second[1].sum()), 3)
        union = select_regions(self.labeling, 1, "all")
        self.assertEqual(int(union[1].sum()), 53)
        self.assertEqual(int(union[2].sum()), 1)

    def test_equal_blobs_keep_the_first_label(self):
        labels = np.zeros((3, 7), dtype=int)
        labels[:, 0:2] = 1
        labels[:, 4:6] = 1
        regions = largest_component_per_class(connected_components(_seg(labels)), 1)
        self.assertTrue(regions[1][0, 0])
        self.assertFalse(regions[1][0, 4])


class RansacVotingTests(unittest.TestCase):
    def test_perfect_field(self):
        pixels = np.array([(x, y) for y in range(10) for x in range(10)])
        field = _field_towards((10, 10), pixels, (25.0, -7.5))
        result = ransac_voting(pixels, field, VotingParams(seed=1))
        np.testing.assert_allclose(result.points[0], [25.0, -7.5], atol=1e-6)
        self.assertTrue(result.valid[0])

    def test_planted_outliers(self):
        rng = np.random.default_rng(2)
        pixels = np.array([(x, y) for y in range(20) for x in range(20)])
        field = _field_towards((20, 20), pixels, (30.0, 12.0))
        for x, y in pixels[rng.random(len(pixels)) < 0.2]:
            angle = rng.uniform(-math.pi, math.pi)
            field[y, x] = (math.cos(angle), math.sin(angle))
        result = ransac_voting(pixels, field, VotingParams(seed=4))
        self.assertLess(np.linalg.norm(result.points[0] - [30.0, 12.0]), 0.5)

    def test_two_pixels_intersect_once(self):
        s = 1.0 / math.sqrt(2.0)
        field = np.zeros((1, 5, 2))
        field[0, 0] = (s, s)
        field[0, 4] = (-s, s)
        result = ransac_voting(np.array([[0, 0], [4, 0]]), field)
        np.testing.assert_allclose(result.points[0], [2.0, 2.0], atol=1e-9)

    def test_parallel_field_is_flagged(self):
        pixels = np.array([(x, y) for y in range(3) for x in range(3)])
        field = np.zeros((3, 3, 2))
        field[..., 0] = 1.0
        self.assertFalse(ransac_voting(pixels, field).valid[0])

    def test_same_seed_same_answer(self):
        rng = np.random.default_rng(5)
        pixels = np.array([(x, y) for y in range(8) for x in range(8)])
        field = rng.normal(size=(8, 8, 4))
        a = ransac_voting(pixels, field, VotingParams(seed=9), class_id=3)
        b = ransac_voting(pixels, field, VotingParams(seed=9), class_id=3)
        np.testing.assert_array_equal(a.points, b.points)


class InferPosesTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.scene = default_scene()
        cls.sample = render_sample(cls.scene, NoiseSpec())

    def _infer(self, sample, **cfg):
        return infer_poses(
            sample.seg, sample.field, sample.raw_conf, sample.models, self.scene.intrinsics, PipelineConfig(**cfg)
        )

    def test_exact_outputs_recover_every_pose(self):
        for mode in ("dkr", "rv"):
            result = self._infer(self.sample, mode=mode)
            self.assertEqual([r.class_id for r in result.results], [1, 2, 3])
            for r in result.results:
                gt = self.scene.object_for(r.class_id).pose
                self.assertEqual(r.status, "ok", mode)
                self.assertLess(rotation_error(r.pose.R, gt.R), 1e-4, mode)
                self.assertLess(translation_error(r.pose.t, gt.t), 1e-5, mode)
            self.assertEqual(set(result.timings), {"cc", "keypoints", "pnp"})

    def test_noisy_field_with_oracle_confidences(self):
        sample = render_sample(self.scene, NoiseSpec(angular_sigma=0.02, seed=0))
        result = self._infer(sample)
        for r in result.results:
            gt = self.scene.object_for(r.class_id).pose
            model = sample.models[r.class_id]
            self.assertTrue(add_metric(r.pose, gt, model).correct)
            self.assertTrue(projection_metric(r.pose, gt, model, self.scene.intrinsics).correct)

    def test_class_results_ignore_pixels_outside_their_region(self):
        regions = select_regions(connected_components(self.sample.seg), PipelineConfig().min_component_pixels)
        baseline = {
            mode: {r.class_id: format_pose_record(r) for r in self._infer(self.sample, mode=mode).results}
            for mode in ("dkr", "rv")
        }
        rng = np.random.default_rng(6)
        for class_id, region in sorted(regions.items()):
            outside = ~region
            field = self.sample.field.copy()
            raw_conf = self.sample.raw_conf.copy()
            field[outside] = rng.normal(size=field[outside].shape)
            raw_conf[outside] = rng.normal(scale=3.0, size=raw_conf[outside].shape)
            for mode in ("dkr", "rv"):
                result = infer_poses(
                    self.sample.seg, field, raw_conf, self.sample.models, self.scene.intrinsics, PipelineConfig(mode=mode)
                )
                records = {r.class_id: format_pose_record(r) for r in result.results}
                self.assertEqual(records[class_id], baseline[mode][class_id], (class_id, mode))

    def test_thread_count_does_not_change_results(self):
        single = infer_poses(
            self.sample.seg, self.sample.field, self.sample.raw_conf, self.sample.models, self.scene.intrinsics, workers=1
        )
        pooled = infer_poses(
            self.sample.seg, self.sample.field, self.sample.raw_conf, self.sample.models, self.scene.intrinsics, workers=4
        )
        for a, b in zip(single.results, pooled.results):
            self.assertEqual(format_pose_record(a), format_pose_record(b))

    def test_empty_segmentation(self):
        seg = SoftSegmentation.from_labels(np.zeros((16, 16), dtype=int), 2)
        result = infer_poses(seg, np.zeros((16, 16, 18)), np.zeros((16, 16, 9)), {}, self.scene.intrinsics)
        self.assertEqual(result.results, ())

    def test_unknown_class(self):
        models = {1: self.sample.models[1]}
        with self.assertRaises(ValidationError):
            infer_poses(self.sample.seg, self.sample.field, self.sample.raw_conf, models, self.scene.intrinsics)

    def test_channel_mismatch(self):
        with self.assertRaises(ShapeError):
            infer_poses(
                self.sample.seg, self.sample.field[..., :-2], self.sample.raw_conf, self.sample.models, self.scene.intrinsics
            )


class PoseRecordTests(unittest.TestCase):
    def test_records_read_back_exactly(self):
        pose = pose_from_rotvec([0.1, -0.4, 0.25], [0.01, -0.02, 0.55])
        keypoints = Keypoints2D(np.random.default_rng(0).uniform(0, 320, size=(9, 2)), np.ones(9, dtype=bool))
        line = format_pose_record(ClassResult(4, keypoints, pose, "ok"))
        record = parse_pose_records(line + "\n")[0]
        self.assertEqual(record.class_id, 4)
        np.testing.assert_array_equal(record.pose.R, pose.R)
        np.testing.assert_array_equal(record.pose.t, pose.t)
        np.testing.assert_array_equal(record.keypoints, keypoints.points)

    def test_failed_pose_reads_as_none(self):
        line = format_pose_record(ClassResult(2, Keypoints2D.missing(9), None, "pnp_failed"))
        record = parse_pose_records(line)[0]
        self.assertIsNone(record.pose)
        self.assertEqual(record.status, "pnp_failed")

    def test_malformed_records(self):
        for text in ("class 1 R 1 0 0", "class x R" + " 0" * 9 + " t 0 0 0 keypoints 1 2 status ok"):
            with self.assertRaises(ValidationError):
                parse_pose_records(text)

    def test_timing_lines(self):
        self.assertEqual(describe_timings({"pnp": 0.0015, "cc": 0.002}), ["timing.cc_ms=2.000", "timing.pnp_ms=1.500"])


if __name__ == "__main__":
    unittest.main()
