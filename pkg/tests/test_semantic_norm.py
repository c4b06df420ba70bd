import math
import unittest

import numpy as np

from guided_pose.errors import ParameterError, ShapeError, StatisticsError, ValidationError
from guided_pose.gradcheck import check_case, numerical_gradient
from guided_pose.semantic_norm import (
    ModulationTable,
    SoftSegmentation,
    clade_forward,
    clade_normalize,
    clade_normalize_vjp,
    clade_vjp,
    guided_sample,
    temperature_softmax,
)
from guided_pose import gradcheck


def _pixel(values):
    return np.asarray(values, dtype=np.float64).reshape(1, 1, -1)


class TemperatureSoftmaxTests(unittest.TestCase):
    def test_equal_logits_split_evenly(self):
        np.testing.assert_allclose(temperature_softmax(_pixel([0.0, 0.0]), tau=1.0).probs.ravel(), [0.5, 0.5])

    def test_large_temperature_saturates(self):
        probs = temperature_softmax(_pixel([1.0, 0.0]), tau=100.0).probs.ravel()
        self.assertGreater(probs[0], 1.0 - 1e-6)

    def test_direct_evaluation(self):
        probs = temperature_softmax(_pixel([2.0, 1.0]), tau=1.0).probs.ravel()
        expected = np.exp([2.0, 1.0]) / np.exp([2.0, 1.0]).sum()
        np.testing.assert_allclose(probs, expected, atol=1e-12)
        np.testing.assert_allclose(probs, [0.7311, 0.2689], atol=1e-4)

    def test_huge_logits_do_not_overflow(self):
        probs = temperature_softmax(_pixel([1000.0, 999.0, -1000.0]), tau=10.0).probs
        self.assertTrue(np.all(np.isfinite(probs)))
        np.testing.assert_allclose(probs.sum(axis=-1), 1.0)

    def test_invariant_to_per_pixel_shift(self):
        raw = np.random.default_rng(3).normal(size=(3, 4, 5))
        shift = np.random.default_rng(4).normal(size=(3, 4, 1))
        np.testing.assert_allclose(temperature_softmax(raw).probs, temperature_softmax(raw + shift).probs, atol=1e-12)

    def test_non_positive_temperature_is_rejected(self):
        for tau in (0.0, -1.0):
            with self.assertRaises(ParameterError):
                temperature_softmax(_pixel([0.0, 1.0]), tau=tau)

    def test_vjp_matches_finite_differences(self):
        report = gradcheck.run_gradcheck(["temperature_softmax"], instances=3, seed=11)
        self.assertTrue(report.passed, report)


class SoftSegmentationTests(unittest.TestCase):
    def test_needs_background_and_one_class(self):
        with self.assertRaises(ShapeError):
            SoftSegmentation(np.ones((2, 2, 1)))

    def test_validate_checks_class_sums(self):
        with self.assertRaises(ValidationError):
            SoftSegmentation(np.full((2, 2, 2), 0.6)).validate()
        SoftSegmentation(np.full((2, 2, 2), 0.5)).validate()

    def test_argmax_ties_go_to_lowest_class(self):
        seg = SoftSegmentation(np.full((1, 1, 3), 1.0 / 3.0))
        self.assertEqual(int(seg.labels[0, 0]), 0)

    def test_from_labels_is_one_hot(self):
        labels = np.array([[0, 1], [2, 1]])
        seg = SoftSegmentation.from_labels(labels, 3)
        np.testing.assert_array_equal(seg.labels, labels)
        np.testing.assert_array_equal(seg.confidence, np.ones((2, 2)))


class GuidedSampleTests(unittest.TestCase):
    def setUp(self):
        self.table = ModulationTable(np.array([[2.0], [5.0]]), np.array([[0.0], [1.0]]))

    def test_one_hot_selects_a_row(self):
        gamma_bar, beta_bar = guided_sample(SoftSegmentation(_pixel([1.0, 0.0])), self.table)
        self.assertEqual(float(gamma_bar[0, 0, 0]), 2.0)
        self.assertEqual(float(beta_bar[0, 0, 0]), 0.0)

    def test_soft_pixel_blends_rows(self):
        gamma_bar, _ = guided_sample(SoftSegmentation(_pixel([0.5, 0.5])), self.table)
        self.assertAlmostEqual(float(gamma_bar[0, 0, 0]), 3.5)

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(5)
        probs = rng.random((3, 4, 3))
        table = ModulationTable(rng.normal(size=(3, 6)), rng.normal(size=(3, 6)))
        gamma_bar, beta_bar = guided_sample(SoftSegmentation(probs), table)
        for y in range(3):
            for x in range(4):
                for k in range(6):
                    g = sum(probs[y, x, l] * table.gamma[l, k] for l in range(3))
                    b = sum(probs[y, x, l] * table.beta[l, k] for l in range(3))
                    self.assertAlmostEqual(gamma_bar[y, x, k], g, delta=1e-6)
                    self.assertAlmostEqual(beta_bar[y, x, k], b, delta=1e-6)

    def test_linear_in_segmentation(self):
        rng = np.random.default_rng(6)
        probs = rng.random((2, 2, 3))
        table = ModulationTable(rng.normal(size=(3, 2)), rng.normal(size=(3, 2)))
        base, _ = guided_sample(SoftSegmentation(probs), table)
        scaled, _ = guided_sample(SoftSegmentation(2.5 * probs), table)
        np.testing.assert_allclose(scaled, 2.5 * base, atol=1e-12)

    def test_class_count_mismatch_is_a_shape_error(self):
        with self.assertRaises(ShapeError):
            guided_sample(SoftSegmentation(np.full((1, 1, 3), 1.0 / 3.0)), self.table)

    def test_adding_a_class_adds_two_values_per_channel(self):
        table = ModulationTable.initial(14, 64)
        grown = table.with_added_class()
        self.assertEqual(grown.num_parameters - table.num_parameters, 2 * 64)
        np.testing.assert_array_equal(grown.gamma[-1], np.ones(64))
        np.testing.assert_array_equal(grown.beta[-1], np.zeros(64))


class CladeNormalizeTests(unittest.TestCase):
    def test_constant_channel_returns_shift(self):
        x = np.full((3, 3, 1), 4.0)
        out = clade_normalize(x, np.full_like(x, 7.0), np.full_like(x, -2.0))
        np.testing.assert_allclose(out, -2.0)

    def test_identity_modulation_is_instance_norm(self):
        x = np.random.default_rng(7).normal(loc=3.0, scale=2.0, size=(6, 5, 4))
        out = clade_normalize(x, np.ones_like(x), np.zeros_like(x))
        np.testing.assert_allclose(out.mean(axis=(0, 1)), 0.0, atol=1e-10)
        np.testing.assert_allclose(out.var(axis=(0, 1)), 1.0, atol=1e-4)

    def test_matches_two_pass_statistics_oracle(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(5, 4, 3))
        gamma_bar, beta_bar = rng.normal(size=x.shape), rng.normal(size=x.shape)
        out = clade_normalize(x, gamma_bar, beta_bar)
        for k in range(3):
            values = [x[y, c, k] for y in range(5) for c in range(4)]
            mean = sum(values) / len(values)
            var = sum((v - mean) ** 2 for v in values) / len(values)
            expected = gamma_bar[..., k] * (x[..., k] - mean) / math.sqrt(var + 1e-5) + beta_bar[..., k]
            np.testing.assert_allclose(out[..., k], expected, atol=1e-5)

    def test_single_position_has_no_statistics(self):
        x = np.ones((1, 1, 2))
        with self.assertRaises(StatisticsError):
            clade_normalize(x, x, x)

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            clade_normalize(np.ones((2, 2, 1)), np.ones((2, 2, 2)), np.ones((2, 2, 1)))


class CladeVjpTests(unittest.TestCase):
    def _instance(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(4, 4, 2))
        seg = SoftSegmentation(rng.dirichlet(np.ones(3), size=(4, 4)))
        table = ModulationTable(1.0 + 0.2 * rng.normal(size=(3, 2)), rng.normal(size=(3, 2)))
        return x, seg, table

    def test_zero_upstream_gives_zero_cotangents(self):
        x, seg, table = self._instance(1)
        c = clade_vjp(x, seg, table, np.zeros((4, 4, 2)))
        for value in (c.x, c.gamma_bar, c.beta_bar, c.seg, c.gamma, c.beta):
            np.testing.assert_array_equal(value, 0.0)

    def test_shift_cotangent_is_the_upstream(self):
        x, seg, table = self._instance(2)
        upstream = np.random.default_rng(3).normal(size=(4, 4, 2))
        c = clade_vjp(x, seg, table, upstream)
        np.testing.assert_array_equal(c.beta_bar, upstream)
        np.testing.assert_allclose(c.beta.sum(axis=0), upstream.sum(axis=(0, 1)), atol=1e-12)

    def test_x_cotangent_matches_finite_differences(self):
        x, seg, table = self._instance(4)
        upstream = np.random.default_rng(5).normal(size=(4, 4, 2))
        gamma_bar, _ = guided_sample(seg, table)

        def evaluate():
            return float(np.sum(upstream * clade_forward(x, seg, table)))

        numeric = numerical_gradient(evaluate, x)
        d_x, _, _ = clade_normalize_vjp(x, gamma_bar, upstream)
        np.testing.assert_allclose(d_x, numeric, atol=1e-4 * np.abs(numeric).max())

    def test_full_graph_matches_finite_differences(self):
        for seed in range(10):
            error = check_case(gradcheck._clade_case(np.random.default_rng(seed)))
            self.assertLess(error, 1e-4)


if __name__ == "__main__":
    unittest.main()
