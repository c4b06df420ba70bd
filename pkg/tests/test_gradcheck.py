import time
import unittest

import numpy as np

from guided_pose.errors import ParameterError
from guided_pose.gradcheck import CASES, GROUPS, numerical_gradient, relative_error, resolve_kernels, run_gradcheck


class GradcheckTests(unittest.TestCase):
    def test_every_kernel_passes_within_a_minute(self):
        started = time.perf_counter()
        report = run_gradcheck(instances=10, seed=0)
        elapsed = time.perf_counter() - started
        self.assertEqual([k.name for k in report.kernels], list(CASES))
        for kernel in report.kernels:
            self.assertLess(kernel.max_relative_error, 1e-4, kernel.name)
        self.assertTrue(report.passed)
        self.assertLess(elapsed, 60.0)

    def test_corrupted_gradient_is_caught(self):
        report = run_gradcheck(["dkr", "seg_loss"], instances=2, corrupt=["dkr"])
        self.assertFalse(report.passed)
        self.assertEqual(report.failed, ("dkr",))

    def test_groups_expand_in_declaration_order(self):
        self.assertEqual(GROUPS, ("dkr", "guided_ops", "losses", "semantic_norm"))
        self.assertEqual(resolve_kernels(["losses", "seg_loss"]), ("seg_loss", "vector_loss", "proxy_voting_loss", "keypoint_loss"))
        self.assertEqual(resolve_kernels(None), tuple(CASES))
        with self.assertRaises(ParameterError):
            resolve_kernels(["nope"])

    def test_results_do_not_depend_on_the_selection(self):
        alone = run_gradcheck(["keypoint_loss"], instances=3, seed=2)
        together = run_gradcheck(["clade", "keypoint_loss"], instances=3, seed=2)
        self.assertEqual(alone.kernels[0].max_relative_error, together.kernels[1].max_relative_error)

    def test_central_differences_of_a_quadratic(self):
        x = np.array([1.0, -2.0, 0.5])
        grad = numerical_gradient(lambda: float(np.sum(x**2)), x)
        np.testing.assert_allclose(grad, 2.0 * x, atol=1e-9)
        np.testing.assert_array_equal(x, [1.0, -2.0, 0.5])
        self.assertEqual(relative_error(np.zeros(3), np.zeros(3)), 0.0)

    def test_instances_must_be_positive(self):
        with self.assertRaises(ParameterError):
            run_gradcheck(["dkr"], instances=0)


if __name__ == "__main__":
    unittest.main()
