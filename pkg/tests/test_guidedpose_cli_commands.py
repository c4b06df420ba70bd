import json
import os
import subprocess
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np

from guided_pose.tensor_io import load_tensor, save_tensor


REPO_ROOT = Path(__file__).resolve().parents[1]
SCENE_FILES = ("scene.txt", "seg.cpt", "field.cpt", "conf.cpt", "gt_poses.txt")


class GuidedPoseCliCommandTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls._tmp = tempfile.TemporaryDirectory()
        cls.root = Path(cls._tmp.name)
        cls.scene_dir = cls.root / "scene"
        result = cls.run_cli("gen", "--objects", "3", "--seed", "7", "--out", str(cls.scene_dir))
        if result.returncode != 0:
            raise AssertionError(result.stderr)

    @classmethod
    def tearDownClass(cls):
        cls._tmp.cleanup()

    @staticmethod
    def run_cli(*args, env=None):
        return subprocess.run(
            [sys.executable, "-m", "guidedpose_cli", *args],
            cwd=REPO_ROOT,
            text=True,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            env=env,
        )

    def pipeline_args(self, field=None):
        d = self.scene_dir
        return (
            "--scene", str(d / "scene.txt"),
            "--seg", str(d / "seg.cpt"),
            "--field", str(field or d / "field.cpt"),
            "--conf", str(d / "conf.cpt"),
        )

    def assert_clean(self, result, code=0):
        self.assertEqual(result.returncode, code, result.stderr)
        self.assertNotIn("Traceback", result.stdout + result.stderr)

    def test_gen_is_reproducible(self):
        again = self.root / "again"
        result = self.run_cli("gen", "--objects", "3", "--seed", "7", "--out", str(again), "--json")
        self.assert_clean(result)
        payload = json.loads(result.stdout)
        self.assertEqual(payload["classes"], [1, 2, 3])
        self.assertEqual(payload["files"], list(SCENE_FILES))
        for name in SCENE_FILES:
            self.assertEqual((again / name).read_bytes(), (self.scene_dir / name).read_bytes(), name)

    def test_gen_without_objects(self):
        empty = self.root / "empty"
        result = self.run_cli("gen", "--objects", "0", "--out", str(empty))
        self.assert_clean(result)
        self.assertIn("objects=0", result.stdout)
        self.assertEqual(load_tensor(empty / "seg.cpt").shape[2], 2)
        self.assertEqual((empty / "gt_poses.txt").read_text(encoding="utf-8"), "")

    def test_infer_solves_every_class(self):
        for mode in ("dkr", "rv"):
            with self.subTest(mode=mode):
                result = self.run_cli("infer", *self.pipeline_args(), "--mode", mode, "--threads", "2", "--json")
                self.assert_clean(result)
                payload = json.loads(result.stdout)
                self.assertEqual(payload["statuses"], {"1": "ok", "2": "ok", "3": "ok"})
                self.assertEqual(sorted(payload["timings"]), ["cc", "keypoints", "pnp"])

    def test_infer_text_output(self):
        result = self.run_cli("infer", *self.pipeline_args(), "--threads", "1")
        self.assert_clean(result)
        lines = result.stdout.splitlines()
        self.assertTrue(lines[0].startswith("class 1 R "))
        self.assertTrue(lines[-1].startswith("timing.pnp_ms="))

    def test_thread_count_does_not_change_records(self):
        one = self.run_cli("infer", *self.pipeline_args(), "--threads", "1", "--json")
        env = dict(os.environ, GUIDEDPOSE_THREADS="4")
        four = self.run_cli("infer", *self.pipeline_args(), "--json", env=env)
        self.assert_clean(one)
        self.assert_clean(four)
        self.assertEqual(json.loads(four.stdout)["threads"], 4)
        self.assertEqual(json.loads(one.stdout)["records"], json.loads(four.stdout)["records"])

    def test_wrong_field_channel_count_exits_three(self):
        field = load_tensor(self.scene_dir / "field.cpt")
        short = self.root / "short_field.cpt"
        save_tensor(short, field[..., :-2])
        result = self.run_cli("infer", *self.pipeline_args(field=short))
        self.assert_clean(result, 3)
        self.assertIn("guidedpose: error:", result.stderr)

    def test_missing_input_exits_two(self):
        result = self.run_cli("infer", *self.pipeline_args(field=self.root / "absent.cpt"))
        self.assert_clean(result, 2)
        self.assertIn("--field", result.stderr)

    def test_infer_then_eval_scores_full_recall(self):
        estimates = self.root / "estimates.txt"
        self.assert_clean(self.run_cli("infer", *self.pipeline_args(), "--out", str(estimates)))
        result = self.run_cli("eval", "--scene", str(self.scene_dir / "scene.txt"), "--estimates", str(estimates), "--json")
        self.assert_clean(result)
        payload = json.loads(result.stdout)
        self.assertEqual(payload["mean_adds_recall"], 100.0)
        self.assertEqual(payload["mean_proj2d_recall"], 100.0)

    def test_eval_ground_truth_text(self):
        result = self.run_cli(
            "eval", "--scene", str(self.scene_dir / "scene.txt"), "--estimates", str(self.scene_dir / "gt_poses.txt")
        )
        self.assert_clean(result)
        self.assertIn("mean.adds_recall=100", result.stdout)

    def test_eval_missing_class_counts_as_miss(self):
        lines = (self.scene_dir / "gt_poses.txt").read_text(encoding="utf-8").splitlines()
        partial = self.root / "partial.txt"
        partial.write_text("\n".join(lines[:2]) + "\n", encoding="utf-8")
        result = self.run_cli("eval", "--scene", str(self.scene_dir / "scene.txt"), "--estimates", str(partial), "--json")
        self.assert_clean(result)
        payload = json.loads(result.stdout)
        self.assertEqual(payload["adds_recall"]["3"], 0.0)
        self.assertFalse(payload["classes"][2]["detected"])

    def test_eval_unknown_class_exits_four(self):
        lines = (self.scene_dir / "gt_poses.txt").read_text(encoding="utf-8").splitlines()
        bogus = self.root / "bogus.txt"
        bogus.write_text(lines[0].replace("class 1 ", "class 5 ", 1) + "\n", encoding="utf-8")
        result = self.run_cli("eval", "--scene", str(self.scene_dir / "scene.txt"), "--estimates", str(bogus))
        self.assert_clean(result, 4)

    def test_gradcheck_passes_and_corruption_fails(self):
        result = self.run_cli("gradcheck", "--kernels", "dkr", "--instances", "3", "--json")
        self.assert_clean(result)
        payload = json.loads(result.stdout)
        self.assertEqual([k["name"] for k in payload["kernels"]], ["dkr"])
        self.assertTrue(payload["passed"])

        result = self.run_cli("gradcheck", "--kernels", "dkr", "--instances", "3", "--corrupt", "dkr")
        self.assert_clean(result, 5)
        self.assertIn("passed=false", result.stdout)
        self.assertIn("dkr", result.stderr)

    def test_bench_flags_low_confidence(self):
        result = self.run_cli("bench", *self.pipeline_args(), "--repetitions", "2", "--warmup", "0", "--json")
        self.assert_clean(result)
        payload = json.loads(result.stdout)
        self.assertTrue(payload["low_confidence"])
        self.assertTrue(payload["deterministic"])
        for stage in ("cc", "keypoints", "pnp"):
            self.assertGreaterEqual(payload["stages"][stage]["p95_ms"], payload["stages"][stage]["median_ms"])


if __name__ == "__main__":
    unittest.main()
