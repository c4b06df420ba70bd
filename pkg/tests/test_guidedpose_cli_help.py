import subprocess
import sys
import unittest
from pathlib import Path


REPO_ROOT = Path(__file__).resolve().parents[1]
COMMANDS = ("gen", "infer", "eval", "gradcheck", "bench")


class GuidedPoseCliHelpTests(unittest.TestCase):
    def run_cli(self, *args):
        return subprocess.run(
            [sys.executable, "-m", "guidedpose_cli", *args],
            cwd=REPO_ROOT,
            text=True,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
        )

    def assert_help_contains(self, args, *needles):
        result = self.run_cli(*args, "--help")
        self.assertEqual(result.returncode, 0, result.stderr)
        text = result.stdout + result.stderr
        for needle in needles:
            self.assertIn(needle, text)

    def test_python_module_help_lists_commands_and_exit_codes(self):
        self.assert_help_contains((), *COMMANDS, "Exit codes:", "Examples:")

    def test_no_command_prints_root_help(self):
        result = self.run_cli()
        self.assertEqual(result.returncode, 0, result.stderr)
        self.assertIn("Commands:", result.stdout)

    def test_every_command_has_examples_and_output_contract(self):
        for command in COMMANDS:
            with self.subTest(command=command):
                self.assert_help_contains((command,), "Examples:", "Output contract:")

    def test_gradcheck_help_names_the_kernel_groups(self):
        self.assert_help_contains(("gradcheck",), "semantic_norm", "guided_ops", "proxy_voting_loss")

    def test_usage_errors_exit_two_without_traceback(self):
        for args in (
            ("nope",),
            ("gen",),
            ("gen", "--out", "x", "--objects", "-1"),
            ("gradcheck", "--kernels", "nope"),
            ("gradcheck", "--instances", "0"),
            ("infer", "--scene", "s.txt"),
        ):
            with self.subTest(args=args):
                result = self.run_cli(*args)
                self.assertEqual(result.returncode, 2)
                self.assertNotIn("Traceback", result.stderr)


if __name__ == "__main__":
    unittest.main()
