import json
import tempfile
from io import StringIO
from pathlib import Path

from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from apps.experiments.management.commands.run import Command as RunCommand

CONFIGS = Path(settings.BASE_DIR) / "configs"


def write_config(directory, text, name="experiment.ini"):
    path = Path(directory) / name
    path.write_text(text)
    return path


QUICK = """\
[experiment]
name = quick
method = sgm
iterations = 200
replications = 64
seed = 5
checks = wgc, sgc, necessary, floor, inverse_t

[problem]
kind = two_point

[step]
policy = constant
gamma = 0.5
"""


class CommandTestCase(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)

    def call(self, *args, **kwargs):
        out = StringIO()
        call_command(*args, stdout=out, stderr=StringIO(), **kwargs)
        return out.getvalue()

    def manifest(self, directory):
        return json.loads((Path(directory) / "manifest.json").read_text())


class ValidateCommandTests(CommandTestCase):
    def test_shipped_configs_validate(self):
        for path in sorted(CONFIGS.glob("*.ini")):
            with self.subTest(config=path.name):
                self.assertIn(path.stem, self.call("validate", str(path)))

    def test_parse_error_exit_code(self):
        path = write_config(self.root, QUICK.replace("replications = 64", "replications = 0"))
        with self.assertRaises(CommandError) as caught:
            self.call("validate", str(path))
        self.assertEqual(caught.exception.returncode, 2)
        self.assertIn("replications", str(caught.exception))

    def test_problem_error_exit_code(self):
        text = QUICK.replace("kind = two_point", "kind = kaczmarz\nrows = 3\ndim = 5")
        with self.assertRaises(CommandError) as caught:
            self.call("validate", str(write_config(self.root, text)))
        self.assertEqual(caught.exception.returncode, 3)

    def test_help_lists_exit_codes(self):
        help_text = RunCommand().create_parser("manage.py", "run").format_help()
        self.assertIn("exit codes", help_text)
        self.assertIn("7 = rate fit refused", " ".join(help_text.split()))


class RunCommandTests(CommandTestCase):
    def test_two_point_example_passes(self):
        out = self.root / "run"
        self.call("run", str(CONFIGS / "two_point_quick.ini"), "--out", str(out))
        manifest = self.manifest(out)
        self.assertTrue(manifest["passed"])
        self.assertEqual(manifest["exit_code"], 0)
        self.assertEqual([check["name"] for check in manifest["checks"]], ["wgc", "floor"])
        for name in ("stats.csv", "trajectory_audit.csv", "growth.json", "summary.json", "problem.json"):
            self.assertTrue((out / name).exists(), name)
        growth = json.loads((out / "growth.json").read_text())
        self.assertEqual(growth["B"], "inf")
        self.assertAlmostEqual(growth["M"], 1.0, delta=1e-9)
        self.assertAlmostEqual(growth["sigma_sq"], 1.0, delta=1e-9)

    def test_every_requested_check_listed_once(self):
        out = self.root / "run"
        with self.assertRaises(CommandError) as caught:
            self.call("run", str(write_config(self.root, QUICK)), "--out", str(out))
        self.assertEqual(caught.exception.returncode, 1)
        checks = {check["name"]: check for check in self.manifest(out)["checks"]}
        self.assertEqual(sorted(checks), ["floor", "inverse_t", "necessary", "sgc", "wgc"])
        self.assertEqual(checks["sgc"]["status"], "fail")
        self.assertEqual(checks["inverse_t"]["status"], "skipped")
        self.assertEqual(checks["necessary"]["status"], "pass")
        self.assertAlmostEqual(checks["necessary"]["values"]["omega"], 0.25, delta=1e-8)

    def test_divergence_exit_code(self):
        text = QUICK.replace("gamma = 0.5", "gamma = 3.0").replace("checks = wgc, sgc, necessary, floor, inverse_t", "checks = wgc")
        with self.assertRaises(CommandError) as caught:
            self.call("run", str(write_config(self.root, text)), "--out", str(self.root / "run"))
        self.assertEqual(caught.exception.returncode, 4)

    def test_fit_error_exit_code(self):
        text = QUICK.replace("iterations = 200", "iterations = 20").replace(
            "checks = wgc, sgc, necessary, floor, inverse_t", "checks = rate"
        )
        with self.assertRaises(CommandError) as caught:
            self.call("run", str(write_config(self.root, text)), "--out", str(self.root / "run"))
        self.assertEqual(caught.exception.returncode, 7)

    def test_output_error_exit_code(self):
        blocker = self.root / "occupied"
        blocker.write_text("not a directory")
        with self.assertRaises(CommandError) as caught:
            self.call("run", str(CONFIGS / "two_point_quick.ini"), "--out", str(blocker / "run"))
        self.assertEqual(caught.exception.returncode, 8)

    def test_default_output_root(self):
        with self.settings(SGM_OUTPUT_ROOT=self.root / "runs"):
            self.call("run", str(CONFIGS / "two_point_quick.ini"))
        self.assertTrue((self.root / "runs" / "two_point_quick" / "manifest.json").exists())

    def test_seed_override_changes_the_run(self):
        first, second = self.root / "a", self.root / "b"
        self.call("run", str(CONFIGS / "two_point_quick.ini"), "--out", str(first))
        self.call("run", str(CONFIGS / "two_point_quick.ini"), "--out", str(second), "--seed", "99")
        self.assertNotEqual((first / "stats.csv").read_bytes(), (second / "stats.csv").read_bytes())
        self.assertEqual(self.manifest(second)["seed"], 99)


class DeterminismTests(CommandTestCase):
    def test_reruns_and_thread_counts_are_byte_identical(self):
        outputs = []
        for label, threads in (("a", "1"), ("b", "1"), ("c", "4")):
            out = self.root / label
            with self.settings(SGM_REPLICATION_BLOCK=16):
                self.call("run", str(CONFIGS / "two_point_quick.ini"), "--out", str(out), "--threads", threads)
            outputs.append(out)
        for name in ("stats.csv", "trajectory_audit.csv"):
            reference = (outputs[0] / name).read_bytes()
            for out in outputs[1:]:
                self.assertEqual((out / name).read_bytes(), reference, f"{name} differs in {out.name}")

    def test_stats_csv_format(self):
        out = self.root / "run"
        self.call("run", str(CONFIGS / "two_point_quick.ini"), "--out", str(out))
        lines = (out / "stats.csv").read_text().split("\n")
        self.assertEqual(lines[0], "t,mean_dist_sq,stderr")
        self.assertEqual(lines[1], "0,0.0,0.0")
        self.assertEqual(lines[2].split(",")[:2], ["1", "0.25"])
        self.assertEqual(len(lines), 100 + 3)


class ReportCommandTests(CommandTestCase):
    def test_report_prints_summary_and_writes_pdf(self):
        out = self.root / "run"
        self.call("run", str(CONFIGS / "two_point_quick.ini"), "--out", str(out))
        printed = self.call("report", str(out))
        self.assertIn("two_point_quick", printed)
        self.assertIn("floor_fit", printed)
        pdf = out / "report.pdf"
        self.assertTrue(pdf.exists())
        self.assertEqual(pdf.read_bytes()[:5], b"%PDF-")

    def test_report_on_missing_directory(self):
        with self.assertRaises(CommandError) as caught:
            self.call("report", str(self.root / "nothing"))
        self.assertEqual(caught.exception.returncode, 8)
