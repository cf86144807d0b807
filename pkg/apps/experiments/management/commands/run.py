import logging

from django.core.management.base import CommandError

from apps.experiments.management.commands._base import LabCommand
from apps.experiments.models import SKIPPED
from apps.experiments.services import load_experiment_config, run_experiment

logger = logging.getLogger(__name__)


class Command(LabCommand):
    help = "Run a replicated experiment from a config file and write its artifacts."

    def add_arguments(self, parser):
        parser.add_argument("config", help="Path to the experiment file.")
        parser.add_argument("--seed", type=int, help="Override the master seed.")
        parser.add_argument("--threads", type=int, help="Replication threads (results do not depend on it).")
        parser.add_argument("--out", help="Output directory (default: SGM_OUTPUT_ROOT/<name>).")

    def handle(self, *args, **options):
        config = load_experiment_config(
            options["config"], seed=options["seed"], threads=options["threads"], out=options["out"]
        )
        outcome = run_experiment(config, threads=options["threads"])
        for check in outcome.checks:
            line = f"{check.name:10s} {check.status}"
            if check.detail:
                line += f"  ({check.detail})"
            if check.status == SKIPPED:
                self.stdout.write(self.style.WARNING(line))
            elif check.passed:
                self.stdout.write(self.style.SUCCESS(line))
            else:
                self.stdout.write(self.style.ERROR(line))
        self.stdout.write(f"artifacts: {outcome.output_dir}")
        if not outcome.passed:
            raise CommandError("at least one requested check did not pass", returncode=outcome.exit_code)
