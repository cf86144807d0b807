from apps.experiments.management.commands._base import LabCommand
from apps.experiments.services import build_geometry, build_problem, load_experiment_config


class Command(LabCommand):
    help = "Parse and validate an experiment file, and build its problem and geometry, without running it."

    def add_arguments(self, parser):
        parser.add_argument("config", help="Path to the experiment file.")

    def handle(self, *args, **options):
        config = load_experiment_config(options["config"])
        problem, _system = build_problem(config)
        build_geometry(config, problem.dim)
        self.stdout.write(
            self.style.SUCCESS(
                f"{config.name}: {config.method} on {problem.name} (n={problem.n}, d={problem.dim}), "
                f"T={config.iterations}, R={config.replications}, checks={','.join(config.checks) or '-'}"
            )
        )
