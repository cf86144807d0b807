from django.core.management.base import BaseCommand, CommandError

from sgm_lab.exceptions import LabError, exit_code_help


class LabCommand(BaseCommand):
    """Maps LabError onto CommandError with the error's exit code and lists the codes in --help."""

    requires_system_checks = []

    def create_parser(self, prog_name, subcommand, **kwargs):
        kwargs.setdefault("epilog", exit_code_help())
        return super().create_parser(prog_name, subcommand, **kwargs)

    def execute(self, *args, **options):
        try:
            return super().execute(*args, **options)
        except LabError as exc:
            raise CommandError(str(exc), returncode=exc.exit_code) from exc
