from apps.experiments.management.commands._base import LabCommand
from apps.experiments.reports import build_report_pdf, check_rows, read_run_directory, summary_rows


class Command(LabCommand):
    help = "Print the summary of a run directory and render it to report.pdf."

    def add_arguments(self, parser):
        parser.add_argument("directory", help="A directory written by the run command.")

    def handle(self, *args, **options):
        records = read_run_directory(options["directory"])
        self.stdout.write(self.style.MIGRATE_HEADING(records["manifest"]["name"]))
        for key, value in summary_rows(records):
            self.stdout.write(f"  {key:24s} {value}")
        for name, status, detail in check_rows(records):
            self.stdout.write(f"  {name:10s} {status}" + (f"  ({detail})" if detail else ""))
        path = build_report_pdf(options["directory"], records)
        self.stdout.write(self.style.SUCCESS(f"wrote {path}"))
