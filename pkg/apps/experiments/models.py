from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from django.conf import settings

from sgm_lab.exceptions import EXIT_CHECKS_FAILED, EXIT_OK

WGC_CHECK = "wgc"
SGC_CHECK = "sgc"
NECESSARY_CHECK = "necessary"
RATE_CHECK = "rate"
FLOOR_CHECK = "floor"
INVERSE_T_CHECK = "inverse_t"
CHECKS = (WGC_CHECK, SGC_CHECK, NECESSARY_CHECK, RATE_CHECK, FLOOR_CHECK, INVERSE_T_CHECK)

PASS = "pass"
FAIL = "fail"
SKIPPED = "skipped"


@dataclass
class ExperimentConfig:
    name: str
    method: str
    iterations: int
    replications: int
    seed: int
    problem: dict
    step: dict
    geometry: Optional[dict] = None
    checks: tuple = ()
    check_options: dict = field(default_factory=dict)
    output: Optional[Path] = None
    threads: Optional[int] = None
    audit_replication: int = 0
    source: Optional[Path] = None

    @property
    def output_dir(self):
        if self.output is not None:
            return Path(self.output)
        return Path(settings.SGM_OUTPUT_ROOT) / self.name

    def resolve_path(self, value):
        """Paths inside a config file are relative to the file's directory."""
        path = Path(value)
        if path.is_absolute() or self.source is None:
            return path
        return Path(self.source).parent / path


@dataclass
class CheckResult:
    name: str
    status: str
    detail: str = ""
    values: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.status == PASS


@dataclass
class ExperimentOutcome:
    config: ExperimentConfig
    checks: list
    summary: object = None
    growth: object = None
    stats: object = None
    problem: object = None
    audit: object = None
    output_dir: Optional[Path] = None

    @property
    def passed(self):
        return all(check.passed for check in self.checks)

    @property
    def exit_code(self):
        return EXIT_OK if self.passed else EXIT_CHECKS_FAILED
