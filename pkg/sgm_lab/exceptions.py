from django.utils.translation import gettext_lazy as _


class LabError(Exception):
    """
    Base class for every failure the lab reports. Each subclass maps to one
    documented process exit code.
    """

    exit_code = 10
    default_detail = _("An internal error occurred.")

    def __init__(self, detail=None):
        self.detail = detail if detail is not None else self.default_detail
        super().__init__(str(self.detail))


class ConfigError(LabError):
    exit_code = 2
    default_detail = _("The experiment configuration is invalid.")

    def __init__(self, detail=None, section=None, key=None, line=None):
        super().__init__(detail)
        self.section = section
        self.key = key
        self.line = line

    def __str__(self):
        where = []
        if self.section:
            where.append(f"[{self.section}]")
        if self.key:
            where.append(self.key)
        if self.line:
            where.append(f"line {self.line}")
        prefix = " ".join(where)
        return f"{prefix}: {self.detail}" if prefix else str(self.detail)


class ProblemError(LabError):
    exit_code = 3
    default_detail = _("The problem or geometry could not be constructed.")


class DivergenceError(LabError):
    exit_code = 4
    default_detail = _("The iteration diverged.")

    def __init__(self, detail=None, t=None, replication=None):
        super().__init__(detail)
        self.t = t
        self.replication = replication


class NumericalError(LabError):
    exit_code = 5
    default_detail = _("A numerical operation failed.")


class HypothesisError(LabError):
    exit_code = 6
    default_detail = _("A hypothesis of the convergence result does not hold.")


class FitError(LabError):
    exit_code = 7
    default_detail = _("The fit was refused.")


class OutputError(LabError):
    exit_code = 8
    default_detail = _("The output directory is not writable.")


EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_IO_ERROR = OutputError.exit_code

EXIT_CODES = [
    (EXIT_OK, _("all requested checks passed")),
    (EXIT_CHECKS_FAILED, _("at least one requested check failed")),
    (ConfigError.exit_code, _("configuration parse or validation error")),
    (ProblemError.exit_code, _("problem or geometry construction error")),
    (DivergenceError.exit_code, _("divergence abort (non-finite or exploding iterate)")),
    (NumericalError.exit_code, _("numerical failure (ill-conditioned solve)")),
    (HypothesisError.exit_code, _("convergence hypothesis violated (e.g. mu >= 4LM)")),
    (FitError.exit_code, _("rate fit refused")),
    (EXIT_IO_ERROR, _("output directory not writable")),
]


def exit_code_help():
    return "exit codes: " + "; ".join(f"{code} = {text}" for code, text in EXIT_CODES)
