from pathlib import Path

import numpy as np
from django.utils.translation import gettext_lazy as _

from apps.problems.models import KaczmarzSystem
from sgm_lab.exceptions import ProblemError


def parse_kaczmarz_text(text):
    """
    Parse the plain-text system format: a header line "m d" followed by m lines of
    d + 1 reals (the row, then b_i). Rows are normalised on load and b rescaled with them.
    """
    lines = [(number, line.strip()) for number, line in enumerate(text.splitlines(), start=1)]
    lines = [(number, line) for number, line in lines if line and not line.startswith("#")]
    if not lines:
        raise ProblemError(_("The matrix file is empty."))

    header_line, header = lines[0]
    try:
        m, d = (int(token) for token in header.split())
    except ValueError:
        raise ProblemError(
            _("Line %(line)d: header must be two integers 'm d'.") % {"line": header_line}
        )
    if m < 1 or d < 1:
        raise ProblemError(_("Line %(line)d: m and d must be positive.") % {"line": header_line})

    body = lines[1:]
    if len(body) != m:
        raise ProblemError(
            _("Expected %(m)d data lines after the header, found %(found)d.")
            % {"m": m, "found": len(body)}
        )
    data = np.empty((m, d + 1))
    for row, (number, line) in enumerate(body):
        tokens = line.split()
        if len(tokens) != d + 1:
            raise ProblemError(
                _("Line %(line)d: expected %(count)d values, found %(found)d.")
                % {"line": number, "count": d + 1, "found": len(tokens)}
            )
        try:
            data[row] = [float(token) for token in tokens]
        except ValueError:
            raise ProblemError(_("Line %(line)d: values must be real numbers.") % {"line": number})
    if not np.all(np.isfinite(data)):
        raise ProblemError(_("The matrix file contains non-finite values."))
    return KaczmarzSystem.from_rows(data[:, :d], data[:, d])


def load_kaczmarz_system(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ProblemError(_("Cannot read matrix file %(path)s: %(error)s") % {"path": path, "error": exc})
    return parse_kaczmarz_text(text)
