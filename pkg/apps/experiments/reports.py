"""
Run directories: numeric CSVs written with pandas, JSON records rendered with the REST
framework's JSON renderer, and a PDF summary built with reportlab.
"""
import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd
from django.utils.translation import gettext_lazy as _
from reportlab.lib import colors
from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle
from rest_framework.renderers import JSONRenderer

from apps.analysis.serializers import AnalysisSummarySerializer
from apps.experiments.serializers import ManifestSerializer
from apps.growth.serializers import GrowthReportSerializer
from apps.problems.serializers import ProblemSummarySerializer
from sgm_lab.exceptions import OutputError
from sgm_lab.util import shortest_repr

logger = logging.getLogger(__name__)

STATS_CSV = "stats.csv"
AUDIT_CSV = "trajectory_audit.csv"
GROWTH_JSON = "growth.json"
SUMMARY_JSON = "summary.json"
PROBLEM_JSON = "problem.json"
MANIFEST_JSON = "manifest.json"
REPORT_PDF = "report.pdf"


def _column(values):
    return [shortest_repr(value) for value in values]


def stats_frame(stats):
    return pd.DataFrame(
        {
            "t": np.arange(stats.T + 1),
            "mean_dist_sq": _column(stats.mean_dist_sq),
            "stderr": _column(stats.stderr),
        }
    )


def audit_frame(trajectory):
    times = np.asarray(trajectory.point_times)
    data = {"t": times, "dist_sq": _column(np.asarray(trajectory.dist_sq)[times])}
    for j in range(trajectory.points.shape[1]):
        data[f"x{j}"] = _column(trajectory.points[:, j])
    return pd.DataFrame(data)


def _write_csv(frame, path):
    frame.to_csv(path, index=False, lineterminator="\n")


def _write_json(data, path):
    Path(path).write_bytes(JSONRenderer().render(data, renderer_context={"indent": 2}) + b"\n")


def write_run_artifacts(outcome):
    directory = Path(outcome.output_dir)
    try:
        _write_csv(stats_frame(outcome.stats), directory / STATS_CSV)
        _write_csv(audit_frame(outcome.audit), directory / AUDIT_CSV)
        _write_json(GrowthReportSerializer(outcome.growth).data, directory / GROWTH_JSON)
        _write_json(AnalysisSummarySerializer(outcome.summary).data, directory / SUMMARY_JSON)
        _write_json(ProblemSummarySerializer(outcome.problem).data, directory / PROBLEM_JSON)
        _write_json(ManifestSerializer(outcome).data, directory / MANIFEST_JSON)
    except OSError as exc:
        raise OutputError(_("Cannot write to %(path)s: %(error)s") % {"path": directory, "error": exc})
    logger.debug("artifacts written to %s", directory)
    return directory


def read_run_directory(directory):
    """The JSON records of a finished run, keyed by file stem."""
    directory = Path(directory)
    records = {}
    for name in (MANIFEST_JSON, SUMMARY_JSON, GROWTH_JSON, PROBLEM_JSON):
        path = directory / name
        try:
            records[path.stem] = json.loads(path.read_text())
        except FileNotFoundError:
            raise OutputError(_("%(path)s is not a run directory (no %(name)s).") % {"path": directory, "name": name})
        except (OSError, ValueError) as exc:
            raise OutputError(_("Cannot read %(path)s: %(error)s") % {"path": path, "error": exc})
    return records


def _fmt(value):
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, list):
        return ", ".join(_fmt(item) for item in value)
    return str(value)


def summary_rows(records):
    summary, growth = records["summary"], records["growth"]
    rows = [[key, _fmt(summary.get(key))] for key in (
        "method", "gamma", "rho_pred", "rate_fit", "rate_stderr", "r_squared",
        "fit_window", "floor_pred", "floor_fit", "floor_stderr", "inverse_t_slope",
    )]
    rows += [[f"growth {key}", _fmt(growth.get(key))] for key in ("B", "M", "sigma_sq", "classification", "omega")]
    return rows


def check_rows(records):
    return [[check["name"], check["status"], check.get("detail") or ""] for check in records["manifest"]["checks"]]


def build_report_pdf(directory, records=None):
    directory = Path(directory)
    records = records or read_run_directory(directory)
    path = directory / REPORT_PDF

    pdf = SimpleDocTemplate(str(path), pagesize=A4, leftMargin=36, rightMargin=36)
    styles = getSampleStyleSheet()
    title_style = ParagraphStyle(name="TitleStyle", parent=styles["Title"], fontSize=14, alignment=1)
    normal_style = ParagraphStyle(name="NormalStyle", parent=styles["Normal"], fontSize=8)
    table_style = TableStyle(
        [
            ("FONTSIZE", (0, 0), (-1, -1), 8),
            ("GRID", (0, 0), (-1, -1), 0.25, colors.grey),
            ("BACKGROUND", (0, 0), (-1, 0), colors.lightgrey),
            ("VALIGN", (0, 0), (-1, -1), "TOP"),
        ]
    )

    manifest = records["manifest"]
    elements = [
        Paragraph(f"Run report: {manifest['name']}", title_style),
        Paragraph(
            f"method {manifest['method']}, T = {manifest['iterations']}, R = {manifest['replications']}, "
            f"seed {manifest['seed']}, exit status {manifest['exit_code']}",
            normal_style,
        ),
        Spacer(1, 12),
    ]
    summary_table = Table([["quantity", "value"]] + summary_rows(records), colWidths=[140, 300])
    summary_table.setStyle(table_style)
    elements += [summary_table, Spacer(1, 12)]

    checks = [["check", "status", "detail"]] + [
        [name, status, Paragraph(detail, normal_style)] for name, status, detail in check_rows(records)
    ]
    checks_table = Table(checks, colWidths=[80, 60, 300])
    checks_table.setStyle(table_style)
    elements.append(checks_table)

    try:
        pdf.build(elements)
    except OSError as exc:
        raise OutputError(_("Cannot write %(path)s: %(error)s") % {"path": path, "error": exc})
    return path
