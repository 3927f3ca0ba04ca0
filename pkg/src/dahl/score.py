"""Aggregation of verdicts into the DAHL Score and report rendering."""

from __future__ import annotations

import csv
import io
import json
from typing import Iterable, Optional, Sequence

from .types import CategoryScore, EvalRecord, ScoreReport, Status, Verdict


class NoScorableResponsesError(ValueError):
    """Every record was excluded or failed; there is nothing to average."""


def response_precision(verdicts: Sequence[Verdict]) -> float:
    """Fraction of true verdicts. Unknown must have been excluded upstream."""
    if not verdicts:
        raise ValueError("cannot score an empty verdict list")
    if any(v is Verdict.UNKNOWN for v in verdicts):
        raise ValueError("Unknown verdict present; record should have been excluded")
    return sum(1 for v in verdicts if v is Verdict.TRUE) / len(verdicts)


def _record_precision(record: EvalRecord) -> float:
    return response_precision([u.verdict for u in record.units])


def precision_by_question(records: Iterable[EvalRecord]) -> dict:
    """question_id -> response precision for every scorable record."""
    return {
        r.question_id: _record_precision(r)
        for r in records
        if r.status in (Status.CHECKED, Status.SCORED)
    }


def per_category_scores(records: Iterable[EvalRecord]) -> dict:
    """Mean precision and count per category over scorable records.

    Pure: accepts checked or scored records without mutating them.
    Categories with no scorable records are simply absent.
    """
    sums: dict = {}
    counts: dict = {}
    for record in records:
        if record.status not in (Status.CHECKED, Status.SCORED):
            continue
        if not record.category:
            raise ValueError(f"record {record.question_id} has no category")
        precision = _record_precision(record)
        sums[record.category] = sums.get(record.category, 0.0) + precision
        counts[record.category] = counts.get(record.category, 0) + 1
    return {
        label: CategoryScore(score=sums[label] / counts[label], n=counts[label])
        for label in sorted(sums)
    }


def dahl_score(records: Sequence[EvalRecord], model_id: Optional[str] = None) -> ScoreReport:
    """Aggregate one model run into a ScoreReport.

    Checked records are promoted to scored in place (rescoring already
    scored records is a no-op, which is what makes the score stage
    idempotent under resume). Every record must belong to one model.
    """
    records = list(records)
    scorable = [r for r in records if r.status in (Status.CHECKED, Status.SCORED)]
    if not scorable:
        raise NoScorableResponsesError("no scorable responses")

    models = {r.model_id for r in records}
    if model_id is None:
        if len(models) > 1:
            raise ValueError(f"records span several models: {sorted(models)}")
        model_id = next(iter(models))

    categories = per_category_scores(scorable)

    precisions = []
    true_units = 0
    total_units = 0
    raw_chars = 0
    clean_chars = 0
    for record in scorable:
        precisions.append(_record_precision(record))
        true_units += sum(1 for u in record.units if u.verdict is Verdict.TRUE)
        total_units += len(record.units)
        raw_chars += len(record.raw_response)
        clean_chars += len(record.preprocessed or "")
        record.status = Status.SCORED

    n = len(scorable)
    counts = {status: 0 for status in Status}
    for record in records:
        counts[record.status] += 1

    return ScoreReport(
        model_id=model_id,
        dahl_score=sum(precisions) / n,
        per_category=categories,
        n_scored=n,
        n_excluded_noncommittal=counts[Status.EXCLUDED_NONCOMMITTAL],
        n_excluded_unknown=counts[Status.EXCLUDED_UNKNOWN],
        n_excluded_mismatch=counts[Status.EXCLUDED_MISMATCH],
        n_failed=counts[Status.FAILED],
        avg_response_length_chars=clean_chars / n,
        avg_raw_length_chars=raw_chars / n,
        pooled_unit_score=true_units / total_units,
    )


def render_report(report: ScoreReport, fmt: str) -> bytes:
    """Serialize a report as json (lossless), csv, or markdown."""
    if fmt == "json":
        return (json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n").encode("utf-8")
    if fmt == "csv":
        return _render_csv(report)
    if fmt in ("md", "markdown"):
        return _render_markdown(report)
    raise ValueError(f"unknown report format {fmt!r}")


def _render_csv(report: ScoreReport) -> bytes:
    """One row per category plus an ALL row, full-precision scores."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model", "category", "n", "score"])
    writer.writerow([report.model_id, "ALL", report.n_scored, repr(report.dahl_score)])
    for label, cs in sorted(report.per_category.items()):
        writer.writerow([report.model_id, label, cs.n, repr(cs.score)])
    return buf.getvalue().encode("utf-8")


def _render_markdown(report: ScoreReport) -> bytes:
    """Headline table plus a per-category table, scores to 4 decimals."""
    size = report.model_size if report.model_size else "-"
    lines = [
        "| Model | Size | Avg. Length | DAHL Score |",
        "| --- | --- | --- | --- |",
        f"| {report.model_id} | {size} | {report.avg_response_length_chars:.0f} "
        f"| {report.dahl_score:.4f} |",
    ]
    if report.per_category:
        lines += [
            "",
            "| Category | n | Score |",
            "| --- | --- | --- |",
        ]
        for label, cs in sorted(report.per_category.items()):
            lines.append(f"| {label} | {cs.n} | {cs.score:.4f} |")
    lines += [
        "",
        f"Scored {report.n_scored} of {report.n_total} responses "
        f"(noncommittal {report.n_excluded_noncommittal}, "
        f"unknown {report.n_excluded_unknown}, "
        f"mismatch {report.n_excluded_mismatch}, "
        f"failed {report.n_failed}).",
    ]
    return ("\n".join(lines) + "\n").encode("utf-8")
