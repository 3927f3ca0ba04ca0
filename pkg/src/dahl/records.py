"""JSONL persistence: atomic writes, per-line read diagnostics.

One JSON object per line, UTF-8, keys sorted alphabetically. Writers
go through a temp file in the target directory followed by rename, so
a crash never leaves a partially written file visible.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

from .types import CategorySet, EvalRecord, Question, SourceDocument, validate_record


@dataclass(frozen=True)
class LineDiagnostic:
    """A problem with one line of a JSONL file."""

    line_no: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line_no}: {self.message}"


def dumps_compact(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def atomic_write_text(path: str, text: str) -> None:
    """Write text to path via temp-file-then-rename in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp.", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_records(records: Iterable, path: str) -> int:
    """Write records (anything with to_dict) as JSONL. Returns the count."""
    lines = [dumps_compact(r.to_dict()) for r in records]
    atomic_write_text(path, "".join(line + "\n" for line in lines))
    return len(lines)


def _read_objects(path: str):
    """Yield (line_no, parsed dict or None, diagnostic or None) per line."""
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                yield line_no, None, LineDiagnostic(line_no, f"invalid JSON: {exc}")
                continue
            if not isinstance(obj, dict):
                yield line_no, None, LineDiagnostic(line_no, "line is not a JSON object")
                continue
            yield line_no, obj, None


def _read_typed(path: str, parse: Callable, check: Optional[Callable] = None):
    """Shared read loop: parse every line, collect diagnostics for the rest.

    parse raises on malformed data; check returns a list of invariant
    violations for an otherwise well-formed value.
    """
    items = []
    diagnostics = []
    for line_no, obj, diag in _read_objects(path):
        if diag is not None:
            diagnostics.append(diag)
            continue
        try:
            item = parse(obj)
        except (KeyError, TypeError, ValueError) as exc:
            diagnostics.append(LineDiagnostic(line_no, f"cannot parse record: {exc}"))
            continue
        violations = check(item) if check is not None else []
        if violations:
            diagnostics.append(LineDiagnostic(line_no, "; ".join(violations)))
            continue
        items.append(item)
    return items, diagnostics


def read_eval_records(path: str):
    """Read EvalRecords; invariant-violating lines become diagnostics."""
    return _read_typed(path, EvalRecord.from_dict, validate_record)


def read_questions(path: str, category_set: Optional[CategorySet] = None):
    """Read Questions, optionally enforcing the closed category set."""

    def check(q: Question) -> list:
        violations = []
        if category_set is not None and q.category not in category_set:
            violations.append(
                f"category {q.category!r} is not one of the {len(category_set)} configured labels"
            )
        if q.kept and q.filter_trace and q.review_override.value != "force_keep":
            violations.append("kept question carries filter matches without force_keep")
        return violations

    return _read_typed(path, Question.from_dict, check)


def read_source_documents(path: str):
    """Read a corpus; duplicate ids and empty fields become diagnostics."""
    seen = set()

    def check(doc: SourceDocument) -> list:
        violations = []
        if not doc.doc_id.strip():
            violations.append("doc_id must be non-empty")
        elif doc.doc_id in seen:
            violations.append(f"duplicate doc_id {doc.doc_id!r}")
        else:
            seen.add(doc.doc_id)
        if not doc.body.strip():
            violations.append("body must be non-empty")
        return violations

    return _read_typed(path, SourceDocument.from_dict, check)
