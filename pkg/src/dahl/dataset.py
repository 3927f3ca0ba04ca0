"""Benchmark construction: generate, filter, override, categorize.

The filter rules are data (a JSONL file of regex rules), not code, so
ports to another domain can swap them without touching the pipeline.
"""

from __future__ import annotations

import hashlib
import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, List, Optional, Sequence, Tuple

from . import defaults
from .backends import Backend, BackendError, ChatRequest
from .listparse import parse_list_output
from .types import CategorySet, GenConfig, Question, ReviewOverride, SourceDocument

# Questions flagged because the categorizer named several fields carry
# this pseudo-rule in their filter trace.
AMBIGUOUS_CATEGORY_RULE = "ambiguous_category"

GENERATOR_GEN = GenConfig(temperature=0.6, max_tokens=1024)
CATEGORIZER_GEN = GenConfig(temperature=0.0, max_tokens=32)


class QuestionParseError(ValueError):
    """Generator output yielded no usable questions."""


@dataclass(frozen=True)
class FilterRule:
    rule_id: str
    pattern: str
    description: str = ""

    def __post_init__(self) -> None:
        if not self.rule_id:
            raise ValueError("rule_id must be non-empty")
        re.compile(self.pattern)  # fail fast on a broken pattern

    @cached_property
    def regex(self) -> "re.Pattern":
        return re.compile(self.pattern, re.IGNORECASE)


@dataclass(frozen=True)
class FilterDecision:
    keep: bool
    rule_ids: tuple


def load_filter_rules(path: Optional[str] = None) -> List[FilterRule]:
    """Load filter rules from JSONL; packaged defaults when path is None."""
    if path is None:
        text = defaults.read_data_text("filter_rules.jsonl")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    rules = []
    seen = set()
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            rule = FilterRule(
                rule_id=str(obj["rule_id"]),
                pattern=str(obj["pattern"]),
                description=str(obj.get("description", "")),
            )
        except (KeyError, TypeError, ValueError, re.error) as exc:
            raise ValueError(f"bad filter rule on line {line_no}: {exc}") from exc
        if rule.rule_id in seen:
            raise ValueError(f"duplicate rule_id {rule.rule_id!r} on line {line_no}")
        seen.add(rule.rule_id)
        rules.append(rule)
    return rules


def normalize_question_text(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip()


def make_question_id(source_doc_id: str, text: str) -> str:
    material = f"{source_doc_id}\x1f{normalize_question_text(text)}"
    return hashlib.sha256(material.encode("utf-8")).hexdigest()[:12]


@dataclass(frozen=True)
class OverrideList:
    """Manual keep/drop decisions, keyed by question id or exact text."""

    force_keep: frozenset = frozenset()
    force_drop: frozenset = frozenset()

    def __post_init__(self) -> None:
        both = self.force_keep & self.force_drop
        if both:
            raise ValueError(
                f"entries present in both force_keep and force_drop: {sorted(both)}"
            )

    def override_for(self, question_id: str, text: str) -> ReviewOverride:
        keys = {question_id, normalize_question_text(text)}
        if keys & self.force_drop:
            return ReviewOverride.FORCE_DROP
        if keys & self.force_keep:
            return ReviewOverride.FORCE_KEEP
        return ReviewOverride.NONE


def load_overrides(path: Optional[str] = None) -> OverrideList:
    """Read {"force_keep": [...], "force_drop": [...]} from a JSON file."""
    if path is None:
        return OverrideList()
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    return OverrideList(
        force_keep=frozenset(normalize_question_text(str(e)) for e in obj.get("force_keep", [])),
        force_drop=frozenset(normalize_question_text(str(e)) for e in obj.get("force_drop", [])),
    )


def generate_questions(
    doc: SourceDocument,
    backend: Backend,
    prompt_template: Optional[str] = None,
    questions_per_doc: int = 5,
    gen_config: GenConfig = GENERATOR_GEN,
) -> List[str]:
    """Ask the generator for candidate questions about one document.

    Items are trimmed and deduplicated; lines that do not end in a
    question mark or a period (list preambles, chatter) are discarded.
    """
    if not doc.body.strip():
        raise ValueError(f"document {doc.doc_id!r} has an empty body")
    template = (
        prompt_template
        if prompt_template is not None
        else defaults.load_prompt("question_generation")
    )
    prompt = defaults.fill_template(
        template, title=doc.title, body=doc.body, n=str(questions_per_doc)
    )
    request = ChatRequest(
        backend_id=backend.backend_id, user_prompt=prompt, gen_config=gen_config
    )
    resp = backend.complete(request)

    questions = []
    seen = set()
    for item in parse_list_output(resp.text):
        if item[-1] not in "?.":
            continue
        key = normalize_question_text(item).casefold()
        if key in seen:
            continue
        seen.add(key)
        questions.append(item)
    if not questions:
        raise QuestionParseError(
            f"no questions parsed from generator output for {doc.doc_id!r}: {resp.text!r}"
        )
    return questions


def filter_context_dependent(text: str, rules: Sequence[FilterRule]) -> FilterDecision:
    """Match every rule against the question; any match means drop."""
    matched = tuple(rule.rule_id for rule in rules if rule.regex.search(text))
    return FilterDecision(keep=not matched, rule_ids=matched)


def apply_review_overrides(
    questions: Iterable[Question], overrides: OverrideList
) -> List[Question]:
    """Layer manual decisions over filter decisions, in place.

    force_keep flips an automatic drop back to keep; force_drop wins
    over everything. The filter trace is preserved as provenance.
    """
    out = []
    for q in questions:
        q.review_override = overrides.override_for(q.question_id, q.text)
        out.append(q)
    return out


@dataclass(frozen=True)
class CategorizeResult:
    label: str
    matched: tuple
    ambiguous: bool


def resolve_category_reply(reply: str, category_set: CategorySet) -> CategorizeResult:
    """Map a categorizer reply onto the closed label set.

    An exact (trimmed, case-insensitive) reply wins outright. Otherwise
    the reply is scanned for label mentions, longest label first, so
    that a label embedded in a longer one it also names (say one field
    name containing another) is not double-counted. No mention maps to
    "Other"; several distinct mentions flag the reply ambiguous.
    """
    exact = category_set.resolve(reply)
    if exact is not None:
        return CategorizeResult(label=exact, matched=(exact,), ambiguous=False)

    folded = reply.casefold()
    claimed: list = []  # (start, end) spans already taken by a longer label
    hits = []
    for label in sorted(category_set, key=len, reverse=True):
        pattern = re.compile(r"(?<!\w)" + re.escape(label.casefold()) + r"(?!\w)")
        for match in pattern.finditer(folded):
            span = (match.start(), match.end())
            if any(s <= span[0] and span[1] <= e for s, e in claimed):
                continue
            claimed.append(span)
            hits.append((match.start(), label))
            break  # one mention per label is enough
    hits.sort()
    labels = tuple(label for _, label in hits)
    if not labels:
        return CategorizeResult(label="Other", matched=(), ambiguous=False)
    if len(set(labels)) > 1:
        return CategorizeResult(label=labels[0], matched=labels, ambiguous=True)
    return CategorizeResult(label=labels[0], matched=labels, ambiguous=False)


def categorize(
    text: str,
    backend: Backend,
    category_set: CategorySet,
    prompt_template: Optional[str] = None,
    gen_config: GenConfig = CATEGORIZER_GEN,
) -> CategorizeResult:
    """One categorizer call for one question text."""
    template = (
        prompt_template if prompt_template is not None else defaults.load_prompt("categorizer")
    )
    prompt = defaults.fill_template(
        template, question=text, labels="\n".join(f"- {label}" for label in category_set)
    )
    request = ChatRequest(
        backend_id=backend.backend_id, user_prompt=prompt, gen_config=gen_config
    )
    resp = backend.complete(request)
    return resolve_category_reply(resp.text, category_set)


@dataclass
class BuildReport:
    """Stage counts for one dataset build."""

    n_documents: int = 0
    n_generated: int = 0
    n_dropped_filter: int = 0
    n_dropped_ambiguous: int = 0
    n_forced_keep: int = 0
    n_forced_drop: int = 0
    n_kept: int = 0
    drops_per_rule: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "drops_per_rule": dict(sorted(self.drops_per_rule.items())),
            "failures": list(self.failures),
            "n_documents": self.n_documents,
            "n_dropped_ambiguous": self.n_dropped_ambiguous,
            "n_dropped_filter": self.n_dropped_filter,
            "n_forced_drop": self.n_forced_drop,
            "n_forced_keep": self.n_forced_keep,
            "n_generated": self.n_generated,
            "n_kept": self.n_kept,
        }


def build_dataset(
    corpus: Sequence[SourceDocument],
    generator_backend: Backend,
    categorizer_backend: Backend,
    rules: Sequence[FilterRule],
    overrides: OverrideList,
    category_set: CategorySet,
    questions_per_doc: int = 5,
    question_prompt: Optional[str] = None,
    categorizer_prompt: Optional[str] = None,
    concurrency: int = 4,
    gen_config: GenConfig = GENERATOR_GEN,
) -> Tuple[List[Question], List[Question], BuildReport]:
    """Run the full construction pipeline over a corpus.

    Returns (kept, dropped, report). Per-document generator failures
    are isolated: they land in report.failures and the build carries
    on. Dropped questions keep their provenance but are not
    categorized (no point spending calls on them); their category is
    the catch-all label.
    """
    report = BuildReport(n_documents=len(corpus))

    def generate(doc: SourceDocument):
        try:
            return doc, generate_questions(
                doc, generator_backend, question_prompt, questions_per_doc, gen_config
            )
        except (BackendError, ValueError) as exc:
            return doc, exc

    kept: List[Question] = []
    dropped: List[Question] = []
    seen_ids = set()
    with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
        generated = list(pool.map(generate, corpus))

    for doc, outcome in generated:
        if isinstance(outcome, Exception):
            report.failures.append(f"{doc.doc_id}: {outcome}")
            continue
        for text in outcome:
            question_id = make_question_id(doc.doc_id, text)
            if question_id in seen_ids:
                continue
            seen_ids.add(question_id)
            report.n_generated += 1

            decision = filter_context_dependent(text, rules)
            question = Question(
                question_id=question_id,
                text=text,
                category="Other",
                source_doc_id=doc.doc_id,
                filter_trace=list(decision.rule_ids),
            )
            apply_review_overrides([question], overrides)

            if decision.rule_ids:
                report.n_dropped_filter += 1
                for rule_id in decision.rule_ids:
                    report.drops_per_rule[rule_id] = report.drops_per_rule.get(rule_id, 0) + 1
            if question.review_override is ReviewOverride.FORCE_DROP:
                report.n_forced_drop += 1
            elif question.review_override is ReviewOverride.FORCE_KEEP and decision.rule_ids:
                report.n_forced_keep += 1

            if not question.kept:
                dropped.append(question)
                continue

            try:
                result = categorize(
                    text, categorizer_backend, category_set, categorizer_prompt
                )
            except BackendError as exc:
                report.failures.append(f"{question_id}: categorizer failed: {exc}")
                question.filter_trace.append("categorizer_failure")
                dropped.append(question)
                continue
            if result.ambiguous and question.review_override is not ReviewOverride.FORCE_KEEP:
                # Manual review outranks the ambiguity guard, the same
                # way it outranks the regex rules.
                report.n_dropped_ambiguous += 1
                question.filter_trace.append(AMBIGUOUS_CATEGORY_RULE)
                dropped.append(question)
                continue
            question.category = result.label
            kept.append(question)

    report.n_kept = len(kept)
    return kept, dropped, report
