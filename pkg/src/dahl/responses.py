"""Response generation and the cleanup pass that precedes splitting.

Cleanup composes five small text operations: strip a leading prompt
echo, segment into sentences, drop repeated sentences, drop an
unterminated final sentence, and rejoin with single spaces. A response
that ends up empty or consists only of refusal phrases is excluded as
noncommittal. Every operation is conservative: nothing is ever
rewritten, only removed.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import FrozenSet, Iterable, List, Optional, Sequence

from . import defaults
from .backends import Backend, BackendError, ChatRequest
from .types import EvalRecord, GenConfig, Question, Status

_WS = re.compile(r"\s+")
_QUOTE_FOLD = str.maketrans({"‘": "'", "’": "'", "“": '"', "”": '"'})
_TERMINAL_PUNCT = ".!?"
_CLOSERS = "\"')]"


@dataclass(frozen=True)
class Sentence:
    text: str
    normalized_key: str


def normalize_sentence_key(text: str) -> str:
    """Key used for duplicate detection and phrase matching.

    Case-folded, whitespace collapsed, curly quotes folded to straight
    ones, trailing terminal punctuation (and closing quotes around it)
    stripped.
    """
    t = _WS.sub(" ", text.translate(_QUOTE_FOLD)).strip().casefold()
    return t.rstrip(_CLOSERS + _TERMINAL_PUNCT + " ")


def _is_boundary(text: str, punct_end: int, abbreviations: FrozenSet[str]) -> bool:
    """Decide whether the punctuation run ending at punct_end splits here."""
    rest = text[punct_end:]
    stripped = rest.lstrip()
    if stripped == rest:          # no whitespace after the punctuation
        return False
    if not stripped:              # end of text
        return False
    nxt = stripped[0]
    if nxt in "\"'" and len(stripped) > 1:
        nxt = stripped[1]
    if not (nxt.isupper() or nxt.isdigit()):
        return False
    # Protect known abbreviations ("Dr.", "Fig.", "e.g.") when the run
    # is a single period.
    if text[punct_end - 1] == "." and (punct_end < 2 or text[punct_end - 2] != "."):
        before = re.search(r"([\w][\w.]*)$", text[: punct_end - 1])
        if before and before.group(1) in abbreviations:
            return False
    return True


def segment_sentences(
    text: str, abbreviations: Optional[FrozenSet[str]] = None
) -> List[Sentence]:
    """Split at {. ! ?} followed by whitespace and an uppercase/digit start.

    Decimal numbers never split (no whitespace after the dot) and
    abbreviations from the configured list are protected. Punctuation
    followed by a lowercase letter is treated as sentence-internal,
    which errs on the side of keeping text together.
    """
    if not text.strip():
        return []
    if abbreviations is None:
        abbreviations = defaults.load_abbreviations()

    boundaries = []
    for match in re.finditer(r"[.!?]+", text):
        if _is_boundary(text, match.end(), abbreviations):
            boundaries.append(match.end())

    sentences = []
    start = 0
    for cut in boundaries:
        piece = text[start:cut].strip()
        if piece:
            sentences.append(Sentence(text=piece, normalized_key=normalize_sentence_key(piece)))
        start = cut
    tail = text[start:].strip()
    if tail:
        sentences.append(Sentence(text=tail, normalized_key=normalize_sentence_key(tail)))
    return sentences


def strip_prompt_echo(raw: str, prompt: str) -> str:
    """Remove the prompt when the response starts by repeating it.

    Matching ignores letter case and whitespace entirely, so an echo
    that re-wraps lines still matches. Only a leading occurrence is
    removed.
    """
    if not prompt:
        return raw
    wanted = [c.casefold() for c in prompt if not c.isspace()]
    if not wanted:
        return raw
    i = 0
    j = 0
    while i < len(raw) and j < len(wanted):
        c = raw[i]
        if c.isspace():
            i += 1
            continue
        if c.casefold() != wanted[j]:
            return raw
        i += 1
        j += 1
    if j < len(wanted):
        return raw
    while i < len(raw) and raw[i].isspace():
        i += 1
    return raw[i:]


def dedup_sentences(sentences: Iterable[Sentence]) -> List[Sentence]:
    """Keep the first occurrence per normalized key, order preserved."""
    seen = set()
    out = []
    for s in sentences:
        if s.normalized_key in seen:
            continue
        seen.add(s.normalized_key)
        out.append(s)
    return out


def drop_incomplete_tail(
    sentences: Sequence[Sentence], finish_reason: Optional[str] = None
) -> List[Sentence]:
    """Drop the final sentence when it lacks terminal punctuation.

    Applied unconditionally, not only on a length cutoff: an
    unterminated tail is unverifiable regardless of why generation
    stopped. finish_reason is accepted for interface symmetry and kept
    in the record for audit.
    """
    del finish_reason
    if not sentences:
        return []
    last = sentences[-1].text.rstrip(_CLOSERS)
    if last and last[-1] in _TERMINAL_PUNCT:
        return list(sentences)
    return list(sentences[:-1])


def detect_noncommittal(text: str, phrases: Optional[Sequence[str]] = None) -> bool:
    """True when the text consists only of refusal/ignorance phrases."""
    sentences = segment_sentences(text)
    return _only_noncommittal(sentences, _phrase_keys(phrases))


def _phrase_keys(phrases: Optional[Sequence[str]]) -> FrozenSet[str]:
    if phrases is None:
        phrases = defaults.load_noncommittal_phrases()
    return frozenset(normalize_sentence_key(p) for p in phrases)


def _only_noncommittal(sentences: Sequence[Sentence], phrase_keys: FrozenSet[str]) -> bool:
    if not sentences:
        return False
    return all(s.normalized_key in phrase_keys for s in sentences)


def preprocess(
    record: EvalRecord,
    prompt: str,
    abbreviations: Optional[FrozenSet[str]] = None,
    noncommittal_phrases: Optional[Sequence[str]] = None,
) -> EvalRecord:
    """Run the full cleanup pass on a pending record, in place.

    Sets status to preprocessed, or to excluded_noncommittal when the
    cleaned text is empty or purely a refusal.
    """
    if record.status is not Status.PENDING:
        raise ValueError(f"preprocess requires status=pending, got {record.status.value}")
    text = strip_prompt_echo(record.raw_response, prompt)
    sentences = segment_sentences(text, abbreviations)
    sentences = dedup_sentences(sentences)
    sentences = drop_incomplete_tail(sentences, record.finish_reason)
    cleaned = " ".join(s.text for s in sentences)
    record.preprocessed = cleaned
    if not cleaned or _only_noncommittal(sentences, _phrase_keys(noncommittal_phrases)):
        record.status = Status.EXCLUDED_NONCOMMITTAL
    else:
        record.status = Status.PREPROCESSED
    return record


def render_question_prompt(question_text: str, prompt_template: Optional[str] = None) -> str:
    """The exact user prompt sent for a question; also used by echo removal."""
    template = (
        prompt_template
        if prompt_template is not None
        else defaults.load_prompt("response_generation")
    )
    return defaults.fill_template(template, question=question_text).strip()


def generate_response(
    question: Question,
    backend: Backend,
    gen_config: GenConfig,
    prompt_template: Optional[str] = None,
) -> EvalRecord:
    """Ask the generator backend to answer one question.

    Backend failures are folded into the record as status=failed so a
    batch run always completes.
    """
    prompt = render_question_prompt(question.text, prompt_template)
    record = EvalRecord(
        question_id=question.question_id,
        model_id=backend.model,
        gen_config=gen_config,
        category=question.category,
    )
    request = ChatRequest(
        backend_id=backend.backend_id, user_prompt=prompt, gen_config=gen_config
    )
    try:
        resp = backend.complete(request)
    except BackendError as exc:
        record.status = Status.FAILED
        record.error = str(exc)
        return record
    record.raw_response = resp.text
    record.finish_reason = resp.finish_reason
    return record
