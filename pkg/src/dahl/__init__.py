"""Hallucination evaluation for long-form answers.

The pipeline decomposes each model response into atomic factual units,
verifies every unit through a checker backend, and aggregates per-
response factual precision into the DAHL Score. The package also
builds question benchmarks from document corpora and carries its own
statistics toolkit so results can be validated without extra
dependencies.
"""

from .types import (
    AtomicUnit,
    CategoryScore,
    CategorySet,
    EvalRecord,
    GenConfig,
    Question,
    ReviewOverride,
    ScoreReport,
    SourceDocument,
    Status,
    Verdict,
    validate_record,
)

__version__ = "0.1.0"

__all__ = [
    "AtomicUnit",
    "CategoryScore",
    "CategorySet",
    "EvalRecord",
    "GenConfig",
    "Question",
    "ReviewOverride",
    "ScoreReport",
    "SourceDocument",
    "Status",
    "Verdict",
    "validate_record",
    "__version__",
]
