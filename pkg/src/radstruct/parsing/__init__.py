from radstruct.parsing.lexicons import LexiconSet, load_default_lexicons, load_lexicons
from radstruct.parsing.transcript import (
    ExtractionResult,
    ExtractionSpan,
    SafetyFlag,
    SafetyReason,
    SpanKind,
    detect_negation,
    extract_comparison,
    extract_measurements,
    parse_transcript,
)

__all__ = [
    "ExtractionResult",
    "ExtractionSpan",
    "LexiconSet",
    "SafetyFlag",
    "SafetyReason",
    "SpanKind",
    "detect_negation",
    "extract_comparison",
    "extract_measurements",
    "load_default_lexicons",
    "load_lexicons",
    "parse_transcript",
]
