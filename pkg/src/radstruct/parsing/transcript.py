"""Rule-based transcript parsing: dictated text -> candidate findings.

The extractor is deterministic and fully inspectable: lexicon matching,
fixed negation-scope rules, and nearest-term attribute attachment.  No
statistical model is involved; learned extractors can only enter the
pipeline through the AI-module plugin boundary, where their outputs
stay unreviewed until a human accepts them.

Every safety-critical element (laterality, negation, measurements,
units, comparison dates) is surfaced as a character-addressed span or a
safety flag; nothing is applied invisibly.
"""

from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass
from decimal import Decimal
from enum import Enum
from typing import Optional

from radstruct.errors import ModelValidationError
from radstruct.model.types import (
    ActorRole,
    AnatomicLocation,
    ChangeStatus,
    Comparison,
    Laterality,
    Measurement,
    MeasurementKind,
    Modality,
    PartialDate,
    Presence,
    Provenance,
    ProvenanceSource,
    ReviewStatus,
    StructuredFinding,
    TerminologyBinding,
    Uncertainty,
)
from radstruct.parsing.lexicons import LexiconSet


class SpanKind(str, Enum):
    FINDING_TERM = "finding_term"
    ANATOMY = "anatomy"
    LATERALITY = "laterality"
    MEASUREMENT = "measurement"
    UNIT = "unit"
    MORPHOLOGY = "morphology"
    CHANGE = "change"
    COMPARISON_DATE = "comparison_date"
    NEGATION_CUE = "negation_cue"
    UNCERTAINTY_CUE = "uncertainty_cue"


class SafetyReason(str, Enum):
    LATERALITY = "laterality"
    NEGATION = "negation"
    MEASUREMENT = "measurement"
    UNIT = "unit"
    COMPARISON_DATE = "comparison_date"


@dataclass(frozen=True)
class ExtractionSpan:
    """Byte-addressed region of the transcript holding one entity."""

    start: int
    end: int
    kind: SpanKind

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ModelValidationError(f"bad span [{self.start}, {self.end})", target="span")


@dataclass(frozen=True)
class SafetyFlag:
    start: int
    end: int
    reason: SafetyReason
    note: str = ""


@dataclass(frozen=True)
class ExtractionResult:
    transcript: str
    findings: tuple[StructuredFinding, ...]
    spans: tuple[ExtractionSpan, ...]
    finding_spans: dict[str, tuple[int, ...]]  # finding_id -> indexes into spans
    safety_flags: tuple[SafetyFlag, ...]
    unparsed_sentences: tuple[tuple[int, int], ...]  # byte ranges


# internal char-offset entity before byte conversion
@dataclass
class _Entity:
    start: int
    end: int
    kind: SpanKind
    value: object = None


_SENTENCE_BOUNDARY = re.compile(r"(?<=[.!?])\s+")

_NUMBER = r"\d+(?:\.\d+)?"
_AXIS_SEP = r"\s*(?:x|×)\s*"
_UNIT_TOKENS = r"(?:mm2|cm2|mm3|cm3|mm|cm|mL|ml|cc)"
_MULTI_AXIS = re.compile(
    rf"\b({_NUMBER})(?:{_AXIS_SEP}({_NUMBER}))(?:{_AXIS_SEP}({_NUMBER}))?\s*({_UNIT_TOKENS})\b"
)
_VELOCITY = re.compile(rf"\b({_NUMBER})\s*(cm/s)")
_SINGLE = re.compile(rf"\b({_NUMBER})\s*({_UNIT_TOKENS})\b")
_SUV = re.compile(rf"\bSUV\s?(max|mean)\b(?:\s+of)?\s+({_NUMBER})", re.IGNORECASE)
_BARE_NUMBER_TOKEN = re.compile(rf"\b({_NUMBER})\s+([A-Za-z]{{1,4}})\b")

_STOPWORDS = {
    "and", "or", "the", "a", "an", "is", "are", "was", "were", "in", "of", "to",
    "at", "on", "with", "no", "new", "from", "for", "by", "now", "than", "has",
}

_MONTHS = {
    name.lower(): i + 1
    for i, name in enumerate(
        ["January", "February", "March", "April", "May", "June", "July",
         "August", "September", "October", "November", "December"]
    )
}
_MONTH_PATTERN = "|".join(m.capitalize() for m in _MONTHS)
_DATE_MONTH_NAME = re.compile(rf"\b({_MONTH_PATTERN})\s+(?:(\d{{1,2}}),\s*)?(\d{{4}})\b", re.IGNORECASE)
_DATE_ISO = re.compile(r"\b(\d{4})-(\d{2})(?:-(\d{2}))?\b")
_MODALITY_WORD = re.compile(r"\b(CT|MRI|MR|PET/CT|PET-CT|PETCT|PET|ultrasound|US|radiograph|x-ray)\b", re.IGNORECASE)
_COMPARISON_CUE = re.compile(r"\b(compared\s+(?:with|to)|in\s+comparison\s+(?:with|to)|since)\b", re.IGNORECASE)
_RELATIVE_DATE = re.compile(
    r"\b(prior\s+(?:study|exam|examination)|previous\s+(?:study|exam|examination)|last\s+(?:year|month|week)|\w+\s+(?:year|month|week)s?\s+ago)\b",
    re.IGNORECASE,
)
_LATERALITY_WORD = re.compile(r"\b(left|right|bilateral|midline)\b", re.IGNORECASE)


def split_sentences(text: str) -> list[tuple[int, int]]:
    """Character ranges of sentences; decimal points never split."""
    ranges = []
    start = 0
    for match in _SENTENCE_BOUNDARY.finditer(text):
        ranges.append((start, match.start()))
        start = match.end()
    if start < len(text):
        ranges.append((start, len(text)))
    out = []
    for begin, end in ranges:
        segment = text[begin:end]
        stripped_left = len(segment) - len(segment.lstrip())
        stripped_right = len(segment) - len(segment.rstrip())
        if segment.strip():
            out.append((begin + stripped_left, end - stripped_right))
    return out


def _match_lexicon(sentence: str, offset: int, lexicon: dict, kind: SpanKind) -> list[_Entity]:
    """Longest-first, word-bounded, case-insensitive; no same-kind overlap."""
    lowered = sentence.lower()
    taken: list[tuple[int, int]] = []
    found: list[_Entity] = []
    for surface in sorted(lexicon, key=len, reverse=True):
        for match in re.finditer(rf"\b{re.escape(surface)}\b", lowered):
            s, e = match.start(), match.end()
            if any(not (e <= ts or s >= te) for ts, te in taken):
                continue
            taken.append((s, e))
            found.append(_Entity(offset + s, offset + e, kind, lexicon[surface]))
    found.sort(key=lambda ent: ent.start)
    return found


def detect_negation(sentence: str, lexicons: LexiconSet, offset: int = 0) -> tuple[list[_Entity], list[tuple[int, int]]]:
    """Negation cues and their forward scopes (char ranges).

    A cue's scope runs from the cue to the next terminator ("but",
    "however", ";") or the end of the sentence.
    """
    lowered = sentence.lower()
    cues: list[_Entity] = []
    taken: list[tuple[int, int]] = []
    for cue in sorted(lexicons.negation_cues, key=len, reverse=True):
        for match in re.finditer(rf"\b{re.escape(cue)}\b", lowered):
            s, e = match.start(), match.end()
            if any(not (e <= ts or s >= te) for ts, te in taken):
                continue
            taken.append((s, e))
            cues.append(_Entity(offset + s, offset + e, SpanKind.NEGATION_CUE, cue))
    cues.sort(key=lambda ent: ent.start)

    terminator_positions = []
    for term in lexicons.negation_terminators:
        pattern = re.escape(term) if not term.isalpha() else rf"\b{re.escape(term)}\b"
        terminator_positions.extend(m.start() for m in re.finditer(pattern, lowered))
    terminator_positions.sort()

    scopes = []
    for cue in cues:
        cue_end_local = cue.end - offset
        scope_end_local = len(sentence)
        for pos in terminator_positions:
            if pos >= cue_end_local:
                scope_end_local = pos
                break
        scopes.append((cue.end, offset + scope_end_local))
    return cues, scopes


def extract_measurements(sentence: str, offset: int = 0) -> tuple[list[_Entity], list[SafetyFlag]]:
    """Measurements with units: single, multi-axis, velocity, and SUV forms."""
    entities: list[_Entity] = []
    flags: list[SafetyFlag] = []
    taken: list[tuple[int, int]] = []

    def claim(s: int, e: int) -> bool:
        if any(not (e <= ts or s >= te) for ts, te in taken):
            return False
        taken.append((s, e))
        return True

    for match in _SUV.finditer(sentence):
        if not claim(match.start(), match.end()):
            continue
        kind = MeasurementKind.SUV_MAX if match.group(1).lower() == "max" else MeasurementKind.SUV_MEAN
        m = Measurement(Decimal(match.group(2)), "{SUVbw}g/mL", kind)
        entities.append(_Entity(offset + match.start(), offset + match.end(), SpanKind.MEASUREMENT, m))

    for match in _MULTI_AXIS.finditer(sentence):
        if not claim(match.start(), match.end()):
            continue
        axes = [Decimal(g) for g in match.groups()[:3] if g is not None]
        unit = match.group(4)
        m = Measurement(max(axes), unit, _kind_for_unit(unit), tuple(axes))
        entities.append(_Entity(offset + match.start(), offset + match.end(), SpanKind.MEASUREMENT, m))
        entities.append(_Entity(offset + match.start(4), offset + match.end(4), SpanKind.UNIT, unit))

    for match in _VELOCITY.finditer(sentence):
        if not claim(match.start(), match.end()):
            continue
        m = Measurement(Decimal(match.group(1)), "cm/s", MeasurementKind.VELOCITY)
        entities.append(_Entity(offset + match.start(), offset + match.end(), SpanKind.MEASUREMENT, m))
        entities.append(_Entity(offset + match.start(2), offset + match.end(2), SpanKind.UNIT, "cm/s"))

    for match in _SINGLE.finditer(sentence):
        if not claim(match.start(), match.end()):
            continue
        unit = match.group(2)
        m = Measurement(Decimal(match.group(1)), unit, _kind_for_unit(unit))
        entities.append(_Entity(offset + match.start(), offset + match.end(), SpanKind.MEASUREMENT, m))
        entities.append(_Entity(offset + match.start(2), offset + match.end(2), SpanKind.UNIT, unit))

    for match in _BARE_NUMBER_TOKEN.finditer(sentence):
        token = match.group(2)
        if token.lower() in _STOPWORDS or not claim(match.start(), match.end()):
            continue
        m = Measurement(Decimal(match.group(1)), "unknown", MeasurementKind.LINEAR)
        entities.append(_Entity(offset + match.start(), offset + match.end(), SpanKind.MEASUREMENT, m))
        flags.append(
            SafetyFlag(
                offset + match.start(2),
                offset + match.end(2),
                SafetyReason.UNIT,
                f"unknown unit {token!r}",
            )
        )

    entities.sort(key=lambda ent: (ent.start, ent.kind.value))
    return entities, flags


def _kind_for_unit(unit: str) -> MeasurementKind:
    if unit in ("mm", "cm"):
        return MeasurementKind.LINEAR
    if unit in ("mm2", "cm2"):
        return MeasurementKind.AREA
    return MeasurementKind.VOLUME


@dataclass(frozen=True)
class ComparisonMention:
    date: Optional[PartialDate]
    modality: Optional[Modality]
    span: Optional[tuple[int, int]]  # char range of the date text


def extract_comparison(sentence: str, offset: int = 0) -> tuple[Optional[ComparisonMention], list[SafetyFlag]]:
    """Prior-study mention: absolute dates only; relative forms are flagged."""
    flags: list[SafetyFlag] = []
    modality: Optional[Modality] = None
    has_cue = bool(_COMPARISON_CUE.search(sentence))
    modality_from = re.search(
        rf"{_MODALITY_WORD.pattern}\s+(?:from|of|dated|performed)\b", sentence, re.IGNORECASE
    )
    prior_modality = re.search(rf"\bprior\s+{_MODALITY_WORD.pattern}", sentence, re.IGNORECASE)
    if modality_from:
        modality = Modality.parse(modality_from.group(1))
    elif prior_modality:
        modality = Modality.parse(prior_modality.group(1))

    date: Optional[PartialDate] = None
    span: Optional[tuple[int, int]] = None
    named = _DATE_MONTH_NAME.search(sentence)
    if named:
        month = _MONTHS[named.group(1).lower()]
        day = int(named.group(2)) if named.group(2) else None
        date = PartialDate(int(named.group(3)), month, day)
        span = (offset + named.start(), offset + named.end())
    else:
        iso = _DATE_ISO.search(sentence)
        if iso:
            date = PartialDate(int(iso.group(1)), int(iso.group(2)), int(iso.group(3)) if iso.group(3) else None)
            span = (offset + iso.start(), offset + iso.end())

    relative = _RELATIVE_DATE.search(sentence)
    if date is None:
        if not (has_cue or modality is not None or relative):
            return None, flags
        target = relative or _COMPARISON_CUE.search(sentence) or modality_from or prior_modality
        flags.append(
            SafetyFlag(
                offset + target.start(),
                offset + target.end(),
                SafetyReason.COMPARISON_DATE,
                "comparison without an absolute date",
            )
        )
        if modality is None:
            return None, flags
        return ComparisonMention(None, modality, None), flags
    if not (has_cue or modality is not None):
        return None, flags
    return ComparisonMention(date, modality, span), flags


def _token_index(sentence_offsets: list[int], position: int) -> int:
    """Index of the token containing/nearest to a char position."""
    index = 0
    for i, start in enumerate(sentence_offsets):
        if start <= position:
            index = i
        else:
            break
    return index


class _IdAllocator:
    def __init__(self):
        self.counters: dict[str, int] = {}

    def allocate(self, finding_type: str) -> str:
        stem = finding_type.rsplit("_", 1)[-1].upper()
        self.counters[stem] = self.counters.get(stem, 0) + 1
        return f"{stem}-{self.counters[stem]:02d}"


def parse_transcript(
    text: str,
    lexicons: LexiconSet,
    timestamp: Optional[dt.datetime] = None,
) -> ExtractionResult:
    """Deterministically convert transcript text into candidate findings."""
    if not text or not text.strip():
        raise ModelValidationError("transcript text must be non-empty", target="transcript")
    timestamp = timestamp or dt.datetime.now(dt.timezone.utc)

    all_entities: list[_Entity] = []
    all_flags: list[SafetyFlag] = []
    findings: list[StructuredFinding] = []
    finding_entities: dict[str, list[_Entity]] = {}
    unparsed: list[tuple[int, int]] = []
    ids = _IdAllocator()

    for s_start, s_end in split_sentences(text):
        sentence = text[s_start:s_end]
        entities: list[_Entity] = []
        entities.extend(_match_lexicon(sentence, s_start, lexicons.findings, SpanKind.FINDING_TERM))
        anatomy_entities = _match_lexicon(sentence, s_start, lexicons.anatomy, SpanKind.ANATOMY)
        entities.extend(anatomy_entities)
        entities.extend(_match_lexicon(sentence, s_start, lexicons.morphology, SpanKind.MORPHOLOGY))
        entities.extend(_match_lexicon(sentence, s_start, lexicons.change, SpanKind.CHANGE))
        entities.extend(
            _match_lexicon(sentence, s_start, dict(lexicons.uncertainty_cues), SpanKind.UNCERTAINTY_CUE)
        )
        for match in _LATERALITY_WORD.finditer(sentence):
            entities.append(
                _Entity(
                    s_start + match.start(),
                    s_start + match.end(),
                    SpanKind.LATERALITY,
                    Laterality(match.group(1).lower()),
                )
            )

        measurements, m_flags = extract_measurements(sentence, s_start)
        entities.extend(measurements)
        all_flags.extend(m_flags)

        cues, scopes = detect_negation(sentence, lexicons, s_start)
        entities.extend(cues)

        mention, c_flags = extract_comparison(sentence, s_start)
        all_flags.extend(c_flags)
        if mention is not None and mention.span is not None:
            entities.append(_Entity(mention.span[0], mention.span[1], SpanKind.COMPARISON_DATE, mention.date))

        term_entities = [e for e in entities if e.kind is SpanKind.FINDING_TERM]
        all_entities.extend(entities)
        if not term_entities:
            unparsed.append((s_start, s_end))
            continue

        token_starts = [s_start + m.start() for m in re.finditer(r"\S+", sentence)]
        term_tokens = [_token_index(token_starts, t.start) for t in term_entities]

        def nearest_term(entity: _Entity) -> int:
            tok = _token_index(token_starts, entity.start)
            best, best_dist = 0, None
            for i, term_tok in enumerate(term_tokens):
                dist = abs(tok - term_tok)
                if best_dist is None or dist < best_dist:
                    best, best_dist = i, dist
            return best

        attached: dict[int, list[_Entity]] = {i: [] for i in range(len(term_entities))}
        for entity in entities:
            if entity.kind in (
                SpanKind.ANATOMY,
                SpanKind.LATERALITY,
                SpanKind.MORPHOLOGY,
                SpanKind.CHANGE,
                SpanKind.MEASUREMENT,
                SpanKind.UNCERTAINTY_CUE,
            ):
                attached[nearest_term(entity)].append(entity)

        for i, term in enumerate(term_entities):
            negation_cue = None
            for cue, (scope_start, scope_end) in zip(cues, scopes):
                if scope_start <= term.start < scope_end:
                    negation_cue = cue
                    break
            presence = Presence.ABSENT if negation_cue is not None else Presence.PRESENT

            site = None
            laterality = None
            morphology = None
            change = None
            uncertainty = Uncertainty.ASSERTED
            size_measurements: list[Measurement] = []
            other_measurements: dict[str, Measurement] = {}
            for entity in attached[i]:
                if entity.kind is SpanKind.ANATOMY and site is None:
                    entry = entity.value
                    site = entry.token
                    if entry.laterality is not None:
                        laterality = entry.laterality
                elif entity.kind is SpanKind.LATERALITY and laterality is None:
                    laterality = entity.value
                elif entity.kind is SpanKind.MORPHOLOGY and morphology is None:
                    morphology = entity.value
                elif entity.kind is SpanKind.CHANGE and change is None:
                    change = lexicons.change[text[entity.start:entity.end].lower()]
                elif entity.kind is SpanKind.UNCERTAINTY_CUE:
                    uncertainty = lexicons.uncertainty_cues[text[entity.start:entity.end].lower()]
                elif entity.kind is SpanKind.MEASUREMENT:
                    m: Measurement = entity.value
                    if m.kind is MeasurementKind.LINEAR:
                        size_measurements.append(m)
                    elif m.kind is MeasurementKind.SUV_MAX:
                        other_measurements.setdefault("suv_max", m)
                    elif m.kind is MeasurementKind.SUV_MEAN:
                        other_measurements.setdefault("suv_mean", m)
                    elif m.kind is MeasurementKind.VELOCITY:
                        other_measurements.setdefault("velocity", m)
                    elif m.kind is MeasurementKind.AREA:
                        other_measurements.setdefault("area", m)
                    else:
                        other_measurements.setdefault("volume", m)

            attributes: dict = {}
            if presence is Presence.PRESENT:
                if size_measurements:
                    attributes["size"] = size_measurements[0]
                attributes.update(other_measurements)
            if morphology is not None:
                attributes["morphology"] = morphology

            comparison = None
            if change is not None or (mention is not None and presence is Presence.PRESENT):
                comparison = Comparison(
                    change=change if change is not None else ChangeStatus.INDETERMINATE,
                    prior_exam_date=mention.date if mention else None,
                    prior_modality=mention.modality if mention else None,
                )

            location = AnatomicLocation(
                anatomical_site=site,
                laterality=laterality if laterality is not None else Laterality.NOT_APPLICABLE,
            )

            finding_type = term.value
            size = attributes.get("size")
            finding = StructuredFinding(
                finding_id=ids.allocate(finding_type),
                type=finding_type,
                presence=presence,
                location=location,
                attributes=attributes,
                comparison=comparison,
                terminology=TerminologyBinding(
                    unit=size.unit if isinstance(size, Measurement) else "mm",
                    finding_code=lexicons.finding_code(finding_type),
                    anatomy_code=lexicons.anatomy_code(site) if site else None,
                ),
                provenance=Provenance(
                    actor_role=ActorRole.SYSTEM,
                    review_status=ReviewStatus.UNREVIEWED,
                    source=ProvenanceSource.DICTATION_EXTRACTED,
                    timestamp=timestamp,
                ),
                uncertainty=uncertainty,
            )
            findings.append(finding)
            cited = [term] + attached[i]
            if negation_cue is not None:
                cited.append(negation_cue)
            finding_entities[finding.finding_id] = cited

    # convert char offsets to byte offsets and freeze spans
    prefix_bytes: list[int] = [0]
    for ch in text:
        prefix_bytes.append(prefix_bytes[-1] + len(ch.encode("utf-8")))

    def to_bytes(pos: int) -> int:
        return prefix_bytes[pos]

    all_entities.sort(key=lambda ent: (ent.start, ent.end, ent.kind.value))
    span_index: dict[tuple[int, int, SpanKind], int] = {}
    spans: list[ExtractionSpan] = []
    for entity in all_entities:
        key = (entity.start, entity.end, entity.kind)
        if key in span_index:
            continue
        span_index[key] = len(spans)
        spans.append(ExtractionSpan(to_bytes(entity.start), to_bytes(entity.end), entity.kind))

    finding_spans = {
        fid: tuple(sorted({span_index[(e.start, e.end, e.kind)] for e in ents}))
        for fid, ents in finding_entities.items()
    }
    flags = tuple(
        SafetyFlag(to_bytes(f.start), to_bytes(f.end), f.reason, f.note) for f in all_flags
    )
    return ExtractionResult(
        transcript=text,
        findings=tuple(findings),
        spans=tuple(spans),
        finding_spans=finding_spans,
        safety_flags=flags,
        unparsed_sentences=tuple((to_bytes(s), to_bytes(e)) for s, e in unparsed),
    )
