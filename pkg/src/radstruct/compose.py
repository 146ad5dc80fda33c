"""Deterministic narrative drafting from confirmed structured findings.

Sentences are rendered from template phrase patterns with a fixed slot
order; nothing is generated freely, so narrative and structured content
reconcile byte-for-byte and every composed sentence parses back into
the finding it came from.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from radstruct.errors import CompositionGap, ProvenanceRuleViolation
from radstruct.model.types import (
    ChangeStatus,
    Laterality,
    Measurement,
    Modality,
    Presence,
    PriorStudyRef,
    ReportDocument,
    ReportSection,
    ReviewStatus,
    SectionName,
    StructuredFinding,
    StudyContext,
    Uncertainty,
)
from radstruct.parsing.lexicons import LexiconSet
from radstruct.parsing.transcript import detect_negation, split_sentences
from radstruct.templates.engine import ReportTemplate

_SLOT = re.compile(r"\{([a-z_]+)\}")
_MONTH_NAMES = [
    "January", "February", "March", "April", "May", "June", "July",
    "August", "September", "October", "November", "December",
]

_UNCERTAINTY_WORDS = {
    Uncertainty.ASSERTED: "",
    Uncertainty.POSSIBLE: "possible",
    Uncertainty.UNCERTAIN: "questionable",
}

_COMPARABLE = (
    ChangeStatus.STABLE,
    ChangeStatus.INCREASED,
    ChangeStatus.DECREASED,
    ChangeStatus.RESOLVED,
)


def _capitalize(sentence: str) -> str:
    for i, ch in enumerate(sentence):
        if ch.isalpha():
            return sentence[:i] + ch.upper() + sentence[i + 1 :]
        if ch.isdigit():
            return sentence
    return sentence


def _slot_values(
    finding: StructuredFinding, lexicons: LexiconSet, study_modality: Optional[Modality]
) -> dict[str, str]:
    size = finding.attributes.get("size")
    suv = finding.attributes.get("suv_max") or finding.attributes.get("suv_mean")
    comparison_clause = ""
    change = ""
    if finding.comparison is not None:
        if finding.comparison.change is not ChangeStatus.INDETERMINATE:
            change = finding.comparison.change.value
        if finding.comparison.change in _COMPARABLE:
            prior_modality = finding.comparison.prior_modality or study_modality
            prior = prior_modality.display() if prior_modality else "study"
            comparison_clause = f" compared with the prior {prior}"
    laterality = finding.location.laterality
    return {
        "uncertainty": _UNCERTAINTY_WORDS[finding.uncertainty],
        "change": change,
        "size": size.display() if isinstance(size, Measurement) else "",
        "morphology": lexicons.display(finding.attributes["morphology"])
        if isinstance(finding.attributes.get("morphology"), str)
        else "",
        "location": lexicons.display(finding.location.anatomical_site)
        if finding.location.anatomical_site
        else "",
        "laterality": laterality.value
        if laterality in (Laterality.LEFT, Laterality.RIGHT, Laterality.BILATERAL)
        else "",
        "type": lexicons.display(finding.type),
        "suv": f" with {suv.display()}" if isinstance(suv, Measurement) else "",
        "comparison": comparison_clause,
    }


def _render(pattern: str, values: dict[str, str]) -> str:
    rendered = _SLOT.sub(lambda m: values.get(m.group(1), ""), pattern)
    rendered = re.sub(r"\s+", " ", rendered).strip()
    rendered = re.sub(r"\s+([.,;])", r"\1", rendered)
    return _capitalize(rendered)


def compose_finding_sentence(
    finding: StructuredFinding,
    template: ReportTemplate,
    lexicons: LexiconSet,
    study_modality: Optional[Modality] = None,
) -> tuple[str, SectionName]:
    """Render one finding into its narrative sentence and target section."""
    entry = template.phrase_entry(finding.type)
    pattern = None
    if entry is not None:
        pattern = entry.absent if finding.presence is Presence.ABSENT else entry.present
    if not pattern:
        raise CompositionGap(
            f"no phrase pattern for {finding.type} ({finding.presence.value}); write manually",
            target=finding.finding_id,
        )
    sentence = _render(pattern, _slot_values(finding, lexicons, study_modality))
    return sentence, entry.section


def _technique_text(ctx: StudyContext) -> str:
    body = (ctx.body_region or "").replace("_", " ")
    text = f"{ctx.modality.display()} examination"
    if body:
        text += f" of the {body}"
    if ctx.protocol:
        text += f", {ctx.protocol.replace('_', ' ')} protocol"
    return _capitalize(text + ".")


def _comparison_text(prior: Optional[PriorStudyRef]) -> str:
    if prior is None:
        return "None."
    d = prior.exam_date
    return f"{prior.modality.display()} from {_MONTH_NAMES[d.month - 1]} {d.day}, {d.year}."


def compose_report(
    ctx: StudyContext,
    template: ReportTemplate,
    findings: tuple[StructuredFinding, ...],
    lexicons: LexiconSet,
    confirmed_prior: Optional[PriorStudyRef] = None,
) -> tuple[ReportDocument, list[str]]:
    """Fill the narrative sections; Impression stays empty until drafted."""
    notes: list[str] = []
    lines: list[str] = []
    for finding in findings:
        try:
            sentence, section = compose_finding_sentence(finding, template, lexicons, ctx.modality)
        except CompositionGap as gap:
            notes.append(gap.message)
            continue
        if section is SectionName.FINDINGS:
            lines.append(sentence)
    findings_text = "\n".join(lines)
    impression_text = ""
    if not lines and SectionName.FINDINGS in template.normal_language:
        findings_text = template.normal_language[SectionName.FINDINGS]
        impression_text = template.normal_language.get(SectionName.IMPRESSION, "")
        notes.append("normal-report language inserted; review required")

    sections = []
    for name in template.sections:
        if name is SectionName.INDICATION:
            text = ctx.indication or "None."
        elif name is SectionName.TECHNIQUE:
            text = _technique_text(ctx)
        elif name is SectionName.COMPARISON:
            text = _comparison_text(confirmed_prior)
        elif name is SectionName.FINDINGS:
            text = findings_text
        elif name is SectionName.IMPRESSION:
            text = impression_text
        else:
            text = ""
        sections.append(ReportSection(name, text))
    report = ReportDocument(sections=tuple(sections), structured_findings=findings)
    return report, notes


@dataclass(frozen=True)
class ImpressionItem:
    text: str
    source_finding_ids: tuple[str, ...]


def draft_impression(
    findings: tuple[StructuredFinding, ...],
    template: ReportTemplate,
    lexicons: LexiconSet,
) -> tuple[list[ImpressionItem], list[str]]:
    """Impression items from confirmed findings, each with its sources.

    Rejects unreviewed input outright: drafting only ever sees findings a
    human has approved or edited.
    """
    for finding in findings:
        if finding.provenance.review_status not in (ReviewStatus.APPROVED, ReviewStatus.EDITED):
            raise ProvenanceRuleViolation(
                f"finding {finding.finding_id} is {finding.provenance.review_status.value}; "
                "impression drafting requires reviewed findings",
                target=finding.finding_id,
            )
    notes: list[str] = []
    items: list[ImpressionItem] = []
    by_text: dict[str, list[str]] = {}
    order: list[str] = []
    for finding in findings:
        entry = template.phrase_entry(finding.type)
        if finding.presence is Presence.PRESENT:
            pattern = entry.impression if entry else None
            if not pattern:
                notes.append(f"no impression pattern for {finding.type}")
                continue
        else:
            if finding.type not in template.pertinent_negatives:
                continue
            pattern = (entry.impression_absent if entry else None) or "No {type}."
        text = _render(pattern, _slot_values(finding, lexicons, None))
        if text not in by_text:
            by_text[text] = []
            order.append(text)
        by_text[text].append(finding.finding_id)
    for text in order:
        items.append(ImpressionItem(text, tuple(by_text[text])))
    if not items:
        notes.append("no impression items could be drafted; write manually")
    return items, notes


class ClaimKind(str, Enum):
    UNSUPPORTED_ASSERTION = "unsupported_assertion"
    UNBACKED_NEGATIVE = "unbacked_negative"


@dataclass(frozen=True)
class UnsupportedClaim:
    start: int  # byte offsets into the impression text
    end: int
    concept: str
    kind: ClaimKind


def detect_unsupported_claims(
    impression_text: str,
    findings: tuple[StructuredFinding, ...],
    lexicons: LexiconSet,
) -> list[UnsupportedClaim]:
    """Impression concepts with no backing structured finding.

    An asserted concept needs a present finding of the same type; a
    negated concept needs an absent one (otherwise it is reported as an
    unbacked negative, informational only).
    """
    present = {f.type for f in findings if f.presence is Presence.PRESENT}
    absent = {f.type for f in findings if f.presence is Presence.ABSENT}
    claims: list[UnsupportedClaim] = []
    if not impression_text.strip():
        return claims

    prefix_bytes = [0]
    for ch in impression_text:
        prefix_bytes.append(prefix_bytes[-1] + len(ch.encode("utf-8")))

    for s_start, s_end in split_sentences(impression_text):
        sentence = impression_text[s_start:s_end]
        lowered = sentence.lower()
        _, scopes = detect_negation(sentence, lexicons, s_start)
        taken: list[tuple[int, int]] = []
        for surface in sorted(lexicons.findings, key=len, reverse=True):
            for match in re.finditer(rf"\b{re.escape(surface)}\b", lowered):
                s = s_start + match.start()
                e = s_start + match.end()
                if any(not (e <= ts or s >= te) for ts, te in taken):
                    continue
                taken.append((s, e))
                concept = lexicons.findings[surface]
                negated = any(scope_start <= s < scope_end for scope_start, scope_end in scopes)
                if negated and concept not in absent:
                    claims.append(
                        UnsupportedClaim(prefix_bytes[s], prefix_bytes[e], concept, ClaimKind.UNBACKED_NEGATIVE)
                    )
                elif not negated and concept not in present:
                    claims.append(
                        UnsupportedClaim(prefix_bytes[s], prefix_bytes[e], concept, ClaimKind.UNSUPPORTED_ASSERTION)
                    )
    claims.sort(key=lambda c: c.start)
    return claims
