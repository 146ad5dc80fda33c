"""Consistency rule suite (C1-C10) run over a session before sign-off.

Errors block approval outright; warnings block until a radiologist
acknowledges them; info issues never block.  The checker is a pure
function of an immutable snapshot: it never mutates the session, and
identical input always yields the identical, order-stable issue list.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from radstruct.compose import ClaimKind, detect_unsupported_claims
from radstruct.errors import DimensionMismatch, MeasurementError, UnknownUnit
from radstruct.evidence import EvidenceStatus, evidence_status
from radstruct.model import units
from radstruct.model.types import (
    ChangeStatus,
    Laterality,
    Measurement,
    Presence,
    ReportDocument,
    SectionName,
    StructuredFinding,
    StudyContext,
)
from radstruct.parsing.lexicons import LexiconSet
from radstruct.policy import EnginePolicy
from radstruct.templates.engine import ReportTemplate, TemplateMatch, validate_completeness
from radstruct.tracking import ComparisonRow, assign_change_status


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"
    INFO = "info"


@dataclass(frozen=True)
class ConsistencyIssue:
    rule_id: str
    severity: Severity
    target: str
    message: str

    @property
    def issue_id(self) -> str:
        return f"{self.rule_id}:{self.target}"


@dataclass(frozen=True)
class CheckInput:
    """Immutable snapshot of everything the rules inspect."""

    ctx: StudyContext
    template: ReportTemplate
    template_match: TemplateMatch
    findings: tuple[StructuredFinding, ...]
    report: ReportDocument
    comparison_rows: tuple[ComparisonRow, ...]
    lexicons: LexiconSet
    policy: EnginePolicy


def _sev(policy: EnginePolicy, key: str, default: str) -> Severity:
    return Severity(policy.severity(key, default))


_SIDE_WORDS = {Laterality.LEFT: "left", Laterality.RIGHT: "right"}


def _check_laterality(inp: CheckInput, issues: list[ConsistencyIssue]) -> None:
    severity = _sev(inp.policy, "C1", "error")
    for f in inp.findings:
        problems = f.location.validate(f"finding[{f.finding_id}].location")
        for problem in problems:
            issues.append(ConsistencyIssue("C1", severity, problem.split(":")[0], problem.split(": ", 1)[1]))
        if f.final_sentence and f.location.laterality in _SIDE_WORDS:
            own = _SIDE_WORDS[f.location.laterality]
            other = _SIDE_WORDS[Laterality.LEFT if f.location.laterality is Laterality.RIGHT else Laterality.RIGHT]
            text = f.final_sentence.sentence.lower()
            if re.search(rf"\b{other}\b", text) and not re.search(rf"\b{own}\b", text):
                issues.append(
                    ConsistencyIssue(
                        "C1",
                        severity,
                        f"finding[{f.finding_id}].final_report_text",
                        f"narrative sentence says {other!r} but the finding is {own}-sided",
                    )
                )


def _check_required_fields(inp: CheckInput, issues: list[ConsistencyIssue]) -> None:
    severity = _sev(inp.policy, "C2", "warning")
    report = ReportDocument(sections=inp.report.sections or (), structured_findings=inp.findings)
    for record in validate_completeness(report, inp.template):
        issues.append(ConsistencyIssue("C2", severity, record.path, f"missing required field: {record.label}"))


def _check_measurements(inp: CheckInput, issues: list[ConsistencyIssue]) -> None:
    unit_sev = _sev(inp.policy, "C3_unit", "error")
    range_sev = _sev(inp.policy, "C3_range", "warning")
    for f in inp.findings:
        pairs = list(f.measurements().items())
        if f.comparison is not None and f.comparison.prior_measurement is not None:
            pairs.append(("comparison.prior_measurement", f.comparison.prior_measurement))
        for key, m in pairs:
            target = f"finding[{f.finding_id}].{key if key.startswith('comparison') else 'attributes.' + key}"
            try:
                units.validate_unit(m.unit, m.kind.value)
            except (UnknownUnit, DimensionMismatch) as exc:
                issues.append(ConsistencyIssue("C3", unit_sev, target, exc.message))
                continue
            lo, hi, range_unit = inp.policy.range_for(m.kind)
            value = m.converted(range_unit).value
            if not (lo <= value <= hi):
                issues.append(
                    ConsistencyIssue(
                        "C3",
                        range_sev,
                        target,
                        f"{m.display()} is outside the plausible range {lo}-{hi} {range_unit}",
                    )
                )


def _check_negation_contradiction(inp: CheckInput, issues: list[ConsistencyIssue]) -> None:
    severity = _sev(inp.policy, "C4", "error")
    present = {}
    absent = {}
    for f in inp.findings:
        bucket = present if f.presence is Presence.PRESENT else absent
        bucket.setdefault(f.type, f.finding_id)
    for ftype in sorted(set(present) & set(absent)):
        issues.append(
            ConsistencyIssue(
                "C4",
                severity,
                f"finding[{absent[ftype]}]",
                f"{ftype} is asserted present ({present[ftype]}) and absent ({absent[ftype]})",
            )
        )


def _check_unsupported_impression(inp: CheckInput, issues: list[ConsistencyIssue]) -> None:
    text = inp.report.section_text(SectionName.IMPRESSION)
    if not text:
        return
    for claim in detect_unsupported_claims(text, inp.findings, inp.lexicons):
        if claim.kind is ClaimKind.UNBACKED_NEGATIVE:
            severity = _sev(inp.policy, "C5_negative", "info")
            message = f"impression negates {claim.concept!r} with no structured absent finding"
        else:
            severity = _sev(inp.policy, "C5", "warning")
            message = f"impression mentions {claim.concept!r} with no supporting structured finding"
        issues.append(
            ConsistencyIssue("C5", severity, f"report.Impression[{claim.start}:{claim.end}]", message)
        )


def _check_prior_selection(inp: CheckInput, issues: list[ConsistencyIssue]) -> None:
    severity = _sev(inp.policy, "C6", "warning")
    for f in inp.findings:
        if f.comparison is None or f.comparison.prior_exam_date is None:
            continue
        date = f.comparison.prior_exam_date
        if not any(date.matches(ref.exam_date) for ref in inp.ctx.prior_refs):
            issues.append(
                ConsistencyIssue(
                    "C6",
                    severity,
                    f"finding[{f.finding_id}].comparison.prior_exam_date",
                    f"comparison date {date.iso()} matches no selected prior study",
                )
            )
    for row in inp.comparison_rows:
        if row.status in (ChangeStatus.NEW,):
            continue
        if not row.confirmed:
            issues.append(
                ConsistencyIssue(
                    "C6",
                    severity,
                    f"comparison[{row.lesion_id}]",
                    "prior pairing has not been confirmed",
                )
            )


def _check_template_mismatch(inp: CheckInput, issues: list[ConsistencyIssue]) -> None:
    severity = _sev(inp.policy, "C7", "warning")
    for name in inp.template_match.mismatches:
        issues.append(
            ConsistencyIssue(
                "C7",
                severity,
                f"template.selectors.{name}",
                f"study does not match the template's {name} selector",
            )
        )


def _check_reconciliation(inp: CheckInput, issues: list[ConsistencyIssue]) -> None:
    severity = _sev(inp.policy, "C8", "warning")
    findings_text = inp.report.section_text(SectionName.FINDINGS)
    if not findings_text:
        return  # narrative not composed yet; nothing to reconcile
    for f in inp.findings:
        section = f.final_sentence.section if f.final_sentence else SectionName.FINDINGS
        section_text = inp.report.section_text(section)
        for key, m in f.measurements().items():
            if m.display() not in section_text:
                issues.append(
                    ConsistencyIssue(
                        "C8",
                        severity,
                        f"finding[{f.finding_id}].attributes.{key}",
                        f"structured measurement {m.display()!r} does not appear in the "
                        f"{section.value} narrative",
                    )
                )
        if f.final_sentence and f.final_sentence.sentence not in section_text:
            issues.append(
                ConsistencyIssue(
                    "C8",
                    severity,
                    f"finding[{f.finding_id}].final_report_text",
                    "final sentence does not appear in the narrative",
                )
            )


def _check_change_arithmetic(inp: CheckInput, issues: list[ConsistencyIssue]) -> None:
    severity = _sev(inp.policy, "C9", "error")
    rows_by_finding = {row.finding_id: row for row in inp.comparison_rows if row.finding_id}
    for f in inp.findings:
        if f.comparison is None or f.comparison.change is ChangeStatus.INDETERMINATE:
            continue
        current = f.size()
        prior = f.comparison.prior_measurement
        if prior is None:
            row = rows_by_finding.get(f.finding_id)
            prior = row.prior_size if row else None
        if current is None or prior is None:
            continue
        try:
            computed = assign_change_status(current, prior, inp.policy.change)
        except MeasurementError:
            continue  # unit problems are C3's job
        if computed is ChangeStatus.INDETERMINATE:
            continue
        if computed is not f.comparison.change:
            issues.append(
                ConsistencyIssue(
                    "C9",
                    severity,
                    f"finding[{f.finding_id}].attributes.change",
                    f"declared change {f.comparison.change.value!r} but measurements "
                    f"({current.display()} vs {prior.display()}) imply {computed.value!r}",
                )
            )


def _check_unlinked(inp: CheckInput, issues: list[ConsistencyIssue]) -> None:
    severity = _sev(inp.policy, "C10", "warning")
    for f in inp.findings:
        if f.presence is Presence.PRESENT and f.measurements():
            if evidence_status(f) is EvidenceStatus.UNLINKED:
                issues.append(
                    ConsistencyIssue(
                        "C10",
                        severity,
                        f"finding[{f.finding_id}].evidence",
                        "measured finding has no evidence link",
                    )
                )


_RULES = (
    _check_laterality,
    _check_required_fields,
    _check_measurements,
    _check_negation_contradiction,
    _check_unsupported_impression,
    _check_prior_selection,
    _check_template_mismatch,
    _check_reconciliation,
    _check_change_arithmetic,
    _check_unlinked,
)


def run_checks(inp: CheckInput) -> list[ConsistencyIssue]:
    """Evaluate every rule; deterministic, order-stable, side-effect free."""
    issues: list[ConsistencyIssue] = []
    for rule in _RULES:
        rule(inp, issues)
    issues.sort(key=lambda i: (i.rule_id, i.target, i.message))
    return issues


def blocking_issues(
    issues: list[ConsistencyIssue], acknowledged: set[str]
) -> list[ConsistencyIssue]:
    """Errors always block; warnings block until acknowledged; info never."""
    out = []
    for issue in issues:
        if issue.severity is Severity.ERROR:
            out.append(issue)
        elif issue.severity is Severity.WARNING and issue.issue_id not in acknowledged:
            out.append(issue)
    return out
