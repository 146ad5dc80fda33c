"""Consistency rules C1-C10: clean-fixture soundness and seeded faults."""

from __future__ import annotations

import dataclasses
from decimal import Decimal

import pytest

from radstruct.checks import CheckInput, ConsistencyIssue, Severity, blocking_issues, run_checks
from radstruct.model.types import (
    AnatomicLocation,
    ChangeStatus,
    FinalSentence,
    Laterality,
    Measurement,
    Presence,
    SectionName,
    StructuredFinding,
)
from radstruct.templates import select_template, load_default_templates

from conftest import clean_check_input


@pytest.fixture
def clean() -> CheckInput:
    return clean_check_input()


def test_clean_fixture_has_zero_issues(clean):
    assert run_checks(clean) == []


def test_checker_is_idempotent(clean):
    assert run_checks(clean) == run_checks(clean)


def _replace_finding(inp: CheckInput, finding_id: str, **changes) -> CheckInput:
    findings = tuple(
        dataclasses.replace(f, **changes) if f.finding_id == finding_id else f for f in inp.findings
    )
    return dataclasses.replace(inp, findings=findings)


def _mutate_c1(inp: CheckInput) -> CheckInput:
    nodule = inp.findings[0]
    return _replace_finding(
        inp, "NODULE-01", location=AnatomicLocation(nodule.location.anatomical_site, Laterality.LEFT)
    )


def _mutate_c2(inp: CheckInput) -> CheckInput:
    nodule = inp.findings[0]
    attrs = {k: v for k, v in nodule.attributes.items() if k != "morphology"}
    return _replace_finding(inp, "NODULE-01", attributes=attrs)


def _mutate_c3(inp: CheckInput) -> CheckInput:
    # wrong unit recorded everywhere consistently, so only the unit rule fires
    nodule = inp.findings[0]
    attrs = dict(nodule.attributes)
    attrs["size"] = Measurement(Decimal(7), "mL")
    sentence = nodule.final_sentence.sentence.replace("7 mm", "7 mL")
    out = _replace_finding(
        inp,
        "NODULE-01",
        attributes=attrs,
        final_sentence=FinalSentence(sentence, SectionName.FINDINGS),
    )
    findings_text = inp.report.section_text(SectionName.FINDINGS).replace("7 mm", "7 mL")
    report = out.report.with_section(SectionName.FINDINGS, findings_text)
    report = dataclasses.replace(report, structured_findings=out.findings)
    return dataclasses.replace(out, report=report)


def _mutate_c4(inp: CheckInput) -> CheckInput:
    contradiction = StructuredFinding(
        finding_id="NODULE-02",
        type="pulmonary_nodule",
        presence=Presence.ABSENT,
        location=AnatomicLocation("right_upper_lobe", Laterality.RIGHT),
        provenance=inp.findings[0].provenance,
    )
    return dataclasses.replace(inp, findings=inp.findings + (contradiction,))


def _mutate_c5(inp: CheckInput) -> CheckInput:
    text = inp.report.section_text(SectionName.IMPRESSION) + "\nSuspicious mass."
    return dataclasses.replace(inp, report=inp.report.with_section(SectionName.IMPRESSION, text))


def _mutate_c6(inp: CheckInput) -> CheckInput:
    nodule = inp.findings[0]
    from radstruct.model.types import PartialDate

    comparison = dataclasses.replace(nodule.comparison, prior_exam_date=PartialDate(2025, 10, 3))
    return _replace_finding(inp, "NODULE-01", comparison=comparison)


def _mutate_c7(inp: CheckInput) -> CheckInput:
    ctx = dataclasses.replace(inp.ctx, body_region="abdomen")
    match = select_template(ctx, load_default_templates())
    return dataclasses.replace(inp, ctx=ctx, template_match=match)


def _mutate_c8(inp: CheckInput) -> CheckInput:
    text = inp.report.section_text(SectionName.FINDINGS).replace("7 mm", "8 mm")
    return dataclasses.replace(inp, report=inp.report.with_section(SectionName.FINDINGS, text))


def _mutate_c9(inp: CheckInput) -> CheckInput:
    nodule = inp.findings[0]
    comparison = dataclasses.replace(nodule.comparison, change=ChangeStatus.INCREASED)
    return _replace_finding(inp, "NODULE-01", comparison=comparison)


MUTATIONS = {
    "C1": _mutate_c1,
    "C2": _mutate_c2,
    "C3": _mutate_c3,
    "C4": _mutate_c4,
    "C5": _mutate_c5,
    "C6": _mutate_c6,
    "C7": _mutate_c7,
    "C8": _mutate_c8,
    "C9": _mutate_c9,
}


@pytest.mark.parametrize("rule_id", sorted(MUTATIONS))
def test_seeded_fault_detected_by_exactly_its_rule(rule_id, clean):
    mutated = MUTATIONS[rule_id](clean)
    issues = run_checks(mutated)
    fired = {issue.rule_id for issue in issues}
    assert fired == {rule_id}, (rule_id, [(i.rule_id, i.target, i.message) for i in issues])


def test_seeded_corpus_detection_is_9_of_9(clean):
    detected = sum(
        1
        for rule_id, mutate in MUTATIONS.items()
        if rule_id in {i.rule_id for i in run_checks(mutate(clean))}
    )
    assert detected == 9


def test_c10_unlinked_measured_finding(clean):
    mutated = _replace_finding(clean, "NODULE-01", evidence=())
    issues = run_checks(mutated)
    assert any(i.rule_id == "C10" for i in issues)
    c10 = [i for i in issues if i.rule_id == "C10"][0]
    assert c10.severity is Severity.WARNING


def test_severity_assignment(clean):
    mutated = _mutate_c1(clean)
    assert all(i.severity is Severity.ERROR for i in run_checks(mutated))
    mutated = _mutate_c5(clean)
    assert all(i.severity is Severity.WARNING for i in run_checks(mutated))


def test_unbacked_negative_is_info(clean):
    text = clean.report.section_text(SectionName.IMPRESSION) + "\nNo pneumothorax."
    mutated = dataclasses.replace(clean, report=clean.report.with_section(SectionName.IMPRESSION, text))
    issues = run_checks(mutated)
    assert [i.severity for i in issues if i.rule_id == "C5"] == [Severity.INFO]


def test_blocking_semantics():
    error = ConsistencyIssue("C1", Severity.ERROR, "finding[X].location", "boom")
    warning = ConsistencyIssue("C10", Severity.WARNING, "finding[X].evidence", "unlinked")
    info = ConsistencyIssue("C5", Severity.INFO, "report.Impression[0:4]", "note")
    issues = [error, warning, info]
    assert blocking_issues(issues, set()) == [error, warning]
    assert blocking_issues(issues, {warning.issue_id}) == [error]
    # errors cannot be acknowledged away
    assert blocking_issues(issues, {error.issue_id, warning.issue_id}) == [error]


def test_c6_unconfirmed_pairing_warns(clean):
    rows = tuple(dataclasses.replace(r, confirmed=False) for r in clean.comparison_rows)
    mutated = dataclasses.replace(clean, comparison_rows=rows)
    issues = run_checks(mutated)
    assert {i.rule_id for i in issues} == {"C6"}


def test_c3_range_warning(clean):
    nodule = clean.findings[0]
    attrs = dict(nodule.attributes)
    attrs["size"] = Measurement(Decimal(9999), "mm")
    sentence = nodule.final_sentence.sentence.replace("7 mm", "9999 mm")
    mutated = _replace_finding(
        clean, "NODULE-01", attributes=attrs, final_sentence=FinalSentence(sentence, SectionName.FINDINGS)
    )
    text = clean.report.section_text(SectionName.FINDINGS).replace("7 mm", "9999 mm")
    mutated = dataclasses.replace(mutated, report=mutated.report.with_section(SectionName.FINDINGS, text))
    issues = [i for i in run_checks(mutated) if i.rule_id == "C3"]
    assert issues and all(i.severity is Severity.WARNING for i in issues)
