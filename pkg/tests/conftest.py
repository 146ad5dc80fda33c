"""Shared fixtures: repo paths and a seeded generator of valid findings."""

from __future__ import annotations

import datetime as dt
import random
from decimal import Decimal
from pathlib import Path

import pytest

from radstruct.model.types import (
    ActorRole,
    AnatomicLocation,
    CanonicalFragment,
    ChangeStatus,
    CodedConcept,
    CodeSystem,
    Comparison,
    EvidenceKind,
    EvidenceRef,
    FinalSentence,
    Laterality,
    Measurement,
    MeasurementKind,
    Modality,
    PartialDate,
    Presence,
    PriorStudyRef,
    Provenance,
    ProvenanceSource,
    ReviewStatus,
    SectionName,
    StructuredFinding,
    StudyContext,
    TerminologyBinding,
    Uncertainty,
    site_sidedness,
)

REPO_ROOT = Path(__file__).resolve().parents[1]
FIXTURES = REPO_ROOT / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


_SITES = [
    "right_upper_lobe",
    "right_middle_lobe",
    "right_lower_lobe",
    "left_upper_lobe",
    "left_lower_lobe",
    "liver",
    "right_kidney",
    "left_kidney",
    None,
]
_TYPES = ["pulmonary_nodule", "mass", "pleural_effusion", "cyst", "lymph_node"]
_MORPHOLOGIES = ["solid", "part_solid", "ground_glass", "calcified", "spiculated"]


def _random_measurement(rng: random.Random) -> Measurement:
    pick = rng.random()
    if pick < 0.6:
        unit, kind = ("mm", MeasurementKind.LINEAR) if rng.random() < 0.7 else ("cm", MeasurementKind.LINEAR)
        value = Decimal(rng.randint(1, 400)) / (Decimal(10) if unit == "cm" else Decimal(1))
    elif pick < 0.75:
        unit, kind = "mL", MeasurementKind.VOLUME
        value = Decimal(rng.randint(1, 5000)) / Decimal(10)
    elif pick < 0.9:
        unit, kind = "{SUVbw}g/mL", rng.choice([MeasurementKind.SUV_MAX, MeasurementKind.SUV_MEAN])
        value = Decimal(rng.randint(10, 300)) / Decimal(10)
    else:
        unit, kind = "cm/s", MeasurementKind.VELOCITY
        value = Decimal(rng.randint(10, 2000)) / Decimal(10)
    dims = None
    if kind is MeasurementKind.LINEAR and rng.random() < 0.2:
        dims = tuple(sorted((value, value / 2), reverse=True))
    return Measurement(value, unit, kind, dims)


def _random_evidence(rng: random.Random, allow_segmentation: bool) -> list[EvidenceRef]:
    refs: list[EvidenceRef] = []
    if rng.random() < 0.8:
        refs.append(EvidenceRef(EvidenceKind.IMAGE, series=rng.randint(1, 9), image=rng.randint(1, 500)))
    if rng.random() < 0.4:
        refs.append(
            EvidenceRef(EvidenceKind.IMAGE, series=rng.randint(1, 9), image=rng.randint(1, 500), prior=True)
        )
    if rng.random() < 0.6:
        refs.append(EvidenceRef(EvidenceKind.MEASUREMENT_OBJECT, object_id=f"MEAS_{rng.randint(1, 999):03d}"))
    if allow_segmentation and rng.random() < 0.4:
        refs.append(EvidenceRef(EvidenceKind.SEGMENTATION_OBJECT, object_id=f"SEG_{rng.randint(1, 999):03d}"))
    if rng.random() < 0.2:
        refs.append(EvidenceRef(EvidenceKind.WORKSHEET_VALUE, object_id=f"WS_{rng.randint(1, 99):02d}"))
    if rng.random() < 0.15:
        refs.append(
            EvidenceRef(EvidenceKind.IMAGE, series=rng.randint(1, 9), image=rng.randint(1, 500))
        )
    return refs


def random_finding(rng: random.Random, finding_id: str | None = None) -> StructuredFinding:
    """A random finding that satisfies every model invariant."""
    ftype = rng.choice(_TYPES)
    presence = Presence.PRESENT if rng.random() < 0.8 else Presence.ABSENT
    site = rng.choice(_SITES)
    laterality = site_sidedness(site) if site else None
    if laterality is None:
        laterality = rng.choice([Laterality.NOT_APPLICABLE, Laterality.MIDLINE, Laterality.BILATERAL])
    location = AnatomicLocation(anatomical_site=site, laterality=laterality)

    attributes: dict = {}
    comparison = None
    evidence: list[EvidenceRef] = []
    if presence is Presence.PRESENT:
        if rng.random() < 0.85:
            attributes["size"] = _random_measurement(rng)
        if rng.random() < 0.7:
            attributes["morphology"] = rng.choice(_MORPHOLOGIES)
        if rng.random() < 0.2:
            attributes["margin"] = rng.choice(["smooth", "irregular", "lobulated"])
        if rng.random() < 0.6:
            change = rng.choice(list(ChangeStatus))
            prior_measurement = None
            prior_finding_id = None
            if change in (ChangeStatus.STABLE, ChangeStatus.INCREASED, ChangeStatus.DECREASED):
                if rng.random() < 0.5:
                    prior_measurement = _random_measurement(rng)
                else:
                    prior_finding_id = f"{ftype.upper()}-{rng.randint(1, 9):02d}"
            comparison = Comparison(
                change=change,
                prior_exam_date=rng.choice(
                    [
                        None,
                        PartialDate(2025, 11, 3),
                        PartialDate(2025, 11),
                        PartialDate(2024),
                    ]
                ),
                prior_finding_id=prior_finding_id,
                prior_measurement=prior_measurement,
                prior_modality=rng.choice([None, Modality.CT, Modality.MR]),
            )
        evidence = _random_evidence(rng, allow_segmentation=True)
    else:
        evidence = [ref for ref in _random_evidence(rng, allow_segmentation=False) if rng.random() < 0.3]

    review_status = rng.choice(list(ReviewStatus))
    actor = ActorRole.RADIOLOGIST if review_status is ReviewStatus.APPROVED else rng.choice(list(ActorRole))
    source = rng.choice(list(ProvenanceSource))
    provenance = Provenance(
        actor_role=actor,
        review_status=review_status,
        source=source,
        timestamp=dt.datetime(2026, 5, 24, 12, 0, tzinfo=dt.timezone.utc),
        model_version="ref-rules-1.0" if source is ProvenanceSource.AI_MODULE_OUTPUT else None,
        measurement_source=rng.choice([None, "radiologist_confirmed_measurement"]),
        segmentation_source=rng.choice([None, "ai_generated_reviewed"]),
        comparison_source=rng.choice([None, "prior_report_and_image_review"]),
    )
    final_sentence = None
    if review_status in (ReviewStatus.APPROVED, ReviewStatus.EDITED) and rng.random() < 0.5:
        final_sentence = FinalSentence("Example sentence.", SectionName.FINDINGS)

    size = attributes.get("size")
    terminology = TerminologyBinding(
        unit=size.unit if isinstance(size, Measurement) else "mm",
        finding_code=rng.choice(
            [None, CodedConcept(CodeSystem.LOCAL, f"example_{ftype}_code"), CodedConcept(CodeSystem.RADLEX, "RID50149")]
        ),
        anatomy_code=CodedConcept(CodeSystem.LOCAL, f"example_{site}_code") if site else None,
    )
    return StructuredFinding(
        finding_id=finding_id or f"{ftype.rsplit('_', 1)[-1].upper()}-{rng.randint(1, 99):02d}",
        type=ftype,
        presence=presence,
        location=location,
        attributes=attributes,
        comparison=comparison,
        evidence=tuple(evidence),
        terminology=terminology,
        provenance=provenance,
        final_sentence=final_sentence,
        uncertainty=rng.choice(list(Uncertainty)),
    )


def random_study(rng: random.Random) -> StudyContext:
    exam_date = dt.date(2026, rng.randint(1, 12), rng.randint(1, 28))
    priors = []
    for i in range(rng.randint(0, 2)):
        priors.append(
            PriorStudyRef(
                study_uid=f"1.2.840.99.{rng.randint(1000, 9999)}.{i}",
                exam_date=exam_date - dt.timedelta(days=rng.randint(30, 400)),
                modality=rng.choice(list(Modality)),
                protocol=rng.choice([None, "low_dose", "contrast"]),
            )
        )
    return StudyContext(
        study_uid=f"1.2.840.113619.2.{rng.randint(10**8, 10**9)}",
        modality=rng.choice(list(Modality)),
        exam_date=exam_date,
        accession=rng.choice([None, f"ACC{rng.randint(10000, 99999)}"]),
        body_region=rng.choice([None, "chest", "abdomen", "whole_body"]),
        protocol=rng.choice([None, "low_dose", "contrast"]),
        indication=rng.choice([None, "nodule follow-up"]),
        follow_up=rng.random() < 0.5,
        prior_refs=tuple(priors),
    )


def random_fragment(rng: random.Random) -> CanonicalFragment:
    return CanonicalFragment(
        study=random_study(rng),
        finding=random_finding(rng),
        template_id=rng.choice([None, "ct_pulmonary_nodule_followup_v1", "abdominal_ultrasound_v1"]),
    )


def random_export_view(rng: random.Random):
    """A random approved-session projection for the export encoders."""
    from radstruct.interop import ExportView
    from radstruct.model.types import ReportDocument, ReportSection

    findings = tuple(random_finding(rng, finding_id=f"F-{i:02d}") for i in range(rng.randint(1, 4)))
    report = ReportDocument(
        sections=(
            ReportSection(SectionName.FINDINGS, "narrative"),
            ReportSection(SectionName.IMPRESSION, "impression"),
        ),
        structured_findings=findings,
    )
    return ExportView(
        ctx=random_study(rng),
        template_id="generic_v1",
        findings=findings,
        report=report,
        comparison_rows=(),
        state="approved",
    )


def clean_check_input():
    """A fully consistent CT follow-up session snapshot (zero issues)."""
    import dataclasses

    from radstruct.checks import CheckInput
    from radstruct.compose import compose_report, draft_impression
    from radstruct.model.types import (
        Comparison,
        EvidenceRef,
        FinalSentence,
        PartialDate,
    )
    from radstruct.parsing import load_default_lexicons
    from radstruct.policy import load_policy
    from radstruct.templates import load_default_templates, select_template
    from radstruct.tracking import (
        LesionRegistry,
        LesionTrack,
        TrackEntry,
        build_comparison_table,
        match_lesions,
    )

    lexicons = load_default_lexicons()
    registry_templates = load_default_templates()
    policy = load_policy()

    prior = PriorStudyRef(
        study_uid="1.2.840.113619.2.55.3.604688654.781.1700000000.001",
        exam_date=dt.date(2025, 11, 3),
        modality=Modality.CT,
        protocol="low_dose",
    )
    ctx = StudyContext(
        study_uid="1.2.840.113619.2.55.3.604688654.781.1732891000.467",
        modality=Modality.CT,
        exam_date=dt.date(2026, 5, 24),
        accession="ACC20260524",
        body_region="chest",
        protocol="low_dose",
        indication="Pulmonary nodule follow-up.",
        follow_up=True,
        prior_refs=(prior,),
    )
    match = select_template(ctx, registry_templates)
    template = registry_templates.get(match.template_id, match.version)

    approved = Provenance(
        ActorRole.RADIOLOGIST,
        ReviewStatus.APPROVED,
        source=ProvenanceSource.DICTATION_EXTRACTED,
        timestamp=dt.datetime(2026, 5, 24, 12, 0, tzinfo=dt.timezone.utc),
        measurement_source="radiologist_confirmed_measurement",
        segmentation_source="ai_generated_reviewed",
        comparison_source="prior_report_and_image_review",
    )
    nodule = StructuredFinding(
        finding_id="NODULE-01",
        type="pulmonary_nodule",
        presence=Presence.PRESENT,
        location=AnatomicLocation("right_upper_lobe", Laterality.RIGHT),
        attributes={"size": Measurement(Decimal(7), "mm"), "morphology": "solid"},
        comparison=Comparison(
            change=ChangeStatus.STABLE,
            prior_exam_date=PartialDate(2025, 11, 3),
            prior_finding_id="NODULE-01",
            prior_measurement=Measurement(Decimal(7), "mm"),
            prior_modality=Modality.CT,
        ),
        evidence=(
            EvidenceRef(EvidenceKind.IMAGE, series=3, image=142),
            EvidenceRef(EvidenceKind.IMAGE, series=2, image=138, prior=True),
            EvidenceRef(EvidenceKind.MEASUREMENT_OBJECT, object_id="DICOM_SR_TID1500_MEASUREMENT_001"),
            EvidenceRef(EvidenceKind.SEGMENTATION_OBJECT, object_id="DICOM_SEG_NODULE_001"),
        ),
        terminology=TerminologyBinding(
            unit="mm",
            finding_code=CodedConcept(CodeSystem.LOCAL, "example_pulmonary_nodule_code"),
            anatomy_code=CodedConcept(CodeSystem.LOCAL, "example_right_upper_lobe_code"),
        ),
        provenance=approved,
        final_sentence=FinalSentence(
            "Stable 7 mm solid right upper lobe pulmonary nodule compared with the prior CT.",
            SectionName.FINDINGS,
        ),
    )
    effusion = StructuredFinding(
        finding_id="EFFUSION-01",
        type="pleural_effusion",
        presence=Presence.ABSENT,
        location=AnatomicLocation(),
        terminology=TerminologyBinding(
            unit="mm", finding_code=CodedConcept(CodeSystem.LOCAL, "example_pleural_effusion_code")
        ),
        provenance=approved,
        final_sentence=FinalSentence("No pleural effusion.", SectionName.FINDINGS),
    )
    findings = (nodule, effusion)

    lesion_registry = LesionRegistry(
        [
            LesionTrack(
                lesion_id="NODULE-01",
                type="pulmonary_nodule",
                location=AnatomicLocation("right_upper_lobe", Laterality.RIGHT),
                history=(
                    TrackEntry(
                        study_uid=prior.study_uid,
                        exam_date=prior.exam_date,
                        measurement=Measurement(Decimal(7), "mm"),
                        evidence=(EvidenceRef(EvidenceKind.IMAGE, series=2, image=138, prior=False),),
                        modality=Modality.CT,
                        protocol="low_dose",
                    ),
                ),
            )
        ]
    )
    proposal = match_lesions(findings, lesion_registry, template.allowed_finding_types)
    proposal = dataclasses.replace(
        proposal,
        pairings=tuple(dataclasses.replace(p, confirmed=True) for p in proposal.pairings),
    )
    rows = build_comparison_table(ctx, findings, proposal, lesion_registry, policy.change)
    rows = [dataclasses.replace(r, confirmed=True) for r in rows]

    report, _ = compose_report(ctx, template, findings, lexicons, confirmed_prior=prior)
    items, _ = draft_impression(findings, template, lexicons)
    report = report.with_section(SectionName.IMPRESSION, "\n".join(i.text for i in items))

    return CheckInput(
        ctx=ctx,
        template=template,
        template_match=match,
        findings=findings,
        report=report,
        comparison_rows=tuple(rows),
        lexicons=lexicons,
        policy=policy,
    )
