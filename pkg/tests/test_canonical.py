"""Canonical interchange document: parse, serialize, round trip."""

from __future__ import annotations

import random
from decimal import Decimal

import pytest

from radstruct.errors import CanonicalParseError, ModelValidationError
from radstruct.model import parse_canonical, serialize_canonical
from radstruct.model.jsonio import loads_decimal
from radstruct.model.types import ChangeStatus, Laterality, Presence, ReviewStatus

from conftest import FIXTURES, random_fragment

CANONICAL_DOC = (FIXTURES / "ct_nodule_followup" / "canonical_finding.json").read_text()


def test_parse_reference_document():
    fragment = parse_canonical(CANONICAL_DOC)
    assert fragment.study.study_uid == "1.2.840.113619.2.55.3.604688654.781.1732891000.467"
    assert fragment.study.modality.value == "CT"
    assert fragment.template_id == "ct_pulmonary_nodule_followup_v1"
    f = fragment.finding
    assert f.finding_id == "NODULE-01"
    assert f.type == "pulmonary_nodule"
    assert f.presence is Presence.PRESENT
    assert f.location.anatomical_site == "right_upper_lobe"
    assert f.location.laterality is Laterality.RIGHT
    assert f.size() is not None and f.size().value == Decimal(7) and f.size().unit == "mm"
    assert f.attributes["morphology"] == "solid"
    assert f.comparison is not None
    assert f.comparison.change is ChangeStatus.STABLE
    assert f.comparison.prior_finding_id == "NODULE-01"
    assert f.comparison.prior_measurement.value == Decimal(7)
    assert f.comparison.prior_exam_date.iso() == "2025-11-03"
    assert {(r.kind.value, r.prior) for r in f.evidence} == {
        ("image", False),
        ("image", True),
        ("measurement_object", False),
        ("segmentation_object", False),
    }
    assert f.provenance.review_status is ReviewStatus.APPROVED
    assert f.provenance.actor_role.value == "radiologist"
    assert f.provenance.segmentation_source == "ai_generated_reviewed"
    assert f.final_sentence.sentence == (
        "Stable 7 mm solid right upper lobe pulmonary nodule compared with the prior CT."
    )


def _assert_value_subset(reference, produced, path=""):
    """Every value in the reference document must appear in the produced one."""
    if isinstance(reference, dict):
        assert isinstance(produced, dict), f"{path}: expected object"
        for key, value in reference.items():
            assert key in produced, f"{path}.{key}: missing from serialized document"
            _assert_value_subset(value, produced[key], f"{path}.{key}")
    elif isinstance(reference, list):
        assert reference == produced, f"{path}: list mismatch"
    else:
        assert produced == reference, f"{path}: {produced!r} != {reference!r}"


def test_serialize_reproduces_reference_values():
    fragment = parse_canonical(CANONICAL_DOC)
    produced = loads_decimal(serialize_canonical(fragment))
    _assert_value_subset(loads_decimal(CANONICAL_DOC), produced)
    assert produced["schema_version"] == "1.0"


def test_laterality_site_conflict_rejected():
    text = CANONICAL_DOC.replace('"laterality": "right"', '"laterality": "left"')
    with pytest.raises(ModelValidationError) as err:
        parse_canonical(text)
    assert "location" in str(err.value)


def test_empty_document_is_a_parse_error():
    with pytest.raises(CanonicalParseError):
        parse_canonical("")


def test_parse_error_carries_byte_offset():
    with pytest.raises(CanonicalParseError) as err:
        parse_canonical('{"study": }')
    assert err.value.offset == 10


def test_unknown_key_rejected():
    text = CANONICAL_DOC.replace('"modality": "CT",', '"modality": "CT", "bogus": 1,')
    with pytest.raises(ModelValidationError) as err:
        parse_canonical(text)
    assert "study.bogus" in str(err.value)


def test_absent_optionals_are_omitted(tmp_path):
    rng = random.Random(7)
    fragment = random_fragment(rng)
    no_comparison = fragment.finding
    while no_comparison.comparison is None:
        from conftest import random_finding

        no_comparison = random_finding(rng)
    import dataclasses

    stripped = dataclasses.replace(no_comparison, comparison=None)
    doc = loads_decimal(serialize_canonical(dataclasses.replace(fragment, finding=stripped)))
    assert "comparison" not in doc["finding"]
    assert "change" not in doc["finding"]["attributes"]


def test_round_trip_200_random_fragments():
    rng = random.Random(20260524)
    for _ in range(200):
        fragment = random_fragment(rng)
        text = serialize_canonical(fragment)
        back = parse_canonical(text)
        assert back.study == fragment.study
        assert back.template_id == fragment.template_id
        assert back.finding == fragment.finding


def test_serialize_is_deterministic():
    rng = random.Random(99)
    fragment = random_fragment(rng)
    assert serialize_canonical(fragment) == serialize_canonical(fragment)


# every leaf key of the reference document and the typed field it lands on
REFERENCE_KEY_MAP = {
    "study.study_uid": "StudyContext.study_uid",
    "study.modality": "StudyContext.modality",
    "study.template_id": "CanonicalFragment.template_id",
    "study.exam_date": "StudyContext.exam_date",
    "finding.finding_id": "StructuredFinding.finding_id",
    "finding.type": "StructuredFinding.type",
    "finding.location.anatomical_site": "AnatomicLocation.anatomical_site",
    "finding.location.laterality": "AnatomicLocation.laterality",
    "finding.attributes.size_mm": "StructuredFinding.attributes[size]",
    "finding.attributes.morphology": "StructuredFinding.attributes[morphology]",
    "finding.attributes.change": "Comparison.change",
    "finding.comparison.prior_exam_date": "Comparison.prior_exam_date",
    "finding.comparison.prior_finding_id": "Comparison.prior_finding_id",
    "finding.comparison.prior_size_mm": "Comparison.prior_measurement",
    "evidence.current_image_reference.series": "EvidenceRef.series",
    "evidence.current_image_reference.image": "EvidenceRef.image",
    "evidence.prior_image_reference.series": "EvidenceRef.series",
    "evidence.prior_image_reference.image": "EvidenceRef.image",
    "evidence.measurement_object": "EvidenceRef.object_id",
    "evidence.segmentation_object": "EvidenceRef.object_id",
    "terminology.finding_code": "TerminologyBinding.finding_code",
    "terminology.anatomy_code": "TerminologyBinding.anatomy_code",
    "terminology.unit": "TerminologyBinding.unit",
    "provenance.measurement_source": "Provenance.measurement_source",
    "provenance.segmentation_source": "Provenance.segmentation_source",
    "provenance.comparison_source": "Provenance.comparison_source",
    "provenance.review_status": "Provenance.review_status",
    "provenance.reviewer_role": "Provenance.actor_role",
    "final_report_text.sentence": "FinalSentence.sentence",
    "final_report_text.section": "FinalSentence.section",
}


def _leaf_paths(doc, prefix=""):
    if isinstance(doc, dict):
        for key, value in doc.items():
            yield from _leaf_paths(value, f"{prefix}.{key}" if prefix else key)
    else:
        yield prefix


def test_every_reference_key_maps_to_one_typed_field():
    paths = set(_leaf_paths(loads_decimal(CANONICAL_DOC)))
    assert paths == set(REFERENCE_KEY_MAP)
    assert len(set(REFERENCE_KEY_MAP.keys())) == len(REFERENCE_KEY_MAP)
