"""Acceptance suite: one test per exit criterion, each printing PASS/FAIL.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines alongside the pytest verdicts.
"""

from __future__ import annotations

import itertools
import json
import random
import time
from decimal import Decimal
from pathlib import Path

import pytest

from radstruct.checks import run_checks
from radstruct.compose import compose_finding_sentence
from radstruct.errors import ExportBlocked
from radstruct.interop import export_fhir, export_sr, parity_check
from radstruct.interop.schemas import validate_document
from radstruct.model import parse_canonical, serialize_canonical
from radstruct.model.jsonio import loads_decimal
from radstruct.model.types import (
    ActorRole,
    AnatomicLocation,
    ChangeStatus,
    Comparison,
    Laterality,
    Measurement,
    Modality,
    Presence,
    Provenance,
    ProvenanceSource,
    ReviewStatus,
    StructuredFinding,
    site_sidedness,
)
from radstruct.parsing import load_default_lexicons, parse_transcript
from radstruct.policy import load_policy
from radstruct.templates import load_default_templates
from radstruct.tracking import LesionRegistry
from radstruct.workflow import Actor, EngineService, SessionStore
from radstruct.workflow.cli import main as cli_main

from conftest import FIXTURES, clean_check_input, random_export_view, random_fragment

LEX = load_default_lexicons()
TEMPLATES = load_default_templates()
POLICY = load_policy()
CT = FIXTURES / "ct_nodule_followup"

RAD = Actor("dr-blake", ActorRole.RADIOLOGIST)
SYS = Actor("ingest-bot", ActorRole.SYSTEM)

GOLDEN_SENTENCE = "Stable 7 mm solid right upper lobe pulmonary nodule compared with the prior CT."


def _report(criterion: int, passed: bool, detail: str) -> None:
    print(f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} - {detail}")
    assert passed, detail


def _ct_service(root: Path) -> tuple[EngineService, str]:
    service = EngineService(SessionStore(root), TEMPLATES, LEX, POLICY)
    snapshot = service.create_session(
        json.loads((CT / "ctx.json").read_text()),
        SYS,
        evidence_objects=json.loads((CT / "evidence.json").read_text()),
        registry_file=CT / "registry.json",
    )
    return service, snapshot["session_id"]


def test_criterion_1_dictation_mapping_reproduced():
    started = time.perf_counter()
    result = parse_transcript((CT / "transcript.txt").read_text().strip(), LEX)
    elapsed = time.perf_counter() - started

    nodule, effusion = result.findings
    values = {
        "finding": nodule.type == "pulmonary_nodule",
        "size": nodule.size() == Measurement(Decimal(7), "mm"),
        "morphology": nodule.attributes.get("morphology") == "solid",
        "location": nodule.location.anatomical_site == "right_upper_lobe"
        and nodule.location.laterality is Laterality.RIGHT,
        "change": nodule.comparison.change is ChangeStatus.STABLE,
        "comparison": nodule.comparison.prior_exam_date.iso() == "2025-11"
        and nodule.comparison.prior_modality is Modality.CT,
        "negative": effusion.type == "pleural_effusion" and effusion.presence is Presence.ABSENT,
    }
    _report(
        1,
        all(values.values()) and len(result.findings) == 2 and elapsed < 1.0,
        f"seven dictation values exact ({elapsed * 1000:.0f} ms)",
    )


def test_criterion_2_comparison_record_reproduced(tmp_path):
    service, session_id = _ct_service(tmp_path)
    service.submit_transcript(session_id, (CT / "transcript.txt").read_text(), SYS)
    snapshot = service.confirm_comparison(session_id, RAD)
    rows = snapshot["comparison_rows"]
    expected = {
        "lesion_id": "NODULE-01",
        "location": "Right upper lobe",
        "current_size": "7 mm",
        "prior_size": "7 mm",
        "status": "Stable",
        "current_evidence": "Series 3, image 142",
        "prior_evidence": "Series 2, image 138",
    }
    _report(
        2,
        len(rows) == 1 and rows[0]["display"] == expected,
        "comparison table matches the longitudinal record field-for-field",
    )


def test_criterion_3_golden_sentence_byte_exact():
    fragment = parse_canonical((CT / "canonical_finding.json").read_text())
    sentence, _ = compose_finding_sentence(
        fragment.finding,
        TEMPLATES.get("ct_pulmonary_nodule_followup_v1"),
        LEX,
        study_modality=fragment.study.modality,
    )
    _report(3, sentence == GOLDEN_SENTENCE, "composed sentence is byte-exact")


def test_criterion_4_canonical_round_trip():
    text = (CT / "canonical_finding.json").read_text()
    fragment = parse_canonical(text)
    produced = loads_decimal(serialize_canonical(fragment))

    def subset(reference, candidate) -> bool:
        if isinstance(reference, dict):
            return isinstance(candidate, dict) and all(
                k in candidate and subset(v, candidate[k]) for k, v in reference.items()
            )
        return candidate == reference

    reference_ok = subset(loads_decimal(text), produced)

    rng = random.Random(20260524)
    random_ok = True
    for _ in range(200):
        case = random_fragment(rng)
        back = parse_canonical(serialize_canonical(case))
        if back != case:
            random_ok = False
            break
    _report(
        4,
        reference_ok and random_ok,
        "reference document values reproduced; 200 random fragments round-trip losslessly",
    )


def test_criterion_5_seeded_fault_detection():
    from test_checks import MUTATIONS

    started = time.perf_counter()
    clean = clean_check_input()
    clean_ok = run_checks(clean) == []
    detected = 0
    exact = True
    for rule_id, mutate in sorted(MUTATIONS.items()):
        fired = {issue.rule_id for issue in run_checks(mutate(clean))}
        if rule_id in fired:
            detected += 1
        if fired != {rule_id}:
            exact = False
    elapsed = time.perf_counter() - started
    _report(
        5,
        clean_ok and detected == 9 and exact and elapsed < 5.0,
        f"clean fixture 0 issues; 9/9 seeded faults fired exactly their rule ({elapsed:.2f} s)",
    )


def test_criterion_6_export_gate_and_parity(tmp_path):
    # exhaustive gate over the state machine
    gate_ok = True
    for state in ("created", "parsed", "under_review", "rejected"):
        service, session_id = _ct_service(tmp_path / state)
        if state != "created":
            service.submit_transcript(session_id, (CT / "transcript.txt").read_text(), SYS)
        if state in ("under_review", "rejected"):
            service.confirm_comparison(session_id, RAD)
            service.draft(session_id, RAD)
        if state == "rejected":
            service.reject(session_id, RAD)
        try:
            service.export(session_id, RAD)
            gate_ok = False
        except ExportBlocked:
            pass

    rng = random.Random(20260601)
    parity_ok = True
    for _ in range(50):
        view = random_export_view(rng)
        fhir = export_fhir(view)
        sr = export_sr(view)
        validate_document(fhir, "fhir_bundle")
        validate_document(sr, "sr_measurement_report")
        if parity_check(fhir, sr) != []:
            parity_ok = False
            break
    _report(
        6,
        gate_ok and parity_ok,
        "export refused outside approved; 50 random sessions schema-valid with empty parity",
    )


def test_criterion_7_compose_parse_round_trip():
    started = time.perf_counter()
    template = TEMPLATES.get("ct_pulmonary_nodule_followup_v1")
    types = ["pulmonary_nodule", "mass", "consolidation", "lymph_node"]
    sites = ["right_upper_lobe", "right_middle_lobe", "right_lower_lobe", "left_upper_lobe", "left_lower_lobe"]
    morphologies = ["solid", "part_solid", "ground_glass", "calcified", "spiculated"]
    changes = [None, ChangeStatus.STABLE, ChangeStatus.INCREASED, ChangeStatus.DECREASED, ChangeStatus.NEW]
    sizes = [Measurement(Decimal(7), "mm"), Measurement(Decimal("1.2"), "cm")]
    provenance = Provenance(
        ActorRole.RADIOLOGIST, ReviewStatus.APPROVED, source=ProvenanceSource.DICTATION_EXTRACTED
    )

    cases = 0
    failures = []
    for ftype, site, morphology, change, size in itertools.product(
        types, sites, morphologies, changes, sizes
    ):
        comparison = None
        if change is not None:
            comparison = Comparison(change=change, prior_finding_id="PRIOR-01")
        finding = StructuredFinding(
            finding_id="F-01",
            type=ftype,
            presence=Presence.PRESENT,
            location=AnatomicLocation(site, site_sidedness(site)),
            attributes={"size": size, "morphology": morphology},
            comparison=comparison,
            provenance=provenance,
        )
        sentence, _ = compose_finding_sentence(finding, template, LEX, study_modality=Modality.CT)
        parsed = parse_transcript(sentence, LEX).findings
        cases += 1
        ok = (
            len(parsed) == 1
            and parsed[0].type == ftype
            and parsed[0].presence is Presence.PRESENT
            and parsed[0].location.laterality is site_sidedness(site)
            and parsed[0].size() is not None
            and parsed[0].size().value == size.value
            and parsed[0].size().unit == size.unit
            and parsed[0].attributes.get("morphology") == morphology
            and (
                (change is None and (parsed[0].comparison is None))
                or (change is not None and parsed[0].comparison is not None
                    and parsed[0].comparison.change is change)
            )
        )
        if not ok:
            failures.append(sentence)

    for ftype in ["pleural_effusion", "pneumothorax", "pericardial_effusion", "gallstone"]:
        finding = StructuredFinding(
            finding_id="N-01",
            type=ftype,
            presence=Presence.ABSENT,
            location=AnatomicLocation(),
            provenance=provenance,
        )
        sentence, _ = compose_finding_sentence(finding, template, LEX)
        parsed = parse_transcript(sentence, LEX).findings
        cases += 1
        if not (len(parsed) == 1 and parsed[0].type == ftype and parsed[0].presence is Presence.ABSENT):
            failures.append(sentence)

    elapsed = time.perf_counter() - started
    _report(
        7,
        not failures and cases >= 1000 and elapsed < 30.0,
        f"{cases} phrase-bank cases round-trip exactly ({elapsed:.1f} s)",
    )


def test_criterion_8_audit_replay(tmp_path):
    rng = random.Random(20260810)
    ok = True
    for trial in range(100):
        service, session_id = _ct_service(tmp_path / f"t{trial}")
        expected = 5  # study + template + 2 evidence objects + registry
        ops = rng.randint(1, 6)
        for _ in range(ops):
            state = service.snapshot(session_id)["state"]
            if state == "created":
                service.submit_transcript(session_id, (CT / "transcript.txt").read_text(), SYS)
                expected += 2
            elif state == "parsed":
                choice = rng.choice(["edit", "confirm", "resubmit"])
                if choice == "edit":
                    service.apply_edit(session_id, "NODULE-01", "attributes.size", 8, RAD)
                    expected += 1
                elif choice == "confirm":
                    service.confirm_comparison(session_id, RAD)
                    expected += 1
                else:
                    service.submit_transcript(session_id, (CT / "transcript.txt").read_text(), SYS)
                    expected += 2
            else:
                choice = rng.choice(["edit", "draft", "review"])
                if choice == "edit":
                    service.apply_edit(session_id, "NODULE-01", "attributes.size", rng.choice([7, 8]), RAD)
                elif choice == "draft":
                    service.draft(session_id, RAD)
                else:
                    service.review_finding(session_id, "EFFUSION-01", True, RAD)
                expected += 1
        events = service.events(session_id)
        if len(events) != expected or [e["seq"] for e in events] != list(range(1, expected + 1)):
            ok = False
            break
        if service.replay(session_id) != service.snapshot(session_id):
            ok = False
            break
    _report(8, ok, "100 randomized sequences: replay == snapshot, events == mutations")


def test_criterion_9_matching_oracle():
    from test_tracking import _finding, _greedy_total, _m, _oracle_minimal_total, _track

    rng = random.Random(42)
    ok = True
    for _ in range(120):
        n_findings = rng.randint(1, 3)
        n_tracks = rng.randint(0, 3)
        findings = tuple(_finding(f"F-{i:02d}", size=_m(rng.randint(3, 40))) for i in range(n_findings))
        tracks = [_track(f"NODULE-{i:02d}", rng.randint(3, 40)) for i in range(n_tracks)]
        registry = LesionRegistry(tracks)
        total, flagged = _greedy_total(findings, registry)
        if not flagged and total != _oracle_minimal_total(findings, tracks):
            ok = False
            break
    _report(9, ok, "pairing equals the exhaustive minimal-delta assignment or is flagged")


def test_criterion_10_end_to_end_cli(tmp_path):
    import contextlib
    import io

    started = time.perf_counter()
    schema_ok = True
    for fixture, extra in (
        ("ct_nodule_followup", ["--evidence", "evidence.json", "--registry", "registry.json"]),
        ("us_abdomen", ["--worksheet", "worksheet.json"]),
        ("petct_response", ["--evidence", "evidence.json", "--registry", "registry.json"]),
    ):
        fx = FIXTURES / fixture
        store = ["--store", str(tmp_path / fixture), "--tokens", str(FIXTURES / "tokens.json")]
        resolved = [
            str(fx / value) if value.endswith(".json") else value for value in extra
        ]
        out = io.StringIO()
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(out):
            code = cli_main([*store, "ingest", str(fx / "ctx.json"), *resolved, "--actor", "tok-system"])
            assert code == 0, out.getvalue()
            session_id = out.getvalue().strip().splitlines()[-1]
            for argv in (
                ["parse", session_id, str(fx / "transcript.txt"), "--actor", "tok-system"],
                ["check", session_id],
                ["compare", session_id, "--actor", "tok-radiologist"],
                ["draft", session_id, "--actor", "tok-radiologist"],
                ["approve", session_id, "--actor", "tok-radiologist"],
                ["export", session_id, "--actor", "tok-radiologist"],
            ):
                code = cli_main([*store, *argv])
                assert code == 0, (fixture, argv, out.getvalue())
        export_lines = [l for l in out.getvalue().strip().splitlines() if l.endswith(".json")]
        fhir_path, sr_path = Path(export_lines[-2]), Path(export_lines[-1])
        try:
            validate_document(loads_decimal(fhir_path.read_text()), "fhir_bundle")
            validate_document(loads_decimal(sr_path.read_text()), "sr_measurement_report")
        except Exception:
            schema_ok = False
    elapsed = time.perf_counter() - started
    _report(
        10,
        schema_ok and elapsed < 10.0,
        f"three fixture pipelines exit 0 with schema-valid exports ({elapsed:.1f} s)",
    )
