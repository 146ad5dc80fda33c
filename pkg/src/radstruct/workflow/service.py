"""Session lifecycle orchestration over the event-sourced store.

Every operation: validate preconditions against the snapshot, compute
results with the pure engine modules, append audit events carrying the
results, and return the new snapshot.  State only ever moves along
created -> parsed -> under_review -> {approved, rejected} and
approved -> exported.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import hashlib
from decimal import Decimal
from pathlib import Path
from typing import Optional

import radstruct
from radstruct.checks import CheckInput, blocking_issues, run_checks
from radstruct.compose import compose_finding_sentence, compose_report, draft_impression
from radstruct.errors import (
    ApprovalBlocked,
    CompositionGap,
    EngineError,
    Forbidden,
    InvalidTransition,
    ModelValidationError,
    NotAcknowledgeable,
    SessionNotFound,
)
from radstruct.evidence import (
    EvidenceObject,
    EvidenceObjectKind,
    EvidenceStore,
    LinkRole,
    propose_measurement_links,
    reconcile_worksheet,
)
from radstruct.interop import ExportView, export_fhir, export_sr, parity_check
from radstruct.model.canonical import finding_to_doc, study_from_doc, study_to_doc
from radstruct.model.jsonio import dumps_canonical
from radstruct.model.types import (
    ActorRole,
    AnatomicLocation,
    ChangeStatus,
    Comparison,
    EvidenceKind,
    EvidenceRef,
    FinalSentence,
    Laterality,
    Measurement,
    PartialDate,
    Presence,
    Provenance,
    ProvenanceSource,
    ReviewStatus,
    SectionName,
    StructuredFinding,
    StudyContext,
    TerminologyBinding,
    Uncertainty,
)
from radstruct.parsing import LexiconSet, parse_transcript
from radstruct.policy import EnginePolicy
from radstruct.templates import TemplateRegistry, select_template
from radstruct.tracking import (
    LesionRegistry,
    apply_session_to_registry,
    build_comparison_table,
    load_registry,
    match_lesions,
    save_registry,
)
from radstruct.workflow.ai import AiModuleRegistry
from radstruct.workflow.auth import require_role
from radstruct.workflow.session import (
    Actor,
    active_findings,
    comparison_row_from_doc,
    comparison_row_to_doc,
    evidence_object_from_doc,
    evidence_object_to_doc,
    evidence_ref_from_doc,
    evidence_ref_to_doc,
    findings_from_snapshot,
    issue_from_doc,
    issue_to_doc,
    issues_from_snapshot,
    measurement_from_doc,
    new_event,
    prior_ref_from_doc,
    prior_ref_to_doc,
    proposal_from_doc,
    proposal_to_doc,
    report_from_snapshot,
    rows_from_snapshot,
    study_from_snapshot,
    template_match_from_doc,
    template_match_to_doc,
)
from radstruct.workflow.store import SessionStore

_REVIEW_STATES = ("parsed", "under_review")


def _span_doc(span) -> dict:
    return {"start": span.start, "end": span.end, "kind": span.kind.value}


def _flag_doc(flag) -> dict:
    return {"start": flag.start, "end": flag.end, "reason": flag.reason.value, "note": flag.note}


def _extraction_doc(result) -> dict:
    return {
        "transcript": result.transcript,
        "spans": [_span_doc(s) for s in result.spans],
        "finding_spans": {fid: list(ids) for fid, ids in sorted(result.finding_spans.items())},
        "safety_flags": [_flag_doc(f) for f in result.safety_flags],
        "unparsed_sentences": [list(r) for r in result.unparsed_sentences],
    }


def _allocate_id(existing: set[str], finding_type: str) -> str:
    stem = finding_type.rsplit("_", 1)[-1].upper()
    n = 1
    while f"{stem}-{n:02d}" in existing:
        n += 1
    return f"{stem}-{n:02d}"


class EngineService:
    """All session operations; one instance per store directory."""

    def __init__(
        self,
        store: SessionStore,
        templates: TemplateRegistry,
        lexicons: LexiconSet,
        policy: EnginePolicy,
        ai_modules: Optional[AiModuleRegistry] = None,
    ):
        self.store = store
        self.templates = templates
        self.lexicons = lexicons
        self.policy = policy
        self.ai_modules = ai_modules or AiModuleRegistry()

    # -- helpers -------------------------------------------------------------

    def _versions(self, snapshot: Optional[dict]) -> dict:
        versions = {"engine": radstruct.__version__, "lexicon": self.lexicons.version}
        if snapshot and snapshot.get("template"):
            template = snapshot["template"]
            versions["template"] = f"{template['template_id']}@{template['version']}"
        return versions

    def _template_for(self, snapshot: dict):
        match_doc = snapshot["template"]
        return self.templates.get(match_doc["template_id"], match_doc["version"])

    def _check_input(self, snapshot: dict) -> CheckInput:
        return CheckInput(
            ctx=study_from_snapshot(snapshot),
            template=self._template_for(snapshot),
            template_match=template_match_from_doc(snapshot["template"]),
            findings=active_findings(snapshot),
            report=report_from_snapshot(snapshot),
            comparison_rows=rows_from_snapshot(snapshot),
            lexicons=self.lexicons,
            policy=self.policy,
        )

    def _issues_doc(self, snapshot: dict) -> list[dict]:
        return [issue_to_doc(i) for i in run_checks(self._check_input(snapshot))]

    def _require_state(self, snapshot: dict, allowed: tuple[str, ...], op: str) -> None:
        if snapshot["state"] not in allowed:
            raise InvalidTransition(
                f"{op} is not allowed in state {snapshot['state']!r} "
                f"(allowed: {', '.join(allowed)})",
                target=snapshot["state"],
            )

    def snapshot(self, session_id: str) -> dict:
        return self.store.snapshot(session_id)

    def events(self, session_id: str) -> list[dict]:
        return self.store.events(session_id)

    # -- operations ------------------------------------------------------------

    def create_session(
        self,
        study_doc: dict,
        actor: Actor,
        evidence_objects: Optional[list[dict]] = None,
        registry_file: Optional[Path] = None,
        registry_doc: Optional[dict] = None,
        allow_generic: bool = False,
        at: Optional[dt.datetime] = None,
    ) -> dict:
        study, _template_id = study_from_doc(study_doc)
        problems = study.validate()
        if problems:
            raise ModelValidationError("; ".join(problems), target=problems[0].split(":")[0])
        match = select_template(study, self.templates, allow_generic=allow_generic)
        session_id = self.store.allocate_session(study.study_uid)
        at = at or dt.datetime.now(dt.timezone.utc)

        events = [
            new_event(
                1,
                "ingested",
                actor,
                {
                    "what": "study",
                    "session_id": session_id,
                    "study": study_to_doc(study, None),
                    "state_after": "created",
                },
                self._versions(None),
                timestamp=at,
            ),
            new_event(
                2,
                "template_selected",
                actor,
                {"match": template_match_to_doc(match), "state_after": "created"},
                {"engine": radstruct.__version__, "lexicon": self.lexicons.version,
                 "template": f"{match.template_id}@{match.version}"},
                timestamp=at,
            ),
        ]
        seq = 3
        store_check = EvidenceStore()
        for doc in evidence_objects or []:
            obj = evidence_object_from_doc(doc)
            store_check.ingest(obj, at=at)  # validates payload units and duplicates
            events.append(
                new_event(
                    seq,
                    "ingested",
                    actor,
                    {"what": "evidence_object", "object": evidence_object_to_doc(obj), "state_after": "created"},
                    self._versions(None),
                    timestamp=at,
                )
            )
            seq += 1
        if registry_doc is not None or registry_file is not None:
            if registry_doc is not None:
                from radstruct.tracking import registry_from_doc

                registry = registry_from_doc(registry_doc)
            else:
                registry = load_registry(registry_file)
            save_registry(registry, self.store.registry_path(session_id))
            events.append(
                new_event(
                    seq,
                    "ingested",
                    actor,
                    {"what": "lesion_registry", "file": "registry.json", "state_after": "created"},
                    self._versions(None),
                    timestamp=at,
                )
            )
        return self.store.append(session_id, events)

    def add_evidence(self, session_id: str, object_doc: dict, actor: Actor,
                     at: Optional[dt.datetime] = None) -> dict:
        with self.store.lock(session_id):
            snapshot = self.store.snapshot(session_id)
            self._require_state(snapshot, ("created", "parsed", "under_review"), "evidence ingest")
            at = at or dt.datetime.now(dt.timezone.utc)
            obj = evidence_object_from_doc(object_doc)
            store = self._evidence_store(snapshot)
            store.ingest(obj, at=at)  # raises EvidenceConflict on changed payload
            event = new_event(
                self.store.next_seq(session_id),
                "ingested",
                actor,
                {
                    "what": "evidence_object",
                    "object": evidence_object_to_doc(obj),
                    "state_after": snapshot["state"],
                },
                self._versions(snapshot),
                timestamp=at,
            )
            return self.store.append(session_id, [event])

    def _evidence_store(self, snapshot: dict) -> EvidenceStore:
        store = EvidenceStore()
        for item in snapshot.get("evidence_objects", []):
            store.ingest(evidence_object_from_doc(item))
        return store

    def submit_transcript(
        self, session_id: str, text: str, actor: Actor, at: Optional[dt.datetime] = None
    ) -> dict:
        with self.store.lock(session_id):
            snapshot = self.store.snapshot(session_id)
            self._require_state(snapshot, ("created", "parsed"), "transcript submission")
            at = at or dt.datetime.now(dt.timezone.utc)
            ctx = study_from_snapshot(snapshot)
            template = self._template_for(snapshot)

            extraction = parse_transcript(text, self.lexicons, timestamp=at)
            findings = list(extraction.findings)

            # deterministic auto-linking of imported evidence
            evidence_objects = [
                evidence_object_from_doc(item) for item in snapshot.get("evidence_objects", [])
            ]
            for obj in evidence_objects:
                if obj.kind is EvidenceObjectKind.MEASUREMENT_OBJECT:
                    for proposal in propose_measurement_links(obj, tuple(findings)):
                        updated = []
                        for f in findings:
                            if f.finding_id == proposal.finding_id:
                                f = f.with_evidence(*proposal.refs)
                                if proposal.measurement_source:
                                    f = dataclasses.replace(
                                        f,
                                        provenance=dataclasses.replace(
                                            f.provenance,
                                            measurement_source=proposal.measurement_source,
                                        ),
                                    )
                            updated.append(f)
                        findings = updated
                elif obj.kind is EvidenceObjectKind.WORKSHEET:
                    proposals, leftovers = reconcile_worksheet(obj, tuple(findings))
                    updated = []
                    for f in findings:
                        for proposal in proposals:
                            if proposal.finding_id == f.finding_id:
                                attrs = dict(f.attributes)
                                attrs.update(proposal.set_attributes)
                                f = dataclasses.replace(
                                    f.with_evidence(*proposal.refs),
                                    attributes=attrs,
                                    provenance=dataclasses.replace(
                                        f.provenance, measurement_source="worksheet_import"
                                    ),
                                )
                        updated.append(f)
                    findings = updated
                    existing_ids = {f.finding_id for f in findings}
                    for leftover in leftovers:
                        fid = _allocate_id(existing_ids, leftover.finding_type)
                        existing_ids.add(fid)
                        findings.append(
                            StructuredFinding(
                                finding_id=fid,
                                type=leftover.finding_type,
                                presence=Presence.PRESENT,
                                location=leftover.location,
                                attributes={leftover.attribute: leftover.measurement},
                                evidence=(
                                    EvidenceRef(
                                        EvidenceKind.WORKSHEET_VALUE, object_id=leftover.object_id
                                    ),
                                ),
                                terminology=TerminologyBinding(
                                    unit=leftover.measurement.unit,
                                    finding_code=self.lexicons.finding_code(leftover.finding_type),
                                    anatomy_code=self.lexicons.anatomy_code(
                                        leftover.location.anatomical_site
                                    )
                                    if leftover.location.anatomical_site
                                    else None,
                                ),
                                provenance=Provenance(
                                    actor_role=ActorRole.SONOGRAPHER,
                                    review_status=ReviewStatus.UNREVIEWED,
                                    source=ProvenanceSource.WORKSHEET_IMPORT,
                                    timestamp=at,
                                    measurement_source="worksheet_import",
                                ),
                            )
                        )

            registry = load_registry(self.store.registry_path(session_id))
            proposal = match_lesions(tuple(findings), registry, template.allowed_finding_types or None)
            rows = build_comparison_table(ctx, tuple(findings), proposal, registry, self.policy.change)

            confirmed_prior = None
            mention_dates = [
                f.comparison.prior_exam_date
                for f in findings
                if f.comparison is not None and f.comparison.prior_exam_date is not None
            ]
            for ref in sorted(ctx.prior_refs, key=lambda r: r.exam_date, reverse=True):
                if any(date.matches(ref.exam_date) for date in mention_dates):
                    confirmed_prior = ref
                    break
            if confirmed_prior is None and ctx.prior_refs:
                confirmed_prior = max(ctx.prior_refs, key=lambda r: r.exam_date)

            working = dict(snapshot)
            working.update(
                {
                    "findings": [finding_to_doc(f) for f in findings],
                    "proposal": proposal_to_doc(proposal),
                    "comparison_rows": [comparison_row_to_doc(r) for r in rows],
                    "confirmed_prior": prior_ref_to_doc(confirmed_prior) if confirmed_prior else None,
                    "report_sections": [],
                }
            )
            issues = self._issues_doc(working)
            seq = self.store.next_seq(session_id)
            events = [
                new_event(
                    seq,
                    "transcript_submitted",
                    actor,
                    {"text": text, "state_after": "parsed"},
                    self._versions(snapshot),
                    timestamp=at,
                ),
                new_event(
                    seq + 1,
                    "entity_extracted",
                    actor,
                    {
                        "extraction": _extraction_doc(extraction),
                        "findings": working["findings"],
                        "proposal": working["proposal"],
                        "comparison_rows": working["comparison_rows"],
                        "confirmed_prior": working["confirmed_prior"],
                        "issues": issues,
                        "state_after": "parsed",
                    },
                    self._versions(snapshot),
                    timestamp=at,
                ),
            ]
            return self.store.append(session_id, events)

    def link_evidence(
        self,
        session_id: str,
        finding_id: str,
        ref_doc: dict,
        actor: Actor,
        role: str = "supports_current",
        at: Optional[dt.datetime] = None,
    ) -> dict:
        with self.store.lock(session_id):
            snapshot = self.store.snapshot(session_id)
            self._require_state(snapshot, _REVIEW_STATES, "evidence linking")
            at = at or dt.datetime.now(dt.timezone.utc)
            findings = list(findings_from_snapshot(snapshot))
            target = next((f for f in findings if f.finding_id == finding_id), None)
            if target is None:
                raise SessionNotFound(f"no finding {finding_id}", target=finding_id)
            store = self._evidence_store(snapshot)
            updated = store.link(target, evidence_ref_from_doc(ref_doc), LinkRole(role), at=at)
            findings = [updated if f.finding_id == finding_id else f for f in findings]
            working = dict(snapshot)
            working["findings"] = [finding_to_doc(f) for f in findings]
            link = store.links()[-1]
            event = new_event(
                self.store.next_seq(session_id),
                "evidence_linked",
                actor,
                {
                    "findings": working["findings"],
                    "link": {
                        "finding_id": link.finding_id,
                        "ref": evidence_ref_to_doc(link.ref),
                        "role": link.role.value,
                        "timestamp": link.timestamp.isoformat(),
                    },
                    "issues": self._issues_doc(working),
                    "state_after": snapshot["state"],
                },
                self._versions(snapshot),
                timestamp=at,
            )
            return self.store.append(session_id, [event])

    # -- editing ---------------------------------------------------------------

    def _edit_finding(self, finding: StructuredFinding, path: str, value) -> StructuredFinding:
        if path.startswith("attributes."):
            key = path.split(".", 1)[1]
            attrs = dict(finding.attributes)
            if value is None:
                attrs.pop(key, None)
            elif isinstance(value, dict):
                attrs[key] = measurement_from_doc(value)
            elif isinstance(value, (int, Decimal)) and not isinstance(value, bool):
                current = attrs.get(key)
                if not isinstance(current, Measurement):
                    raise ModelValidationError(
                        f"{path}: numeric edit requires an existing measurement", target=path
                    )
                attrs[key] = dataclasses.replace(current, value=Decimal(value))
            elif isinstance(value, str):
                attrs[key] = value
            else:
                raise ModelValidationError(f"{path}: unsupported value type", target=path)
            return dataclasses.replace(finding, attributes=attrs)
        if path == "location.laterality":
            return dataclasses.replace(
                finding, location=AnatomicLocation(finding.location.anatomical_site, Laterality(value))
            )
        if path == "location.anatomical_site":
            return dataclasses.replace(
                finding, location=AnatomicLocation(value, finding.location.laterality)
            )
        if path == "presence":
            return dataclasses.replace(finding, presence=Presence(value))
        if path == "uncertainty":
            return dataclasses.replace(finding, uncertainty=Uncertainty(value))
        if path == "type":
            return dataclasses.replace(finding, type=str(value))
        if path == "comparison.change":
            comparison = finding.comparison or Comparison(change=ChangeStatus.INDETERMINATE)
            return dataclasses.replace(
                finding, comparison=dataclasses.replace(comparison, change=ChangeStatus(value))
            )
        if path == "comparison.prior_exam_date":
            comparison = finding.comparison or Comparison(change=ChangeStatus.INDETERMINATE)
            date = PartialDate.parse(value) if value is not None else None
            return dataclasses.replace(
                finding, comparison=dataclasses.replace(comparison, prior_exam_date=date)
            )
        raise ModelValidationError(f"unsupported edit path {path!r}", target=path)

    def apply_edit(
        self,
        session_id: str,
        finding_id: str,
        path: str,
        value,
        actor: Actor,
        at: Optional[dt.datetime] = None,
    ) -> dict:
        require_role(actor, ActorRole.RADIOLOGIST)
        with self.store.lock(session_id):
            snapshot = self.store.snapshot(session_id)
            self._require_state(snapshot, _REVIEW_STATES, "editing")
            at = at or dt.datetime.now(dt.timezone.utc)
            findings = list(findings_from_snapshot(snapshot))
            target = next((f for f in findings if f.finding_id == finding_id), None)
            if target is None:
                raise SessionNotFound(f"no finding {finding_id}", target=finding_id)
            before = finding_to_doc(target)
            edited = self._edit_finding(target, path, value)
            edited = dataclasses.replace(
                edited,
                provenance=dataclasses.replace(
                    edited.provenance,
                    review_status=ReviewStatus.EDITED,
                    actor_role=actor.role,
                    timestamp=at,
                ),
            )
            findings = [edited if f.finding_id == finding_id else f for f in findings]
            working = dict(snapshot)
            working["findings"] = [finding_to_doc(f) for f in findings]
            event = new_event(
                self.store.next_seq(session_id),
                "finding_edited",
                actor,
                {
                    "finding_id": finding_id,
                    "path": path,
                    "before": before,
                    "after": finding_to_doc(edited),
                    "findings": working["findings"],
                    "issues": self._issues_doc(working),
                    "state_after": "under_review",
                },
                self._versions(snapshot),
                timestamp=at,
            )
            return self.store.append(session_id, [event])

    def review_finding(
        self, session_id: str, finding_id: str, accept: bool, actor: Actor,
        at: Optional[dt.datetime] = None,
    ) -> dict:
        require_role(actor, ActorRole.RADIOLOGIST)
        with self.store.lock(session_id):
            snapshot = self.store.snapshot(session_id)
            self._require_state(snapshot, _REVIEW_STATES, "finding review")
            at = at or dt.datetime.now(dt.timezone.utc)
            findings = list(findings_from_snapshot(snapshot))
            target = next((f for f in findings if f.finding_id == finding_id), None)
            if target is None:
                raise SessionNotFound(f"no finding {finding_id}", target=finding_id)
            status = ReviewStatus.APPROVED if accept else ReviewStatus.REJECTED
            updated = dataclasses.replace(
                target,
                provenance=dataclasses.replace(
                    target.provenance, review_status=status, actor_role=actor.role, timestamp=at
                ),
            )
            if not accept:
                updated = dataclasses.replace(updated, final_sentence=None)
            findings = [updated if f.finding_id == finding_id else f for f in findings]
            working = dict(snapshot)
            working["findings"] = [finding_to_doc(f) for f in findings]
            event = new_event(
                self.store.next_seq(session_id),
                "suggestion_accepted" if accept else "suggestion_rejected",
                actor,
                {
                    "action": "review_finding",
                    "finding_id": finding_id,
                    "findings": working["findings"],
                    "issues": self._issues_doc(working),
                    "state_after": "under_review",
                },
                self._versions(snapshot),
                timestamp=at,
            )
            return self.store.append(session_id, [event])

    def confirm_comparison(
        self, session_id: str, actor: Actor, at: Optional[dt.datetime] = None
    ) -> dict:
        """Confirm proposed lesion pairings and the selected prior."""
        require_role(actor, ActorRole.RADIOLOGIST)
        with self.store.lock(session_id):
            snapshot = self.store.snapshot(session_id)
            self._require_state(snapshot, _REVIEW_STATES, "comparison confirmation")
            at = at or dt.datetime.now(dt.timezone.utc)
            ctx = study_from_snapshot(snapshot)
            registry = load_registry(self.store.registry_path(session_id))
            findings = list(findings_from_snapshot(snapshot))
            proposal = proposal_from_doc(snapshot["proposal"] or {"pairings": [], "resolved_candidates": []})
            confirmed = dataclasses.replace(
                proposal,
                pairings=tuple(dataclasses.replace(p, confirmed=True) for p in proposal.pairings),
            )
            # enrich findings with the confirmed prior linkage
            by_finding = {p.finding_id: p for p in confirmed.pairings}
            updated = []
            for f in findings:
                pairing = by_finding.get(f.finding_id)
                if pairing and pairing.lesion_id:
                    track = registry.get(pairing.lesion_id)
                    latest = track.latest() if track else None
                    comparison = f.comparison or Comparison(change=ChangeStatus.INDETERMINATE)
                    comparison = dataclasses.replace(
                        comparison,
                        prior_finding_id=pairing.lesion_id,
                        prior_measurement=latest.measurement if latest else comparison.prior_measurement,
                        prior_modality=(latest.modality if latest and latest.modality else comparison.prior_modality),
                        prior_exam_date=comparison.prior_exam_date
                        or (PartialDate.from_date(latest.exam_date) if latest else None),
                    )
                    f = dataclasses.replace(f, comparison=comparison)
                updated.append(f)
            findings = updated
            rows = build_comparison_table(
                ctx, tuple(findings), confirmed, registry, self.policy.change
            )
            rows = [dataclasses.replace(r, confirmed=True if r.finding_id else r.confirmed) for r in rows]
            working = dict(snapshot)
            working.update(
                {
                    "findings": [finding_to_doc(f) for f in findings],
                    "proposal": proposal_to_doc(confirmed),
                    "comparison_rows": [comparison_row_to_doc(r) for r in rows],
                }
            )
            event = new_event(
                self.store.next_seq(session_id),
                "suggestion_accepted",
                actor,
                {
                    "action": "comparison_confirmed",
                    "findings": working["findings"],
                    "proposal": working["proposal"],
                    "comparison_rows": working["comparison_rows"],
                    "confirmed_prior": snapshot.get("confirmed_prior"),
                    "issues": self._issues_doc(working),
                    "state_after": "under_review",
                },
                self._versions(snapshot),
                timestamp=at,
            )
            return self.store.append(session_id, [event])

    def draft(self, session_id: str, actor: Actor, at: Optional[dt.datetime] = None) -> dict:
        """Bulk-confirm findings, compose the narrative, draft the impression."""
        require_role(actor, ActorRole.RADIOLOGIST)
        with self.store.lock(session_id):
            snapshot = self.store.snapshot(session_id)
            self._require_state(snapshot, _REVIEW_STATES, "drafting")
            at = at or dt.datetime.now(dt.timezone.utc)
            ctx = study_from_snapshot(snapshot)
            template = self._template_for(snapshot)
            notes: list[str] = []

            findings = []
            for f in findings_from_snapshot(snapshot):
                if f.provenance.review_status is ReviewStatus.UNREVIEWED:
                    f = dataclasses.replace(
                        f,
                        provenance=dataclasses.replace(
                            f.provenance,
                            review_status=ReviewStatus.APPROVED,
                            actor_role=actor.role,
                            timestamp=at,
                        ),
                    )
                findings.append(f)
            with_sentences = []
            for f in findings:
                if f.provenance.review_status is ReviewStatus.REJECTED:
                    with_sentences.append(f)
                    continue
                try:
                    sentence, section = compose_finding_sentence(
                        f, template, self.lexicons, study_modality=ctx.modality
                    )
                    f = dataclasses.replace(f, final_sentence=FinalSentence(sentence, section))
                except CompositionGap as gap:
                    notes.append(gap.message)
                with_sentences.append(f)
            findings = with_sentences
            live = tuple(
                f for f in findings if f.provenance.review_status is not ReviewStatus.REJECTED
            )

            prior_doc = snapshot.get("confirmed_prior")
            prior_ref = prior_ref_from_doc(prior_doc) if prior_doc else None
            report, compose_notes = compose_report(
                ctx, template, live, self.lexicons, confirmed_prior=prior_ref
            )
            notes.extend(compose_notes)
            items, impression_notes = draft_impression(live, template, self.lexicons)
            notes.extend(impression_notes)
            impression_text = report.section_text(SectionName.IMPRESSION)
            if items:
                impression_text = "\n".join(i.text for i in items)
            report = report.with_section(SectionName.IMPRESSION, impression_text)

            working = dict(snapshot)
            working.update(
                {
                    "findings": [finding_to_doc(f) for f in findings],
                    "report_sections": [
                        {"name": s.name.value, "text": s.text} for s in report.sections
                    ],
                    "impression_items": [
                        {"text": i.text, "source_finding_ids": list(i.source_finding_ids)}
                        for i in items
                    ],
                    "composition_notes": notes,
                }
            )
            event = new_event(
                self.store.next_seq(session_id),
                "suggestion_accepted",
                actor,
                {
                    "action": "draft",
                    "findings": working["findings"],
                    "report_sections": working["report_sections"],
                    "impression_items": working["impression_items"],
                    "composition_notes": notes,
                    "issues": self._issues_doc(working),
                    "state_after": "under_review",
                },
                self._versions(snapshot),
                timestamp=at,
            )
            return self.store.append(session_id, [event])

    def acknowledge_issue(
        self, session_id: str, issue_id: str, actor: Actor, at: Optional[dt.datetime] = None
    ) -> dict:
        require_role(actor, ActorRole.RADIOLOGIST)
        with self.store.lock(session_id):
            snapshot = self.store.snapshot(session_id)
            self._require_state(snapshot, _REVIEW_STATES, "acknowledgment")
            at = at or dt.datetime.now(dt.timezone.utc)
            issues = issues_from_snapshot(snapshot)
            issue = next((i for i in issues if i.issue_id == issue_id), None)
            if issue is None:
                raise SessionNotFound(f"no issue {issue_id}", target=issue_id)
            if issue.severity.value != "warning":
                raise NotAcknowledgeable(
                    f"{issue.rule_id} is {issue.severity.value}; only warnings can be acknowledged",
                    target=issue_id,
                )
            event = new_event(
                self.store.next_seq(session_id),
                "issue_acknowledged",
                actor,
                {
                    "acknowledgment": {
                        "issue_id": issue_id,
                        "actor_id": actor.id,
                        "timestamp": at.isoformat(),
                    },
                    "state_after": "under_review",
                },
                self._versions(snapshot),
                timestamp=at,
            )
            return self.store.append(session_id, [event])

    def approve(self, session_id: str, actor: Actor, at: Optional[dt.datetime] = None) -> dict:
        require_role(actor, ActorRole.RADIOLOGIST)
        with self.store.lock(session_id):
            snapshot = self.store.snapshot(session_id)
            self._require_state(snapshot, ("under_review",), "approval")
            at = at or dt.datetime.now(dt.timezone.utc)
            findings = findings_from_snapshot(snapshot)
            unreviewed = [
                f.finding_id
                for f in findings
                if f.provenance.review_status is ReviewStatus.UNREVIEWED
            ]
            if unreviewed:
                raise ApprovalBlocked(
                    f"findings not yet reviewed: {', '.join(unreviewed)} (run draft or review them)"
                )
            issues = run_checks(self._check_input(snapshot))
            acked = {a["issue_id"] for a in snapshot.get("acknowledgments", [])}
            blockers = blocking_issues(issues, acked)
            if blockers:
                raise ApprovalBlocked(
                    "blocking issues outstanding: "
                    + "; ".join(f"{i.rule_id} {i.target}" for i in blockers),
                    issues=[issue_to_doc(i) for i in blockers],
                )
            validation = []
            for f in findings:
                if f.provenance.review_status is not ReviewStatus.REJECTED:
                    validation.extend(f.validate(f"finding[{f.finding_id}]"))
            if validation:
                raise ApprovalBlocked("; ".join(validation))

            # freeze approval: all live findings stamped approved by this actor
            frozen = []
            for f in findings:
                if f.provenance.review_status is ReviewStatus.REJECTED:
                    frozen.append(f)
                    continue
                frozen.append(
                    dataclasses.replace(
                        f,
                        provenance=dataclasses.replace(
                            f.provenance,
                            review_status=ReviewStatus.APPROVED,
                            actor_role=actor.role,
                            timestamp=at,
                        ),
                    )
                )
            registry = load_registry(self.store.registry_path(session_id))
            ctx = study_from_snapshot(snapshot)
            apply_session_to_registry(
                registry, ctx, tuple(frozen), list(rows_from_snapshot(snapshot))
            )
            save_registry(registry, self.store.registry_path(session_id))

            working = dict(snapshot)
            working["findings"] = [finding_to_doc(f) for f in frozen]
            event = new_event(
                self.store.next_seq(session_id),
                "approved",
                actor,
                {
                    "findings": working["findings"],
                    "issues": [issue_to_doc(i) for i in issues],
                    "state_after": "approved",
                },
                self._versions(snapshot),
                timestamp=at,
            )
            return self.store.append(session_id, [event])

    def reject(self, session_id: str, actor: Actor, reason: str = "",
               at: Optional[dt.datetime] = None) -> dict:
        require_role(actor, ActorRole.RADIOLOGIST)
        with self.store.lock(session_id):
            snapshot = self.store.snapshot(session_id)
            self._require_state(snapshot, ("under_review",), "rejection")
            event = new_event(
                self.store.next_seq(session_id),
                "suggestion_rejected",
                actor,
                {"action": "session_rejected", "reason": reason, "state_after": "rejected"},
                self._versions(snapshot),
                timestamp=at,
            )
            return self.store.append(session_id, [event])

    def export_view(self, snapshot: dict) -> ExportView:
        return ExportView(
            ctx=study_from_snapshot(snapshot),
            template_id=snapshot["template"]["template_id"],
            findings=active_findings(snapshot),
            report=report_from_snapshot(snapshot),
            comparison_rows=rows_from_snapshot(snapshot),
            state=snapshot["state"],
            critical_flag=bool(snapshot.get("critical_flag", False)),
            template_name=self._template_for(snapshot).name,
        )

    def export(self, session_id: str, actor: Actor, at: Optional[dt.datetime] = None) -> dict:
        with self.store.lock(session_id):
            snapshot = self.store.snapshot(session_id)
            view = self.export_view(snapshot)
            view.require_exportable()  # raises ExportBlocked outside approved/exported
            at = at or dt.datetime.now(dt.timezone.utc)
            fhir = export_fhir(view)
            sr = export_sr(view)
            mismatches = parity_check(fhir, sr)
            if mismatches:
                raise ModelValidationError(
                    "export parity failure: " + "; ".join(m.detail for m in mismatches)
                )
            doc_id = view.document_id()
            exports = self.store.exports_dir(session_id)
            fhir_text = dumps_canonical(fhir) + "\n"
            sr_text = dumps_canonical(sr) + "\n"
            fhir_path = exports / f"{doc_id}.fhir.json"
            sr_path = exports / f"{doc_id}.sr.json"
            fhir_path.write_text(fhir_text, encoding="utf-8")
            sr_path.write_text(sr_text, encoding="utf-8")
            parity_report = {
                "session_id": session_id,
                "fhir": fhir_path.name,
                "sr": sr_path.name,
                "mismatches": [
                    {"kind": m.kind.value, "target": m.target, "detail": m.detail}
                    for m in mismatches
                ],
            }
            (exports / f"{doc_id}.parity.json").write_text(
                dumps_canonical(parity_report) + "\n", encoding="utf-8"
            )
            event = new_event(
                self.store.next_seq(session_id),
                "exported",
                actor,
                {
                    "files": {
                        "fhir": fhir_path.name,
                        "sr": sr_path.name,
                        "fhir_sha256": hashlib.sha256(fhir_text.encode()).hexdigest(),
                        "sr_sha256": hashlib.sha256(sr_text.encode()).hexdigest(),
                    },
                    "state_after": "exported",
                },
                self._versions(snapshot),
                timestamp=at,
            )
            return self.store.append(session_id, [event])

    def invoke_ai_module(
        self, session_id: str, module_id: str, actor: Actor, at: Optional[dt.datetime] = None
    ) -> dict:
        with self.store.lock(session_id):
            snapshot = self.store.snapshot(session_id)
            self._require_state(snapshot, ("created", "parsed", "under_review"), "AI invocation")
            at = at or dt.datetime.now(dt.timezone.utc)
            descriptor = self.ai_modules.get(module_id)
            output = descriptor.run(findings_from_snapshot(snapshot), at)
            evidence_docs = []
            store = self._evidence_store(snapshot)
            for obj in output.evidence_objects:
                store.ingest(obj, at=at)  # validates model_version and payload
                evidence_docs.append(evidence_object_to_doc(obj))
            candidate_docs = [finding_to_doc(f) for f in output.candidate_findings]
            for doc in candidate_docs:
                if doc["provenance"].get("review_status") != "unreviewed":
                    raise ModelValidationError("AI candidate findings must enter unreviewed")
            working = dict(snapshot)
            working["evidence_objects"] = working["evidence_objects"] + evidence_docs
            working["findings"] = working["findings"] + candidate_docs
            event = new_event(
                self.store.next_seq(session_id),
                "ai_module_invoked",
                actor,
                {
                    "module_id": module_id,
                    "model_version": descriptor.model_version,
                    "evidence_objects": evidence_docs,
                    "candidate_findings": candidate_docs,
                    "issues": self._issues_doc(working),
                    "state_after": snapshot["state"],
                },
                self._versions(snapshot),
                timestamp=at,
            )
            return self.store.append(session_id, [event])

    def replay(self, session_id: str) -> dict:
        """Fold the audit log and verify it matches the stored snapshot."""
        events = self.store.events(session_id)
        from radstruct.workflow.session import replay as fold

        folded = fold(events)
        stored = self.store.snapshot(session_id)
        if folded != stored:
            raise ModelValidationError("replayed state differs from stored snapshot")
        return folded
