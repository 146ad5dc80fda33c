"""Evidence objects, append-only storage, linking, and linkage status.

Measurements, segmentations, worksheets and image-reference bundles are
ingested once and never overwritten: a re-ingest with the same id must
carry the identical payload, otherwise it is an EvidenceConflict.  That
keeps every statement in an exported report traceable to the exact
object it cited at sign-off time.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, replace
from decimal import Decimal
from enum import Enum
from typing import Optional

from radstruct.errors import (
    DimensionMismatch,
    EvidenceConflict,
    ModelValidationError,
    ProvenanceRuleViolation,
    UnknownEvidence,
    UnknownUnit,
)
from radstruct.model import units
from radstruct.model.types import (
    AnatomicLocation,
    EvidenceKind,
    EvidenceRef,
    Laterality,
    Measurement,
    MeasurementKind,
    Presence,
    Provenance,
    StructuredFinding,
    site_sidedness,
)


class EvidenceObjectKind(str, Enum):
    MEASUREMENT_OBJECT = "measurement_object"
    SEGMENTATION_OBJECT = "segmentation_object"
    WORKSHEET = "worksheet"
    IMAGE_REF_BUNDLE = "image_ref_bundle"


class LinkRole(str, Enum):
    SUPPORTS_CURRENT = "supports_current"
    SUPPORTS_PRIOR = "supports_prior"


class EvidenceStatus(str, Enum):
    FULLY_LINKED = "fully_linked"
    PARTIALLY_LINKED = "partially_linked"
    UNLINKED = "unlinked"
    LINKAGE_NOT_APPLICABLE = "linkage_not_applicable"


@dataclass(frozen=True)
class EvidenceObject:
    object_id: str
    kind: EvidenceObjectKind
    payload: dict
    source: Provenance

    def validate(self) -> list[str]:
        problems = []
        if not self.object_id:
            problems.append("evidence.object_id: must be non-empty")
        problems.extend(self.source.validate(f"evidence[{self.object_id}].source"))
        if self.kind is EvidenceObjectKind.MEASUREMENT_OBJECT:
            for i, group in enumerate(self.payload.get("groups", [])):
                try:
                    units.validate_unit(group["unit"], group.get("kind", "linear"))
                except (UnknownUnit, DimensionMismatch) as exc:
                    problems.append(f"evidence[{self.object_id}].groups[{i}].unit: {exc.message}")
        if self.kind is EvidenceObjectKind.WORKSHEET:
            for i, value in enumerate(self.payload.get("values", [])):
                try:
                    units.validate_unit(value["unit"], value.get("kind", "linear"))
                except (UnknownUnit, DimensionMismatch) as exc:
                    problems.append(f"evidence[{self.object_id}].values[{i}].unit: {exc.message}")
        return problems


@dataclass(frozen=True)
class EvidenceLink:
    finding_id: str
    ref: EvidenceRef
    role: LinkRole
    timestamp: dt.datetime


class EvidenceStore:
    """Append-only per-session store of evidence objects and links."""

    def __init__(self):
        self._objects: dict[str, EvidenceObject] = {}
        self._ingested_at: dict[str, dt.datetime] = {}
        self._links: list[EvidenceLink] = []

    def __len__(self) -> int:
        return len(self._objects)

    def ingest(self, obj: EvidenceObject, at: Optional[dt.datetime] = None) -> str:
        problems = obj.validate()
        if problems:
            raise ModelValidationError("; ".join(problems), target=obj.object_id)
        existing = self._objects.get(obj.object_id)
        if existing is not None:
            if existing.payload != obj.payload:
                raise EvidenceConflict(
                    f"evidence {obj.object_id} already ingested with a different payload",
                    target=obj.object_id,
                )
            return obj.object_id
        self._objects[obj.object_id] = obj
        self._ingested_at[obj.object_id] = at or obj.source.timestamp or dt.datetime.now(dt.timezone.utc)
        return obj.object_id

    def get(self, object_id: str) -> EvidenceObject:
        try:
            return self._objects[object_id]
        except KeyError:
            raise UnknownEvidence(f"no evidence object {object_id}", target=object_id)

    def has(self, object_id: str) -> bool:
        return object_id in self._objects

    def all(self) -> list[EvidenceObject]:
        return [self._objects[k] for k in sorted(self._objects)]

    def ingested_at(self, object_id: str) -> dt.datetime:
        return self._ingested_at[object_id]

    def links(self) -> tuple[EvidenceLink, ...]:
        return tuple(self._links)

    def link(
        self,
        finding: StructuredFinding,
        ref: EvidenceRef,
        role: LinkRole = LinkRole.SUPPORTS_CURRENT,
        at: Optional[dt.datetime] = None,
    ) -> StructuredFinding:
        """Attach evidence to a finding; returns the updated finding."""
        if ref.kind is not EvidenceKind.IMAGE:
            if ref.object_id is None or not self.has(ref.object_id):
                raise UnknownEvidence(f"no evidence object {ref.object_id}", target=str(ref.object_id))
        if finding.presence is Presence.ABSENT and ref.kind in (
            EvidenceKind.SEGMENTATION_OBJECT,
            EvidenceKind.MEASUREMENT_OBJECT,
        ):
            raise ProvenanceRuleViolation(
                f"absent finding {finding.finding_id} cannot cite {ref.kind.value} evidence",
                target=finding.finding_id,
            )
        if role is LinkRole.SUPPORTS_PRIOR and not ref.prior:
            ref = replace(ref, prior=True)
        at = at or dt.datetime.now(dt.timezone.utc)
        if ref.kind is not EvidenceKind.IMAGE:
            ingested = self.ingested_at(ref.object_id)
            if at < ingested:
                at = ingested
        self._links.append(EvidenceLink(finding.finding_id, ref, role, at))
        return finding.with_evidence(ref)


def evidence_status(finding: StructuredFinding) -> EvidenceStatus:
    """Linkage completeness of one finding.

    Absent findings are out of scope for linkage.  Measured findings are
    fully linked only when a measurement-bearing object (measurement
    object or worksheet value) backs them; image or segmentation refs
    alone are partial.
    """
    if finding.presence is Presence.ABSENT:
        return EvidenceStatus.LINKAGE_NOT_APPLICABLE
    current = [ref for ref in finding.evidence if not ref.prior]
    if not current:
        return EvidenceStatus.UNLINKED
    if not finding.measurements():
        return EvidenceStatus.FULLY_LINKED
    covering = {EvidenceKind.MEASUREMENT_OBJECT, EvidenceKind.WORKSHEET_VALUE}
    if any(ref.kind in covering for ref in current):
        return EvidenceStatus.FULLY_LINKED
    return EvidenceStatus.PARTIALLY_LINKED


# ---------------------------------------------------------------------------
# deterministic link proposals from imported objects
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinkProposal:
    finding_id: str
    refs: tuple[EvidenceRef, ...]
    set_attributes: dict[str, Measurement]
    measurement_source: Optional[str] = None


@dataclass(frozen=True)
class WorksheetFinding:
    """A worksheet row with no dictated counterpart; becomes a candidate."""

    finding_type: str
    location: AnatomicLocation
    attribute: str
    measurement: Measurement
    object_id: str


def _group_matches(group: dict, finding: StructuredFinding) -> bool:
    if group.get("finding_type") and group["finding_type"] != finding.type:
        return False
    site = group.get("anatomical_site")
    if site and site != finding.location.anatomical_site:
        return False
    laterality = group.get("laterality")
    if laterality and Laterality(laterality) is not finding.location.laterality:
        return False
    value = group.get("value")
    if value is not None:
        target = Measurement(Decimal(str(value)), group["unit"], MeasurementKind(group.get("kind", "linear")))
        candidates = [
            m for m in finding.measurements().values() if m.kind is target.kind
        ] or [m for m in finding.measurements().values()]
        if not candidates:
            return False
        matched = False
        for candidate in candidates:
            try:
                if candidate.converted(target.unit).value == target.value:
                    matched = True
                    break
            except (UnknownUnit, DimensionMismatch):
                continue
        if not matched:
            return False
    return True


def propose_measurement_links(obj: EvidenceObject, findings) -> list[LinkProposal]:
    """Match measurement groups to findings by site/laterality/value."""
    assert obj.kind is EvidenceObjectKind.MEASUREMENT_OBJECT
    proposals = []
    for finding in findings:
        if finding.presence is not Presence.PRESENT:
            continue
        for group in obj.payload.get("groups", []):
            if not _group_matches(group, finding):
                continue
            refs = [EvidenceRef(EvidenceKind.MEASUREMENT_OBJECT, object_id=obj.object_id)]
            image = group.get("image_reference")
            if image:
                refs.append(EvidenceRef(EvidenceKind.IMAGE, series=image["series"], image=image["image"]))
            proposals.append(
                LinkProposal(
                    finding_id=finding.finding_id,
                    refs=tuple(refs),
                    set_attributes={},
                    measurement_source=obj.payload.get("source_label"),
                )
            )
            break
    return proposals


def _worksheet_target(key: str) -> tuple[str, AnatomicLocation]:
    organ, _, _attr = key.partition(".")
    side = site_sidedness(organ)
    finding_type = organ.split("_", 1)[1] if side is not None else organ
    return finding_type, AnatomicLocation(organ, side or Laterality.NOT_APPLICABLE)


def reconcile_worksheet(
    obj: EvidenceObject, findings
) -> tuple[list[LinkProposal], list[WorksheetFinding]]:
    """Attach worksheet values to dictated findings; leftovers become candidates."""
    assert obj.kind is EvidenceObjectKind.WORKSHEET
    proposals: list[LinkProposal] = []
    leftovers: list[WorksheetFinding] = []
    for row in obj.payload.get("values", []):
        key = row["key"]
        attribute = key.partition(".")[2] or "size"
        finding_type, location = _worksheet_target(key)
        laterality = Laterality(row["laterality"]) if row.get("laterality") else location.laterality
        measurement = Measurement(
            Decimal(str(row["value"])), row["unit"], MeasurementKind(row.get("kind", "linear"))
        )
        target = None
        for finding in findings:
            if finding.presence is not Presence.PRESENT or finding.type != finding_type:
                continue
            if finding.location.laterality is not laterality:
                continue
            target = finding
            break
        if target is None:
            leftovers.append(
                WorksheetFinding(
                    finding_type=finding_type,
                    location=AnatomicLocation(location.anatomical_site, laterality),
                    attribute=attribute,
                    measurement=measurement,
                    object_id=obj.object_id,
                )
            )
            continue
        set_attributes = {}
        if attribute not in target.attributes:
            set_attributes[attribute] = measurement
        proposals.append(
            LinkProposal(
                finding_id=target.finding_id,
                refs=(EvidenceRef(EvidenceKind.WORKSHEET_VALUE, object_id=obj.object_id),),
                set_attributes=set_attributes,
                measurement_source="worksheet_import",
            )
        )
    return proposals, leftovers
