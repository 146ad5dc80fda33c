"""Longitudinal lesion tracking: identity, pairing, change status.

Matching is deliberately conservative: candidates pair only on exact
(type, site, laterality); when several candidates compete the pairing
minimizes size delta and is flagged ambiguous; nothing is silently
guessed, and every pairing stays a proposal until a human confirms it.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, replace
from decimal import Decimal
from pathlib import Path
from typing import Optional

from radstruct.errors import DimensionMismatch, MeasurementError, ModelValidationError, UnknownUnit
from radstruct.model.jsonio import dumps_canonical, loads_decimal
from radstruct.model.types import (
    AnatomicLocation,
    ChangeStatus,
    EvidenceKind,
    EvidenceRef,
    Laterality,
    Measurement,
    MeasurementKind,
    Modality,
    Presence,
    StructuredFinding,
    StudyContext,
)

_KIND_GROUP = {
    MeasurementKind.LINEAR: "linear",
    MeasurementKind.AREA: "area",
    MeasurementKind.VOLUME: "volume",
    MeasurementKind.VELOCITY: "velocity",
    MeasurementKind.SUV_MAX: "suv",
    MeasurementKind.SUV_MEAN: "suv",
    MeasurementKind.COUNT: "count",
}


@dataclass(frozen=True)
class ChangePolicy:
    """Stability bands; defaults are engineering policy, not clinical guidance."""

    stable_band_linear_mm: Decimal = Decimal(1)
    stable_band_relative: Decimal = Decimal("0.10")

    def band_for(self, prior: Measurement, current: Measurement) -> Decimal:
        if prior.kind is MeasurementKind.LINEAR:
            return self.stable_band_linear_mm
        # relative band anchored on the larger magnitude so the status
        # function stays antisymmetric under swapping current and prior
        return self.stable_band_relative * max(abs(prior.value), abs(current.value))


def assign_change_status(
    current: Optional[Measurement],
    prior: Optional[Measurement],
    policy: ChangePolicy | None = None,
) -> ChangeStatus:
    """new/stable/increased/decreased/resolved from a measurement pair."""
    policy = policy or ChangePolicy()
    if current is None and prior is None:
        raise MeasurementError("at least one of current/prior must be present")
    if prior is None:
        return ChangeStatus.NEW
    if current is None:
        return ChangeStatus.RESOLVED
    if _KIND_GROUP[current.kind] != _KIND_GROUP[prior.kind]:
        return ChangeStatus.INDETERMINATE
    try:
        if prior.kind is MeasurementKind.LINEAR:
            current_value = current.converted("mm").value
            prior_value = prior.converted("mm").value
        else:
            current_value = current.converted(prior.unit).value
            prior_value = prior.value
    except (UnknownUnit, DimensionMismatch) as exc:
        raise MeasurementError(f"units not comparable: {exc.message}") from exc
    delta = current_value - prior_value
    band = policy.band_for(prior, current)
    if abs(delta) <= band:
        return ChangeStatus.STABLE
    return ChangeStatus.INCREASED if delta > 0 else ChangeStatus.DECREASED


@dataclass(frozen=True)
class TrackEntry:
    study_uid: str
    exam_date: dt.date
    measurement: Optional[Measurement] = None
    evidence: tuple[EvidenceRef, ...] = ()
    modality: Optional[Modality] = None
    protocol: Optional[str] = None


@dataclass(frozen=True)
class LesionTrack:
    lesion_id: str
    type: str
    location: AnatomicLocation
    history: tuple[TrackEntry, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "history", tuple(self.history))
        dates = [entry.exam_date for entry in self.history]
        if dates != sorted(dates) or len(set(dates)) != len(dates):
            raise ModelValidationError(
                f"track {self.lesion_id} history must be strictly date-ordered",
                target=self.lesion_id,
            )

    def latest(self) -> Optional[TrackEntry]:
        return self.history[-1] if self.history else None


class LesionRegistry:
    """Per patient-context collection of tracks, keyed by lesion id."""

    def __init__(self, tracks: list[LesionTrack] | None = None):
        self._tracks: dict[str, LesionTrack] = {}
        for track in tracks or []:
            if track.lesion_id in self._tracks:
                raise ModelValidationError(f"duplicate lesion id {track.lesion_id}", target=track.lesion_id)
            self._tracks[track.lesion_id] = track

    def __len__(self) -> int:
        return len(self._tracks)

    def all(self) -> list[LesionTrack]:
        return sorted(self._tracks.values(), key=lambda t: t.lesion_id)

    def get(self, lesion_id: str) -> Optional[LesionTrack]:
        return self._tracks.get(lesion_id)

    def upsert(self, track: LesionTrack) -> None:
        self._tracks[track.lesion_id] = track

    def allocate_id(self, finding: StructuredFinding) -> str:
        if finding.finding_id not in self._tracks:
            return finding.finding_id
        stem = finding.type.rsplit("_", 1)[-1].upper()
        n = 1
        while f"{stem}-{n:02d}" in self._tracks:
            n += 1
        return f"{stem}-{n:02d}"


@dataclass(frozen=True)
class LesionPairing:
    finding_id: str
    lesion_id: Optional[str]  # None -> new lesion
    ambiguous: bool = False
    confirmed: bool = False


@dataclass(frozen=True)
class MatchProposal:
    pairings: tuple[LesionPairing, ...]
    resolved_candidates: tuple[str, ...]  # lesion ids with no current counterpart


def _size_of(finding: StructuredFinding) -> Optional[Measurement]:
    for key in ("size", "suv_max", "suv_mean", "volume", "area"):
        value = finding.attributes.get(key)
        if isinstance(value, Measurement):
            return value
    return None


def _delta(finding: StructuredFinding, track: LesionTrack) -> Decimal:
    current = _size_of(finding)
    latest = track.latest()
    prior = latest.measurement if latest else None
    if current is None or prior is None:
        return Decimal("Infinity")
    if _KIND_GROUP[current.kind] != _KIND_GROUP[prior.kind]:
        return Decimal("Infinity")
    try:
        return abs(current.converted(prior.unit).value - prior.value)
    except (UnknownUnit, DimensionMismatch):
        return Decimal("Infinity")


def match_lesions(
    findings: tuple[StructuredFinding, ...],
    registry: LesionRegistry,
    allowed_types: Optional[tuple[str, ...]] = None,
) -> MatchProposal:
    """Propose finding<->track pairings; ambiguity is flagged, never guessed."""
    measurable = [
        f for f in findings if f.presence is Presence.PRESENT and _size_of(f) is not None
    ]
    groups: dict[tuple, list[StructuredFinding]] = {}
    for finding in measurable:
        key = (finding.type, finding.location.anatomical_site, finding.location.laterality)
        groups.setdefault(key, []).append(finding)

    track_groups: dict[tuple, list[LesionTrack]] = {}
    for track in registry.all():
        key = (track.type, track.location.anatomical_site, track.location.laterality)
        track_groups.setdefault(key, []).append(track)

    pairings: list[LesionPairing] = []
    matched_tracks: set[str] = set()
    for key, group_findings in groups.items():
        candidates = list(track_groups.get(key, []))
        ambiguous_group = len(group_findings) > 1 or len(candidates) > 1
        # repeatedly take the globally smallest |delta| pair in the group
        remaining = list(group_findings)
        while remaining and candidates:
            best = min(
                ((f, t) for f in remaining for t in candidates),
                key=lambda pair: (_delta(*pair), pair[0].finding_id, pair[1].lesion_id),
            )
            finding, track = best
            pairings.append(
                LesionPairing(finding.finding_id, track.lesion_id, ambiguous=ambiguous_group)
            )
            matched_tracks.add(track.lesion_id)
            remaining.remove(finding)
            candidates.remove(track)
        for finding in remaining:
            pairings.append(LesionPairing(finding.finding_id, None))

    order = {f.finding_id: i for i, f in enumerate(measurable)}
    pairings.sort(key=lambda p: order[p.finding_id])

    resolved = tuple(
        track.lesion_id
        for track in registry.all()
        if track.lesion_id not in matched_tracks
        and (allowed_types is None or track.type in allowed_types)
    )
    return MatchProposal(tuple(pairings), resolved)


_WARNINGS = ("protocol_mismatch", "modality_mismatch", "ambiguous_match", "missing_prior")


@dataclass(frozen=True)
class ComparisonRow:
    lesion_id: str
    location: AnatomicLocation
    status: ChangeStatus
    current_size: Optional[Measurement] = None
    current_evidence: tuple[EvidenceRef, ...] = ()
    prior_size: Optional[Measurement] = None
    prior_evidence: tuple[EvidenceRef, ...] = ()
    prior_exam_date: Optional[dt.date] = None
    warnings: tuple[str, ...] = ()
    finding_id: Optional[str] = None
    confirmed: bool = False

    def __post_init__(self):
        if self.status is ChangeStatus.NEW and (self.prior_size or self.prior_evidence):
            raise ModelValidationError("a new lesion cannot carry prior data", target=self.lesion_id)
        if self.status is ChangeStatus.RESOLVED and self.current_size is not None:
            raise ModelValidationError("a resolved lesion cannot carry a current size", target=self.lesion_id)
        unknown = [w for w in self.warnings if w not in _WARNINGS]
        if unknown:
            raise ModelValidationError(f"unknown warnings {unknown}", target=self.lesion_id)

    def display(self) -> dict[str, str]:
        """Two-column, human-facing projection of the row."""
        def first_image(refs: tuple[EvidenceRef, ...]) -> str:
            for ref in refs:
                if ref.kind is EvidenceKind.IMAGE:
                    return ref.display()
            return refs[0].display() if refs else ""

        location = self.location.display()
        return {
            "lesion_id": self.lesion_id,
            "location": location[:1].upper() + location[1:] if location else "",
            "current_size": self.current_size.display() if self.current_size else "",
            "prior_size": self.prior_size.display() if self.prior_size else "",
            "status": self.status.value.capitalize(),
            "current_evidence": first_image(self.current_evidence),
            "prior_evidence": first_image(self.prior_evidence),
        }


def build_comparison_table(
    ctx: StudyContext,
    findings: tuple[StructuredFinding, ...],
    proposal: MatchProposal,
    registry: LesionRegistry,
    policy: ChangePolicy | None = None,
    include_resolved: bool = True,
) -> list[ComparisonRow]:
    """One row per tracked lesion with change status and warnings."""
    policy = policy or ChangePolicy()
    by_id = {f.finding_id: f for f in findings}
    rows: list[ComparisonRow] = []
    for pairing in proposal.pairings:
        finding = by_id[pairing.finding_id]
        current = _size_of(finding)
        current_evidence = tuple(r for r in finding.evidence if not r.prior)
        warnings: list[str] = []
        if pairing.ambiguous:
            warnings.append("ambiguous_match")
        if pairing.lesion_id is None:
            rows.append(
                ComparisonRow(
                    lesion_id=finding.finding_id,
                    location=finding.location,
                    status=ChangeStatus.NEW,
                    current_size=current,
                    current_evidence=current_evidence,
                    warnings=tuple(warnings + ["missing_prior"]),
                    finding_id=finding.finding_id,
                    confirmed=pairing.confirmed,
                )
            )
            continue
        track = registry.get(pairing.lesion_id)
        latest = track.latest()
        prior = latest.measurement if latest else None
        status = assign_change_status(current, prior, policy)
        if latest and latest.modality and latest.modality is not ctx.modality:
            warnings.append("modality_mismatch")
        if latest and latest.protocol and ctx.protocol and latest.protocol != ctx.protocol:
            warnings.append("protocol_mismatch")
        rows.append(
            ComparisonRow(
                lesion_id=track.lesion_id,
                location=track.location,
                status=status,
                current_size=current,
                current_evidence=current_evidence,
                prior_size=prior,
                prior_evidence=latest.evidence if latest else (),
                prior_exam_date=latest.exam_date if latest else None,
                warnings=tuple(warnings),
                finding_id=finding.finding_id,
                confirmed=pairing.confirmed,
            )
        )
    if include_resolved:
        for lesion_id in proposal.resolved_candidates:
            track = registry.get(lesion_id)
            latest = track.latest()
            rows.append(
                ComparisonRow(
                    lesion_id=lesion_id,
                    location=track.location,
                    status=ChangeStatus.RESOLVED,
                    prior_size=latest.measurement if latest else None,
                    prior_evidence=latest.evidence if latest else (),
                    prior_exam_date=latest.exam_date if latest else None,
                    confirmed=False,
                )
            )
    return rows


# ---------------------------------------------------------------------------
# registry persistence (JSON file per patient context)
# ---------------------------------------------------------------------------

def _evidence_item(ref: EvidenceRef) -> dict:
    item: dict = {"kind": ref.kind.value}
    if ref.series is not None:
        item["series"] = ref.series
    if ref.image is not None:
        item["image"] = ref.image
    if ref.object_id is not None:
        item["object_id"] = ref.object_id
    if ref.prior:
        item["prior"] = True
    return item


def _evidence_from_item(item: dict) -> EvidenceRef:
    return EvidenceRef(
        EvidenceKind(item["kind"]),
        series=item.get("series"),
        image=item.get("image"),
        object_id=item.get("object_id"),
        prior=bool(item.get("prior", False)),
    )


def registry_to_doc(registry: LesionRegistry) -> dict:
    tracks = []
    for track in registry.all():
        entries = []
        for entry in track.history:
            item: dict = {"study_uid": entry.study_uid, "exam_date": entry.exam_date.isoformat()}
            if entry.modality is not None:
                item["modality"] = entry.modality.value
            if entry.protocol is not None:
                item["protocol"] = entry.protocol
            if entry.measurement is not None:
                m = entry.measurement
                item["measurement"] = {"value": m.value, "unit": m.unit, "kind": m.kind.value}
            if entry.evidence:
                item["evidence"] = [_evidence_item(r) for r in entry.evidence]
            entries.append(item)
        location: dict = {}
        if track.location.anatomical_site:
            location["anatomical_site"] = track.location.anatomical_site
        location["laterality"] = track.location.laterality.value
        tracks.append(
            {"lesion_id": track.lesion_id, "type": track.type, "location": location, "history": entries}
        )
    return {"schema_version": "1.0", "tracks": tracks}


def registry_from_doc(doc: dict) -> LesionRegistry:
    tracks = []
    for item in doc.get("tracks", []):
        location = item.get("location", {})
        history = []
        for entry in item.get("history", []):
            measurement = None
            if "measurement" in entry:
                m = entry["measurement"]
                measurement = Measurement(m["value"], m["unit"], MeasurementKind(m["kind"]))
            history.append(
                TrackEntry(
                    study_uid=entry["study_uid"],
                    exam_date=dt.date.fromisoformat(entry["exam_date"]),
                    measurement=measurement,
                    evidence=tuple(_evidence_from_item(r) for r in entry.get("evidence", [])),
                    modality=Modality(entry["modality"]) if "modality" in entry else None,
                    protocol=entry.get("protocol"),
                )
            )
        tracks.append(
            LesionTrack(
                lesion_id=item["lesion_id"],
                type=item["type"],
                location=AnatomicLocation(
                    anatomical_site=location.get("anatomical_site"),
                    laterality=Laterality(location.get("laterality", "not_applicable")),
                ),
                history=tuple(history),
            )
        )
    return LesionRegistry(tracks)


def load_registry(path: Path | str) -> LesionRegistry:
    path = Path(path)
    if not path.exists():
        return LesionRegistry()
    return registry_from_doc(loads_decimal(path.read_text(encoding="utf-8")))


def save_registry(registry: LesionRegistry, path: Path | str) -> None:
    Path(path).write_text(dumps_canonical(registry_to_doc(registry)) + "\n", encoding="utf-8")


def apply_session_to_registry(
    registry: LesionRegistry,
    ctx: StudyContext,
    findings: tuple[StructuredFinding, ...],
    rows: list[ComparisonRow],
) -> None:
    """Append the approved study's measurements to their lesion tracks."""
    by_id = {f.finding_id: f for f in findings}
    for row in rows:
        if not row.confirmed or row.finding_id is None:
            continue
        finding = by_id.get(row.finding_id)
        if finding is None:
            continue
        entry = TrackEntry(
            study_uid=ctx.study_uid,
            exam_date=ctx.exam_date,
            measurement=_size_of(finding),
            evidence=tuple(r for r in finding.evidence if not r.prior),
            modality=ctx.modality,
            protocol=ctx.protocol,
        )
        track = registry.get(row.lesion_id)
        if track is None:
            registry.upsert(
                LesionTrack(row.lesion_id, finding.type, finding.location, (entry,))
            )
        elif all(e.study_uid != ctx.study_uid for e in track.history):
            registry.upsert(replace(track, history=track.history + (entry,)))
