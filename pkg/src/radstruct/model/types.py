"""Domain types for structured, evidence-linked radiology findings.

Every type here is an immutable value (frozen dataclass or str-enum)
and safe to share across threads.  Construction applies only the checks
that must never be violated anywhere in the pipeline; everything else
is reported by ``validate()`` so that boundary layers (the canonical
codec, the consistency checker, approval) can surface violations as
data instead of crashes.
"""

from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass, field, replace
from decimal import Decimal
from enum import Enum
from typing import Optional, Union

from radstruct.errors import DimensionMismatch, ModelValidationError, UnknownUnit
from radstruct.model import units
from radstruct.model.jsonio import format_decimal


class Modality(str, Enum):
    CT = "CT"
    MR = "MR"
    PT = "PT"
    US = "US"
    CR_DX = "CR/DX"

    @classmethod
    def parse(cls, token: str) -> "Modality":
        """Accept DICOM-style codes and common spoken forms."""
        normalized = token.strip().upper()
        aliases = {
            "MRI": cls.MR,
            "PET": cls.PT,
            "PET/CT": cls.PT,
            "PETCT": cls.PT,
            "PET-CT": cls.PT,
            "ULTRASOUND": cls.US,
            "CR": cls.CR_DX,
            "DX": cls.CR_DX,
            "X-RAY": cls.CR_DX,
            "XRAY": cls.CR_DX,
            "RADIOGRAPH": cls.CR_DX,
        }
        if normalized in aliases:
            return aliases[normalized]
        try:
            return cls(normalized)
        except ValueError:
            raise ModelValidationError(f"unknown modality {token!r}", target="modality")

    def display(self) -> str:
        return {
            Modality.CT: "CT",
            Modality.MR: "MR",
            Modality.PT: "PET/CT",
            Modality.US: "ultrasound",
            Modality.CR_DX: "radiograph",
        }[self]


class MeasurementKind(str, Enum):
    LINEAR = "linear"
    AREA = "area"
    VOLUME = "volume"
    VELOCITY = "velocity"
    SUV_MAX = "suv_max"
    SUV_MEAN = "suv_mean"
    COUNT = "count"


class Laterality(str, Enum):
    LEFT = "left"
    RIGHT = "right"
    BILATERAL = "bilateral"
    MIDLINE = "midline"
    NOT_APPLICABLE = "not_applicable"


class ChangeStatus(str, Enum):
    NEW = "new"
    STABLE = "stable"
    INCREASED = "increased"
    DECREASED = "decreased"
    RESOLVED = "resolved"
    INDETERMINATE = "indeterminate"


class EvidenceKind(str, Enum):
    IMAGE = "image"
    MEASUREMENT_OBJECT = "measurement_object"
    SEGMENTATION_OBJECT = "segmentation_object"
    WORKSHEET_VALUE = "worksheet_value"
    PRIOR_REPORT_SPAN = "prior_report_span"


class ProvenanceSource(str, Enum):
    DICTATION_EXTRACTED = "dictation_extracted"
    VIEWER_MEASUREMENT_IMPORT = "viewer_measurement_import"
    WORKSHEET_IMPORT = "worksheet_import"
    DICOM_METADATA = "dicom_metadata"
    PRIOR_REPORT_PARSE = "prior_report_parse"
    AI_MODULE_OUTPUT = "ai_module_output"
    TEMPLATE_DEFAULT = "template_default"
    MANUAL_ENTRY = "manual_entry"
    RADIOLOGIST_CONFIRMED = "radiologist_confirmed"


class ActorRole(str, Enum):
    RADIOLOGIST = "radiologist"
    SONOGRAPHER = "sonographer"
    SYSTEM = "system"
    AI_MODULE = "ai_module"


class ReviewStatus(str, Enum):
    UNREVIEWED = "unreviewed"
    EDITED = "edited"
    APPROVED = "approved"
    REJECTED = "rejected"


class Presence(str, Enum):
    PRESENT = "present"
    ABSENT = "absent"


class Uncertainty(str, Enum):
    ASSERTED = "asserted"
    POSSIBLE = "possible"
    UNCERTAIN = "uncertain"


class SectionName(str, Enum):
    INDICATION = "Indication"
    TECHNIQUE = "Technique"
    COMPARISON = "Comparison"
    FINDINGS = "Findings"
    IMPRESSION = "Impression"
    RECOMMENDATIONS = "Recommendations"


class DatePrecision(str, Enum):
    DAY = "day"
    MONTH = "month"
    YEAR = "year"


class CodeSystem(str, Enum):
    RADLEX = "RadLex"
    SNOMED_CT = "SNOMED-CT"
    LOINC = "LOINC"
    LOCAL = "local"


_SIDED_PREFIXES = (("left_", Laterality.LEFT), ("right_", Laterality.RIGHT))


def site_sidedness(anatomical_site: str) -> Optional[Laterality]:
    """Laterality encoded in a site token, if any (right_upper_lobe -> right)."""
    for prefix, side in _SIDED_PREFIXES:
        if anatomical_site.startswith(prefix):
            return side
    return None


@dataclass(frozen=True)
class PartialDate:
    """A calendar date carried at day, month, or year precision."""

    year: int
    month: Optional[int] = None
    day: Optional[int] = None

    def __post_init__(self):
        if self.day is not None and self.month is None:
            raise ModelValidationError("a day-precision date needs a month", target="prior_exam_date")
        # round-trips through datetime.date to reject impossible dates
        dt.date(self.year, self.month or 1, self.day or 1)

    @property
    def precision(self) -> DatePrecision:
        if self.day is not None:
            return DatePrecision.DAY
        if self.month is not None:
            return DatePrecision.MONTH
        return DatePrecision.YEAR

    def iso(self) -> str:
        if self.day is not None:
            return f"{self.year:04d}-{self.month:02d}-{self.day:02d}"
        if self.month is not None:
            return f"{self.year:04d}-{self.month:02d}"
        return f"{self.year:04d}"

    @classmethod
    def parse(cls, text: str) -> "PartialDate":
        m = re.fullmatch(r"(\d{4})(?:-(\d{2})(?:-(\d{2}))?)?", text.strip())
        if not m:
            raise ModelValidationError(f"not a date: {text!r}", target="prior_exam_date")
        year, month, day = m.groups()
        return cls(int(year), int(month) if month else None, int(day) if day else None)

    @classmethod
    def from_date(cls, value: dt.date) -> "PartialDate":
        return cls(value.year, value.month, value.day)

    def matches(self, other: dt.date) -> bool:
        """True when ``other`` falls inside this date at its precision."""
        if self.year != other.year:
            return False
        if self.month is not None and self.month != other.month:
            return False
        if self.day is not None and self.day != other.day:
            return False
        return True


@dataclass(frozen=True)
class PriorStudyRef:
    study_uid: str
    exam_date: dt.date
    modality: Modality
    protocol: Optional[str] = None


@dataclass(frozen=True)
class StudyContext:
    """Identity and acquisition context of the study being reported."""

    study_uid: str
    modality: Modality
    exam_date: dt.date
    accession: Optional[str] = None
    body_region: Optional[str] = None
    protocol: Optional[str] = None
    indication: Optional[str] = None
    follow_up: bool = False
    prior_refs: tuple[PriorStudyRef, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "prior_refs", tuple(self.prior_refs))

    def validate(self) -> list[str]:
        problems = []
        if not self.study_uid:
            problems.append("study.study_uid: must be non-empty")
        for i, ref in enumerate(self.prior_refs):
            if ref.exam_date > self.exam_date:
                problems.append(
                    f"study.prior_studies[{i}].exam_date: prior exam {ref.exam_date.isoformat()} "
                    f"is after the current exam {self.exam_date.isoformat()}"
                )
        return problems


@dataclass(frozen=True)
class Measurement:
    """A numeric measurement with a UCUM unit and a kind.

    Construction rejects only what can never be legitimate (non-finite
    or negative values); unit/kind compatibility is reported by
    ``validate`` so the consistency checker can flag bad units instead
    of the model refusing to represent them.
    """

    value: Decimal
    unit: str
    kind: MeasurementKind = MeasurementKind.LINEAR
    dimensions: Optional[tuple[Decimal, ...]] = None

    def __post_init__(self):
        value = self.value if isinstance(self.value, Decimal) else Decimal(str(self.value))
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "kind", MeasurementKind(self.kind))
        if self.dimensions is not None:
            dims = tuple(d if isinstance(d, Decimal) else Decimal(str(d)) for d in self.dimensions)
            object.__setattr__(self, "dimensions", dims)
        if not value.is_finite():
            raise ModelValidationError("measurement value must be finite", target="value")
        if value < 0:
            raise ModelValidationError("measurement value must be >= 0", target="value")

    def validate(self, path: str = "measurement") -> list[str]:
        try:
            units.validate_unit(self.unit, self.kind.value)
        except (UnknownUnit, DimensionMismatch) as exc:
            return [f"{path}.unit: {exc.message}"]
        return []

    def converted(self, target_unit: str) -> "Measurement":
        """Exact conversion to a dimensionally compatible unit."""
        value = units.convert_value(self.value, self.unit, target_unit)
        dims = None
        if self.dimensions is not None:
            dims = tuple(units.convert_value(d, self.unit, target_unit) for d in self.dimensions)
        return Measurement(value, units.canonical_unit(target_unit), self.kind, dims)

    def display(self) -> str:
        """Reporting-style rendering: "7 mm", "3.2 x 2.1 cm", "SUVmax 8.2"."""
        if self.kind is MeasurementKind.SUV_MAX:
            return f"SUVmax {format_decimal(self.value)}"
        if self.kind is MeasurementKind.SUV_MEAN:
            return f"SUVmean {format_decimal(self.value)}"
        if self.kind is MeasurementKind.COUNT:
            return format_decimal(self.value)
        if self.dimensions:
            axes = " x ".join(format_decimal(d) for d in self.dimensions)
            return f"{axes} {self.unit}"
        return f"{format_decimal(self.value)} {self.unit}"


AttributeValue = Union[str, Measurement]


@dataclass(frozen=True)
class AnatomicLocation:
    anatomical_site: Optional[str] = None
    laterality: Laterality = Laterality.NOT_APPLICABLE

    def validate(self, path: str = "finding.location") -> list[str]:
        if self.anatomical_site:
            encoded = site_sidedness(self.anatomical_site)
            if encoded is not None and self.laterality is not encoded:
                return [
                    f"{path}: site {self.anatomical_site!r} encodes laterality "
                    f"{encoded.value!r} but laterality is {self.laterality.value!r}"
                ]
        return []

    def display(self) -> str:
        return (self.anatomical_site or "").replace("_", " ")


@dataclass(frozen=True)
class Comparison:
    """Relationship of a finding to a prior examination."""

    change: ChangeStatus
    prior_exam_date: Optional[PartialDate] = None
    prior_finding_id: Optional[str] = None
    prior_measurement: Optional[Measurement] = None
    prior_modality: Optional[Modality] = None

    def validate(self, path: str = "finding.comparison") -> list[str]:
        problems = []
        if self.change in (ChangeStatus.STABLE, ChangeStatus.INCREASED, ChangeStatus.DECREASED):
            if self.prior_measurement is None and self.prior_finding_id is None:
                problems.append(
                    f"{path}: change {self.change.value!r} requires a prior measurement "
                    "or a prior finding id"
                )
        if self.prior_measurement is not None:
            problems.extend(self.prior_measurement.validate(f"{path}.prior_measurement"))
        return problems


@dataclass(frozen=True)
class EvidenceRef:
    """Pointer from a finding to an evidence object or image."""

    kind: EvidenceKind
    series: Optional[int] = None
    image: Optional[int] = None
    object_id: Optional[str] = None
    prior: bool = False

    def validate(self, path: str = "evidence") -> list[str]:
        problems = []
        if self.kind is EvidenceKind.IMAGE:
            if self.series is None or self.image is None:
                problems.append(f"{path}: image reference requires series and image")
            elif self.series < 1 or self.image < 1:
                problems.append(f"{path}: series and image must be >= 1")
        else:
            if not self.object_id:
                problems.append(f"{path}: {self.kind.value} reference requires an object id")
        return problems

    def display(self) -> str:
        if self.kind is EvidenceKind.IMAGE:
            return f"Series {self.series}, image {self.image}"
        return str(self.object_id)


_EVIDENCE_KIND_ORDER = {kind: i for i, kind in enumerate(EvidenceKind)}


def _evidence_sort_key(ref: EvidenceRef):
    return (
        ref.prior,
        _EVIDENCE_KIND_ORDER[ref.kind],
        ref.series if ref.series is not None else -1,
        ref.image if ref.image is not None else -1,
        ref.object_id or "",
    )


def normalize_evidence(refs) -> tuple[EvidenceRef, ...]:
    """Deduplicate and order evidence refs canonically (current first)."""
    unique = sorted(set(refs), key=_evidence_sort_key)
    return tuple(unique)


@dataclass(frozen=True)
class Provenance:
    """Origin and review status of a structured element."""

    actor_role: ActorRole
    review_status: ReviewStatus
    source: Optional[ProvenanceSource] = None
    timestamp: Optional[dt.datetime] = None
    model_version: Optional[str] = None
    measurement_source: Optional[str] = None
    segmentation_source: Optional[str] = None
    comparison_source: Optional[str] = None

    def validate(self, path: str = "provenance") -> list[str]:
        problems = []
        if self.source is ProvenanceSource.AI_MODULE_OUTPUT and not self.model_version:
            problems.append(f"{path}.model_version: required when source is ai_module_output")
        if self.review_status is ReviewStatus.APPROVED and self.actor_role is not ActorRole.RADIOLOGIST:
            problems.append(f"{path}.reviewer_role: approval must be by a radiologist")
        return problems


@dataclass(frozen=True)
class CodedConcept:
    system: CodeSystem
    code: str


@dataclass(frozen=True)
class TerminologyBinding:
    unit: str = "mm"
    finding_code: Optional[CodedConcept] = None
    anatomy_code: Optional[CodedConcept] = None


@dataclass(frozen=True)
class FinalSentence:
    sentence: str
    section: SectionName


@dataclass(frozen=True)
class StructuredFinding:
    """One clinical observation with location, attributes, evidence,
    terminology, provenance, and (after review) its final sentence."""

    finding_id: str
    type: str
    presence: Presence
    location: AnatomicLocation
    provenance: Provenance
    attributes: dict[str, AttributeValue] = field(default_factory=dict)
    comparison: Optional[Comparison] = None
    evidence: tuple[EvidenceRef, ...] = ()
    terminology: TerminologyBinding = TerminologyBinding()
    final_sentence: Optional[FinalSentence] = None
    uncertainty: Uncertainty = Uncertainty.ASSERTED

    def __post_init__(self):
        object.__setattr__(self, "attributes", dict(self.attributes))
        object.__setattr__(self, "evidence", normalize_evidence(self.evidence))
        if "change" in self.attributes:
            raise ModelValidationError(
                "interval change belongs on the comparison, not in attributes",
                target="finding.attributes.change",
            )
        if self.presence is Presence.ABSENT:
            measured = [k for k, v in self.attributes.items() if isinstance(v, Measurement)]
            if measured:
                raise ModelValidationError(
                    f"absent finding cannot carry measurements: {', '.join(measured)}",
                    target="finding.attributes",
                )
            if any(ref.kind is EvidenceKind.SEGMENTATION_OBJECT for ref in self.evidence):
                raise ModelValidationError(
                    "absent finding cannot cite segmentation evidence",
                    target="finding.evidence",
                )

    def validate(self, path: str = "finding") -> list[str]:
        problems = []
        if not self.finding_id:
            problems.append(f"{path}.finding_id: must be non-empty")
        problems.extend(self.location.validate(f"{path}.location"))
        for key, value in self.attributes.items():
            if isinstance(value, Measurement):
                problems.extend(value.validate(f"{path}.attributes.{key}"))
        if self.comparison is not None:
            problems.extend(self.comparison.validate(f"{path}.comparison"))
        for i, ref in enumerate(self.evidence):
            problems.extend(ref.validate(f"{path}.evidence[{i}]"))
        problems.extend(self.provenance.validate(f"{path}.provenance"))
        if self.final_sentence is not None and self.provenance.review_status not in (
            ReviewStatus.APPROVED,
            ReviewStatus.EDITED,
        ):
            problems.append(
                f"{path}.final_report_text: requires review status approved or edited, "
                f"not {self.provenance.review_status.value!r}"
            )
        return problems

    def measurements(self) -> dict[str, Measurement]:
        return {k: v for k, v in self.attributes.items() if isinstance(v, Measurement)}

    def size(self) -> Optional[Measurement]:
        value = self.attributes.get("size")
        return value if isinstance(value, Measurement) else None

    def with_evidence(self, *refs: EvidenceRef) -> "StructuredFinding":
        return replace(self, evidence=self.evidence + tuple(refs))


@dataclass(frozen=True)
class ReportSection:
    name: SectionName
    text: str = ""


@dataclass(frozen=True)
class ReportDocument:
    """Dual-output report: ordered narrative sections plus the structured set."""

    sections: tuple[ReportSection, ...] = ()
    structured_findings: tuple[StructuredFinding, ...] = ()
    critical_flag: bool = False

    def __post_init__(self):
        object.__setattr__(self, "sections", tuple(self.sections))
        object.__setattr__(self, "structured_findings", tuple(self.structured_findings))

    def validate(self, path: str = "report") -> list[str]:
        problems = []
        names = [s.name for s in self.sections]
        if len(names) != len(set(names)):
            problems.append(f"{path}.sections: section names must be unique")
        for required in (SectionName.FINDINGS, SectionName.IMPRESSION):
            if required not in names:
                problems.append(f"{path}.sections: {required.value} section is required")
        seen = set()
        for f in self.structured_findings:
            if f.finding_id in seen:
                problems.append(f"{path}.findings: duplicate finding_id {f.finding_id!r}")
            seen.add(f.finding_id)
            problems.extend(f.validate(f"{path}.finding[{f.finding_id}]"))
        return problems

    def section_text(self, name: SectionName) -> str:
        for section in self.sections:
            if section.name is name:
                return section.text
        return ""

    def with_section(self, name: SectionName, text: str) -> "ReportDocument":
        updated = tuple(
            ReportSection(s.name, text) if s.name is name else s for s in self.sections
        )
        if name not in [s.name for s in self.sections]:
            updated = updated + (ReportSection(name, text),)
        return replace(self, sections=updated)


@dataclass(frozen=True)
class CanonicalFragment:
    """The unit the canonical interchange document carries: one study
    context, the bound template id, and one structured finding."""

    study: StudyContext
    finding: StructuredFinding
    template_id: Optional[str] = None

    def validate(self) -> list[str]:
        problems = self.study.validate()
        problems.extend(self.finding.validate())
        # duplicate finding-id discipline is per session; here the single
        # finding only needs internal consistency
        return problems
