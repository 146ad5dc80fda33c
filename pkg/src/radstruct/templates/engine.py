"""Versioned exam-specific templates: loading, selection, completeness.

Templates are declarative JSON documents (no executable logic) validated
against the published schema at load time.  A registry load is atomic:
if any file in the directory is invalid, nothing is loaded.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema

from radstruct.errors import DuplicateTemplate, NoTemplate, TemplateError
from radstruct.model.types import (
    Laterality,
    Measurement,
    MeasurementKind,
    Presence,
    ReportDocument,
    SectionName,
    StructuredFinding,
    StudyContext,
)

PHRASE_SLOTS = {
    "uncertainty",
    "change",
    "size",
    "morphology",
    "location",
    "laterality",
    "type",
    "suv",
    "comparison",
}
_SLOT_PATTERN = re.compile(r"\{([a-z_]+)\}")


@dataclass(frozen=True)
class FindingSelector:
    type: str
    laterality: Optional[Laterality] = None
    anatomical_site: Optional[str] = None
    presence: Presence = Presence.PRESENT

    def matches(self, finding: StructuredFinding) -> bool:
        if finding.type != self.type or finding.presence is not self.presence:
            return False
        if self.laterality is not None and finding.location.laterality is not self.laterality:
            return False
        if self.anatomical_site is not None and finding.location.anatomical_site != self.anatomical_site:
            return False
        return True

    def path_fragment(self) -> str:
        parts = [f"type={self.type}"]
        if self.laterality is not None:
            parts.append(f"laterality={self.laterality.value}")
        if self.anatomical_site is not None:
            parts.append(f"site={self.anatomical_site}")
        return f"finding[{','.join(parts)}]"


@dataclass(frozen=True)
class RequiredField:
    select: FindingSelector
    require: str
    label: str
    when_present: bool = False

    def path(self) -> str:
        return f"{self.select.path_fragment()}.{self.require}"


@dataclass(frozen=True)
class PhraseEntry:
    present: Optional[str] = None
    absent: Optional[str] = None
    impression: Optional[str] = None
    impression_absent: Optional[str] = None
    section: SectionName = SectionName.FINDINGS


@dataclass(frozen=True)
class TemplateSelectors:
    modality: str
    body_region: Optional[str] = None
    protocol: Optional[str] = None
    indication_keywords: tuple[str, ...] = ()
    follow_up: Optional[bool] = None
    subspecialty: Optional[str] = None


@dataclass(frozen=True)
class ReportTemplate:
    template_id: str
    version: int
    selectors: TemplateSelectors
    sections: tuple[SectionName, ...]
    name: str = ""
    required_fields: tuple[RequiredField, ...] = ()
    required_measurements: tuple[MeasurementKind, ...] = ()
    allowed_finding_types: tuple[str, ...] = ()
    pertinent_negatives: tuple[str, ...] = ()
    phrase_bank: dict[str, PhraseEntry] = field(default_factory=dict)
    normal_language: dict[SectionName, str] = field(default_factory=dict)
    terminology_defaults: dict[str, str] = field(default_factory=dict)

    def phrase_entry(self, finding_type: str) -> Optional[PhraseEntry]:
        return self.phrase_bank.get(finding_type) or self.phrase_bank.get("*")


@dataclass(frozen=True)
class TemplateMatch:
    template_id: str
    version: int
    score: int
    mismatches: tuple[str, ...] = ()


@dataclass(frozen=True)
class MissingField:
    path: str
    label: str


class TemplateRegistry:
    """Immutable after load; reloads swap the whole registry."""

    def __init__(self, templates: list[ReportTemplate]):
        self._by_key = {(t.template_id, t.version): t for t in templates}

    def __len__(self) -> int:
        return len(self._by_key)

    def all(self) -> list[ReportTemplate]:
        return sorted(self._by_key.values(), key=lambda t: (t.template_id, t.version))

    def get(self, template_id: str, version: Optional[int] = None) -> ReportTemplate:
        if version is not None:
            try:
                return self._by_key[(template_id, version)]
            except KeyError:
                raise NoTemplate(f"no template {template_id} v{version}", target=template_id)
        versions = [v for (tid, v) in self._by_key if tid == template_id]
        if not versions:
            raise NoTemplate(f"no template {template_id}", target=template_id)
        return self._by_key[(template_id, max(versions))]


_schema_cache: Optional[dict] = None


def _template_schema() -> dict:
    global _schema_cache
    if _schema_cache is None:
        text = (resources.files("radstruct.schemas") / "template.schema.json").read_text()
        _schema_cache = json.loads(text)
    return _schema_cache


def _check_phrase(pattern: str, path: str) -> None:
    for slot in _SLOT_PATTERN.findall(pattern):
        if slot not in PHRASE_SLOTS:
            raise TemplateError(f"unknown phrase slot {{{slot}}}", target=path)
    stray = re.sub(_SLOT_PATTERN, "", pattern)
    if "{" in stray or "}" in stray:
        raise TemplateError("unbalanced braces in phrase pattern", target=path)


def _parse_template(doc: dict, source: str) -> ReportTemplate:
    try:
        jsonschema.validate(doc, _template_schema())
    except jsonschema.ValidationError as exc:
        path = ".".join(str(p) for p in exc.absolute_path)
        raise TemplateError(f"{source}: {exc.message}", target=path or source)

    selectors_doc = doc["selectors"]
    selectors = TemplateSelectors(
        modality=selectors_doc["modality"],
        body_region=selectors_doc.get("body_region"),
        protocol=selectors_doc.get("protocol"),
        indication_keywords=tuple(k.lower() for k in selectors_doc.get("indication_keywords", [])),
        follow_up=selectors_doc.get("follow_up"),
        subspecialty=selectors_doc.get("subspecialty"),
    )
    required = []
    for item in doc.get("required_fields", []):
        sel = item["select"]
        required.append(
            RequiredField(
                select=FindingSelector(
                    type=sel["type"],
                    laterality=Laterality(sel["laterality"]) if "laterality" in sel else None,
                    anatomical_site=sel.get("anatomical_site"),
                    presence=Presence(sel.get("presence", "present")),
                ),
                require=item["require"],
                label=item["label"],
                when_present=item.get("when_present", False),
            )
        )
    phrase_bank = {}
    for key, entry in doc["phrase_bank"].items():
        for field_name in ("present", "absent", "impression", "impression_absent"):
            if field_name in entry:
                _check_phrase(entry[field_name], f"{source}.phrase_bank.{key}.{field_name}")
        phrase_bank[key] = PhraseEntry(
            present=entry.get("present"),
            absent=entry.get("absent"),
            impression=entry.get("impression"),
            impression_absent=entry.get("impression_absent"),
            section=SectionName(entry.get("section", "Findings")),
        )
    return ReportTemplate(
        template_id=doc["template_id"],
        version=doc["version"],
        name=doc.get("name", ""),
        selectors=selectors,
        sections=tuple(SectionName(s) for s in doc["sections"]),
        required_fields=tuple(required),
        required_measurements=tuple(MeasurementKind(k) for k in doc.get("required_measurements", [])),
        allowed_finding_types=tuple(doc.get("allowed_finding_types", [])),
        pertinent_negatives=tuple(doc.get("pertinent_negatives", [])),
        phrase_bank=phrase_bank,
        normal_language={SectionName(k): v for k, v in doc.get("normal_language", {}).items()},
        terminology_defaults=dict(doc.get("terminology_defaults", {})),
    )


def load_templates(directory: Path | str) -> TemplateRegistry:
    """Load every template file in a directory; all-or-nothing."""
    directory = Path(directory)
    templates: list[ReportTemplate] = []
    seen: dict[tuple[str, int], str] = {}
    for path in sorted(directory.glob("*.json")):
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise TemplateError(f"{path.name}: not valid JSON ({exc.msg})", target=path.name)
        template = _parse_template(doc, path.name)
        key = (template.template_id, template.version)
        if key in seen:
            raise DuplicateTemplate(
                f"({template.template_id}, {template.version}) declared by both "
                f"{seen[key]} and {path.name}",
                target=template.template_id,
            )
        seen[key] = path.name
        templates.append(template)
    return TemplateRegistry(templates)


def default_template_dir() -> Path:
    return Path(str(resources.files("radstruct.templates") / "data"))


def load_default_templates() -> TemplateRegistry:
    return load_templates(default_template_dir())


def score_template(template: ReportTemplate, ctx: StudyContext) -> Optional[tuple[int, tuple[str, ...]]]:
    """Score a template against a study; None when modality cannot match."""
    sel = template.selectors
    score = 0
    mismatches: list[str] = []
    if sel.modality == "*":
        pass  # generic fallback scores zero on modality
    elif sel.modality == ctx.modality.value:
        score += 1
    else:
        return None
    if sel.body_region is not None:
        if ctx.body_region == sel.body_region:
            score += 1
        else:
            mismatches.append("body_region")
    if sel.protocol is not None and ctx.protocol == sel.protocol:
        score += 1
    if sel.indication_keywords and ctx.indication:
        lowered = ctx.indication.lower()
        if any(keyword in lowered for keyword in sel.indication_keywords):
            score += 1
    if sel.follow_up is not None and sel.follow_up == ctx.follow_up:
        score += 1
    return score, tuple(mismatches)


def select_template(
    ctx: StudyContext, registry: TemplateRegistry, allow_generic: bool = False
) -> TemplateMatch:
    """Pick the highest-scoring template; modality match is mandatory.

    Ties break on higher version, then lexicographic template id.  A
    winning match that missed a required selector carries it in
    ``mismatches`` so consistency rule C7 can fire downstream.
    """
    candidates: list[tuple[int, int, str, TemplateMatch]] = []
    for template in registry.all():
        if template.selectors.modality == "*" and not allow_generic:
            continue
        scored = score_template(template, ctx)
        if scored is None:
            continue
        score, mismatches = scored
        candidates.append(
            (
                score,
                template.version,
                template.template_id,
                TemplateMatch(template.template_id, template.version, score, mismatches),
            )
        )
    if not candidates:
        raise NoTemplate(
            f"no template matches modality {ctx.modality.value}", target=ctx.modality.value
        )
    candidates.sort(key=lambda item: (-item[0], -item[1], item[2]))
    return candidates[0][3]


def _resolve_path(finding: StructuredFinding, path: str):
    if path.startswith("attributes."):
        return finding.attributes.get(path.split(".", 1)[1])
    if path == "comparison":
        return finding.comparison
    if path == "location.anatomical_site":
        return finding.location.anatomical_site
    return None


def validate_completeness(report: ReportDocument, template: ReportTemplate) -> list[MissingField]:
    """One record per unsatisfied requirement; empty list iff complete."""
    missing: list[MissingField] = []
    for rule in template.required_fields:
        matches = [f for f in report.structured_findings if rule.select.matches(f)]
        if not matches:
            if not rule.when_present:
                missing.append(MissingField(rule.path(), rule.label))
            continue
        if any(_resolve_path(f, rule.require) in (None, "") for f in matches):
            missing.append(MissingField(rule.path(), rule.label))
    for kind in template.required_measurements:
        satisfied = any(
            isinstance(value, Measurement) and value.kind is kind
            for f in report.structured_findings
            if f.presence is Presence.PRESENT
            for value in f.attributes.values()
        )
        if not satisfied:
            missing.append(MissingField(f"measurement[{kind.value}]", f"Required {kind.value} measurement"))
    return missing
