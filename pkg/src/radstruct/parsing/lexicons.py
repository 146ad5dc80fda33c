"""Lexicon set: surface form -> controlled token maps used by extraction.

Lexicons are plain JSON files (one per kind) so deployments can extend
them without code changes.  The shipped set covers the four template
packs.  Loading also builds the reverse (token -> display surface) map
used by the draft composer, so "what we write" and "what we can read
back" stay aligned by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from radstruct.errors import ModelValidationError
from radstruct.model.types import ChangeStatus, CodedConcept, CodeSystem, Laterality, Uncertainty


@dataclass(frozen=True)
class AnatomyEntry:
    token: str
    laterality: Optional[Laterality] = None


@dataclass(frozen=True)
class LexiconSet:
    findings: dict[str, str]
    anatomy: dict[str, AnatomyEntry]
    morphology: dict[str, str]
    change: dict[str, ChangeStatus]
    negation_cues: tuple[str, ...]
    negation_terminators: tuple[str, ...]
    uncertainty_cues: dict[str, Uncertainty]
    finding_codes: dict[str, CodedConcept] = field(default_factory=dict)
    anatomy_codes: dict[str, CodedConcept] = field(default_factory=dict)
    display_overrides: dict[str, str] = field(default_factory=dict)
    version: str = "unversioned"

    def display(self, token: str) -> str:
        """Narrative surface for a controlled token; parseable back."""
        return self.display_overrides.get(token, token.replace("_", " "))

    def finding_code(self, token: str) -> CodedConcept:
        return self.finding_codes.get(token, CodedConcept(CodeSystem.LOCAL, f"example_{token}_code"))

    def anatomy_code(self, token: str) -> CodedConcept:
        return self.anatomy_codes.get(token, CodedConcept(CodeSystem.LOCAL, f"example_{token}_code"))


def _read_json(directory: Path, name: str) -> dict:
    path = directory / name
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ModelValidationError(f"lexicon file missing: {path}", target=name)
    except json.JSONDecodeError as exc:
        raise ModelValidationError(f"lexicon file {path} is not valid JSON: {exc}", target=name)


def _concept(doc: dict) -> CodedConcept:
    return CodedConcept(CodeSystem(doc["system"]), doc["code"])


def load_lexicons(directory: Path | str) -> LexiconSet:
    directory = Path(directory)
    findings_doc = _read_json(directory, "findings.json")
    anatomy_doc = _read_json(directory, "anatomy.json")
    morphology_doc = _read_json(directory, "morphology.json")
    change_doc = _read_json(directory, "change.json")
    cues_doc = _read_json(directory, "cues.json")
    terminology_doc = _read_json(directory, "terminology.json")

    anatomy = {}
    for surface, entry in anatomy_doc["entries"].items():
        laterality = Laterality(entry["laterality"]) if "laterality" in entry else None
        anatomy[surface.lower()] = AnatomyEntry(entry["token"], laterality)

    versions = sorted(
        {
            doc.get("version", "unversioned")
            for doc in (findings_doc, anatomy_doc, morphology_doc, change_doc, cues_doc, terminology_doc)
        }
    )
    return LexiconSet(
        findings={k.lower(): v for k, v in findings_doc["entries"].items()},
        anatomy=anatomy,
        morphology={k.lower(): v for k, v in morphology_doc["entries"].items()},
        change={k.lower(): ChangeStatus(v) for k, v in change_doc["entries"].items()},
        negation_cues=tuple(c.lower() for c in cues_doc["negation_cues"]),
        negation_terminators=tuple(t.lower() for t in cues_doc["negation_terminators"]),
        uncertainty_cues={k.lower(): Uncertainty(v) for k, v in cues_doc["uncertainty_cues"].items()},
        finding_codes={k: _concept(v) for k, v in terminology_doc.get("finding_codes", {}).items()},
        anatomy_codes={k: _concept(v) for k, v in terminology_doc.get("anatomy_codes", {}).items()},
        display_overrides=terminology_doc.get("display", {}),
        version="+".join(versions),
    )


def default_lexicon_dir() -> Path:
    return Path(str(resources.files("radstruct.parsing") / "data"))


def load_default_lexicons() -> LexiconSet:
    return load_lexicons(default_lexicon_dir())
