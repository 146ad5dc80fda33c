"""Versioned AI-module plugin boundary with a rule-based reference module.

Modules receive a session snapshot and return evidence objects and/or
candidate findings.  Everything a module returns enters the session
unreviewed, stamped with the module's version; nothing is ever inserted
into the narrative without human acceptance.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import Callable, Optional

from radstruct.errors import UnknownModule
from radstruct.evidence import EvidenceObject, EvidenceObjectKind
from radstruct.model.types import (
    ActorRole,
    EvidenceKind,
    Presence,
    Provenance,
    ProvenanceSource,
    ReviewStatus,
    StructuredFinding,
)


@dataclass(frozen=True)
class AiModuleOutput:
    evidence_objects: tuple[EvidenceObject, ...] = ()
    candidate_findings: tuple[StructuredFinding, ...] = ()


@dataclass(frozen=True)
class AiModuleDescriptor:
    module_id: str
    model_version: str
    input_kind: str  # "findings" | "transcript"
    output_kind: str  # "evidence_objects" | "candidate_findings"
    run: Callable[[tuple[StructuredFinding, ...], dt.datetime], AiModuleOutput]


def _segmentation_proposer(
    findings: tuple[StructuredFinding, ...], at: dt.datetime
) -> AiModuleOutput:
    """Reference rule module: propose a segmentation object for every
    measured present finding that already has a current image reference."""
    objects = []
    for finding in findings:
        if finding.presence is not Presence.PRESENT or not finding.measurements():
            continue
        image = next(
            (r for r in finding.evidence if r.kind is EvidenceKind.IMAGE and not r.prior), None
        )
        if image is None:
            continue
        objects.append(
            EvidenceObject(
                object_id=f"DICOM_SEG_{finding.finding_id.replace('-', '_')}_PROPOSED",
                kind=EvidenceObjectKind.SEGMENTATION_OBJECT,
                payload={
                    "mask_object_id": f"DICOM_SEG_{finding.finding_id.replace('-', '_')}_PROPOSED",
                    "referenced_series": image.series,
                    "referenced_images": [image.image],
                    "algorithm": "threshold-region-rule",
                    "finding_type": finding.type,
                },
                source=Provenance(
                    actor_role=ActorRole.AI_MODULE,
                    review_status=ReviewStatus.UNREVIEWED,
                    source=ProvenanceSource.AI_MODULE_OUTPUT,
                    timestamp=at,
                    model_version="seg-rules-1.0",
                ),
            )
        )
    return AiModuleOutput(evidence_objects=tuple(objects))


REFERENCE_MODULES = {
    "segmentation_proposer": AiModuleDescriptor(
        module_id="segmentation_proposer",
        model_version="seg-rules-1.0",
        input_kind="findings",
        output_kind="evidence_objects",
        run=_segmentation_proposer,
    )
}


class AiModuleRegistry:
    def __init__(self, modules: Optional[dict[str, AiModuleDescriptor]] = None):
        self._modules = dict(REFERENCE_MODULES if modules is None else modules)

    def get(self, module_id: str) -> AiModuleDescriptor:
        try:
            return self._modules[module_id]
        except KeyError:
            raise UnknownModule(f"no AI module {module_id!r} registered", target=module_id)

    def register(self, descriptor: AiModuleDescriptor) -> None:
        self._modules[descriptor.module_id] = descriptor
