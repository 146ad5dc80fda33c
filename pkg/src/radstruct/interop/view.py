"""The session projection the encoders consume.

Exporters never see the workflow's session object directly; they get
this immutable view, which carries the session state so the approved-
only export gate is enforced at the encoding boundary as well.
"""

from __future__ import annotations

from dataclasses import dataclass

from radstruct.errors import ExportBlocked
from radstruct.model.types import ReportDocument, StructuredFinding, StudyContext
from radstruct.tracking import ComparisonRow

EXPORTABLE_STATES = ("approved", "exported")


@dataclass(frozen=True)
class ExportView:
    ctx: StudyContext
    template_id: str
    findings: tuple[StructuredFinding, ...]
    report: ReportDocument
    comparison_rows: tuple[ComparisonRow, ...]
    state: str
    critical_flag: bool = False
    template_name: str = ""

    def require_exportable(self) -> None:
        if self.state not in EXPORTABLE_STATES:
            raise ExportBlocked(
                f"session is {self.state!r}; structured export requires an approved session",
                target=self.state,
            )

    def tracking_id(self, finding_id: str) -> str:
        for row in self.comparison_rows:
            if row.finding_id == finding_id and row.confirmed:
                return row.lesion_id
        return finding_id

    def document_id(self) -> str:
        return self.ctx.accession or self.ctx.study_uid
