"""Deployment policy: stability bands, sanity ranges, rule severities."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import Decimal
from importlib import resources
from pathlib import Path
from typing import Optional

from radstruct.model.types import MeasurementKind
from radstruct.tracking import ChangePolicy

# physiologic sanity bounds (not clinical reference ranges), per kind,
# expressed in the kind's range unit below
_RANGE_UNITS = {
    MeasurementKind.LINEAR: "mm",
    MeasurementKind.AREA: "mm2",
    MeasurementKind.VOLUME: "mL",
    MeasurementKind.VELOCITY: "cm/s",
    MeasurementKind.SUV_MAX: "{SUVbw}g/mL",
    MeasurementKind.SUV_MEAN: "{SUVbw}g/mL",
    MeasurementKind.COUNT: "1",
}


@dataclass(frozen=True)
class EnginePolicy:
    change: ChangePolicy = ChangePolicy()
    ranges: dict[MeasurementKind, tuple[Decimal, Decimal]] = field(default_factory=dict)
    severities: dict[str, str] = field(default_factory=dict)

    def range_for(self, kind: MeasurementKind) -> tuple[Decimal, Decimal, str]:
        lo, hi = self.ranges[kind]
        return lo, hi, _RANGE_UNITS[kind]

    def severity(self, key: str, default: str) -> str:
        return self.severities.get(key, default)


def _from_doc(doc: dict) -> EnginePolicy:
    ranges = {
        MeasurementKind(kind): (Decimal(str(lo)), Decimal(str(hi)))
        for kind, (lo, hi) in doc.get("ranges", {}).items()
    }
    return EnginePolicy(
        change=ChangePolicy(
            stable_band_linear_mm=Decimal(str(doc.get("stable_band_linear_mm", 1))),
            stable_band_relative=Decimal(str(doc.get("stable_band_relative", "0.10"))),
        ),
        ranges=ranges,
        severities=dict(doc.get("severities", {})),
    )


def load_policy(path: Optional[Path | str] = None) -> EnginePolicy:
    if path is None:
        text = (resources.files("radstruct.policy") / "default_policy.json").read_text()
    else:
        text = Path(path).read_text(encoding="utf-8")
    return _from_doc(json.loads(text))
