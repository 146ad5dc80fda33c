"""Cross-encoding parity: FHIR bundle vs SR content tree.

Both documents must carry the same values, units, anatomical context,
and evidence references for every measured finding.  The check compares
the two encodings directly (not the session they came from), so it also
catches hand-edits to either file.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal
from enum import Enum

from radstruct.interop.fhir import ATTRIBUTE_SYSTEM, EVIDENCE_SYSTEM, SITE_SYSTEM, TRACKING_SYSTEM


class MismatchKind(str, Enum):
    VALUE = "value_mismatch"
    UNIT = "unit_mismatch"
    SITE = "site_mismatch"
    EVIDENCE = "evidence_mismatch"
    ABSENT_COUNTERPART = "absent_counterpart"


@dataclass(frozen=True)
class ParityMismatch:
    kind: MismatchKind
    target: str
    detail: str


def _decimal(value) -> Decimal:
    return value if isinstance(value, Decimal) else Decimal(str(value))


def _fhir_measured(bundle: dict) -> dict[str, dict]:
    """tracking id -> {measurements, site, evidence} for measured observations."""
    out: dict[str, dict] = {}
    for entry in bundle.get("entry", []):
        resource = entry["resource"]
        if resource.get("resourceType") != "Observation":
            continue
        if any(
            coding.get("code") == "absent"
            for interp in resource.get("interpretation", [])
            for coding in interp.get("coding", [])
        ):
            continue
        measurements = {}
        for component in resource.get("component", []):
            codes = {c.get("system"): c.get("code") for c in component["code"].get("coding", [])}
            attr = codes.get(ATTRIBUTE_SYSTEM)
            if attr and "valueQuantity" in component:
                q = component["valueQuantity"]
                measurements[attr] = (_decimal(q["value"]), q["code"])
        if not measurements:
            continue
        tracking = resource["id"]
        for identifier in resource.get("identifier", []):
            if identifier.get("system") == TRACKING_SYSTEM:
                tracking = identifier["value"]
        site = None
        for coding in resource.get("bodySite", {}).get("coding", []):
            if coding.get("system") == SITE_SYSTEM:
                site = coding.get("code")
        evidence = {
            item["identifier"]["value"]
            for item in resource.get("derivedFrom", [])
            if item.get("identifier", {}).get("system") == EVIDENCE_SYSTEM
        }
        out[tracking] = {"measurements": measurements, "site": site, "evidence": evidence}
    return out


def _sr_groups(sr: dict) -> dict[str, dict]:
    out: dict[str, dict] = {}
    for container in sr.get("content", {}).get("children", []):
        for group in container.get("children", []):
            tracking = None
            site = None
            measurements = {}
            evidence = set()
            for child in group.get("children", []):
                vt = child.get("value_type")
                concept_code = child.get("concept", {}).get("code")
                if vt == "TEXT" and concept_code == "112039":
                    tracking = child["value"]
                elif vt == "CODE" and concept_code == "G-C0E3":
                    meaning = child.get("value", {}).get("meaning", "")
                    site = meaning.replace(" ", "_") if meaning else None
                elif vt == "NUM":
                    mv = child["measured_value"]
                    measurements[child["concept"]["code"]] = (_decimal(mv["value"]), mv["unit"])
                elif vt == "IMAGE":
                    token = f"image:{child['series']}:{child['image']}"
                    if child.get("prior"):
                        token += ":prior"
                    evidence.add(token)
                elif vt == "COMPOSITE":
                    token = f"{child['kind']}:{child['object_id']}"
                    if child.get("prior"):
                        token += ":prior"
                    evidence.add(token)
            if tracking is not None:
                out[tracking] = {"measurements": measurements, "site": site, "evidence": evidence}
    return out


def parity_check(fhir_bundle: dict, sr_doc: dict) -> list[ParityMismatch]:
    """Empty list iff every measured finding agrees across both encodings."""
    mismatches: list[ParityMismatch] = []
    fhir = _fhir_measured(fhir_bundle)
    sr = _sr_groups(sr_doc)
    for tracking in sorted(set(fhir) | set(sr)):
        if tracking not in sr:
            mismatches.append(
                ParityMismatch(MismatchKind.ABSENT_COUNTERPART, tracking, "no SR measurement group")
            )
            continue
        if tracking not in fhir:
            mismatches.append(
                ParityMismatch(MismatchKind.ABSENT_COUNTERPART, tracking, "no FHIR observation")
            )
            continue
        left, right = fhir[tracking], sr[tracking]
        for attr in sorted(set(left["measurements"]) | set(right["measurements"])):
            if attr not in right["measurements"] or attr not in left["measurements"]:
                mismatches.append(
                    ParityMismatch(
                        MismatchKind.VALUE, f"{tracking}/{attr}", "measurement present in only one encoding"
                    )
                )
                continue
            (lv, lu), (rv, ru) = left["measurements"][attr], right["measurements"][attr]
            if lu != ru:
                mismatches.append(
                    ParityMismatch(MismatchKind.UNIT, f"{tracking}/{attr}", f"{lu!r} vs {ru!r}")
                )
            if lv != rv:
                mismatches.append(
                    ParityMismatch(MismatchKind.VALUE, f"{tracking}/{attr}", f"{lv} vs {rv}")
                )
        if (left["site"] or None) != (right["site"] or None):
            mismatches.append(
                ParityMismatch(MismatchKind.SITE, tracking, f"{left['site']!r} vs {right['site']!r}")
            )
        if left["evidence"] != right["evidence"]:
            only_fhir = sorted(left["evidence"] - right["evidence"])
            only_sr = sorted(right["evidence"] - left["evidence"])
            mismatches.append(
                ParityMismatch(
                    MismatchKind.EVIDENCE,
                    tracking,
                    f"only in FHIR: {only_fhir}; only in SR: {only_sr}",
                )
            )
    return mismatches
