"""UCUM unit whitelist: validation and exact conversion.

The engine deliberately supports a closed set of UCUM codes (the units
that actually occur in CT/US/PET reporting plus the dimensionless count)
instead of a full UCUM grammar.  Conversion factors are Decimal so that
metric conversions are exact and reversible.
"""

from __future__ import annotations

from decimal import Decimal

from radstruct.errors import DimensionMismatch, UnknownUnit

# canonical code -> (dimension, factor to the dimension's base unit)
UNIT_WHITELIST: dict[str, tuple[str, Decimal]] = {
    "mm": ("length", Decimal(1)),
    "cm": ("length", Decimal(10)),
    "mm2": ("area", Decimal(1)),
    "cm2": ("area", Decimal(100)),
    "mm3": ("volume", Decimal(1)),
    "cm3": ("volume", Decimal(1000)),
    "mL": ("volume", Decimal(1000)),
    "cm/s": ("velocity", Decimal(1)),
    "{SUVbw}g/mL": ("suv", Decimal(1)),
    "1": ("count", Decimal(1)),
}

# lexical variants normalized to canonical codes
_ALIASES = {
    "ml": "mL",
    "cc": "mL",
    "millimeter": "mm",
    "millimeters": "mm",
    "centimeter": "cm",
    "centimeters": "cm",
}

# measurement kind -> dimension it must carry
KIND_DIMENSION = {
    "linear": "length",
    "area": "area",
    "volume": "volume",
    "velocity": "velocity",
    "suv_max": "suv",
    "suv_mean": "suv",
    "count": "count",
}


def canonical_unit(code: str) -> str:
    """Return the canonical UCUM code, or raise UnknownUnit."""
    if code in UNIT_WHITELIST:
        return code
    alias = _ALIASES.get(code) or _ALIASES.get(code.lower())
    if alias:
        return alias
    raise UnknownUnit(f"unit {code!r} is not in the supported UCUM whitelist", target=code)


def unit_dimension(code: str) -> str:
    """Dimension of a (canonical or alias) unit code."""
    return UNIT_WHITELIST[canonical_unit(code)][0]


def validate_unit(code: str, kind: str) -> str:
    """Validate a unit against a measurement kind; return the canonical code.

    Raises UnknownUnit for codes outside the whitelist and
    DimensionMismatch when the unit's dimension does not fit the kind
    (e.g. "mL" for a linear measurement).
    """
    canon = canonical_unit(code)
    expected = KIND_DIMENSION.get(kind)
    if expected is None:
        raise DimensionMismatch(f"unknown measurement kind {kind!r}", target=kind)
    actual = UNIT_WHITELIST[canon][0]
    if actual != expected:
        raise DimensionMismatch(
            f"unit {canon!r} has dimension {actual}, but kind {kind!r} requires {expected}",
            target=canon,
        )
    return canon


def convert_value(value: Decimal, from_unit: str, to_unit: str) -> Decimal:
    """Convert a Decimal value between two whitelisted units, exactly."""
    src = canonical_unit(from_unit)
    dst = canonical_unit(to_unit)
    src_dim, src_factor = UNIT_WHITELIST[src]
    dst_dim, dst_factor = UNIT_WHITELIST[dst]
    if src_dim != dst_dim:
        raise DimensionMismatch(
            f"cannot convert {src!r} ({src_dim}) to {dst!r} ({dst_dim})", target=dst
        )
    if src == dst:
        return value
    return value * src_factor / dst_factor
