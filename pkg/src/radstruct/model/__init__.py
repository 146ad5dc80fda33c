"""Core domain model: types, units, and the canonical interchange codec."""

from radstruct.model.canonical import (
    SCHEMA_VERSION,
    parse_canonical,
    serialize_canonical,
)
from radstruct.model.types import Measurement
from radstruct.model.units import validate_unit


def convert_measurement(measurement: Measurement, target_unit: str) -> Measurement:
    """Convert a measurement to a dimensionally compatible unit, exactly."""
    return measurement.converted(target_unit)


__all__ = [
    "SCHEMA_VERSION",
    "convert_measurement",
    "parse_canonical",
    "serialize_canonical",
    "validate_unit",
]
