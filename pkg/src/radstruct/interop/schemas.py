"""Validation against the schemas shipped with the package."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import jsonschema

from radstruct.errors import DocumentImportError


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    text = (resources.files("radstruct.schemas") / f"{name}.schema.json").read_text()
    return json.loads(text)


def validate_document(doc, schema_name: str) -> None:
    """Raise DocumentImportError naming the failing path."""
    schema = load_schema(schema_name)
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(_plain(doc)), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        path = ".".join(str(p) for p in first.absolute_path) or "document"
        raise DocumentImportError(f"{schema_name}: {first.message}", target=path)


def _plain(doc):
    """jsonschema's number checks reject Decimal; map to float for validation only."""
    from decimal import Decimal

    if isinstance(doc, dict):
        return {k: _plain(v) for k, v in doc.items()}
    if isinstance(doc, (list, tuple)):
        return [_plain(v) for v in doc]
    if isinstance(doc, Decimal):
        return float(doc)
    return doc
