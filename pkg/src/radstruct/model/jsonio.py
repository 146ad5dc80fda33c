"""Deterministic JSON reading and writing with exact decimals.

All interchange documents are written through ``dumps_canonical`` so
that key order is insertion order, numbers are emitted as plain decimal
literals (no binary-float drift, no exponents), and the same value
always produces the same bytes.  ``loads_decimal`` parses numbers back
into Decimal/int so measurement values survive a round trip unchanged.
"""

from __future__ import annotations

import json
from decimal import Decimal

from radstruct.errors import CanonicalParseError


def format_decimal(value: Decimal | int) -> str:
    """Render a decimal as a plain JSON number literal (no exponent)."""
    if isinstance(value, int):
        return str(value)
    text = str(value)
    if "E" in text or "e" in text:
        text = format(value, "f")
    return text


def _encode(value, out: list[str], indent, level: int) -> None:
    compact = indent is None
    pad = "" if compact else " " * (indent * (level + 1))
    closing_pad = "" if compact else " " * (indent * level)
    open_break = "" if compact else "\n"
    if isinstance(value, dict):
        if not value:
            out.append("{}")
            return
        out.append("{" + open_break)
        for i, (key, item) in enumerate(value.items()):
            out.append(f"{pad}{json.dumps(str(key))}: ")
            _encode(item, out, indent, level + 1)
            out.append(("," if compact else ",\n") if i < len(value) - 1 else open_break)
        out.append(closing_pad + "}")
    elif isinstance(value, (list, tuple)):
        if not value:
            out.append("[]")
            return
        out.append("[" + open_break)
        for i, item in enumerate(value):
            out.append(pad)
            _encode(item, out, indent, level + 1)
            out.append(("," if compact else ",\n") if i < len(value) - 1 else open_break)
        out.append(closing_pad + "]")
    elif isinstance(value, bool):
        out.append("true" if value else "false")
    elif isinstance(value, Decimal):
        out.append(format_decimal(value))
    elif value is None:
        out.append("null")
    elif isinstance(value, (int, float)):
        out.append(json.dumps(value))
    elif isinstance(value, str):
        out.append(json.dumps(value, ensure_ascii=False))
    else:
        raise TypeError(f"cannot encode {type(value).__name__} into a canonical document")


def dumps_canonical(value, indent: int | None = 2) -> str:
    """Serialize to JSON text with insertion-ordered keys and exact decimals.

    ``indent=None`` produces a compact single-line document (JSONL rows).
    """
    out: list[str] = []
    _encode(value, out, indent, 0)
    return "".join(out)


def loads_decimal(text: str):
    """Parse JSON keeping fractional numbers as Decimal and ints as int.

    Malformed input raises CanonicalParseError carrying the byte offset
    of the failure point.
    """
    try:
        return json.loads(text, parse_float=Decimal)
    except json.JSONDecodeError as exc:
        byte_offset = len(text[: exc.pos].encode("utf-8"))
        raise CanonicalParseError(f"malformed document: {exc.msg}", offset=byte_offset) from exc
