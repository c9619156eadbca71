"""Parsing transcribed values into canonical typed lexical forms.

Transcription keeps what the source says; typing happens here, at
transformation time, and never destructively: a value that fails to parse
stays available as plain text. Parsers trim surrounding whitespace (that
much is transcription noise) but change nothing else.

Canonical forms: integers without sign noise or leading zeros, decimals
without trailing fractional zeros, dates as YYYY-MM-DD. Source formats
cover the day/month/year orders found in the registers; "decimal-comma"
covers sources that write 120,5 for 120.5.
"""

from __future__ import annotations

import datetime
import re
from decimal import Decimal, InvalidOperation

_INTEGER = re.compile(r"^[+-]?[0-9]+$")
_DECIMAL = re.compile(r"^[+-]?([0-9]+(\.[0-9]*)?|\.[0-9]+)$")

# (regex, index of year/month/day groups)
_DATE_FORMATS: dict[str, tuple[re.Pattern, int, int, int]] = {
    "YYYY-MM-DD": (re.compile(r"^([0-9]{4})-([0-9]{1,2})-([0-9]{1,2})$"), 1, 2, 3),
    "DD-MM-YYYY": (re.compile(r"^([0-9]{1,2})-([0-9]{1,2})-([0-9]{4})$"), 3, 2, 1),
    "MM-DD-YYYY": (re.compile(r"^([0-9]{1,2})-([0-9]{1,2})-([0-9]{4})$"), 3, 1, 2),
    "YYYY/MM/DD": (re.compile(r"^([0-9]{4})/([0-9]{1,2})/([0-9]{1,2})$"), 1, 2, 3),
    "DD/MM/YYYY": (re.compile(r"^([0-9]{1,2})/([0-9]{1,2})/([0-9]{4})$"), 3, 2, 1),
    "MM/DD/YYYY": (re.compile(r"^([0-9]{1,2})/([0-9]{1,2})/([0-9]{4})$"), 3, 1, 2),
}


def supported_formats(kind: str) -> tuple[str, ...]:
    if kind == "date":
        return tuple(_DATE_FORMATS)
    if kind == "decimal":
        return ("decimal-comma",)
    return ()


def parse_typed(raw: str, kind: str, source_format: str | None = None) -> str | None:
    """Canonical lexical form of ``raw`` under ``kind``, or None.

    None means the value does not parse; the caller falls back to the
    verbatim text. ``kind`` "text" always passes values through unchanged.
    """
    if kind == "text":
        return raw
    value = raw.strip()
    if value == "":
        return None
    if kind == "integer":
        if not _INTEGER.match(value):
            return None
        return str(int(value))
    if kind == "decimal":
        if source_format == "decimal-comma":
            if "." in value or value.count(",") != 1:
                return None
            value = value.replace(",", ".")
        if not _DECIMAL.match(value):
            return None
        try:
            d = Decimal(value)
        except InvalidOperation:
            return None
        s = format(d, "f")
        if "." in s:
            s = s.rstrip("0").rstrip(".")
        if s in ("", "-", "-0"):
            s = "0"
        return s
    if kind == "date":
        spec = _DATE_FORMATS.get(source_format or "YYYY-MM-DD")
        if spec is None:
            return None
        pattern, yi, mi, di = spec
        m = pattern.match(value)
        if m is None:
            return None
        try:
            return datetime.date(int(m.group(yi)), int(m.group(mi)), int(m.group(di))).isoformat()
        except ValueError:
            return None
    return None
