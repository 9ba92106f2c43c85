"""Number formatting and flat key=value / CSV writers shared by the CLI and
the experiment drivers."""
from __future__ import annotations

import csv
import io
import math
from typing import Iterable, Mapping, Sequence


def fmt(value, sig: int = 6) -> str:
    """Fixed-point text with at least six decimals and at least ``sig``
    significant digits, e.g. ``1.000000`` or ``0.00123457``."""
    if isinstance(value, (bool, str)):
        return str(value)
    if isinstance(value, int):
        return str(value)
    v = float(value)
    if math.isnan(v) or math.isinf(v):
        return str(v)
    if v == 0.0:
        return f"{0.0:.6f}"
    decimals = max(6, sig - 1 - math.floor(math.log10(abs(v))))
    return f"{v:.{decimals}f}"


def key_values(pairs: Mapping[str, object]) -> str:
    return "".join(f"{k}={fmt(v)}\n" for k, v in pairs.items())


def parse_key_values(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def csv_text(header: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()
