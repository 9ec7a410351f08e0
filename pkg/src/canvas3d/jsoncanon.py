"""Canonical JSON emission for byte-stable documents.

Scene files, history lines and golden fixtures must serialize to identical
bytes across runs.  json.dumps does not give us control over float
formatting, so this module emits JSON itself: dict keys in insertion
order, reals at 9 significant digits, UTF-8, no trailing whitespace.

The 9-digit format is self-stabilizing: for s = fmt(x), parsing s and
re-formatting yields s again, because the decimal value of s is within
half an ulp of its nearest double, far inside the 9-digit quantum.
"""

from __future__ import annotations

import json
import math
from typing import Any


def fmt_real(x: float) -> str:
    """Format a real at 9 significant digits; integral values lose the dot."""
    if isinstance(x, int):
        return str(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite real {x!r}")
    if x == 0.0:
        return "0"  # normalizes -0.0
    return format(x, ".9g")


def _emit(value: Any, out: list[str], indent: int, level: int) -> None:
    pad = " " * (indent * level)
    pad_in = " " * (indent * (level + 1))
    if value is None or isinstance(value, bool):
        out.append(json.dumps(value))
    elif isinstance(value, (int, float)):
        out.append(fmt_real(value))
    elif isinstance(value, str):
        out.append(json.dumps(value, ensure_ascii=False))
    elif isinstance(value, dict):
        if not value:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(value.items()):
            if not isinstance(k, str):
                raise TypeError(f"JSON object keys must be str, got {type(k)}")
            out.append(pad_in)
            out.append(json.dumps(k, ensure_ascii=False))
            out.append(": ")
            _emit(v, out, indent, level + 1)
            out.append(",\n" if i < len(value) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(value, (list, tuple)):
        if not value:
            out.append("[]")
            return
        out.append("[\n")
        for i, v in enumerate(value):
            out.append(pad_in)
            _emit(v, out, indent, level + 1)
            out.append(",\n" if i < len(value) - 1 else "\n")
        out.append(pad + "]")
    else:
        raise TypeError(f"cannot canonically serialize {type(value)}")


def dumps(value: Any, indent: int = 2) -> str:
    out: list[str] = []
    _emit(value, out, indent, 0)
    out.append("\n")
    return "".join(out)


def dumps_compact(value: Any) -> str:
    """Single-line form for history records and wire payloads."""
    out: list[str] = []
    _emit_compact(value, out)
    return "".join(out)


def _emit_compact(value: Any, out: list[str]) -> None:
    if value is None or isinstance(value, bool):
        out.append(json.dumps(value))
    elif isinstance(value, (int, float)):
        out.append(fmt_real(value))
    elif isinstance(value, str):
        out.append(json.dumps(value, ensure_ascii=False))
    elif isinstance(value, dict):
        out.append("{")
        for i, (k, v) in enumerate(value.items()):
            if i:
                out.append(", ")
            out.append(json.dumps(k, ensure_ascii=False))
            out.append(": ")
            _emit_compact(v, out)
        out.append("}")
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, v in enumerate(value):
            if i:
                out.append(", ")
            _emit_compact(v, out)
        out.append("]")
    else:
        raise TypeError(f"cannot canonically serialize {type(value)}")


def dump_bytes(value: Any, indent: int = 2) -> bytes:
    return dumps(value, indent).encode("utf-8")


def loads(data: bytes | str) -> Any:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return json.loads(data)
