"""Plain-text ``key=value`` files used for schemas, calendars and configs."""

from __future__ import annotations

from pathlib import Path


def parse_kv(text: str) -> list[tuple[str, str]]:
    """Parse ``key=value`` lines, keeping order and repeated keys.

    Blank lines and lines starting with ``#`` are skipped. Whitespace around
    keys and values is stripped.
    """
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        pairs.append((key, value.strip()))
    return pairs


def read_kv(path) -> list[tuple[str, str]]:
    return parse_kv(Path(path).read_text(encoding="utf-8"))


def format_kv(pairs) -> str:
    return "".join(f"{k}={v}\n" for k, v in pairs)
