"""Output files: line-delimited records, CSV tables, aligned-text tables.

Every emitted file embeds (seed, config hash, tool version) so a rerun
with the same triple can be verified byte-for-byte. Writes are atomic:
content goes to a temp file that is renamed into place.
"""

from __future__ import annotations

import csv
import io
import json
import os
from typing import Any, Iterable, Sequence

from . import __version__
from .errors import RecordError


def run_meta(seed: int, cfg_hash: str) -> dict[str, Any]:
    return {"seed": seed, "config_hash": cfg_hash, "version": __version__}


def _atomic_write(path: str, content: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(content)
    os.replace(tmp, path)


def write_jsonl(path: str, records: Iterable[dict], meta: dict[str, Any]) -> None:
    lines = [json.dumps({"_meta": meta}, ensure_ascii=False)]
    lines.extend(json.dumps(record, ensure_ascii=False) for record in records)
    _atomic_write(path, "\n".join(lines) + "\n")


def read_jsonl(path: str) -> tuple[dict[str, Any], list[dict]]:
    """Read a record file written by write_jsonl; returns (meta, records)."""
    meta: dict[str, Any] = {}
    records: list[dict] = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(line_no, f"invalid JSON ({exc.msg})") from exc
            if line_no == 1 and "_meta" in obj:
                meta = obj["_meta"]
            else:
                records.append(obj)
    return meta, records


def _meta_comment(meta: dict[str, Any]) -> str:
    parts = " ".join(f"{k}={meta[k]}" for k in sorted(meta))
    return f"# {parts}"


def write_csv_table(
    path: str, columns: Sequence[str], rows: Sequence[Sequence[str]], meta: dict[str, Any]
) -> None:
    buffer = io.StringIO()
    buffer.write(_meta_comment(meta) + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(row)
    _atomic_write(path, buffer.getvalue())


def format_text_table(
    columns: Sequence[str], rows: Sequence[Sequence[str]], meta: dict[str, Any]
) -> str:
    widths = [len(c) for c in columns]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = [_meta_comment(meta)]
    lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(columns)).rstrip())
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    return "\n".join(lines) + "\n"


def write_text_table(
    path: str, columns: Sequence[str], rows: Sequence[Sequence[str]], meta: dict[str, Any]
) -> None:
    _atomic_write(path, format_text_table(columns, rows, meta))


def fmt2(value: float | None) -> str:
    return "" if value is None else f"{value:.2f}"
