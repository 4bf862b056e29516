"""
Energy-Harvesting Look-Ahead Model - Record Output

Renders `to_record()` dictionaries as stable, greppable `key=value` lines or as
CSV. Floats use repr() so every printed value parses back to the same double.
"""

from __future__ import annotations

import contextlib
import csv
import sys
from collections.abc import Iterable, Iterator, Mapping
from pathlib import Path
from typing import IO

FORMATS = ("text", "csv")


def format_value(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(format_value(v) for v in value)
    return str(value)


def render_line(record: Mapping[str, object]) -> str:
    return " ".join(f"{key}={format_value(value)}" for key, value in record.items())


def render_text(records: Iterable[Mapping[str, object]]) -> str:
    """One space-separated key=value line per record."""
    return "".join(render_line(record) + "\n" for record in records)


def parse_text(text: str) -> list[dict[str, str]]:
    """Inverse of render_text, values left as strings."""
    rows = []
    for line in text.splitlines():
        if not line.strip():
            continue
        row = {}
        for token in line.split():
            key, _, value = token.partition("=")
            row[key] = value
        rows.append(row)
    return rows


def write_csv(records: Iterable[Mapping[str, object]], stream: IO[str]) -> None:
    """Header row first; column order follows first appearance across records."""
    records = list(records)
    columns: dict[str, None] = {}
    for record in records:
        columns.update(dict.fromkeys(record))
    writer = csv.DictWriter(stream, fieldnames=list(columns), restval="", lineterminator="\n")
    writer.writeheader()
    for record in records:
        writer.writerow({key: format_value(value) for key, value in record.items()})


def write_records(
    records: Iterable[Mapping[str, object]], stream: IO[str], fmt: str = "text"
) -> None:
    if fmt == "csv":
        write_csv(records, stream)
    elif fmt == "text":
        stream.write(render_text(records))
    else:
        raise ValueError(f"unknown output format: {fmt}")


@contextlib.contextmanager
def open_output(path: str | Path | None) -> Iterator[IO[str]]:
    """Yield stdout for None or "-", otherwise a text file opened for writing."""
    if path is None or str(path) == "-":
        yield sys.stdout
        return
    with open(Path(path).expanduser(), "w", encoding="utf-8", newline="") as f:
        yield f
