"""Locale-independent CSV writing with shortest round-trip float formatting."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np


class CsvFormatError(ValueError):
    pass


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows, comment: str | None = None) -> Path:
    """Write ``rows`` under ``header``; LF line endings, floats via ``repr``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if comment is not None:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def read_csv(path, expected_header=None, types=None):
    """Read a CSV written by :func:`write_csv`.

    Returns ``(comment, header, columns)`` where ``columns`` maps each header
    name to a list of parsed values. ``types`` maps column names to
    converters (default ``float``). Errors name the offending line and field.
    """
    path = Path(path)
    types = types or {}
    comment = None
    with open(path, newline="", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    start = 0
    if lines and lines[0].startswith("#"):
        comment = lines[0][1:].strip()
        start = 1
    if start >= len(lines):
        raise CsvFormatError(f"{path}: missing header")
    header = next(csv.reader([lines[start]]))
    if expected_header is not None and list(header) != list(expected_header):
        raise CsvFormatError(
            f"{path}:{start + 1}: header {header} does not match {list(expected_header)}")
    columns = {h: [] for h in header}
    for lineno, row in enumerate(csv.reader(lines[start + 1:]), start=start + 2):
        if len(row) != len(header):
            raise CsvFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        for name, raw in zip(header, row):
            conv = types.get(name, float)
            try:
                columns[name].append(conv(raw))
            except (TypeError, ValueError):
                raise CsvFormatError(
                    f"{path}:{lineno}: field {name!r} has malformed value {raw!r}") from None
    return comment, header, columns
