"""CSV input and output for point clouds and result tables."""
from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError
from .geometry import PointCloud

__all__ = ["read_cloud_csv", "write_cloud_csv", "write_table", "write_edge_list", "format_value"]

HEADER = ("x", "y", "value")


def read_cloud_csv(path) -> PointCloud:
    """Read a ``x,y,value`` CSV. Errors name the offending line."""
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"cannot open {path}: {exc.strerror}") from exc
    rows = []
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidInputError(f"{path}: empty file") from None
        except UnicodeDecodeError as exc:
            raise InvalidInputError(f"{path}: not UTF-8 ({exc.reason})") from None
        if tuple(h.strip().lstrip("﻿") for h in header) != HEADER:
            raise InvalidInputError(f"{path}: line 1: expected header x,y,value, got {','.join(header)}")
        try:
            for row in reader:
                line = reader.line_num
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != 3:
                    raise InvalidInputError(f"{path}: line {line}: expected 3 fields, got {len(row)}")
                try:
                    vals = [float(c) for c in row]
                except ValueError:
                    raise InvalidInputError(f"{path}: line {line}: non-numeric field in {row}") from None
                if not all(math.isfinite(v) for v in vals):
                    raise InvalidInputError(f"{path}: line {line}: non-finite value")
                rows.append(vals)
        except UnicodeDecodeError as exc:
            raise InvalidInputError(f"{path}: not UTF-8 ({exc.reason})") from None
    if not rows:
        raise InvalidInputError(f"{path}: no data rows")
    arr = np.array(rows, dtype=float)
    return PointCloud(arr[:, :2], arr[:, 2])


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Write a CSV with LF line endings and round-trippable floats."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return path


def write_cloud_csv(path, points, values) -> Path:
    pts = np.asarray(points, dtype=float)
    vals = np.asarray(values, dtype=float)
    return write_table(path, HEADER, ((x, y, v) for (x, y), v in zip(pts, vals)))


def write_edge_list(path, graph) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(graph.edge_list_text(), encoding="utf-8")
    return path
