"""CSV ingestion and deterministic JSON/CSV output."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import MalformedCsv


def format_float(x) -> str:
    """17 significant digits; non-finite values become ``nan``/``inf``/``-inf``."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _json_value(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no non-finite numbers
        return format_float(x) if math.isfinite(x) else "null"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}{_json_value(str(k), indent, level + 1)}: {_json_value(v, indent, level + 1)}'
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(_json_value(v, indent, level + 1) for v in seq) + "]"
        items = [pad + _json_value(v, indent, level + 1) for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps_json(obj, indent: int = 2) -> str:
    """Serialise with insertion-ordered keys and 17-digit floats."""
    return _json_value(obj, indent, 0) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    try:
        path.write_text(dumps_json(obj), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v
                                 for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def read_dataset_csv(path, p: int, q: int):
    """Read ``y,x1..xp,z1..zq`` (header required) into ``(Y, X, Z)`` arrays."""
    width = 1 + p + q
    rows = []
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise MalformedCsv(f"cannot open {path}: {exc.strerror or exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise MalformedCsv("empty file (a header row is required)", line=1)
        if len(header) != width:
            raise MalformedCsv(f"header has {len(header)} columns, expected {width} "
                               f"(y, {p} x columns, {q} z columns)", line=1)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise MalformedCsv(f"expected {width} values, found {len(row)}", line=line)
            try:
                vals = [float(c) for c in row]
            except ValueError:
                bad = next(c for c in row if not _is_float(c))
                raise MalformedCsv(f"non-numeric cell {bad!r}", line=line) from None
            if not all(math.isfinite(v) for v in vals):
                raise MalformedCsv("non-finite value", line=line)
            rows.append(vals)
    if not rows:
        raise MalformedCsv("no data rows", line=2)
    arr = np.array(rows)
    return arr[:, 0], arr[:, 1:1 + p], arr[:, 1 + p:]


def _is_float(s) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True
