"""
Run reports and file output.

JSON summaries carry a schema tag ``brlab.report/<major>.<minor>``; readers
reject unknown majors.  CSV tables format floats at 17 significant digits
and JSON keys are sorted, so identical runs give byte-identical files.
Every write goes to a temporary file in the target directory followed by an
atomic rename.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence, Union

import numpy as np

REPORT_SCHEMA = "brlab.report/1.0"
SUPPORTED_MAJOR = 1

PathLike = Union[str, os.PathLike]


class SchemaError(ValueError):
    pass


def fmt(value: Any) -> str:
    """Fixed textual form of one table cell."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(value)


def clean(obj: Any) -> Any:
    """numpy -> builtin types; non-finite floats become None."""
    if isinstance(obj, Mapping):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def atomic_write_bytes(path: PathLike, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path: PathLike, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def dumps_json(obj: Any) -> str:
    return json.dumps(clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path: PathLike, obj: Any) -> Path:
    return atomic_write_text(path, dumps_json(obj))


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return atomic_write_text(path, buf.getvalue())


def write_dat(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]], blocks: bool = False) -> Path:
    """gnuplot-style whitespace table; a ``None`` row starts a new data block."""
    lines = ["# " + " ".join(header)]
    for row in rows:
        if row is None:
            if blocks:
                lines.extend(["", ""])
            continue
        lines.append(" ".join(fmt(v) for v in row))
    return atomic_write_text(path, "\n".join(lines) + "\n")


def read_csv(path: PathLike) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def new_report(kind: str, config: Mapping[str, Any]) -> dict:
    return {"schema": REPORT_SCHEMA, "kind": kind, "config": dict(config), "status": "ok"}


def check_finite(obj: Any, where: str = "report") -> None:
    """Raise if any numeric entry is NaN or infinite."""
    if isinstance(obj, Mapping):
        for k, v in obj.items():
            check_finite(v, f"{where}.{k}")
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            check_finite(v, f"{where}[{i}]")
    elif isinstance(obj, (float, np.floating)) and not math.isfinite(float(obj)):
        raise ValueError(f"non-finite value at {where}")


def load_report(path: PathLike) -> dict:
    """Read a report, rejecting missing schema tags and unknown major versions."""
    data = json.loads(Path(path).read_text())
    schema = data.get("schema") if isinstance(data, dict) else None
    if not isinstance(schema, str) or not schema.startswith("brlab.report/"):
        raise SchemaError(f"{path}: missing or foreign schema tag {schema!r}")
    version = schema.split("/", 1)[1]
    try:
        major = int(version.split(".")[0])
    except ValueError:
        raise SchemaError(f"{path}: malformed schema version {version!r}") from None
    if major != SUPPORTED_MAJOR:
        raise SchemaError(f"{path}: unsupported report schema major {major} (reader supports {SUPPORTED_MAJOR})")
    return data
