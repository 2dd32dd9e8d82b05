"""Atomic CSV/JSON report writers with fixed, versioned schemas."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Sequence

SCHEMA_VERSION = "1"

# column order per CSV kind; bump SCHEMA_VERSION when any of these change
SCHEMAS: dict[str, tuple[str, ...]] = {
    "checks": ("schema_version", "check", "t", "value", "target", "stderr", "z", "pass"),
    "ruin": ("schema_version", "u", "psi_hat", "stderr", "n", "ruined", "truncated", "oracle"),
    "premium_grid": ("schema_version", "theta1", "theta2", "p_P_theta", "p_Q_theta"),
    "premium_summary": ("schema_version", "quantity", "value", "error", "closed_form"),
    "paths": ("schema_version", "path", "theta1", "theta2", "t", "N_t", "S_t"),
}


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def atomic_write(path: str | Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(kind: str, rows: Iterable[dict[str, Any]]) -> str:
    cols = SCHEMAS[kind]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        full = {"schema_version": SCHEMA_VERSION, **row}
        extra = set(full) - set(cols)
        if extra:
            raise KeyError(f"columns {sorted(extra)} are not in the {kind} schema")
        w.writerow([_fmt(full.get(c, "")) for c in cols])
    return buf.getvalue()


def write_csv(path: str | Path, kind: str, rows: Sequence[dict[str, Any]]) -> None:
    atomic_write(path, csv_text(kind, rows))


def _jsonable(o: Any):
    if isinstance(o, float) and not math.isfinite(o):
        return repr(o)
    if hasattr(o, "tolist"):
        return o.tolist()
    if hasattr(o, "item"):
        return o.item()
    return str(o)


def json_text(summary: dict[str, Any]) -> str:
    doc = {"schema_version": SCHEMA_VERSION, **summary}
    return json.dumps(doc, indent=2, sort_keys=True, default=_jsonable, allow_nan=False) + "\n"


def write_json(path: str | Path, summary: dict[str, Any]) -> None:
    atomic_write(path, json_text(_clean(summary)))


def _clean(o: Any) -> Any:
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, float) and not math.isfinite(o):
        return repr(o)
    return o
