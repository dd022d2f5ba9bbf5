"""CSV and JSON emission of experiment reports.

Floats are written with 17 significant digits, which round-trips every
64-bit double exactly. Nothing time- or environment-dependent goes into the
CSV files.
"""

from __future__ import annotations

import csv
import io
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Union

from .experiments import ExperimentReport

META_NAME = "meta.json"


class OutputError(OSError):
    pass


def format_value(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    return format(float(v), ".17g")


def parse_value(text: str):
    try:
        i = int(text)
    except ValueError:
        return float(text)
    # "-0" is a float zero; keep it so re-emission is byte-identical
    return i if str(i) == text else float(text)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def read_csv(path: Union[str, Path]) -> tuple[list[str], list[tuple]]:
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [tuple(parse_value(c) for c in row) for row in r]
    return header, rows


def _write(path: Path, text: str):
    try:
        path.write_text(text, encoding="utf-8", newline="")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def meta_document(report: ExperimentReport, timestamp: bool = False) -> dict:
    doc = {
        "figure": report.name,
        "csv": f"{report.name}.csv",
        "header": list(report.header),
        "seed": report.config.master_seed,
        "version": report.version,
        "config": report.config.as_dict(),
        "diagnostics": report.diagnostics,
    }
    if timestamp:
        doc["generated_at_utc"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return doc


def emit_report(report: ExperimentReport, out_dir: Union[str, Path], timestamp: bool = False) -> list[Path]:
    """Write ``<name>.csv`` and the ``meta.json`` sidecar into ``out_dir``.

    With ``timestamp=False`` (the default) both files are byte-identical
    across re-runs with the same inputs.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    csv_path = out / f"{report.name}.csv"
    meta_path = out / META_NAME
    _write(csv_path, csv_text(report.header, report.rows))
    _write(meta_path, json.dumps(meta_document(report, timestamp), indent=2, sort_keys=True) + "\n")
    return [csv_path, meta_path]
