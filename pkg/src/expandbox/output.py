"""Deterministic CSV emission and the run manifest.

Every CSV starts with a ``# manifest: manifest.json`` comment line, then a
header row.  Floats are written with ``repr`` (the shortest string that
round-trips to the same double), missing values as empty fields and flags
as 0/1, so reruns produce byte-identical numeric output.
"""

from __future__ import annotations

import csv
import json
import math
import os
import shutil
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np

MANIFEST_NAME = "manifest.json"
MANIFEST_LINE = f"# manifest: {MANIFEST_NAME}"


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(MANIFEST_LINE + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row of length {len(row)} for {len(header)} columns in {path.name}")
            writer.writerow([format_value(v) for v in row])
    return path


def read_csv(path):
    """Return (header, rows) of a CSV written by :func:`write_csv`, values as strings."""
    with Path(path).open(newline="") as fh:
        first = fh.readline().rstrip("\n")
        if first != MANIFEST_LINE:
            raise ValueError(f"{path} does not reference a manifest")
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


class OutputDir:
    """Stage files in a scratch directory and publish them only on success.

    On an exception nothing partial is left behind in the target directory.
    """

    def __init__(self, target):
        self.target = Path(target)
        self.files: List[str] = []
        self._staging = None

    def __enter__(self):
        self.target.mkdir(parents=True, exist_ok=True)
        self._staging = Path(tempfile.mkdtemp(prefix=".partial-", dir=self.target))
        return self

    def path(self, name: str) -> Path:
        if name not in self.files:
            self.files.append(name)
        return self._staging / name

    def write_manifest(self, manifest: dict) -> Path:
        manifest = dict(manifest)
        manifest["files"] = sorted(f for f in self.files if f != MANIFEST_NAME)
        path = self.path(MANIFEST_NAME)
        path.write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
        return path

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                for name in self.files:
                    os.replace(self._staging / name, self.target / name)
        finally:
            shutil.rmtree(self._staging, ignore_errors=True)
        return False
