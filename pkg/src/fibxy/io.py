"""Deterministic CSV/JSON writers and the run manifest."""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def _plain(obj):
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


class OutputDir:
    """Collects files written for one run and emits the manifest."""

    def __init__(self, path, config_hash: str):
        self.path = Path(path)
        self.config_hash = config_hash
        self.files: list[dict] = []
        self.path.mkdir(parents=True, exist_ok=True)
        if not os.access(self.path, os.W_OK):
            raise PermissionError(f"output directory {self.path} is not writable")

    def _register(self, name, schema, rows):
        self.files.append({"path": name, "schema": schema, "rows": int(rows)})

    def write_csv(self, name: str, header, rows) -> Path:
        rows = list(rows)
        target = self.path / name
        with open(target, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_cell(x) for x in r])
        self._register(name, "csv:" + ",".join(header), len(rows))
        return target

    def write_json(self, name: str, obj, schema: str) -> Path:
        target = self.path / name
        target.write_text(dumps(obj))
        self._register(name, "json:" + schema, 1)
        return target

    def write_text(self, name: str, text: str, schema: str) -> Path:
        target = self.path / name
        with open(target, "w", newline="\n") as fh:
            fh.write(text)
        self._register(name, schema, text.count("\n"))
        return target

    def write_manifest(self) -> Path:
        manifest = {"config_hash": self.config_hash, "files": self.files,
                    "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat()}
        target = self.path / "manifest.json"
        target.write_text(dumps(manifest))
        return target


def config_hash(config: dict, exclude=("jobs", "output_dir")) -> str:
    """sha256 of the canonical JSON of ``config`` without run-local keys."""
    kept = {k: v for k, v in config.items() if k not in exclude}
    text = json.dumps(_plain(kept), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()
