"""Reports, CSV/JSON emission and manifests."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _plain(obj):
    """Convert numpy scalars and arrays to JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def canonical_json(obj) -> str:
    """Sorted-key JSON; floats use Python's shortest round-trip repr."""
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def config_hash(config: dict) -> str:
    blob = json.dumps(_plain(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def rows_to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    cols = list(rows[0].keys())
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in _plain(r).items()})
    return buf.getvalue()


@dataclass
class ExperimentReport:
    kind: str
    tables: dict[str, list[dict]] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    config: dict | None = None
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "config_hash": None if self.config is None else config_hash(self.config),
            "config": self.config,
            "summary": self.summary,
            "tables": {k: len(v) for k, v in self.tables.items()},
        }

    def write(self, out: Path, extra_files: dict[str, bytes] | None = None, meta: dict | None = None) -> Path:
        """Write report.json, tables/*.csv and manifest.json into ``out``.

        The numeric payloads are deterministic; wall time and versions live
        only in the manifest.
        """
        out = Path(out)
        (out / "tables").mkdir(parents=True, exist_ok=True)
        written = []
        p = out / "report.json"
        p.write_text(canonical_json(self.to_dict()))
        written.append(p)
        for name, rows in self.tables.items():
            p = out / "tables" / f"{name}.csv"
            p.write_text(rows_to_csv(rows))
            written.append(p)
        for name, blob in (extra_files or {}).items():
            p = out / name
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_bytes(blob)
            written.append(p)
        manifest = {
            "kind": self.kind,
            "seed": self.seed,
            "config": self.config,
            "config_hash": None if self.config is None else config_hash(self.config),
            "files": {str(f.relative_to(out)): sha256_file(f) for f in written},
            **(meta or {}),
        }
        (out / "manifest.json").write_text(canonical_json(manifest))
        return out
