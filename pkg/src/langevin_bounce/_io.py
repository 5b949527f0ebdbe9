"""CSV and manifest writing."""

import csv
import hashlib
import json
import os
from datetime import datetime, timezone


def _cell(v):
    if isinstance(v, float):
        # repr round-trips doubles exactly
        return repr(v)
    return str(v)


def write_csv(path, header, columns):
    """Write equal-length ``columns`` under ``header``; returns the row count."""
    columns = [list(col) for col in columns]
    n = len(columns[0]) if columns else 0
    if any(len(col) != n for col in columns):
        raise ValueError("columns differ in length")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([_cell(_py(v)) for v in row])
    return n


def _py(v):
    # numpy scalars -> python scalars so repr is the plain float repr
    return v.item() if hasattr(v, "item") else v


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def utc_now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class RunManifest:
    """Collects a run's parameters and outputs; written as ``manifest.json``."""

    def __init__(self, command, params, version):
        self.data = {
            "command": command,
            "params": params,
            "version": version,
            "started": utc_now(),
            "finished": None,
            "status": "running",
            "outputs": [],
        }

    def add_output(self, path, rows=None):
        entry = {"file": os.path.basename(path), "sha256": sha256_file(path)}
        if rows is not None:
            entry["rows"] = int(rows)
        self.data["outputs"].append(entry)

    def finish(self, status="ok", error=None):
        self.data["finished"] = utc_now()
        self.data["status"] = status
        if error is not None:
            self.data["error"] = error

    def write(self, out_dir):
        path = os.path.join(out_dir, "manifest.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path
