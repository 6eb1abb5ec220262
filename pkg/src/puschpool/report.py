"""Report documents: JSON with stable key order, plus a flat CSV of the records."""

import csv
import datetime as _dt
import io
import json

import numpy as np

TOOL = "puschpool"
VERSION = "0.1.0"
VOLATILE = ("timestamp", "version")

NOTES = [
    "instruction fetch is ideal: the instruction stall category is structurally zero",
    "speedup = summed contention-free per-core work cycles / parallel cycles",
]


def _plain(obj):
    """JSON-safe copy: numpy scalars to Python numbers, tuples to lists."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


class ReportDocument:
    """Resolved config echo, per-run records and verification verdicts."""

    def __init__(self, config, command, timestamp=None):
        self.config = config
        self.command = command
        self.records = []
        self.timestamp = timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")

    def add(self, record, verified=None):
        rec = dict(record)
        rec["config_hash"] = self.config.digest()
        if verified is not None:
            rec["verified"] = bool(verified)
        self.records.append(_plain(rec))
        return rec

    @property
    def verified(self):
        return all(r.get("verified", True) for r in self.records)

    def to_dict(self):
        return {
            "tool": TOOL,
            "version": VERSION,
            "timestamp": self.timestamp,
            "command": self.command,
            "config": _plain(self.config.to_dict()),
            "config_hash": self.config.digest(),
            "records": self.records,
            "verdicts": {"all_verified": self.verified,
                         "failed": [i for i, r in enumerate(self.records)
                                    if not r.get("verified", True)]},
            "notes": NOTES,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_csv(self):
        return records_to_csv(self.records)

    def render(self, fmt="json"):
        return self.to_csv() if fmt == "csv" else self.to_json()


def body(doc):
    """Report dictionary without the fields that legitimately change between runs."""
    return {k: v for k, v in doc.items() if k not in VOLATILE}


def flatten(record, prefix=""):
    out = {}
    for key, value in record.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(flatten(value, name + "."))
        elif isinstance(value, list):
            out[name] = json.dumps(value)
        else:
            out[name] = value
    return out


def records_to_csv(records):
    rows = [flatten(r) for r in records]
    columns = sorted(set().union(*rows)) if rows else []
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


__all__ = ["ReportDocument", "records_to_csv", "flatten", "body", "VERSION"]
