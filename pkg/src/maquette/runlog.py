"""Append-only run logs (one JSON record per tick) and the summary
metrics derived from them."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


class RunLog:
    """Monotone-tick record list, streamable as newline-delimited JSON."""

    def __init__(self, records: list[dict] | None = None):
        self.records: list[dict] = []
        for record in records or []:
            self.append(record)

    def append(self, record: dict) -> None:
        if "tick" not in record:
            raise ValueError("log records need a tick index")
        if self.records and record["tick"] <= self.records[-1]["tick"]:
            raise ValueError("log tick indices must increase")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def last(self) -> dict:
        if not self.records:
            raise ValueError("log is empty")
        return self.records[-1]

    def dumps(self) -> str:
        return "".join(json.dumps(r) + "\n" for r in self.records)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @staticmethod
    def read(path: str | Path) -> "RunLog":
        log = RunLog()
        for line in Path(path).read_text().splitlines():
            if line.strip():
                log.append(json.loads(line))
        return log


def comfort_dispersion(log: RunLog, neutral) -> float:
    """RMS distance of the head joints from a neutral configuration; the
    paper-side ergonomic comfort figure."""
    if len(log) == 0:
        raise ValueError("log is empty")
    neutral = np.asarray(neutral, dtype=float)
    sq = 0.0
    count = 0
    for record in log:
        if "head" not in record:
            continue
        diff = np.asarray(record["head"], dtype=float) - neutral
        sq += float(diff @ diff)
        count += 1
    if count == 0:
        raise ValueError("log has no head records")
    return float(np.sqrt(sq / count))


def _series(log: RunLog, key: str) -> list[float]:
    return [r[key] for r in log if key in r and r[key] is not None]


def summarize(log: RunLog, neutral=None) -> dict:
    """Deterministic run summary: planner fields and dynamics fields are
    both surfaced when present."""
    if len(log) == 0:
        raise ValueError("log is empty")
    last = log.last
    summary: dict = {
        "ticks": int(last["tick"]),
        "status": last.get("status"),
        "success": last.get("status") == "success" if "status" in last else None,
    }
    axis = _series(log, "axis_error")
    summary["rms_axis_error"] = (
        float(np.sqrt(np.mean(np.square(axis)))) if axis else None)
    gaps = _series(log, "min_gap")
    summary["min_gap"] = float(min(gaps)) if gaps else None
    if any("head" in r for r in log):
        head_dim = len(next(r["head"] for r in log if "head" in r))
        summary["head_dispersion"] = comfort_dispersion(
            log, np.zeros(head_dim) if neutral is None else neutral)
    else:
        summary["head_dispersion"] = None
    ledger_minima: dict[str, float] = {}
    for record in log:
        for port, value in (record.get("ledger") or {}).items():
            if port not in ledger_minima or value < ledger_minima[port]:
                ledger_minima[port] = float(value)
    summary["ledger_minima"] = dict(sorted(ledger_minima.items())) or None
    final_l = _series(log, "l")
    summary["final_collision_length"] = final_l[-1] if final_l else None
    occ = _series(log, "occlusion")
    summary["final_occlusion"] = occ[-1] if occ else None
    return summary


def export_metrics(log: RunLog, path: str | Path, neutral=None) -> dict:
    """Write the summary as canonical JSON; byte-identical for identical
    logs."""
    summary = summarize(log, neutral)
    Path(path).write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    return summary
