"""Line-delimited trace files: one header, then one record per (step, agent).

Numbers are serialized with full round-trip precision, so reading a written
trace reproduces the exact values; identical inputs produce identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

from .sim import StepRecord

FORMAT_NAME = "flocknav-trace"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class Trace:
    config_digest: str
    records: tuple[StepRecord, ...]


class TraceFormatError(ValueError):
    """Malformed trace file; message carries the offending line number."""


def _record_to_dict(record: StepRecord) -> dict:
    data = asdict(record)
    data["control"] = list(record.control)
    data["state"] = list(record.state)
    data["neighbors"] = list(record.neighbors)
    return data


def _record_from_dict(data: dict, line: int) -> StepRecord:
    try:
        return StepRecord(
            step=data["step"],
            agent=data["agent"],
            control=tuple(data["control"]),
            state=tuple(data["state"]),
            level=data["level"],
            q=data["q"],
            neighbors=tuple(data["neighbors"]),
            status=data["status"],
            cost=data["cost"],
            max_residual=data["max_residual"],
            inner_iterations=data["inner_iterations"],
            outer_iterations=data["outer_iterations"],
        )
    except (KeyError, TypeError) as exc:
        raise TraceFormatError(f"line {line}: bad record ({exc})") from None


def write_trace(records: Sequence[StepRecord], config_digest: str, path) -> None:
    ordered = sorted(records, key=lambda r: (r.step, r.agent))
    lines = [json.dumps(
        {"format": FORMAT_NAME, "version": FORMAT_VERSION, "config_digest": config_digest},
        sort_keys=True, separators=(",", ":"),
    )]
    lines.extend(
        json.dumps(_record_to_dict(r), sort_keys=True, separators=(",", ":"))
        for r in ordered
    )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_trace(path) -> Trace:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise TraceFormatError("line 1: empty file, missing header")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"line 1: invalid JSON ({exc})") from None
    if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
        raise TraceFormatError("line 1: not a flocknav trace header")
    if header.get("version") != FORMAT_VERSION:
        raise TraceFormatError(f"line 1: unsupported version {header.get('version')!r}")
    records = []
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"line {number}: invalid JSON ({exc})") from None
        records.append(_record_from_dict(data, number))
    return Trace(config_digest=header.get("config_digest", ""), records=tuple(records))


def write_metrics(metrics: dict, path) -> None:
    Path(path).write_text(
        json.dumps(metrics, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
