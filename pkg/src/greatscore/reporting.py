"""Stable JSON and CSV artifacts.

Output bytes depend only on the artifact: keys keep their declared order,
reals are written with 17 significant digits (``%.17g``, which
round-trips every double), and nothing locale- or time-dependent is
emitted. JSON files end with a newline; CSV uses ``\\n`` line endings.

CSV schemas::

    estimates    name,mean,count,epsilon,delta
    curves       radius,certified_fraction
    calibration  temperature,rho
    rank matrix  name,<name1>,<name2>,...
    timing       operation,samples,total_s,per_sample_s
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .audit.groups import GroupReport
from .calibration import NO_CORRELATION, CalibrationResult, RankMatrix
from .errors import InvalidInput
from .score import GlobalEstimate, RadiusCurve, SamplePlan

__all__ = ["TimingRecord", "RunManifest", "timed", "dumps", "render", "write_report", "read_json"]


@dataclass(frozen=True)
class TimingRecord:
    operation: str
    samples: int
    total_s: float

    @property
    def per_sample_s(self) -> float:
        return self.total_s / self.samples

    def to_dict(self) -> dict:
        return {"operation": self.operation, "samples": self.samples, "total_s": self.total_s,
                "per_sample_s": self.per_sample_s}

    @classmethod
    def from_dict(cls, data: dict) -> "TimingRecord":
        return cls(data["operation"], int(data["samples"]), float(data["total_s"]))


class _Timer:
    def __init__(self, operation, samples):
        self.operation = operation
        self.samples = samples
        self.record: Optional[TimingRecord] = None


@contextmanager
def timed(operation: str, samples: int):
    """Time a block; the record is available as ``.record`` afterwards."""
    timer = _Timer(operation, samples)
    start = time.perf_counter()
    try:
        yield timer
    finally:
        timer.record = TimingRecord(operation, samples, time.perf_counter() - start)


@dataclass(frozen=True)
class RunManifest:
    command: str
    config: dict
    seed: Optional[int]
    inputs: tuple
    outputs: tuple
    version: str

    def to_dict(self) -> dict:
        return {"command": self.command, "config": self.config, "seed": self.seed,
                "inputs": list(self.inputs), "outputs": list(self.outputs), "version": self.version}


def fmt_real(x: float) -> str:
    if math.isnan(x):
        raise InvalidInput("NaN cannot be serialised")
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def dumps(value: Any, indent: int = 2, _level: int = 0) -> str:
    """JSON text with fixed real formatting; non-finite reals are rejected."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if value is None:
        return "null"
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise InvalidInput(f"cannot write non-finite real {value!r} to JSON")
        return fmt_real(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating, type(None))) and not isinstance(v, (bool, np.bool_))
               for v in value):
            return "[" + ", ".join(dumps(v) for v in value) + "]"
        items = [pad + dumps(v, indent, _level + 1) for v in value]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise InvalidInput(f"cannot serialise {type(value).__name__}")


def _as_dict(artifact, trace_stride: int = 1) -> dict:
    if isinstance(artifact, CalibrationResult):
        return artifact.to_dict(stride=trace_stride)
    if isinstance(artifact, RadiusCurve):
        return {"radius": list(artifact.radii), "certified_fraction": list(artifact.certified_fraction)}
    if isinstance(artifact, RankMatrix):
        return {"names": list(artifact.names), "matrix": [list(r) for r in artifact.matrix]}
    if isinstance(artifact, SamplePlan):
        return {"epsilon": artifact.epsilon, "delta": artifact.delta, "n": artifact.n}
    if hasattr(artifact, "to_dict"):
        return artifact.to_dict()
    if isinstance(artifact, dict):
        return artifact
    raise InvalidInput(f"unsupported artifact type {type(artifact).__name__}")


def _estimate_row(name, est: Optional[GlobalEstimate]):
    if est is None:
        return [name, "", 0, "", ""]
    g = est.guarantee
    return [name, fmt_real(est.mean), est.count,
            "" if g is None else fmt_real(g.epsilon), "" if g is None else fmt_real(g.delta)]


def _csv_rows(artifact, name: str, trace_stride: int):
    if isinstance(artifact, GlobalEstimate):
        return ["name", "mean", "count", "epsilon", "delta"], [_estimate_row(name, artifact)]
    if isinstance(artifact, GroupReport):
        rows = [_estimate_row(g.name, g.estimate) for g in artifact.groups]
        rows.append(_estimate_row("overall", artifact.overall))
        return ["name", "mean", "count", "epsilon", "delta"], rows
    if isinstance(artifact, RadiusCurve):
        return ["radius", "certified_fraction"], [[fmt_real(r), fmt_real(f)] for r, f in artifact.points()]
    if isinstance(artifact, CalibrationResult):
        return ["temperature", "rho"], [[fmt_real(t), fmt_real(r)] for t, r in artifact.trace[::trace_stride]]
    if isinstance(artifact, RankMatrix):
        return (["name", *artifact.names],
                [[n, *(fmt_real(v) for v in row)] for n, row in zip(artifact.names, artifact.matrix)])
    if isinstance(artifact, TimingRecord):
        return (["operation", "samples", "total_s", "per_sample_s"],
                [[artifact.operation, artifact.samples, fmt_real(artifact.total_s), fmt_real(artifact.per_sample_s)]])
    if isinstance(artifact, SamplePlan):
        return ["epsilon", "delta", "n"], [[fmt_real(artifact.epsilon), fmt_real(artifact.delta), artifact.n]]
    raise InvalidInput(f"no CSV schema for {type(artifact).__name__}")


def render(artifact, fmt: str = "json", name: str = "estimate", trace_stride: int = 1) -> str:
    if trace_stride < 1:
        raise InvalidInput("trace stride must be at least 1")
    if fmt == "json":
        return dumps(_as_dict(artifact, trace_stride)) + "\n"
    if fmt == "csv":
        header, rows = _csv_rows(artifact, name, trace_stride)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return buf.getvalue()
    raise InvalidInput(f"unknown format {fmt!r}")


def write_report(artifact, fmt: str, destination, name: str = "estimate", trace_stride: int = 1) -> Path:
    path = Path(destination)
    text = render(artifact, fmt, name, trace_stride)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise InvalidInput(f"cannot write report to {path}: {exc}") from exc
    return path


_LOADERS = {
    "GlobalEstimate": GlobalEstimate.from_dict,
    "CalibrationResult": CalibrationResult.from_dict,
    "GroupReport": GroupReport.from_dict,
    "TimingRecord": TimingRecord.from_dict,
    "RadiusCurve": lambda d: RadiusCurve(tuple(d["radius"]), tuple(d["certified_fraction"])),
    "RankMatrix": lambda d: RankMatrix(tuple(d["names"]), tuple(tuple(r) for r in d["matrix"])),
    "SamplePlan": lambda d: SamplePlan(float(d["epsilon"]), float(d["delta"]), int(d["n"])),
}


def read_json(path, kind: str):
    """Parse a JSON artifact written by :func:`write_report` back into ``kind``."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        return _LOADERS[kind](data)
    except KeyError as exc:
        raise InvalidInput(f"not a {kind} artifact: missing {exc}") from exc
