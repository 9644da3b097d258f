"""Readers for the JSONL, CSV and JSON input formats."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional

import numpy as np

from .audit.groups import AuditGroup
from .calibration import ModelLogits, RankSeries
from .errors import InvalidInput
from .score import LabeledPrediction, PredictionVector
from .transform import TransformConfig, apply_transform


def _jsonl(path):
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise InvalidInput(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc


def load_predictions(path, transform: Optional[TransformConfig] = None) -> list:
    """Records with ``id``, ``label`` and exactly one of ``probs`` / ``logits``."""
    out = []
    for lineno, rec in _jsonl(path):
        where = f"{path}:{lineno}"
        if not isinstance(rec, dict) or "id" not in rec or "label" not in rec:
            raise InvalidInput(f"{where}: record needs 'id' and 'label'")
        has_probs, has_logits = "probs" in rec, "logits" in rec
        if has_probs == has_logits:
            raise InvalidInput(f"{where}: record needs exactly one of 'probs' or 'logits'")
        label = rec["label"]
        if not isinstance(label, int) or isinstance(label, bool):
            raise InvalidInput(f"{where}: label must be an integer")
        try:
            if has_logits:
                if transform is None:
                    raise InvalidInput("logits need a transform (--transform) to become confidences")
                values = apply_transform(np.asarray(rec["logits"], dtype=np.float64), transform)
            else:
                values = rec["probs"]
            out.append(LabeledPrediction(str(rec["id"]), label, PredictionVector(tuple(values))))
        except (InvalidInput, TypeError, ValueError) as exc:
            raise InvalidInput(f"{where}: {exc}") from exc
    if not out:
        raise InvalidInput(f"{path}: no records")
    return out


def load_logits_bundle(path) -> list:
    """Group ``{model, id, label, logits}`` lines into per-model logits."""
    per_model: dict = {}
    for lineno, rec in _jsonl(path):
        try:
            entry = per_model.setdefault(str(rec["model"]), ([], [], []))
            entry[0].append(str(rec["id"]))
            entry[1].append(int(rec["label"]))
            entry[2].append([float(v) for v in rec["logits"]])
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInput(f"{path}:{lineno}: bundle record needs model, id, label, logits ({exc})") from exc
    if not per_model:
        raise InvalidInput(f"{path}: empty logits bundle")
    models = []
    for name, (ids, labels, logits) in per_model.items():
        order = np.argsort(np.array(ids), kind="stable")
        models.append(ModelLogits(name, tuple(ids[i] for i in order), np.array(labels)[order],
                                  np.array(logits)[order]))
    return models


def load_reference(path) -> RankSeries:
    """CSV with header ``model,distortion``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"model", "distortion"} <= set(reader.fieldnames):
            raise InvalidInput(f"{path}: reference CSV needs columns model,distortion")
        try:
            rows = [(r["model"], float(r["distortion"])) for r in reader]
        except ValueError as exc:
            raise InvalidInput(f"{path}: {exc}") from exc
    return RankSeries(tuple(r[0] for r in rows), tuple(r[1] for r in rows))


def load_metric_table(path) -> dict:
    """CSV whose first column names models and whose other columns are metrics."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 3 or len(rows[0]) < 3:
        raise InvalidInput(f"{path}: need a header, two or more models and two or more metric columns")
    header, body = rows[0], rows[1:]
    names = tuple(r[0] for r in body)
    try:
        return {col: RankSeries(names, tuple(float(r[j]) for r in body)) for j, col in enumerate(header) if j > 0}
    except (ValueError, IndexError) as exc:
        raise InvalidInput(f"{path}: {exc}") from exc


def load_groups(path) -> list:
    """JSON ``{"groups": [{"name": ..., "samples": [{"id", "label", "input"}]}]}``."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return [AuditGroup.from_dict(g) for g in data["groups"]]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InvalidInput(f"{path}: malformed groups manifest ({exc})") from exc


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{path}: invalid JSON ({exc.msg})") from exc
