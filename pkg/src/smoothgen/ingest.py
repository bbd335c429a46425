"""On-disk schemas: model manifests, prediction logs, score logs, weight dumps.

All text formats are JSON Lines (UTF-8, one object per line). Prediction and
score logs carry a single header line with file-level fields; manifests are
headerless. Weight dumps use a small self-describing binary layout. Parsed
values are immutable and safe to share across threads.
"""

from __future__ import annotations

import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import SchemaError

_EPS = 1e-9

WEIGHT_DUMP_MAGIC = b"SGWD0001"


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def atomic_write_text(path, text: str) -> None:
    """Write text to path via a temp file and atomic rename."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path, data: bytes) -> None:
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass(frozen=True)
class ModelRecord:
    model_id: str
    arch: str
    train_domain: str
    hyperparams: dict
    converged: bool

    def to_json_obj(self) -> dict:
        return {
            "model_id": self.model_id,
            "arch": self.arch,
            "train_domain": self.train_domain,
            "hyperparams": self.hyperparams,
            "converged": self.converged,
        }


@dataclass(frozen=True)
class ExampleEntry:
    example_id: str
    neighborhood_predictions: tuple[int, ...]
    true_label: Optional[int] = None
    base_prediction: Optional[int] = None

    def to_json_obj(self) -> dict:
        obj = {
            "example_id": self.example_id,
            "neighborhood_predictions": list(self.neighborhood_predictions),
        }
        if self.true_label is not None:
            obj["true_label"] = self.true_label
        if self.base_prediction is not None:
            obj["base_prediction"] = self.base_prediction
        return obj


@dataclass(frozen=True)
class NeighborhoodPredictionLog:
    model_id: str
    test_domain: str
    num_classes: int
    examples: tuple[ExampleEntry, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.num_classes < 2:
            raise SchemaError(f"num_classes must be >= 2, got {self.num_classes}")
        k = self.num_classes
        for ex in self.examples:
            if len(ex.neighborhood_predictions) == 0:
                raise SchemaError(
                    f"example {ex.example_id!r}: empty neighborhood_predictions"
                )
            for p in ex.neighborhood_predictions:
                if not 0 <= p < k:
                    raise SchemaError(
                        f"example {ex.example_id!r}: prediction {p} out of range [0, {k})"
                    )
            for name in ("true_label", "base_prediction"):
                v = getattr(ex, name)
                if v is not None and not 0 <= v < k:
                    raise SchemaError(
                        f"example {ex.example_id!r}: {name} {v} out of range [0, {k})"
                    )


@dataclass(frozen=True)
class ScoreEntry:
    example_id: str
    predicted_label: int
    max_confidence: float
    neg_entropy: float
    true_label: Optional[int] = None

    def to_json_obj(self) -> dict:
        obj = {
            "example_id": self.example_id,
            "predicted_label": self.predicted_label,
            "max_confidence": self.max_confidence,
            "neg_entropy": self.neg_entropy,
        }
        if self.true_label is not None:
            obj["true_label"] = self.true_label
        return obj


@dataclass(frozen=True)
class ScoreLog:
    model_id: str
    domain: str
    split: str  # "validation" | "test"
    entries: tuple[ScoreEntry, ...]
    num_classes: Optional[int] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.split not in ("validation", "test"):
            raise SchemaError(f"split must be 'validation' or 'test', got {self.split!r}")
        k = self.num_classes
        if k is not None and k < 2:
            raise SchemaError(f"num_classes must be >= 2, got {k}")
        for e in self.entries:
            lo = (1.0 / k - _EPS) if k else 0.0
            if not lo <= e.max_confidence <= 1.0 + _EPS:
                raise SchemaError(
                    f"entry {e.example_id!r}: max_confidence {e.max_confidence} out of range"
                )
            hi_mag = math.log(k) + _EPS if k else math.inf
            if not -hi_mag <= e.neg_entropy <= _EPS:
                raise SchemaError(
                    f"entry {e.example_id!r}: neg_entropy {e.neg_entropy} out of range"
                )
            if k is not None and not 0 <= e.predicted_label < k:
                raise SchemaError(
                    f"entry {e.example_id!r}: predicted_label {e.predicted_label} out of range"
                )


@dataclass(frozen=True)
class WeightDump:
    model_id: str
    layers: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.layers:
            raise SchemaError("weight dump must contain at least one layer")
        for i, w in enumerate(self.layers):
            if w.ndim != 2 or w.size == 0:
                raise SchemaError(f"layer {i}: expected non-empty 2-D matrix")
            if not np.all(np.isfinite(w)):
                raise SchemaError(f"layer {i}: non-finite entries")


def _iter_jsonl(path):
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"malformed JSON: {e.msg}", path=path, line=lineno)
            if not isinstance(obj, dict):
                raise SchemaError("expected a JSON object", path=path, line=lineno)
            yield lineno, obj


def _require(obj, key, path, lineno, types=None):
    if key not in obj:
        raise SchemaError(f"missing required field {key!r}", path=path, line=lineno)
    v = obj[key]
    if types is not None and not isinstance(v, types):
        raise SchemaError(f"field {key!r} has wrong type", path=path, line=lineno)
    return v


def parse_manifest(path) -> list[ModelRecord]:
    """Parse a model manifest (one record per line); rejects duplicate ids."""
    records = []
    seen = set()
    for lineno, obj in _iter_jsonl(path):
        rec = ModelRecord(
            model_id=_require(obj, "model_id", path, lineno, str),
            arch=_require(obj, "arch", path, lineno, str),
            train_domain=_require(obj, "train_domain", path, lineno, str),
            hyperparams=_require(obj, "hyperparams", path, lineno, dict),
            converged=_require(obj, "converged", path, lineno, bool),
        )
        if rec.model_id in seen:
            raise SchemaError(
                f"duplicate model_id {rec.model_id!r}", path=path, line=lineno
            )
        seen.add(rec.model_id)
        records.append(rec)
    return records


def serialize_manifest(records: Iterable[ModelRecord]) -> str:
    return "".join(_dumps(r.to_json_obj()) + "\n" for r in records)


def write_manifest(records: Iterable[ModelRecord], path) -> None:
    atomic_write_text(path, serialize_manifest(records))


def parse_prediction_log(path) -> NeighborhoodPredictionLog:
    """Parse a neighborhood prediction log (header line + one example per line)."""
    header = None
    examples = []
    for lineno, obj in _iter_jsonl(path):
        if header is None:
            header = obj
            if header.get("type") != "prediction_log":
                raise SchemaError(
                    "header must declare type 'prediction_log'", path=path, line=lineno
                )
            continue
        ex = ExampleEntry(
            example_id=_require(obj, "example_id", path, lineno, str),
            neighborhood_predictions=tuple(
                _require(obj, "neighborhood_predictions", path, lineno, list)
            ),
            true_label=obj.get("true_label"),
            base_prediction=obj.get("base_prediction"),
        )
        examples.append(ex)
    if header is None:
        raise SchemaError("empty file: missing header line", path=path)
    try:
        return NeighborhoodPredictionLog(
            model_id=_require(header, "model_id", path, 1, str),
            test_domain=_require(header, "test_domain", path, 1, str),
            num_classes=_require(header, "num_classes", path, 1, int),
            examples=tuple(examples),
            meta=header.get("meta", {}),
        )
    except SchemaError as e:
        raise SchemaError(str(e), path=path)


def serialize_prediction_log(log: NeighborhoodPredictionLog) -> str:
    header = {
        "type": "prediction_log",
        "model_id": log.model_id,
        "test_domain": log.test_domain,
        "num_classes": log.num_classes,
    }
    if log.meta:
        header["meta"] = log.meta
    lines = [_dumps(header)]
    lines.extend(_dumps(ex.to_json_obj()) for ex in log.examples)
    return "\n".join(lines) + "\n"


def write_prediction_log(log: NeighborhoodPredictionLog, path) -> None:
    atomic_write_text(path, serialize_prediction_log(log))


def parse_score_log(path) -> ScoreLog:
    header = None
    entries = []
    for lineno, obj in _iter_jsonl(path):
        if header is None:
            header = obj
            if header.get("type") != "score_log":
                raise SchemaError(
                    "header must declare type 'score_log'", path=path, line=lineno
                )
            continue
        entries.append(
            ScoreEntry(
                example_id=_require(obj, "example_id", path, lineno, str),
                predicted_label=_require(obj, "predicted_label", path, lineno, int),
                max_confidence=float(_require(obj, "max_confidence", path, lineno, (int, float))),
                neg_entropy=float(_require(obj, "neg_entropy", path, lineno, (int, float))),
                true_label=obj.get("true_label"),
            )
        )
    if header is None:
        raise SchemaError("empty file: missing header line", path=path)
    try:
        return ScoreLog(
            model_id=_require(header, "model_id", path, 1, str),
            domain=_require(header, "domain", path, 1, str),
            split=_require(header, "split", path, 1, str),
            entries=tuple(entries),
            num_classes=header.get("num_classes"),
            meta=header.get("meta", {}),
        )
    except SchemaError as e:
        raise SchemaError(str(e), path=path)


def serialize_score_log(log: ScoreLog) -> str:
    header = {
        "type": "score_log",
        "model_id": log.model_id,
        "domain": log.domain,
        "split": log.split,
    }
    if log.num_classes is not None:
        header["num_classes"] = log.num_classes
    if log.meta:
        header["meta"] = log.meta
    lines = [_dumps(header)]
    lines.extend(_dumps(e.to_json_obj()) for e in log.entries)
    return "\n".join(lines) + "\n"


def write_score_log(log: ScoreLog, path) -> None:
    atomic_write_text(path, serialize_score_log(log))


def serialize_weight_dump(dump: WeightDump) -> bytes:
    """Binary layout: magic, u64 id length, utf-8 id, u64 layer count, then
    per layer u64 rows, u64 cols and row-major little-endian float64 values."""
    out = bytearray()
    out += WEIGHT_DUMP_MAGIC
    ident = dump.model_id.encode("utf-8")
    out += struct.pack("<Q", len(ident))
    out += ident
    out += struct.pack("<Q", len(dump.layers))
    for w in dump.layers:
        rows, cols = w.shape
        out += struct.pack("<QQ", rows, cols)
        out += np.ascontiguousarray(w, dtype="<f8").tobytes()
    return bytes(out)


def write_weight_dump(dump: WeightDump, path) -> None:
    atomic_write_bytes(path, serialize_weight_dump(dump))


def read_weight_dump(path) -> WeightDump:
    with open(path, "rb") as f:
        data = f.read()
    off = 0

    def take(n):
        nonlocal off
        if off + n > len(data):
            raise SchemaError("truncated weight dump", path=path)
        chunk = data[off : off + n]
        off += n
        return chunk

    if take(len(WEIGHT_DUMP_MAGIC)) != WEIGHT_DUMP_MAGIC:
        raise SchemaError("bad magic bytes in weight dump", path=path)
    (id_len,) = struct.unpack("<Q", take(8))
    model_id = take(id_len).decode("utf-8")
    (n_layers,) = struct.unpack("<Q", take(8))
    layers = []
    for _ in range(n_layers):
        rows, cols = struct.unpack("<QQ", take(16))
        buf = take(rows * cols * 8)
        w = np.frombuffer(buf, dtype="<f8").reshape(rows, cols).copy()
        layers.append(w)
    if off != len(data):
        raise SchemaError("trailing bytes in weight dump", path=path)
    return WeightDump(model_id=model_id, layers=tuple(layers))


def compute_accuracy(log) -> float:
    """Top-1 accuracy of the base predictions against true labels.

    Accepts a NeighborhoodPredictionLog (base_prediction vs true_label) or a
    ScoreLog (predicted_label vs true_label).
    """
    if isinstance(log, NeighborhoodPredictionLog):
        items = [(ex.base_prediction, ex.true_label, ex.example_id) for ex in log.examples]
    elif isinstance(log, ScoreLog):
        items = [(e.predicted_label, e.true_label, e.example_id) for e in log.entries]
    else:
        raise TypeError(f"unsupported log type {type(log).__name__}")
    if not items:
        raise SchemaError("cannot compute accuracy of an empty log")
    correct = 0
    for pred, true, ex_id in items:
        if true is None or pred is None:
            raise SchemaError(f"example {ex_id!r}: missing label, accuracy unavailable")
        correct += int(pred == true)
    return correct / len(items)
