"""Reading and writing schemas, datasets and models.

Every writer goes through :func:`atomic_write_text`, so a failed command
never leaves a half-written file behind.  Model files carry floats as
17-significant-digit decimal strings and no timestamps, which makes them
byte-identical across reruns.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike

from .domain import Dataset, DomainSchema
from .errors import ArityMismatch, EmptyDataset, MaxEntError, ModelFormatError, SchemaError, UnknownCategory
from .prior import MixedPrior, ReweightedDistribution
from .solver import MaxEntModel

MODEL_FORMAT = "maxent-debias-model"
MODEL_VERSION = 1
FREQ_COLUMN = "freq"


def atomic_write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def dump_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path: str | Path, obj: Any) -> Path:
    return atomic_write_text(path, dump_json(obj))


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# schema ---------------------------------------------------------------------

def load_schema(path: str | Path) -> DomainSchema:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    return DomainSchema.from_dict(doc)


def save_schema(schema: DomainSchema, path: str | Path) -> Path:
    return write_json(path, schema.to_dict())


# raw (decoded) tables --------------------------------------------------------

@dataclass(frozen=True)
class RowError:
    row: int
    column: str
    value: str
    message: str

    def __str__(self):
        return f"row {self.row}, column {self.column!r}: {self.message}"


def frame_to_dataset(
    schema: DomainSchema, frame: pd.DataFrame, skip_bad_rows: bool = False
) -> tuple[Dataset, list[RowError]]:
    """Encode a table of category labels (one column per block).

    Rows are numbered from 1 after the header.  Unless ``skip_bad_rows`` is
    set, any bad row raises :class:`UnknownCategory` listing every problem.
    """
    names = [b.name for b in schema.blocks]
    missing = [n for n in names if n not in frame.columns]
    if missing:
        raise ArityMismatch(f"input is missing column(s) {missing}")
    values = np.empty((len(frame), schema.n_blocks), dtype=np.int64)
    bad = np.zeros(len(frame), dtype=bool)
    errors: list[RowError] = []
    for j, b in enumerate(schema.blocks):
        lookup = {c: i for i, c in enumerate(b.categories)}
        col = frame[b.name].astype(str).str.strip()
        idx = col.map(lookup)
        miss = idx.isna().to_numpy()
        for r in np.flatnonzero(miss):
            v = col.iloc[r]
            errors.append(RowError(int(r) + 1, b.name, v, f"unknown category {v!r}; expected one of {list(b.categories)}"))
        bad |= miss
        values[:, j] = idx.fillna(0).to_numpy(dtype=np.int64)
    errors.sort(key=lambda e: (e.row, names.index(e.column)))
    if errors and not skip_bad_rows:
        shown = "; ".join(str(e) for e in errors[:20])
        more = f" (and {len(errors) - 20} more)" if len(errors) > 20 else ""
        raise UnknownCategory(f"{len(errors)} bad value(s): {shown}{more}")
    values = values[~bad]
    if values.shape[0] == 0:
        raise EmptyDataset("no usable rows")
    return Dataset.from_values(schema, values), errors


def read_raw_csv(
    schema: DomainSchema, path: str | Path, skip_bad_rows: bool = False
) -> tuple[Dataset, list[RowError]]:
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    return frame_to_dataset(schema, frame, skip_bad_rows)


def values_to_csv(schema: DomainSchema, values: ArrayLike) -> str:
    """Decoded CSV text, one row per sample, one column per block."""
    vals = np.asarray(values, dtype=np.int64)
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([b.name for b in schema.blocks])
    cats = [b.categories for b in schema.blocks]
    for row in vals.tolist():
        w.writerow([c[v] for c, v in zip(cats, row)])
    return buf.getvalue()


def dataset_to_raw_csv(ds: Dataset) -> str:
    """Decoded CSV with each distinct point repeated by its frequency."""
    vals = np.repeat(ds.value_indices(), ds.freqs, axis=0)
    return values_to_csv(ds.schema, vals)


# encoded datasets -----------------------------------------------------------

def encoded_csv(ds: Dataset) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ds.schema.coordinate_names() + [FREQ_COLUMN])
    for p, n in zip(ds.points.tolist(), ds.freqs.tolist()):
        w.writerow(p + [n])
    return buf.getvalue()


def write_encoded_csv(ds: Dataset, path: str | Path) -> Path:
    return atomic_write_text(path, encoded_csv(ds))


def read_encoded_csv(schema: DomainSchema, path: str | Path) -> Dataset:
    frame = pd.read_csv(path, dtype=np.int64)
    cols = schema.coordinate_names()
    if list(frame.columns) != cols + [FREQ_COLUMN]:
        raise ArityMismatch(f"{path}: columns do not match the schema coordinates plus {FREQ_COLUMN!r}")
    if frame.empty:
        raise EmptyDataset(f"{path}: no rows")
    return Dataset.from_points(schema, frame[cols].to_numpy(), frame[FREQ_COLUMN].to_numpy())


def is_encoded_csv(path: str | Path) -> bool:
    with open(path, encoding="utf-8") as fh:
        header = next(csv.reader(fh), [])
    return bool(header) and header[-1] == FREQ_COLUMN


def dataset_summary(ds: Dataset) -> dict:
    vals = ds.value_indices()
    per_block = {}
    for j, b in enumerate(ds.schema.blocks):
        counts = np.bincount(vals[:, j], weights=ds.freqs, minlength=b.cardinality)
        per_block[b.name] = {c: int(n) for c, n in zip(b.categories, counts)}
    return {"N": ds.N, "distinct_points": len(ds), "d": ds.schema.d, "blocks": per_block}


# models ---------------------------------------------------------------------

def _fmt(x: float) -> str:
    # 17 significant digits always round-trip a double exactly
    return f"{float(x):.16e}"


def _floats(items: Iterable[Any], what: str) -> np.ndarray:
    try:
        return np.array([float(s) for s in items], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"bad number in {what}: {exc}") from exc


def model_to_dict(model: MaxEntModel, metadata: Mapping[str, Any] | None = None) -> dict:
    w = model.prior.weighted
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "schema": model.schema.to_dict(),
        "C": _fmt(model.prior.C),
        "tau": None if w.tau is None else _fmt(w.tau),
        "support": ["".join(map(str, p)) for p in w.support.tolist()],
        "weights": [_fmt(x) for x in w.weights],
        "theta": [_fmt(x) for x in model.theta],
        "lambda": [_fmt(x) for x in model.lam],
        "dual_value": _fmt(model.dual_value),
        "metadata": dict(metadata or {}),
    }


def model_from_dict(doc: Mapping[str, Any]) -> MaxEntModel:
    if not isinstance(doc, Mapping) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a model file")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {doc.get('version')!r}")
    try:
        schema = DomainSchema.from_dict(doc["schema"])
        support = np.array([[int(c) for c in s] for s in doc["support"]], dtype=np.uint8)
        weights = _floats(doc["weights"], "weights")
        tau = None if doc.get("tau") is None else float(doc["tau"])
        prior = MixedPrior(float(doc["C"]), ReweightedDistribution(schema, support, weights, tau))
        return MaxEntModel(
            prior,
            _floats(doc["theta"], "theta"),
            _floats(doc["lambda"], "lambda"),
            float(doc["dual_value"]),
        )
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError, MaxEntError) as exc:
        raise ModelFormatError(f"invalid model: {exc}") from exc


def model_json(model: MaxEntModel, metadata: Mapping[str, Any] | None = None) -> str:
    return dump_json(model_to_dict(model, metadata))


def save_model(model: MaxEntModel, path: str | Path, metadata: Mapping[str, Any] | None = None) -> Path:
    return atomic_write_text(path, model_json(model, metadata))


def load_model(path: str | Path) -> MaxEntModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from exc
    return model_from_dict(doc)


def parse_values(schema: DomainSchema, rows: Sequence[Sequence[str]]) -> np.ndarray:
    """Category labels to block values (used by tests and small tools)."""
    return np.array([[b.value_index(v) for b, v in zip(schema.blocks, r)] for r in rows], dtype=np.int64)
