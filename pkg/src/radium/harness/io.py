"""Deterministic JSON/CSV writers and schema validation for result documents."""

from __future__ import annotations

import csv
import json
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

SCHEMAS = ("result", "prediction", "metrics", "gibbs", "gradcheck")


class SchemaError(ValueError):
    pass


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    if name not in SCHEMAS:
        raise KeyError(f"unknown schema {name!r}")
    text = resources.files("radium").joinpath("schemas", f"{name}.json").read_text()
    return json.loads(text)


def validate(doc: dict, name: str) -> None:
    try:
        jsonschema.validate(doc, load_schema(name))
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"{name}: {exc.message}") from None


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def dumps(doc) -> str:
    """Canonical text: sorted keys, fixed indent, shortest round-trip floats."""
    return json.dumps(_plain(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, doc, schema: str | None = None) -> Path:
    doc = _plain(doc)
    if schema is not None:
        validate(doc, schema)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(doc))
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def write_rows(path, rows: list[dict], columns: list[str] | None = None) -> Path:
    """CSV with a header row; floats written with ``repr`` so reruns match byte for byte."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if columns is None:
        columns = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c, "")) for c in columns])
    return path


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


HISTORY_COLUMNS = ["round", "phase", "tau", "mean_cost", "failure_fraction",
                   "policy_acceptance", "failure_acceptance", "policy_mean_logp", "failure_mean_logp"]


def write_history_csv(path, history: list[dict]) -> Path:
    """Cost-versus-round table for plotting."""
    present = [c for c in HISTORY_COLUMNS if any(c in r for r in history)]
    return write_rows(path, history, present or ["round", "mean_cost"])


def write_matrix_csv(path, matrix, prefix: str) -> Path:
    """One row per particle: index then coordinates."""
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    cols = ["index"] + [f"{prefix}{j}" for j in range(m.shape[1])]
    rows = [dict(zip(cols, [i] + list(r))) for i, r in enumerate(m)]
    return write_rows(path, rows, cols)
