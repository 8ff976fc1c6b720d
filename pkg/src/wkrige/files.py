"""JSON file formats: datasets, fitted models, targets, predictions; TSV tables."""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .exceptions import ValidationError
from .kriging import SiteSet
from .measures import QuantileGrid, empirical_quantile
from .variogram import MaternParams

__all__ = [
    "DatasetError",
    "Dataset",
    "dataset_document",
    "parse_dataset",
    "load_dataset",
    "write_dataset",
    "FittedModel",
    "load_model",
    "write_model",
    "load_targets",
    "write_json",
    "write_table",
]

MODEL_FORMAT = "wkrige-model"


class DatasetError(ValidationError):
    """Dataset validation failure; ``problems`` lists every offending record."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("invalid dataset: " + "; ".join(self.problems))


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray = field(repr=False)
    Y: np.ndarray = field(repr=False)
    grid_size: int

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def fingerprint(self) -> str:
        doc = dataset_document(self.X, self.Y)
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    def take(self, index) -> "Dataset":
        return Dataset(self.X[index], self.Y[index], self.grid_size)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _number_list(v) -> bool:
    return isinstance(v, list) and all(_is_number(a) for a in v)


def parse_dataset(doc) -> Dataset:
    """Validate a dataset document, converting sample records to quantile curves."""
    if not isinstance(doc, dict):
        raise DatasetError(["top level must be a JSON object"])
    problems = []
    dim, size = doc.get("dim"), doc.get("grid_size")
    if not (isinstance(dim, int) and not isinstance(dim, bool) and dim >= 1):
        problems.append(f"dim must be a positive integer, got {dim!r}")
    if not (isinstance(size, int) and not isinstance(size, bool) and size >= 1):
        problems.append(f"grid_size must be a positive integer, got {size!r}")
    obs = doc.get("observations")
    if not isinstance(obs, list):
        problems.append("observations must be a list")
    if problems:
        raise DatasetError(problems)

    grid = QuantileGrid(size)
    xs, ys = [], []
    for i, rec in enumerate(obs):
        where = f"observation {i}"
        if not isinstance(rec, dict):
            problems.append(f"{where}: not an object")
            continue
        x = rec.get("x")
        if not _number_list(x) or len(x) != dim:
            problems.append(f"{where}: x must be {dim} finite numbers")
            x = None
        has_s, has_q = "samples" in rec, "quantiles" in rec
        y = None
        if has_s == has_q:
            problems.append(f"{where}: needs exactly one of 'samples' or 'quantiles'")
        elif has_q:
            q = rec["quantiles"]
            if not _number_list(q) or len(q) != size:
                problems.append(f"{where}: quantiles must be {size} finite numbers")
            elif any(b < a for a, b in zip(q, q[1:])):
                problems.append(f"{where}: quantiles must be non-decreasing")
            else:
                y = np.asarray(q, dtype=float)
        else:
            s = rec["samples"]
            if not isinstance(s, list) or not s:
                problems.append(f"{where}: empty sample set")
            elif not _number_list(s):
                problems.append(f"{where}: non-finite sample")
            else:
                y = empirical_quantile(s, grid).values
        if x is not None and y is not None:
            xs.append((i, tuple(float(a) for a in x)))
            ys.append(y)
    seen = {}
    for i, x in xs:
        if x in seen:
            problems.append(f"observation {i}: duplicate location of observation {seen[x]}")
        else:
            seen[x] = i
    if problems:
        raise DatasetError(problems)
    X = np.array([x for _, x in xs], dtype=float).reshape(len(xs), dim)
    Y = np.array(ys, dtype=float).reshape(len(ys), size)
    return Dataset(X, Y, size)


def load_dataset(path) -> Dataset:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DatasetError([f"{path}: not valid JSON ({exc})"]) from exc
    return parse_dataset(doc)


def dataset_document(X, Y) -> dict:
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    return {
        "dim": int(X.shape[1]),
        "grid_size": int(Y.shape[1]),
        "observations": [
            {"x": [float(a) for a in x], "quantiles": [float(b) for b in y]}
            for x, y in zip(X, Y)
        ],
    }


def _atomic_write(path, text: str):
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".wkrige-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, doc, indent: Optional[int] = 1):
    text = json.dumps(doc, indent=indent) + "\n"
    if path in (None, "-"):
        print(text, end="")
    else:
        _atomic_write(path, text)


def write_dataset(path, X, Y):
    write_json(path, dataset_document(X, Y))


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_table(path, header: Sequence[str], rows: Iterable[Sequence], comments=()):
    """Tab-separated table with a header row; ``comments`` become leading ``#`` lines."""
    lines = [f"# {c}" for c in comments]
    lines.append("\t".join(header))
    lines.extend("\t".join(_fmt(v) for v in row) for row in rows)
    text = "\n".join(lines) + "\n"
    if path in (None, "-"):
        print(text, end="")
    else:
        _atomic_write(path, text)


@dataclass(frozen=True)
class FittedModel:
    sites: SiteSet
    params: MaternParams
    values: np.ndarray = field(repr=False)
    method: str
    fingerprint: str
    metadata: dict = field(default_factory=dict)

    @property
    def grid_size(self) -> int:
        return self.values.shape[1]

    def to_document(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": 1,
            "method": self.method,
            "params": self.params.to_dict(),
            "dim": self.sites.dim,
            "grid_size": self.grid_size,
            "scaling": self.sites.scaling_dict(),
            "sites": self.sites.points.tolist(),
            "quantiles": self.values.tolist(),
            "dataset_fingerprint": self.fingerprint,
            "metadata": self.metadata,
        }


def write_model(path, model: FittedModel):
    write_json(path, model.to_document())


def load_model(path) -> FittedModel:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ValidationError(f"{path}: not a {MODEL_FORMAT} file")
    try:
        p = doc["params"]
        params = MaternParams(p["sigma2"], p["length_scale"], p["nu"], p.get("nugget", 0.0))
        sc = doc["scaling"]
        sites = SiteSet(doc["sites"], sc["offset"], sc["factor"])
        values = np.asarray(doc["quantiles"], dtype=float)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{path}: malformed model file ({exc})") from exc
    if values.ndim != 2 or values.shape[0] != sites.n or values.shape[1] != doc.get("grid_size"):
        raise ValidationError(f"{path}: quantile array does not match sites and grid_size")
    return FittedModel(sites, params, values, doc.get("method", "unknown"),
                       doc.get("dataset_fingerprint", ""), doc.get("metadata", {}))


def load_targets(path, dim: int) -> np.ndarray:
    """Targets from ``{"targets": [[...], ...]}`` or from the ``x`` fields of a dataset."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    if isinstance(doc, dict) and "targets" in doc:
        raw = doc["targets"]
    elif isinstance(doc, dict) and "observations" in doc:
        raw = [rec.get("x") if isinstance(rec, dict) else None for rec in doc["observations"]]
    else:
        raise ValidationError(f"{path}: expected a 'targets' list or a dataset")
    if not isinstance(raw, list):
        raise ValidationError(f"{path}: targets must be a list")
    problems = [f"target {i}: expected {dim} finite numbers"
                for i, t in enumerate(raw) if not _number_list(t) or len(t) != dim]
    if problems:
        raise DatasetError(problems)
    return np.array(raw, dtype=float).reshape(len(raw), dim)
