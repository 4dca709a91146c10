"""Dataset ingestion, splitting, and run persistence."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .families import FamilyParams

TRACE_COLUMNS = ("iter", "sw_loss", "acceptance_rate", "wall_ms")


def fmt(x: float) -> str:
    return "%.17g" % x


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple
    has_bias: bool = True
    standardization: Optional[tuple] = None

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def take(self, idx) -> "Dataset":
        return replace(self, features=self.features[idx], labels=self.labels[idx])


def _parse_float(tok: str) -> Optional[float]:
    try:
        return float(tok)
    except ValueError:
        return None


def load_csv(path: Union[str, os.PathLike], label_column: Union[int, str] = -1,
             positive_label: str = "1", delimiter: str = ",",
             header: Optional[bool] = None, add_bias: bool = True,
             one_vs_rest: bool = False) -> Dataset:
    """Read a delimited file into a binary classification dataset.

    Feature columns must be numeric. The label is 1 exactly when the cell
    equals ``positive_label``. A label column with more than two distinct
    values is rejected unless ``one_vs_rest`` is set. ``header=None`` detects
    a header row from non-numeric feature cells.
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such data file: {path}")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delimiter) if any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: empty dataset")
    width = len(rows[0])
    if width < 2:
        raise ValueError(f"{path}: need at least one feature and a label column")

    if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        names = [c.strip() for c in rows[0]]
        if label_column not in names:
            raise ValueError(f"{path}: label column {label_column!r} not in header {names}")
        li = names.index(label_column)
        header = True
    else:
        li = int(label_column) % width
    feat_idx = [j for j in range(width) if j != li]

    if header is None:
        header = any(_parse_float(rows[0][j]) is None for j in feat_idx)
    if header:
        names = tuple(rows[0][j].strip() for j in feat_idx)
        body, first_line = rows[1:], 2
    else:
        names = tuple(f"x{j}" for j in feat_idx)
        body, first_line = rows, 1
    if not body:
        raise ValueError(f"{path}: empty dataset (header only)")

    X = np.empty((len(body), len(feat_idx)))
    tokens = []
    bad = []
    for i, row in enumerate(body):
        if len(row) != width:
            bad.append(first_line + i)
            continue
        vals = [_parse_float(row[j]) for j in feat_idx]
        if any(v is None for v in vals) or not all(np.isfinite(vals)):
            bad.append(first_line + i)
            continue
        X[i] = vals
        tokens.append(row[li].strip())
    if bad:
        shown = ", ".join(map(str, bad[:20])) + (" ..." if len(bad) > 20 else "")
        raise ValueError(f"{path}: unparseable rows at lines {shown}")
    distinct = sorted(set(tokens))
    if len(distinct) > 2 and not one_vs_rest:
        raise ValueError(f"{path}: label column is not binary, found tokens {distinct}")
    y = np.array([1 if t == positive_label else 0 for t in tokens], dtype=np.int64)
    if add_bias:
        X = np.hstack([X, np.ones((X.shape[0], 1))])
        names = names + ("bias",)
    return Dataset(X, y, names, has_bias=add_bias)


def standardize(train: Dataset, *others: Dataset):
    """Scale feature columns with the training mean and std.

    The bias column and constant columns get unit scale.
    """
    X = train.features
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    if train.has_bias:
        mean[-1], std[-1] = 0.0, 1.0
    mean = np.where(std == 0.0, 0.0, mean)
    std = np.where(std == 0.0, 1.0, std)
    out = [replace(ds, features=(ds.features - mean) / std, standardization=(mean, std))
           for ds in (train, *others)]
    return tuple(out)


def split(ds: Dataset, test_fraction: float = 0.2, seed: int = 0):
    """Shuffled train/test split; standardization is fit on the train side."""
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    n_test = int(round(ds.n * test_fraction))
    if n_test < 1 or n_test >= ds.n:
        raise ValueError(f"split of {ds.n} rows at fraction {test_fraction} leaves a side empty")
    perm = np.random.default_rng(seed).permutation(ds.n)
    return standardize(ds.take(perm[n_test:]), ds.take(perm[:n_test]))


# -- persistence ------------------------------------------------------------

def _check_dir(out_dir) -> str:
    if out_dir is None or str(out_dir).strip() == "":
        raise ValueError("output directory must be a non-empty path")
    out_dir = str(out_dir)
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    return out_dir


def write_trace(trace, out_dir, include_timing: bool = True, extra: Optional[dict] = None):
    """Write ``trace.csv`` and ``summary.json``; returns both paths.

    Without ``include_timing`` the ``wall_ms`` column holds ``nan`` so that
    seeded runs produce identical files.
    """
    out_dir = _check_dir(out_dir)
    csv_path = os.path.join(out_dir, "trace.csv")
    json_path = os.path.join(out_dir, "summary.json")
    with open(csv_path, "w", newline="") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for r in trace.records:
            wall = fmt(r.wall_ms) if include_timing else "nan"
            fh.write(f"{r.iteration},{fmt(r.sw_loss)},{fmt(r.acceptance_rate)},{wall}\n")
    summary = {
        "params": trace.params.to_json(),
        "stationarity_index": trace.stationarity,
        "final_sw_loss": trace.records[-1].sw_loss if trace.records else None,
        "config": trace.config.to_json(),
    }
    if extra:
        summary.update(extra)
    write_json(json_path, summary)
    return csv_path, json_path


def write_json(path, doc: dict) -> str:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_trace(path) -> dict:
    """Columns of a ``trace.csv`` as float arrays."""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such trace file: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRACE_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing trace columns {sorted(missing)}")
        rows = list(reader)
    return {c: np.array([float(r[c]) for r in rows]) for c in TRACE_COLUMNS}


def load_params(summary_path) -> FamilyParams:
    with open(summary_path) as fh:
        return FamilyParams.from_json(json.load(fh)["params"])


def write_cloud(path, cloud) -> str:
    cloud = np.atleast_2d(np.asarray(cloud, dtype=np.float64))
    with open(path, "w") as fh:
        for row in cloud:
            fh.write(",".join(fmt(v) for v in row) + "\n")
    return path


def read_cloud(path, delimiter: str = ",") -> np.ndarray:
    """Read a particle cloud, one point per line; a non-numeric first row is a header."""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such sample file: {path}")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delimiter) if any(c.strip() for c in r)]
    if rows and any(_parse_float(c) is None for c in rows[0]):
        rows = rows[1:]
    if not rows:
        raise ValueError(f"{path}: no samples")
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: rows have differing lengths")
    try:
        return np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc


def load_run_config(path, allowed: Sequence[str]) -> dict:
    """Read a JSON run configuration whose keys are option names."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: run configuration must be a JSON object")
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ValueError(f"{path}: unknown configuration keys {unknown}")
    return doc


def load_target_spec(path, kind: str):
    """Parse a JSON target description.

    ``gaussian``: ``{"mean": [...], "covariance": [[...], ...]}``;
    ``gmm``: ``{"components": [{"weight": w, "mean": [...], "covariance": ...}, ...]}``.
    """
    from .targets import GaussianSpec, MixtureSpec

    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such spec file: {path}")
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    try:
        if kind == "gaussian":
            return GaussianSpec(doc["mean"], doc["covariance"])
        if kind == "gmm":
            comps = doc["components"]
            return MixtureSpec([c["weight"] for c in comps],
                               [GaussianSpec(c["mean"], c["covariance"]) for c in comps])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: malformed {kind} spec ({exc!r})") from exc
    raise ValueError(f"unknown target kind {kind!r}")
