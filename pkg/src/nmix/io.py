"""File formats: counts CSV, features CSV, model files, matrix CSVs.

Counts files distinguish undetected links (an integer zero: an observation
was made, nothing was seen) from truly missing pairs (``NA``: no
observation was ever made).  All numeric output uses round-trip-exact
decimal formatting, and every write is atomic (temp file then rename).
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .core import CountDataset, DetectionModel, FactorModel, FeatureSet

__all__ = [
    "ParseError",
    "MODEL_FORMAT_VERSION",
    "ModelFile",
    "load_counts",
    "save_counts_csv",
    "load_features",
    "save_features_csv",
    "load_matrix_csv",
    "save_matrix_csv",
    "load_vector_csv",
    "save_vector_csv",
    "atomic_write_text",
]

MODEL_FORMAT_VERSION = 1


class ParseError(ValueError):
    """Malformed input file; the message names the offending location."""


def _fmt(x):
    """Shortest decimal string that round-trips to the same float."""
    return repr(float(x))


def atomic_write_text(path, text):
    """Write text to ``path`` via a temporary file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_rows(path):
    with open(path, newline="") as handle:
        return list(csv.reader(handle))


def load_counts(path):
    """Parse a counts CSV into a :class:`CountDataset`.

    Format: first row holds column identifiers (the corner cell is a
    label), first column holds row identifiers, every other cell is a
    nonnegative integer count or ``NA`` for a truly missing pair.
    """
    rows = _read_rows(path)
    if len(rows) < 2 or len(rows[0]) < 2:
        raise ParseError(f"{path}: counts file needs a header row and at least one data row")
    col_ids = [c.strip() for c in rows[0][1:]]
    if len(set(col_ids)) != len(col_ids):
        raise ParseError(f"{path}: duplicate column identifiers in header")
    n_cols = len(col_ids)

    counts = np.zeros((len(rows) - 1, n_cols), dtype=np.int64)
    mask = np.zeros((len(rows) - 1, n_cols), dtype=bool)
    row_ids = []
    for r, row in enumerate(rows[1:]):
        line = r + 2
        if len(row) != n_cols + 1:
            raise ParseError(
                f"{path}: line {line}: expected {n_cols + 1} cells, got {len(row)}"
            )
        row_ids.append(row[0].strip())
        for c, cell in enumerate(row[1:]):
            cell = cell.strip()
            if cell == "NA":
                continue
            try:
                value = int(cell)
            except ValueError:
                raise ParseError(
                    f"{path}: line {line}, column {col_ids[c]!r}: "
                    f"expected a nonnegative integer or NA, got {cell!r}"
                ) from None
            if value < 0:
                raise ParseError(
                    f"{path}: line {line}, column {col_ids[c]!r}: "
                    f"negative count {value}"
                )
            counts[r, c] = value
            mask[r, c] = True
    if len(set(row_ids)) != len(row_ids):
        raise ParseError(f"{path}: duplicate row identifiers")
    return CountDataset(counts=counts, observed_mask=mask)


def save_counts_csv(path, counts, observed_mask):
    """Write a counts CSV with generated r#/c# identifiers."""
    counts = np.asarray(counts)
    mask = np.asarray(observed_mask, dtype=bool)
    lines = ["id," + ",".join(f"c{j + 1}" for j in range(counts.shape[1]))]
    for i in range(counts.shape[0]):
        cells = [
            str(int(counts[i, j])) if mask[i, j] else "NA"
            for j in range(counts.shape[1])
        ]
        lines.append(f"r{i + 1}," + ",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_features(path, n_rows, n_cols, observed_mask=None):
    """Parse a features CSV into a :class:`FeatureSet`.

    Format: header ``row,col,<feature names...>``; each following line holds
    one-based pair indices and that pair's feature values.  Pairs may be
    omitted, but when ``observed_mask`` is given every observed pair must be
    present.  Omitted pairs get all-zero features.
    """
    rows = _read_rows(path)
    if not rows:
        raise ParseError(f"{path}: empty features file")
    header = [c.strip() for c in rows[0]]
    if len(header) < 3 or header[0] != "row" or header[1] != "col":
        raise ParseError(
            f"{path}: header must be 'row,col,<feature columns>', got {rows[0]!r}"
        )
    n_features = len(header) - 2

    z = np.zeros((n_rows * n_cols, n_features))
    seen = np.zeros(n_rows * n_cols, dtype=bool)
    for r, row in enumerate(rows[1:]):
        line = r + 2
        if len(row) != n_features + 2:
            raise ParseError(
                f"{path}: line {line}: expected {n_features + 2} cells, got {len(row)}"
            )
        try:
            i = int(row[0])
            j = int(row[1])
        except ValueError:
            raise ParseError(
                f"{path}: line {line}: pair indices must be integers"
            ) from None
        if not (1 <= i <= n_rows and 1 <= j <= n_cols):
            raise ParseError(
                f"{path}: line {line}: pair ({i}, {j}) outside the "
                f"{n_rows}x{n_cols} network"
            )
        flat = (j - 1) * n_rows + (i - 1)
        if seen[flat]:
            raise ParseError(f"{path}: line {line}: duplicate pair ({i}, {j})")
        seen[flat] = True
        try:
            z[flat] = [float(c) for c in row[2:]]
        except ValueError:
            raise ParseError(
                f"{path}: line {line}: feature values must be numeric"
            ) from None

    if observed_mask is not None:
        mask_flat = np.asarray(observed_mask, dtype=bool).flatten(order="F")
        missing = np.flatnonzero(mask_flat & ~seen)
        if missing.size:
            flat = int(missing[0])
            i, j = flat % n_rows + 1, flat // n_rows + 1
            raise ParseError(
                f"{path}: observed pair ({i}, {j}) has no feature row"
            )
    return FeatureSet(z=z, n_rows=n_rows, n_cols=n_cols)


def save_features_csv(path, features):
    """Write every pair's feature row with one-based indices."""
    names = ",".join(f"z{r + 1}" for r in range(features.n_features))
    lines = [f"row,col,{names}"]
    for j in range(features.n_cols):
        for i in range(features.n_rows):
            values = features.z[features.pair_row(i, j)]
            lines.append(f"{i + 1},{j + 1}," + ",".join(_fmt(x) for x in values))
    atomic_write_text(path, "\n".join(lines) + "\n")


@dataclass
class ModelFile:
    """Self-describing persisted model; round-trips losslessly through JSON."""

    n_rows: int
    n_cols: int
    rank: int
    n_features: int
    u: np.ndarray
    v: np.ndarray
    alpha: np.ndarray
    p: np.ndarray
    config: dict | None = None
    objective_trace: np.ndarray | None = None
    format_version: int = MODEL_FORMAT_VERSION

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.u.shape != (self.n_rows, self.rank):
            raise ValueError(f"u shape {self.u.shape} != ({self.n_rows}, {self.rank})")
        if self.v.shape != (self.n_cols, self.rank):
            raise ValueError(f"v shape {self.v.shape} != ({self.n_cols}, {self.rank})")
        if self.alpha.shape != (self.n_features,):
            raise ValueError(
                f"alpha shape {self.alpha.shape} != ({self.n_features},)"
            )
        if self.p.shape != (self.n_rows, self.n_cols):
            raise ValueError(
                f"p shape {self.p.shape} != ({self.n_rows}, {self.n_cols})"
            )

    @classmethod
    def from_fit_result(cls, result):
        config = dict(vars(result.config_echo))
        if config.get("fixed_alpha") is not None:
            config["fixed_alpha"] = [float(x) for x in config["fixed_alpha"]]
        return cls(
            n_rows=result.factors.u.shape[0],
            n_cols=result.factors.v.shape[0],
            rank=result.factors.rank,
            n_features=result.detection.alpha.size,
            u=result.factors.u,
            v=result.factors.v,
            alpha=result.detection.alpha,
            p=result.detection.p,
            config=config,
            objective_trace=result.objective_trace,
        )

    def to_factor_model(self):
        return FactorModel(u=self.u, v=self.v)

    def to_detection_model(self):
        return DetectionModel(alpha=self.alpha, p=np.clip(self.p, 0.0, 1.0))

    def save(self, path):
        payload = {
            "format_version": self.format_version,
            "n_rows": self.n_rows,
            "n_cols": self.n_cols,
            "rank": self.rank,
            "n_features": self.n_features,
            "u": [float(x) for x in self.u.ravel(order="C")],
            "v": [float(x) for x in self.v.ravel(order="C")],
            "alpha": [float(x) for x in self.alpha],
            "p": [float(x) for x in self.p.ravel(order="C")],
            "config": self.config,
            "objective_trace": (
                None
                if self.objective_trace is None
                else [float(x) for x in self.objective_trace]
            ),
        }
        atomic_write_text(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")

    @classmethod
    def load(cls, path):
        with open(path) as handle:
            try:
                payload = json.load(handle)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: invalid model file: {exc}") from None
        version = payload.get("format_version")
        if version != MODEL_FORMAT_VERSION:
            raise ParseError(
                f"{path}: unsupported format_version {version!r} "
                f"(expected {MODEL_FORMAT_VERSION})"
            )
        try:
            n_rows = payload["n_rows"]
            n_cols = payload["n_cols"]
            rank = payload["rank"]
            n_features = payload["n_features"]
            trace = payload.get("objective_trace")
            return cls(
                n_rows=n_rows,
                n_cols=n_cols,
                rank=rank,
                n_features=n_features,
                u=np.asarray(payload["u"]).reshape(n_rows, rank),
                v=np.asarray(payload["v"]).reshape(n_cols, rank),
                alpha=np.asarray(payload["alpha"]),
                p=np.asarray(payload["p"]).reshape(n_rows, n_cols),
                config=payload.get("config"),
                objective_trace=None if trace is None else np.asarray(trace),
            )
        except (KeyError, ValueError) as exc:
            raise ParseError(f"{path}: malformed model file: {exc}") from None


def save_matrix_csv(path, matrix):
    """Write a real matrix with generated r#/c# identifiers."""
    matrix = np.asarray(matrix, dtype=float)
    lines = ["id," + ",".join(f"c{j + 1}" for j in range(matrix.shape[1]))]
    for i in range(matrix.shape[0]):
        lines.append(f"r{i + 1}," + ",".join(_fmt(x) for x in matrix[i]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_matrix_csv(path):
    """Read a matrix written by :func:`save_matrix_csv`."""
    rows = _read_rows(path)
    if len(rows) < 2:
        raise ParseError(f"{path}: matrix file needs a header and data rows")
    width = len(rows[0]) - 1
    try:
        return np.array([[float(c) for c in row[1:]] for row in rows[1:]]).reshape(
            len(rows) - 1, width
        )
    except ValueError:
        raise ParseError(f"{path}: malformed matrix file") from None


def save_vector_csv(path, vector):
    atomic_write_text(path, "\n".join(_fmt(x) for x in np.asarray(vector)) + "\n")


def load_vector_csv(path):
    with open(path) as handle:
        lines = [line.strip() for line in handle if line.strip()]
    try:
        return np.array([float(line) for line in lines])
    except ValueError:
        raise ParseError(f"{path}: malformed vector file") from None
