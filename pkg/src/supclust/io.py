"""CSV ingestion/export, z-score normalisation and run-directory records."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .datagen import LabeledDataset

log = logging.getLogger(__name__)

TRUE_WORDS = {"1", "true", "t", "yes", "y"}
FALSE_WORDS = {"0", "false", "f", "no", "n", ""}


class ParseError(ValueError):
    pass


def _split(line: str, delimiter: Optional[str]):
    if delimiter is None:
        return line.split()
    return next(csv.reader([line], delimiter=delimiter))


def _column_index(spec, header, ncol, what):
    if spec is None:
        return None
    if isinstance(spec, int) or (isinstance(spec, str) and spec.lstrip("-").isdigit()):
        idx = int(spec)
        if idx < 0:
            idx += ncol
        if not 0 <= idx < ncol:
            raise ParseError(f"{what} column {spec} out of range for {ncol} columns")
        return idx
    if header is None:
        raise ParseError(f"{what} column {spec!r} given by name but the file has no header")
    try:
        return header.index(spec)
    except ValueError:
        raise ParseError(f"{what} column {spec!r} not found in header {header}") from None


def read_csv(path, has_header: Optional[bool] = None, truth_column=None, noise_column=None,
             delimiter: Optional[str] = "auto") -> LabeledDataset:
    """Read numeric feature columns plus optional truth and noise columns.

    ``delimiter="auto"`` uses commas when the first line has one and
    whitespace otherwise.  ``has_header=None`` treats a first line with any
    non-numeric cell as a header.  Truth ids are renumbered 0, 1, ... in order
    of first appearance.  Columns may be given by header name or index.
    """
    path = Path(path)
    lines = [ln.rstrip("\r\n") for ln in path.read_text().splitlines()]
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise ParseError(f"{path}: file is empty")
    if delimiter == "auto":
        delimiter = "," if "," in lines[0] else None
    rows = [[c.strip() for c in _split(ln, delimiter)] for ln in lines]
    if has_header is None:
        has_header = not all(_is_number(c) for c in rows[0])
    header = rows[0] if has_header else None
    body = rows[1:] if has_header else rows
    if not body:
        raise ParseError(f"{path}: no data rows")
    ncol = len(body[0])
    tcol = _column_index(truth_column, header, ncol, "truth")
    ncol_idx = _column_index(noise_column, header, ncol, "noise")
    feat = [j for j in range(ncol) if j not in (tcol, ncol_idx)]
    if not feat:
        raise ParseError(f"{path}: no feature columns")
    first_row = 2 if has_header else 1
    coords = np.empty((len(body), len(feat)))
    truth_raw, noise = [], []
    for i, row in enumerate(body):
        lineno = i + first_row
        if len(row) != ncol:
            raise ParseError(f"{path}: row {lineno} has {len(row)} cells, expected {ncol}")
        for jj, j in enumerate(feat):
            try:
                coords[i, jj] = float(row[j])
            except ValueError:
                raise ParseError(f"{path}: row {lineno}, column {j + 1}: non-numeric value {row[j]!r}") from None
            if not math.isfinite(coords[i, jj]):
                raise ParseError(f"{path}: row {lineno}, column {j + 1}: non-finite value")
        if tcol is not None:
            truth_raw.append(row[tcol])
        if ncol_idx is not None:
            word = row[ncol_idx].lower()
            if word in TRUE_WORDS:
                noise.append(True)
            elif word in FALSE_WORDS:
                noise.append(False)
            else:
                raise ParseError(f"{path}: row {lineno}: cannot read noise flag {row[ncol_idx]!r}")
    truth = None
    if tcol is not None:
        ids = {}
        truth = np.array([ids.setdefault(v, len(ids)) for v in truth_raw], dtype=np.int64)
    mask = np.array(noise, bool) if ncol_idx is not None else np.zeros(len(body), bool)
    if truth is not None and mask.any():
        # keep the reserved noise id distinct from cluster ids
        truth = truth.copy()
        truth[mask] = -1
    return LabeledDataset(coords, truth, mask, None, path.stem)


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def fmt(v) -> str:
    """Shortest float text that reads back to the same double."""
    return repr(float(v))


def write_csv(path, dataset: LabeledDataset) -> None:
    """Write ``x1..xp, truth, is_noise`` columns (truth omitted when unknown)."""
    path = Path(path)
    pts = dataset.points
    cols = [f"x{j + 1}" for j in range(pts.shape[1])]
    has_truth = dataset.truth is not None
    if has_truth:
        cols.append("truth")
    cols.append("is_noise")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for i in range(pts.shape[0]):
            row = [fmt(v) for v in pts[i]]
            if has_truth:
                row.append(int(dataset.truth[i]))
            row.append(int(bool(dataset.noise_mask[i])))
            w.writerow(row)


def read_dataset_csv(path) -> LabeledDataset:
    """Read back a file produced by :func:`write_csv`."""
    header = Path(path).read_text().splitlines()[0].split(",")
    truth = "truth" if "truth" in header else None
    noise = "is_noise" if "is_noise" in header else None
    ds = read_csv(path, has_header=True, truth_column=truth, noise_column=noise, delimiter=",")
    if truth is not None:
        # preserve the stored ids rather than first-occurrence renumbering
        raw = np.loadtxt(path, delimiter=",", skiprows=1, usecols=header.index("truth"), ndmin=1)
        ds.truth = raw.astype(np.int64)
    return ds


def zscore_normalize(points) -> np.ndarray:
    """Centre each column and divide by its sample standard deviation (ddof=1).

    Constant columns are only centred, with a logged warning.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    out = x - x.mean(axis=0)
    if x.shape[0] < 2:
        log.warning("z-score normalisation of a single row leaves it centred only")
        return out
    sd = x.std(axis=0, ddof=1)
    flat = sd == 0
    if flat.any():
        log.warning("constant feature(s) %s left centred at 0", np.flatnonzero(flat).tolist())
    sd = np.where(flat, 1.0, sd)
    return out / sd


def write_matrix(path, matrix, header) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in np.atleast_2d(matrix):
            w.writerow([fmt(v) for v in row])


def write_labels(path, labels) -> None:
    with Path(path).open("w") as fh:
        fh.write("label\n")
        for v in np.asarray(labels).ravel():
            fh.write(f"{int(v)}\n")


def read_labels(path) -> np.ndarray:
    lines = Path(path).read_text().split()
    return np.array([int(v) for v in lines[1:]], dtype=np.int64)


def write_record(path, record: dict) -> None:
    """Flat ``key=value`` text, one pair per line, keys in insertion order."""
    with Path(path).open("w") as fh:
        for k, v in record.items():
            fh.write(f"{k}={_record_value(v)}\n")


def _record_value(v) -> str:
    if isinstance(v, bool) or v is None:
        return str(v)
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return ",".join(_record_value(x) for x in v)
    return str(v)


def read_record(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k] = v
    return out


@dataclass
class RunConfig:
    """Everything needed to repeat a ``cluster`` run."""

    algo: str = "sup_static"
    input: Optional[str] = None
    gen: Optional[str] = None
    gen_params: dict = field(default_factory=dict)
    seed: int = 0
    truth_column: Optional[Union[str, int]] = None
    noise_column: Optional[Union[str, int]] = None
    r: Optional[float] = None
    r_policy: Optional[str] = None       # "valley" or "pct:<q>"
    valley_policy: str = "first"
    bins: Optional[int] = None
    min_prominence: Optional[float] = None
    temp: Optional[str] = None           # "static:<T>" or "dynamic:<s>"
    eps: float = 1e-8
    max_iter: int = 10_000
    merge_tol: float = 1e-4
    mode: str = "sequential"
    normalize: str = "none"
    k: Optional[int] = None
    n_init: int = 1
    linkage: str = "single"
    tseng_p: Optional[int] = None
    trajectory: bool = False
    snapshot_stride: int = 1
    out: Optional[str] = None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "RunConfig":
        data = json.loads(Path(path).read_text())
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)
