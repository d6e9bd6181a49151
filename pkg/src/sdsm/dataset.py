"""In-memory spatial dataset and its CSV representation.

CSV layout: header ``x,y,value,stratum,cov_1,...,cov_p``; an empty ``value``
marks a missing observation and an empty ``stratum`` column means the data
carry no strata. Floats are written with 17 significant digits so a
write/read cycle is exact.
"""
from __future__ import annotations

import csv
import io
import os
import tempfile
import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

FLOAT_FMT = "{:.17g}"


@dataclass(frozen=True, eq=False)
class SpatialDataset:
    """Locations, (partially missing) values, covariates and optional stratum labels.

    ``values`` holds ``NaN`` where an observation is missing.
    """

    coords: np.ndarray
    values: np.ndarray
    covariates: np.ndarray
    strata: np.ndarray | None = None

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        values = np.asarray(self.values, dtype=float).reshape(-1)
        cov = np.asarray(self.covariates, dtype=float)
        if cov.ndim == 1:
            cov = cov[:, None]
        N = len(coords)
        if len(values) != N or len(cov) != N:
            raise DataError(
                f"row counts differ: coords {N}, values {len(values)}, covariates {len(cov)}"
            )
        if not np.all(np.isfinite(coords)):
            raise DataError("coordinates must be finite")
        if not np.all(np.isfinite(cov)):
            raise DataError("covariates must be finite")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "covariates", cov)
        if self.strata is not None:
            s = np.asarray(self.strata).reshape(-1)
            if len(s) != N:
                raise DataError("stratum labels must have one entry per row")
            object.__setattr__(self, "strata", s)

    @property
    def N(self) -> int:
        return len(self.coords)

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    @property
    def observed_mask(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def observed_index(self) -> np.ndarray:
        return np.flatnonzero(self.observed_mask)

    def missing_index(self) -> np.ndarray:
        return np.flatnonzero(~self.observed_mask)

    def take(self, idx) -> np.ndarray:
        """Observed values at row indices ``idx``; the sampler's only route to ``values``."""
        return self.values[idx]

    def locate(self, idx):
        """Coordinates and covariate rows at ``idx`` (no response values)."""
        return self.coords[idx], self.covariates[idx]

    def with_values(self, values) -> "SpatialDataset":
        return SpatialDataset(self.coords, values, self.covariates, self.strata)

    def with_strata(self, strata) -> "SpatialDataset":
        return SpatialDataset(self.coords, self.values, self.covariates, strata)


def _fmt(v) -> str:
    return "" if np.isnan(v) else FLOAT_FMT.format(v)


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_npz(path, **arrays) -> None:
    """Like ``np.savez`` but byte-reproducible (fixed member timestamps) and atomic."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_STORED) as zf:
            for name in sorted(arrays):
                buf = io.BytesIO()
                np.lib.format.write_array(buf, np.asarray(arrays[name]), allow_pickle=False)
                info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
                zf.writestr(info, buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def to_csv_text(ds: SpatialDataset) -> str:
    if ds.coords.shape[1] != 2:
        raise DataError("the CSV layout stores two-dimensional coordinates only")
    buf = io.StringIO()
    buf.write(",".join(["x", "y", "value", "stratum"] + [f"cov_{j + 1}" for j in range(ds.p)]) + "\n")
    strata = ds.strata
    for i in range(ds.N):
        s = "" if strata is None else str(strata[i])
        row = [FLOAT_FMT.format(ds.coords[i, 0]), FLOAT_FMT.format(ds.coords[i, 1]),
               _fmt(ds.values[i]), s]
        row.extend(FLOAT_FMT.format(c) for c in ds.covariates[i])
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def write_csv(ds: SpatialDataset, path) -> None:
    atomic_write_text(path, to_csv_text(ds))


def _parse_label(s: str):
    try:
        return int(s)
    except ValueError:
        return s


def read_csv(path) -> SpatialDataset:
    """Load a dataset written by :func:`write_csv` (or by hand in the same layout)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if header[:4] != ["x", "y", "value", "stratum"]:
            raise DataError(f"{path}: header must start with x,y,value,stratum, got {header[:4]}")
        cov_cols = header[4:]
        for j, name in enumerate(cov_cols):
            if name != f"cov_{j + 1}":
                raise DataError(f"{path}: column {j + 5} should be cov_{j + 1}, got {name!r}")
        width = len(header)
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DataError(f"{path}:{line_no}: expected {width} fields, got {len(row)}")
            rows.append(row)
    if not rows:
        raise DataError(f"{path}: no data rows")
    cols = list(zip(*rows))
    try:
        x = np.array(cols[0], dtype=float)
        y = np.array(cols[1], dtype=float)
        values = np.array([float(v) if v else np.nan for v in cols[2]])
        cov = (np.array(cols[4:], dtype=float).T if cov_cols else np.empty((len(rows), 0)))
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric field ({exc})") from None
    labels = cols[3]
    has = [bool(s) for s in labels]
    if any(has) and not all(has):
        raise DataError(f"{path}: stratum column must be filled on every row or on none")
    strata = np.array([_parse_label(s) for s in labels]) if all(has) else None
    return SpatialDataset(np.column_stack([x, y]), values, cov, strata)
