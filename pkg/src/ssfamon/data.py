"""Dataset ingestion, standardization and covariance estimation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

RIDGE_SCALE = 1e-8
# floor for the temporal ridge when the difference matrix is identically zero
RIDGE_FLOOR = 1e-12
MIN_VARIANCE = 1e-12


@dataclass(frozen=True)
class RawDataset:
    """Named measurement matrix, one row per sample in time order."""

    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError("values must be a 2-D matrix")
        if values.shape[0] < 3:
            raise DataError(f"need at least 3 samples, got {values.shape[0]}")
        if values.shape[1] < 1:
            raise DataError("need at least one variable")
        if len(self.names) != values.shape[1]:
            raise DataError(
                f"{len(self.names)} names for {values.shape[1]} columns")
        bad = np.argwhere(~np.isfinite(values))
        if bad.size:
            r, c = bad[0]
            raise DataError(f"non-finite value at row {r}, column {self.names[c]!r}")
        values.setflags(write=False)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "values", values)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["std"], dtype=float))


@dataclass(frozen=True)
class StandardizedMatrix:
    """Standardized samples ``X`` and their first difference ``Xdot``."""

    X: np.ndarray
    Xdot: np.ndarray

    @classmethod
    def from_array(cls, X: np.ndarray) -> "StandardizedMatrix":
        X = np.asarray(X, dtype=float)
        return cls(X, np.diff(X, axis=0))

    def columns(self, idx) -> "StandardizedMatrix":
        idx = list(idx)
        return StandardizedMatrix(self.X[:, idx], self.Xdot[:, idx])

    @property
    def shape(self) -> tuple[int, int]:
        return self.X.shape


def load_csv(path) -> RawDataset:
    """Read a header-first, comma separated file of finite reals."""
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        names = [h.strip() for h in header]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(names):
                raise DataError(
                    f"{path}:{lineno}: expected {len(names)} fields, got {len(row)}")
            parsed = []
            for name, cell in zip(names, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}:{lineno}: column {name!r}: cannot parse {cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(
                        f"{path}:{lineno}: column {name!r}: non-finite value {cell!r}")
                parsed.append(v)
            rows.append(parsed)
    if not rows:
        raise DataError(f"{path} has no data rows")
    return RawDataset(tuple(names), np.array(rows, dtype=float))


def write_csv(path, data: RawDataset) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(data.names)
        for row in data.values:
            w.writerow([repr(float(v)) for v in row])


def fit_standardizer(data: RawDataset) -> Standardizer:
    X = data.values
    mean = X.mean(axis=0)
    var = X.var(axis=0, ddof=1)
    for name, v in zip(data.names, var):
        if not v > MIN_VARIANCE:
            raise DataError(f"variable {name!r} is (nearly) constant; variance {v:.3g}")
    return Standardizer(mean, np.sqrt(var))


def standardize(data: RawDataset | np.ndarray, s: Standardizer) -> StandardizedMatrix:
    X = data.values if isinstance(data, RawDataset) else np.atleast_2d(np.asarray(data, float))
    if X.shape[1] != s.mean.shape[0]:
        raise DataError(
            f"data has {X.shape[1]} variables, standardizer expects {s.mean.shape[0]}")
    return StandardizedMatrix.from_array((X - s.mean) / s.std)


def temporal_ridge(OmegaDot: np.ndarray) -> float:
    J = OmegaDot.shape[0]
    return max(RIDGE_SCALE * float(np.trace(OmegaDot)) / J, RIDGE_FLOOR)


def second_moment(D: np.ndarray) -> np.ndarray:
    """``DᵀD / (rows)`` with the rows of ``D`` taken as first differences.

    Temporal covariances are second moments about zero normalised by the
    number of samples of the underlying series minus one, so that a
    feature's generalized eigenvalue equals its slowness ``ṡᵀṡ / sᵀs``.
    """
    M = D.T @ D / D.shape[0]
    return 0.5 * (M + M.T)


def covariances(data: StandardizedMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Static covariance and ridge-regularised temporal covariance.

    Returns
    -------
    Omega : (J, J) sample covariance of ``X`` (denominator N-1)
    OmegaDot : (J, J) temporal covariance of ``Xdot`` plus ``eps * I``
    """
    X, Xdot = data.X, data.Xdot
    if X.shape[0] < 3:
        raise DataError("need at least 3 samples")
    Omega = np.atleast_2d(np.cov(X, rowvar=False))
    Omega = 0.5 * (Omega + Omega.T)
    OmegaDot = second_moment(Xdot)
    OmegaDot = OmegaDot + temporal_ridge(OmegaDot) * np.eye(X.shape[1])
    return Omega, OmegaDot
