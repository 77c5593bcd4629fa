"""Core types shared by the whole package.

Covariate boxes, smoothness parameters, labeled sample sets, reproducible
RNG streams, and CSV ingestion. Everything here is immutable after
construction and safe to share across workers.
"""

import csv
import hashlib
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DomainError",
    "DataError",
    "ConfigError",
    "QueryError",
    "BudgetError",
    "EnvelopeError",
    "SeparationError",
    "Domain",
    "HolderParams",
    "LabeledSample",
    "SampleSet",
    "rng_stream",
    "derive_seed",
    "load_csv",
    "default_quadrature_points",
]


class DomainError(ValueError):
    """A point lies outside the covariate box."""


class DataError(ValueError):
    """A data file is malformed (missing column, bad cell, empty)."""


class ConfigError(ValueError):
    """A configuration value is invalid or unknown."""


class QueryError(RuntimeError):
    """A black-box model query failed or returned a non-finite value."""


class BudgetError(RuntimeError):
    """The labeling budget or pool is exhausted."""


class EnvelopeError(RuntimeError):
    """The rejection-sampling envelope is misconfigured (acceptance collapsed)."""


class SeparationError(RuntimeError):
    """Logistic regression detected (quasi-)perfect separation."""


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box in R^d describing the target covariate region."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi) or len(lo) < 1:
            raise ValueError("lo and hi must be nonempty vectors of equal length")
        for a, b in zip(lo, hi):
            if not (np.isfinite(a) and np.isfinite(b)):
                raise ValueError("domain bounds must be finite")
            if not a < b:
                raise ValueError(f"every coordinate needs lo < hi, got [{a}, {b}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, dim, lo=0.0, hi=1.0):
        return cls((lo,) * dim, (hi,) * dim)

    @property
    def dim(self):
        return len(self.lo)

    def edge_lengths(self):
        return np.asarray(self.hi, float) - np.asarray(self.lo, float)

    def min_edge(self):
        return float(self.edge_lengths().min())

    def max_edge(self):
        return float(self.edge_lengths().max())

    def volume(self):
        return float(np.prod(self.edge_lengths()))

    def contains(self, x):
        """Membership of a point (d,) or batch (m, d); the box is closed."""
        x = np.asarray(x, float)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        ok = (x >= lo) & (x <= hi)
        return ok.all(axis=-1)

    def require(self, x, what="point"):
        """Raise DomainError unless every row of x lies in the box."""
        x = np.atleast_2d(np.asarray(x, float))
        if x.shape[1] != self.dim:
            raise DomainError(f"{what} has dimension {x.shape[1]}, domain has {self.dim}")
        ok = self.contains(x)
        if not ok.all():
            i = int(np.flatnonzero(~ok)[0])
            raise DomainError(f"{what} {i} = {x[i].tolist()} lies outside the domain")

    def uniform(self, count, rng):
        """Draw `count` i.i.d. uniform points on the box."""
        return rng.uniform(np.asarray(self.lo), np.asarray(self.hi), size=(int(count), self.dim))

    def grid(self, points_per_dim):
        """Midpoint-rule grid: cell centers of shape (m^d, d) and the cell volume."""
        m = int(points_per_dim)
        if m < 2:
            raise ValueError("need at least 2 quadrature points per dimension")
        axes = [
            self.lo[j] + (np.arange(m) + 0.5) * (self.hi[j] - self.lo[j]) / m
            for j in range(self.dim)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        centers = np.stack([g.ravel() for g in mesh], axis=1)
        return centers, self.volume() / m**self.dim

    def to_dict(self):
        return {"lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True, order=True)
class HolderParams:
    """Smoothness pair (theta1, theta2): norm scale and exponent in [0, 1].

    Ordering is lexicographic in (theta1, theta2), which is also the
    tie-breaking order used by model selection.
    """

    theta1: float
    theta2: float

    def __post_init__(self):
        t1 = float(self.theta1)
        t2 = float(self.theta2)
        if not np.isfinite(t1) or t1 < 0:
            raise ValueError(f"theta1 must be finite and >= 0, got {t1}")
        if not np.isfinite(t2) or not 0.0 <= t2 <= 1.0:
            raise ValueError(f"theta2 must lie in [0, 1], got {t2}")
        object.__setattr__(self, "theta1", t1)
        object.__setattr__(self, "theta2", t2)

    def as_tuple(self):
        return (self.theta1, self.theta2)


@dataclass(frozen=True)
class LabeledSample:
    """One covariate vector with its scalar response."""

    x: tuple
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in np.atleast_1d(self.x)))
        object.__setattr__(self, "y", float(self.y))


class SampleSet:
    """Labeled samples with train/validation index partitions.

    The index sets must be disjoint subsets of range(len).  Arrays are
    stored read-only so instances can be shared freely.
    """

    def __init__(self, x, y, train_idx=(), val_idx=()):
        x = np.array(x, dtype=float)
        y = np.array(y, dtype=float)
        if x.ndim != 2:
            raise ValueError("x must be a 2-d array of shape (n, d)")
        if y.shape != (x.shape[0],):
            raise ValueError("y must be a vector aligned with the rows of x")
        train_idx = np.array(sorted(int(i) for i in np.asarray(train_idx, int).ravel()))
        val_idx = np.array(sorted(int(i) for i in np.asarray(val_idx, int).ravel()))
        n = x.shape[0]
        for name, idx in (("train_idx", train_idx), ("val_idx", val_idx)):
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise ValueError(f"{name} out of range for {n} samples")
            if idx.size != np.unique(idx).size:
                raise ValueError(f"{name} contains duplicates")
        if np.intersect1d(train_idx, val_idx).size:
            raise ValueError("train_idx and val_idx must be disjoint")
        for arr in (x, y, train_idx, val_idx):
            arr.setflags(write=False)
        self._x = x
        self._y = y
        self._train = train_idx
        self._val = val_idx

    def __len__(self):
        return self._x.shape[0]

    @property
    def dim(self):
        return self._x.shape[1]

    @property
    def x(self):
        return self._x

    @property
    def y(self):
        return self._y

    @property
    def train_idx(self):
        return self._train

    @property
    def val_idx(self):
        return self._val

    @property
    def train_x(self):
        return self._x[self._train]

    @property
    def train_y(self):
        return self._y[self._train]

    @property
    def val_x(self):
        return self._x[self._val]

    @property
    def val_y(self):
        return self._y[self._val]

    def samples(self):
        return [LabeledSample(tuple(row), yi) for row, yi in zip(self._x, self._y)]


_SEED_MASK = (1 << 63) - 1


def _label_words(phase_label):
    digest = hashlib.sha256(str(phase_label).encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def rng_stream(seed, phase_label):
    """Deterministic random stream for one (seed, phase) pair.

    Streams for distinct labels or seeds are statistically independent;
    the same pair always reproduces the same stream.
    """
    entropy = [int(seed) & _SEED_MASK] + _label_words(phase_label)
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(seed, label):
    """Stable integer sub-seed for (seed, label), for nested pipelines."""
    payload = f"{int(seed) & _SEED_MASK}:{label}".encode("utf-8")
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "little") & _SEED_MASK


def load_csv(path, covariates, response=None, allow_empty=False):
    """Read a header-plus-rows CSV into a SampleSet or a bare covariate pool.

    `covariates` names the covariate columns in order; `response`, when
    given, names the response column and the result is a SampleSet with
    empty index partitions (callers split).  Without a response the raw
    (n, d) covariate array is returned.  Malformed input raises DataError
    naming the offending row (1-based, header excluded) and column.
    """
    covariates = list(covariates)
    wanted = covariates + ([response] if response is not None else [])
    if len(set(wanted)) != len(wanted):
        raise DataError("duplicate column names requested")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"empty data: {path} has no header row")
        header = [c.strip() for c in header]
        positions = {}
        for name in wanted:
            if name not in header:
                raise DataError(f"missing column {name!r} in {path} (found {header})")
            positions[name] = header.index(name)
        rows = [row for row in reader if row]
    if not rows and not allow_empty:
        raise DataError(f"empty data: {path} has a header but no rows")

    def cell(row_values, row_number, name):
        j = positions[name]
        if j >= len(row_values):
            raise DataError(f"row {row_number} is too short for column {name!r}")
        text = row_values[j].strip()
        try:
            return float(text)
        except ValueError:
            raise DataError(
                f"non-numeric value {text!r} at row {row_number}, column {name!r}"
            ) from None

    x = np.array(
        [[cell(row, r, name) for name in covariates] for r, row in enumerate(rows, start=1)],
        dtype=float,
    ).reshape(len(rows), len(covariates))
    if response is None:
        x.setflags(write=False)
        return x
    y = np.array([cell(row, r, response) for r, row in enumerate(rows, start=1)], dtype=float)
    return SampleSet(x, y)


def default_quadrature_points(dim):
    """Points per dimension so the full grid stays near 4096 nodes."""
    return int(min(4096, max(8, np.ceil(4096 ** (1.0 / dim)))))
