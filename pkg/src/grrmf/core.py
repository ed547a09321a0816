"""Matrix containers, the factor model and interval-matrix construction.

Dense matrices are plain row-major numpy arrays. Ordinal matrices carry
their level count alongside the data so that downstream code never has to
guess ``N``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from grrmf.errors import StructuralError, ValidationError

__all__ = [
    "OrdinalMatrix",
    "FactorModel",
    "ObservationSet",
    "IntervalMatrix",
    "as_real_matrix",
    "check_thresholds",
    "default_boundary_pad",
    "predict_real",
    "interval_matrix",
    "apply_mask",
    "read_matrix",
    "write_matrix",
    "read_real_matrix",
    "write_real_matrix",
    "read_triplets",
    "write_triplets",
]


def as_real_matrix(x) -> np.ndarray:
    """Return ``x`` as a 2-D float array, rejecting NaN/Inf."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2:
        raise StructuralError(f"expected a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("real matrix contains non-finite entries")
    return arr


def check_thresholds(thresholds) -> np.ndarray:
    tau = np.atleast_1d(np.asarray(thresholds, dtype=float))
    if tau.ndim != 1 or tau.size == 0:
        raise ValidationError("thresholds must be a non-empty vector")
    if not np.all(np.isfinite(tau)):
        raise ValidationError("thresholds must be finite")
    if tau.size > 1 and not np.all(np.diff(tau) > 0):
        raise ValidationError(f"thresholds must be strictly ascending, got {tau.tolist()}")
    return tau


def default_boundary_pad(thresholds) -> float:
    tau = check_thresholds(thresholds)
    return 10.0 * (tau[-1] - tau[0] + 1.0)


@dataclass(frozen=True)
class OrdinalMatrix:
    """Dense ``n x m`` matrix with entries in ``{0, ..., n_levels}``."""

    data: np.ndarray
    n_levels: int

    def __post_init__(self):
        data = np.array(self.data, dtype=np.int64, copy=True)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValidationError(f"ordinal matrix must be a non-empty 2-D array, got shape {data.shape}")
        if int(self.n_levels) < 1:
            raise ValidationError("n_levels must be >= 1")
        if data.min() < 0 or data.max() > self.n_levels:
            raise ValidationError(
                f"entries must lie in 0..{self.n_levels}, found range {data.min()}..{data.max()}"
            )
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "n_levels", int(self.n_levels))

    @classmethod
    def from_array(cls, data, n_levels: int | None = None) -> "OrdinalMatrix":
        data = np.asarray(data)
        if n_levels is None:
            n_levels = max(1, int(data.max()))
        return cls(data, n_levels)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def n_cols(self) -> int:
        return self.data.shape[1]

    @property
    def T(self) -> "OrdinalMatrix":
        return OrdinalMatrix(self.data.T, self.n_levels)

    def __eq__(self, other):
        if not isinstance(other, OrdinalMatrix):
            return NotImplemented
        return self.n_levels == other.n_levels and np.array_equal(self.data, other.data)

    def __hash__(self):
        return hash((self.n_levels, self.data.shape, self.data.tobytes()))


@dataclass(frozen=True)
class FactorModel:
    """Factors ``U`` (n x k), ``V`` (m x k) and ascending thresholds."""

    u: np.ndarray
    v: np.ndarray
    thresholds: np.ndarray

    def __post_init__(self):
        u = as_real_matrix(self.u)
        v = as_real_matrix(self.v)
        if u.shape[1] != v.shape[1]:
            raise StructuralError(f"rank mismatch: u has {u.shape[1]} columns, v has {v.shape[1]}")
        tau = check_thresholds(self.thresholds)
        for name, arr in (("u", u), ("v", v), ("thresholds", tau)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def rank(self) -> int:
        return self.u.shape[1]

    @property
    def n_levels(self) -> int:
        return self.thresholds.size

    @property
    def shape(self) -> tuple[int, int]:
        return (self.u.shape[0], self.v.shape[0])


def predict_real(model: FactorModel) -> np.ndarray:
    """Real matrix ``X = U V^T``."""
    if model.u.shape[1] != model.v.shape[1]:
        raise StructuralError("u and v ranks differ")
    return model.u @ model.v.T


@dataclass(frozen=True)
class ObservationSet:
    """Sparse ``(row, col, value)`` triplets with a train/validation tag.

    ``is_validation[e]`` marks entry ``e`` as held out from training.
    """

    shape: tuple[int, int]
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    is_validation: np.ndarray = None
    n_levels: int | None = None

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64).ravel()
        cols = np.asarray(self.cols, dtype=np.int64).ravel()
        values = np.asarray(self.values, dtype=np.int64).ravel()
        if not (rows.size == cols.size == values.size):
            raise StructuralError("rows, cols and values must have equal length")
        if self.is_validation is None:
            is_val = np.zeros(rows.size, dtype=bool)
        else:
            is_val = np.asarray(self.is_validation, dtype=bool).ravel()
            if is_val.size != rows.size:
                raise StructuralError("split tag length differs from entry count")
        n, m = (int(s) for s in self.shape)
        if rows.size:
            if rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= m:
                raise ValidationError(f"observation index outside {n}x{m}")
            flat = rows * m + cols
            if np.unique(flat).size != flat.size:
                raise ValidationError("duplicate (row, col) pairs in observation set")
        if self.n_levels is not None and values.size and (values.min() < 0 or values.max() > self.n_levels):
            raise ValidationError(f"observed values outside 0..{self.n_levels}")
        for name, arr in (("rows", rows), ("cols", cols), ("values", values), ("is_validation", is_val)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "shape", (n, m))

    def __len__(self):
        return self.rows.size

    @classmethod
    def full(cls, y: OrdinalMatrix) -> "ObservationSet":
        n, m = y.shape
        rows, cols = np.divmod(np.arange(n * m), m)
        return cls((n, m), rows, cols, y.data.ravel(), n_levels=y.n_levels)

    @property
    def train_mask(self) -> np.ndarray:
        return ~self.is_validation

    def subset(self, mask) -> "ObservationSet":
        mask = np.asarray(mask, dtype=bool)
        return ObservationSet(
            self.shape, self.rows[mask], self.cols[mask], self.values[mask], self.is_validation[mask], self.n_levels
        )

    def train(self) -> "ObservationSet":
        return self.subset(self.train_mask)

    def validation(self) -> "ObservationSet":
        return self.subset(self.is_validation)

    def with_split(self, is_validation) -> "ObservationSet":
        return ObservationSet(self.shape, self.rows, self.cols, self.values, is_validation, self.n_levels)

    def as_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[self.rows, self.cols] = True
        return mask

    def entries(self) -> list[tuple[int, int, int]]:
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.values.tolist()))


@dataclass(frozen=True)
class IntervalMatrix:
    """Per-entry real intervals ``[lower, upper]`` implied by levels and thresholds."""

    lower: np.ndarray
    upper: np.ndarray
    boundary_pad: float

    @property
    def lengths(self) -> np.ndarray:
        return self.upper - self.lower


def level_bounds(levels, thresholds, boundary_pad: float) -> tuple[np.ndarray, np.ndarray]:
    """Lower/upper interval bounds for an array of levels."""
    tau = check_thresholds(thresholds)
    levels = np.asarray(levels, dtype=np.int64)
    n_thr = tau.size
    if levels.size and (levels.min() < 0 or levels.max() > n_thr):
        raise ValidationError(f"levels must lie in 0..{n_thr}")
    padded = np.concatenate([[tau[0] - boundary_pad], tau, [tau[-1] + boundary_pad]])
    return padded[levels], padded[levels + 1]


def interval_matrix(y: OrdinalMatrix, thresholds, boundary_pad: float | None = None) -> IntervalMatrix:
    """Build the interval matrix of ``y`` under ``thresholds``.

    Level ``v`` in ``1..N-1`` maps to ``[tau_v, tau_{v+1}]``; levels 0 and N are
    closed off with ``boundary_pad``.
    """
    tau = check_thresholds(thresholds)
    if boundary_pad is None:
        boundary_pad = default_boundary_pad(tau)
    if not boundary_pad > 0:
        raise ValidationError("boundary_pad must be positive")
    if y.n_levels != tau.size:
        raise ValidationError(f"matrix has N={y.n_levels} but {tau.size} thresholds were given")
    lower, upper = level_bounds(y.data, tau, boundary_pad)
    for arr in (lower, upper):
        arr.setflags(write=False)
    return IntervalMatrix(lower, upper, float(boundary_pad))


def apply_mask(y: OrdinalMatrix, fraction: float, seed: int, exclude=None) -> ObservationSet:
    """Sample an observation set covering ``fraction`` of the entries.

    One entry per row and per column is drawn first so that every row and
    column is observed; the remainder is filled uniformly at random.
    ``exclude`` (boolean ``n x m``) removes entries from the candidate pool;
    the target count is still ``round(fraction * n * m)`` capped by the pool.
    """
    if not (0 < fraction <= 1):
        raise ValidationError(f"fraction must lie in (0, 1], got {fraction}")
    n, m = y.shape
    allowed = np.ones((n, m), dtype=bool) if exclude is None else ~np.asarray(exclude, dtype=bool)
    pool = int(allowed.sum())
    target = min(int(round(fraction * n * m)), pool)
    if target < n + m:
        warnings.warn(
            f"{target} observations for a {n}x{m} matrix; some rows or columns may stay unobserved",
            stacklevel=2,
        )
    rng = np.random.default_rng(seed)
    chosen = np.zeros((n, m), dtype=bool)
    count = 0
    for i in rng.permutation(n):
        if count >= target:
            break
        cand = np.flatnonzero(allowed[i] & ~chosen[i])
        if cand.size and not chosen[i].any():
            chosen[i, rng.choice(cand)] = True
            count += 1
    for j in rng.permutation(m):
        if count >= target:
            break
        if chosen[:, j].any():
            continue
        cand = np.flatnonzero(allowed[:, j] & ~chosen[:, j])
        if cand.size:
            chosen[rng.choice(cand), j] = True
            count += 1
    rest = np.flatnonzero((allowed & ~chosen).ravel())
    extra = rng.choice(rest, size=target - count, replace=False)
    chosen.ravel()[extra] = True
    rows, cols = np.nonzero(chosen)
    return ObservationSet((n, m), rows, cols, y.data[rows, cols], n_levels=y.n_levels)


# -- text formats -----------------------------------------------------------


def _data_lines(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror or exc}") from None
    for raw in text.splitlines():
        line = raw.strip()
        if line and not line.startswith("#"):
            yield line


def read_matrix(path) -> OrdinalMatrix:
    """Read the dense ordinal format: header ``n m N`` then ``n`` rows."""
    lines = list(_data_lines(path))
    if not lines:
        raise ValidationError(f"{path}: empty matrix file")
    try:
        n, m, n_levels = (int(t) for t in lines[0].split())
        rows = [[int(t) for t in line.split()] for line in lines[1:]]
    except ValueError as exc:
        raise ValidationError(f"{path}: malformed ordinal matrix ({exc})") from None
    if len(rows) != n or any(len(r) != m for r in rows):
        raise ValidationError(f"{path}: expected {n} rows of {m} integers")
    return OrdinalMatrix(np.array(rows, dtype=np.int64).reshape(n, m), n_levels)


def write_matrix(y: OrdinalMatrix, path) -> None:
    n, m = y.shape
    lines = [f"{n} {m} {y.n_levels}"]
    lines += [" ".join(str(int(v)) for v in row) for row in y.data]
    Path(path).write_text("\n".join(lines) + "\n")


def read_real_matrix(path) -> np.ndarray:
    lines = list(_data_lines(path))
    try:
        n, m = (int(t) for t in lines[0].split())
        data = np.array([[float(t) for t in line.split()] for line in lines[1:]])
    except (ValueError, IndexError) as exc:
        raise ValidationError(f"{path}: malformed real matrix ({exc})") from None
    if data.shape != (n, m):
        raise ValidationError(f"{path}: expected {n}x{m} entries, got {data.shape}")
    return as_real_matrix(data)


def write_real_matrix(x, path) -> None:
    x = as_real_matrix(x)
    lines = [f"{x.shape[0]} {x.shape[1]}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in x]
    Path(path).write_text("\n".join(lines) + "\n")


def read_triplets(path, shape=None, n_levels=None) -> ObservationSet:
    """Read ``row col value`` lines (0-indexed) into an observation set."""
    rows, cols, vals = [], [], []
    for lineno, line in enumerate(_data_lines(path), start=1):
        parts = line.split()
        if len(parts) != 3:
            raise ValidationError(f"{path}:{lineno}: expected 'row col value', got {line!r}")
        try:
            r, c, v = (int(p) for p in parts)
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: non-integer field in {line!r}") from None
        rows.append(r)
        cols.append(c)
        vals.append(v)
    if shape is None:
        shape = (max(rows, default=-1) + 1, max(cols, default=-1) + 1)
    return ObservationSet(shape, rows, cols, vals, n_levels=n_levels)


def write_triplets(obs: ObservationSet, path) -> None:
    lines = [f"{r} {c} {v}" for r, c, v in obs.entries()]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
