"""Domain types, CSV ingestion, bounding boxes and dynamic regressors."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence, TextIO

import numpy as np

__all__ = [
    "DataFormatError",
    "Sample",
    "Dataset",
    "Box",
    "SmHypotheses",
    "NormSpec",
    "RegressorConfig",
    "load_dataset",
    "save_dataset",
    "bounding_box",
    "build_regressors",
    "load_config",
    "format_float",
]


class DataFormatError(ValueError):
    """Raised when a CSV or JSON input cannot be parsed.

    ``row`` and ``column`` are 1-based data coordinates (header excluded)
    when the failure can be pinned to a cell.
    """

    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} at {', '.join(where)}"
        super().__init__(message)
        self.row = row
        self.column = column


def format_float(x: float) -> str:
    """Render a float with 17 significant digits (bit-exact round trip)."""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(float(x), ".17g")


def _as_vector(u) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(u, dtype=float))
    if arr.ndim != 1:
        raise ValueError("input point must be a 1-D vector")
    return arr


@dataclass(frozen=True)
class Sample:
    u: tuple[float, ...]
    y: float

    def __post_init__(self):
        u = tuple(float(v) for v in np.atleast_1d(self.u))
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", float(self.y))
        if not all(math.isfinite(v) for v in u) or not math.isfinite(self.y):
            raise ValueError("sample coordinates must be finite")


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[lower(i), upper(i)]``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _as_vector(self.lower).copy()
        hi = _as_vector(self.upper).copy()
        if lo.shape != hi.shape:
            raise ValueError("box bounds must have the same dimension")
        if np.any(lo > hi):
            raise ValueError("box lower bound exceeds upper bound")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def ndim(self) -> int:
        return self.lower.size

    @property
    def degenerate(self) -> np.ndarray:
        """Boolean mask of zero-width dimensions."""
        return self.lower == self.upper

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def volume(self) -> float:
        """Volume of the nondegenerate subspace (1.0 if fully degenerate)."""
        w = self.widths[~self.degenerate]
        return float(np.prod(w)) if w.size else 1.0

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.widths))

    def contains(self, u, atol: float = 0.0) -> bool:
        u = _as_vector(u)
        return bool(np.all(u >= self.lower - atol) and np.all(u <= self.upper + atol))

    def extended(self, u) -> "Box":
        u = _as_vector(u)
        return Box(np.minimum(self.lower, u), np.maximum(self.upper, u))

    def __eq__(self, other):
        if not isinstance(other, Box):
            return NotImplemented
        return np.array_equal(self.lower, other.lower) and np.array_equal(
            self.upper, other.upper
        )

    def __hash__(self):
        return hash((self.lower.tobytes(), self.upper.tobytes()))

    @classmethod
    def parse(cls, text: str) -> "Box":
        """Parse ``"lo,hi"`` or ``"lo1,hi1;lo2,hi2"``."""
        lows, highs = [], []
        for part in text.split(";"):
            lo, hi = (float(v) for v in part.split(","))
            lows.append(lo)
            highs.append(hi)
        return cls(np.array(lows), np.array(highs))


class Dataset:
    """Ordered measurement pairs ``(u_k, y_k)``.

    Stored as an immutable ``(M, n_u)`` input array ``U`` and length-``M``
    output array ``y``. Duplicate inputs are allowed.
    """

    def __init__(self, U, y):
        U = np.array(U, dtype=float)
        y = np.array(y, dtype=float).reshape(-1)
        if U.ndim == 1:
            U = U.reshape(-1, 1) if U.size == y.size else U.reshape(1, -1)
        if U.ndim != 2:
            raise ValueError("inputs must form a 2-D array")
        if U.shape[0] != y.shape[0]:
            raise ValueError(
                f"inconsistent lengths: {U.shape[0]} inputs vs {y.shape[0]} outputs"
            )
        if U.shape[0] < 1:
            raise ValueError("a dataset needs at least one sample")
        if U.shape[1] < 1:
            raise ValueError("inputs need at least one coordinate")
        if not (np.all(np.isfinite(U)) and np.all(np.isfinite(y))):
            raise ValueError("dataset values must be finite")
        U.setflags(write=False)
        y.setflags(write=False)
        self.U = U
        self.y = y

    @classmethod
    def from_samples(cls, samples: Iterable[Sample]) -> "Dataset":
        samples = list(samples)
        if not samples:
            raise ValueError("a dataset needs at least one sample")
        n_u = len(samples[0].u)
        if any(len(s.u) != n_u for s in samples):
            raise ValueError("all samples must share the same input dimension")
        return cls([s.u for s in samples], [s.y for s in samples])

    @property
    def samples(self) -> list[Sample]:
        return [Sample(tuple(u), y) for u, y in zip(self.U, self.y)]

    @property
    def M(self) -> int:
        return self.y.size

    @property
    def n_u(self) -> int:
        return self.U.shape[1]

    def __len__(self):
        return self.M

    @cached_property
    def box(self) -> "Box":
        return bounding_box(self)

    def append(self, u, y) -> "Dataset":
        u = _as_vector(u)
        if u.size != self.n_u:
            raise ValueError(f"expected input of dimension {self.n_u}, got {u.size}")
        return Dataset(np.vstack([self.U, u]), np.append(self.y, float(y)))

    def with_outputs(self, y) -> "Dataset":
        return Dataset(self.U, y)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return np.array_equal(self.U, other.U) and np.array_equal(self.y, other.y)

    def __repr__(self):
        return f"Dataset(M={self.M}, n_u={self.n_u})"


@dataclass(frozen=True)
class SmHypotheses:
    """Gradient bound ``gamma`` and disturbance bound ``epsilon``."""

    gamma: float
    epsilon: float

    def __post_init__(self):
        g, e = float(self.gamma), float(self.epsilon)
        if not (math.isfinite(g) and math.isfinite(e)):
            raise ValueError("gamma and epsilon must be finite")
        if g < 0 or e < 0:
            raise ValueError("gamma and epsilon must be nonnegative")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "epsilon", e)


@dataclass(frozen=True)
class NormSpec:
    q: float = math.inf
    grid_resolution: int = 201

    def __post_init__(self):
        q = self.q
        if isinstance(q, str):
            q = math.inf if q.lower() in ("inf", "infinity") else float(q)
        q = float(q)
        if q not in (1.0, 2.0, math.inf):
            raise ValueError("q must be 1, 2 or inf")
        if int(self.grid_resolution) < 2:
            raise ValueError("grid_resolution must be at least 2")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "grid_resolution", int(self.grid_resolution))


@dataclass(frozen=True)
class RegressorConfig:
    m: int
    input_count: int = 1

    def __post_init__(self):
        if int(self.m) < 1:
            raise ValueError("lag order m must be >= 1")
        if int(self.input_count) < 1:
            raise ValueError("input_count must be >= 1")


def load_dataset(source: TextIO | str) -> Dataset:
    """Parse a ``u1,...,u<n>,y`` CSV stream (or string) into a Dataset."""
    if isinstance(source, str):
        source = io.StringIO(source)
    rows = [r for r in csv.reader(source) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataFormatError("empty file")
    header = [c.strip() for c in rows[0]]
    n_u = len(header) - 1
    expected = [f"u{i}" for i in range(1, n_u + 1)] + ["y"]
    if n_u < 1 or header != expected:
        raise DataFormatError(
            f"malformed header {','.join(header)!r}, expected 'u1,...,u<n>,y'"
        )
    if len(rows) < 2:
        raise DataFormatError("no data rows")
    values = np.empty((len(rows) - 1, n_u + 1))
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != n_u + 1:
            raise DataFormatError(
                f"expected {n_u + 1} cells, found {len(row)}", row=i
            )
        for j, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise DataFormatError(f"non-numeric cell {cell.strip()!r}", i, j) from None
            if not math.isfinite(v):
                raise DataFormatError(f"non-finite cell {cell.strip()!r}", i, j)
            values[i - 1, j - 1] = v
    return Dataset(values[:, :n_u], values[:, n_u])


def save_dataset(d: Dataset, sink: TextIO | None = None) -> str:
    """Write ``d`` as CSV; returns the text as well."""
    out = io.StringIO()
    out.write(",".join([f"u{i}" for i in range(1, d.n_u + 1)] + ["y"]) + "\n")
    for u, y in zip(d.U, d.y):
        out.write(",".join(format_float(v) for v in (*u, y)) + "\n")
    text = out.getvalue()
    if sink is not None:
        sink.write(text)
    return text


def bounding_box(d: Dataset) -> Box:
    return Box(d.U.min(axis=0), d.U.max(axis=0))


def build_regressors(
    y_series: Sequence[float], u_series, cfg: RegressorConfig
) -> Dataset:
    """Turn input/output time series into static regression data.

    The regressor for time ``j`` is::

        [y_{j-1}, ..., y_{j-m},
         u_j(1), ..., u_{j-m}(1), ..., u_j(n_u), ..., u_{j-m}(n_u)]

    paired with output ``y_j``, for ``j = m+1, ..., N``.

    Examples
    --------
    >>> d = build_regressors([1, 2, 3], [[10], [20], [30]], RegressorConfig(m=1))
    >>> d.U.tolist(), d.y.tolist()
    ([[1.0, 20.0, 10.0], [2.0, 30.0, 20.0]], [2.0, 3.0])
    """
    y = np.asarray(y_series, dtype=float).reshape(-1)
    u = np.asarray(u_series, dtype=float)
    if u.ndim == 1:
        u = u.reshape(-1, 1)
    m = int(cfg.m)
    if u.shape[0] != y.size:
        raise ValueError(
            f"mismatched series lengths: {y.size} outputs vs {u.shape[0]} inputs"
        )
    if u.shape[1] != cfg.input_count:
        raise ValueError(
            f"expected {cfg.input_count} input channels, got {u.shape[1]}"
        )
    if y.size <= m:
        raise ValueError(f"series length {y.size} must exceed lag order m={m}")
    rows = []
    for j in range(m, y.size):
        past_y = y[j - m : j][::-1]
        lagged_u = [u[j - m : j + 1, i][::-1] for i in range(u.shape[1])]
        rows.append(np.concatenate([past_y, *lagged_u]))
    return Dataset(np.array(rows), y[m:])


def load_config(source: TextIO | str | dict) -> tuple[SmHypotheses, NormSpec]:
    """Read ``{"gamma", "epsilon", "q", "grid_resolution"}`` JSON."""
    if isinstance(source, dict):
        cfg = source
    else:
        try:
            cfg = json.loads(source if isinstance(source, str) else source.read())
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"invalid JSON config: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise DataFormatError("config must be a JSON object")
    unknown = set(cfg) - {"gamma", "epsilon", "q", "grid_resolution"}
    if unknown:
        raise DataFormatError(f"unknown config keys: {sorted(unknown)}")
    try:
        hyp = SmHypotheses(cfg["gamma"], cfg["epsilon"])
        norm = NormSpec(cfg.get("q", "inf"), cfg.get("grid_resolution", 201))
    except KeyError as exc:
        raise DataFormatError(f"missing config key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise DataFormatError(str(exc)) from None
    return hyp, norm
