"""Lower/upper envelopes, central estimate and worst-case band errors.

For data ``(u_k, y_k)`` and hypotheses ``(gamma, epsilon)``::

    lower(u)   = max_k [(y_k - epsilon) - gamma * |u - u_k|]
    upper(u)   = min_k [(y_k + epsilon) + gamma * |u - u_k|]
    central(u) = (lower(u) + upper(u)) / 2

with Euclidean distances. The worst-case L_q error of the central
estimate over the box U is half the L_q norm of ``upper - lower``.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.spatial.distance import cdist

from .core import Box, Dataset, NormSpec, SmHypotheses

__all__ = [
    "Envelope",
    "ErrorReport",
    "Interval",
    "FalsifiedHypothesesError",
    "build_envelope",
    "evaluate",
    "pointwise_uncertainty",
    "band_error",
    "lq_function_norm",
    "node_grid",
    "midpoint_grid",
    "cone_bounds",
]

# Cap on the number of distance entries held in memory per chunk.
_CHUNK_ENTRIES = 1 << 21
# Grid size above which the per-dimension resolution is reduced.
_MAX_GRID_POINTS = 4_000_000
# Active cells kept per refinement round of the sup-norm search.
_REFINE_CELLS = 256
_REFINE_ROUNDS = 60


class FalsifiedHypothesesError(ValueError):
    """The hypotheses are contradicted by the data."""

    def __init__(self, message, verdict=None):
        super().__init__(message)
        self.verdict = verdict


class Interval(NamedTuple):
    lower: float
    upper: float
    inconsistent: bool = False

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def center(self) -> float:
        return (self.lower + self.upper) / 2


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get("SMIDENT_THREADS", "1")))
    except ValueError:
        return 1


def _check_points(points, n_u: int) -> np.ndarray:
    P = np.asarray(points, dtype=float)
    if P.ndim == 0:
        P = P.reshape(1, 1)
    elif P.ndim == 1:
        P = P.reshape(1, -1) if P.size == n_u else P.reshape(-1, 1)
    if P.shape[1] != n_u:
        raise ValueError(f"dimension mismatch: expected {n_u}, got {P.shape[1]}")
    return P


def cone_bounds(U, y, gamma, epsilon, points) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the lower and upper cone envelopes at ``points``.

    Work is split into row chunks; with ``SMIDENT_THREADS > 1`` the chunks
    are evaluated on a thread pool and reassembled in order, so results
    are identical for any thread count.
    """
    U = np.asarray(U, dtype=float)
    y = np.asarray(y, dtype=float)
    P = _check_points(points, U.shape[1])
    lo_anchor = y - epsilon
    hi_anchor = y + epsilon
    step = max(1, _CHUNK_ENTRIES // max(1, U.shape[0]))

    def chunk(start):
        dist = cdist(P[start : start + step], U)
        if gamma == 0:
            spread = np.zeros_like(dist)
        else:
            spread = gamma * dist
        return (lo_anchor - spread).max(axis=1), (hi_anchor + spread).min(axis=1)

    starts = range(0, P.shape[0], step)
    threads = _thread_count()
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(chunk, starts))
    else:
        parts = [chunk(s) for s in starts]
    if not parts:
        return np.empty(0), np.empty(0)
    return (
        np.concatenate([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
    )


@dataclass(frozen=True)
class Envelope:
    """A dataset bound to SM hypotheses.

    Use :func:`build_envelope` to construct one; it runs the falsification
    check first. ``falsified`` records the outcome when construction was
    forced on contradicted hypotheses.
    """

    dataset: Dataset
    hyp: SmHypotheses
    box: Box = None
    falsified: bool = False
    verdict: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.box is None:
            object.__setattr__(self, "box", self.dataset.box)
        if self.box.ndim != self.dataset.n_u:
            raise ValueError("box dimension does not match the dataset")

    @property
    def n_u(self) -> int:
        return self.dataset.n_u

    def bounds(self, points) -> tuple[np.ndarray, np.ndarray]:
        return cone_bounds(
            self.dataset.U, self.dataset.y, self.hyp.gamma, self.hyp.epsilon, points
        )

    def lower(self, points) -> np.ndarray:
        return self.bounds(points)[0]

    def upper(self, points) -> np.ndarray:
        return self.bounds(points)[1]

    def central(self, points) -> np.ndarray:
        lo, hi = self.bounds(points)
        return (lo + hi) / 2

    def width(self, points) -> np.ndarray:
        lo, hi = self.bounds(points)
        return hi - lo


def build_envelope(
    d: Dataset, h: SmHypotheses, box: Box | None = None, force: bool = False
) -> Envelope:
    """Bind ``d`` to ``h`` after checking that ``h`` is unfalsified.

    Raises :class:`FalsifiedHypothesesError` (carrying the verdict) on
    falsified hypotheses unless ``force`` is set, in which case the
    envelope is flagged instead.
    """
    from .falsification import falsify

    verdict = falsify(d, h)
    if verdict.falsified and not force:
        raise FalsifiedHypothesesError(
            f"hypotheses gamma={h.gamma}, epsilon={h.epsilon} are falsified by the "
            f"data (witness {verdict.witness}, margin {verdict.margin:.6g})",
            verdict,
        )
    return Envelope(d, h, box, falsified=verdict.falsified, verdict=verdict)


def evaluate(e: Envelope, u) -> tuple[float, float, float]:
    """Return ``(lower, central, upper)`` at a single point ``u``."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.ndim != 1 or u.size != e.n_u:
        raise ValueError(f"dimension mismatch: expected {e.n_u}, got {u.size}")
    lo, hi = e.bounds(u.reshape(1, -1))
    lo, hi = float(lo[0]), float(hi[0])
    return lo, (lo + hi) / 2, hi


def pointwise_uncertainty(e: Envelope, u) -> Interval:
    """Guaranteed interval for the unknown function value at ``u``.

    ``inconsistent`` is set when the interval is empty (upper < lower),
    which can only happen on falsified hypotheses.
    """
    lo, _, hi = evaluate(e, u)
    return Interval(lo, hi, hi < lo)


@dataclass(frozen=True)
class ErrorReport:
    q: float
    value: float
    grid_resolution: int
    argmax_point: np.ndarray | None = None
    falsified: bool = False

    def to_dict(self) -> dict:
        return {
            "q": "inf" if math.isinf(self.q) else int(self.q),
            "E_q": self.value,
            "grid_resolution": self.grid_resolution,
            "argmax": None if self.argmax_point is None else self.argmax_point.tolist(),
        }


def _axes(box: Box, n: int, midpoints: bool) -> list[np.ndarray]:
    axes = []
    for lo, hi, degen in zip(box.lower, box.upper, box.degenerate):
        if degen:
            axes.append(np.array([lo]))
        elif midpoints:
            h = (hi - lo) / n
            axes.append(lo + h * (np.arange(n) + 0.5))
        else:
            ax = np.linspace(lo, hi, n)
            ax[-1] = hi
            axes.append(ax)
    return axes


def _mesh(axes: list[np.ndarray]) -> np.ndarray:
    grids = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([g.reshape(-1) for g in grids])


def node_grid(box: Box, n: int) -> np.ndarray:
    """Uniform grid including the box faces, ``n`` points per free dimension."""
    return _mesh(_axes(box, n, midpoints=False))


def midpoint_grid(box: Box, n: int) -> np.ndarray:
    """Centers of the ``n``-per-dimension uniform cell partition of ``box``."""
    return _mesh(_axes(box, n, midpoints=True))


def lq_function_norm(values, box: Box, q) -> float:
    """L_q(box) norm of a field sampled on :func:`midpoint_grid`.

    ``q = inf`` takes the largest magnitude; finite ``q`` uses the
    composite midpoint rule over the nondegenerate volume of ``box``.
    """
    v = np.abs(np.asarray(values, dtype=float).reshape(-1))
    if v.size == 0:
        raise ValueError("empty grid")
    q = NormSpec(q).q
    if math.isinf(q):
        return float(v.max())
    return float((np.mean(v**q) * box.volume) ** (1.0 / q))


def _effective_resolution(box: Box, n: int) -> int:
    free = int((~box.degenerate).sum())
    if free == 0:
        return n
    if n**free <= _MAX_GRID_POINTS:
        return n
    reduced = max(2, int(math.floor(_MAX_GRID_POINTS ** (1.0 / free))))
    warnings.warn(
        f"grid of {n}^{free} points is too large; using {reduced} points per "
        "dimension",
        RuntimeWarning,
        stacklevel=3,
    )
    return reduced


def _refine_sup(e: Envelope, box: Box, n: int, best: float, best_point: np.ndarray):
    """Lipschitz-bounded refinement of the grid maximum of the band width.

    ``upper - lower`` is ``2 * gamma``-Lipschitz, so a cell with center
    value ``w`` and half-diagonal ``r`` cannot exceed ``w + 2 * gamma * r``.
    Cells that may still beat the incumbent are halved along every free
    dimension; the most promising ``_REFINE_CELLS`` are kept per round.
    """
    gamma = e.hyp.gamma
    free = ~box.degenerate
    if gamma == 0 or not free.any():
        return best, best_point
    centers = midpoint_grid(box, n)
    half = np.where(free, box.widths / (2 * n), 0.0)
    values = e.width(centers)
    top = int(np.argmax(values))
    if values[top] > best:
        best, best_point = float(values[top]), centers[top]
    tol = 1e-12 * max(1.0, abs(best), e.hyp.epsilon + gamma * box.diameter)
    offsets = _mesh([np.array([-0.5, 0.5]) if f else np.array([0.0]) for f in free])
    for _ in range(_REFINE_ROUNDS):
        slack = 2 * gamma * float(np.linalg.norm(half))
        keep = values + slack > best + tol
        if not keep.any():
            break
        centers, values = centers[keep], values[keep]
        if centers.shape[0] > _REFINE_CELLS:
            order = np.argsort(-values, kind="stable")[:_REFINE_CELLS]
            centers, values = centers[order], values[order]
        centers = (centers[:, None, :] + offsets[None, :, :] * half).reshape(
            -1, box.ndim
        )
        half = half / 2
        values = e.width(centers)
        top = int(np.argmax(values))
        if values[top] > best:
            best, best_point = float(values[top]), centers[top]
    return best, best_point


def band_error(e: Envelope, n: NormSpec | None = None) -> ErrorReport:
    """Worst-case L_q error of the central estimate over ``e.box``.

    Finite ``q`` integrates ``upper - lower`` with the midpoint rule.
    For ``q = inf`` the band width is maximized on the node grid and the
    maximum is then sharpened by Lipschitz-bounded cell refinement, which
    never lowers the grid value and also reports the maximizer.
    """
    n = n or NormSpec()
    box = e.box
    free = int((~box.degenerate).sum())
    if not math.isinf(n.q):
        if free == 0:
            raise ValueError(
                f"L_{int(n.q)} error is undefined on a zero-volume box"
            )
        if free > 6:
            raise ValueError(
                f"L_{int(n.q)} grid quadrature refused for {free} free dimensions"
            )
    if free > 4:
        warnings.warn(
            f"grid evaluation over {free} dimensions is coarse and expensive",
            RuntimeWarning,
            stacklevel=2,
        )
    res = _effective_resolution(box, n.grid_resolution)
    if math.isinf(n.q):
        nodes = node_grid(box, res)
        widths = e.width(nodes)
        top = int(np.argmax(widths))
        best, point = _refine_sup(e, box, res, float(widths[top]), nodes[top])
        value = max(best, 0.0) / 2
        return ErrorReport(n.q, value, res, np.array(point), e.falsified)
    widths = e.width(midpoint_grid(box, res))
    value = lq_function_norm(np.maximum(widths, 0.0), box, n.q) / 2
    return ErrorReport(n.q, value, res, None, e.falsified)
