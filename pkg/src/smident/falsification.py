"""Falsification of SM hypotheses, the falsification curve and stream updates.

Hypotheses ``(gamma, epsilon)`` are falsified by data exactly when some
ordered pair of samples ``(j, k)`` satisfies::

    y_k - y_j - 2 * epsilon > gamma * |u_k - u_j|

i.e. no gamma-Lipschitz function passes within ``epsilon`` of every sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.distance import cdist

from .core import Box, Dataset, Sample, SmHypotheses, _as_vector, format_float
from .envelope import Envelope, cone_bounds

__all__ = [
    "Verdict",
    "FalsificationCurve",
    "FalsificationEvent",
    "InflationPolicy",
    "StreamState",
    "StreamError",
    "falsify",
    "falsify_via_envelope",
    "falsification_curve",
    "datum_consistent",
    "stream_update",
    "minimal_inflation",
]

_REL_TOL = 1e-12
_ROW_BLOCK = 1 << 20


@dataclass(frozen=True)
class Verdict:
    """Outcome of a falsification test.

    ``witness`` is the 0-based ordered pair ``(j, k)`` with the largest
    violation ``margin``; it is only set for falsified hypotheses.
    ``boundary`` flags a worst margin within tolerance of zero, which is
    classified as unfalsified.
    """

    falsified: bool
    margin: float
    witness: tuple[int, int] | None = None
    boundary: bool = False

    def to_dict(self) -> dict:
        return {
            "falsified": self.falsified,
            "witness": None if self.witness is None else list(self.witness),
            "margin": self.margin if math.isfinite(self.margin) else format_float(self.margin),
            "boundary": self.boundary,
        }


def _scale(U: np.ndarray, y: np.ndarray, h: SmHypotheses) -> float:
    diam = float(np.linalg.norm(U.max(axis=0) - U.min(axis=0)))
    return max(1.0, float(np.abs(y).max()), h.epsilon, h.gamma * diam)


def _tolerance(U, y, h) -> float:
    return _REL_TOL * _scale(U, y, h)


def _verdict(margin: float, pair, tol: float) -> Verdict:
    falsified = margin > tol
    return Verdict(
        falsified=bool(falsified),
        margin=margin,
        witness=(int(pair[0]), int(pair[1])) if falsified else None,
        boundary=bool(abs(margin) <= tol),
    )


def _worst_pair(U: np.ndarray, y: np.ndarray, h: SmHypotheses):
    """Largest ``y_k - y_j - 2 eps - gamma |u_k - u_j|`` over ``j != k``."""
    M = y.size
    if M < 2:
        return -math.inf, None
    best, pair = -math.inf, None
    step = max(1, _ROW_BLOCK // M)
    for start in range(0, M, step):
        rows = slice(start, min(M, start + step))
        dist = cdist(U[rows], U)
        margin = (y[None, :] - y[rows, None]) - 2 * h.epsilon
        if h.gamma != 0:
            margin = margin - h.gamma * dist
        idx = np.arange(rows.start, rows.stop)
        margin[idx - start, idx] = -math.inf
        flat = int(np.argmax(margin))
        j, k = divmod(flat, M)
        if margin[j, k] > best:
            best, pair = float(margin[j, k]), (start + j, k)
    return best, pair


def falsify(d: Dataset, h: SmHypotheses) -> Verdict:
    """Exact test of whether ``h`` is contradicted by ``d``.

    Examples
    --------
    >>> d = Dataset([[0.0], [1.0]], [0.0, 4.0])
    >>> v = falsify(d, SmHypotheses(gamma=1, epsilon=1))
    >>> v.falsified, v.witness, v.margin
    (True, (0, 1), 1.0)
    """
    margin, pair = _worst_pair(d.U, d.y, h)
    return _verdict(margin, pair, _tolerance(d.U, d.y, h))


def falsify_via_envelope(d: Dataset, h: SmHypotheses) -> Verdict:
    """Falsification through the upper envelope evaluated at the data.

    ``h`` is falsified iff ``upper(u_k) < y_k - epsilon`` for some ``k``.
    The decision uses the full upper envelope; the boundary flag and the
    witness look at the cones of the other samples only, since a sample's
    own cone never binds.
    """
    U, y = d.U, d.y
    tol = _tolerance(U, y, h)
    upper = cone_bounds(U, y, h.gamma, h.epsilon, U)[1]
    excess = (y - h.epsilon) - upper
    k = int(np.argmax(excess))
    if excess[k] > tol:
        cones = (y + h.epsilon) + h.gamma * cdist(U[k : k + 1], U)[0]
        cones[k] = math.inf
        j = int(np.argmin(cones))
        return Verdict(True, float(excess[k]), (j, k), bool(abs(excess[k]) <= tol))
    if y.size < 2:
        return Verdict(False, -math.inf)
    worst = -math.inf
    step = max(1, _ROW_BLOCK // y.size)
    for start in range(0, y.size, step):
        rows = slice(start, min(y.size, start + step))
        cones = (y[None, :] + h.epsilon) + h.gamma * cdist(U[rows], U)
        idx = np.arange(rows.start, rows.stop)
        cones[idx - start, idx] = math.inf
        worst = max(worst, float(((y[rows] - h.epsilon) - cones.min(axis=1)).max()))
    return Verdict(False, worst, None, bool(abs(worst) <= tol))


@dataclass(frozen=True)
class FalsificationCurve:
    """Minimal unfalsified ``gamma`` for each ``epsilon`` of a grid."""

    epsilon: np.ndarray
    gamma_star: np.ndarray

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.epsilon.tolist(), self.gamma_star.tolist()))

    def to_csv(self) -> str:
        lines = ["epsilon,gamma_star"]
        lines += [
            f"{format_float(e)},{format_float(g)}"
            for e, g in zip(self.epsilon, self.gamma_star)
        ]
        return "\n".join(lines) + "\n"


def _pair_table(d: Dataset):
    """Absolute output gaps and input distances over unordered pairs."""
    M = d.M
    if M < 2:
        return np.empty(0), np.empty(0)
    j, k = np.triu_indices(M, 1)
    gaps = np.abs(d.y[k] - d.y[j])
    dists = np.linalg.norm(d.U[k] - d.U[j], axis=1)
    return gaps, dists


def falsification_curve(d: Dataset, eps_grid) -> FalsificationCurve:
    """Trace ``gamma*(epsilon)`` in closed form.

    For each ``epsilon``, ``gamma*`` is the largest ``(|dy| - 2 eps) / |du|``
    over pairs with distinct inputs, clamped at zero, or ``inf`` when two
    samples with identical inputs differ by more than ``2 eps``.
    """
    eps = np.asarray(eps_grid, dtype=float).reshape(-1)
    if eps.size == 0:
        raise ValueError("eps_grid must be nonempty")
    if np.any(eps < 0) or not np.all(np.isfinite(eps)):
        raise ValueError("eps_grid values must be finite and nonnegative")
    if np.any(np.diff(eps) < 0):
        raise ValueError("eps_grid must be sorted ascending")
    gaps, dists = _pair_table(d)
    gamma = np.zeros(eps.size)
    if gaps.size:
        same = dists == 0
        dup_gap = gaps[same].max() if same.any() else -math.inf
        g, r = gaps[~same], dists[~same]
        for i, e in enumerate(eps):
            if dup_gap > 2 * e:
                gamma[i] = math.inf
            elif g.size:
                gamma[i] = max(0.0, float(((g - 2 * e) / r).max()))
    return FalsificationCurve(eps, gamma)


def datum_consistent(e: Envelope, u, y: float) -> bool:
    """Whether appending ``(u, y)`` keeps the envelope's hypotheses unfalsified.

    Assumes the envelope's own data are unfalsified. The datum is consistent
    iff ``lower(u) - eps <= y <= upper(u) + eps``, with the same tolerance
    as :func:`falsify`.
    """
    u = _as_vector(u)
    if u.size != e.n_u:
        raise ValueError(f"dimension mismatch: expected {e.n_u}, got {u.size}")
    y = float(y)
    eps = e.hyp.epsilon
    lo, hi = e.bounds(u.reshape(1, -1))
    U = np.vstack([e.dataset.U, u])
    ys = np.append(e.dataset.y, y)
    tol = _tolerance(U, ys, e.hyp)
    return bool((lo[0] - eps) - y <= tol and y - (hi[0] + eps) <= tol)


@dataclass(frozen=True)
class InflationPolicy:
    """How hypotheses grow after a falsification event.

    Both bounds are multiplied by their factors ``rho`` until the
    accumulated data stop falsifying them; the result is then pulled back
    along the same path to the falsification boundary and pushed inside
    by the relative ``margin``.
    """

    rho_gamma: float = 1.1
    rho_epsilon: float = 1.1
    margin: float = 1e-3
    max_steps: int = 10_000

    def __post_init__(self):
        if self.rho_gamma < 1 or self.rho_epsilon < 1:
            raise ValueError("inflation factors must be >= 1")
        if max(self.rho_gamma, self.rho_epsilon) == 1:
            raise ValueError("at least one inflation factor must exceed 1")
        if self.margin <= 0:
            raise ValueError("margin must be positive")

    def at(self, h: SmHypotheses, t: float) -> SmHypotheses:
        return SmHypotheses(h.gamma * self.rho_gamma**t, h.epsilon * self.rho_epsilon**t)


class StreamError(RuntimeError):
    """The inflation policy cannot restore unfalsified hypotheses."""


def minimal_inflation(d: Dataset, h: SmHypotheses, policy: InflationPolicy) -> SmHypotheses:
    """Smallest inflation of ``h`` (plus margin) left unfalsified by ``d``."""

    def bad(t):
        try:
            return falsify(d, policy.at(h, t)).falsified
        except (OverflowError, ValueError):
            raise StreamError(
                f"inflating gamma={h.gamma}, epsilon={h.epsilon} overflows before "
                "the data stop falsifying them"
            ) from None

    if not bad(0.0):
        return h
    grows = (h.gamma > 0 and policy.rho_gamma > 1) or (h.epsilon > 0 and policy.rho_epsilon > 1)
    if not grows:
        raise StreamError(f"gamma={h.gamma}, epsilon={h.epsilon} cannot be inflated")
    # exponential search over the integer step count, then bisection
    lo, hi = 0.0, 1.0
    while bad(hi):
        lo, hi = hi, 2 * hi
        if hi > policy.max_steps:
            raise StreamError(
                f"no unfalsified hypotheses within {policy.max_steps} inflation steps "
                f"from gamma={h.gamma}, epsilon={h.epsilon}"
            )
    for _ in range(80):
        mid = (lo + hi) / 2
        if mid in (lo, hi):
            break
        if bad(mid):
            lo = mid
        else:
            hi = mid
    edge = policy.at(h, hi)
    return SmHypotheses(edge.gamma * (1 + policy.margin), edge.epsilon * (1 + policy.margin))


@dataclass(frozen=True)
class FalsificationEvent:
    index: int
    datum: Sample
    before: SmHypotheses
    after: SmHypotheses

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "u": list(self.datum.u),
            "y": self.datum.y,
            "gamma_before": self.before.gamma,
            "epsilon_before": self.before.epsilon,
            "gamma_after": self.after.gamma,
            "epsilon_after": self.after.epsilon,
        }


@dataclass(frozen=True)
class StreamState:
    """Accumulated data, current hypotheses and the event log."""

    dataset: Dataset
    hyp: SmHypotheses
    events: tuple[FalsificationEvent, ...] = ()
    policy: InflationPolicy = field(default_factory=InflationPolicy)

    @property
    def box(self) -> Box:
        return self.dataset.box

    @classmethod
    def start(
        cls, d: Dataset, h: SmHypotheses, policy: InflationPolicy | None = None
    ) -> "StreamState":
        """Initial state; ``h`` is inflated first if ``d`` already falsifies it."""
        policy = policy or InflationPolicy()
        return cls(d, minimal_inflation(d, h, policy), (), policy)

    def envelope(self) -> Envelope:
        return Envelope(self.dataset, self.hyp)


def stream_update(s: StreamState, datum) -> tuple[StreamState, FalsificationEvent | None]:
    """Absorb one measurement.

    The datum is always appended. If it is inconsistent with the current
    hypotheses an event is logged and the hypotheses are inflated until the
    whole accumulated dataset is unfalsified again.
    """
    if not isinstance(datum, Sample):
        u, y = datum
        datum = Sample(tuple(np.atleast_1d(np.asarray(u, dtype=float))), y)
    u = np.asarray(datum.u)
    consistent = datum_consistent(s.envelope(), u, datum.y)
    data = s.dataset.append(u, datum.y)
    if consistent:
        return replace(s, dataset=data), None
    new = minimal_inflation(data, s.hyp, s.policy)
    if new == s.hyp:
        # inconsistent only within rounding of the tie tolerance
        return replace(s, dataset=data), None
    event = FalsificationEvent(data.M - 1, datum, s.hyp, new)
    return StreamState(data, new, s.events + (event,), s.policy), event
