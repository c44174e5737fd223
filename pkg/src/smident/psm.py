"""Parametric Set Membership estimation.

A parametric fit ``f_p`` is corrected by a Set Membership envelope built
on its residuals ``y_k - f_p(u_k)``. The combined estimate is
``f_p + residual central`` and the unknown function is bracketed by
``f_p + residual lower`` and ``f_p + residual upper``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, NormSpec, SmHypotheses
from .envelope import Envelope, ErrorReport, Interval, band_error, build_envelope
from .falsification import Verdict, falsify
from .parametric import ParametricModel

__all__ = [
    "ResidualDataset",
    "PsmEstimator",
    "residual_dataset",
    "build_psm",
    "psm_bounds",
    "psm_error",
    "psm_pointwise_error",
    "psm_falsify",
]


@dataclass(frozen=True)
class ResidualDataset:
    base: Dataset
    source: Dataset
    model: ParametricModel


def residual_dataset(d: Dataset, m: ParametricModel) -> ResidualDataset:
    """Pair each input with the model's residual ``y_k - f_p(u_k)``."""
    return ResidualDataset(d.with_outputs(d.y - m.predict(d.U)), d, m)


@dataclass(frozen=True)
class PsmEstimator:
    model: ParametricModel
    residual_envelope: Envelope

    @property
    def n_u(self) -> int:
        return self.residual_envelope.n_u

    def bounds(self, points) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.residual_envelope.bounds(points)
        base = self.model.predict(np.asarray(points, dtype=float).reshape(-1, self.n_u))
        return base + lo, base + hi

    def estimate(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, self.n_u)
        return self.model.predict(pts) + self.residual_envelope.central(pts)

    def pointwise_error(self, points) -> np.ndarray:
        return self.residual_envelope.width(points) / 2


def build_psm(
    d: Dataset, m: ParametricModel, h_delta: SmHypotheses, force: bool = False
) -> PsmEstimator:
    """Wrap ``m`` with a residual envelope over the box of ``d``.

    Raises :class:`~smident.envelope.FalsifiedHypothesesError` when the
    residual data falsify ``h_delta``.
    """
    r = residual_dataset(d, m)
    env = build_envelope(r.base, h_delta, box=d.box, force=force)
    return PsmEstimator(m, env)


def _point(p: PsmEstimator, u) -> np.ndarray:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.ndim != 1 or u.size != p.n_u:
        raise ValueError(f"dimension mismatch: expected {p.n_u}, got {u.size}")
    return u.reshape(1, -1)


def psm_bounds(p: PsmEstimator, u) -> Interval:
    lo, hi = p.bounds(_point(p, u))
    return Interval(float(lo[0]), float(hi[0]), bool(hi[0] < lo[0]))


def psm_error(p: PsmEstimator, n: NormSpec | None = None) -> ErrorReport:
    """Worst-case L_q error; the parametric part cancels from the band."""
    return band_error(p.residual_envelope, n)


def psm_pointwise_error(p: PsmEstimator, u) -> float:
    return float(p.pointwise_error(_point(p, u))[0])


def psm_falsify(r: ResidualDataset, h_delta: SmHypotheses) -> Verdict:
    return falsify(r.base, h_delta)
