"""Interpolants that agree with exact data yet spike arbitrarily high.

Continuity alone says nothing about values between samples: for any
estimate and any ``b`` there is a continuous function through every
sample with value ``b`` at a chosen off-sample point. These helpers build
that function and measure how far it drifts from a given estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial.distance import cdist

from .core import Dataset
from .envelope import lq_function_norm, midpoint_grid, node_grid

__all__ = ["AdversarialInterpolant", "adversarial_interpolant", "demonstrate_unreliability"]


def _merge_duplicates(d: Dataset) -> tuple[np.ndarray, np.ndarray]:
    U, idx, inv = np.unique(d.U, axis=0, return_index=True, return_inverse=True)
    y = d.y[idx]
    if not np.array_equal(y[inv.reshape(-1)], d.y):
        raise ValueError("exact data contain repeated inputs with different outputs")
    return U, y


@dataclass(frozen=True)
class AdversarialInterpolant:
    """Continuous function through the data with value ``b`` at ``spike``.

    One input dimension interpolates linearly through the sorted nodes and
    the spike. Higher dimensions add to an inverse-distance interpolant a
    linear cone bump centered at the spike whose radius is half the
    distance to the nearest node, so the nodes are untouched.
    """

    dataset: Dataset
    spike: np.ndarray
    b: float
    radius: float

    def _base(self, P: np.ndarray) -> np.ndarray:
        U, y = _merge_duplicates(self.dataset)
        dist = cdist(P, U)
        out = np.empty(P.shape[0])
        hit = dist.min(axis=1) == 0
        out[hit] = y[dist[hit].argmin(axis=1)]
        w = 1.0 / dist[~hit] ** 2
        out[~hit] = (w @ y) / w.sum(axis=1)
        return out

    def __call__(self, points) -> np.ndarray:
        n_u = self.dataset.n_u
        P = np.asarray(points, dtype=float).reshape(-1, n_u)
        if n_u == 1:
            U, y = _merge_duplicates(self.dataset)
            xs = np.append(U[:, 0], self.spike[0])
            ys = np.append(y, self.b)
            order = np.argsort(xs)
            out = np.interp(P[:, 0], xs[order], ys[order])
        else:
            base = self._base(P)
            at_spike = self._base(self.spike.reshape(1, -1))[0]
            r = np.linalg.norm(P - self.spike, axis=1)
            out = base + (self.b - at_spike) * np.maximum(0.0, 1.0 - r / self.radius)
        out[np.all(P == self.spike, axis=1)] = self.b
        return out


def adversarial_interpolant(d: Dataset, u_spike, b: float) -> AdversarialInterpolant:
    spike = np.atleast_1d(np.asarray(u_spike, dtype=float))
    if spike.size != d.n_u:
        raise ValueError(f"dimension mismatch: expected {d.n_u}, got {spike.size}")
    nearest = float(np.linalg.norm(d.U - spike, axis=1).min())
    scale = max(1.0, float(np.abs(d.U).max()), float(np.abs(spike).max()))
    if nearest <= 1e-12 * scale:
        raise ValueError("spike point coincides with a data node")
    _merge_duplicates(d)
    return AdversarialInterpolant(d, spike, float(b), nearest / 2)


def _default_spike(d: Dataset) -> np.ndarray:
    box = d.box
    if d.n_u == 1:
        xs = np.unique(d.U[:, 0])
        if xs.size < 2:
            raise ValueError("need two distinct inputs to place a spike inside the box")
        i = int(np.argmax(np.diff(xs)))
        return np.array([(xs[i] + xs[i + 1]) / 2])
    cand = node_grid(box, 21)
    far = np.linalg.norm(cand[:, None, :] - d.U[None, :, :], axis=2).min(axis=1)
    if far.max() == 0:
        raise ValueError("no off-node point inside the data box")
    return cand[int(np.argmax(far))]


def demonstrate_unreliability(
    d: Dataset,
    estimate: Callable,
    b_values,
    u_spike=None,
    grid_resolution: int = 201,
) -> dict:
    """Measure how far spiked interpolants drift from ``estimate``.

    For each ``b`` the report gives the gap at the spike and grid L_1,
    L_2 and L_inf norms of ``interpolant - estimate`` over the data box
    (widened to include the spike if needed). The sup norm is taken on
    the node grid plus the spike point, so it is never below the spike
    gap.
    """
    b_values = [float(b) for b in b_values]
    if not b_values:
        raise ValueError("b_values must be nonempty")
    spike = _default_spike(d) if u_spike is None else np.atleast_1d(np.asarray(u_spike, float))
    box = d.box.extended(spike)
    sup_pts = np.vstack([node_grid(box, grid_resolution), spike])
    finite = not box.degenerate.all()
    mid_pts = midpoint_grid(box, grid_resolution) if finite else None
    est_sup = np.asarray(estimate(sup_pts), dtype=float).reshape(-1)
    est_mid = None if mid_pts is None else np.asarray(estimate(mid_pts), float).reshape(-1)
    est_spike = float(est_sup[-1])
    rows = []
    for b in b_values:
        f = adversarial_interpolant(d, spike, b)
        node_err = float(np.abs(f(d.U) - d.y).max())
        row = {
            "b": b,
            "spike_gap": abs(f(spike.reshape(1, -1))[0] - est_spike),
            "L_inf": lq_function_norm(f(sup_pts) - est_sup, box, math.inf),
            "node_error": node_err,
        }
        if finite:
            diff = f(mid_pts) - est_mid
            row["L_1"] = lq_function_norm(diff, box, 1)
            row["L_2"] = lq_function_norm(diff, box, 2)
        rows.append(row)
    gaps = [r["L_inf"] for r in rows]
    return {
        "spike": spike.tolist(),
        "estimate_at_spike": est_spike,
        "estimate_sup": float(np.abs(est_sup).max()),
        "rows": rows,
        "increasing": all(b > a for a, b in zip(gaps, gaps[1:])),
    }
