"""Seeded synthetic truths with known gradient bounds and bounded noise."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .core import Box, Dataset

__all__ = ["SyntheticTruth", "generate", "preset"]


@dataclass(frozen=True)
class SyntheticTruth:
    """A known function ``f_o`` with a certified gradient-norm bound.

    kinds
        ``"sin"``: ``amplitude * sin(frequency * <direction, u> + phase)``.
        ``"polynomial"``: ``sum_i coeffs[i] * u1**i`` (one input).
        ``"radial"``: ``sum_i weights[i] * exp(-|u - c_i|^2 / (2 s_i^2))``.

    ``gamma_o`` is exact for sines and polynomials (given the box) and a
    guaranteed upper bound for radial mixtures.
    """

    kind: str
    params: dict = field(default_factory=dict)
    eps_o: float = 0.0
    seed: int = 0
    noise: str = "uniform"

    def __post_init__(self):
        if self.kind not in ("sin", "polynomial", "radial"):
            raise ValueError(f"unknown truth kind {self.kind!r}")
        if self.eps_o < 0:
            raise ValueError("noise bound must be nonnegative")
        if self.noise not in ("uniform", "truncnorm"):
            raise ValueError("noise must be 'uniform' or 'truncnorm'")

    def __call__(self, U) -> np.ndarray:
        U = np.atleast_2d(np.asarray(U, dtype=float))
        p = self.params
        if self.kind == "sin":
            v = np.asarray(p.get("direction", [1.0] + [0.0] * (U.shape[1] - 1)))
            return p.get("amplitude", 1.0) * np.sin(
                p.get("frequency", 1.0) * (U @ v) + p.get("phase", 0.0)
            )
        if self.kind == "polynomial":
            return np.polynomial.polynomial.polyval(U[:, 0], p["coeffs"])
        C = np.atleast_2d(p["centers"])
        s = np.asarray(p["widths"], dtype=float)
        sq = ((U[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
        return np.exp(-sq / (2 * s**2)) @ np.asarray(p["weights"], dtype=float)

    def gradient(self, U) -> np.ndarray:
        U = np.atleast_2d(np.asarray(U, dtype=float))
        p = self.params
        if self.kind == "sin":
            v = np.asarray(p.get("direction", [1.0] + [0.0] * (U.shape[1] - 1)))
            a, w = p.get("amplitude", 1.0), p.get("frequency", 1.0)
            return (a * w * np.cos(w * (U @ v) + p.get("phase", 0.0)))[:, None] * v
        if self.kind == "polynomial":
            der = np.polynomial.polynomial.polyder(p["coeffs"])
            return np.polynomial.polynomial.polyval(U[:, 0], der)[:, None]
        C = np.atleast_2d(p["centers"])
        s = np.asarray(p["widths"], dtype=float)
        diff = U[:, None, :] - C[None, :, :]
        g = np.exp(-(diff**2).sum(axis=2) / (2 * s**2)) * np.asarray(p["weights"]) / s**2
        return -(g[:, :, None] * diff).sum(axis=1)

    def gamma_o(self, box: Box) -> float:
        """Upper bound on ``max |grad f_o|`` over ``box``."""
        p = self.params
        if self.kind == "sin":
            v = np.asarray(p.get("direction", [1.0] + [0.0] * (box.ndim - 1)), dtype=float)
            return abs(p.get("amplitude", 1.0) * p.get("frequency", 1.0)) * float(
                np.linalg.norm(v)
            )
        if self.kind == "polynomial":
            P = np.polynomial.polynomial
            der = P.polyder(p["coeffs"])
            lo, hi = float(box.lower[0]), float(box.upper[0])
            pts = [lo, hi]
            if len(der) > 1:
                crit = P.polyroots(P.polyder(der)) if len(der) > 2 else []
                pts += [c.real for c in np.atleast_1d(crit) if abs(c.imag) < 1e-12
                        and lo <= c.real <= hi]
            return float(np.abs(P.polyval(np.array(pts), der)).max())
        # each bump's gradient norm peaks at |w| / s * exp(-1/2)
        w = np.abs(np.asarray(p["weights"], dtype=float))
        s = np.asarray(p["widths"], dtype=float)
        return float((w / s).sum() * math.exp(-0.5))

    def noise_samples(self, rng: np.random.Generator, M: int) -> np.ndarray:
        if self.eps_o == 0:
            return np.zeros(M)
        if self.noise == "uniform":
            return rng.uniform(-self.eps_o, self.eps_o, M)
        scale = self.eps_o / 2
        return stats.truncnorm.rvs(-2, 2, scale=scale, size=M, random_state=rng)


def generate(t: SyntheticTruth, M: int, box: Box) -> Dataset:
    """Draw ``M`` uniform inputs in ``box`` and noisy outputs, seeded by ``t.seed``."""
    if M < 1:
        raise ValueError("M must be >= 1")
    rng = np.random.default_rng(t.seed)
    U = rng.uniform(box.lower, box.upper, size=(M, box.ndim))
    d = t.noise_samples(rng, M)
    return Dataset(U, t(U) + d)


def preset(name: str, eps_o: float = 0.0, seed: int = 0) -> SyntheticTruth:
    """Named truths used by the CLI: ``sin``, ``cubic``, ``linear``, ``radial2d``."""
    if name == "sin":
        return SyntheticTruth("sin", {}, eps_o, seed)
    if name == "cubic":
        return SyntheticTruth("polynomial", {"coeffs": [0.0, -1.0, 0.0, 1.0 / 3.0]}, eps_o, seed)
    if name == "linear":
        return SyntheticTruth("polynomial", {"coeffs": [0.0, 1.0]}, eps_o, seed)
    if name == "radial2d":
        params = {
            "centers": [[0.3, 0.3], [0.7, 0.6], [0.4, 0.8]],
            "widths": [0.2, 0.25, 0.15],
            "weights": [1.0, -0.8, 0.5],
        }
        return SyntheticTruth("radial", params, eps_o, seed)
    raise ValueError(f"unknown truth {name!r} (sin, cubic, linear, radial2d)")
