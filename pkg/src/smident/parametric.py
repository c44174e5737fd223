"""Linear-in-parameters model families and their fits.

A family is ``f_p(u) = sum_i p_i * phi_i(u)``. Least-squares and minimax
(L_inf on the data) fits are provided, the latter as a linear program with
optional gradient-norm constraints on a grid.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import partial
from itertools import combinations_with_replacement
from typing import Callable, Sequence

import numpy as np
from scipy import linalg, optimize, stats

from .core import Box, Dataset, SmHypotheses
from .envelope import node_grid
from .falsification import Verdict, _REL_TOL

__all__ = [
    "BasisFamily",
    "ParametricModel",
    "ConfidenceBound",
    "Certificate",
    "InfeasibleConstraintError",
    "polynomial_basis",
    "radial_basis",
    "custom_basis",
    "parse_basis",
    "fit_least_squares",
    "fit_linf",
    "pp_falsify",
    "gaussian_delta",
    "suboptimality_certificate",
]

_FD_STEP = 1e-6


class InfeasibleConstraintError(RuntimeError):
    pass


@dataclass(frozen=True)
class BasisFamily:
    """A finite set of scalar basis functions of ``u``.

    ``kind`` is ``"polynomial"``, ``"radial"`` or ``"custom"``. Use the
    constructor helpers rather than building this directly.
    """

    kind: str
    n_u: int
    names: tuple[str, ...]
    _design: Callable = field(repr=False, compare=False)
    _gradient: Callable | None = field(default=None, repr=False, compare=False)
    params: dict = field(default_factory=dict, compare=False)

    @property
    def n_p(self) -> int:
        return len(self.names)

    def _points(self, U) -> np.ndarray:
        U = np.asarray(U, dtype=float)
        if U.ndim <= 1:
            U = U.reshape(-1, self.n_u)
        if U.shape[1] != self.n_u:
            raise ValueError(f"dimension mismatch: expected {self.n_u}, got {U.shape[1]}")
        return U

    def design(self, U) -> np.ndarray:
        """``(N, n_p)`` matrix of basis values."""
        return np.asarray(self._design(self._points(U)), dtype=float)

    def gradient(self, U) -> np.ndarray:
        """``(N, n_p, n_u)`` array of basis gradients."""
        U = self._points(U)
        if self._gradient is not None:
            return np.asarray(self._gradient(U), dtype=float)
        # central differences for user-supplied functions
        grads = np.empty((U.shape[0], self.n_p, self.n_u))
        for i in range(self.n_u):
            step = _FD_STEP * np.maximum(1.0, np.abs(U[:, i]))
            shift = np.zeros_like(U)
            shift[:, i] = step
            diff = self._design(U + shift) - self._design(U - shift)
            grads[:, :, i] = diff / (2 * step[:, None])
        return grads


def polynomial_basis(degree: int, n_u: int = 1) -> BasisFamily:
    """All monomials of total degree ``<= degree`` in ``n_u`` variables."""
    if degree < 0:
        raise ValueError("degree must be >= 0")
    powers = [np.zeros(n_u, dtype=int)]
    names = ["1"]
    for deg in range(1, degree + 1):
        for combo in combinations_with_replacement(range(n_u), deg):
            pw = np.bincount(combo, minlength=n_u)
            powers.append(pw)
            names.append("*".join(f"u{i + 1}^{p}" if p > 1 else f"u{i + 1}"
                                  for i, p in enumerate(pw) if p))
    P = np.array(powers)
    return BasisFamily("polynomial", n_u, tuple(names), partial(_poly_design, P),
                       partial(_poly_gradient, P), {"degree": degree})


def _poly_design(P, U):
    return np.prod(U[:, None, :] ** P[None, :, :], axis=2)


def _poly_gradient(P, U):
    n_u = P.shape[1]
    out = np.zeros((U.shape[0], P.shape[0], n_u))
    for i in range(n_u):
        lowered = P.copy()
        coef = lowered[:, i].astype(float)
        lowered[:, i] = np.maximum(lowered[:, i] - 1, 0)
        out[:, :, i] = coef * np.prod(U[:, None, :] ** lowered[None, :, :], axis=2)
    return out


def radial_basis(centers, width: float, bias: bool = True) -> BasisFamily:
    """Gaussian bumps ``exp(-|u - c|^2 / (2 width^2))``, plus a constant."""
    C = np.atleast_2d(np.asarray(centers, dtype=float))
    if width <= 0:
        raise ValueError("width must be positive")
    names = (("1",) if bias else ()) + tuple(f"rbf{i}" for i in range(C.shape[0]))
    return BasisFamily("radial", C.shape[1], names, partial(_rbf_design, C, width, bias),
                       partial(_rbf_gradient, C, width, bias),
                       {"centers": C.tolist(), "width": width})


def _rbf_design(C, width, bias, U):
    sq = ((U[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
    vals = np.exp(-sq / (2 * width**2))
    return np.column_stack([np.ones(U.shape[0]), vals]) if bias else vals


def _rbf_gradient(C, width, bias, U):
    diff = U[:, None, :] - C[None, :, :]
    vals = np.exp(-(diff**2).sum(axis=2) / (2 * width**2))
    g = -diff / width**2 * vals[:, :, None]
    if bias:
        g = np.concatenate([np.zeros((U.shape[0], 1, C.shape[1])), g], axis=1)
    return g


def custom_basis(
    functions: Sequence[Callable], n_u: int = 1, names: Sequence[str] | None = None
) -> BasisFamily:
    """Wrap scalar callables ``f(u) -> float``; gradients by finite differences."""
    funcs = list(functions)
    if not funcs:
        raise ValueError("need at least one basis function")
    names = tuple(names) if names is not None else tuple(f"f{i}" for i in range(len(funcs)))

    return BasisFamily("custom", n_u, names, partial(_custom_design, tuple(funcs)), None)


def _custom_design(funcs, U):
    return np.array([[f(u) for f in funcs] for u in U], dtype=float).reshape(U.shape[0], len(funcs))


def parse_basis(text: str, n_u: int = 1, box: Box | None = None) -> BasisFamily:
    """Build a family from ``"poly:D"`` or ``"rbf:K[:W]"``.

    ``rbf:K:W`` places ``K`` centers per dimension evenly across ``box``;
    the width defaults to the center spacing.
    """
    kind, _, rest = text.partition(":")
    try:
        if kind in ("poly", "polynomial"):
            return polynomial_basis(int(rest), n_u)
        if kind in ("rbf", "radial"):
            if box is None:
                raise ValueError("radial basis needs a box")
            parts = rest.split(":")
            k = int(parts[0])
            axes = [np.linspace(lo, hi, k) for lo, hi in zip(box.lower, box.upper)]
            centers = np.column_stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")])
            if len(parts) > 1:
                width = float(parts[1])
            else:
                width = float(max(box.widths.max(), 1e-12) / max(k - 1, 1))
            return radial_basis(centers, width)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"invalid basis string {text!r}: {exc}") from None
    raise ValueError(f"unknown basis kind {kind!r} (expected poly:D or rbf:K[:W])")


@dataclass(frozen=True)
class ParametricModel:
    basis: BasisFamily
    p: np.ndarray
    J: float
    residuals: np.ndarray
    cost: str = "ls"

    def __call__(self, U) -> np.ndarray:
        return self.predict(U)

    def predict(self, U) -> np.ndarray:
        return self.basis.design(U) @ self.p

    def gradient(self, U) -> np.ndarray:
        """``(N, n_u)`` gradient of the fitted function."""
        return np.einsum("kpi,p->ki", self.basis.gradient(U), self.p)

    def to_dict(self) -> dict:
        return {
            "basis": list(self.basis.names),
            "cost": self.cost,
            "p": self.p.tolist(),
            "J": self.J,
            "residuals": self.residuals.tolist(),
        }


def _warn_zero_columns(Phi):
    if np.any(np.all(Phi == 0, axis=0)):
        warnings.warn(
            "basis has an all-zero column on the data; using the minimum-norm solution",
            RuntimeWarning,
            stacklevel=3,
        )


def fit_least_squares(d: Dataset, b: BasisFamily) -> ParametricModel:
    """Minimum-norm least-squares fit; ``J`` is the residual sum of squares."""
    Phi = b.design(d.U)
    _warn_zero_columns(Phi)
    p, *_ = np.linalg.lstsq(Phi, d.y, rcond=None)
    r = d.y - Phi @ p
    return ParametricModel(b, p, float(r @ r), r, "ls")


def _min_norm_projection(p, A):
    """Drop the component of ``p`` that ``A`` cannot see."""
    N = linalg.null_space(A)
    if N.size == 0:
        return p
    return p - N @ (N.T @ p)


def _polish_vertex(Phi, y, G, gamma, p, t):
    """Re-solve the active constraints of an LP vertex exactly.

    Returns a refined ``(p, t)`` when it is feasible and no worse, else the
    input.
    """
    scale = max(1.0, float(np.abs(y).max()))
    r = y - Phi @ p
    act = np.abs(np.abs(r) - t) <= 1e-7 * scale
    rows = [np.append(np.sign(r[act])[:, None] * Phi[act], 1.0 * np.ones((act.sum(), 1)), axis=1)]
    rhs = [np.sign(r[act]) * y[act]]
    if G is not None:
        g = G @ p
        gact = np.abs(np.abs(g) - gamma) <= 1e-7 * max(1.0, gamma)
        rows.append(np.append(np.sign(g[gact])[:, None] * G[gact], np.zeros((gact.sum(), 1)), axis=1))
        rhs.append(np.sign(g[gact]) * gamma)
    A = np.vstack(rows)
    sol, *_ = np.linalg.lstsq(A, np.concatenate(rhs), rcond=None)
    p2 = sol[:-1]
    J2 = float(np.abs(y - Phi @ p2).max())
    if G is not None and np.abs(G @ p2).max(initial=0.0) > gamma * (1 + 1e-12):
        return p, t
    if J2 <= float(np.abs(r).max()):
        return p2, J2
    return p, t


def _solve_linf_lp(Phi, y, G, gamma):
    n_p = Phi.shape[1]
    c = np.zeros(n_p + 1)
    c[-1] = 1.0
    ones = np.ones((Phi.shape[0], 1))
    A = [np.hstack([Phi, -ones]), np.hstack([-Phi, -ones])]
    rhs = [y, -y]
    if G is not None:
        zeros = np.zeros((G.shape[0], 1))
        A += [np.hstack([G, zeros]), np.hstack([-G, zeros])]
        rhs += [np.full(G.shape[0], gamma), np.full(G.shape[0], gamma)]
    bounds = [(None, None)] * n_p + [(0, None)]
    res = optimize.linprog(
        c,
        A_ub=np.vstack(A),
        b_ub=np.concatenate(rhs),
        bounds=bounds,
        method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status == 2:
        raise InfeasibleConstraintError("gradient constraint is infeasible")
    if res.status != 0:
        raise RuntimeError(f"minimax LP failed: {res.message}")
    return res.x[:-1], res.x[-1]


def _solve_linf_socp(Phi, y, Gs, gamma):
    import cvxpy as cp

    p = cp.Variable(Phi.shape[1])
    t = cp.Variable()
    cons = [cp.abs(y - Phi @ p) <= t]
    cons += [cp.norm(Gk @ p, 2) <= gamma for Gk in Gs]
    prob = cp.Problem(cp.Minimize(t), cons)
    prob.solve(solver=cp.CLARABEL)
    if prob.status in ("infeasible", "infeasible_inaccurate"):
        raise InfeasibleConstraintError("gradient constraint is infeasible")
    if p.value is None:
        raise RuntimeError(f"minimax SOCP failed: {prob.status}")
    return np.asarray(p.value), float(t.value)


def fit_linf(
    d: Dataset,
    b: BasisFamily,
    gamma: float | None = None,
    constraint_grid=None,
    grid_resolution: int = 101,
) -> ParametricModel:
    """Minimax fit ``min_p max_k |y_k - f_p(u_k)|``.

    With ``gamma`` the fitted gradient norm is kept ``<= gamma`` at every
    point of ``constraint_grid`` (default: a uniform grid over the data
    box). One input dimension gives a linear program solved by dual
    simplex; more dimensions need second-order cone constraints.
    Ties are broken toward the minimum-norm parameter vector along
    directions invisible to both the data and the constraints.
    """
    Phi = b.design(d.U)
    _warn_zero_columns(Phi)
    y = d.y
    G_all = None
    if gamma is not None:
        if gamma < 0:
            raise ValueError("gamma must be nonnegative")
        grid = node_grid(d.box, grid_resolution) if constraint_grid is None else constraint_grid
        G_all = b.gradient(grid)  # (N, n_p, n_u)
    if G_all is None or b.n_u == 1:
        G = None if G_all is None else G_all[:, :, 0]
        p, t = _solve_linf_lp(Phi, y, G, gamma)
        p, t = _polish_vertex(Phi, y, G, gamma, p, t)
        hidden = Phi if G is None else np.vstack([Phi, G])
    else:
        Gs = [G_all[k].T for k in range(G_all.shape[0])]
        p, t = _solve_linf_socp(Phi, y, Gs, gamma)
        hidden = np.vstack([Phi, G_all.transpose(0, 2, 1).reshape(-1, b.n_p)])
    p = _min_norm_projection(p, hidden)
    r = y - Phi @ p
    return ParametricModel(b, p, float(np.abs(r).max()), r, "linf")


@dataclass(frozen=True)
class ConfidenceBound:
    delta: float
    alpha: float | None = None
    sigma: float | None = None

    def __post_init__(self):
        if not (self.delta >= 0):
            raise ValueError("delta must be nonnegative")


def gaussian_delta(sigma: float, alpha: float) -> ConfidenceBound:
    """Half-width of the two-sided ``alpha`` % interval of N(0, sigma^2).

    >>> round(gaussian_delta(1.0, 95).delta, 5)
    1.95996
    """
    if not (0 < alpha < 100):
        raise ValueError("alpha must lie strictly between 0 and 100")
    if not (sigma > 0):
        raise ValueError("sigma must be positive")
    z = stats.norm.ppf(0.5 + alpha / 200.0)
    return ConfidenceBound(float(sigma * z), alpha, sigma)


def pp_falsify(d: Dataset, b: BasisFamily, c: ConfidenceBound | float) -> Verdict:
    """Reject a family when no member fits every sample within ``delta``.

    The margin is ``min_p max_k |residual| - delta``. The witness pairs
    the samples with the most negative and most positive minimax
    residuals.
    """
    delta = c.delta if isinstance(c, ConfidenceBound) else float(c)
    model = fit_linf(d, b)
    margin = model.J - delta
    tol = _REL_TOL * max(1.0, float(np.abs(d.y).max()), delta)
    falsified = margin > tol
    witness = None
    if falsified:
        witness = (int(np.argmin(model.residuals)), int(np.argmax(model.residuals)))
    return Verdict(bool(falsified), float(margin), witness, bool(abs(margin) <= tol))


@dataclass(frozen=True)
class Certificate:
    certified: bool
    J: float
    max_gradient: float
    alpha_bound: float = 2.0

    def to_dict(self) -> dict:
        return {
            "certified": self.certified,
            "alpha_bound": self.alpha_bound,
            "J": self.J,
            "max_gradient": self.max_gradient,
        }


def suboptimality_certificate(
    m: ParametricModel, d: Dataset, h: SmHypotheses, grid_resolution: int = 101
) -> Certificate:
    """Check that ``m`` lies in the feasible set of ``h``.

    Requires ``max_k |y_k - f(u_k)| <= epsilon`` and the gradient norm
    ``<= gamma`` on a uniform grid over the data box. When both hold the
    worst-case error of ``m`` is at most twice the optimal one.
    """
    J = float(np.abs(d.y - m.predict(d.U)).max())
    grid = node_grid(d.box, grid_resolution)
    gmax = float(np.linalg.norm(m.gradient(grid), axis=1).max())
    tol = _REL_TOL * max(1.0, float(np.abs(d.y).max()))
    ok = J <= h.epsilon + tol and gmax <= h.gamma * (1 + 1e-9) + _REL_TOL
    return Certificate(bool(ok), J, gmax)
