"""scikit-learn compatible estimators.

These wrap the functional API so Set Membership estimation can be used in
pipelines, grid searches and cross-validation like any other regressor.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .core import Dataset, NormSpec, SmHypotheses
from .envelope import band_error, build_envelope
from .falsification import (
    InflationPolicy,
    StreamState,
    falsification_curve,
    stream_update,
)
from .parametric import fit_least_squares, fit_linf, parse_basis, pp_falsify
from .psm import build_psm, psm_error, residual_dataset

__all__ = [
    "SetMembershipRegressor",
    "ParametricRegressor",
    "PSMRegressor",
    "StreamFalsifier",
]


class SetMembershipRegressor(RegressorMixin, BaseEstimator):
    """Central Set Membership estimate with guaranteed bounds.

    Parameters
    ----------
    gamma : float, default=1.0
        Bound on the gradient norm (Lipschitz constant) of the unknown
        function.
    epsilon : float, default=0.0
        Bound on the measurement disturbance.
    q : {1, 2, "inf"}, default="inf"
        Norm used by :meth:`error_report`.
    grid_resolution : int, default=201
        Grid points per box dimension for error evaluation.
    force : bool, default=False
        Fit even if the data falsify ``(gamma, epsilon)``. Predictions are
        then flagged through ``falsified_``.

    Attributes
    ----------
    envelope_ : Envelope
    verdict_ : Verdict
    falsified_ : bool
    box_ : Box

    Examples
    --------
    >>> import numpy as np
    >>> reg = SetMembershipRegressor(gamma=2.0, epsilon=0.1).fit([[0.0], [1.0]], [0.0, 1.0])
    >>> reg.predict([[0.5]])
    array([0.5])
    >>> reg.predict_interval([[0.5]])
    (array([-0.1]), array([1.1]))
    """

    def __init__(self, gamma=1.0, epsilon=0.0, q="inf", grid_resolution=201, force=False):
        self.gamma = gamma
        self.epsilon = epsilon
        self.q = q
        self.grid_resolution = grid_resolution
        self.force = force

    def fit(self, X, y):
        X, y = validate_data(self, X, y, y_numeric=True)
        hyp = SmHypotheses(self.gamma, self.epsilon)
        NormSpec(self.q, self.grid_resolution)
        self.dataset_ = Dataset(X, y)
        self.envelope_ = build_envelope(self.dataset_, hyp, force=self.force)
        self.verdict_ = self.envelope_.verdict
        self.falsified_ = self.envelope_.falsified
        self.box_ = self.envelope_.box
        return self

    def _bounds(self, X):
        check_is_fitted(self, "envelope_")
        X = validate_data(self, X, reset=False)
        return self.envelope_.bounds(X)

    def predict(self, X):
        lo, hi = self._bounds(X)
        return (lo + hi) / 2

    def predict_interval(self, X):
        """Guaranteed ``(lower, upper)`` bounds on the unknown function."""
        return self._bounds(X)

    def error_report(self, q=None, grid_resolution=None):
        check_is_fitted(self, "envelope_")
        norm = NormSpec(
            self.q if q is None else q,
            self.grid_resolution if grid_resolution is None else grid_resolution,
        )
        return band_error(self.envelope_, norm)

    def falsification_curve(self, eps_grid):
        check_is_fitted(self, "dataset_")
        return falsification_curve(self.dataset_, eps_grid)


def _fit_model(dataset, basis, cost, gamma):
    b = parse_basis(basis, dataset.n_u, dataset.box) if isinstance(basis, str) else basis
    if cost == "ls":
        if gamma is not None:
            raise ValueError("a gradient bound is only supported with cost='linf'")
        return fit_least_squares(dataset, b)
    if cost == "linf":
        return fit_linf(dataset, b, gamma=gamma)
    raise ValueError(f"cost must be 'ls' or 'linf', got {cost!r}")


class ParametricRegressor(RegressorMixin, BaseEstimator):
    """Linear-in-parameters regressor with least-squares or minimax fit.

    ``basis`` is a :class:`~smident.parametric.BasisFamily` or a string
    such as ``"poly:2"`` or ``"rbf:5"``. ``gamma`` (minimax only) bounds the
    fitted gradient norm on a grid over the data box.
    """

    def __init__(self, basis="poly:1", cost="linf", gamma=None):
        self.basis = basis
        self.cost = cost
        self.gamma = gamma

    def fit(self, X, y):
        X, y = validate_data(self, X, y, y_numeric=True)
        self.dataset_ = Dataset(X, y)
        self.model_ = _fit_model(self.dataset_, self.basis, self.cost, self.gamma)
        self.coef_ = self.model_.p
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = validate_data(self, X, reset=False)
        return self.model_.predict(X)

    def falsify(self, delta):
        """Test whether any family member fits every sample within ``delta``."""
        check_is_fitted(self, "model_")
        return pp_falsify(self.dataset_, self.model_.basis, delta)


class PSMRegressor(RegressorMixin, BaseEstimator):
    """Parametric fit corrected by a Set Membership residual envelope.

    Parameters
    ----------
    basis, cost, gamma
        Parametric part, as in :class:`ParametricRegressor`.
    gamma_delta, epsilon_delta : float
        SM hypotheses on the residual function.
    q, grid_resolution, force
        As in :class:`SetMembershipRegressor`.
    """

    def __init__(
        self,
        basis="poly:1",
        cost="ls",
        gamma=None,
        gamma_delta=1.0,
        epsilon_delta=0.0,
        q="inf",
        grid_resolution=201,
        force=False,
    ):
        self.basis = basis
        self.cost = cost
        self.gamma = gamma
        self.gamma_delta = gamma_delta
        self.epsilon_delta = epsilon_delta
        self.q = q
        self.grid_resolution = grid_resolution
        self.force = force

    def fit(self, X, y):
        X, y = validate_data(self, X, y, y_numeric=True)
        self.dataset_ = Dataset(X, y)
        self.model_ = _fit_model(self.dataset_, self.basis, self.cost, self.gamma)
        self.residuals_ = residual_dataset(self.dataset_, self.model_)
        hyp = SmHypotheses(self.gamma_delta, self.epsilon_delta)
        self.psm_ = build_psm(self.dataset_, self.model_, hyp, force=self.force)
        self.verdict_ = self.psm_.residual_envelope.verdict
        self.falsified_ = self.psm_.residual_envelope.falsified
        return self

    def _points(self, X):
        check_is_fitted(self)
        return validate_data(self, X, reset=False)

    def predict(self, X):
        X = self._points(X)
        return self.psm_.estimate(X)

    def predict_interval(self, X):
        X = self._points(X)
        return self.psm_.bounds(X)

    def pointwise_error(self, X):
        X = self._points(X)
        return self.psm_.pointwise_error(X)

    def error_report(self, q=None, grid_resolution=None):
        check_is_fitted(self, "psm_")
        norm = NormSpec(
            self.q if q is None else q,
            self.grid_resolution if grid_resolution is None else grid_resolution,
        )
        return psm_error(self.psm_, norm)


class StreamFalsifier(BaseEstimator):
    """Online falsification with hypothesis inflation.

    :meth:`fit` sets the initial data; :meth:`partial_fit` feeds new
    measurements one at a time, logging an event and inflating
    ``(gamma, epsilon)`` whenever a measurement falsifies them.

    Attributes
    ----------
    state_ : StreamState
    gamma_, epsilon_ : float
        Current hypotheses.
    events_ : list of FalsificationEvent
    """

    def __init__(self, gamma=0.1, epsilon=0.01, rho_gamma=1.1, rho_epsilon=1.1, margin=1e-3):
        self.gamma = gamma
        self.epsilon = epsilon
        self.rho_gamma = rho_gamma
        self.rho_epsilon = rho_epsilon
        self.margin = margin

    def _policy(self):
        return InflationPolicy(self.rho_gamma, self.rho_epsilon, self.margin)

    def _sync(self):
        self.gamma_ = self.state_.hyp.gamma
        self.epsilon_ = self.state_.hyp.epsilon
        self.events_ = list(self.state_.events)

    def fit(self, X, y):
        X, y = validate_data(self, X, y, y_numeric=True)
        self.state_ = StreamState.start(
            Dataset(X, y), SmHypotheses(self.gamma, self.epsilon), self._policy()
        )
        self._sync()
        return self

    def partial_fit(self, X, y):
        first = not hasattr(self, "state_")
        X, y = validate_data(self, X, y, y_numeric=True, reset=first)
        if first:
            self.state_ = StreamState.start(
                Dataset(X[:1], y[:1]), SmHypotheses(self.gamma, self.epsilon), self._policy()
            )
            X, y = X[1:], y[1:]
        state = self.state_
        for u, target in zip(X, y):
            state, _ = stream_update(state, (u, target))
        self.state_ = state
        self._sync()
        return self

    def predict(self, X):
        check_is_fitted(self, "state_")
        X = validate_data(self, X, reset=False)
        return self.state_.envelope().central(X)
