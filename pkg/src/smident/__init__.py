"""Set Membership identification with guaranteed error bounds."""

from .adversarial import AdversarialInterpolant, adversarial_interpolant, demonstrate_unreliability
from .core import (
    Box,
    DataFormatError,
    Dataset,
    NormSpec,
    RegressorConfig,
    Sample,
    SmHypotheses,
    bounding_box,
    build_regressors,
    load_config,
    load_dataset,
    save_dataset,
)
from .envelope import (
    Envelope,
    ErrorReport,
    FalsifiedHypothesesError,
    Interval,
    band_error,
    build_envelope,
    evaluate,
    lq_function_norm,
    pointwise_uncertainty,
)
from .estimators import ParametricRegressor, PSMRegressor, SetMembershipRegressor, StreamFalsifier
from .falsification import (
    FalsificationCurve,
    FalsificationEvent,
    InflationPolicy,
    StreamState,
    Verdict,
    datum_consistent,
    falsification_curve,
    falsify,
    falsify_via_envelope,
    stream_update,
)
from .parametric import (
    BasisFamily,
    ConfidenceBound,
    ParametricModel,
    custom_basis,
    fit_least_squares,
    fit_linf,
    gaussian_delta,
    polynomial_basis,
    pp_falsify,
    radial_basis,
    suboptimality_certificate,
)
from .psm import (
    PsmEstimator,
    ResidualDataset,
    build_psm,
    psm_bounds,
    psm_error,
    psm_falsify,
    psm_pointwise_error,
    residual_dataset,
)
from .synth import SyntheticTruth, generate

__version__ = "0.1.0"

__all__ = [
    "adversarial_interpolant",
    "AdversarialInterpolant",
    "band_error",
    "BasisFamily",
    "bounding_box",
    "Box",
    "build_envelope",
    "build_psm",
    "build_regressors",
    "ConfidenceBound",
    "custom_basis",
    "DataFormatError",
    "Dataset",
    "datum_consistent",
    "demonstrate_unreliability",
    "Envelope",
    "ErrorReport",
    "evaluate",
    "falsification_curve",
    "FalsificationCurve",
    "FalsificationEvent",
    "FalsifiedHypothesesError",
    "falsify",
    "falsify_via_envelope",
    "fit_least_squares",
    "fit_linf",
    "gaussian_delta",
    "generate",
    "InflationPolicy",
    "Interval",
    "load_config",
    "load_dataset",
    "lq_function_norm",
    "NormSpec",
    "ParametricModel",
    "ParametricRegressor",
    "pointwise_uncertainty",
    "polynomial_basis",
    "pp_falsify",
    "psm_bounds",
    "psm_error",
    "psm_falsify",
    "psm_pointwise_error",
    "PsmEstimator",
    "PSMRegressor",
    "radial_basis",
    "RegressorConfig",
    "residual_dataset",
    "ResidualDataset",
    "Sample",
    "save_dataset",
    "SetMembershipRegressor",
    "SmHypotheses",
    "stream_update",
    "StreamFalsifier",
    "StreamState",
    "suboptimality_certificate",
    "SyntheticTruth",
    "Verdict",
]
