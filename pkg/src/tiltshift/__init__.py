"""Covariate-shift regression via a target-penalized auxiliary offset.

The estimator fits an additive pair (predictor, offset) on labeled source
data while penalizing the offset on unlabeled target covariates, and deploys
the predictor alone.  This package provides the closed-form joint solver,
exact population functionals and their identity checks, a Bregman-divergence
generalization, and a reproducible synthetic experiment harness with a CLI.
"""

__version__ = "0.1.0"

from .densities import (  # noqa: F401
    AtomMixture,
    Beta,
    DensityModel,
    ShiftPath,
    TiltedCosine,
    Uniform01,
    interpolate_source,
    pointmass_source,
)
from .features import (  # noqa: F401
    FeatureMap,
    Fourier,
    GaussianRBF,
    ShiftedLegendre,
    Sine,
    Zero,
    design_matrix,
    featurize,
)
from .population import (  # noqa: F401
    PopulationContext,
    TargetFunction,
    auxiliary_excess_risk,
    err_lambda_sq,
    optimal_offset,
    v_weight,
    verify_decomposition,
    w_weight,
)
from .solvers import (  # noqa: F401
    LabeledSample,
    TiltConfig,
    TiltFit,
    UnlabeledSample,
    exact_ratio_weights,
    exact_relative_weights,
    kernel_relative_ratio_fit,
    tilt_fit,
    weighted_ridge_fit,
)
