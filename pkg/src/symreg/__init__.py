"""Wald, likelihood ratio, score and gradient tests for symmetric linear
regression, with Bartlett and Bartlett-type small-sample corrections."""

from .distcore import (
    CorrectionConstants,
    DeltaConstants,
    DistributionKernel,
    ParameterError,
    QuadratureError,
    UnsupportedCorrection,
    correction_constants,
    constants_from_deltas,
    delta_constants,
    delta_oracle,
    kernel,
)

__version__ = "0.1.0"
