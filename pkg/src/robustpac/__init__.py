"""Optimal-error robust PAC learning on finite domains.

Randomized hypotheses (Rademacher randomizations of real predictors) beat the
deterministic-optimal error under malicious, nasty, and agnostic label noise.
This package provides the learners, the conditional-gradient engine they
share, the adversaries and exact lower-bound constructions that certify
tightness, k-wise-independent derandomization, the multiaccuracy/calibration
bridge, and a Monte Carlo harness that reproduces the error constants at desk
scale.
"""

from .core import (
    Concept,
    ConceptClass,
    FiniteDomain,
    FinitePointDistribution,
    JointDistribution,
    LabeledDataset,
    MixtureHypothesis,
    RealPredictor,
    error_rate,
    mixture_eval,
    rad_sample,
)
from .rng import make_rng

__version__ = "0.1.0"

__all__ = [
    "Concept",
    "ConceptClass",
    "FiniteDomain",
    "FinitePointDistribution",
    "JointDistribution",
    "LabeledDataset",
    "MixtureHypothesis",
    "RealPredictor",
    "error_rate",
    "mixture_eval",
    "rad_sample",
    "make_rng",
    "__version__",
]
