"""Empirical-risk-minimization oracles.

The base oracle is an exact agreement scan over the explicit class.  Weighted
ERM is available two ways: an exact weighted scan (the default for explicit
classes) and the classic sampling reduction that turns one unweighted ERM
call into an approximate weighted one by drawing a synthetic dataset with
probabilities proportional to |w_i| and flipping labels on negative weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Concept, ConceptClass, DomainError, LabeledDataset

__all__ = [
    "DegenerateWeightsError",
    "WeightedDataset",
    "erm_max_agreement",
    "agreement",
    "weighted_agreement",
    "exact_weighted_argmax",
    "weighted_to_unweighted",
    "synthetic_sample_count",
    "weighted_erm",
]

class DegenerateWeightsError(ValueError):
    """All weights are zero, so the sampling reduction has no law to draw from."""


@dataclass(frozen=True)
class WeightedDataset:
    """Pairs with signed per-index weights bounded by ``bound``."""

    xs: np.ndarray
    ys: np.ndarray
    weights: np.ndarray
    bound: float

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=np.int64)
        ys = np.asarray(self.ys, dtype=np.int8)
        w = np.asarray(self.weights, dtype=float)
        if not (xs.shape == ys.shape == w.shape) or xs.ndim != 1:
            raise DomainError("xs, ys, weights must be 1-d of equal length")
        if self.bound <= 0:
            raise DomainError("weight bound must be positive")
        if np.any(np.abs(w) > self.bound + 1e-12):
            raise DomainError("a weight exceeds the declared bound")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.xs.size


def agreement(cls: ConceptClass, ds: LabeledDataset) -> np.ndarray:
    """sum_i c(x_i) y_i for every concept, via per-point label counts."""
    counts = ds.pair_counts(cls.m)
    net = counts[:, 1] - counts[:, 0]  # (#y=+1) - (#y=-1) per point
    return cls.float_labels @ net


def erm_max_agreement(cls: ConceptClass, ds: LabeledDataset) -> tuple[int, Concept]:
    """Return (index, concept) maximizing agreement; ties go to the lowest index.

    An empty dataset leaves all agreements at 0, so concept 0 is returned.
    """
    if len(cls) == 0:
        raise DomainError("empty concept class")
    if ds.n == 0:
        return 0, cls.concept(0)
    if ds.xs.max() >= cls.m:
        raise DomainError("dataset points exceed the class domain")
    idx = int(np.argmax(agreement(cls, ds)))
    return idx, cls.concept(idx)


def weighted_agreement(cls: ConceptClass, w: WeightedDataset) -> np.ndarray:
    """(1/n) sum_i w_i c(x_i) y_i for every concept."""
    per_point = np.zeros(cls.m)
    np.add.at(per_point, w.xs, w.weights * w.ys)
    return cls.float_labels @ per_point / w.n


def exact_weighted_argmax(cls: ConceptClass, w: WeightedDataset) -> tuple[int, Concept]:
    idx = int(np.argmax(weighted_agreement(cls, w)))
    return idx, cls.concept(idx)


def weighted_to_unweighted(
    w: WeightedDataset, m_syn: int, rng: np.random.Generator
) -> LabeledDataset:
    """Draw m_syn synthetic pairs, index i with probability |w_i| / sum|w|.

    A drawn pair is emitted as (x_i, sign(w_i) y_i); zero-weight indices are
    never drawn.
    """
    mass = np.abs(w.weights)
    total = mass.sum()
    if total <= 0:
        raise DegenerateWeightsError("all weights are zero")
    picks = rng.choice(w.n, size=m_syn, p=mass / total)
    signs = np.where(w.weights[picks] >= 0, 1, -1).astype(np.int8)
    return LabeledDataset(w.xs[picks], signs * w.ys[picks])


def synthetic_sample_count(bound: float, n_concepts: int, eps: float, delta: float) -> int:
    """Hoeffding + union bound sample count for the weighted->unweighted reduction."""
    return math.ceil(8.0 * bound * bound * math.log(2.0 * n_concepts / delta) / (eps * eps))


def weighted_erm(
    cls: ConceptClass,
    w: WeightedDataset,
    eps: float,
    delta: float,
    rng: np.random.Generator,
) -> tuple[int, Concept]:
    """Approximate weighted ERM through one unweighted ERM call.

    With probability >= 1 - delta the returned concept's weighted agreement is
    within eps of the maximum.
    """
    m_syn = synthetic_sample_count(w.bound, len(cls), eps, delta)
    synthetic = weighted_to_unweighted(w, m_syn, rng)
    return erm_max_agreement(cls, synthetic)
