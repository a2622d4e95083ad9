import numpy as np
import pytest
from scipy.stats import chi2

from robustpac.core import Concept, ConceptClass, LabeledDataset
from robustpac.erm import (
    DegenerateWeightsError,
    WeightedDataset,
    agreement,
    erm_max_agreement,
    exact_weighted_argmax,
    synthetic_sample_count,
    weighted_agreement,
    weighted_erm,
    weighted_to_unweighted,
)
from robustpac.rng import make_rng


def _brute_agreement(cls, ds):
    # independent of the counts-based path: straight loop over pairs
    return np.array(
        [sum(int(cls.label_matrix[i, x] * y) for x, y in zip(ds.xs, ds.ys)) for i in range(len(cls))]
    )


def test_constant_class_example():
    cls = ConceptClass(np.array([[1, 1, 1], [-1, -1, -1]]))
    ds = LabeledDataset(np.array([0, 1, 2]), np.array([1, 1, 1]))
    idx, c = erm_max_agreement(cls, ds)
    assert idx == 0 and np.all(c.labels == 1)


def test_threshold_recovery_realizable():
    cls = ConceptClass.thresholds(10)
    c_star = cls.concept(5)
    xs = np.arange(10)
    ds = LabeledDataset(xs, c_star.labels[xs])
    idx, c = erm_max_agreement(cls, ds)
    assert idx == 5
    assert agreement(cls, ds)[idx] == ds.n


def test_empty_dataset_returns_first():
    cls = ConceptClass.thresholds(4)
    idx, _ = erm_max_agreement(cls, LabeledDataset(np.zeros(0, dtype=int), np.zeros(0, dtype=int) + 1))
    assert idx == 0


def test_scan_matches_bruteforce_on_random_instances():
    rng = make_rng(5)
    for _ in range(20):
        mat = np.unique(rng.choice([-1, 1], size=(8, 10)).astype(np.int8), axis=0)
        cls = ConceptClass(mat)
        ds = LabeledDataset(rng.integers(0, 10, size=20), rng.choice([-1, 1], size=20))
        brute = _brute_agreement(cls, ds)
        idx, _ = erm_max_agreement(cls, ds)
        assert agreement(cls, ds)[idx] == brute.max()
        assert np.array_equal(agreement(cls, ds), brute)


def test_never_below_any_member():
    rng = make_rng(6)
    cls = ConceptClass.intervals(6)
    ds = LabeledDataset(rng.integers(0, 6, size=30), rng.choice([-1, 1], size=30))
    scores = agreement(cls, ds)
    idx, _ = erm_max_agreement(cls, ds)
    assert np.all(scores[idx] >= scores)


def test_weighted_to_unweighted_proportions_and_flip():
    rng = make_rng(7)
    w = WeightedDataset(np.array([0, 1, 2]), np.array([1, 1, -1]), np.array([2.0, -1.0, 1.0]), bound=2.0)
    syn = weighted_to_unweighted(w, 10**5, rng)
    frac = np.bincount(syn.xs, minlength=3) / syn.n
    assert np.allclose(frac, [0.5, 0.25, 0.25], atol=0.01)
    # the middle point's label is flipped by its negative weight
    assert np.all(syn.ys[syn.xs == 1] == -1)
    assert np.all(syn.ys[syn.xs == 0] == 1)


def test_weighted_to_unweighted_single_weight():
    rng = make_rng(8)
    w = WeightedDataset(np.array([3, 4]), np.array([1, -1]), np.array([0.0, 1.5]), bound=2.0)
    syn = weighted_to_unweighted(w, 50, rng)
    assert np.all(syn.xs == 4) and np.all(syn.ys == -1)


def test_weighted_to_unweighted_balanced():
    rng = make_rng(9)
    w = WeightedDataset(np.array([0, 1]), np.array([1, 1]), np.array([1.0, 1.0]), bound=1.0)
    syn = weighted_to_unweighted(w, 10**5, rng)
    assert abs(np.mean(syn.xs == 0) - 0.5) < 0.01


def test_weighted_marginal_chi2():
    rng = make_rng(10)
    weights = np.array([0.5, -1.5, 2.0, 1.0])
    w = WeightedDataset(np.arange(4), np.ones(4, dtype=int), weights, bound=2.0)
    n = 10**5
    syn = weighted_to_unweighted(w, n, rng)
    observed = np.bincount(syn.xs, minlength=4)
    expected = np.abs(weights) / np.abs(weights).sum() * n
    stat = float(((observed - expected) ** 2 / expected).sum())
    assert stat < chi2.ppf(0.999, df=3)


def test_degenerate_weights():
    w = WeightedDataset(np.array([0]), np.array([1]), np.array([0.0]), bound=1.0)
    with pytest.raises(DegenerateWeightsError):
        weighted_to_unweighted(w, 10, make_rng(0))


def test_weighted_erm_near_optimal():
    rng = make_rng(11)
    eps, delta = 0.2, 0.05
    hits = 0
    for trial in range(100):
        trng = make_rng(11, trial)
        mat = np.unique(trng.choice([-1, 1], size=(8, 10)).astype(np.int8), axis=0)
        cls = ConceptClass(mat)
        xs = trng.integers(0, 10, size=20)
        ys = trng.choice([-1, 1], size=20).astype(np.int8)
        weights = trng.uniform(-1, 1, size=20)
        w = WeightedDataset(xs, ys, weights, bound=1.0)
        best = weighted_agreement(cls, w).max()
        idx, _ = weighted_erm(cls, w, eps, delta, trng)
        if weighted_agreement(cls, w)[idx] >= best - eps:
            hits += 1
    assert hits >= 95


def test_weighted_erm_sign_symmetry():
    # all weights -1: the returned concept should (nearly) minimize raw agreement
    rng = make_rng(12)
    cls = ConceptClass.thresholds(8)
    xs = rng.integers(0, 8, size=40)
    ys = cls.concept(4).labels[xs]
    w = WeightedDataset(xs, ys, -np.ones(40), bound=1.0)
    scores = weighted_agreement(cls, w)
    idx_exact, _ = exact_weighted_argmax(cls, w)
    raw = agreement(cls, LabeledDataset(xs, ys))
    assert raw[idx_exact] == raw.min()
    idx, _ = weighted_erm(cls, w, eps=0.1, delta=0.01, rng=rng)
    assert scores[idx] >= scores.max() - 0.1


def test_synthetic_sample_count_formula():
    # ceil(8 b^2 ln(2 K / delta) / eps^2)
    assert synthetic_sample_count(1.0, 8, 0.2, 0.05) == int(np.ceil(8 * np.log(320) / 0.04))
