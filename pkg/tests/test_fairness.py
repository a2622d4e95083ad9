import numpy as np
import pytest

from robustpac.core import (
    ConceptClass,
    FinitePointDistribution,
    JointDistribution,
    LabeledDataset,
    RealPredictor,
)
from robustpac.fairness import (
    AuditError,
    agnostic_error_gap,
    calibration_violation,
    multiaccuracy_violation,
    postprocess_cal_ma,
)
from robustpac.loss import g_malicious_prime, malicious_link, malicious_loss
from robustpac.optimizer import loss_scan
from robustpac.rng import make_rng


def _random_joint(rng, m):
    w = rng.uniform(0, 1, size=(m, 2))
    return JointDistribution(w / w.sum())


def test_conditional_mean_is_multiaccurate_and_calibrated():
    rng = make_rng(0)
    for _ in range(20):
        m = int(rng.integers(2, 10))
        joint = _random_joint(rng, m)
        mu = RealPredictor(joint.label_mean())
        cls = ConceptClass.shatter(m) if m <= 6 else ConceptClass.thresholds(m)
        assert multiaccuracy_violation(mu, cls, joint).max_violation <= 1e-12
        # conditional means may collide across points; calibration still holds
        assert calibration_violation(mu, joint).max_violation <= 1e-9


def test_multiaccuracy_direct_example():
    # h = 0, class contains the all-plus concept, E[y] = 0.3 -> violation 0.3
    m = 4
    w = np.zeros((m, 2))
    w[:, 1] = 0.65 / m
    w[:, 0] = 0.35 / m
    joint = JointDistribution(w)
    cls = ConceptClass(np.array([[1, 1, 1, 1], [-1, -1, -1, -1]]))
    rep = multiaccuracy_violation(RealPredictor.constant(m, 0.0), cls, joint)
    assert rep.max_violation == pytest.approx(0.3, abs=1e-12)
    assert rep.witness == 0


def test_multiaccuracy_duplicate_invariance():
    rng = make_rng(1)
    joint = _random_joint(rng, 5)
    h = RealPredictor(rng.uniform(-1, 1, size=5))
    base = ConceptClass(np.array([[1, 1, -1, -1, 1], [-1, 1, 1, -1, -1]]))
    doubled = ConceptClass(
        np.array([[1, 1, -1, -1, 1], [-1, 1, 1, -1, -1], [1, -1, 1, -1, 1]])
    )
    v1 = multiaccuracy_violation(h, base, joint).max_violation
    # adding concepts can only raise the max; adding a copy of an existing one cannot
    again = ConceptClass.from_concepts([base.concept(0), base.concept(1)])
    assert multiaccuracy_violation(h, again, joint).max_violation == v1


def test_calibration_single_level():
    m = 3
    w = np.zeros((m, 2))
    w[:, 0] = w[:, 1] = 1 / 6  # E[y] = 0 everywhere
    joint = JointDistribution(w)
    rep = calibration_violation(RealPredictor.constant(m, 0.5), joint)
    assert rep.max_violation == pytest.approx(0.5)
    assert rep.witness == 0.5


def test_calibration_skips_zero_mass_levels():
    w = np.array([[0.5, 0.5], [0.0, 0.0]])
    joint = JointDistribution(w)
    h = RealPredictor(np.array([0.0, 0.9]))  # the 0.9 level has no mass
    rep = calibration_violation(h, joint)
    assert rep.max_violation == pytest.approx(0.0, abs=1e-12)


def test_equivalence_biconditional():
    # [for all c: error(Rad(h), c) <= eta(c) + eps] iff max_c E[c(y - h)] <= 2 eps
    rng = make_rng(2)
    for trial in range(300):
        trng = make_rng(2, trial)
        m = int(trng.integers(2, 8))
        joint = _random_joint(trng, m)
        h = RealPredictor(trng.uniform(-1, 1, size=m))
        cls = ConceptClass.shatter(m) if m <= 5 else ConceptClass.thresholds(m)
        eps = float(trng.uniform(0, 0.5))
        gaps = agnostic_error_gap(h, cls, joint)
        lhs = bool(np.all(gaps <= eps))
        rhs = multiaccuracy_violation(h, cls, joint).max_violation <= 2 * eps
        assert lhs == rhs
        # the gap is exactly half the residual correlation, concept by concept
        w = joint.weights
        residual = (w[:, 1] - w[:, 0]) - w.sum(axis=1) * h.values
        assert np.allclose(gaps, cls.float_labels @ residual / 2.0, atol=1e-12)


def _calibrated_multiaccurate(rng, ds, m, tau):
    """Perturb the conditional mean by a per-level shift of at most tau."""
    joint = ds.empirical_joint(m)
    mu = joint.label_mean()
    levels = np.unique(mu)
    shift = rng.uniform(-tau, tau, size=levels.size)
    out = mu.copy()
    for lv, sh in zip(levels, shift):
        out[mu == lv] = np.clip(lv + sh, -1, 1)
    return RealPredictor(out)


def test_postprocess_tau_zero():
    rng = make_rng(3)
    m = 8
    cls = ConceptClass.thresholds(m)
    ds = LabeledDataset(rng.integers(0, m, size=100), rng.choice([-1, 1], size=100))
    mu = RealPredictor(ds.empirical_joint(m).label_mean())
    h, report = postprocess_cal_ma(mu, malicious_link(), ds, cls, tau=0.0)
    assert report["measured_max_loss"] <= 1e-9
    assert loss_scan(malicious_loss(), cls, ds, h.values).max() <= 1e-9


def test_postprocess_small_tau():
    rng = make_rng(4)
    m = 8
    cls = ConceptClass.thresholds(m)
    for trial in range(50):
        trng = make_rng(4, trial)
        ds = LabeledDataset(trng.integers(0, m, size=200), trng.choice([-1, 1], size=200))
        tau = 0.02
        mu = _calibrated_multiaccurate(trng, ds, m, tau)
        h, report = postprocess_cal_ma(mu, malicious_link(), ds, cls, tau=tau)
        assert report["measured_max_loss"] <= 4 * tau + 1e-9
        assert report["tight_budget"] == pytest.approx(3 * tau)


def test_postprocess_audit_failure():
    rng = make_rng(5)
    m = 6
    cls = ConceptClass.thresholds(m)
    ds = LabeledDataset(rng.integers(0, m, size=50), rng.choice([-1, 1], size=50))
    wild = RealPredictor(rng.choice([-1.0, 1.0], size=m))
    with pytest.raises(AuditError):
        postprocess_cal_ma(wild, malicious_link(), ds, cls, tau=0.0)


def test_malicious_link_is_bijective():
    t = np.linspace(-1, 1, 10**4)
    assert np.all(g_malicious_prime(t) > 0)
