import numpy as np
import pytest

from robustpac.core import ConceptClass, LabeledDataset
from robustpac.loss import (
    CornerLoss,
    agnostic_loss,
    identity_link,
    majority_link,
    malicious_link,
    malicious_loss,
)
from robustpac.learners import agnostic_arity
from robustpac.optimizer import (
    BudgetExceededError,
    ConfigurationError,
    duality_gap,
    iteration_budget,
    learn_fw,
    loss_scan,
)
from robustpac.rng import make_rng


def _random_instance(rng, m_max=16, k_max=32, n_max=64):
    m = int(rng.integers(4, m_max + 1))
    mat = np.unique(rng.choice([-1, 1], size=(int(rng.integers(4, k_max + 1)), m)).astype(np.int8), axis=0)
    cls = ConceptClass(mat)
    n = int(rng.integers(8, n_max + 1))
    ds = LabeledDataset(rng.integers(0, m, size=n), rng.choice([-1, 1], size=n))
    return cls, ds


def test_singleton_class_halts_immediately():
    rng = make_rng(0)
    cls = ConceptClass(np.array([[1, -1, 1, 1]]))
    xs = rng.integers(0, 4, size=12)
    ds = LabeledDataset(xs, cls.concept(0).labels[xs])
    res = learn_fw(malicious_loss(), malicious_link(), cls, ds, eps=0.05)
    assert res.iterations == 1
    assert res.final_loss <= 0 + 1e-12
    assert res.final_loss <= 19 / 20 * 0.05


def test_step_size_schedule():
    assert [2 / (t + 2) for t in (1, 2, 3)] == [pytest.approx(v) for v in (2 / 3, 1 / 2, 2 / 5)]


def test_iteration_budget_formula():
    assert iteration_budget(2.0, 4.0, 0.05) == int(np.floor(80 * 8 / 0.05 - 2))


def test_random_instances_converge_under_budget():
    for i in range(20):
        rng = make_rng(100, i)
        cls, ds = _random_instance(rng)
        res = learn_fw(malicious_loss(), malicious_link(), cls, ds, eps=0.1)
        assert res.iterations <= res.t_max
        assert loss_scan(malicious_loss(), cls, ds, res.predictor.values).max() <= 0.1


def test_duality_gap_bounds_loss():
    f, g = malicious_loss(), malicious_link()
    for i in range(20):
        rng = make_rng(200, i)
        cls, ds = _random_instance(rng, m_max=10, k_max=12, n_max=30)
        # random point of Conv(C) on the domain
        w = rng.dirichlet(np.ones(len(cls)))
        mu = w @ cls.float_labels
        gap = duality_gap(mu, f, g, ds, cls)
        worst = loss_scan(f, cls, ds, np.asarray(g(mu))).max()
        assert gap >= worst - 1e-10


def test_gap_at_exit_below_eps():
    rng = make_rng(1)
    cls, ds = _random_instance(rng)
    eps = 0.1
    res = learn_fw(malicious_loss(), malicious_link(), cls, ds, eps=eps)
    gap = duality_gap(res.mu_domain, malicious_loss(), malicious_link(), ds, cls)
    assert gap == pytest.approx(res.exit_gap, abs=1e-12)
    # exit loss <= 19 eps/20 and the scan oracle has zero slack, so gap <= eps
    assert res.final_loss <= 19 / 20 * eps


def test_gap_for_point_mass_is_two_term_difference():
    f, g = malicious_loss(), malicious_link()
    rng = make_rng(2)
    cls, ds = _random_instance(rng, m_max=8, k_max=8, n_max=20)
    losses_at = lambda h: loss_scan(f, cls, ds, h)
    # mu = point mass on the loss-maximizing concept for h = g(mu)
    for idx in range(len(cls)):
        mu = cls.float_labels[idx]
        h = np.asarray(g(mu))
        gap = duality_gap(mu, f, g, ds, cls)
        losses = losses_at(h)
        ell_self = float(
            np.mean(
                np.where(
                    ds.ys > 0,
                    _eval(f, mu[ds.xs], h[ds.xs], 1),
                    _eval(f, mu[ds.xs], h[ds.xs], -1),
                )
            )
        )
        assert gap == pytest.approx(losses.max() - ell_self, abs=1e-10)
        assert gap >= -1e-12


def _eval(f, c, h, y):
    from robustpac.loss import corner_loss_eval

    return corner_loss_eval(f, c, h, y)


def test_mu_record_reconstructs_domain_vector():
    rng = make_rng(3)
    cls, ds = _random_instance(rng)
    res = learn_fw(malicious_loss(), malicious_link(), cls, ds, eps=0.05)
    rebuilt = res.support_weights @ cls.float_labels[res.support]
    assert np.max(np.abs(rebuilt - res.mu_domain)) <= 1e-10


def test_malicious_inner_weights_crosscheck():
    # the offending concept solves a weighted problem with w_i = h(x_i) y_i - 2
    f, g = malicious_loss(), malicious_link()
    rng = make_rng(4)
    cls, ds = _random_instance(rng, m_max=10, k_max=16, n_max=40)
    mu = rng.dirichlet(np.ones(len(cls))) @ cls.float_labels
    h = np.asarray(g(mu))
    losses = loss_scan(f, cls, ds, h)
    w_paper = h[ds.xs] * ds.ys - 2.0
    # maximizing the loss = maximizing sum_i (-w_i) c(x_i) y_i
    scores = cls.float_labels[:, ds.xs] @ (-w_paper * ds.ys)
    assert int(np.argmax(losses)) == int(np.argmax(scores))
    order_l = np.argsort(losses)
    order_s = np.argsort(scores)
    assert np.array_equal(order_l, order_s)


def test_weighted_erm_oracle_path():
    # the sampling reduction needs m_syn ~ 8 b^2 ln(2K/delta) (20/eps)^2 synthetic
    # draws per step, so exercise it at coarse eps
    rng = make_rng(5)
    cls, ds = _random_instance(rng, m_max=8, k_max=8, n_max=24)
    eps = 2.0
    res = learn_fw(
        malicious_loss(), malicious_link(), cls, ds, eps=eps,
        oracle="weighted_erm", rng=rng, delta_inner=0.02,
    )
    assert loss_scan(malicious_loss(), cls, ds, res.predictor.values).max() <= eps
    with pytest.raises(ConfigurationError):
        learn_fw(malicious_loss(), malicious_link(), cls, ds, eps=eps, oracle="weighted_erm")


def test_precondition_failures():
    rng = make_rng(6)
    cls, ds = _random_instance(rng)
    # positive agreement coefficient: reward disagreement
    bad = CornerLoss.from_function(lambda c, h, y: -c * h * y * y + c * h, name="bad")
    if np.all(bad.a <= 0):  # construct explicitly if the lambda was too clever
        bad = CornerLoss(np.array([[[1.0, 1.0], [-1.0, -1.0]], [[-1.0, -1.0], [1.0, 1.0]]]))
    assert np.any(bad.a > 0)
    with pytest.raises(ConfigurationError):
        learn_fw(bad, malicious_link(), cls, ds, eps=0.1)
    with pytest.raises(ConfigurationError):
        learn_fw(malicious_loss(), identity_link(), cls, ds, eps=0.1)
    with pytest.raises(ConfigurationError):
        learn_fw(malicious_loss(), malicious_link(), cls, ds, eps=900.0)


def test_budget_error_carries_gap_trace():
    # starve the budget by monkeypatching the exit threshold through a tiny eps
    # on an adversarial dataset; instead, force it via a tiny t_max by calling
    # the loop with an eps large enough that T_max = 1 but the loss cannot drop
    rng = make_rng(7)
    cls = ConceptClass(np.array([[1, 1], [-1, -1]]))
    ds = LabeledDataset(np.array([0, 1, 0, 1]), np.array([1, 1, -1, -1]))
    # eps chosen so T_max = floor(640/eps - 2) == 1 -> eps in (213.4, 320); all
    # eps that large exit immediately, so instead shrink the budget directly.
    import robustpac.optimizer as opt

    orig = opt.iteration_budget
    opt.iteration_budget = lambda L, s, e: 1
    try:
        with pytest.raises(BudgetExceededError) as err:
            learn_fw(malicious_loss(), malicious_link(), cls, ds, eps=1e-6)
        assert len(err.value.gap_trace) >= 1
    finally:
        opt.iteration_budget = orig


def test_trace_output(tmp_path):
    rng = make_rng(8)
    cls, ds = _random_instance(rng)
    path = tmp_path / "trace.csv"
    learn_fw(malicious_loss(), malicious_link(), cls, ds, eps=0.1, trace_path=path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,gap,loss,gamma"
    assert len(lines) >= 2


def test_agnostic_loss_with_majority_link_converges():
    rng = make_rng(9)
    cls, ds = _random_instance(rng)
    eps = 0.1
    k = agnostic_arity(eps, 0.0)
    f = agnostic_loss(0.0, shift=eps)
    res = learn_fw(f, majority_link(k), cls, ds, eps=eps)
    assert loss_scan(f, cls, ds, res.predictor.values).max() <= eps
    assert res.iterations <= res.t_max
