import json
import math

import numpy as np
import pytest

from robustpac.harness import (
    ConfigError,
    ExperimentConfig,
    load_config,
    parse_config_text,
    run_experiment,
    sample_size,
    theoretical_bound,
    write_report,
)
from robustpac.rng import make_rng


def test_sample_size_monotonicity():
    base = sample_size(0.05, 0.0, 0.05, 1.0)
    assert sample_size(0.1, 0.0, 0.05, 1.0) < base
    assert sample_size(0.05, 0.1, 0.05, 1.0) < base
    assert sample_size(0.05, 0.0, 0.05, 2.0) > base


def test_sample_size_delta_halving():
    # halving delta adds exactly the ceil-rounded ln 2 term
    eps, alpha, d = 0.05, 0.0, 1.0
    c_n = 6.0
    n1 = sample_size(eps, alpha, 0.1, d, c_n)
    n2 = sample_size(eps, alpha, 0.05, d, c_n)
    extra = c_n * math.log(2.0) / (eps * (alpha + eps))
    assert n2 - n1 in (math.floor(extra), math.ceil(extra))


def test_sample_size_binomial_validation():
    # with the returned n, Pr[Bin(n, eta)/n >= (1+alpha) eta + eps] <= delta
    eta, alpha, eps, delta = 0.2, 0.0, 0.05, 0.05
    n = sample_size(eps, alpha, delta, 1.0)
    rng = make_rng(0)
    draws = rng.binomial(n, eta, size=10**4) / n
    assert np.mean(draws >= (1 + alpha) * eta + eps) <= delta


def test_config_parsing_and_includes(tmp_path):
    base = tmp_path / "base.cfg"
    base.write_text("trials = 7\nseed = 3\n")
    main = tmp_path / "main.cfg"
    main.write_text(
        "include base.cfg\n"
        "# a comment line\n"
        "scenario = realizable_clean\n"
        "learner = erm\n"
        "eps = 0.1  # trailing comment\n"
        "n = 50\n"
    )
    cfg = load_config(main)
    assert cfg.trials == 7 and cfg.seed == 3
    assert cfg.scenario == "realizable_clean" and cfg.eps == 0.1 and cfg.n == 50
    with pytest.raises(ConfigError):
        parse_config_text("nonsense_key = 1\n")
    with pytest.raises(ConfigError):
        parse_config_text("just a line\n")


def test_realizable_clean_sanity():
    cfg = ExperimentConfig(
        scenario="realizable_clean", learner="malicious", trials=10, seed=1,
        eps=0.1, m=20, n=300,
    )
    rep = run_experiment(cfg)
    assert rep.failures == 0
    assert rep.mean_true_error <= 0.1
    assert rep.all_passed()


def test_reports_are_reproducible_and_thread_invariant(tmp_path):
    cfg = dict(scenario="realizable_clean", learner="erm", trials=6, seed=9, eps=0.1, m=12, n=100)
    rep1 = run_experiment(ExperimentConfig(**cfg))
    rep2 = run_experiment(ExperimentConfig(**cfg))
    assert rep1.to_json().split('"runtime_seconds"')[0] == rep2.to_json().split('"runtime_seconds"')[0]
    rep3 = run_experiment(ExperimentConfig(**cfg, threads=3))
    for a, b in zip(rep1.rows, rep3.rows):
        assert a.true_error == b.true_error and a.eta_hat == b.eta_hat
    p_json, p_csv = write_report(rep1, tmp_path)
    lines = p_csv.read_text().splitlines()
    assert lines[0] == "trial,seed,eta_hat,true_error,empirical_error,bound,pass"
    assert len(lines) == 7
    obj = json.loads(p_json.read_text())
    assert obj["config"]["seed"] == 9


def test_theoretical_bounds():
    cfg = ExperimentConfig(scenario="malicious_plant_thresholds", learner="malicious", eta=0.2, eps=0.05)
    assert theoretical_bound(cfg) == (pytest.approx(0.175), "<=")
    cfg = ExperimentConfig(scenario="nasty_concentrate_thresholds", learner="malicious", eta=0.2, eps=0.05)
    assert theoretical_bound(cfg) == (pytest.approx(0.35), "<=")
    cfg = ExperimentConfig(scenario="nasty_classification_thresholds", learner="agnostic", eta=0.2, eps=0.05)
    assert theoretical_bound(cfg) == (pytest.approx(0.25), "<=")
    cfg = ExperimentConfig(scenario="tv_shatter", learner="erm", eta=0.2, d=20)
    bound, direction = theoretical_bound(cfg)
    assert bound == pytest.approx(4.8 / 17) and direction == ">="


def test_failed_trials_are_recorded():
    # d=4 with eta=0.2 violates the construction's eta >= 1/(d-1); each trial
    # fails at instance construction, is marked, and the run continues
    cfg = ExperimentConfig(
        scenario="tv_mimic_shatter", learner="fixed_dist", trials=2, seed=2,
        eta=0.2, eps=0.1, d=4, n=50,
    )
    rep = run_experiment(cfg)
    assert len(rep.rows) == 2
    assert rep.failures == 2
    assert all(r.error is not None for r in rep.rows)
    assert not rep.all_passed()


def test_bad_config_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig(scenario="unknown")
    with pytest.raises(ConfigError):
        ExperimentConfig(learner="unknown")
    with pytest.raises(ConfigError):
        ExperimentConfig(trials=0)
