"""Experiment configuration, the Monte Carlo runner, and report emission.

A config is flat `key = value` text with `include` directives.  Each trial
draws a target and clean data, corrupts it per the scenario's noise process,
runs the selected learner, and records the exact true error together with the
theoretical bound computed from the config.  Reports are byte-identical for
identical (config, seed) and trial-level parallelism cannot change a number:
every trial owns the stream keyed by (seed, trial index).
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adversaries import (
    NoiseSpec,
    corrupt_nasty,
    sample_malicious,
    tv_bayes_optimal_error,
    tv_instance,
)
from .core import (
    Concept,
    ConceptClass,
    FinitePointDistribution,
    LabeledDataset,
    RealPredictor,
    error_rate,
)
from .learners import (
    LearnerOutput,
    coinflip_baseline,
    default_kappa,
    erm_baseline,
    learn_agnostic,
    learn_fixed_dist_nasty,
    learn_malicious,
)
from .rng import make_rng

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ExperimentReport",
    "sample_size",
    "parse_config_text",
    "load_config",
    "run_experiment",
    "write_report",
]

SCENARIOS = (
    "realizable_clean",
    "malicious_plant_thresholds",
    "nasty_concentrate_thresholds",
    "nasty_classification_thresholds",
    "tv_shatter",
    "tv_mimic_shatter",
)

LEARNERS = ("malicious", "agnostic", "fixed_dist", "erm", "coinflip")


class ConfigError(ValueError):
    """The experiment configuration is unresolvable."""


def sample_size(
    eps: float,
    alpha: float,
    delta: float,
    d_proxy: float,
    c_n: float = 6.0,
) -> int:
    """n = ceil(c_n (d ln(2 + alpha/eps) + ln(1/delta)) / (eps (alpha + eps)))."""
    if not 0 < eps < 1 or not 0 <= alpha < 1:
        raise ConfigError("need eps in (0,1) and alpha in [0,1)")
    num = d_proxy * math.log(2.0 + alpha / eps) + math.log(1.0 / delta)
    return math.ceil(c_n * num / (eps * (alpha + eps)))


@dataclass
class ExperimentConfig:
    scenario: str = "realizable_clean"
    learner: str = "malicious"
    trials: int = 100
    seed: int = 0
    eta: float = 0.2
    eps: float = 0.05
    alpha: float = 0.0
    delta: float = 0.05
    kappa: float | None = None
    n: int | str = "auto"
    m: int = 200
    d: int = 8
    d_proxy: float = 1.0
    c_n: float = 6.0
    plant_mass: float = 0.22
    rival_gap: float | None = None  # disagreement mass to the rival; default 2 eta
    threads: int = 1

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.learner not in LEARNERS:
            raise ConfigError(f"unknown learner {self.learner!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")

    def resolve_n(self) -> int:
        if self.n == "auto":
            return sample_size(self.eps, self.alpha, self.delta, self.d_proxy, self.c_n)
        return int(self.n)

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


_CONFIG_TYPES = {
    "scenario": str,
    "learner": str,
    "trials": int,
    "seed": int,
    "eta": float,
    "eps": float,
    "alpha": float,
    "delta": float,
    "kappa": float,
    "n": str,
    "m": int,
    "d": int,
    "d_proxy": float,
    "c_n": float,
    "plant_mass": float,
    "rival_gap": float,
    "threads": int,
}


def parse_config_text(text: str, base_dir: Path | None = None) -> dict:
    """Parse flat `key = value` lines with `include <path>` directives."""
    out: dict = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("include "):
            inc = line[len("include ") :].strip()
            path = (base_dir / inc) if base_dir is not None else Path(inc)
            out.update(parse_config_text(path.read_text(), path.parent))
            continue
        if "=" not in line:
            raise ConfigError(f"cannot parse config line: {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        if key == "n":
            out[key] = value if value == "auto" else int(value)
        else:
            out[key] = _CONFIG_TYPES[key](value)
    return out


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return ExperimentConfig(**parse_config_text(path.read_text(), path.parent))


# ---------------------------------------------------------------------------
# Scenario builders: per-trial instance construction


@dataclass
class TrialSetup:
    cls: ConceptClass
    dataset: LabeledDataset
    c_star: Concept
    eval_dist: FinitePointDistribution
    learner_dist: FinitePointDistribution | None = None  # known D for fixed_dist


def _thresholds_target(cfg: ExperimentConfig) -> int:
    return cfg.m // 2


def _build_trial(cfg: ExperimentConfig, rng: np.random.Generator) -> TrialSetup:
    n = cfg.resolve_n()
    if cfg.scenario == "realizable_clean":
        cls = ConceptClass.thresholds(cfg.m)
        dist = FinitePointDistribution.uniform(cfg.m)
        c_star = cls.concept(int(rng.integers(0, len(cls))))
        xs = dist.sample(n, rng)
        ds = LabeledDataset(xs, c_star.labels[xs])
        return TrialSetup(cls, ds, c_star, dist)

    if cfg.scenario == "malicious_plant_thresholds":
        cls = ConceptClass.thresholds(cfg.m)
        x0 = _thresholds_target(cfg)
        weights = np.zeros(cfg.m)
        weights[x0] = cfg.plant_mass
        weights[x0 + 1 :] = (1.0 - cfg.plant_mass) / (cfg.m - x0 - 1)
        dist = FinitePointDistribution(weights)
        c_star = cls.concept(x0)  # +1 exactly on the support
        spec = NoiseSpec("malicious", cfg.eta, strategy="plant", params=(x0, -1))
        ds = sample_malicious(n, dist, c_star, spec, rng)
        return TrialSetup(cls, ds, c_star, dist)

    if cfg.scenario in ("nasty_concentrate_thresholds", "nasty_classification_thresholds"):
        cls = ConceptClass.thresholds(cfg.m)
        dist = FinitePointDistribution.uniform(cfg.m)
        x0 = _thresholds_target(cfg)
        gap = cfg.rival_gap if cfg.rival_gap is not None else 2.0 * cfg.eta
        shift = max(1, round(gap * cfg.m))
        c_star = cls.concept(x0)
        rival = cls.concept(min(cfg.m, x0 + shift))
        xs = dist.sample(n, rng)
        clean = LabeledDataset(xs, c_star.labels[xs])
        model = "nasty" if cfg.scenario == "nasty_concentrate_thresholds" else "nasty_classification"
        spec = NoiseSpec(model, cfg.eta, strategy="concentrate")
        ds = corrupt_nasty(clean, spec, rng, target=c_star, rival=rival)
        return TrialSetup(cls, ds, c_star, dist)

    if cfg.scenario in ("tv_shatter", "tv_mimic_shatter"):
        cls = ConceptClass.shatter(cfg.d)
        inst = tv_instance(cfg.d, cfg.eta, rng)
        eval_dist = inst.clean_marginal()
        if cfg.scenario == "tv_shatter":
            ds = inst.corrupted_law.sample(n, rng)
            return TrialSetup(cls, ds, inst.c_star, eval_dist)
        clean = inst.clean_law.sample(n, rng)
        clean = LabeledDataset(
            clean.xs, clean.ys, corrupted_mask=np.zeros(n, dtype=bool),
            clean_xs=clean.xs, clean_ys=clean.ys,
        )
        spec = NoiseSpec("nasty", cfg.eta, strategy="tv_mimic")
        ds = corrupt_nasty(clean, spec, rng, tv=inst)
        return TrialSetup(cls, ds, inst.c_star, eval_dist, learner_dist=eval_dist)

    raise ConfigError(f"unknown scenario {cfg.scenario!r}")


def _run_learner(
    cfg: ExperimentConfig, setup: TrialSetup, rng: np.random.Generator
) -> LearnerOutput:
    if cfg.learner == "malicious":
        return learn_malicious(setup.dataset, setup.cls, cfg.eps, rng)
    if cfg.learner == "agnostic":
        return learn_agnostic(setup.dataset, setup.cls, cfg.eps, cfg.alpha, rng)
    if cfg.learner == "fixed_dist":
        dist = setup.learner_dist if setup.learner_dist is not None else setup.eval_dist
        return learn_fixed_dist_nasty(
            setup.dataset, setup.cls, dist, cfg.eps, kappa=cfg.kappa, rng=rng
        )
    if cfg.learner == "erm":
        return erm_baseline(setup.dataset, setup.cls)
    if cfg.learner == "coinflip":
        return coinflip_baseline(setup.cls.m)
    raise ConfigError(f"unknown learner {cfg.learner!r}")


def theoretical_bound(cfg: ExperimentConfig) -> tuple[float, str]:
    """The bound line the run is tested against, from the config alone."""
    eta, eps = cfg.eta, cfg.eps
    if cfg.scenario == "tv_shatter":
        # all sample-only learners face the exact Bayes floor of the construction
        return tv_bayes_optimal_error(cfg.d, eta), ">="
    if cfg.scenario == "tv_mimic_shatter":
        if cfg.learner == "fixed_dist":
            kappa = cfg.kappa if cfg.kappa is not None else default_kappa(cfg.resolve_n(), cfg.delta)
            return eta + eps + kappa, "<="
        if cfg.learner == "malicious":
            return 1.5 * eta + eps, "<="
        return tv_bayes_optimal_error(cfg.d, eta), ">="
    if cfg.scenario == "realizable_clean":
        return eps, "<="
    if cfg.learner == "coinflip":
        return 0.5, "<="
    if cfg.scenario == "malicious_plant_thresholds":
        if cfg.learner == "malicious":
            return eta / (2.0 * (1.0 - eta)) + eps, "<="
        if cfg.learner == "erm":
            return eta / (1.0 - eta) + eps, "<="
    if cfg.scenario == "nasty_concentrate_thresholds":
        if cfg.learner == "malicious":
            return 1.5 * eta + eps, "<="
        if cfg.learner == "erm":
            return 2.0 * eta + eps, "<="
    if cfg.scenario == "nasty_classification_thresholds":
        if cfg.learner in ("agnostic", "malicious"):
            bound = (1.0 + cfg.alpha) * eta + eps if cfg.learner == "agnostic" else 1.5 * eta + eps
            return bound, "<="
        if cfg.learner == "erm":
            return 2.0 * eta + eps, "<="
    return 1.0, "<="


@dataclass
class TrialRow:
    trial: int
    seed: int
    eta_hat: float
    true_error: float
    empirical_error: float
    bound: float
    passed: bool
    error: str | None = None


@dataclass
class ExperimentReport:
    config: dict
    rows: list
    bound: float
    direction: str
    mean_true_error: float
    std_true_error: float
    quantiles: dict
    mean_empirical_error: float
    mean_eta_hat: float
    checks: list
    runtime_seconds: float
    failures: int

    def to_json(self) -> str:
        obj = {
            "config": self.config,
            "bound": self.bound,
            "direction": self.direction,
            "mean_true_error": self.mean_true_error,
            "std_true_error": self.std_true_error,
            "quantiles": self.quantiles,
            "mean_empirical_error": self.mean_empirical_error,
            "mean_eta_hat": self.mean_eta_hat,
            "checks": self.checks,
            "runtime_seconds": round(self.runtime_seconds, 3),
            "failures": self.failures,
            "rows": [row.__dict__ for row in self.rows],
        }
        return json.dumps(obj, indent=2, sort_keys=True, default=repr)

    def all_passed(self) -> bool:
        return all(check["pass"] for check in self.checks)


def _empirical_error(h: RealPredictor, ds: LabeledDataset) -> float:
    return float(np.mean((1.0 - h.values[ds.xs] * ds.ys) / 2.0))


def _one_trial(cfg: ExperimentConfig, bound: float, direction: str, t: int) -> TrialRow:
    rng = make_rng(cfg.seed, t)
    try:
        setup = _build_trial(cfg, rng)
        out = _run_learner(cfg, setup, rng)
        true_err = error_rate(out.predictor, setup.c_star, setup.eval_dist)
        emp = _empirical_error(out.predictor, setup.dataset)
        if setup.dataset.corrupted_mask is not None:
            eta_hat = setup.dataset.eta_hat()
        else:
            eta_hat = float(np.mean(setup.dataset.ys != setup.c_star.labels[setup.dataset.xs]))
        ok = true_err <= bound if direction == "<=" else true_err >= bound
        return TrialRow(t, cfg.seed, eta_hat, true_err, emp, bound, bool(ok))
    except Exception as exc:  # trial marked failed, run continues
        return TrialRow(t, cfg.seed, math.nan, math.nan, math.nan, bound, False, error=repr(exc))


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    start = time.perf_counter()
    bound, direction = theoretical_bound(cfg)
    trials = range(cfg.trials)
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            rows = list(pool.map(lambda t: _one_trial(cfg, bound, direction, t), trials))
    else:
        rows = [_one_trial(cfg, bound, direction, t) for t in trials]
    rows.sort(key=lambda r: r.trial)

    good = [r for r in rows if r.error is None]
    errs = np.array([r.true_error for r in good]) if good else np.array([math.nan])
    mean = float(errs.mean())
    std = float(errs.std(ddof=1)) if errs.size > 1 else 0.0
    sigma_mean = std / math.sqrt(errs.size) if errs.size else math.nan
    slack = 3.0 * sigma_mean
    if direction == "<=":
        agg_pass = mean <= bound + slack
    else:
        agg_pass = mean >= bound - slack
    checks = [
        {
            "name": f"mean_true_error {direction} bound (3 sigma slack)",
            "value": mean,
            "bound": bound,
            "slack": slack,
            "pass": bool(agg_pass),
        },
        {
            "name": "no failed trials",
            "value": float(len(rows) - len(good)),
            "bound": 0.0,
            "slack": 0.0,
            "pass": len(good) == len(rows),
        },
    ]
    report = ExperimentReport(
        config=cfg.to_dict(),
        rows=rows,
        bound=bound,
        direction=direction,
        mean_true_error=mean,
        std_true_error=std,
        quantiles={
            q: float(np.quantile(errs, q)) for q in (0.1, 0.5, 0.9)
        },
        mean_empirical_error=float(np.mean([r.empirical_error for r in good])) if good else math.nan,
        mean_eta_hat=float(np.mean([r.eta_hat for r in good])) if good else math.nan,
        checks=checks,
        runtime_seconds=time.perf_counter() - start,
        failures=len(rows) - len(good),
    )
    return report


def write_report(report: ExperimentReport, out_dir, stem: str = "report") -> tuple[Path, Path]:
    """Emit <stem>.json and per-trial <stem>.csv into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / f"{stem}.json"
    csv_path = out / f"{stem}.csv"
    json_path.write_text(report.to_json() + "\n")
    lines = ["trial,seed,eta_hat,true_error,empirical_error,bound,pass"]
    for r in report.rows:
        lines.append(
            f"{r.trial},{r.seed},{r.eta_hat!r},{r.true_error!r},"
            f"{r.empirical_error!r},{r.bound!r},{int(r.passed)}"
        )
    csv_path.write_text("\n".join(lines) + "\n")
    return json_path, csv_path
