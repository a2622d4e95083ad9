"""The robust learners: malicious, agnostic/nasty-classification, fixed-distribution
nasty, and the trivial baselines.

All learners emit a randomized hypothesis as a mixture of k-wise majorities of
class members together with its exact mean predictor; error and loss metrics
are always computed from the exact mean, never from sampled atoms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np
from scipy.special import gammaln

from .core import (
    Concept,
    ConceptClass,
    DomainError,
    FinitePointDistribution,
    LabeledDataset,
    MixtureHypothesis,
    RealPredictor,
)
from .erm import erm_max_agreement
from .loss import (
    agnostic_loss,
    majority_link,
    majority_mean,
    malicious_link,
    malicious_loss,
)
from .optimizer import learn_fw

__all__ = [
    "WitnessError",
    "GameConvergenceError",
    "LearnerOutput",
    "Certificate",
    "default_kappa",
    "learn_malicious",
    "empirical_consistent_error",
    "learn_agnostic",
    "relative_error_violation",
    "certificate_eta",
    "detection_f",
    "learn_fixed_dist_nasty",
    "erm_baseline",
    "coinflip_baseline",
]

ATOM_CAP = 10**4
MEAN_MATCH_TOL = 1e-3


class WitnessError(ValueError):
    """The supplied clean index set is consistent with no class member."""


class GameConvergenceError(RuntimeError):
    """The fixed-distribution game missed its value within the round budget."""

    def __init__(self, message, worst_concept, violation):
        super().__init__(message)
        self.worst_concept = worst_concept
        self.violation = violation


@dataclass
class LearnerOutput:
    """A learner's hypothesis: the mixture, its exact mean, and run diagnostics.

    ``predictor`` is the exact mean of the ideal output mixture.  When the
    materialized atoms were exactly enumerated the mixture mean matches it to
    machine precision; when atoms had to be sampled, ``diagnostics``
    records the measured deviation under ``mixture_mean_gap``.
    """

    hypothesis: MixtureHypothesis | None
    predictor: RealPredictor
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Certificate:
    """A corruption certificate: concept, detector, value, and slack."""

    concept_index: int
    value: float
    kappa: float


def default_kappa(n: int, delta: float = 0.05) -> float:
    """Certificate slack 3 sqrt(ln(2/delta) / n) for an n-point sample."""
    return 3.0 * math.sqrt(math.log(2.0 / delta) / n)


# ---------------------------------------------------------------------------
# Mixture materialization


def _log_multiset_weight(counts: np.ndarray, log_w: np.ndarray, k: int) -> float:
    return (
        gammaln(k + 1)
        - float(gammaln(counts + 1).sum())
        + float(counts @ log_w)
    )


def _enumerated_tuples(s: int, k: int, cap: int) -> bool:
    return math.comb(s + k - 1, k) <= cap


def _materialize(
    base_labels: np.ndarray,
    weights: np.ndarray,
    k: int,
    rng: np.random.Generator,
    cap: int = ATOM_CAP,
    singleton_mass: float = 0.0,
) -> tuple[MixtureHypothesis, bool]:
    """Build a Maj_k mixture over the given concept weights.

    With probability ``1 - singleton_mass`` an atom is an iid k-tuple from the
    weights; with probability ``singleton_mass`` it is a single concept
    repeated k times.  Exact enumeration is used whenever the multiset count
    fits under ``cap``; otherwise atoms are sampled iid and deduplicated.
    Returns the mixture and whether it is exact.
    """
    s = weights.size
    tuple_mass = 1.0 - singleton_mass
    atoms: dict[tuple, float] = {}

    if _enumerated_tuples(s, k, cap):
        log_w = np.log(np.where(weights > 0, weights, 1.0))
        for combo in combinations_with_replacement(range(s), k):
            counts = np.bincount(np.asarray(combo), minlength=s)
            if np.any((counts > 0) & (weights <= 0)):
                continue
            w = tuple_mass * math.exp(_log_multiset_weight(counts, log_w, k))
            if w > 0:
                atoms[combo] = atoms.get(combo, 0.0) + w
        if singleton_mass > 0:
            for i in range(s):
                if weights[i] > 0:
                    key = (i,) * k
                    atoms[key] = atoms.get(key, 0.0) + singleton_mass * weights[i]
        exact = True
        tuples = np.array(list(atoms.keys()), dtype=np.int64)
        w = np.array(list(atoms.values()))
    else:
        if rng is None:
            raise DomainError("sampled mixture materialization needs an rng")
        n_atoms = min(cap, max(128, 4_000_000 // k))
        is_tuple = rng.random(n_atoms) < tuple_mass
        count_rows = np.zeros((n_atoms, s), dtype=np.int64)
        n_tup = int(is_tuple.sum())
        if n_tup:
            count_rows[is_tuple] = rng.multinomial(k, weights, size=n_tup)
        if n_tup < n_atoms:
            singles = rng.choice(s, size=n_atoms - n_tup, p=weights)
            count_rows[~is_tuple, :] = 0
            count_rows[np.flatnonzero(~is_tuple), singles] = k
        merged: dict[bytes, float] = {}
        for row in count_rows:
            key = row.tobytes()
            merged[key] = merged.get(key, 0.0) + 1.0 / n_atoms
        rows = np.stack([np.frombuffer(key, dtype=np.int64) for key in merged])
        tuples = np.repeat(
            np.tile(np.arange(s), rows.shape[0]), rows.reshape(-1)
        ).reshape(rows.shape[0], k)
        w = np.array(list(merged.values()))
        exact = False

    w = w / w.sum()
    return MixtureHypothesis(base_labels, tuples, w), exact


def _mixture_gap(h: MixtureHypothesis, ideal: np.ndarray) -> float:
    return float(np.abs(h.mean_predictor().values - ideal).max())


# ---------------------------------------------------------------------------
# Malicious noise


def learn_malicious(
    ds: LabeledDataset,
    cls: ConceptClass,
    eps: float,
    rng: np.random.Generator,
    oracle: str = "scan",
    atom_cap: int = ATOM_CAP,
) -> LearnerOutput:
    """Drive the malicious corner loss below eps and emit a Maj_7 mixture.

    The optimizer finds mu in Conv(C) with ell_S(c, g(mu)) <= eps for every c;
    the output plays a 7-wise majority of iid draws from mu with probability
    16/19 and a single draw (as a unanimous 7-tuple) otherwise, so its mean is
    exactly g(mu) = (16/19) M_7(mu) + (3/19) mu.
    """
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")
    res = learn_fw(malicious_loss(), malicious_link(), cls, ds, eps, oracle=oracle, rng=rng)
    base = cls.label_matrix[res.support]
    mixture, exact = _materialize(
        base, res.support_weights, k=7, rng=rng, cap=atom_cap, singleton_mass=3.0 / 19.0
    )
    gap = _mixture_gap(mixture, res.predictor.values)
    return LearnerOutput(
        hypothesis=mixture,
        predictor=res.predictor,
        diagnostics={
            "iterations": res.iterations,
            "final_loss": res.final_loss,
            "t_max": res.t_max,
            "mixture_exact": exact,
            "mixture_mean_gap": gap,
            "eps": eps,
        },
    )


def empirical_consistent_error(
    h: RealPredictor,
    ds: LabeledDataset,
    cls: ConceptClass,
    clean_indices: np.ndarray,
    eps: float,
) -> dict:
    """Audit the malicious guarantee on a claimed-clean index set.

    Requires some class member fully consistent with the pairs at
    ``clean_indices``; reports the exact randomized error of Rad(h) on them
    against the bound (eta + eps/2) / (2 (1 - eta)) with eta = 1 - |I|/n.
    """
    idx = np.asarray(clean_indices, dtype=np.int64)
    if idx.size == 0:
        raise WitnessError("empty clean index set")
    xs, ys = ds.xs[idx], ds.ys[idx]
    consistent = np.all(cls.label_matrix[:, xs] == ys[None, :], axis=1)
    if not consistent.any():
        raise WitnessError("no class member is consistent with the supplied indices")
    eta = 1.0 - idx.size / ds.n
    value = float(np.mean((1.0 - h.values[xs] * ys) / 2.0))
    bound = (eta + eps / 2.0) / (2.0 * (1.0 - eta))
    return {
        "eta": eta,
        "empirical_error": value,
        "bound": bound,
        "ok": value <= bound + 1e-12,
        "witness_concept": int(np.argmax(consistent)),
    }


# ---------------------------------------------------------------------------
# Agnostic / nasty classification noise


def agnostic_arity(eps: float, alpha: float, c_k: float = 4.0) -> int:
    k = math.ceil(c_k / (alpha + eps) ** 2)
    return k + 1 if k % 2 == 0 else k


def learn_agnostic(
    ds: LabeledDataset,
    cls: ConceptClass,
    eps: float,
    alpha: float = 0.0,
    rng: np.random.Generator | None = None,
    oracle: str = "scan",
    c_k: float = 4.0,
    atom_cap: int = ATOM_CAP,
) -> LearnerOutput:
    """Learner for nasty classification / agnostic noise via the shifted linear loss.

    Optimizes f(c,h,y) = c((1+alpha) y - h) - alpha - eps with the majority
    link M_k, k = ceil(c_k / (alpha+eps)^2) forced odd.  At exit the raw
    (unshifted) loss is <= 2 eps for every concept, hence
    Pr_S[h != c] <= (1+alpha) Pr_S[c != y] + eps simultaneously for all c.
    """
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")
    if not 0 <= alpha < 1:
        raise DomainError("alpha must lie in [0, 1)")
    k = agnostic_arity(eps, alpha, c_k)
    f = agnostic_loss(alpha, shift=eps)
    link = majority_link(k)
    res = learn_fw(f, link, cls, ds, eps, oracle=oracle, rng=rng)
    base = cls.label_matrix[res.support]
    mixture, exact = _materialize(base, res.support_weights, k=k, rng=rng, cap=atom_cap)
    gap = _mixture_gap(mixture, res.predictor.values)
    return LearnerOutput(
        hypothesis=mixture,
        predictor=res.predictor,
        diagnostics={
            "iterations": res.iterations,
            "final_loss": res.final_loss,
            "t_max": res.t_max,
            "arity": k,
            "mixture_exact": exact,
            "mixture_mean_gap": gap,
            "eps": eps,
            "alpha": alpha,
        },
    )


def relative_error_violation(
    h: RealPredictor, ds: LabeledDataset, cls: ConceptClass, alpha: float
) -> float:
    """max_c { Pr_S[Rad(h) != c] - (1+alpha) Pr_S[c != y] }, exactly."""
    counts = ds.pair_counts(cls.m)
    mass = counts.sum(axis=1) / ds.n
    labels = cls.float_labels
    err_h = (1.0 - labels @ (mass * h.values)) / 2.0
    net = (counts[:, 1] - counts[:, 0]) / ds.n
    err_y = (1.0 - labels @ net) / 2.0
    return float(np.max(err_h - (1.0 + alpha) * err_y))


# ---------------------------------------------------------------------------
# Fixed-distribution nasty noise


def detection_f(c: Concept, mu_bar: RealPredictor) -> RealPredictor:
    """The forced detector f = (c mu - 1)/(c mu + 1) where c mu >= 0, else -1."""
    t = c.labels * mu_bar.values
    vals = np.where(t >= 0, (t - 1.0) / (t + 1.0), -1.0)
    return RealPredictor(vals)


def certificate_eta(
    c: Concept,
    fdet: RealPredictor,
    ds: LabeledDataset,
    dist: FinitePointDistribution,
    check_tol: float = 1e-10,
) -> float:
    """eta(c, f, S, D) = Pr_S[c != y or f~ = 1] - Pr_D[f~ = 1], f~(x) ~ Rad(f(x)).

    Evaluated through the closed form (1/4) E_S[1 + f + c y (f - 1)]
    - (1/2) E_D[f]; the probabilistic and algebraic forms are asserted to
    agree before returning.
    """
    if not (c.m == fdet.m == dist.m):
        raise DomainError("certificate inputs live on different domains")
    counts = ds.pair_counts(c.m)
    nhat = counts / ds.n
    fv, cv = fdet.values, c.labels.astype(float)
    # algebraic form
    es = float(
        nhat[:, 1] @ (1.0 + fv + cv * (fv - 1.0))
        + nhat[:, 0] @ (1.0 + fv - cv * (fv - 1.0))
    )
    algebraic = es / 4.0 - float(dist.weights @ fv) / 2.0
    # probabilistic form: Pr[c != y or f~=1] = E[1 - 1[c=y] (1-f)/2]
    agree_p = nhat[:, 1] * (cv > 0) + nhat[:, 0] * (cv < 0)
    prob = float(1.0 - agree_p @ ((1.0 - fv) / 2.0)) - float(
        dist.weights @ ((1.0 + fv) / 2.0)
    )
    if abs(algebraic - prob) > check_tol:
        raise AssertionError(
            f"certificate forms disagree: {algebraic!r} vs {prob!r}"
        )
    return algebraic


def _certificates_all(
    labels: np.ndarray, mu_bar: np.ndarray, nhat: np.ndarray, dweights: np.ndarray
) -> np.ndarray:
    """eta(c, f_{c,mu}, S, D) for every concept at once."""
    t = labels * mu_bar[None, :]
    fmat = np.where(t >= 0, (t - 1.0) / (t + 1.0), -1.0)
    es = (
        (1.0 + fmat + labels * (fmat - 1.0)) @ nhat[:, 1]
        + (1.0 + fmat - labels * (fmat - 1.0)) @ nhat[:, 0]
    )
    return es / 4.0 - (fmat @ dweights) / 2.0


def learn_fixed_dist_nasty(
    ds: LabeledDataset,
    cls: ConceptClass,
    dist: FinitePointDistribution,
    eps: float,
    kappa: float | None = None,
    rng: np.random.Generator | None = None,
    round_budget: int | None = None,
    learning_rate: float | None = None,
    check_every: int = 32,
    min_rounds: int = 8192,
    atom_cap: int = ATOM_CAP,
) -> LearnerOutput:
    """Solve the certificate game for the known-distribution nasty learner.

    Multiplicative weights runs over the concept class.  Each round the
    concept weighting mu_r is answered by the smoothed majority response with
    mean M_k(mu_r), the detection set grows by the forced detectors
    f_{c, mu_r}, and each concept is paid its error under D minus its best
    certificate so far.  The averaged response satisfies, post hoc verified,

        Pr_D[h != c] <= max_f eta(c, f, S, D) + eps/2   for every c in C.
    """
    if rng is None:
        raise DomainError("learn_fixed_dist_nasty needs an rng")
    if kappa is None:
        kappa = default_kappa(ds.n)
    n_c = len(cls)
    m = cls.m
    if dist.m != m:
        raise DomainError("distribution and class domains differ")
    k = math.ceil(4.0 / eps**2)
    k += 1 if k % 2 == 0 else 0
    if round_budget is None:
        round_budget = math.ceil(64.0 * math.log(n_c) / eps**2) if n_c > 1 else 1
    if learning_rate is None:
        learning_rate = math.sqrt(math.log(max(n_c, 2)) / round_budget)
    min_rounds = min(min_rounds, round_budget)

    labels = cls.float_labels
    counts = ds.pair_counts(m)
    nhat = counts / ds.n
    dw = dist.weights

    mwu = np.full(n_c, 1.0 / n_c)
    best_eta = np.full(n_c, -np.inf)
    h_sum = np.zeros(m)
    # reservoir of round strategies, for materializing the output mixture
    reservoir: list[np.ndarray] = []
    reservoir_cap = 512
    value_trace = []
    rounds = 0
    converged = False

    for r in range(1, round_budget + 1):
        rounds = r
        mu_bar = mwu @ labels
        h_r = np.asarray(majority_mean(k, np.clip(mu_bar, -1.0, 1.0)))
        h_sum += h_r
        best_eta = np.maximum(best_eta, _certificates_all(labels, mu_bar, nhat, dw))
        err = (1.0 - labels @ (dw * h_r)) / 2.0
        payoff = err - best_eta
        value_trace.append(float(mwu @ payoff))
        if len(reservoir) < reservoir_cap:
            reservoir.append(mwu.copy())
        else:
            j = rng.integers(0, r)
            if j < reservoir_cap:
                reservoir[j] = mwu.copy()
        mwu = mwu * np.exp(learning_rate * payoff)
        mwu /= mwu.sum()
        if r >= min_rounds and (r % check_every == 0 or r == round_budget):
            h_avg = h_sum / r
            viol = np.max((1.0 - labels @ (dw * h_avg)) / 2.0 - best_eta)
            if viol <= eps / 2.0:
                converged = True
                break

    h_avg = h_sum / rounds
    gaps = (1.0 - labels @ (dw * h_avg)) / 2.0 - best_eta
    worst = int(np.argmax(gaps))
    converged = gaps[worst] <= eps / 2.0
    if not converged:
        raise GameConvergenceError(
            f"game value {gaps[worst]:.4g} > eps/2 = {eps / 2:.4g} "
            f"after {rounds} rounds (worst concept {worst})",
            worst_concept=worst,
            violation=float(gaps[worst]),
        )

    # materialize: a uniform round from the reservoir, then an iid k-tuple
    n_atoms = min(atom_cap, max(128, 4_000_000 // k))
    strat_idx = rng.integers(0, len(reservoir), size=n_atoms)
    merged: dict[bytes, float] = {}
    for j in np.unique(strat_idx):
        rows_j = rng.multinomial(k, reservoir[j], size=int((strat_idx == j).sum()))
        for row in rows_j.astype(np.int64):
            key = row.tobytes()
            merged[key] = merged.get(key, 0.0) + 1.0 / n_atoms
    rows = np.stack([np.frombuffer(key, dtype=np.int64) for key in merged])
    tuples = np.repeat(
        np.tile(np.arange(n_c), rows.shape[0]), rows.reshape(-1)
    ).reshape(rows.shape[0], k)
    aw = np.array(list(merged.values()))
    mixture = MixtureHypothesis(cls.label_matrix, tuples, aw / aw.sum())
    predictor = RealPredictor(np.clip(h_avg, -1.0, 1.0))
    return LearnerOutput(
        hypothesis=mixture,
        predictor=predictor,
        diagnostics={
            "rounds": rounds,
            "round_budget": round_budget,
            "converged": converged,
            "max_violation": float(gaps[worst]),
            "worst_concept": worst,
            "arity": k,
            "kappa": kappa,
            "certificates": best_eta,
            "value_trace_last": value_trace[-1],
            "mixture_exact": False,
            "mixture_mean_gap": _mixture_gap(mixture, predictor.values),
            "eps": eps,
        },
    )


# ---------------------------------------------------------------------------
# Baselines


def erm_baseline(ds: LabeledDataset, cls: ConceptClass) -> LearnerOutput:
    """Plain ERM as a deterministic hypothesis (a point-mass mixture)."""
    idx, c = erm_max_agreement(cls, ds)
    return LearnerOutput(
        hypothesis=MixtureHypothesis.point_mass(c),
        predictor=RealPredictor.from_concept(c),
        diagnostics={"concept_index": idx},
    )


def coinflip_baseline(m: int) -> LearnerOutput:
    """The constant-0 predictor; error exactly 1/2 against any target."""
    return LearnerOutput(
        hypothesis=None,
        predictor=RealPredictor.constant(m, 0.0),
        diagnostics={},
    )
