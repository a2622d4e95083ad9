"""Noise processes, worst-case strategies, and the exact lower-bound constructions.

Four corruption models: malicious (each index independently adversarial with
probability eta), nasty (a Bin(n, eta)-sized subset rewritten after the
adversary sees the clean sample), nasty classification (nasty restricted to
label flips), and agnostic (labels drawn from a pre-committed randomized
function within eta of the target).  TV-noise instances and the impossibility
constructions come with their exact error floors.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .core import (
    Concept,
    ConceptClass,
    DomainError,
    FinitePointDistribution,
    JointDistribution,
    LabeledDataset,
    RealPredictor,
    error_rate,
)

__all__ = [
    "ConstructionError",
    "NoiseSpec",
    "TvInstance",
    "corrupt",
    "sample_malicious",
    "corrupt_nasty",
    "sample_agnostic",
    "tv_instance",
    "tv_bayes_optimal_error",
    "tv_posterior_enumeration_error",
    "ImproperMalInstance",
    "ImproperAgnosticInstance",
    "DistinctInstance",
    "impossibility_instances",
]

MODELS = ("malicious", "nasty", "nasty_classification", "agnostic", "tv")


class ConstructionError(ValueError):
    """An adversary or instance violates its own model constraints."""


@dataclass(frozen=True)
class NoiseSpec:
    """Which noise process to run, at what rate, with which strategy."""

    model: str
    eta: float
    strategy: str = "random"
    params: tuple = ()

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConstructionError(f"unknown noise model {self.model!r}")
        if not 0.0 <= self.eta <= 1.0:
            raise ConstructionError(f"eta must lie in [0, 1], got {self.eta}")


# ---------------------------------------------------------------------------
# Corruption processes


def sample_malicious(
    n: int,
    dist: FinitePointDistribution,
    target: Concept,
    spec: NoiseSpec,
    rng: np.random.Generator,
) -> LabeledDataset:
    """Generate an n-point malicious sample: each index is adversarial w.p. eta.

    Strategy "plant" always emits the fixed pair params=(x', y').
    """
    if spec.model != "malicious":
        raise ConstructionError("spec is not a malicious NoiseSpec")
    xs = dist.sample(n, rng)
    ys = target.labels[xs].astype(np.int8)
    clean_xs, clean_ys = xs.copy(), ys.copy()
    mask = rng.random(n) < spec.eta
    if mask.any():
        if spec.strategy == "plant":
            xp, yp = spec.params
            xs = xs.copy()
            ys = ys.copy()
            xs[mask] = int(xp)
            ys[mask] = int(yp)
        elif spec.strategy == "none":
            mask = np.zeros(n, dtype=bool)
        else:
            raise ConstructionError(f"unknown malicious strategy {spec.strategy!r}")
    return LabeledDataset(xs, ys, corrupted_mask=mask, clean_xs=clean_xs, clean_ys=clean_ys)


def _nasty_pick_indices(
    n: int, size: int, preferred: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Choose `size` indices, preferring the given pool, filling randomly."""
    pool = preferred[rng.permutation(preferred.size)]
    if pool.size >= size:
        return pool[:size]
    rest = np.setdiff1d(np.arange(n), preferred, assume_unique=False)
    extra = rng.choice(rest, size=size - pool.size, replace=False) if size > pool.size else []
    return np.concatenate([pool, np.asarray(extra, dtype=np.int64)])


def corrupt_nasty(
    clean: LabeledDataset,
    spec: NoiseSpec,
    rng: np.random.Generator,
    target: Concept | None = None,
    rival: Concept | None = None,
    tv: "TvInstance | None" = None,
) -> LabeledDataset:
    """Apply a nasty (or nasty-classification) adversary to a realized clean sample.

    |J| ~ Bin(n, eta); entries outside J are untouched.  Strategies:

    - "random_flip": J uniform, labels flipped (x kept, legal for both models).
    - "concentrate": J drawn from the region where `rival` disagrees with the
      clean labels first, and the chosen pairs are rewritten to the rival's
      labels.
    - "tv_mimic" (nasty only): per-index maximal coupling against the supplied
      TvInstance, so the output is i.i.d. from the corrupted law while |J| is
      exactly Bin(n, eta).
    """
    if spec.model not in ("nasty", "nasty_classification"):
        raise ConstructionError("spec is not a nasty NoiseSpec")
    n = clean.n
    xs = clean.xs.copy()
    ys = clean.ys.copy()
    mask = np.zeros(n, dtype=bool)

    if spec.strategy == "tv_mimic":
        if spec.model != "nasty":
            raise ConstructionError("tv_mimic moves points; it needs the full nasty model")
        if tv is None:
            raise ConstructionError("tv_mimic needs a TvInstance")
        clean_w = tv.clean_law.weights
        corr_w = tv.corrupted_law.weights
        ycol = (ys > 0).astype(int)
        p_clean = clean_w[xs, ycol]
        p_corr = corr_w[xs, ycol]
        keep_prob = np.minimum(1.0, np.divide(p_corr, p_clean, out=np.ones(n), where=p_clean > 0))
        mask = rng.random(n) >= keep_prob
        excess = np.maximum(0.0, corr_w - clean_w).reshape(-1)
        if mask.any():
            excess /= excess.sum()
            draw = rng.choice(excess.size, size=int(mask.sum()), p=excess)
            xs[mask] = draw // 2
            ys[mask] = np.where(draw % 2 == 1, 1, -1)
    else:
        size = int(rng.binomial(n, spec.eta))
        if size > 0:
            if spec.strategy == "random_flip":
                j = rng.choice(n, size=size, replace=False)
                xs_new, ys_new = xs[j], -ys[j]
            elif spec.strategy == "concentrate":
                if rival is None:
                    raise ConstructionError("concentrate needs a rival concept")
                disagree = np.flatnonzero(rival.labels[xs] != ys)
                j = _nasty_pick_indices(n, size, disagree, rng)
                xs_new = xs[j]
                ys_new = rival.labels[xs[j]].astype(np.int8)
            else:
                raise ConstructionError(f"unknown nasty strategy {spec.strategy!r}")
            mask[j] = True
            xs[j] = xs_new
            ys[j] = ys_new

    if spec.model == "nasty_classification" and np.any(xs != clean.xs):
        raise ConstructionError("nasty_classification must preserve every x")
    return LabeledDataset(xs, ys, corrupted_mask=mask, clean_xs=clean.xs, clean_ys=clean.ys)


def sample_agnostic(
    n: int,
    dist: FinitePointDistribution,
    target: Concept,
    label_table: RealPredictor,
    eta: float,
    rng: np.random.Generator,
) -> LabeledDataset:
    """Draw (x, f(x)) with f the pre-committed randomized labeler.

    ``label_table`` holds E[f(x)] per point; the eta budget
    error(f, target) <= eta is verified exactly at construction.
    """
    budget = error_rate(label_table, target, dist)
    if budget > eta + 1e-12:
        raise ConstructionError(
            f"agnostic strategy has error {budget:.6g} > eta = {eta:.6g}"
        )
    xs = dist.sample(n, rng)
    ys = np.where(rng.random(n) < (1.0 + label_table.values[xs]) / 2.0, 1, -1).astype(np.int8)
    return LabeledDataset(xs, ys)


def corrupt(
    clean: LabeledDataset,
    spec: NoiseSpec,
    rng: np.random.Generator,
    **kwargs,
) -> LabeledDataset:
    """Dispatch nasty-family corruption of a realized sample by NoiseSpec."""
    if spec.eta == 0.0:
        return LabeledDataset(
            clean.xs,
            clean.ys,
            corrupted_mask=np.zeros(clean.n, dtype=bool),
            clean_xs=clean.xs,
            clean_ys=clean.ys,
        )
    return corrupt_nasty(clean, spec, rng, **kwargs)


# ---------------------------------------------------------------------------
# The TV-noise lower-bound construction


@dataclass(frozen=True)
class TvInstance:
    """An exact (clean law, corrupted law) pair at total variation eta.

    The domain is a size-d shattered set.  The corrupted law flips the label
    at the hidden x_wrong and doubles the mass of the fixed x_random with
    uniform labels; the clean law inflates x_wrong to mass eta.
    """

    d: int
    eta: float
    c_star: Concept
    x_wrong: int
    x_random: int
    clean_law: JointDistribution
    corrupted_law: JointDistribution

    def clean_marginal(self) -> FinitePointDistribution:
        return self.clean_law.x_marginal()

    def to_json(self) -> str:
        return json.dumps(
            {
                "d": self.d,
                "eta": self.eta,
                "c_star": self.c_star.labels.tolist(),
                "x_wrong": self.x_wrong,
                "x_random": self.x_random,
                "clean_law": self.clean_law.weights.tolist(),
                "corrupted_law": self.corrupted_law.weights.tolist(),
            }
        )

    @staticmethod
    def from_json(text: str) -> "TvInstance":
        obj = json.loads(text)
        return TvInstance(
            d=obj["d"],
            eta=obj["eta"],
            c_star=Concept(np.array(obj["c_star"], dtype=np.int8)),
            x_wrong=obj["x_wrong"],
            x_random=obj["x_random"],
            clean_law=JointDistribution(np.array(obj["clean_law"])),
            corrupted_law=JointDistribution(np.array(obj["corrupted_law"])),
        )


def tv_instance(d: int, eta: float, rng: np.random.Generator) -> TvInstance:
    """Draw the hidden (c_star, x_wrong) and emit both laws exactly.

    Masses: clean puts eta on x_wrong, (1-2 eta)/(d-3) on each of the d-2
    correct points, and (eta d - eta - 1)/(d-3) on x_random; the corrupted law
    puts (1-2 eta)/(d-3) on x_wrong with the flipped label and splits
    2(eta d - eta - 1)/(d-3) evenly between both labels of x_random.
    """
    if d < 4:
        raise DomainError("the construction needs d >= 4")
    if eta < 1.0 / (d - 1):
        raise DomainError(f"eta must be >= 1/(d-1) = {1.0 / (d - 1):.6g}")
    if eta > 0.5:
        raise DomainError("eta must be <= 1/2 for nonnegative masses")
    c_star = Concept(np.where(rng.random(d) < 0.5, 1, -1).astype(np.int8))
    x_random = 0
    x_wrong = int(rng.integers(1, d))
    base = (1.0 - 2.0 * eta) / (d - 3)
    rest = (eta * d - eta - 1.0) / (d - 3)

    clean = np.zeros((d, 2))
    corr = np.zeros((d, 2))
    ycols = (c_star.labels > 0).astype(int)
    for x in range(d):
        col = ycols[x]
        if x == x_wrong:
            clean[x, col] = eta
            corr[x, 1 - col] = base
        elif x == x_random:
            clean[x, col] = rest
            corr[x, 0] = rest
            corr[x, 1] = rest
        else:
            clean[x, col] = base
            corr[x, col] = base
    return TvInstance(
        d=d,
        eta=eta,
        c_star=c_star,
        x_wrong=x_wrong,
        x_random=x_random,
        clean_law=JointDistribution(clean),
        corrupted_law=JointDistribution(corr),
    )


def tv_total_variation(inst: TvInstance) -> float:
    diff = inst.clean_law.weights - inst.corrupted_law.weights
    return float(np.maximum(diff, 0.0).sum())


def _tv_regime(d: int, eta: float) -> bool:
    # the label-matching responder is optimal iff eta (d-3) <= (d-2)(1-2 eta)
    return 1.0 / (d - 1) <= eta <= (d - 2.0) / (3.0 * d - 7.0)


def tv_bayes_optimal_error(d: int, eta: float) -> float:
    """Exact optimal expected error of any responder that sees only the corrupted law.

    Equals (1/2)(1 - |(d-2)(1-2 eta)/(d-3) - eta|); inside the regime
    O(1/d) <= eta <= 1/3 - O(1/d) the absolute value drops and the optimal
    responder matches the observed labels.
    """
    if not _tv_regime(d, eta):
        warnings.warn(
            f"(d={d}, eta={eta:g}) is outside the label-matching regime; "
            "the closed form still gives the exact per-point optimum",
            stacklevel=2,
        )
    kw = (d - 2.0) * (1.0 - 2.0 * eta) / (d - 3.0) - eta
    return 0.5 * (1.0 - abs(kw))


def tv_posterior_enumeration_error(d: int, eta: float) -> float:
    """Brute-force Bayes responder over all plausible (c_star, x_wrong) pairs.

    Conditioned on the corrupted law, the 2(d-1) candidates (x_wrong choice
    times the sign at x_random) are equally likely; the optimal randomized
    responder takes the posterior-mean sign per point and its error is
    averaged over candidates under the matching clean marginal.
    """
    if d > 12:
        raise DomainError("posterior enumeration is intended for d <= 12")
    base = (1.0 - 2.0 * eta) / (d - 3)
    rest = (eta * d - eta - 1.0) / (d - 3)
    # fix observed labels y(x) = +1 everywhere; x_random = 0 (symmetry)
    candidates = []
    for xw in range(1, d):
        for s in (-1, 1):
            c = np.ones(d)
            c[xw] = -1.0
            c[0] = s
            candidates.append((xw, c))
    post = np.stack([c for _, c in candidates])
    coef = np.zeros(d)
    for (xw, c), row in zip(candidates, post):
        w = np.full(d, base)
        w[xw] = eta
        w[0] = rest
        coef += w * row / len(candidates)
    h = np.sign(coef)
    err = 0.0
    for (xw, c), row in zip(candidates, post):
        w = np.full(d, base)
        w[xw] = eta
        w[0] = rest
        err += float(w @ (1.0 - h * row) / 2.0) / len(candidates)
    return err


# ---------------------------------------------------------------------------
# Impossibility constructions


@dataclass(frozen=True)
class ImproperMalInstance:
    """Malicious-noise scenario forcing proper mixtures to error >= 1/k."""

    k: int
    joint: JointDistribution  # what the learner sees: x ~ Unif[k], y = -1
    concept_class: ConceptClass
    eta: float
    error_floor: float

    def to_json(self) -> str:
        return json.dumps(
            {"kind": "improper_mal", "k": self.k, "eta": self.eta, "error_floor": self.error_floor}
        )

    def scenario(self, i_star: int) -> tuple[FinitePointDistribution, Concept, NoiseSpec]:
        """The true (D_x, target, adversary) under which the data law is realized."""
        w = np.full(self.k, 1.0 / (self.k - 1))
        w[i_star] = 0.0
        dist = FinitePointDistribution(w)
        target = self.concept_class.concept(i_star)
        spec = NoiseSpec("malicious", self.eta, strategy="plant", params=(i_star, -1))
        return dist, target, spec

    def mixture_error(self, mix_weights: np.ndarray, i_star: int) -> float:
        """Exact error of a proper mixture against c_{i*} under its D_x."""
        w = np.asarray(mix_weights, dtype=float)
        return float((w.sum() - w[i_star]) / (self.k - 1))


@dataclass(frozen=True)
class ImproperAgnosticInstance:
    """Agnostic scenario over Unif[k] forcing proper mixtures to 2 eta (1 - eta)."""

    k: int
    joint: JointDistribution
    concept_class: ConceptClass
    eta: float
    error_floor: float

    def to_json(self) -> str:
        return json.dumps(
            {"kind": "improper_agnostic", "k": self.k, "eta": self.eta, "error_floor": self.error_floor}
        )

    def scenario(self, i_star: int):
        dist = FinitePointDistribution.uniform(self.k)
        target = self.concept_class.concept(i_star)
        table = RealPredictor.constant(self.k, -1.0)  # f always outputs -1
        return dist, target, table

    def mixture_error(self, mix_weights: np.ndarray, i_star: int) -> float:
        w = np.asarray(mix_weights, dtype=float)
        return float(2.0 * self.eta * (w.sum() - w[i_star]))


@dataclass(frozen=True)
class DistinctInstance:
    """One data law, two readings: malicious at p/3 and agnostic at 2p/3.

    Any single algorithm's probability q of labeling x=1 positive must satisfy
    q >= 3/4 - eps (1 - p/3)/(2p/3) (malicious reading) and q <= 2/3 + eps/p
    (agnostic reading); for p = 1 both fail together once eps < 1/24.
    """

    p: float
    joint: JointDistribution
    concept_class: ConceptClass

    def to_json(self) -> str:
        return json.dumps(
            {"kind": "distinct", "p": self.p, "joint": self.joint.weights.tolist()}
        )

    def q_lower(self, eps: float) -> float:
        return 0.75 - eps * (1.0 - self.p / 3.0) / (2.0 * self.p / 3.0)

    def q_upper(self, eps: float) -> float:
        return 2.0 / 3.0 + eps / self.p

    def feasible(self, eps: float) -> bool:
        return self.q_lower(eps) <= min(self.q_upper(eps), 1.0)

    def malicious_scenario(self):
        denom = 1.0 - self.p / 3.0
        dist = FinitePointDistribution(np.array([(1.0 - self.p) / denom, (2.0 * self.p / 3.0) / denom]))
        target = self.concept_class.concept(1)  # c_1: +1 at x=1
        spec = NoiseSpec("malicious", self.p / 3.0, strategy="plant", params=(1, -1))
        return dist, target, spec

    def agnostic_scenario(self):
        dist = FinitePointDistribution(np.array([1.0 - self.p, self.p]))
        target = self.concept_class.concept(0)  # c_{-1}: all minus
        table = RealPredictor(np.array([-1.0, 1.0 / 3.0]))  # E f(1) = 1/3
        return dist, target, table, 2.0 * self.p / 3.0


def impossibility_instances(which: str, k: int = 4, p: float = 1.0):
    """Emit the named construction with its exact optimal bounds."""
    if which == "improper_mal":
        if k < 2:
            raise DomainError("k must be >= 2")
        joint = JointDistribution(np.stack([np.full(k, 1.0 / k), np.zeros(k)], axis=1))
        return ImproperMalInstance(
            k=k,
            joint=joint,
            concept_class=ConceptClass.sparse_one(k),
            eta=1.0 / k,
            error_floor=1.0 / k,
        )
    if which == "improper_agnostic":
        if k < 2:
            raise DomainError("k must be >= 2")
        joint = JointDistribution(np.stack([np.full(k, 1.0 / k), np.zeros(k)], axis=1))
        eta = 1.0 / k
        return ImproperAgnosticInstance(
            k=k,
            joint=joint,
            concept_class=ConceptClass.sparse_one(k),
            eta=eta,
            error_floor=2.0 * eta * (1.0 - eta),
        )
    if which == "distinct":
        if not 0.0 < p <= 1.0:
            raise DomainError("p must lie in (0, 1]")
        joint = JointDistribution(np.array([[1.0 - p, 0.0], [p / 3.0, 2.0 * p / 3.0]]))
        cls = ConceptClass(np.array([[-1, -1], [-1, 1]], dtype=np.int8), name="distinct-pair")
        return DistinctInstance(p=p, joint=joint, concept_class=cls)
    raise DomainError(f"unknown impossibility instance {which!r}")
