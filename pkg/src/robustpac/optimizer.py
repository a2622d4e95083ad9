"""The conditional-gradient loop that drives the worst-case corner loss below eps.

The loop maintains a point mu in the convex hull of the class (as a domain
vector plus sparse weights over visited concepts), plays the predictor
h = g(mu), asks an oracle for the concept with (approximately) maximal loss
against h, and either halts (loss <= 19/20 eps) or steps toward the offender
with gamma = 2 / (t + 2).  With nonpositive agreement coefficients and a
feasible nondecreasing link, the duality gap of the associated convex progress
measure bounds the worst-case loss, so the loop halts within
floor(80 L ||f||_inf / eps - 2) iterations.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .core import ConceptClass, DomainError, LabeledDataset, RealPredictor
from .erm import WeightedDataset, weighted_erm
from .loss import CornerLoss, LinkFunction, check_g_feasible

__all__ = [
    "ConfigurationError",
    "BudgetExceededError",
    "FwResult",
    "iteration_budget",
    "learn_fw",
    "duality_gap",
    "loss_scan",
]


class ConfigurationError(ValueError):
    """The (loss, link, eps) triple violates the optimizer's preconditions."""


class BudgetExceededError(RuntimeError):
    """The loop ran past its iteration budget; carries the duality-gap trace."""

    def __init__(self, message, gap_trace):
        super().__init__(message)
        self.gap_trace = gap_trace


@dataclass
class FwResult:
    """Converged state: h = g(mu) on the domain plus the mixture record over C."""

    predictor: RealPredictor  # g(mu) on every domain point
    mu_domain: np.ndarray  # the maintained mean vector on the domain
    support: np.ndarray  # concept indices with nonzero weight
    support_weights: np.ndarray  # matching convex weights
    iterations: int
    final_loss: float
    exit_gap: float
    t_max: int
    floor_tightened: bool
    history: list = field(default_factory=list)  # (t, c_t, loss of c_t) per step


def iteration_budget(lipschitz: float, sup_norm: float, eps: float) -> int:
    return math.floor(80.0 * lipschitz * sup_norm / eps - 2.0)


def _loss_pieces(f: CornerLoss, cls: ConceptClass, counts: np.ndarray, n: int, h: np.ndarray):
    """Linear + constant split of the loss over concepts at predictor h.

    Returns (w, q) with loss(c) = <c_labels, w> + q, from the decomposition
    f~ = (1/4)(c (a_y h + b_y) + Q_y(h)) aggregated by pair counts.
    """
    a, b = f.a, f.b
    w = (counts[:, 0] * (a[0] * h + b[0]) + counts[:, 1] * (a[1] * h + b[1])) / (4.0 * n)
    q = float(counts[:, 0] @ f.q_of(h, -1) + counts[:, 1] @ f.q_of(h, 1)) / (4.0 * n)
    return w, q


def loss_scan(f: CornerLoss, cls: ConceptClass, ds: LabeledDataset, h: np.ndarray) -> np.ndarray:
    """Exact ell_S(c, h) for every concept in the class."""
    counts = ds.pair_counts(cls.m)
    w, q = _loss_pieces(f, cls, counts, ds.n, np.asarray(h, dtype=float))
    return cls.float_labels @ w + q


def learn_fw(
    f: CornerLoss,
    g: LinkFunction,
    cls: ConceptClass,
    ds: LabeledDataset,
    eps: float,
    oracle: str = "scan",
    rng: np.random.Generator | None = None,
    delta_inner: float | None = None,
    trace_path=None,
    feasibility_grid: int = 10**4,
) -> FwResult:
    """Run the loop until max_c ell_S(c, g(mu)) <= eps.

    ``oracle`` selects the inner maximization: "scan" (exact, deterministic)
    or "weighted_erm" (the sampling reduction, slack eps/20 with probability
    1 - delta_inner per step).
    """
    if ds.n == 0:
        raise DomainError("cannot optimize over an empty dataset")
    if np.any(f.a > 0):
        raise ConfigurationError(f"agreement coefficients must be <= 0, got {f.a}")
    report = check_g_feasible(f, g, grid=feasibility_grid)
    if not report.passed:
        raise ConfigurationError(
            f"link {g.name} is not feasible for {f.name}: violation "
            f"{report.max_violation:.3g} at mu={report.argmax_mu:.4f}, y={report.argmax_y}"
        )
    g.validate()
    t_max = iteration_budget(g.lipschitz, f.sup_norm, eps)
    if t_max < 1:
        raise ConfigurationError(
            f"eps={eps:g} leaves no iteration budget (T_max={t_max}); decrease eps"
        )
    continuous_budget = 80.0 * g.lipschitz * f.sup_norm / eps - 2.0
    floor_tightened = (continuous_budget - t_max) / continuous_budget > 0.01
    if oracle == "weighted_erm":
        if rng is None:
            raise ConfigurationError("the weighted_erm oracle needs an rng")
        if delta_inner is None:
            delta_inner = 1e-4 / t_max
    elif oracle != "scan":
        raise ConfigurationError(f"unknown oracle {oracle!r}")

    counts = ds.pair_counts(cls.m)
    n = ds.n
    labels = cls.float_labels
    weights: dict[int, float] = {0: 1.0}
    mu = labels[0].copy()
    history = []
    gap_trace = []
    trace_rows = []
    a, b = f.a, f.b

    t = 0
    while True:
        t += 1
        h = np.asarray(g(mu))
        w, q = _loss_pieces(f, cls, counts, n, h)
        losses = labels @ w + q
        if oracle == "scan":
            c_t = int(np.argmax(losses))
        else:
            # ell(c) = (1/n) sum_i v_i c(x_i) y_i + q with v_i = y_i (a_y h + b_y)/4
            hv = h[ds.xs]
            ay = np.where(ds.ys > 0, a[1], a[0])
            by = np.where(ds.ys > 0, b[1], b[0])
            v = ds.ys * (ay * hv + by) / 4.0
            weight_bound = float((np.abs(a) + np.abs(b)).max()) / 4.0
            wds = WeightedDataset(ds.xs, ds.ys, v, bound=weight_bound)
            c_t, _ = weighted_erm(cls, wds, eps / 20.0, delta_inner, rng)
        loss_t = float(losses[c_t])
        history.append((t, c_t, loss_t))
        # gap = max_c ell(c) - ell(mu, g(mu)); the shared constant q cancels
        gap = float(losses.max() - q - mu @ w)
        gap_trace.append(gap)
        if trace_path is not None:
            trace_rows.append((t, gap, loss_t, 2.0 / (t + 2.0)))
        if loss_t <= 19.0 / 20.0 * eps:
            break
        if t >= t_max:
            raise BudgetExceededError(
                f"no convergence within T_max={t_max} (last loss {loss_t:.4g})", gap_trace
            )
        gamma = 2.0 / (t + 2.0)
        mu = (1.0 - gamma) * mu + gamma * labels[c_t]
        for key in weights:
            weights[key] *= 1.0 - gamma
        weights[c_t] = weights.get(c_t, 0.0) + gamma

    if trace_path is not None:
        with open(trace_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "gap", "loss", "gamma"])
            writer.writerows(trace_rows)

    support = np.array(sorted(weights), dtype=np.int64)
    support_weights = np.array([weights[i] for i in support])
    support_weights /= support_weights.sum()
    return FwResult(
        predictor=RealPredictor(np.asarray(g(mu))),
        mu_domain=mu,
        support=support,
        support_weights=support_weights,
        iterations=t,
        final_loss=loss_t,
        exit_gap=gap_trace[-1],
        t_max=t_max,
        floor_tightened=floor_tightened,
        history=history,
    )


def duality_gap(
    mu_domain: np.ndarray,
    f: CornerLoss,
    g: LinkFunction,
    ds: LabeledDataset,
    cls: ConceptClass,
) -> float:
    """max_c <grad P(mu_S), mu_S - c_S>, scanning the class exactly.

    The per-point gradient aggregates to the domain through pair counts, and
    the maximum is attained at a vertex, i.e. at some concept.
    """
    counts = ds.pair_counts(cls.m)
    gmu = np.asarray(g(np.asarray(mu_domain, dtype=float)))
    a, b = f.a, f.b
    grad_dom = -(
        counts[:, 0] * (a[0] * gmu + b[0]) + counts[:, 1] * (a[1] * gmu + b[1])
    ) / (4.0 * ds.n)
    inner = cls.float_labels @ grad_dom
    return float(grad_dom @ mu_domain - inner.min())
