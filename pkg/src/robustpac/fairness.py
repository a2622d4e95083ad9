"""Multiaccuracy and calibration audits, and their bridge to robust learning.

Multiaccuracy bounds the correlation of every class member with the residual
y - h(x); it is exactly equivalent (at tau = 2 eps) to Rad(h) being an
optimal-error agnostic learner against every concept simultaneously.  A
calibrated multiaccurate predictor composed with a bijective feasible link
has worst-case malicious loss O(tau), which is the post-processing route to
the malicious and nasty learners.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import (
    ConceptClass,
    DomainError,
    JointDistribution,
    LabeledDataset,
    RealPredictor,
)
from .loss import LinkFunction, malicious_loss
from .optimizer import loss_scan

__all__ = [
    "AuditError",
    "AuditReport",
    "multiaccuracy_violation",
    "calibration_violation",
    "agnostic_error_gap",
    "postprocess_cal_ma",
]

CAL_MA_CONSTANT = 4.0  # the proof's term-by-term budget is 3 tau; one extra for float slack


class AuditError(RuntimeError):
    """A precondition audit failed at the requested tolerance."""


@dataclass(frozen=True)
class AuditReport:
    max_violation: float
    witness: object  # concept index (multiaccuracy) or level value (calibration)
    tau: float

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tau

    def to_json(self) -> str:
        return json.dumps(
            {
                "max_violation": self.max_violation,
                "witness": self.witness,
                "tau": self.tau,
                "passed": bool(self.passed),
            }
        )


def multiaccuracy_violation(
    h: RealPredictor, cls: ConceptClass, joint: JointDistribution, tau: float = 0.0
) -> AuditReport:
    """max_c E[c(x) (y - h(x))] under the joint law, exactly."""
    if h.m != joint.m or cls.m != joint.m:
        raise DomainError("predictor, class, and joint law domains differ")
    w = joint.weights
    residual = (w[:, 1] - w[:, 0]) - (w[:, 0] + w[:, 1]) * h.values
    scores = cls.float_labels @ residual
    idx = int(np.argmax(scores))
    return AuditReport(max_violation=float(scores[idx]), witness=idx, tau=tau)


def calibration_violation(
    h: RealPredictor, joint: JointDistribution, tau: float = 0.0
) -> AuditReport:
    """max over realized levels v of |E[y | h(x) = v] - v|; zero-mass levels skipped."""
    if h.m != joint.m:
        raise DomainError("predictor and joint law domains differ")
    w = joint.weights
    mass = w.sum(axis=1)
    worst, witness = 0.0, None
    for v in np.unique(h.values):
        sel = h.values == v
        level_mass = mass[sel].sum()
        if level_mass <= 0:
            continue
        ey = float((w[sel, 1] - w[sel, 0]).sum() / level_mass)
        gap = abs(ey - v)
        if gap > worst:
            worst, witness = gap, float(v)
    return AuditReport(max_violation=worst, witness=witness, tau=tau)


def agnostic_error_gap(
    h: RealPredictor, cls: ConceptClass, joint: JointDistribution
) -> np.ndarray:
    """error_Dx(Rad(h), c) - Pr_Dxy[y != c(x)] per concept, exactly.

    Equals half the multiaccuracy correlation per concept, which is the content
    of the equivalence between multiaccuracy and optimal-error agnostic
    learning.
    """
    w = joint.weights
    mass = w.sum(axis=1)
    labels = cls.float_labels
    err_h = (1.0 - labels @ (mass * h.values)) / 2.0
    err_y = (1.0 - labels @ (w[:, 1] - w[:, 0])) / 2.0
    return err_h - err_y


def postprocess_cal_ma(
    mu: RealPredictor,
    g: LinkFunction,
    ds: LabeledDataset,
    cls: ConceptClass,
    tau: float,
    constant: float = CAL_MA_CONSTANT,
    audit_tol: float = 1e-9,
) -> tuple[RealPredictor, dict]:
    """Compose a calibrated multiaccurate mu with a bijective feasible link.

    Audits mu at level tau on Unif(S), returns h = g(mu), and certifies
    max_c ell_S(c, h) <= constant * tau for the malicious loss (the proof's
    own accounting gives 3 tau: the feasibility term is <= 0, multiaccuracy
    pays 2 tau, calibration pays tau |v| <= tau).
    """
    joint = ds.empirical_joint(mu.m)
    ma = multiaccuracy_violation(mu, cls, joint, tau)
    cal = calibration_violation(mu, joint, tau)
    if ma.max_violation > tau + audit_tol:
        raise AuditError(f"multiaccuracy audit failed: {ma.max_violation:.3g} > {tau:g}")
    if cal.max_violation > tau + audit_tol:
        raise AuditError(f"calibration audit failed: {cal.max_violation:.3g} > {tau:g}")
    h = RealPredictor(np.asarray(g(mu.values)))
    measured = float(loss_scan(malicious_loss(), cls, ds, h.values).max())
    certified = constant * tau
    if measured > certified + audit_tol:
        raise AuditError(
            f"measured loss {measured:.3g} exceeds certified {certified:.3g}"
        )
    report = {
        "measured_max_loss": measured,
        "certified": certified,
        "tight_budget": 3.0 * tau,
        "ratio_vs_tight": measured / (3.0 * tau) if tau > 0 else None,
        "multiaccuracy": ma,
        "calibration": cal,
    }
    return h, report
