"""Corner-table losses, link functions, and the Frank-Wolfe progress measure.

A loss is a function f on the cube {+-1}^3 of (c, h, y) values, stored as its
8 corners and extended multilinearly to [-1,1]^2 in (c, h).  Every such f
decomposes per y as

    f~(c, h, y) = (1/4) * (c * (a_y h + b_y) + Q_y(h)),

with the agreement coefficients a_y controlling convexity of the progress
measure P.  A link g maps a concept-mixture mean to a predictor value; g is
feasible for f when f~(mu, g(mu), y) <= 0 everywhere, which is what lets the
optimizer drive the worst-case loss to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import betainc

from .core import DomainError, LabeledDataset

__all__ = [
    "CornerLoss",
    "LinkFunction",
    "FeasibilityReport",
    "corner_loss_eval",
    "dataset_loss",
    "check_g_feasible",
    "g_malicious",
    "g_malicious_prime",
    "majority_mean",
    "majority_mean_max_slope",
    "malicious_loss",
    "agnostic_loss",
    "malicious_link",
    "majority_link",
    "identity_link",
    "progress_measure",
    "save_corner_loss",
    "load_corner_loss",
]

GRID_DEFAULT = 10**4
FEASIBLE_TOL = 1e-9

_sgn = (-1, 1)


def _ycol(y) -> np.ndarray:
    y = np.asarray(y)
    if not np.all(np.abs(y) == 1):
        raise DomainError("y must be +-1")
    return (y > 0).astype(int)


@dataclass(frozen=True)
class CornerLoss:
    """A loss given by 8 corner values f[c, h, y] with indices 0 <-> -1, 1 <-> +1."""

    corners: np.ndarray
    name: str | None = None

    def __post_init__(self):
        arr = np.asarray(self.corners, dtype=float)
        if arr.shape != (2, 2, 2):
            raise DomainError("corner table must have shape (2, 2, 2)")
        object.__setattr__(self, "corners", arr)
        self.corners.setflags(write=False)

    @staticmethod
    def from_function(f: Callable[[int, int, int], float], name=None) -> "CornerLoss":
        arr = np.empty((2, 2, 2))
        for i, c in enumerate(_sgn):
            for j, h in enumerate(_sgn):
                for k, y in enumerate(_sgn):
                    arr[i, j, k] = f(c, h, y)
        return CornerLoss(arr, name=name)

    def corner(self, c: int, h: int, y: int) -> float:
        return float(self.corners[(c + 1) // 2, (h + 1) // 2, (y + 1) // 2])

    @property
    def a(self) -> np.ndarray:
        """Agreement coefficients [a_{-1}, a_{+1}]."""
        f = self.corners
        return f[1, 1, :] + f[0, 0, :] - f[1, 0, :] - f[0, 1, :]

    @property
    def b(self) -> np.ndarray:
        f = self.corners
        return f[1, 1, :] + f[1, 0, :] - f[0, 1, :] - f[0, 0, :]

    def q_of(self, h, y) -> np.ndarray:
        """Q_y(h), the c-independent part of the decomposition."""
        f = self.corners
        col = _ycol(y)
        plus = f[1, 1, col] + f[0, 1, col]
        minus = f[1, 0, col] + f[0, 0, col]
        h = np.asarray(h, dtype=float)
        return (1.0 + h) * plus + (1.0 - h) * minus

    @property
    def sup_norm(self) -> float:
        return float(np.abs(self.corners).max())


def malicious_loss() -> CornerLoss:
    """f(c, h, y) = c y (2 - h y) - h y; nonpositive iff Rad(h) tracks consistent labels."""
    return CornerLoss.from_function(
        lambda c, h, y: c * y * (2 - h * y) - h * y, name="malicious"
    )


def agnostic_loss(alpha: float = 0.0, shift: float = 0.0) -> CornerLoss:
    """f(c, h, y) = c ((1+alpha) y - h) - alpha - shift.

    ``shift`` subtracts a constant so the majority link is feasible with margin;
    driving the shifted loss below eps drives the raw loss below shift + eps.
    """
    return CornerLoss.from_function(
        lambda c, h, y: c * ((1 + alpha) * y - h) - alpha - shift,
        name=f"agnostic:alpha={alpha:g},shift={shift:g}",
    )


def corner_loss_eval(f: CornerLoss, c, h, y):
    """Multilinear extension f~(c, h, y): bilinear in (c, h) at each corner y."""
    c = np.asarray(c, dtype=float)
    h = np.asarray(h, dtype=float)
    if np.any(np.abs(c) > 1 + 1e-12) or np.any(np.abs(h) > 1 + 1e-12):
        raise DomainError("c and h must lie in [-1, 1]")
    col = _ycol(y)
    t = f.corners
    val = (
        (1 + c) * (1 + h) * t[1, 1, col]
        + (1 + c) * (1 - h) * t[1, 0, col]
        + (1 - c) * (1 + h) * t[0, 1, col]
        + (1 - c) * (1 - h) * t[0, 0, col]
    ) / 4.0
    return float(val) if val.shape == () else val


def dataset_loss(f: CornerLoss, c, h, ds: LabeledDataset) -> float:
    """Mean of f~(c(x), h(x), y) over the dataset, aggregated by pair counts."""
    if ds.n == 0:
        raise DomainError("dataset loss undefined on an empty dataset")
    cvals = np.asarray(getattr(c, "labels", getattr(c, "values", c)), dtype=float)
    hvals = np.asarray(getattr(h, "values", h), dtype=float)
    if cvals.shape != hvals.shape:
        raise DomainError("concept and predictor sizes differ")
    counts = ds.pair_counts(cvals.size)
    total = 0.0
    for col, y in enumerate(_sgn):
        total += counts[:, col] @ corner_loss_eval(f, cvals, hvals, y)
    return float(total / ds.n)


# ---------------------------------------------------------------------------
# Link functions


@dataclass(frozen=True)
class LinkFunction:
    """A nondecreasing L-Lipschitz map [-1,1] -> [-1,1] with its antiderivative.

    ``antiderivative`` is G(s) = integral of g from 0 to s; built-in links use
    closed forms or exact Gauss-Legendre panels, custom links fall back to
    Simpson refinement to 1e-10.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    name: str = "custom"
    antiderivative: Callable[[np.ndarray], np.ndarray] | None = None
    monotone: bool = True

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.clip(self.fn(t), -1.0, 1.0)
        return float(out) if out.shape == () else out

    def integral(self, s):
        s_arr = np.asarray(s, dtype=float)
        if self.antiderivative is not None:
            out = np.asarray(self.antiderivative(s_arr)).reshape(s_arr.shape)
        else:
            out = _simpson_antiderivative(self.fn, s_arr).reshape(s_arr.shape)
        return float(out) if out.shape == () else out

    def validate(self, grid: int = GRID_DEFAULT, tol: float = FEASIBLE_TOL) -> None:
        """Check range, monotonicity, and the declared Lipschitz constant on a grid."""
        t = np.linspace(-1.0, 1.0, grid)
        v = np.asarray(self.fn(t))
        if np.any(np.abs(v) > 1 + 1e-9):
            raise DomainError(f"link {self.name} leaves [-1, 1]")
        dv = np.diff(v)
        if self.monotone and np.any(dv < -tol):
            raise DomainError(f"link {self.name} is not nondecreasing")
        slopes = np.abs(dv) / np.diff(t)
        if np.any(slopes > self.lipschitz + 1e-6):
            raise DomainError(
                f"link {self.name} exceeds declared Lipschitz constant "
                f"{self.lipschitz:g} (saw {slopes.max():g})"
            )


def _simpson_antiderivative(fn, s, tol=1e-10, max_doublings=22):
    """Composite Simpson on [0, s] per element, refined until stable to tol."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.empty_like(s)
    for i, si in enumerate(s):
        if si == 0.0:
            out[i] = 0.0
            continue
        prev = None
        n = 8
        for _ in range(max_doublings):
            x = np.linspace(0.0, si, n + 1)
            y = np.asarray(fn(x), dtype=float)
            h = si / n
            val = h / 3.0 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-2:2].sum())
            if prev is not None and abs(val - prev) <= tol:
                break
            prev = val
            n *= 2
        out[i] = val
    return out


def g_malicious(t):
    """The degree-7 feasible link (38t - 35t^3 + 21t^5 - 5t^7) / 19."""
    t = np.asarray(t, dtype=float)
    t2 = t * t
    out = t * (38.0 + t2 * (-35.0 + t2 * (21.0 - 5.0 * t2))) / 19.0
    return float(out) if out.shape == () else out


def g_malicious_prime(t):
    """g'(t) = (3 + 35 (1 - t^2)^3) / 19, so 0 <= g' <= 2."""
    t = np.asarray(t, dtype=float)
    out = (3.0 + 35.0 * (1.0 - t * t) ** 3) / 19.0
    return float(out) if out.shape == () else out


def _g_malicious_integral(s):
    s = np.asarray(s, dtype=float)
    s2 = s * s
    return s2 * (38.0 / 2 + s2 * (-35.0 / 4 + s2 * (21.0 / 6 - 5.0 / 8 * s2))) / 19.0


def majority_mean(k: int, t):
    """M_k(t) = E[sign(z_1 + ... + z_k)] for z_i iid Rad(t), k odd.

    Computed through the regularized incomplete beta function:
    M_k(t) = 1 - 2 I_{(1-t)/2}((k+1)/2, (k+1)/2), stable for any odd k.
    """
    if k < 1 or k % 2 == 0:
        raise DomainError(f"majority arity must be odd and positive, got {k}")
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > 1 + 1e-12):
        raise DomainError("majority mean argument must lie in [-1, 1]")
    a = (k + 1) / 2.0
    x = np.clip((1.0 - t) / 2.0, 0.0, 1.0)
    out = 1.0 - 2.0 * betainc(a, a, x)
    return float(out) if out.shape == () else out


def majority_mean_max_slope(k: int) -> float:
    """Exact peak derivative M_k'(0) = k C(k-1, (k-1)/2) / 2^(k-1) (Russo-Margulis)."""
    if k % 2 == 0:
        raise DomainError("majority arity must be odd")
    # big-int true division gives the correctly rounded float for any k
    return k * math.comb(k - 1, (k - 1) // 2) / (1 << (k - 1))


# 64-node Gauss-Legendre is exact for polynomials of degree <= 127; M_k panels
# are sized so each panel sees an effectively polynomial stretch of M_k.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


def malicious_link() -> LinkFunction:
    return LinkFunction(
        fn=g_malicious,
        lipschitz=2.0,
        name="g_malicious",
        antiderivative=_g_malicious_integral,
    )


def majority_link(k: int) -> LinkFunction:
    """M_k as a link, with its exact Lipschitz constant and a GL antiderivative."""
    fn = lambda t: majority_mean(k, t)
    panels = max(1, math.ceil(k / 100))

    def integral(s):
        s_arr = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.empty_like(s_arr)
        for i, si in enumerate(s_arr):
            if si == 0.0:
                out[i] = 0.0
                continue
            edges = np.linspace(0.0, si, panels + 1)
            total = 0.0
            for a, b in zip(edges[:-1], edges[1:]):
                mid, half = (a + b) / 2.0, (b - a) / 2.0
                total += half * float(_GL_WEIGHTS @ fn(mid + half * _GL_NODES))
            out[i] = total
        return out

    return LinkFunction(
        fn=fn,
        lipschitz=majority_mean_max_slope(k),
        name=f"M_{k}",
        antiderivative=integral,
    )


def identity_link() -> LinkFunction:
    return LinkFunction(
        fn=lambda t: np.asarray(t, dtype=float),
        lipschitz=1.0,
        name="identity",
        antiderivative=lambda s: np.asarray(s) ** 2 / 2.0,
    )


# ---------------------------------------------------------------------------
# Feasibility and the progress measure


@dataclass(frozen=True)
class FeasibilityReport:
    max_violation: float
    argmax_mu: float
    argmax_y: int
    passed: bool


def check_g_feasible(
    f: CornerLoss, g: LinkFunction, grid: int = GRID_DEFAULT, tol: float = FEASIBLE_TOL
) -> FeasibilityReport:
    """Grid-certify f~(mu, g(mu), y) <= 0 for all mu in [-1,1] and y in +-1."""
    if grid < 2:
        raise DomainError("feasibility grid must have at least 2 points")
    mu = np.linspace(-1.0, 1.0, grid)
    gmu = np.asarray(g(mu))
    worst = -np.inf
    arg_mu, arg_y = 0.0, 1
    for y in _sgn:
        vals = corner_loss_eval(f, mu, gmu, y)
        i = int(np.argmax(vals))
        if vals[i] > worst:
            worst, arg_mu, arg_y = float(vals[i]), float(mu[i]), y
    return FeasibilityReport(worst, arg_mu, arg_y, worst <= tol)


def progress_measure(
    g: LinkFunction, ds: LabeledDataset, f: CornerLoss, nu: np.ndarray
) -> tuple[float, np.ndarray]:
    """P(nu) = -(1/4n) sum_i (a_{y_i} G(nu_i) + b_{y_i} nu_i) and its gradient.

    dP/dnu_i = -(1/4n) (a_{y_i} g(nu_i) + b_{y_i}); P is convex whenever both
    a_y <= 0 and g is nondecreasing.
    """
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (ds.n,):
        raise DomainError("nu must have one entry per dataset point")
    if np.any(np.abs(nu) > 1 + 1e-12):
        raise DomainError("nu must lie in [-1, 1]")
    ycols = (ds.ys > 0).astype(int)
    a = f.a[ycols]
    b = f.b[ycols]
    n = ds.n
    value = -(a @ np.asarray(g.integral(nu)) + b @ nu) / (4.0 * n)
    grad = -(a * np.asarray(g(nu)) + b) / (4.0 * n)
    return float(value), grad


def _q_term(g: LinkFunction, ds: LabeledDataset, f: CornerLoss, nu: np.ndarray) -> float:
    """Q(nu) = (1/4n) sum_i Q_{y_i}(g(nu_i)); only the identity tests need it."""
    gv = np.asarray(g(np.asarray(nu, dtype=float)))
    return float(np.sum(f.q_of(gv, 1) * (ds.ys > 0) + f.q_of(gv, -1) * (ds.ys < 0)) / (4.0 * ds.n))


# ---------------------------------------------------------------------------
# Loss spec file: 8 labeled corner lines `c,h,y,value`.


def save_corner_loss(path, f: CornerLoss) -> None:
    lines = []
    for c in _sgn:
        for h in _sgn:
            for y in _sgn:
                lines.append(f"{c},{h},{y},{f.corner(c, h, y)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_corner_loss(path, name=None) -> CornerLoss:
    arr = np.full((2, 2, 2), np.nan)
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        c, h, y, v = line.split(",")
        arr[(int(c) + 1) // 2, (int(h) + 1) // 2, (int(y) + 1) // 2] = float(v)
    if np.any(np.isnan(arr)):
        raise DomainError("loss file does not cover all 8 corners")
    return CornerLoss(arr, name=name)
