"""Finite domains, distributions, concepts, datasets, and randomized hypotheses.

Domains are explicit id sets ``{0..m-1}``.  Concepts are +-1 label vectors,
concept classes are explicit (parametric families are expanded at
construction), and a randomized hypothesis is the Rademacher randomization of
a real predictor h: X -> [-1,1], predicting +1 with probability (1+h(x))/2.
Joint laws over (x, y) are stored exactly as an (m, 2) weight table.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np

__all__ = [
    "DomainError",
    "StateError",
    "FiniteDomain",
    "FinitePointDistribution",
    "JointDistribution",
    "Concept",
    "ConceptClass",
    "RealPredictor",
    "MixtureHypothesis",
    "LabeledDataset",
    "rad_sample",
    "mixture_eval",
    "error_rate",
    "save_dataset",
    "load_dataset",
    "save_predictor",
    "load_predictor",
    "save_concept_class",
    "load_concept_class",
]

# y in {-1, +1} maps to column {0, 1} of joint tables and pair counts.
WEIGHT_TOL = 1e-9
PREDICTOR_TOL = 1e-12


class DomainError(ValueError):
    """A value lies outside the finite domain or its declared range."""


class StateError(RuntimeError):
    """An object is structurally unusable for the requested operation."""


@dataclass(frozen=True)
class FiniteDomain:
    """The ground set X = {0, ..., size-1}."""

    size: int

    def __post_init__(self):
        if self.size < 1:
            raise DomainError(f"domain size must be >= 1, got {self.size}")

    def check_point(self, x: int) -> None:
        if not 0 <= x < self.size:
            raise DomainError(f"point {x} outside domain of size {self.size}")


def _as_prob_vector(weights, name: str) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise DomainError(f"{name} must be a nonempty 1-d vector")
    if np.any(w < 0):
        raise DomainError(f"{name} has negative entries")
    if abs(w.sum() - 1.0) > WEIGHT_TOL:
        raise DomainError(f"{name} sums to {w.sum():.12g}, expected 1")
    return w


@dataclass(frozen=True)
class FinitePointDistribution:
    """A probability vector over the domain points."""

    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", _as_prob_vector(self.weights, "weights"))
        self.weights.setflags(write=False)

    @property
    def m(self) -> int:
        return self.weights.size

    @staticmethod
    def uniform(m: int) -> "FinitePointDistribution":
        return FinitePointDistribution(np.full(m, 1.0 / m))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.choice(self.m, size=n, p=self.weights)

    def max_mass(self) -> float:
        return float(self.weights.max())


@dataclass(frozen=True)
class JointDistribution:
    """An exact law over (x, y) pairs; column 0 holds y=-1 mass, column 1 y=+1."""

    weights: np.ndarray  # shape (m, 2)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[1] != 2 or w.shape[0] == 0:
            raise DomainError("joint weights must have shape (m, 2)")
        if np.any(w < 0):
            raise DomainError("joint weights have negative entries")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise DomainError(f"joint weights sum to {w.sum():.12g}, expected 1")
        object.__setattr__(self, "weights", w)
        self.weights.setflags(write=False)

    @property
    def m(self) -> int:
        return self.weights.shape[0]

    @staticmethod
    def from_concept(dist: FinitePointDistribution, c: "Concept") -> "JointDistribution":
        w = np.zeros((dist.m, 2))
        cols = (c.labels > 0).astype(int)
        w[np.arange(dist.m), cols] = dist.weights
        return JointDistribution(w)

    def x_marginal(self) -> FinitePointDistribution:
        return FinitePointDistribution(self.weights.sum(axis=1))

    def label_mean(self) -> np.ndarray:
        """E[y | x] per point; 0 where x has no mass."""
        mass = self.weights.sum(axis=1)
        diff = self.weights[:, 1] - self.weights[:, 0]
        out = np.zeros(self.m)
        np.divide(diff, mass, out=out, where=mass > 0)
        return out

    def sample(self, n: int, rng: np.random.Generator) -> "LabeledDataset":
        flat = self.weights.reshape(-1)
        idx = rng.choice(flat.size, size=n, p=flat / flat.sum())
        xs = idx // 2
        ys = np.where(idx % 2 == 1, 1, -1).astype(np.int8)
        return LabeledDataset(xs, ys)


def _as_label_vector(labels, name: str, allow_empty: bool = False) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.ndim != 1 or (arr.size == 0 and not allow_empty):
        raise DomainError(f"{name} must be a nonempty 1-d vector")
    if not np.all(np.abs(arr) == 1):
        raise DomainError(f"{name} entries must be exactly +-1")
    return arr.astype(np.int8)


@dataclass(frozen=True)
class Concept:
    """A +-1 labeling of the whole domain."""

    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", _as_label_vector(self.labels, "labels"))
        self.labels.setflags(write=False)

    @property
    def m(self) -> int:
        return self.labels.size

    def __call__(self, x) -> np.ndarray:
        return self.labels[x]


@dataclass(frozen=True)
class ConceptClass:
    """An explicit finite concept class, stored as a (K, m) label matrix."""

    label_matrix: np.ndarray
    name: str | None = None

    def __post_init__(self):
        mat = np.asarray(self.label_matrix)
        if mat.ndim != 2 or mat.shape[0] == 0 or mat.shape[1] == 0:
            raise DomainError("concept class must be a nonempty (K, m) matrix")
        if not np.all(np.abs(mat) == 1):
            raise DomainError("concept labels must be exactly +-1")
        mat = np.ascontiguousarray(mat.astype(np.int8))
        rows = mat.view(np.dtype((np.void, mat.shape[1])))
        if np.unique(rows).size != mat.shape[0]:
            raise DomainError("concept class contains duplicate label vectors")
        object.__setattr__(self, "label_matrix", mat)
        self.label_matrix.setflags(write=False)

    def __len__(self) -> int:
        return self.label_matrix.shape[0]

    @property
    def m(self) -> int:
        return self.label_matrix.shape[1]

    @cached_property
    def float_labels(self) -> np.ndarray:
        """The label matrix as float64, converted once and shared."""
        out = self.label_matrix.astype(np.float64)
        out.setflags(write=False)
        return out

    def concept(self, idx: int) -> Concept:
        return Concept(self.label_matrix[idx])

    @staticmethod
    def from_concepts(concepts, name=None) -> "ConceptClass":
        return ConceptClass(np.stack([c.labels for c in concepts]), name=name)

    @staticmethod
    @lru_cache(maxsize=32)
    def thresholds(m: int) -> "ConceptClass":
        """All m+1 step functions c_t(x) = +1 iff x >= t on the grid {0..m-1}."""
        x = np.arange(m)
        rows = [np.where(x >= t, 1, -1) for t in range(m + 1)]
        return ConceptClass(np.stack(rows), name=f"thresholds:{m}")

    @staticmethod
    @lru_cache(maxsize=32)
    def intervals(m: int) -> "ConceptClass":
        """Indicators of half-open grid intervals [a, b), plus the empty one."""
        x = np.arange(m)
        seen = {(-1,) * m: None}
        mat = [np.full(m, -1)]
        for a in range(m):
            for b in range(a + 1, m + 1):
                row = np.where((x >= a) & (x < b), 1, -1)
                key = tuple(row)
                if key not in seen:
                    seen[key] = None
                    mat.append(row)
        return ConceptClass(np.stack(mat), name=f"intervals:{m}")

    @staticmethod
    @lru_cache(maxsize=32)
    def sparse_one(k: int) -> "ConceptClass":
        """The exactly-1 sparse class on [k]: c_i is +1 only at point i."""
        mat = -np.ones((k, k), dtype=np.int8)
        np.fill_diagonal(mat, 1)
        return ConceptClass(mat, name=f"sparse_one:{k}")

    @staticmethod
    @lru_cache(maxsize=8)
    def shatter(d: int) -> "ConceptClass":
        """All 2^d labelings of d points (d <= 20)."""
        if d > 20:
            raise DomainError("shatter class limited to d <= 20 points")
        bits = np.arange(2**d)[:, None] >> np.arange(d)[None, :]
        return ConceptClass(np.where(bits & 1, 1, -1), name=f"shatter:{d}")


@dataclass(frozen=True)
class RealPredictor:
    """A real predictor h: X -> [-1, 1]; Rad(h) is the randomized hypothesis."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise DomainError("predictor values must be a nonempty 1-d vector")
        if np.any(np.abs(v) > 1 + PREDICTOR_TOL):
            raise DomainError("predictor values must lie in [-1, 1]")
        object.__setattr__(self, "values", np.clip(v, -1.0, 1.0))
        self.values.setflags(write=False)

    @property
    def m(self) -> int:
        return self.values.size

    @staticmethod
    def constant(m: int, value: float) -> "RealPredictor":
        return RealPredictor(np.full(m, float(value)))

    @staticmethod
    def from_concept(c: Concept) -> "RealPredictor":
        return RealPredictor(c.labels.astype(float))


@dataclass(frozen=True)
class MixtureHypothesis:
    """A mixture of k-wise majorities of concepts.

    Atom ``a`` plays sign(c_{t1}(x) + ... + c_{tk}(x)) for its tuple of (odd)
    arity k; the hypothesis samples an atom by weight.  Tuples index rows of
    ``concepts``.
    """

    concepts: np.ndarray  # (K, m) +-1 base labels
    tuples: np.ndarray  # (A, k) row indices
    weights: np.ndarray  # (A,)

    def __post_init__(self):
        conc = np.asarray(self.concepts, dtype=np.int8)
        tups = np.asarray(self.tuples, dtype=np.int64)
        w = np.asarray(self.weights, dtype=float)
        if tups.ndim != 2 or tups.shape[0] == 0:
            raise StateError("mixture needs at least one atom")
        if tups.shape[1] % 2 == 0:
            raise DomainError("atom arity must be odd")
        if w.shape != (tups.shape[0],) or np.any(w < 0):
            raise DomainError("atom weights must be nonnegative, one per atom")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise DomainError(f"atom weights sum to {w.sum():.12g}, expected 1")
        object.__setattr__(self, "concepts", conc)
        object.__setattr__(self, "tuples", tups)
        object.__setattr__(self, "weights", w)
        for arr in (self.concepts, self.tuples, self.weights):
            arr.setflags(write=False)

    @property
    def m(self) -> int:
        return self.concepts.shape[1]

    @property
    def arity(self) -> int:
        return self.tuples.shape[1]

    def atom_labels(self) -> np.ndarray:
        """The (A, m) +-1 majority labeling of every atom."""
        n_atoms, k = self.tuples.shape
        n_base = self.concepts.shape[0]
        # per-atom concept multiplicities, then one matmul; avoids an (A, k, m) tensor
        flat = (np.arange(n_atoms, dtype=np.int64) * n_base)[:, None] + self.tuples
        counts = np.bincount(flat.reshape(-1), minlength=n_atoms * n_base)
        counts = counts.reshape(n_atoms, n_base)
        sums = counts @ self.concepts.astype(np.int64)
        return np.where(sums >= 0, 1, -1).astype(np.int8)

    def mean_predictor(self) -> RealPredictor:
        return RealPredictor(self.weights @ self.atom_labels().astype(float))

    @staticmethod
    def point_mass(c: Concept) -> "MixtureHypothesis":
        return MixtureHypothesis(c.labels[None, :], np.zeros((1, 1), dtype=np.int64), np.ones(1))


@dataclass(frozen=True)
class LabeledDataset:
    """A multiset of (x, y) pairs with optional corruption bookkeeping.

    ``corrupted_mask[i]`` marks indices the adversary rewrote; where the mask
    is False the pair must agree with the pre-corruption ``clean_xs/clean_ys``.
    """

    xs: np.ndarray
    ys: np.ndarray
    corrupted_mask: np.ndarray | None = None
    clean_xs: np.ndarray | None = None
    clean_ys: np.ndarray | None = None

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=np.int64)
        ys = _as_label_vector(self.ys, "ys", allow_empty=True)
        if xs.ndim != 1 or xs.size != ys.size:
            raise DomainError("xs and ys must be 1-d of equal length")
        if np.any(xs < 0):
            raise DomainError("point ids must be nonnegative")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        if self.corrupted_mask is not None:
            mask = np.asarray(self.corrupted_mask, dtype=bool)
            if mask.shape != xs.shape:
                raise DomainError("corrupted_mask length must match pairs")
            object.__setattr__(self, "corrupted_mask", mask)
        if (self.clean_xs is None) != (self.clean_ys is None):
            raise DomainError("clean_xs and clean_ys must be supplied together")
        if self.clean_xs is not None:
            cxs = np.asarray(self.clean_xs, dtype=np.int64)
            cys = _as_label_vector(self.clean_ys, "clean_ys")
            if cxs.shape != xs.shape or cys.shape != xs.shape:
                raise DomainError("clean pairs must match dataset length")
            object.__setattr__(self, "clean_xs", cxs)
            object.__setattr__(self, "clean_ys", cys)
            if self.corrupted_mask is not None:
                keep = ~self.corrupted_mask
                if np.any(xs[keep] != cxs[keep]) or np.any(ys[keep] != cys[keep]):
                    raise DomainError("pairs disagree with clean_pairs off the mask")

    @property
    def n(self) -> int:
        return self.xs.size

    def domain_size(self) -> int:
        return int(self.xs.max()) + 1 if self.n else 1

    def pair_counts(self, m: int) -> np.ndarray:
        """Counts N[x, ycol] of each (x, y) pair; ycol 0 is y=-1, 1 is y=+1."""
        counts = np.zeros((m, 2), dtype=np.int64)
        np.add.at(counts, (self.xs, (self.ys > 0).astype(int)), 1)
        return counts

    def empirical_joint(self, m: int) -> JointDistribution:
        return JointDistribution(self.pair_counts(m) / self.n)

    def eta_hat(self) -> float:
        """Realized corruption fraction (0 when no mask is present)."""
        if self.corrupted_mask is None:
            return 0.0
        return float(self.corrupted_mask.mean())


def rad_sample(value: float, rng: np.random.Generator):
    """Draw from Rad(value): +1 with probability (1 + value) / 2.

    ``value`` may be a scalar or an array; the output matches its shape.
    """
    v = np.asarray(value, dtype=float)
    if np.any(np.abs(v) > 1 + PREDICTOR_TOL):
        raise DomainError("Rademacher mean must lie in [-1, 1]")
    draw = np.where(rng.random(v.shape) < (1.0 + v) / 2.0, 1, -1)
    return int(draw) if np.isscalar(value) or v.shape == () else draw.astype(np.int8)


def mixture_eval(h: MixtureHypothesis, x: int, rng: np.random.Generator) -> int:
    """Evaluate the randomized hypothesis at x: sample an atom, take its majority."""
    if not 0 <= x < h.m:
        raise DomainError(f"point {x} outside domain of size {h.m}")
    a = rng.choice(h.weights.size, p=h.weights)
    s = int(h.concepts[h.tuples[a], x].sum())
    return 1 if s >= 0 else -1


def error_rate(h: RealPredictor, c: Concept, dist: FinitePointDistribution) -> float:
    """Exact error of Rad(h) against c under dist: sum_x D(x) (1 - h(x)c(x)) / 2."""
    if not (h.m == c.m == dist.m):
        raise DomainError("predictor, concept, and distribution sizes differ")
    return float(dist.weights @ (1.0 - h.values * c.labels) / 2.0)


# ---------------------------------------------------------------------------
# File formats: one `x,y` line per pair; `x,value` per predictor point; one
# comma-separated +-1 row per concept.


def save_dataset(path, ds: LabeledDataset) -> None:
    lines = [f"{x},{y}" for x, y in zip(ds.xs, ds.ys)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path) -> LabeledDataset:
    xs, ys = [], []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        a, b = line.split(",")
        xs.append(int(a))
        ys.append(int(b))
    return LabeledDataset(np.array(xs, dtype=np.int64), np.array(ys, dtype=np.int8))


def save_predictor(path, h: RealPredictor) -> None:
    lines = [f"{x},{float(v)!r}" for x, v in enumerate(h.values)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_predictor(path) -> RealPredictor:
    rows = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        a, b = line.split(",")
        rows[int(a)] = float(b)
    return RealPredictor(np.array([rows[i] for i in range(len(rows))]))


def save_concept_class(path, cls: ConceptClass) -> None:
    lines = [",".join(str(v) for v in row) for row in cls.label_matrix]
    Path(path).write_text("\n".join(lines) + "\n")


def load_concept_class(path, name=None) -> ConceptClass:
    rows = [
        [int(v) for v in line.split(",")]
        for line in Path(path).read_text().splitlines()
        if line.strip()
    ]
    return ConceptClass(np.array(rows, dtype=np.int8), name=name)
