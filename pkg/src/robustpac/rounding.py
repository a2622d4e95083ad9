"""Randomized-to-deterministic hypothesis conversion via k-wise independent seeds.

The seed family is polynomial evaluation over GF(2^b): F_s(x) = sum_j s_j x^j
with k coefficients, so any k distinct inputs receive exactly uniform joint
outputs over a uniform seed.  Rounding a randomized hypothesis h(x, r) with
r = F_s(x) costs only O(sqrt(p_max log(1/delta))) extra error when no domain
point is heavy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Concept, DomainError, FinitePointDistribution, MixtureHypothesis

__all__ = [
    "IRREDUCIBLE",
    "gf2_mul",
    "KWiseFamily",
    "kwise_eval",
    "draw_kwise_family",
    "derandomize",
    "mixture_evaluator",
    "rounding_error_bound",
]

# Smallest irreducible polynomial of each degree b <= 16 (bit i is the x^i
# coefficient); degree 8 is the AES modulus, degree 16 is x^16+x^5+x^3+x+1.
IRREDUCIBLE = {
    1: 0x2,
    2: 0x7,
    3: 0xB,
    4: 0x13,
    5: 0x25,
    6: 0x43,
    7: 0x83,
    8: 0x11B,
    9: 0x203,
    10: 0x409,
    11: 0x805,
    12: 0x1009,
    13: 0x201B,
    14: 0x4021,
    15: 0x8003,
    16: 0x1002B,
}


def gf2_mul(a: int, b: int, modulus: int) -> int:
    """Carry-less multiply reduced by the field modulus."""
    deg = modulus.bit_length() - 1
    r = 0
    while b:
        if b & 1:
            r ^= a
        b >>= 1
        a <<= 1
        if a >> deg:
            a ^= modulus
    return r


@dataclass(frozen=True)
class KWiseFamily:
    """F_s: {0,1}^d_bits -> {0,1}^r_bits over GF(2^b), b = max(d_bits, r_bits).

    The seed holds k field elements; evaluations at any k distinct inputs are
    jointly uniform over a uniform seed, and outputs are the low r_bits of the
    field value.
    """

    d_bits: int
    r_bits: int
    k: int
    seed: tuple

    def __post_init__(self):
        b = self.b
        if not 1 <= b <= 16:
            raise DomainError("field size must satisfy 1 <= max(d_bits, r_bits) <= 16")
        if self.k < 1:
            raise DomainError("independence parameter k must be >= 1")
        if len(self.seed) != self.k:
            raise DomainError("seed must hold exactly k field elements")
        if any(not 0 <= s < (1 << b) for s in self.seed):
            raise DomainError("seed elements must be b-bit field values")

    @property
    def b(self) -> int:
        return max(self.d_bits, self.r_bits)

    @property
    def modulus(self) -> int:
        return IRREDUCIBLE[self.b]


def kwise_eval(fam: KWiseFamily, x: int) -> int:
    """F_s(x) = sum_{j<k} s_j x^j over GF(2^b), truncated to r_bits."""
    if not 0 <= x < (1 << fam.d_bits):
        raise DomainError(f"input {x} does not fit in {fam.d_bits} bits")
    mod = fam.modulus
    acc = 0
    # Horner: (((s_{k-1}) x + s_{k-2}) x + ...) + s_0
    for coeff in reversed(fam.seed):
        acc = gf2_mul(acc, x, mod) ^ coeff
    return acc & ((1 << fam.r_bits) - 1)


def draw_kwise_family(
    d_bits: int, r_bits: int, k: int, rng: np.random.Generator
) -> KWiseFamily:
    b = max(d_bits, r_bits)
    seed = tuple(int(v) for v in rng.integers(0, 1 << b, size=k))
    return KWiseFamily(d_bits=d_bits, r_bits=r_bits, k=k, seed=seed)


def rounding_error_bound(p_max: float, delta: float, constant: float = 4.0) -> float:
    """The certified error growth constant * sqrt(p_max ln(1/delta))."""
    return constant * math.sqrt(p_max * math.log(1.0 / delta))


def derandomize(
    evaluator,
    d_bits: int,
    r_bits: int,
    m: int,
    dist: FinitePointDistribution,
    delta: float,
    rng: np.random.Generator,
    c_r: float = 8.0,
) -> tuple[Concept, dict]:
    """Fix one k-wise seed and hardwire it into the hypothesis.

    ``evaluator(x, seed_bits) -> +-1`` consumes r_bits of randomness per
    point.  k = ceil(c_r ln(1/delta)); the returned labeling is
    h_hat(x) = evaluator(x, F_s(x)) for a single drawn seed s, and the report
    carries p_max and the error-growth bound it certifies.
    """
    if m > (1 << d_bits):
        raise DomainError("d_bits cannot index the whole domain")
    k = max(1, math.ceil(c_r * math.log(1.0 / delta)))
    fam = draw_kwise_family(d_bits, r_bits, k, rng)
    labels = np.empty(m, dtype=np.int8)
    for x in range(m):
        labels[x] = evaluator(x, kwise_eval(fam, x))
    report = {
        "k": k,
        "b": fam.b,
        "p_max": dist.max_mass(),
        "bound": rounding_error_bound(dist.max_mass(), delta),
    }
    return Concept(labels), report


def mixture_evaluator(h: MixtureHypothesis, r_bits: int = 16):
    """Adapt a mixture to the (x, seed_bits) interface.

    The seed bits select the atom through the fixed cumulative-weight table
    and nothing else; each atom's majority label is deterministic in x.
    """
    atom_labels = h.atom_labels()
    cum = np.cumsum(h.weights)
    scale = 1 << r_bits

    def evaluator(x: int, seed_bits: int) -> int:
        u = (seed_bits + 0.5) / scale
        a = int(np.searchsorted(cum, u, side="left"))
        a = min(a, atom_labels.shape[0] - 1)
        return int(atom_labels[a, x])

    return evaluator
