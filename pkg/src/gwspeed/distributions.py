"""Offspring and conductance laws with their branching-process analytics.

All laws have finite support. Parametric offspring laws (Poisson, geometric)
are truncated once the remaining tail mass drops below ``TAIL_TOL`` and then
renormalized.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

K_MAX = 1000
MASS_TOL = 1e-12
TAIL_TOL = 1e-10


class DomainError(ValueError):
    """Argument outside the domain of a function."""


class PreconditionError(ValueError):
    """A law does not satisfy the requirements of an operation."""


def _canonical_atoms(pairs: Iterable[Sequence[float]]) -> dict:
    atoms: dict = {}
    for x, w in pairs:
        if w < 0:
            raise ValueError(f"negative probability {w} at atom {x}")
        atoms[x] = atoms.get(x, 0.0) + float(w)
    return atoms


@dataclass(frozen=True)
class OffspringLaw:
    """Finite-support offspring distribution, stored as sorted ``(k, p_k)`` pairs."""

    pmf: tuple[tuple[int, float], ...]

    def __post_init__(self):
        atoms = _canonical_atoms(self.pmf)
        for k in atoms:
            if int(k) != k or k < 0:
                raise ValueError(f"offspring values must be non-negative integers, got {k}")
            if k > K_MAX:
                raise ValueError(f"offspring support exceeds K_MAX={K_MAX}")
        total = math.fsum(atoms.values())
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"offspring probabilities sum to {total!r}, not 1")
        pmf = tuple(sorted((int(k), p) for k, p in atoms.items() if p > 0))
        object.__setattr__(self, "pmf", pmf)

    @classmethod
    def from_pairs(cls, pairs) -> "OffspringLaw":
        return cls(tuple((int(k), float(p)) for k, p in pairs))

    @classmethod
    def point_mass(cls, k: int) -> "OffspringLaw":
        return cls(((int(k), 1.0),))

    @classmethod
    def from_probs(cls, probs) -> "OffspringLaw":
        """Build from a dense vector ``probs[k] = p_k``, renormalizing rounding noise."""
        probs = np.asarray(probs, dtype=float)
        probs = probs / probs.sum()
        return cls(tuple((k, float(p)) for k, p in enumerate(probs) if p > 0))

    @classmethod
    def truncated(cls, dist, tol: float = TAIL_TOL) -> "OffspringLaw":
        """Truncate a frozen ``scipy.stats`` discrete law where its tail mass falls below ``tol``."""
        kmax = int(dist.isf(tol)) + 1
        if kmax > K_MAX:
            raise ValueError(f"truncation point {kmax} exceeds K_MAX={K_MAX}")
        return cls.from_probs(dist.pmf(np.arange(kmax + 1)))

    @classmethod
    def poisson(cls, lam: float, tol: float = TAIL_TOL) -> "OffspringLaw":
        return cls.truncated(stats.poisson(lam), tol)

    @classmethod
    def geometric(cls, p: float, tol: float = TAIL_TOL) -> "OffspringLaw":
        """Geometric law on {0, 1, 2, ...} with success probability ``p``."""
        return cls.truncated(stats.geom(p, loc=-1), tol)

    @property
    def support(self) -> np.ndarray:
        return np.array([k for k, _ in self.pmf], dtype=np.int64)

    @property
    def weights(self) -> np.ndarray:
        return np.array([p for _, p in self.pmf], dtype=float)

    @property
    def max_offspring(self) -> int:
        return self.pmf[-1][0]

    @property
    def probs(self) -> np.ndarray:
        """Dense vector of length ``max_offspring + 1``."""
        out = np.zeros(self.max_offspring + 1)
        for k, p in self.pmf:
            out[k] = p
        return out

    def prob(self, k: int) -> float:
        for j, p in self.pmf:
            if j == k:
                return p
        return 0.0

    @property
    def mean(self) -> float:
        return math.fsum(k * p for k, p in self.pmf)

    @property
    def second_moment(self) -> float:
        return math.fsum(k * k * p for k, p in self.pmf)

    @property
    def supercritical(self) -> bool:
        return self.mean > 1

    @property
    def leafless(self) -> bool:
        return self.prob(0) == 0

    def inverse_moment(self, order: int) -> float:
        """E[N^-order]; requires p_0 = 0."""
        if not self.leafless:
            raise PreconditionError("inverse moments require p_0 = 0")
        return math.fsum(p * float(k) ** -order for k, p in self.pmf)

    def pgf(self, s: float) -> float:
        return pgf_eval(self, s)

    def pgf_derivative(self, s: float) -> float:
        return math.fsum(k * p * s ** (k - 1) for k, p in self.pmf if k > 0)


@dataclass(frozen=True)
class ConductanceLaw:
    """Finite-support conductance law with ellipticity constant ``delta``.

    When ``delta`` is omitted the tightest admissible value is used.
    """

    atoms: tuple[tuple[float, float], ...]
    delta: float | None = None

    def __post_init__(self):
        merged = _canonical_atoms(self.atoms)
        total = math.fsum(merged.values())
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"conductance weights sum to {total!r}, not 1")
        atoms = tuple(sorted((float(v), w) for v, w in merged.items() if w > 0))
        if not atoms:
            raise ValueError("conductance law needs at least one atom")
        lo, hi = atoms[0][0], atoms[-1][0]
        if lo <= 0:
            raise ValueError("conductance atoms must be positive")
        delta = self.delta
        if delta is None:
            delta = min(lo, 1.0 / hi)
        if delta <= 0:
            raise ValueError("delta must be positive")
        # small slack so that delta = 1/v round trips
        slack = 1e-12
        if lo < delta * (1 - slack) or hi > (1 + slack) / delta:
            raise ValueError(f"atoms outside [delta, 1/delta] for delta={delta}")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "delta", float(delta))

    @classmethod
    def from_pairs(cls, pairs, delta: float | None = None) -> "ConductanceLaw":
        return cls(tuple((float(v), float(w)) for v, w in pairs), delta)

    @classmethod
    def point_mass(cls, value: float = 1.0, delta: float | None = None) -> "ConductanceLaw":
        return cls(((float(value), 1.0),), delta)

    @property
    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.atoms])

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms])

    @property
    def mean(self) -> float:
        return math.fsum(v * w for v, w in self.atoms)

    def scaled(self, c: float) -> "ConductanceLaw":
        return ConductanceLaw(tuple((v * c, w) for v, w in self.atoms))


@dataclass(frozen=True)
class EpsilonMixture:
    """The law ``alpha * delta_epsilon + (1 - alpha) * base``."""

    base: ConductanceLaw
    alpha: float = 0.0
    epsilon: float = 0.0

    def __post_init__(self):
        if not 0 <= self.alpha < 1:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")

    @property
    def mean(self) -> float:
        return mixture_mean(self)

    @property
    def elliptic(self) -> bool:
        return self.alpha == 0 or self.epsilon > 0

    def with_epsilon(self, epsilon: float) -> "EpsilonMixture":
        return EpsilonMixture(self.base, self.alpha, epsilon)

    def scaled(self, c: float) -> "EpsilonMixture":
        return EpsilonMixture(self.base.scaled(c), self.alpha, self.epsilon * c)


def pgf_eval(law: OffspringLaw, s: float) -> float:
    if not 0.0 <= s <= 1.0:
        raise DomainError(f"pgf argument must lie in [0, 1], got {s}")
    if s == 1.0:
        return 1.0
    return math.fsum(p * s**k for k, p in law.pmf)


def thinned_law(law: OffspringLaw, alpha: float) -> OffspringLaw:
    """Law of the number of children kept when each is removed with probability ``alpha``."""
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must lie in [0, 1], got {alpha}")
    if alpha == 0.0:
        return law
    if alpha == 1.0:
        return OffspringLaw.point_mass(0)
    out = np.zeros(law.max_offspring + 1)
    for k, p in law.pmf:
        out[: k + 1] += p * stats.binom.pmf(np.arange(k + 1), k, 1.0 - alpha)
    return OffspringLaw.from_probs(out)


def extinction_probability(law: OffspringLaw) -> float:
    """Smallest fixed point of the generating function in [0, 1], by bisection."""
    p0 = law.prob(0)
    if p0 == 0.0:
        return 0.0
    if law.mean <= 1.0:
        return 1.0
    # g(s) = f(s) - s is positive at 0, negative just below 1 and convex
    lo, hi = 0.0, 1.0 - 1e-15
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if pgf_eval(law, mid) - mid > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    q = 0.5 * (lo + hi)
    if abs(pgf_eval(law, q) - q) >= 1e-12:
        raise ArithmeticError(f"fixed-point solver did not converge (q={q})")
    return q


def progeny_moments(law: OffspringLaw) -> tuple[float, float]:
    """First and second moment of the total progeny of a subcritical process."""
    mean = law.mean
    if mean >= 1.0:
        raise PreconditionError("progeny moments require subcritical law")
    m2 = law.second_moment
    return 1.0 / (1.0 - mean), (m2 - mean * mean - mean + 1.0) / (1.0 - mean) ** 3


def dual_law(law: OffspringLaw, q: float | None = None) -> OffspringLaw:
    """Offspring law of the tree conditioned on extinction: ``p_k q^(k-1)``."""
    if q is None:
        q = extinction_probability(law)
    if not 0.0 < q < 1.0:
        raise PreconditionError(f"dual law needs extinction probability in (0, 1), got {q}")
    probs = np.array([p * q ** (k - 1) for k, p in enumerate(law.probs)])
    total = probs.sum()
    if abs(total - 1.0) > 1e-9:
        raise ArithmeticError(f"dual law mass {total} differs from 1")
    return OffspringLaw.from_probs(probs)


def harris_laws(law: OffspringLaw) -> tuple[OffspringLaw, OffspringLaw]:
    """Backbone and bush offspring laws of the tree conditioned on survival.

    For ``q = 0`` there is nothing to prune: the backbone is ``law`` and the
    bush is returned as a point mass at 0.
    """
    q = extinction_probability(law)
    if q >= 1.0:
        raise PreconditionError("harris decomposition needs a supercritical law")
    if q == 0.0:
        return law, OffspringLaw.point_mass(0)
    probs = law.probs
    backbone = np.zeros(len(probs))
    for k, p in enumerate(probs):
        if p == 0:
            continue
        j = np.arange(1, k + 1)
        backbone[1 : k + 1] += p * stats.binom.pmf(j, k, 1.0 - q)
    backbone /= 1.0 - q
    return OffspringLaw.from_probs(backbone), dual_law(law, q)


def harris_tables(law: OffspringLaw):
    """Sampling tables for the two-type survival-conditioned tree.

    Returns ``(q, total_probs, split, bush)`` where ``total_probs[k]`` is the
    law of the total number of children of a backbone vertex,
    ``split[k, j]`` the law of its number ``j >= 1`` of backbone children given
    ``k``, and ``bush`` the dual law (``None`` when ``q = 0``).
    """
    q = extinction_probability(law)
    if q >= 1.0:
        raise PreconditionError("cannot condition a subcritical cluster on survival")
    probs = law.probs
    kmax = len(probs) - 1
    total = np.array([p * (1.0 - q**k) for k, p in enumerate(probs)]) / (1.0 - q)
    split = np.zeros((kmax + 1, kmax + 1))
    for k in range(1, kmax + 1):
        j = np.arange(1, k + 1)
        row = stats.binom.pmf(j, k, 1.0 - q)
        split[k, 1:] = 0.0
        split[k, 1 : k + 1] = row / row.sum()
    bush = dual_law(law, q) if q > 0 else None
    return q, total / total.sum(), split, bush


def mixture_mean(mix: EpsilonMixture) -> float:
    return mix.alpha * mix.epsilon + (1.0 - mix.alpha) * mix.base.mean


def sample_offspring(law: OffspringLaw, rng: np.random.Generator, size=None):
    return rng.choice(law.support, size=size, p=law.weights)


def sample_conductance(mix: EpsilonMixture, rng: np.random.Generator, size=None):
    coin = rng.random(size) < mix.alpha
    base = rng.choice(mix.base.values, size=size, p=mix.base.weights)
    out = np.where(coin, mix.epsilon, base)
    return float(out) if size is None else out
