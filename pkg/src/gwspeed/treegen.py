"""Weighted rooted trees: plain, augmented, pruned clusters and survival-conditioned trees.

A :class:`WeightedTree` is an array arena realized lazily. Randomness is a
pure function of the tree's root key and each vertex's position, so two trees
built from the same key agree on every vertex they both realize, whatever
order those vertices were realized in. Only the coin marking an edge as an
epsilon-edge and the base conductance draw enter the edge weights; changing
``epsilon`` changes the weight of marked edges and nothing else.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import _kernels as K
from .distributions import (
    ConductanceLaw,
    EpsilonMixture,
    OffspringLaw,
    PreconditionError,
    extinction_probability,
    harris_tables,
    thinned_law,
)
from .rng import stream_key

DEFAULT_BUDGET = 10**7


class VertexBudgetError(RuntimeError):
    """A tree needed more vertices than its budget allows."""

    def __init__(self, message, tree=None):
        super().__init__(message)
        self.tree = tree


class UnrealizedError(RuntimeError):
    """An operation needed a part of the tree that is not realized."""


def _cdf(weights) -> np.ndarray:
    cdf = np.cumsum(np.asarray(weights, dtype=float))
    cdf[-1] = 1.0
    return cdf


def _as_mixture(conductances) -> EpsilonMixture:
    if isinstance(conductances, EpsilonMixture):
        return conductances
    if isinstance(conductances, ConductanceLaw):
        return EpsilonMixture(conductances)
    raise TypeError(f"expected a conductance law, got {type(conductances).__name__}")


@dataclass(frozen=True)
class Generator:
    """Everything needed to realize further vertices of a random tree."""

    mode: int
    offspring: OffspringLaw | None = None
    mixture: EpsilonMixture | None = None
    augmented: bool = False
    alpha_thinning: float = 0.0
    root_key: int = 0
    kernel_args: tuple = field(default=(), compare=False, repr=False)

    @classmethod
    def static(cls) -> "Generator":
        z = np.zeros(1)
        zi = np.zeros(1, np.int64)
        one = np.ones(1)
        args = (K.MODE_STATIC, False, 0, 0.0, 0.0, zi, one, z, one, one,
                np.ones((1, 1)), zi, one)
        return cls(K.MODE_STATIC, kernel_args=args)

    @classmethod
    def plain(cls, offspring, mixture, root_key, augmented=False) -> "Generator":
        mixture = _as_mixture(mixture)
        zi = np.zeros(1, np.int64)
        one = np.ones(1)
        args = (K.MODE_PLAIN, bool(augmented), int(offspring.max_offspring),
                float(mixture.alpha), float(mixture.epsilon),
                offspring.support, _cdf(offspring.weights),
                mixture.base.values, _cdf(mixture.base.weights),
                one, np.ones((1, 1)), zi, one)
        return cls(K.MODE_PLAIN, offspring, mixture, augmented, 0.0, int(root_key), args)

    @classmethod
    def harris(cls, offspring, alpha, base, root_key) -> "Generator":
        """Generator of the retained cluster conditioned on being infinite."""
        thin = thinned_law(offspring, alpha)
        q, total, split, bush = harris_tables(thin)
        kmax = len(total) - 1
        split_cdf = np.cumsum(split, axis=1)
        for k in range(kmax + 1):
            split_cdf[k, max(k, 1):] = 1.0
        if bush is None:
            bush_vals, bush_cdf = np.zeros(1, np.int64), np.ones(1)
        else:
            bush_vals, bush_cdf = bush.support, _cdf(bush.weights)
        base = _as_mixture(base).base
        one = np.ones(1)
        args = (K.MODE_HARRIS, False, kmax, 0.0, 0.0,
                np.zeros(1, np.int64), one,
                base.values, _cdf(base.weights),
                _cdf(total), split_cdf, bush_vals, bush_cdf)
        return cls(K.MODE_HARRIS, offspring, EpsilonMixture(base), False, float(alpha),
                   int(root_key), args)


class WeightedTree:
    """Rooted tree with per-edge conductances, realized on demand.

    Vertex 0 is the root. In augmented mode the root has one extra child,
    vertex ``v0``, whose edge is the additional root edge.
    """

    def __init__(self, generator: Generator, capacity: int = 256,
                 budget: int = DEFAULT_BUDGET):
        self.generator = generator
        self.budget = int(budget)
        capacity = max(int(capacity), 16)
        self.parent = np.full(capacity, -1, np.int64)
        self.first = np.full(capacity, -1, np.int64)
        self.nch = np.full(capacity, -1, np.int64)
        self.cond = np.zeros(capacity)
        self.eps = np.zeros(capacity, np.bool_)
        self.depth = np.zeros(capacity, np.int64)
        self.key = np.zeros(capacity, np.uint64)
        self.vtype = np.zeros(capacity, np.int8)
        self.size = 1
        self.key[0] = np.uint64(generator.root_key)
        if generator.mode == K.MODE_HARRIS:
            self.vtype[0] = K.TYPE_BACKBONE
        self.frontier = 0

    # -- arena plumbing -------------------------------------------------
    @property
    def arrays(self):
        return (self.parent, self.first, self.nch, self.cond, self.eps,
                self.depth, self.key, self.vtype)

    @property
    def capacity(self) -> int:
        return self.parent.shape[0]

    @property
    def augmented(self) -> bool:
        return self.generator.augmented

    @property
    def v0(self) -> int | None:
        if not self.augmented:
            return None
        self.expand(0)
        return int(self.first[0])

    def grow(self):
        cap = self.capacity
        if cap >= self.budget:
            raise VertexBudgetError(
                f"vertex budget {self.budget} exhausted "
                f"(realized {self.size} vertices, frontier depth {self.frontier})", self)
        new = min(2 * cap, self.budget)
        for name, fill in (("parent", -1), ("first", -1), ("nch", -1), ("cond", 0),
                           ("eps", False), ("depth", 0), ("key", 0), ("vtype", 0)):
            old = getattr(self, name)
            arr = np.full(new, fill, dtype=old.dtype)
            arr[:cap] = old
            setattr(self, name, arr)

    def expand(self, v: int):
        while True:
            new = K.expand(v, self.arrays, self.size, self.generator.kernel_args)
            if new != K.NEED_SPACE:
                self.size = int(new)
                return
            self.grow()

    def extend_to_depth(self, depth: int):
        """Realize every vertex above ``depth`` (children of depth-``depth-1`` vertices)."""
        if depth < self.frontier:
            raise ValueError(f"new depth {depth} is below the realized frontier {self.frontier}")
        start = 0
        while True:
            size, idx = K.realize(self.arrays, self.size, self.generator.kernel_args, depth, start)
            self.size = int(size)
            if idx >= size:
                break
            start = int(idx)
            self.grow()
        self.frontier = depth

    # -- queries ----------------------------------------------------------
    def children(self, v: int) -> np.ndarray:
        if self.nch[v] < 0:
            self.expand(v)
        f = self.first[v]
        return np.arange(f, f + self.nch[v])

    def neighbours(self, v: int) -> list[int]:
        nb = [] if self.parent[v] < 0 else [int(self.parent[v])]
        return nb + [int(c) for c in self.children(v)]

    def edge_conductance(self, u: int, v: int) -> float:
        if self.parent[v] == u:
            return float(self.cond[v])
        if self.parent[u] == v:
            return float(self.cond[u])
        raise ValueError(f"{u} and {v} are not adjacent")

    def pi(self, v: int) -> float:
        return sum(self.edge_conductance(v, w) for w in self.neighbours(v))

    def degree(self, v: int) -> int:
        return len(self.neighbours(v))

    def generation_sizes(self, depth: int | None = None) -> np.ndarray:
        depth = self.frontier if depth is None else depth
        d = self.depth[: self.size]
        return np.bincount(d[d <= depth], minlength=depth + 1)

    def subtree_contains(self, top: int, v: int) -> bool:
        return K.ancestor_at_depth(self.arrays, v, self.depth[top]) == top

    def is_realized(self, v: int) -> bool:
        return self.nch[v] >= 0

    def copy(self) -> "WeightedTree":
        other = WeightedTree.__new__(WeightedTree)
        other.__dict__.update(self.__dict__)
        for name in ("parent", "first", "nch", "cond", "eps", "depth", "key", "vtype"):
            setattr(other, name, getattr(self, name).copy())
        return other

    def edges(self) -> Iterable[tuple[int, int, float, bool]]:
        for v in range(1, self.size):
            yield int(self.parent[v]), v, float(self.cond[v]), bool(self.eps[v])

    def epsilon_edge_set(self) -> frozenset:
        """Child ids of every realized epsilon-marked edge."""
        return frozenset(np.flatnonzero(self.eps[: self.size]).tolist())

    def structure(self) -> tuple:
        """Topology signature (parent array) of the realized part."""
        return tuple(self.parent[: self.size].tolist())

    def __repr__(self):
        return (f"WeightedTree(size={self.size}, frontier={self.frontier}, "
                f"mode={self.generator.mode}, augmented={self.augmented})")

    # -- construction ---------------------------------------------------
    @classmethod
    def from_parents(cls, parents, conductances, eps_marks=None) -> "WeightedTree":
        """Static fully realized tree. ``parents[0]`` must be -1 and every parent
        id must precede its child."""
        parents = np.asarray(parents, np.int64)
        n = len(parents)
        conductances = np.asarray(conductances, float)
        if conductances.shape != (n,):
            raise ValueError("need one conductance per vertex (entry 0 is ignored)")
        if parents[0] != -1 or np.any(parents[1:] < 0) or np.any(parents[1:] >= np.arange(1, n)):
            raise ValueError("parents must satisfy parent[0] = -1 and parent[v] < v")
        # breadth-first relabel: siblings contiguous and ordered by parent
        kids = [[] for _ in range(n)]
        for v in range(1, n):
            kids[parents[v]].append(v)
        perm = [0]
        for v in perm:
            perm.extend(kids[v])
        perm = np.asarray(perm, np.int64)
        inv = np.empty(n, np.int64)
        inv[perm] = np.arange(n)
        tree = cls(Generator.static(), capacity=n)
        tree.size = n
        tree.parent[:n] = np.where(parents[perm] >= 0, inv[np.maximum(parents[perm], 0)], -1)
        tree.cond[:n] = conductances[perm]
        tree.cond[0] = 0.0
        if eps_marks is not None:
            tree.eps[:n] = np.asarray(eps_marks, bool)[perm]
            tree.eps[0] = False
        tree.nch[:n] = 0
        tree.first[:n] = n
        counts = np.bincount(tree.parent[1:n], minlength=n)
        firsts = 1 + np.concatenate([[0], np.cumsum(counts)[:-1]])
        tree.nch[:n] = counts
        tree.first[:n] = firsts
        depth = np.zeros(n, np.int64)
        for v in range(1, n):
            depth[v] = depth[tree.parent[v]] + 1
        tree.depth[:n] = depth
        if not np.all(tree.parent[1:n] < np.arange(1, n)):
            raise ValueError("relabelled tree is not parent-before-child")
        tree.frontier = int(depth.max()) + 1
        tree.relabel = perm
        return tree


def _root_key(rng) -> int:
    if isinstance(rng, (int, np.integer)):
        return stream_key(int(rng), 0, "tree")
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2**64, dtype=np.uint64))
    raise TypeError("rng must be a seed or a numpy Generator")


def lazy_tree(offspring, conductances, rng, augmented=False, budget=DEFAULT_BUDGET) -> WeightedTree:
    gen = Generator.plain(offspring, conductances, _root_key(rng), augmented)
    return WeightedTree(gen, budget=budget)


def generate_tree(offspring, conductances, depth, rng, budget=DEFAULT_BUDGET) -> WeightedTree:
    """Galton-Watson tree realized breadth-first to ``depth``."""
    if depth < 0:
        raise ValueError("depth must be non-negative")
    tree = lazy_tree(offspring, conductances, rng, False, budget)
    tree.extend_to_depth(depth)
    return tree


def generate_augmented(offspring, conductances, depth, rng, budget=DEFAULT_BUDGET) -> WeightedTree:
    """Augmented tree: the root gets an extra edge to ``v0`` carrying an independent GW tree."""
    if depth < 0:
        raise ValueError("depth must be non-negative")
    tree = lazy_tree(offspring, conductances, rng, True, budget)
    tree.extend_to_depth(max(depth, 1))
    return tree


def extend_to_depth(tree: WeightedTree, new_depth: int):
    tree.extend_to_depth(new_depth)


@dataclass
class PrunedCluster:
    vertices: np.ndarray
    edge_count: int
    extinct: bool
    frontier_vertices: np.ndarray

    @property
    def size(self) -> int:
        return len(self.vertices)

    @property
    def classification(self) -> str:
        return f"extinct-with-size-{self.size}" if self.extinct else "alive-at-frontier"


def prune_cluster(tree: WeightedTree, threshold: float | None = None) -> PrunedCluster:
    """Component of the root through retained edges, within the realized tree.

    Retained means not epsilon-marked; for static trees without marks an edge is
    retained when its conductance exceeds ``threshold`` (or is positive).
    """
    n = tree.size
    if threshold is not None and not tree.eps[:n].any():
        retained = tree.cond[:n] > threshold if threshold > 0 else tree.cond[:n] > 0
    else:
        retained = ~tree.eps[:n]
    seen = [0]
    stack = [0]
    frontier = []
    while stack:
        v = stack.pop()
        if tree.nch[v] < 0:
            frontier.append(v)
            continue
        f = tree.first[v]
        for c in range(f, f + tree.nch[v]):
            if retained[c]:
                seen.append(c)
                stack.append(c)
    verts = np.array(sorted(seen), np.int64)
    return PrunedCluster(verts, len(verts) - 1, not frontier, np.array(sorted(frontier), np.int64))


def survival_bias_bound(cluster: PrunedCluster, q: float) -> float:
    """Probability that a cluster alive at the frontier still dies out."""
    if cluster.extinct:
        return 1.0
    return q ** len(cluster.frontier_vertices)


def sample_conditioned_cluster(offspring, alpha, conductances, depth, rng,
                               budget=DEFAULT_BUDGET) -> WeightedTree:
    """Retained cluster conditioned on being infinite, via the backbone/bush decomposition."""
    thin = thinned_law(offspring, alpha)
    if extinction_probability(thin) >= 1.0:
        raise PreconditionError("cannot condition a subcritical cluster on survival")
    gen = Generator.harris(offspring, alpha, conductances, _root_key(rng))
    tree = WeightedTree(gen, budget=budget)
    tree.extend_to_depth(depth)
    return tree


def sample_rejection_cluster(offspring, alpha, conductances, depth, seed, budget=DEFAULT_BUDGET,
                             max_attempts=10**5) -> tuple[WeightedTree, int]:
    """Retained cluster conditioned on reaching generation ``depth``, by rejection.

    Returns the accepted tree and the number of attempts. Beyond ``depth`` the
    tree keeps growing as an unconditioned GW tree of the thinned law.
    """
    thin = thinned_law(offspring, alpha)
    if extinction_probability(thin) >= 1.0:
        raise PreconditionError("cannot condition a subcritical cluster on survival")
    base = _as_mixture(conductances).base
    for attempt in range(max_attempts):
        key = stream_key(int(seed), attempt, "rejection")
        tree = WeightedTree(Generator.plain(thin, EpsilonMixture(base), key), budget=budget)
        tree.extend_to_depth(depth)
        if tree.generation_sizes(depth)[depth] > 0:
            return tree, attempt + 1
    raise RuntimeError(f"no surviving cluster in {max_attempts} attempts")


# -- text serialization -----------------------------------------------------
def dump_tree(tree: WeightedTree, path, seed=None, params: dict | None = None):
    """Write the realized part: one ``id parent_id conductance is_epsilon_edge depth`` line per vertex."""
    with open(path, "w") as fh:
        fh.write(f"# gwspeed-tree v1\n# seed {seed if seed is not None else 'none'}\n")
        for k, v in (params or {}).items():
            fh.write(f"# {k} {v}\n")
        for v in range(tree.size):
            fh.write(f"{v} {int(tree.parent[v])} {float(tree.cond[v]):.17g} "
                     f"{int(bool(tree.eps[v]))} {int(tree.depth[v])}\n")


def load_tree(path) -> WeightedTree:
    """Read a tree written by :func:`dump_tree` as a static tree.

    Vertices that were not realized when dumped become leaves.
    """
    ids, parents, conds, marks = [], [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
            ids.append(int(parts[0]))
            parents.append(int(parts[1]))
            conds.append(float(parts[2]))
            marks.append(parts[3] == "1")
    if ids != list(range(len(ids))):
        raise ValueError(f"{path}: vertex ids must be 0..n-1 in order")
    return WeightedTree.from_parents(parents, conds, marks)
