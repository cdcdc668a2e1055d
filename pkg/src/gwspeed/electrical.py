"""Effective conductances on weighted trees.

Conductances to a generation are computed bottom-up with the series and
parallel laws; a sparse Laplacian solve serves as an independent oracle.
Boundary vertices carry conductance ``inf`` (shorted to ground) and the
series law maps ``(xi, inf)`` to ``xi`` exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from . import _kernels as K
from .distributions import EpsilonMixture, OffspringLaw, PreconditionError
from .parallel import map_replicas
from .rng import stream_key
from .treegen import Generator, VertexBudgetError, WeightedTree


@dataclass
class ConductanceResult:
    value: float
    depth: int
    trace: list = field(default_factory=list)
    depths: list = field(default_factory=list)


def level_conductances(tree: WeightedTree, n: int) -> np.ndarray:
    """Conductance from each vertex of depth < n down to generation n (NaN below)."""
    if n < 1:
        raise ValueError("level must be at least 1")
    if tree.generator.mode == K.MODE_STATIC:
        if n >= tree.frontier:
            raise PreconditionError(f"static tree has no generation {n}")
    elif tree.frontier < n:
        tree.extend_to_depth(n)
    values, ok = K.level_conductances(tree.arrays, tree.size, n)
    if not ok:
        raise PreconditionError(f"tree is not realized down to generation {n}")
    return values


def conductance_to_level(tree: WeightedTree, n: int) -> float:
    return float(level_conductances(tree, n)[0])


def conductance_to_infinity(tree: WeightedTree, rel_tol: float = 1e-6, n0: int = 4,
                            step: int | None = None, max_depth: int = 10**4) -> ConductanceResult:
    """Truncated conductances along a depth schedule until successive values agree.

    The schedule is ``n0, 2 n0, 4 n0, ...`` unless ``step`` is given, in which
    case it is ``n0, n0 + step, n0 + 2 step, ...``. The last value is an upper
    bound for the conductance to infinity. Running out of vertices raises
    :class:`VertexBudgetError` with the trace attached as ``.result``.
    """
    result = ConductanceResult(math.nan, 0)
    n = n0
    prev = None
    while n <= max_depth:
        try:
            c = conductance_to_level(tree, n)
        except VertexBudgetError as exc:
            exc.result = result
            raise
        result.trace.append(c)
        result.depths.append(n)
        result.value, result.depth = c, n
        if prev is not None:
            if c == prev or (prev > 0 and abs(prev - c) / prev < rel_tol):
                return result
        prev = c
        n = n + step if step else 2 * n
    return result


def conductance_ratio_pair(tree: WeightedTree, n: int) -> tuple[float, float]:
    """``(C(T*), C(T))`` for an augmented tree, both truncated at generation ``n``.

    ``T*`` is the extra root edge in series with the subtree of ``v0``.
    """
    if not tree.augmented:
        raise PreconditionError("conductance ratio needs an augmented tree")
    values = level_conductances(tree, n)
    v0 = tree.v0
    first, k = tree.first[0], tree.nch[0]
    c_star = K.series(tree.cond[v0], values[v0])
    c_full = c_star
    for c in range(first, first + k):
        if c != v0:
            c_full += K.series(tree.cond[c], values[c])
    return float(c_star), float(c_full)


def brute_force_conductance(tree: WeightedTree, boundary) -> float:
    """Current out of the root at unit voltage with ``boundary`` grounded, by linear solve."""
    boundary = np.unique(np.asarray(list(boundary), np.int64))
    if len(boundary) == 0 or 0 in boundary:
        raise ValueError("boundary must be nonempty and exclude the root")
    n = tree.size
    if n > 10**4:
        raise ValueError("brute force oracle is limited to 10^4 vertices")
    child = np.arange(1, n)
    par = tree.parent[1:n]
    w = tree.cond[1:n]
    keep = w > 0
    child, par, w = child[keep], par[keep], w[keep]
    adj = sp.coo_matrix((np.concatenate([w, w]),
                         (np.concatenate([child, par]), np.concatenate([par, child]))),
                        shape=(n, n)).tocsr()
    _, labels = connected_components(adj, directed=False)
    comp = labels == labels[0]
    if not comp[boundary].any():
        return 0.0
    # unknowns: component vertices other than root and boundary
    fixed = np.zeros(n, bool)
    fixed[0] = True
    fixed[boundary] = True
    free = np.flatnonzero(comp & ~fixed)
    lap = sp.diags(np.asarray(adj.sum(axis=1)).ravel()) - adj
    voltage = np.zeros(n)
    voltage[0] = 1.0
    if len(free):
        a = lap[free][:, free].tocsc()
        rhs = -lap[free][:, [0]].toarray().ravel()
        voltage[free] = spsolve(a, rhs) if len(free) > 1 else rhs / a.toarray().ravel()
    current = lap[0].toarray().ravel() @ voltage
    return float(current)


def generation(tree: WeightedTree, n: int) -> np.ndarray:
    return np.flatnonzero(tree.depth[: tree.size] == n)


def resistance_moment_bound(offspring: OffspringLaw, delta: float, order: int) -> float:
    """Upper bound for the ``order``-th moment of the resistance to infinity.

    Closed recursion ``B_0 = 1`` and
    ``B_m = sum_{k<m} C(m,k) delta^(k-m) E[N^-m] B_k / (1 - E[N^-m])``.
    """
    if not offspring.leafless:
        raise PreconditionError("moment bound requires p_0 = 0")
    if offspring.mean <= 1:
        raise PreconditionError("moment bound requires a supercritical law")
    if delta <= 0:
        raise ValueError("delta must be positive")
    if order < 1:
        raise ValueError("order must be at least 1")
    bounds = [1.0]
    for m in range(1, order + 1):
        inv = offspring.inverse_moment(m)
        if inv >= 1.0:
            raise PreconditionError("E[N^-m] >= 1: point mass at 1 has infinite resistance")
        s = math.fsum(math.comb(m, k) * delta ** (k - m) * inv * bounds[k] for k in range(m))
        bounds.append(s / (1.0 - inv))
    return bounds[order]


def _resistance_replica(i, offspring, law, depth, seed):
    tree = WeightedTree(Generator.plain(offspring, EpsilonMixture(law), stream_key(seed, i, "tree")))
    return 1.0 / conductance_to_level(tree, depth)


def truncated_resistance_moments(offspring: OffspringLaw, law, depth: int, orders,
                                 replicas: int, seed: int = 0, workers: int = 1) -> dict:
    """Monte Carlo ``{m: (mean, stderr)}`` of ``R(root, G_depth)^m``.

    The truncated resistance is a lower bound for the resistance to infinity.
    """
    r = map_replicas(_resistance_replica, replicas, workers, offspring=offspring, law=law,
                     depth=depth, seed=seed)
    out = {}
    for m in orders:
        x = r ** m
        out[int(m)] = (float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x))))
    return out
