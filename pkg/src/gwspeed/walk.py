"""Quenched random walks, bi-infinite walks, horodistances and trap statistics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .distributions import PreconditionError
from .electrical import level_conductances
from .rng import stream_state
from .treegen import WeightedTree


def _state(rng, tag="walk") -> np.uint64:
    """SplitMix64 state from a seed, an existing state or a numpy Generator."""
    if isinstance(rng, np.uint64):
        return rng
    if isinstance(rng, (int, np.integer)):
        return stream_state(int(rng), 0, tag)
    if isinstance(rng, np.random.Generator):
        return np.uint64(rng.integers(0, 2**64, dtype=np.uint64))
    raise TypeError("rng must be a seed, a uint64 state or a numpy Generator")


@dataclass
class WalkPath:
    """Positions on the time window ``[-past, future]``; ``positions[past]`` is time 0."""

    positions: np.ndarray
    past: int = 0
    tree: WeightedTree | None = field(default=None, repr=False)

    @property
    def future(self) -> int:
        return len(self.positions) - 1 - self.past

    @property
    def window(self) -> tuple[int, int]:
        return -self.past, self.future

    def at(self, t: int) -> int:
        if not -self.past <= t <= self.future:
            raise IndexError(f"time {t} outside window {self.window}")
        return int(self.positions[t + self.past])

    @property
    def forward(self) -> np.ndarray:
        return self.positions[self.past:]

    @property
    def directions(self) -> np.ndarray:
        """+1 for a step away from the root, -1 for a step towards it, 0 for a stay."""
        d = self.tree.depth[self.positions]
        return np.sign(np.diff(d))

    def dump(self, path):
        """Write ``time vertex_id depth`` lines."""
        depth = self.tree.depth[self.positions]
        with open(path, "w") as fh:
            for i, (v, d) in enumerate(zip(self.positions, depth)):
                fh.write(f"{i - self.past} {int(v)} {int(d)}\n")


def step(tree: WeightedTree, v: int, rng) -> int:
    """One quenched transition from ``v``; uniform over neighbours when no edge conducts."""
    if not tree.is_realized(v):
        tree.expand(v)
    if isinstance(rng, np.random.Generator):
        u = rng.random()
    else:
        u = float(rng)
    return int(K.step_from(v, tree.arrays, u))


def _advance(tree: WeightedTree, path: np.ndarray, steps: int, state: np.uint64) -> np.uint64:
    t = 0
    while True:
        t, size, state = K.walk(tree.arrays, tree.size, tree.generator.kernel_args,
                                path, t, steps, state)
        tree.size = int(size)
        state = np.uint64(state)
        if t >= steps:
            return state
        tree.grow()


def run_walk(tree: WeightedTree, start: int, steps: int, rng) -> WalkPath:
    """Walk of ``steps`` transitions from ``start``; the tree is realized as the walk goes."""
    path = np.empty(steps + 1, np.int64)
    path[0] = start
    _advance(tree, path, steps, _state(rng))
    return WalkPath(path, 0, tree)


def bi_infinite_walk(tree: WeightedTree, past: int, future: int, rng) -> WalkPath:
    """Independent past and future walks from the root, glued at time 0."""
    if isinstance(rng, (int, np.integer)) and not isinstance(rng, np.uint64):
        s_future, s_past = stream_state(int(rng), 0, "future"), stream_state(int(rng), 0, "past")
    elif isinstance(rng, tuple):
        s_future, s_past = (_state(r) for r in rng)
    else:
        s_future, s_past = _state(rng), _state(rng)
    fwd = run_walk(tree, 0, future, s_future).positions
    back = run_walk(tree, 0, past, s_past).positions
    return WalkPath(np.concatenate([back[::-1], fwd[1:]]), past, tree)


def horodistance(tree: WeightedTree, u: int, v: int, z: int) -> int:
    """Signed distance ``d(u, z) - d(v, z)``."""
    tr = tree.arrays
    return int(K.dist(tr, u, z) - K.dist(tr, v, z))


def d_m_increment(path: WalkPath, M: int) -> int:
    """``[X_1 - X_0]`` measured from ``X_{-M}``; always +1 or -1 on a tree."""
    if path.past < M or path.future < 1:
        raise PreconditionError(f"window {path.window} does not cover [-{M}, 1]")
    return horodistance(path.tree, path.at(1), path.at(0), path.at(-M))


def expected_d_m(tree: WeightedTree, x0: int, z: int) -> float:
    """E[D_M] over the first future step from ``x0`` given ``X_{-M} = z``."""
    nbrs = tree.neighbours(x0)
    xs = np.array([tree.edge_conductance(x0, w) for w in nbrs])
    total = xs.sum()
    probs = xs / total if total > 0 else np.full(len(nbrs), 1.0 / len(nbrs))
    signs = np.array([horodistance(tree, w, x0, z) for w in nbrs])
    return float(probs @ signs)


# -- traps -------------------------------------------------------------------
@dataclass
class TrapStats:
    entries: list = field(default_factory=list)
    exits: list = field(default_factory=list)
    sizes: list = field(default_factory=list)
    indeterminate: int = 0
    censored: int = 0
    time_in_traps: int = 0
    steps: int = 0

    @property
    def sojourns(self) -> list:
        return [b - a for a, b in zip(self.entries, self.exits)]

    @property
    def fraction_in_traps(self) -> float:
        return self.time_in_traps / self.steps if self.steps else 0.0

    def rows(self, replica: int = 0):
        for a, b, s in zip(self.entries, self.exits, self.sizes):
            yield replica, a, b, b - a, s


class ClusterIndex:
    """Memoized classification of non-epsilon clusters of a lazily realized tree."""

    def __init__(self, tree: WeightedTree, max_size: int = 2000, max_depth: int | None = None):
        self.tree = tree
        self.max_size = max_size
        self.max_depth = np.iinfo(np.int64).max if max_depth is None else max_depth
        self.label = np.full(tree.capacity, -1, np.int64)
        self.finite: list[bool] = []
        self.size: list[int] = []
        self._members = np.empty(max_size + 1, np.int64)

    def _sync(self):
        cap = self.tree.capacity
        if len(self.label) < cap:
            grown = np.full(cap, -1, np.int64)
            grown[: len(self.label)] = self.label
            self.label = grown

    def cluster_of(self, v: int) -> int:
        self._sync()
        if self.label[v] >= 0:
            return int(self.label[v])
        tree = self.tree
        while True:
            cid = len(self.finite)
            status, count, size, other = K.explore_cluster(
                tree.arrays, tree.size, tree.generator.kernel_args, v, self.label, cid,
                self._members, self.max_size, self.max_depth)
            tree.size = int(size)
            members = self._members[:count]
            if status == K.NEED_SPACE:
                self.label[members] = -1
                tree.grow()
                self._sync()
                continue
            if status == 3:
                # touched a labelled vertex: same component, necessarily unresolved
                self.label[members] = other
                return int(other)
            self.finite.append(status == 1)
            self.size.append(int(count) if status == 1 else -1)
            self.label[members] = cid
            return cid


def trap_statistics(path: WalkPath, tree: WeightedTree | None = None,
                    index: ClusterIndex | None = None) -> TrapStats:
    """Entry and exit times of the forward path in finite non-epsilon clusters.

    A trap starts at the first time the walk stands in a finite cluster and
    ends at the first later time it stands outside that cluster. Sojourns count
    forward time only. Clusters that cannot be resolved within the size cap
    count as ``indeterminate``; a trap still open at the end is ``censored``.
    """
    tree = path.tree if tree is None else tree
    index = ClusterIndex(tree) if index is None else index
    xs = path.forward
    stats = TrapStats(steps=len(xs) - 1)
    current = None
    entered = 0
    seen_open = set()
    for t, v in enumerate(xs):
        cid = index.cluster_of(int(v))
        if current is not None and cid != current:
            stats.entries.append(entered)
            stats.exits.append(t)
            stats.sizes.append(index.size[current])
            stats.time_in_traps += t - entered
            current = None
        if current is None:
            if index.finite[cid]:
                current, entered = cid, t
            elif cid not in seen_open:
                seen_open.add(cid)
                stats.indeterminate += 1
    if current is not None:
        stats.censored += 1
        stats.time_in_traps += len(xs) - 1 - entered
    return stats


# -- transience bound ---------------------------------------------------------
def _conductance_up_and_down(tree: WeightedTree, v: int, level: int):
    """``(C(v, root), C(v, G_level))`` on the undirected tree."""
    down = level_conductances(tree, level)
    line = []
    x = v
    while x != 0:
        line.append(x)
        x = int(tree.parent[x])
    inv = sum(1.0 / tree.cond[x] if tree.cond[x] > 0 else np.inf for x in line)
    c_root = 0.0 if inv == np.inf else (np.inf if inv == 0 else 1.0 / inv)
    # conductance from each ancestor to G_level avoiding the branch towards v
    above = 0.0
    path = line[::-1]  # from the root's child down to v
    prev = 0
    for x in path:
        p = prev
        side = 0.0
        f = tree.first[p]
        for c in range(f, f + tree.nch[p]):
            if c != x:
                side += K.series(tree.cond[c], down[c])
        if p != 0:
            side += K.series(tree.cond[p], above)
        above = side
        prev = x
    c_level = down[v] + K.series(tree.cond[v], above)
    return c_root, c_level


def return_bound_check(tree: WeightedTree, v: int, steps: int, rng, walks: int = 1000,
                       level: int | None = None):
    """Frequency of hitting the root before generation ``level`` from ``v``, and its bound.

    The bound is ``min(1, C(v, root) / C(v, G_level))``. Walks that exceed
    ``steps`` transitions are counted as not returning and reported in the
    frequency denominator.
    """
    if v == 0:
        raise PreconditionError("start vertex must differ from the root")
    d = int(tree.depth[v])
    level = d + 8 if level is None else level
    if level <= d:
        raise ValueError("level must lie below the start vertex")
    c_root, c_level = _conductance_up_and_down(tree, v, level)
    bound = 1.0 if c_level == 0 else min(1.0, c_root / c_level)
    state = _state(rng, "return")
    hits = 0
    for _ in range(walks):
        t, x = 0, v
        while True:
            status, x, t, size, state = K.walk_until(
                tree.arrays, tree.size, tree.generator.kernel_args, x, 0, level, t, steps, state)
            tree.size = int(size)
            state = np.uint64(state)
            if status != K.NEED_SPACE:
                break
            tree.grow()
        hits += status == 1
    return hits / walks, bound
