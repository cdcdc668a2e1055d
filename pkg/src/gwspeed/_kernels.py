"""Compiled inner loops.

Trees are stored as parallel arrays ``(parent, first, nch, cond, eps, depth,
key, vtype)``. The children of ``v`` occupy ``first[v] : first[v] + nch[v]``;
``nch[v] == -1`` marks a vertex whose children are not realized yet.

Every random quantity attached to a vertex is a hash of the vertex key, so a
tree does not depend on the order in which its vertices are realized. Walk
randomness comes from a SplitMix64 stream held in a single uint64 state.
"""
import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
M1 = np.uint64(0xBF58476D1CE4E5B9)
M2 = np.uint64(0x94D049BB133111EB)
S30 = np.uint64(30)
S27 = np.uint64(27)
S31 = np.uint64(31)
S11 = np.uint64(11)
ONE = np.uint64(1)
INV53 = 1.0 / 9007199254740992.0

CH_OFFSPRING = np.uint64(0x1F0A3C5D7E9B2468)
CH_EPSILON = np.uint64(0x2E1B4D6F8A0C3579)
CH_BASE = np.uint64(0x3D2C5E7A9B1D4680)
CH_SPLIT = np.uint64(0x4C3D6F8B0A2E5791)

MODE_STATIC = 0
MODE_PLAIN = 1
MODE_HARRIS = 2

TYPE_PLAIN = 0
TYPE_BACKBONE = 1
TYPE_BUSH = 2

NEED_SPACE = -1


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> S30)) * M1
    z = (z ^ (z >> S27)) * M2
    return z ^ (z >> S31)


@njit(cache=True, inline="always")
def to_unit(x):
    return np.float64(x >> S11) * INV53


@njit(cache=True, inline="always")
def channel_uniform(key, channel):
    return to_unit(mix64(key ^ channel))


@njit(cache=True, inline="always")
def child_key(key, i):
    return mix64(key + GOLDEN * np.uint64(i + 1))


@njit(cache=True, inline="always")
def next_uniform(state):
    state = state + GOLDEN
    return state, to_unit(mix64(state))


@njit(cache=True, inline="always")
def inverse_cdf(cdf, u):
    i = np.searchsorted(cdf, u, side="right")
    if i >= cdf.shape[0]:
        i = cdf.shape[0] - 1
    return i


@njit(cache=True)
def expand(v, tr, size, gen):
    """Realize the children of ``v``; returns the new size or NEED_SPACE."""
    parent, first, nch, cond, eps, depth, key, vtype = tr
    (mode, aug, kmax, alpha, eps_value, off_vals, off_cdf, base_vals, base_cdf,
     tot_cdf, split_cdf, bush_vals, bush_cdf) = gen
    if nch[v] >= 0:
        return size
    if mode == MODE_STATIC:
        nch[v] = 0
        first[v] = size
        return size
    if size + kmax + 1 > parent.shape[0]:
        return NEED_SPACE
    k_v = key[v]
    u = channel_uniform(k_v, CH_OFFSPRING)
    n_back = 0
    if mode == MODE_PLAIN:
        k = off_vals[inverse_cdf(off_cdf, u)]
        if aug and v == 0:
            k += 1
    elif vtype[v] == TYPE_BACKBONE:
        k = inverse_cdf(tot_cdf, u)
        n_back = 1 + inverse_cdf(split_cdf[k, 1:], channel_uniform(k_v, CH_SPLIT))
        if n_back > k:
            n_back = k
    else:
        k = bush_vals[inverse_cdf(bush_cdf, u)]
    first[v] = size
    nch[v] = k
    for i in range(k):
        c = size + i
        kc = child_key(k_v, i)
        key[c] = kc
        parent[c] = v
        first[c] = -1
        nch[c] = -1
        depth[c] = depth[v] + 1
        base = base_vals[inverse_cdf(base_cdf, channel_uniform(kc, CH_BASE))]
        if mode == MODE_PLAIN:
            vtype[c] = TYPE_PLAIN
            if channel_uniform(kc, CH_EPSILON) < alpha:
                eps[c] = True
                cond[c] = eps_value
            else:
                eps[c] = False
                cond[c] = base
        else:
            vtype[c] = TYPE_BACKBONE if i < n_back else TYPE_BUSH
            eps[c] = False
            cond[c] = base
    return size + k


@njit(cache=True)
def realize(tr, size, gen, max_depth, start):
    """Expand every vertex of depth < max_depth, scanning indices from ``start``.

    Returns ``(size, index)``; ``index < size`` signals that space ran out.
    """
    nch = tr[2]
    depth = tr[5]
    i = start
    while i < size:
        if nch[i] < 0 and depth[i] < max_depth:
            new = expand(i, tr, size, gen)
            if new == NEED_SPACE:
                return size, i
            size = new
        i += 1
    return size, i


@njit(cache=True)
def step_from(v, tr, u):
    """Neighbour of ``v`` chosen with probability proportional to conductance."""
    parent, first, nch, cond = tr[0], tr[1], tr[2], tr[3]
    p = parent[v]
    f = first[v]
    k = nch[v]
    total = 0.0
    if p >= 0:
        total += cond[v]
    for c in range(f, f + k):
        total += cond[c]
    n_nb = k + (1 if p >= 0 else 0)
    if n_nb == 0:
        return v
    if total > 0.0:
        target = u * total
        acc = 0.0
        last = -1
        if p >= 0:
            acc += cond[v]
            if cond[v] > 0.0:
                last = p
                if target < acc:
                    return p
        for c in range(f, f + k):
            acc += cond[c]
            if cond[c] > 0.0:
                last = c
                if target < acc:
                    return c
        return last
    # no conducting edge: uniform over neighbours
    j = int(u * n_nb)
    if j >= n_nb:
        j = n_nb - 1
    if p >= 0:
        if j == 0:
            return p
        j -= 1
    return f + j


@njit(cache=True)
def walk(tr, size, gen, path, t, steps, state):
    """Advance ``path`` from index ``t`` to ``steps``.

    Returns ``(t, size, state)``; ``t < steps`` means space ran out.
    """
    nch = tr[2]
    while t < steps:
        v = path[t]
        if nch[v] < 0:
            new = expand(v, tr, size, gen)
            if new == NEED_SPACE:
                return t, size, state
            size = new
        state, u = next_uniform(state)
        path[t + 1] = step_from(v, tr, u)
        t += 1
    return t, size, state


@njit(cache=True)
def walk_until(tr, size, gen, v, target, max_depth, t, max_steps, state):
    """Walk from ``v`` until it hits ``target`` or depth ``max_depth``.

    Returns ``(status, v, t, size, state)`` with status 1 = hit target,
    0 = hit depth, 2 = step cap, NEED_SPACE = out of space.
    """
    nch = tr[2]
    depth = tr[5]
    while t < max_steps:
        if v == target:
            return 1, v, t, size, state
        if depth[v] >= max_depth:
            return 0, v, t, size, state
        if nch[v] < 0:
            new = expand(v, tr, size, gen)
            if new == NEED_SPACE:
                return NEED_SPACE, v, t, size, state
            size = new
        state, u = next_uniform(state)
        v = step_from(v, tr, u)
        t += 1
    if v == target:
        return 1, v, t, size, state
    return 2, v, t, size, state


@njit(cache=True, inline="always")
def series(xi, c):
    """Conductance of an edge ``xi`` in series with a subnetwork of conductance ``c``."""
    if xi <= 0.0 or c <= 0.0:
        return 0.0
    if c == np.inf:
        return xi
    # 1/(1/a + 1/b) is monotone under correctly rounded arithmetic
    t = 1.0 / (1.0 / xi + 1.0 / c)
    return t if t < xi else xi


@njit(cache=True)
def level_conductances(tr, size, level):
    """Conductance from every vertex of depth < level down to generation ``level``.

    Entries for deeper vertices are NaN. Returns ``(C, ok)``; ``ok`` is False
    when some vertex above ``level`` is not realized.
    """
    first, nch, cond, depth = tr[1], tr[2], tr[3], tr[5]
    out = np.full(size, np.nan)
    for v in range(size - 1, -1, -1):
        d = depth[v]
        if d > level:
            continue
        if d == level:
            out[v] = np.inf
            continue
        if nch[v] < 0:
            return out, False
        total = 0.0
        f = first[v]
        for c in range(f, f + nch[v]):
            total += series(cond[c], out[c])
        out[v] = total
    return out, True


@njit(cache=True)
def dist(tr, u, v):
    parent, depth = tr[0], tr[5]
    d = 0
    while depth[u] > depth[v]:
        u = parent[u]
        d += 1
    while depth[v] > depth[u]:
        v = parent[v]
        d += 1
    while u != v:
        u = parent[u]
        v = parent[v]
        d += 2
    return d


@njit(cache=True)
def ancestor_at_depth(tr, v, d):
    parent, depth = tr[0], tr[5]
    while depth[v] > d:
        v = parent[v]
    return v


@njit(cache=True)
def ball_conductance(tr, size, gen, v, radius):
    """Conductance from ``v`` to the sphere of graph radius ``radius`` around it.

    The tree is treated as undirected; returns ``(C, size)`` with C = NaN when
    space ran out during lazy expansion.
    """
    parent, first, nch, cond = tr[0], tr[1], tr[2], tr[3]
    # iterative post-order over (vertex, came_from, distance)
    cap = 64
    stack_v = np.empty(cap, np.int64)
    stack_from = np.empty(cap, np.int64)
    stack_d = np.empty(cap, np.int64)
    stack_state = np.empty(cap, np.int64)
    stack_acc = np.empty(cap, np.float64)
    top = 0
    stack_v[0] = v
    stack_from[0] = -1
    stack_d[0] = 0
    stack_state[0] = -1
    stack_acc[0] = 0.0
    result = 0.0
    while top >= 0:
        x = stack_v[top]
        d = stack_d[top]
        if d == radius:
            val = np.inf
        else:
            if nch[x] < 0:
                new = expand(x, tr, size, gen)
                if new == NEED_SPACE:
                    return np.nan, size
                size = new
            # neighbour index: -1 = parent, 0.. = children
            s = stack_state[top]
            nxt = -2
            while s < nch[x]:
                if s == -1:
                    cand = parent[x]
                else:
                    cand = first[x] + s
                s += 1
                if cand >= 0 and cand != stack_from[top]:
                    nxt = cand
                    break
            stack_state[top] = s
            if nxt != -2:
                top += 1
                if top >= cap:
                    return np.nan, size
                stack_v[top] = nxt
                stack_from[top] = x
                stack_d[top] = d + 1
                stack_state[top] = -1
                stack_acc[top] = 0.0
                continue
            val = stack_acc[top]
        # pop x with value val
        top -= 1
        if top < 0:
            result = val
            break
        y = stack_v[top]
        xi = cond[x] if parent[x] == y else cond[y]
        stack_acc[top] += series(xi, val)
    return result, size


@njit(cache=True)
def cluster_ball_count(tr, size, gen, v, radius):
    """Vertices within ``radius`` of ``v`` joined to it by non-epsilon edges."""
    parent, first, nch, eps = tr[0], tr[1], tr[2], tr[4]
    cap = 4096
    queue = np.empty(cap, np.int64)
    came = np.empty(cap, np.int64)
    dd = np.empty(cap, np.int64)
    queue[0] = v
    came[0] = -1
    dd[0] = 0
    head = 0
    tail = 1
    while head < tail:
        x = queue[head]
        d = dd[head]
        fr = came[head]
        head += 1
        if d == radius:
            continue
        if nch[x] < 0:
            new = expand(x, tr, size, gen)
            if new == NEED_SPACE:
                return -1, size
            size = new
        p = parent[x]
        if p >= 0 and p != fr and not eps[x]:
            if tail >= cap:
                return -1, size
            queue[tail] = p
            came[tail] = x
            dd[tail] = d + 1
            tail += 1
        for c in range(first[x], first[x] + nch[x]):
            if c != fr and not eps[c]:
                if tail >= cap:
                    return -1, size
                queue[tail] = c
                came[tail] = x
                dd[tail] = d + 1
                tail += 1
    return tail, size


@njit(cache=True)
def explore_cluster(tr, size, gen, v, label, cluster_id, members, max_size, max_depth):
    """Label the non-epsilon cluster of ``v``.

    Returns ``(status, count, size, other)``: status 1 = finite (fully
    enclosed), 0 = too large or reaches ``max_depth`` (unresolved), 3 = joins
    a vertex already labelled ``other``, NEED_SPACE = out of space. Members
    are written to ``members[:count]``.
    """
    parent, first, nch, eps, depth = tr[0], tr[1], tr[2], tr[4], tr[5]
    members[0] = v
    label[v] = cluster_id
    count = 1
    head = 0
    while head < count:
        x = members[head]
        head += 1
        if depth[x] >= max_depth:
            return 0, count, size, -1
        if nch[x] < 0:
            new = expand(x, tr, size, gen)
            if new == NEED_SPACE:
                return NEED_SPACE, count, size, -1
            size = new
        p = parent[x]
        if p >= 0 and not eps[x] and label[p] != cluster_id:
            if label[p] >= 0:
                return 3, count, size, label[p]
            if count >= max_size:
                return 0, count, size, -1
            label[p] = cluster_id
            members[count] = p
            count += 1
        for c in range(first[x], first[x] + nch[x]):
            if not eps[c] and label[c] != cluster_id:
                if label[c] >= 0:
                    return 3, count, size, label[c]
                if count >= max_size:
                    return 0, count, size, -1
                label[c] = cluster_id
                members[count] = c
                count += 1
    return 1, count, size, -1
