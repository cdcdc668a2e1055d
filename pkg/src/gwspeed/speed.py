"""Speed estimators and the experiment-level checks built on them.

Three estimators of the effective velocity are provided:

* ``speed_lln``: ``|X_n| / n`` along long walks, one fresh tree per replica;
* ``speed_conductance_formula``: ``1 - (2/gamma) E^aug[xi0 C(T*) / C(T)]``;
* ``speed_invariant_formula``: the hat-weighted mean of the horodistance
  increment ``[X_1 - X_0]`` seen from ``X_{-M}``.

Every replica is a pure function of ``(master_seed, replica_index)``. Trees are
keyed by the ``"tree"`` stream, so estimators run with the same seed see the
same environments, and the epsilon coupling is exact across mixtures.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import binom

from . import _kernels as K
from .distributions import (
    ConductanceLaw,
    EpsilonMixture,
    OffspringLaw,
    PreconditionError,
    extinction_probability,
    mixture_mean,
    thinned_law,
)
from .electrical import conductance_ratio_pair
from .parallel import map_replicas
from .rng import stream_key, stream_state
from .treegen import Generator, WeightedTree, sample_rejection_cluster
from .walk import expected_d_m, horodistance, run_walk

SIGMAS = 3.0
CONFIDENCE = 0.9973
DEFAULT_TRUNCATION = 16
DEFAULT_TOL = 1e-6
DEFAULT_M = 1024


@dataclass
class Estimate:
    """Monte Carlo point estimate; the CI is ``value +- 3 stderr``."""

    value: float
    stderr: float
    replicas: int
    method: str
    fingerprint: str = ""
    confidence: float = CONFIDENCE
    extra: dict = field(default_factory=dict)
    samples: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def ci(self) -> tuple[float, float]:
        return self.value - SIGMAS * self.stderr, self.value + SIGMAS * self.stderr

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("samples")
        d["ci_low"], d["ci_high"] = self.ci
        return d


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, float)
    if len(x) == 0:
        return math.nan, math.nan
    se = float(np.std(x, ddof=1) / math.sqrt(len(x))) if len(x) > 1 else math.inf
    return float(np.mean(x)), se


def combined_se(*ses: float) -> float:
    return math.sqrt(sum(s * s for s in ses))


def agree(a: Estimate, b: Estimate, sigmas: float = SIGMAS) -> bool:
    """True when two independent estimates agree within combined ``sigmas``."""
    return abs(a.value - b.value) <= sigmas * combined_se(a.stderr, b.stderr)


def _check_offspring(offspring: OffspringLaw):
    if not offspring.supercritical:
        raise PreconditionError("offspring law must be supercritical")
    if not offspring.leafless:
        raise PreconditionError("offspring law must have p_0 = 0")


def _tree(offspring, mixture, seed, i, augmented=False) -> WeightedTree:
    key = stream_key(seed, i, "tree")
    return WeightedTree(Generator.plain(offspring, mixture, key, augmented))


def _displacement(tree, steps, burn_in, state) -> float:
    path = run_walk(tree, 0, steps, state).positions
    return (tree.depth[path[steps]] - tree.depth[path[burn_in]]) / (steps - burn_in)


# -- LLN -----------------------------------------------------------------------
def _lln_replica(i, offspring, mixture, steps, burn_in, seed):
    tree = _tree(offspring, mixture, seed, i)
    return _displacement(tree, steps, burn_in, stream_state(seed, i, "walk"))


def speed_lln(offspring: OffspringLaw, mixture: EpsilonMixture, steps: int, replicas: int,
              burn_in: int = 0, seed: int = 0, workers: int = 1) -> Estimate:
    """Average of ``(|X_steps| - |X_burn_in|) / (steps - burn_in)`` over independent walks.

    With ``epsilon = 0`` the walk is confined to the retained cluster: the
    speed is zero when the thinned law is not supercritical and otherwise the
    speed on the cluster conditioned to be infinite.
    """
    _check_offspring(offspring)
    if not 0 <= burn_in < steps:
        raise ValueError("need 0 <= burn_in < steps")
    if isinstance(mixture, ConductanceLaw):
        mixture = EpsilonMixture(mixture)
    if mixture.alpha > 0 and mixture.epsilon == 0:
        thin = thinned_law(offspring, mixture.alpha)
        if extinction_probability(thin) >= 1.0:
            return Estimate(0.0, 0.0, replicas, "lln", extra={"reason": "subcritical cluster"})
        est = speed_on_pruned(offspring, mixture.alpha, mixture.base, steps, replicas,
                              burn_in=burn_in, seed=seed, workers=workers)
        est.method = "lln"
        return est
    x = map_replicas(_lln_replica, replicas, workers, offspring=offspring, mixture=mixture,
                     steps=steps, burn_in=burn_in, seed=seed)
    value, se = _mean_se(x)
    return Estimate(value, se, replicas, "lln", extra={"steps": steps, "burn_in": burn_in},
                    samples=x)


# -- conductance ratio formula ----------------------------------------------------
def _ratio_replica(i, offspring, mixture, truncation, n0, step, tol, max_vertices, seed):
    """Integrand ``xi0 C(T*) / C(T)`` deepened until it moves by at most ``tol``.

    Returns ``(integrand, depth_used, converged)``. The tolerance applies to
    the dimensionless ratio ``C(T*) / C(T)``, so the stopping depth does not
    change when all conductances are scaled.
    """
    tree = _tree(offspring, mixture, seed, i, augmented=True)
    xi0 = tree.cond[tree.v0]
    prev = None
    n = min(n0, truncation)
    while True:
        c_star, c_full = conductance_ratio_pair(tree, n)
        r = c_star / c_full if c_full > 0 else 0.0
        if prev is not None and abs(r - prev) <= tol:
            return xi0 * r, n, 1.0
        if n >= truncation or tree.size > max_vertices:
            return xi0 * r, n, float(tol == 0)
        prev = r
        n = min(n + step, truncation)


def speed_conductance_formula(offspring: OffspringLaw, mixture: EpsilonMixture,
                              truncation: int = DEFAULT_TRUNCATION, replicas: int = 10**4,
                              seed: int = 0, workers: int = 1, tol: float = DEFAULT_TOL,
                              n0: int = 6, step: int = 4,
                              max_vertices: int = 2 * 10**6) -> Estimate:
    """``1 - (2/gamma) E^aug[xi0 C(T*) / C(T)]`` over augmented trees.

    Each replica evaluates the integrand at depths ``n0, n0 + step, ...`` and
    stops once two successive values differ by at most ``tol``, or at depth
    ``truncation``, or when the tree exceeds ``max_vertices``. ``tol = 0``
    evaluates every replica at exactly ``truncation``.
    """
    _check_offspring(offspring)
    if isinstance(mixture, ConductanceLaw):
        mixture = EpsilonMixture(mixture)
    if not mixture.elliptic:
        raise PreconditionError("conductance formula needs uniformly elliptic conductances; "
                                "use speed_on_pruned for epsilon = 0")
    if tol == 0:
        n0 = truncation
    gamma = mixture_mean(mixture)
    rows = map_replicas(_ratio_replica, replicas, workers, offspring=offspring, mixture=mixture,
                        truncation=truncation, n0=n0, step=step, tol=tol,
                        max_vertices=max_vertices, seed=seed)
    x = rows[:, 0]
    m, se = _mean_se(x)
    samples = 1.0 - (2.0 / gamma) * x
    return Estimate(1.0 - (2.0 / gamma) * m, (2.0 / gamma) * se, replicas,
                    "conductance_formula",
                    extra={"truncation": truncation, "tol": tol, "gamma": gamma,
                           "mean_depth": float(rows[:, 1].mean()),
                           "capped": int(replicas - rows[:, 2].sum())},
                    samples=samples)


# -- invariant measure formula ----------------------------------------------------
def hat_weight(tree: WeightedTree, gamma: float) -> float:
    """``pi(root) / (gamma deg(root))``."""
    return tree.pi(0) / (gamma * tree.degree(0))


def _invariant_replica(i, offspring, mixture, gamma, M, seed, rao_blackwell):
    """``(w, w D_M, D_M != D_2M)``; the past walk runs 2M steps for the stability check."""
    tree = _tree(offspring, mixture, seed, i, augmented=True)
    w = hat_weight(tree, gamma)
    past = run_walk(tree, 0, 2 * M, stream_state(seed, i, "past")).positions
    z, z2 = int(past[M]), int(past[2 * M])
    if rao_blackwell:
        d, d2 = expected_d_m(tree, 0, z), expected_d_m(tree, 0, z2)
    else:
        x1 = int(run_walk(tree, 0, 1, stream_state(seed, i, "future")).positions[-1])
        d, d2 = horodistance(tree, x1, 0, z), horodistance(tree, x1, 0, z2)
    return w, w * d, float(d != d2)


def speed_invariant_formula(offspring: OffspringLaw, mixture: EpsilonMixture,
                            M: int = DEFAULT_M, replicas: int = 10**4, seed: int = 0,
                            workers: int = 1, rao_blackwell: bool = True) -> Estimate:
    """Self-normalized hat-weighted mean of ``[X_1 - X_0]`` relative to ``X_{-M}``.

    ``extra["unstable_fraction"]`` is the share of replicas whose increment
    changes when the reference point moves from ``X_{-M}`` to ``X_{-2M}``; a
    value near zero indicates ``M`` is large enough. With ``rao_blackwell``
    the future step is averaged out exactly given the environment and the
    past, which keeps the estimator unbiased for the same quantity while
    lowering its variance.
    """
    _check_offspring(offspring)
    if isinstance(mixture, ConductanceLaw):
        mixture = EpsilonMixture(mixture)
    if not mixture.elliptic:
        raise PreconditionError("horodistance speed needs epsilon > 0")
    if M < 1:
        raise ValueError("M must be at least 1")
    gamma = mixture_mean(mixture)
    rows = map_replicas(_invariant_replica, replicas, workers, offspring=offspring,
                        mixture=mixture, gamma=gamma, M=M, seed=seed,
                        rao_blackwell=rao_blackwell)
    w, y = rows[:, 0], rows[:, 1]
    wbar, ybar = w.mean(), y.mean()
    ratio = ybar / wbar
    resid = (y - ratio * w) / wbar
    se = float(np.std(resid, ddof=1) / math.sqrt(replicas))
    w_mean, w_se = _mean_se(w)
    return Estimate(float(ratio), se, replicas, "invariant_formula",
                    extra={"M": M, "weight_mean": w_mean, "weight_stderr": w_se,
                           "unstable_fraction": float(rows[:, 2].mean()),
                           "unnormalized": float(ybar), "rao_blackwell": rao_blackwell},
                    samples=rows)


# -- survival under the hat measure ---------------------------------------------
def hat_survival_probability(offspring: OffspringLaw, alpha: float) -> float:
    """Hat-measure probability that the retained cluster of the root is infinite.

    Closed form: a root of degree ``k`` (probability ``p_{k-1}``) keeps
    ``j ~ Bin(k, 1-alpha)`` edges, carries hat weight ``j / ((1-alpha) k)``
    in expectation, and its cluster survives with probability ``1 - q^j``.
    """
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    if alpha >= 1:
        return 0.0
    q = extinction_probability(thinned_law(offspring, alpha))
    if q >= 1.0:
        return 0.0
    total = 0.0
    for n, p in offspring.pmf:
        k = n + 1
        j = np.arange(k + 1)
        terms = binom.pmf(j, k, 1 - alpha) * j * (1 - q ** j) / ((1 - alpha) * k)
        total += p * math.fsum(terms)
    return min(max(total, 0.0), 1.0)


def _hat_survival_replica(i, offspring, mixture, gamma, q, depth, seed):
    tree = _tree(offspring, mixture, seed, i, augmented=True)
    w = hat_weight(tree, gamma)
    if w == 0.0:
        return 0.0
    tree.extend_to_depth(depth)
    # retained cluster of the root, down to the given depth
    stack, alive = [0], 0
    while stack:
        v = stack.pop()
        if tree.depth[v] == depth:
            alive += 1
            continue
        for c in tree.children(v):
            if not tree.eps[c]:
                stack.append(int(c))
    return w * (1.0 - q ** alive)


def hat_survival_oracle(offspring: OffspringLaw, alpha: float, base: ConductanceLaw | None = None,
                        replicas: int = 10**5, depth: int = 1, seed: int = 0,
                        workers: int = 1) -> Estimate:
    """Weighted Monte Carlo estimate of the hat-measure survival probability.

    Augmented trees are drawn with epsilon = 0, weighted by
    ``pi(root) / (gamma_0 deg(root))``, and survival is propagated from the
    retained cluster's vertices at ``depth`` with the extinction probability.
    """
    base = ConductanceLaw.point_mass(1.0) if base is None else base
    mixture = EpsilonMixture(base, alpha, 0.0)
    gamma = mixture_mean(mixture)
    q = extinction_probability(thinned_law(offspring, alpha))
    x = map_replicas(_hat_survival_replica, replicas, workers, offspring=offspring,
                     mixture=mixture, gamma=gamma, q=q, depth=depth, seed=seed)
    value, se = _mean_se(x)
    return Estimate(value, se, replicas, "hat_survival_oracle",
                    extra={"depth": depth, "q": q}, samples=x)


# -- walks on the conditioned cluster ----------------------------------------------
def _pruned_replica(i, offspring, alpha, base, steps, burn_in, seed, sampler, depth):
    if sampler == "harris":
        tree = WeightedTree(Generator.harris(offspring, alpha, base, stream_key(seed, i, "tree")))
    else:
        tree, _ = sample_rejection_cluster(offspring, alpha, base, depth,
                                           stream_key(seed, i, "tree"))
    return _displacement(tree, steps, burn_in, stream_state(seed, i, "walk"))


def speed_on_pruned(offspring: OffspringLaw, alpha: float, base: ConductanceLaw, steps: int,
                    replicas: int, burn_in: int = 0, seed: int = 0, workers: int = 1,
                    sampler: str = "harris", rejection_depth: int = 30) -> Estimate:
    """LLN speed on the retained cluster conditioned to be infinite.

    ``sampler`` is ``"harris"`` (backbone plus bushes) or ``"rejection"``
    (unconditioned clusters kept once they reach ``rejection_depth``).
    """
    _check_offspring(offspring)
    if extinction_probability(thinned_law(offspring, alpha)) >= 1.0:
        raise PreconditionError("cannot condition a subcritical cluster on survival")
    if sampler not in ("harris", "rejection"):
        raise ValueError(f"unknown sampler {sampler!r}")
    if not 0 <= burn_in < steps:
        raise ValueError("need 0 <= burn_in < steps")
    if isinstance(base, EpsilonMixture):
        base = base.base
    x = map_replicas(_pruned_replica, replicas, workers, offspring=offspring, alpha=alpha,
                     base=base, steps=steps, burn_in=burn_in, seed=seed, sampler=sampler,
                     depth=rejection_depth)
    value, se = _mean_se(x)
    return Estimate(value, se, replicas, "lln_pruned",
                    extra={"sampler": sampler, "alpha": alpha, "steps": steps}, samples=x)


# -- vanishing-conductance limit ----------------------------------------------------
@dataclass
class LimitReport:
    grid: list
    estimates: list
    hat_survival: float
    pruned: Estimate | None
    target: float
    target_stderr: float
    within_band: bool
    monotone: bool
    complete: bool = True
    hat_oracle: Estimate | None = None

    @property
    def passed(self) -> bool:
        return self.complete and self.within_band and self.monotone

    @property
    def target_ci(self) -> tuple[float, float]:
        return self.target - SIGMAS * self.target_stderr, self.target + SIGMAS * self.target_stderr

    def rows(self):
        """``(epsilon, v_hat, stderr, replicas)`` per grid point."""
        for eps, est in zip(self.grid, self.estimates):
            yield eps, est.value, est.stderr, est.replicas

    def to_dict(self) -> dict:
        return {
            "grid": list(self.grid),
            "estimates": [e.to_dict() for e in self.estimates],
            "hat_survival": self.hat_survival,
            "hat_oracle": None if self.hat_oracle is None else self.hat_oracle.to_dict(),
            "pruned": None if self.pruned is None else self.pruned.to_dict(),
            "target": self.target,
            "target_stderr": self.target_stderr,
            "target_ci_low": self.target_ci[0],
            "target_ci_high": self.target_ci[1],
            "within_band": self.within_band,
            "monotone": self.monotone,
            "complete": self.complete,
            "passed": self.passed,
        }


def monotone_toward(values, ses, target: float, sigmas: float = SIGMAS) -> bool:
    """Distance to ``target`` never grows by more than ``sigmas`` combined errors."""
    dist = [abs(v - target) for v in values]
    return all(dist[i + 1] <= dist[i] + sigmas * combined_se(ses[i], ses[i + 1])
               for i in range(len(dist) - 1))


def theorem1_check(offspring: OffspringLaw, alpha: float, base: ConductanceLaw,
                   epsilon_grid: Sequence[float], steps: int = 10**5, replicas: int = 100,
                   burn_in: int = 0, pruned_replicas: int | None = None, seed: int = 0,
                   workers: int = 1, time_budget: float | None = None,
                   oracle_replicas: int = 0) -> LimitReport:
    """Compare the speed at small epsilon with ``P_hat(|T_0| = inf) * v(cluster)``.

    All grid points share the master seed, so they run on coupled
    environments. ``time_budget`` (seconds) stops the sweep early and flags
    the report incomplete.
    """
    _check_offspring(offspring)
    grid = [float(e) for e in epsilon_grid]
    if any(e <= 0 for e in grid) or any(a <= b for a, b in zip(grid, grid[1:])):
        raise PreconditionError("epsilon grid must be strictly decreasing and positive")
    start = time.monotonic()
    hat = hat_survival_probability(offspring, alpha)
    oracle = None
    if oracle_replicas:
        oracle = hat_survival_oracle(offspring, alpha, base, oracle_replicas, seed=seed,
                                     workers=workers)
    if hat == 0.0:
        pruned, target, target_se = None, 0.0, 0.0
    else:
        pruned = speed_on_pruned(offspring, alpha, base, steps, pruned_replicas or replicas,
                                 burn_in=burn_in, seed=seed, workers=workers)
        target, target_se = hat * pruned.value, hat * pruned.stderr
    estimates = []
    complete = True
    for eps in grid:
        if time_budget is not None and time.monotonic() - start > time_budget:
            complete = False
            break
        mix = EpsilonMixture(base, alpha, eps)
        est = speed_lln(offspring, mix, steps, replicas, burn_in=burn_in, seed=seed,
                        workers=workers)
        est.extra["epsilon"] = eps
        estimates.append(est)
    if estimates and complete:
        last = estimates[-1]
        within = abs(last.value - target) <= SIGMAS * combined_se(last.stderr, target_se)
    else:
        within = False
    monotone = monotone_toward([e.value for e in estimates], [e.stderr for e in estimates],
                               target)
    return LimitReport(grid[: len(estimates)], estimates, hat, pruned, target, target_se,
                       within, monotone, complete, oracle)


# -- continuity in the conductance law ----------------------------------------------
@dataclass
class ContinuityReport:
    laws: list
    estimates: list
    limit: Estimate
    deviations: list
    combined_stderr: list
    paired_stderr: list
    shrinking: bool
    final_within: bool

    @property
    def passed(self) -> bool:
        return self.shrinking and self.final_within

    def to_dict(self) -> dict:
        return {
            "laws": [[list(map(float, a)) for a in law.atoms] for law in self.laws],
            "estimates": [e.to_dict() for e in self.estimates],
            "limit": self.limit.to_dict(),
            "deviations": self.deviations,
            "combined_stderr": self.combined_stderr,
            "paired_stderr": self.paired_stderr,
            "shrinking": self.shrinking,
            "final_within": self.final_within,
            "passed": self.passed,
        }


def continuity_check(offspring: OffspringLaw, law_sequence: Sequence[ConductanceLaw],
                     law_limit: ConductanceLaw, truncation: int = DEFAULT_TRUNCATION,
                     replicas: int = 10**4, seed: int = 0, workers: int = 1,
                     tol: float = DEFAULT_TOL) -> ContinuityReport:
    """Speeds along a sequence of conductance laws against the speed at the limit law.

    All laws must declare the same ellipticity constant. Estimates use the
    conductance formula on shared seeds. Deviations must shrink along the
    sequence (up to paired noise) and the last one must be within 3 combined
    standard errors of zero.
    """
    laws = list(law_sequence)
    deltas = {round(law.delta, 12) for law in laws + [law_limit]}
    if len(deltas) != 1:
        raise PreconditionError(f"laws do not share a common delta: {sorted(deltas)}")
    kw = dict(truncation=truncation, replicas=replicas, seed=seed, workers=workers, tol=tol)
    limit = speed_conductance_formula(offspring, EpsilonMixture(law_limit), **kw)
    estimates, devs, comb, paired = [], [], [], []
    for law in laws:
        est = speed_conductance_formula(offspring, EpsilonMixture(law), **kw)
        estimates.append(est)
        devs.append(est.value - limit.value)
        comb.append(combined_se(est.stderr, limit.stderr))
        paired.append(_mean_se(est.samples - limit.samples)[1])
    shrinking = all(abs(devs[i + 1]) <= abs(devs[i]) + SIGMAS * combined_se(paired[i], paired[i + 1])
                    for i in range(len(devs) - 1))
    final = bool(devs) and abs(devs[-1]) <= SIGMAS * comb[-1]
    return ContinuityReport(laws, estimates, limit, devs, comb, paired, shrinking, final)


# -- stationarity of the hat measure --------------------------------------------------
def f_degree(tree: WeightedTree, x: int) -> float:
    return float(tree.degree(x))


def f_pi(tree: WeightedTree, x: int) -> float:
    return float(tree.pi(x))


def f_ball_conductance(tree: WeightedTree, x: int, radius: int = 3) -> float:
    """Conductance from ``x`` to the sphere of radius 3 around it."""
    while True:
        c, size = K.ball_conductance(tree.arrays, tree.size, tree.generator.kernel_args, x, radius)
        tree.size = int(size)
        if not math.isnan(c):
            return float(c)
        tree.grow()


def f_cluster_indicator(tree: WeightedTree, x: int, radius: int = 2, threshold: int = 4) -> float:
    """1 when more than 4 retained-cluster vertices lie within distance 2 of ``x``."""
    while True:
        n, size = K.cluster_ball_count(tree.arrays, tree.size, tree.generator.kernel_args,
                                       x, radius)
        tree.size = int(size)
        if n >= 0:
            return float(n > threshold)
        tree.grow()


def f_constant(tree: WeightedTree, x: int) -> float:
    return 1.0


BUILTIN_FUNCTIONS: dict[str, Callable] = {
    "degree": f_degree,
    "pi": f_pi,
    "ball_conductance": f_ball_conductance,
    "cluster_indicator": f_cluster_indicator,
}
BUILTIN_PAIRS = [("degree", "pi"), ("ball_conductance", "cluster_indicator")]


def _stationarity_replica(i, offspring, mixture, gamma, functions, seed):
    tree = _tree(offspring, mixture, seed, i, augmented=True)
    nbrs = tree.neighbours(0)
    xs = np.array([tree.edge_conductance(0, v) for v in nbrs])
    pi = xs.sum()
    probs = xs / pi if pi > 0 else np.full(len(nbrs), 1.0 / len(nbrs))
    w = pi / (gamma * len(nbrs))
    v0 = tree.v0
    f_root, f_v0, diffs = [], [], []
    for f in functions:
        fr = f(tree, 0)
        fn = np.array([f(tree, v) for v in nbrs])
        f_root.append(fr)
        f_v0.append(fn[nbrs.index(v0)])
        # f(root) - Gf(root) as a weighted sum of differences, exact for constants
        diffs.append(float(probs @ (fr - fn)))
    return [w, float(tree.cond[v0])] + f_root + f_v0 + diffs


@dataclass
class StationarityReport:
    epsilon: float
    functions: list
    replicas: int
    weight_mean: float
    weight_stderr: float
    invariance: list
    symmetry: list

    @property
    def passed(self) -> bool:
        return all(r["pass"] for r in self.invariance + self.symmetry)

    def to_dict(self) -> dict:
        return asdict(self) | {"passed": self.passed}


def stationarity_check(offspring: OffspringLaw, mixture: EpsilonMixture,
                       test_functions: dict[str, Callable] | None = None,
                       replicas: int = 2 * 10**4, seed: int = 0, workers: int = 1,
                       pairs: Sequence[tuple[str, str]] | None = None) -> StationarityReport:
    """Invariance of the hat measure under one step of the environment chain.

    For each test function ``f`` reports ``E_hat[f] - E_hat[Gf]``, estimated as
    the hat-weighted mean of ``sum_v p(root, v)(f(root) - f(v))``. The symmetry
    check compares ``E^aug[f(root) g(v0) xi0] / gamma`` with the swapped
    expression; both equal ``E_hat[f(X_0) g(X_1)]`` and ``E_hat[f(X_1) g(X_0)]``
    for one step of the stationary walk. Pairs default to ``(f, 1)`` for
    every ``f`` plus a few cross pairs among the built-ins.
    """
    _check_offspring(offspring)
    if isinstance(mixture, ConductanceLaw):
        mixture = EpsilonMixture(mixture)
    funcs = dict(BUILTIN_FUNCTIONS if test_functions is None else test_functions)
    names = list(funcs)
    if pairs is None:
        pairs = [(n, "1") for n in names] + [p for p in BUILTIN_PAIRS
                                             if p[0] in funcs and p[1] in funcs]
    gamma = mixture_mean(mixture)
    rows = map_replicas(_stationarity_replica, replicas, workers, offspring=offspring,
                        mixture=mixture, gamma=gamma, functions=[funcs[n] for n in names],
                        seed=seed)
    nf = len(names)
    w, xi0 = rows[:, 0], rows[:, 1]
    f_root = rows[:, 2:2 + nf]
    f_v0 = rows[:, 2 + nf:2 + 2 * nf]
    diffs = rows[:, 2 + 2 * nf:]
    w_mean, w_se = _mean_se(w)

    invariance = []
    for j, name in enumerate(names):
        d, se = _mean_se(w * diffs[:, j])
        ef, _ = _mean_se(w * f_root[:, j])
        invariance.append({"function": name, "E_f": ef, "E_Gf": ef - d, "difference": d,
                           "stderr": se, "pass": bool(abs(d) <= SIGMAS * se or d == 0.0)})

    def col(name, at):
        if name == "1":
            return np.ones(len(w))
        return at[:, names.index(name)]

    symmetry = []
    for a, b in pairs:
        lhs = xi0 * col(a, f_root) * col(b, f_v0) / gamma
        rhs = xi0 * col(a, f_v0) * col(b, f_root) / gamma
        d, se = _mean_se(lhs - rhs)
        symmetry.append({"f": a, "g": b, "lhs": float(lhs.mean()), "rhs": float(rhs.mean()),
                         "difference": d, "stderr": se,
                         "pass": bool(abs(d) <= SIGMAS * se or d == 0.0)})
    return StationarityReport(mixture.epsilon, names, replicas, w_mean, w_se, invariance, symmetry)
