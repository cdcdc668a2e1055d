"""Experiment configuration, execution and persistence.

A configuration is one flat TOML file. Its fingerprint is the SHA-256 of the
canonical JSON of every field that can change a result, so ``workers`` and
``out`` are excluded and so are key order and formatting. Result JSON files
contain no wall-clock data; timings go to a separate ``timing.json``.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
import re
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from . import speed as S
from .distributions import ConductanceLaw, EpsilonMixture, OffspringLaw
from .electrical import resistance_moment_bound, truncated_resistance_moments

SEED_ENV = "GWSPEED_SEED"
EXPERIMENTS = ("speed", "sweep-epsilon", "limit-check", "stationarity", "continuity", "bounds")
PLOT_COLUMNS = ("epsilon", "v_hat", "ci_low", "ci_high", "target", "target_ci_low",
                "target_ci_high")
GRID_COLUMNS = ("epsilon", "v_hat", "stderr", "replicas")


class ConfigError(ValueError):
    """Invalid configuration; the message names the field and, when known, the line."""


@dataclass
class ExperimentConfig:
    pmf: list = field(default_factory=lambda: [[2, 1.0]])
    conductance_atoms: list = field(default_factory=lambda: [[1.0, 1.0]])
    alpha: float = 0.0
    epsilon: float = 0.0
    epsilon_grid: list = field(default_factory=list)
    delta: float | None = None
    replicas: int = 100
    steps: int = 100_000
    burn_in: int = 0
    formula_replicas: int = 10_000
    pruned_replicas: int = 0
    truncation: int = S.DEFAULT_TRUNCATION
    M: int = S.DEFAULT_M
    sampler: str = "harris"
    oracle_replicas: int = 0
    stationarity_replicas: int = 20_000
    stationarity_epsilons: list = field(default_factory=list)
    law_sequence: list = field(default_factory=list)
    bound_orders: list = field(default_factory=lambda: [1, 2, 3])
    bound_deltas: list = field(default_factory=lambda: [1.0, 0.5])
    bound_pmfs: list = field(default_factory=list)
    bound_depth: int = 12
    bound_replicas: int = 2000
    time_budget: float | None = None
    master_seed: int = 0
    workers: int = 1
    out: str = "out"

    # fields that never change a result
    RUNTIME_ONLY = ("workers", "out")

    # -- derived objects -------------------------------------------------
    @property
    def offspring(self) -> OffspringLaw:
        return OffspringLaw.from_pairs(self.pmf)

    @property
    def base_law(self) -> ConductanceLaw:
        return ConductanceLaw.from_pairs(self.conductance_atoms, self.delta)

    @property
    def mixture(self) -> EpsilonMixture:
        return EpsilonMixture(self.base_law, self.alpha, self.epsilon)

    @property
    def laws(self) -> list[ConductanceLaw]:
        return [ConductanceLaw.from_pairs(a, self.delta) for a in self.law_sequence]

    # -- serialization ----------------------------------------------------
    def canonical(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        for k in self.RUNTIME_ONLY:
            d.pop(k)
        return d

    @property
    def fingerprint(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_toml(self) -> str:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        return tomli_w.dumps({k: v for k, v in d.items() if v is not None})

    @classmethod
    def from_toml(cls, text: str) -> "ExperimentConfig":
        try:
            raw = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config parse error: {exc}") from exc
        return cls.from_dict(raw, text)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_toml(Path(path).read_text())

    @classmethod
    def from_dict(cls, raw: dict, text: str | None = None) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        values = {}
        for key, value in raw.items():
            if key not in known:
                raise ConfigError(_where(text, key) + f"unknown field {key!r}")
            try:
                values[key] = _coerce(key, value, known[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(_where(text, key) + f"field {key!r}: {exc}") from exc
        cfg = cls(**values)
        try:
            cfg.validate()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc
        return cfg

    def validate(self):
        self.offspring
        self.mixture
        self.laws
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if not 0 <= self.burn_in < self.steps:
            raise ValueError("need 0 <= burn_in < steps")
        if self.sampler not in ("harris", "rejection"):
            raise ValueError(f"unknown sampler {self.sampler!r}")
        for name in ("replicas", "formula_replicas", "truncation", "M", "stationarity_replicas"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    def with_overrides(self, seed: int | None = None, workers: int | None = None,
                       out: str | None = None) -> "ExperimentConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        env = os.environ.get(SEED_ENV)
        if env is not None:
            d["master_seed"] = int(env)
        if seed is not None:
            d["master_seed"] = seed
        if workers is not None:
            d["workers"] = workers
        if out is not None:
            d["out"] = out
        return ExperimentConfig.from_dict(d)


def _where(text, key) -> str:
    if text:
        m = re.search(rf"^\s*{re.escape(key)}\s*=", text, re.MULTILINE)
        if m:
            return f"line {text.count(chr(10), 0, m.start()) + 1}: "
    return ""


_FLOAT_LISTS = {"epsilon_grid", "stationarity_epsilons", "bound_deltas"}


def _coerce(key, value, f):
    if key == "pmf":
        return [[int(k), float(p)] for k, p in value]
    if key == "bound_pmfs":
        return [[[int(k), float(p)] for k, p in law] for law in value]
    if key == "conductance_atoms":
        return [[float(v), float(w)] for v, w in value]
    if key == "law_sequence":
        return [[[float(v), float(w)] for v, w in law] for law in value]
    if key in _FLOAT_LISTS:
        return [float(x) for x in value]
    if key == "bound_orders":
        return [int(x) for x in value]
    default = f.default
    if isinstance(default, bool):
        return bool(value)
    if isinstance(default, int):
        if isinstance(value, float) and not value.is_integer():
            raise ValueError(f"expected an integer, got {value}")
        return int(value)
    if isinstance(default, float) or key in ("delta", "time_budget"):
        return None if value is None else float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise TypeError("expected a string")
        return value
    return value


# -- run records -------------------------------------------------------------
@dataclass
class RunRecord:
    kind: str
    fingerprint: str
    master_seed: int
    config: dict
    result: dict
    passed: bool
    complete: bool = True
    replicas: dict = field(default_factory=dict)
    grid_rows: list | None = None
    target: tuple | None = None
    wall_clock: float = 0.0

    def to_json(self) -> str:
        d = asdict(self)
        d.pop("wall_clock")
        return json.dumps(_plain(d), indent=2, sort_keys=True, allow_nan=True)


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return "%.17g" % float(x)


def _samples(est: S.Estimate):
    return None if est.samples is None else np.asarray(est.samples).tolist()


def _estimate_block(est: S.Estimate, fingerprint: str) -> dict:
    est.fingerprint = fingerprint
    return est.to_dict()


def run_speed(cfg: ExperimentConfig) -> RunRecord:
    """All three estimators on one configuration, plus pairwise agreement flags."""
    fp = cfg.fingerprint
    off, mix, seed, w = cfg.offspring, cfg.mixture, cfg.master_seed, cfg.workers
    ests, per, skipped = {}, {}, {}
    ests["lln"] = S.speed_lln(off, mix, cfg.steps, cfg.replicas, cfg.burn_in, seed, w)
    if mix.elliptic:
        ests["conductance_formula"] = S.speed_conductance_formula(
            off, mix, cfg.truncation, cfg.formula_replicas, seed, w)
        ests["invariant_formula"] = S.speed_invariant_formula(
            off, mix, cfg.M, cfg.formula_replicas, seed, w)
    else:
        reason = "requires uniformly elliptic conductances"
        skipped = {"conductance_formula": reason, "invariant_formula": reason}
    result = {name: _estimate_block(e, fp) for name, e in ests.items()}
    result.update({name: {"skipped": why} for name, why in skipped.items()})
    names = list(ests)
    agreement = {f"{a}~{b}": S.agree(ests[a], ests[b])
                 for i, a in enumerate(names) for b in names[i + 1:]}
    result["agreement"] = agreement
    per = {name: _samples(e) for name, e in ests.items()}
    return RunRecord("speed", fp, seed, cfg.canonical(), result, all(agreement.values()),
                     replicas=per)


def run_sweep(cfg: ExperimentConfig) -> RunRecord:
    """LLN speed along ``epsilon_grid`` on coupled environments."""
    fp = cfg.fingerprint
    rows, blocks, per = [], [], {}
    for eps in cfg.epsilon_grid:
        mix = EpsilonMixture(cfg.base_law, cfg.alpha, eps)
        est = S.speed_lln(cfg.offspring, mix, cfg.steps, cfg.replicas, cfg.burn_in,
                          cfg.master_seed, cfg.workers)
        est.extra["epsilon"] = eps
        blocks.append(_estimate_block(est, fp))
        rows.append((eps, est.value, est.stderr, est.replicas))
        per[repr(eps)] = _samples(est)
    return RunRecord("sweep-epsilon", fp, cfg.master_seed, cfg.canonical(),
                     {"estimates": blocks}, True, replicas=per, grid_rows=rows)


def run_limit_check(cfg: ExperimentConfig) -> RunRecord:
    fp = cfg.fingerprint
    report = S.theorem1_check(cfg.offspring, cfg.alpha, cfg.base_law, cfg.epsilon_grid,
                              steps=cfg.steps, replicas=cfg.replicas, burn_in=cfg.burn_in,
                              pruned_replicas=cfg.pruned_replicas or None,
                              seed=cfg.master_seed, workers=cfg.workers,
                              time_budget=cfg.time_budget,
                              oracle_replicas=cfg.oracle_replicas)
    for e in report.estimates:
        e.fingerprint = fp
    per = {repr(e.extra["epsilon"]): _samples(e) for e in report.estimates}
    if report.pruned is not None:
        report.pruned.fingerprint = fp
        per["pruned"] = _samples(report.pruned)
    lo, hi = report.target_ci
    return RunRecord("limit-check", fp, cfg.master_seed, cfg.canonical(), report.to_dict(),
                     report.passed, report.complete, per, list(report.rows()),
                     (report.target, report.target_stderr, lo, hi))


def run_stationarity(cfg: ExperimentConfig) -> RunRecord:
    eps_list = cfg.stationarity_epsilons or [cfg.epsilon]
    reports = []
    for eps in eps_list:
        mix = EpsilonMixture(cfg.base_law, cfg.alpha, eps)
        reports.append(S.stationarity_check(cfg.offspring, mix, None, cfg.stationarity_replicas,
                                            cfg.master_seed, cfg.workers))
    return RunRecord("stationarity", cfg.fingerprint, cfg.master_seed, cfg.canonical(),
                     {"reports": [r.to_dict() for r in reports]},
                     all(r.passed for r in reports))


def run_continuity(cfg: ExperimentConfig) -> RunRecord:
    if not cfg.law_sequence:
        raise ConfigError("continuity needs a non-empty law_sequence")
    report = S.continuity_check(cfg.offspring, cfg.laws, cfg.base_law, cfg.truncation,
                                cfg.formula_replicas, cfg.master_seed, cfg.workers)
    return RunRecord("continuity", cfg.fingerprint, cfg.master_seed, cfg.canonical(),
                     report.to_dict(), report.passed)


def run_bounds(cfg: ExperimentConfig) -> RunRecord:
    """Moment bounds for the resistance to infinity, checked against Monte Carlo."""
    pmfs = cfg.bound_pmfs or [cfg.pmf]
    table, ok = [], True
    for pmf in pmfs:
        off = OffspringLaw.from_pairs(pmf)
        for delta in cfg.bound_deltas:
            law = ConductanceLaw.point_mass(delta, delta)
            mc = truncated_resistance_moments(off, law, cfg.bound_depth, cfg.bound_orders,
                                              cfg.bound_replicas, cfg.master_seed, cfg.workers)
            for m in cfg.bound_orders:
                bound = resistance_moment_bound(off, delta, m)
                mean, se = mc[m]
                valid = mean <= bound + S.SIGMAS * se
                ok &= valid
                table.append({"pmf": pmf, "delta": delta, "order": m, "bound": bound,
                              "mc_mean": mean, "mc_stderr": se, "valid": valid})
    return RunRecord("bounds", cfg.fingerprint, cfg.master_seed, cfg.canonical(),
                     {"table": table, "depth": cfg.bound_depth}, bool(ok))


RUNNERS = {
    "speed": run_speed,
    "sweep-epsilon": run_sweep,
    "limit-check": run_limit_check,
    "stationarity": run_stationarity,
    "continuity": run_continuity,
    "bounds": run_bounds,
}


def run(kind: str, cfg: ExperimentConfig, persist: bool = True) -> RunRecord:
    if kind not in RUNNERS:
        raise ValueError(f"unknown experiment {kind!r}")
    start = time.perf_counter()
    record = RUNNERS[kind](cfg)
    record.wall_clock = time.perf_counter() - start
    if persist:
        write_record(record, cfg.out, cfg.workers)
    return record


# -- persistence -------------------------------------------------------------
def write_record(record: RunRecord, out, workers: int = 1) -> dict:
    """Write ``<kind>.json``, grid CSVs when present, and ``timing.json``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"json": out / f"{record.kind}.json"}
    paths["json"].write_text(record.to_json() + "\n")
    if record.grid_rows is not None:
        paths["csv"] = out / f"{record.kind}.csv"
        write_grid_csv(record, paths["csv"])
        paths["plot"] = out / f"{record.kind}_plot.csv"
        emit_plot_data(record, paths["plot"])
    timing = {"kind": record.kind, "fingerprint": record.fingerprint,
              "wall_clock_seconds": record.wall_clock, "workers": workers}
    (out / "timing.json").write_text(json.dumps(timing, indent=2) + "\n")
    return paths


def write_grid_csv(record: RunRecord, path):
    """``epsilon, v_hat, stderr, replicas`` per grid point, plus a target row at epsilon 0."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GRID_COLUMNS)
        for row in record.grid_rows:
            w.writerow([_fmt(x) for x in row])
        if record.target is not None:
            target, se = record.target[:2]
            replicas = record.result.get("pruned") or {}
            # the limit sits at epsilon = 0, which no grid point can take
            w.writerow([_fmt(0.0), _fmt(target), _fmt(se), _fmt(replicas.get("replicas"))])


def emit_plot_data(record: RunRecord, path):
    """Plot-ready CSV: one row per grid point, then a target row for limit checks."""
    if record.kind not in ("sweep-epsilon", "limit-check"):
        raise TypeError(f"plot data needs a sweep-epsilon or limit-check record, not {record.kind!r}")
    target = record.target
    t_cols = [None, None, None] if target is None else [target[0], target[2], target[3]]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLOT_COLUMNS)
        rows = record.grid_rows or []
        for eps, v, se, _ in rows:
            w.writerow([_fmt(x) for x in [eps, v, v - S.SIGMAS * se, v + S.SIGMAS * se] + t_cols])
        if target is not None and rows:
            w.writerow([_fmt(x) for x in [0.0, None, None, None] + t_cols])
