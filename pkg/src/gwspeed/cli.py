"""Command line entry point ``gwspeed``.

Exit status is 0 when every statistical gate passes, 2 when a gate fails or a
run is incomplete, and 1 on any error.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from . import engine as E
from . import speed as S
from .electrical import brute_force_conductance, conductance_to_level, generation
from .treegen import dump_tree, generate_tree, load_tree

EXIT_PASS, EXIT_ERROR, EXIT_GATE = 0, 1, 2


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def _common(p: argparse.ArgumentParser, config_required: bool = True):
    p.add_argument("--config", required=config_required, help="experiment TOML file")
    p.add_argument("--seed", type=_u64, help="master seed (overrides config and GWSPEED_SEED)")
    p.add_argument("--workers", type=_positive, help="worker processes")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gwspeed",
        description="Speed of random walks on Galton-Watson trees with random conductances.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "speed": "run the three speed estimators on one configuration",
        "sweep-epsilon": "LLN speed along an epsilon grid on coupled environments",
        "limit-check": "compare small-epsilon speeds with the vanishing-conductance limit",
        "stationarity": "invariance and symmetry checks of the hat measure",
        "continuity": "speed along a sequence of conductance laws vs. its limit law",
        "bounds": "resistance moment bounds against Monte Carlo",
    }
    for name in E.EXPERIMENTS:
        _common(sub.add_parser(name, help=helps[name]))

    oracle = sub.add_parser("oracle", help="brute-force cross-checks")
    osub = oracle.add_subparsers(dest="oracle", required=True)
    oc = osub.add_parser("conductance", help="recursion vs. linear solve on a tree file")
    oc.add_argument("--tree", required=True, help="tree text file")
    oc.add_argument("--level", type=_positive, required=True, help="boundary generation")
    oh = osub.add_parser("hat-survival", help="closed form vs. weighted Monte Carlo")
    _common(oh)
    oh.add_argument("--replicas", type=_positive, default=None)
    ot = osub.add_parser("tree", help="write a random tree in the text format")
    _common(ot)
    ot.add_argument("--depth", type=int, required=True)
    ot.add_argument("--path", required=True)
    return parser


def _load(args) -> E.ExperimentConfig:
    return E.ExperimentConfig.load(args.config).with_overrides(args.seed, args.workers, args.out)


def _summary(record: E.RunRecord) -> str:
    r = record.result
    lines = [f"{record.kind}: fingerprint {record.fingerprint[:16]} seed {record.master_seed}"]
    if record.kind == "speed":
        for name in ("lln", "conductance_formula", "invariant_formula"):
            block = r.get(name, {})
            if "value" in block:
                lines.append(f"  {name:20s} {block['value']:.6f} +- {block['stderr']:.6f}")
            elif block:
                lines.append(f"  {name:20s} skipped: {block['skipped']}")
    elif record.grid_rows is not None:
        for eps, v, se, n in record.grid_rows:
            lines.append(f"  eps={eps:<8g} v={v:.6f} +- {se:.6f} (n={n})")
        if record.target is not None:
            lines.append(f"  target {record.target[0]:.6f} +- {record.target[1]:.6f}")
    lines.append(f"  {'PASS' if record.passed else 'FAIL'}"
                 + ("" if record.complete else " (incomplete)"))
    return "\n".join(lines)


def _oracle(args) -> int:
    if args.oracle == "conductance":
        tree = load_tree(args.tree)
        rec = conductance_to_level(tree, args.level)
        boundary = generation(tree, args.level)
        solve = brute_force_conductance(tree, boundary) if len(boundary) else 0.0
        diff = abs(rec - solve)
        print(json.dumps({"recursion": rec, "linear_solve": solve, "abs_diff": diff}))
        return EXIT_PASS if diff <= 1e-10 * max(1.0, abs(solve)) else EXIT_GATE
    cfg = _load(args)
    if args.oracle == "hat-survival":
        closed = S.hat_survival_probability(cfg.offspring, cfg.alpha)
        n = args.replicas or cfg.oracle_replicas or 10**5
        mc = S.hat_survival_oracle(cfg.offspring, cfg.alpha, cfg.base_law, n,
                                   seed=cfg.master_seed, workers=cfg.workers)
        ok = abs(mc.value - closed) <= S.SIGMAS * mc.stderr
        print(json.dumps({"closed_form": closed, "monte_carlo": mc.value,
                          "stderr": mc.stderr, "replicas": n, "agree": ok}))
        return EXIT_PASS if ok else EXIT_GATE
    tree = generate_tree(cfg.offspring, cfg.mixture, args.depth, cfg.master_seed)
    dump_tree(tree, args.path, cfg.master_seed, {"fingerprint": cfg.fingerprint})
    print(f"wrote {tree.size} vertices to {args.path}")
    return EXIT_PASS


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "oracle":
            return _oracle(args)
        cfg = _load(args)
        record = E.run(args.command, cfg)
        print(_summary(record))
        return EXIT_PASS if record.passed and record.complete else EXIT_GATE
    except (E.ConfigError, ValueError, OSError, RuntimeError) as exc:
        print(f"gwspeed: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
