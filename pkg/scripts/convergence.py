"""Objective traces of the KKT iteration from MRT and random starts, plus the
iterations each needs to reach 95% of its final objective.

    python scripts/convergence.py --drops 20 > convergence.csv
"""
import argparse
import csv
import sys

import numpy as np

from blockcomp import kkt, reliability as rel
from blockcomp.config import SystemConfig, load_config
from blockcomp.kkt import Problem


def to_fraction(trace, fraction=0.95):
    return int(np.argmax(trace >= fraction * np.max(trace)))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config")
    p.add_argument("--drops", type=int, default=20)
    p.add_argument("--beta", type=float, nargs="+", default=[0.005])
    p.add_argument("--psi", type=float, nargs="+", default=[0.05])
    args = p.parse_args()
    base = load_config(args.config) if args.config else SystemConfig()
    drops = [rel.draw_drop(base, base.rng_seed, i) for i in range(args.drops)]
    prob = Problem.build([d.channels.estimation for d in drops],
                         [d.topology.serving_sets for d in drops], base)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["beta", "psi", "init", "drop", "iterations", "to_95pct", "objective"])
    for beta in args.beta:
        for psi in args.psi:
            cfg = base.replace(subgrad_step=beta, best_response_step=psi)
            for init in ("mrt", "random"):
                rngs = [np.random.default_rng([cfg.rng_seed, i, 1]) for i in range(args.drops)]
                for d, r in enumerate(kkt.solve_problem(prob, cfg, init, rngs)):
                    w.writerow([beta, psi, init, d, r.iterations, to_fraction(r.objective_trace),
                                repr(r.objective)])


if __name__ == "__main__":
    main()
