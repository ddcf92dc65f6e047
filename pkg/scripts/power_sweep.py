"""Sum rate against transmit power for the SCA solver and the KKT iteration.

    python scripts/power_sweep.py --drops 10 --tx-power 23 33 43 > power.csv
"""
import argparse
import csv
import sys

import numpy as np

from blockcomp import kkt, reliability as rel, sca
from blockcomp.config import SystemConfig, load_config
from blockcomp.kkt import Problem


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config")
    p.add_argument("--drops", type=int, default=10)
    p.add_argument("--tx-power", type=float, nargs="+", default=[23.0, 33.0, 43.0])
    p.add_argument("--floor", type=int, default=3)
    args = p.parse_args()
    base = load_config(args.config) if args.config else SystemConfig()
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["tx_power_dbm", "solver", "sum_rate_bits", "objective_nats"])
    for dbm in args.tx_power:
        cfg = base.replace(tx_power_dbm=dbm, subset_floor=args.floor)
        drops = [rel.draw_drop(cfg, cfg.rng_seed, i) for i in range(args.drops)]
        prob = Problem.build([d.channels.estimation for d in drops],
                             [d.topology.serving_sets for d in drops], cfg)
        for name, solve in (("kkt", kkt.solve_problem), ("sca", sca.sca_solve_problem)):
            res = solve(prob, cfg)
            rate = np.mean([np.log2(1 + r.gammas).sum() for r in res])
            w.writerow([dbm, name, repr(float(rate)), repr(float(np.mean([r.objective for r in res])))])
            sys.stdout.flush()


if __name__ == "__main__":
    main()
