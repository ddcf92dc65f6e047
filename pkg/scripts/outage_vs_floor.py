"""Monte Carlo outage, sum rate and effective rate over blockage density and L.

Also runs the MRT, full-JT and single-RRU baselines at each density.

    python scripts/outage_vs_floor.py --drops 300 --eta 0 0.001 0.005 0.01 > outage.csv
"""
import argparse
import sys

from blockcomp import reliability as rel
from blockcomp.config import SystemConfig, load_config


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config")
    p.add_argument("--drops", type=int, default=100)
    p.add_argument("--eta", type=float, nargs="+", default=[0.0, 0.001, 0.005, 0.01])
    p.add_argument("--floors", type=int, nargs="+", default=[1, 2, 3, 4])
    p.add_argument("--solver", choices=rel.SOLVERS, default="kkt")
    p.add_argument("--no-baselines", action="store_true")
    args = p.parse_args()
    base = load_config(args.config) if args.config else SystemConfig()
    reports = []
    for eta in args.eta:
        cfg = base.replace(blockage_density=eta)
        drops = [rel.draw_drop(cfg, cfg.rng_seed, i) for i in range(args.drops)]
        for L in args.floors:
            reports.append(rel.monte_carlo_outage(cfg.replace(subset_floor=L), args.drops,
                                                  args.solver, drop_list=drops))
            print(f"eta={eta} L={L}: outage {reports[-1].outage:.3f}", file=sys.stderr)
        if not args.no_baselines:
            for kind in rel.BASELINES:
                reports.append(rel.monte_carlo_outage(cfg, args.drops, kind, drop_list=drops))
    sys.stdout.write(rel.reports_csv(reports))


if __name__ == "__main__":
    main()
