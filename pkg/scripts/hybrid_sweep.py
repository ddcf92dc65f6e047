"""Sum rate of full-digital, per-user analog (N_RF = K) and compromise-beam
(N_RF = 1) hybrid designs over transmit power.

    python scripts/hybrid_sweep.py --drops 20 --eta 0 0.001 > hybrid.csv
"""
import argparse
import csv
import sys

from blockcomp import hybrid, reliability as rel
from blockcomp.config import SystemConfig, load_config
from blockcomp.hybrid import HybridConfig


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config")
    p.add_argument("--drops", type=int, default=20)
    p.add_argument("--eta", type=float, nargs="+", default=[0.0, 0.001])
    p.add_argument("--tx-power", type=float, nargs="+", default=[23.0, 33.0, 43.0])
    p.add_argument("--floor", type=int, default=3)
    args = p.parse_args()
    base = load_config(args.config) if args.config else SystemConfig()
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["eta", "tx_power_dbm", "design", "sum_rate", "outage", "effective_rate"])
    for eta in args.eta:
        for dbm in args.tx_power:
            cfg = base.replace(blockage_density=eta, tx_power_dbm=dbm, subset_floor=args.floor)
            drops = [rel.draw_drop(cfg, cfg.rng_seed, i) for i in range(args.drops)]
            designs = {
                "digital": None,
                "per_user": hybrid.hybrid_designer(HybridConfig(cfg.num_users)),
                "compromise": hybrid.hybrid_designer(HybridConfig(1, "compromise")),
            }
            for name, fn in designs.items():
                r = rel.monte_carlo_outage(cfg, args.drops, "kkt", drop_list=drops, beams_fn=fn)
                w.writerow([eta, dbm, name, repr(r.sum_rate), repr(r.outage), repr(r.effective_rate)])
                sys.stdout.flush()


if __name__ == "__main__":
    main()
