"""Effective sum rate of L=1 against full JT (L=|B_k|) as the link SNR grows.

At the default powers the links sit near -30 dB SNR, rates are linear in
SNR and full JT's rare successes dominate; with more transmit power the
reliable L=1 design wins.

    python scripts/tradeoff_snr.py --drops 100 --tx-power 33 43 53 63
"""
import argparse
import csv
import sys

from blockcomp import reliability as rel
from blockcomp.config import SystemConfig, load_config


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config")
    p.add_argument("--drops", type=int, default=100)
    p.add_argument("--eta", type=float, default=0.01)
    p.add_argument("--tx-power", type=float, nargs="+", default=[33.0, 43.0, 53.0, 63.0])
    args = p.parse_args()
    base = load_config(args.config) if args.config else SystemConfig()
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["tx_power_dbm", "L", "outage", "theory_outage", "sum_rate", "effective_rate",
                "theory_effective_rate"])
    for dbm in args.tx_power:
        cfg = base.replace(blockage_density=args.eta, tx_power_dbm=dbm)
        drops = [rel.draw_drop(cfg, cfg.rng_seed, i) for i in range(args.drops)]
        for L in (1, cfg.serving_set_size):
            r = rel.monte_carlo_outage(cfg.replace(subset_floor=L), args.drops, drop_list=drops)
            w.writerow([dbm, L, r.outage, r.outage_theory, r.sum_rate, r.effective_rate,
                        (1 - r.outage_theory) * r.sum_rate])
            sys.stdout.flush()


if __name__ == "__main__":
    main()
