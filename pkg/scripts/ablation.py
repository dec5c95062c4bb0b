"""Desk-scale ablation over seeds: full model, no FFS/no motion, no ASTM."""
import argparse
import csv
import logging
import os
import sys
import warnings

import numpy as np

from mamnet.config import ModelConfig
from mamnet.experiment import DeskConfig, run_desk

VARIANTS = {
    "full": {},
    "no-ffs-no-motion": {"use_ffs": False, "use_motion": False},
    "no-astm": {"use_astm": False},
}


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--out", default="runs/ablation")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    warnings.simplefilter("ignore")
    rows = []
    for seed in args.seeds:
        for name, flags in VARIANTS.items():
            r = run_desk(DeskConfig(seed=seed, model=ModelConfig(**flags),
                                    out_dir=os.path.join(args.out, f"{name}_seed{seed}")))
            rows.append({"variant": name, "seed": seed, "mae": r.report.mae, "max_f": r.report.max_f,
                         "s_measure": r.report.s_measure, "seconds": round(r.seconds, 1)})
    w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]))
    w.writeheader()
    w.writerows(rows)
    for name in VARIANTS:
        maes = [r["mae"] for r in rows if r["variant"] == name]
        print(f"# {name}: mean MAE {np.mean(maes):.4f}", file=sys.stderr)


if __name__ == "__main__":
    main()
