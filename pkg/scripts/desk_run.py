"""Two-stage desk-scale run on synthetic data; prints held-out metrics."""
import argparse
import json
import logging
import warnings

from mamnet.config import ModelConfig
from mamnet.experiment import DeskConfig, run_desk


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs/desk")
    p.add_argument("--stage1-epochs", type=int, default=10)
    p.add_argument("--stage2-epochs", type=int, default=20)
    p.add_argument("--no-ffs", action="store_true")
    p.add_argument("--no-astm", action="store_true")
    p.add_argument("--no-motion", action="store_true")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    warnings.simplefilter("ignore")
    mc = ModelConfig(use_ffs=not args.no_ffs, use_astm=not args.no_astm, use_motion=not args.no_motion)
    r = run_desk(DeskConfig(seed=args.seed, out_dir=args.out, stage1_epochs=args.stage1_epochs,
                            stage2_epochs=args.stage2_epochs, model=mc))
    print(json.dumps({"seed": args.seed, "mae": r.report.mae, "max_f": r.report.max_f,
                      "s_measure": r.report.s_measure, "seconds": round(r.seconds, 1),
                      "timings": {k: round(v, 1) for k, v in r.timings.items()}}))


if __name__ == "__main__":
    main()
