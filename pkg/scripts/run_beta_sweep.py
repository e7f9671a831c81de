"""Sweep the time-decay rate (and optionally M) for T-HEA on a synthetic corpus.

Averages Top-X F1 over several training seeds for each grid point.

    python3 scripts/run_beta_sweep.py --betas 0,0.1,0.2,0.5,1.0 --ms 5,10,20
"""

import argparse
import csv
import sys

import numpy as np

from tscrec.cli import SWEEP_COLUMNS, sweep_beta
from tscrec.synth import SynthConfig, generate
from tscrec.trainer import TrainConfig


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--betas", default="0,0.2,1.0")
    ap.add_argument("--ms", default="10")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--variant", default="T-HEA")
    ap.add_argument("--herd-prob", type=float, default=0.5)
    ap.add_argument("--d", type=int, default=16)
    ap.add_argument("--lr", type=float, default=0.01)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--hea-mode", default="literal")
    ap.add_argument("--topx", default="10")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="-")
    args = ap.parse_args(argv)

    betas = [float(b) for b in args.betas.split(",")]
    ms = [int(m) for m in args.ms.split(",")]
    topx = [int(x) for x in args.topx.split(",")]
    corpus = generate(SynthConfig(herd_prob=args.herd_prob))
    rows = []
    for seed in (int(s) for s in args.seeds.split(",")):
        base = TrainConfig(d=args.d, learning_rate=args.lr, epochs=args.epochs, variant=args.variant,
                           hea_mode=args.hea_mode, seed=seed)
        part = sweep_beta(corpus.train, corpus.test, corpus.visual, base, betas, ms, topx, args.jobs)
        rows += [{**r, "seed": seed} for r in part]
    for m in ms:
        for b in betas:
            for x in topx:
                f1 = [r["f1"] for r in rows if (r["m"], r["beta"], r["topx"]) == (m, b, x)]
                print(f"M={m:<3d} beta={b:<5g} F1@{x}: mean {np.mean(f1):.4f}  seeds {np.round(f1, 4).tolist()}",
                      file=sys.stderr)
    out = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    writer = csv.DictWriter(out, fieldnames=["seed", *SWEEP_COLUMNS], lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    if out is not sys.stdout:
        out.close()


if __name__ == "__main__":
    main()
