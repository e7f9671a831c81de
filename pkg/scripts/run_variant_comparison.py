"""Compare the four model variants on a synthetic corpus (Top-X P/R/F1, several seeds).

    python3 scripts/run_variant_comparison.py --out results/variants.csv
"""

import argparse
import csv
import sys
import time

import numpy as np

from tscrec.evaluate import evaluate
from tscrec.synth import SynthConfig, generate
from tscrec.trainer import TrainConfig, fit


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--variants", default="TM,T-HEA,ITF,ITF-HEA")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--herd-prob", type=float, default=0.5)
    ap.add_argument("--corpus-seed", type=int, default=7)
    ap.add_argument("--d", type=int, default=16)
    ap.add_argument("--m", type=int, default=10)
    ap.add_argument("--beta", type=float, default=0.2)
    ap.add_argument("--lr", type=float, default=0.01)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--hea-mode", default="literal")
    ap.add_argument("--topx", default="5,10,20")
    ap.add_argument("--out", default="-")
    args = ap.parse_args(argv)

    topx = [int(x) for x in args.topx.split(",")]
    corpus = generate(SynthConfig(herd_prob=args.herd_prob, seed=args.corpus_seed))
    rows = []
    for variant in args.variants.split(","):
        for seed in (int(s) for s in args.seeds.split(",")):
            t0 = time.perf_counter()
            cfg = TrainConfig(d=args.d, M=args.m, beta=args.beta, learning_rate=args.lr, epochs=args.epochs,
                              variant=variant, seed=seed, hea_mode=args.hea_mode)
            res = fit(corpus.train, corpus.visual, cfg)
            rep = evaluate(res.trained, corpus.test.comments, topx)
            for x in topx:
                rows.append({"variant": cfg.variant, "seed": seed, "topx": x, **{k: rep.topx[x][k] for k in ("precision", "recall", "f1")}})
            print(f"{cfg.variant:8s} seed {seed}  F1@{topx[0]}={rep.topx[topx[0]]['f1']:.4f}  "
                  f"final loss {res.loss_log[-1][1]:.4f}  {time.perf_counter() - t0:.0f}s", file=sys.stderr)

    for variant in dict.fromkeys(r["variant"] for r in rows):
        for x in topx:
            f1 = [r["f1"] for r in rows if r["variant"] == variant and r["topx"] == x]
            print(f"{variant:8s} F1@{x:<3d} mean {np.mean(f1):.4f} sd {np.std(f1):.4f}", file=sys.stderr)
    out = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    writer = csv.DictWriter(out, fieldnames=["variant", "seed", "topx", "precision", "recall", "f1"], lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    if out is not sys.stdout:
        out.close()


if __name__ == "__main__":
    main()
