"""How much does attention help as herding grows?  TM vs T-HEA across herd_prob.

    python3 scripts/run_herding_sweep.py --herd-probs 0,0.25,0.5,0.75
"""

import argparse

import numpy as np

from tscrec.evaluate import evaluate
from tscrec.synth import SynthConfig, generate, measure_herding
from tscrec.trainer import TrainConfig, fit


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--herd-probs", default="0,0.25,0.5,0.75")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--d", type=int, default=16)
    ap.add_argument("--lr", type=float, default=0.01)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--topx", type=int, default=10)
    args = ap.parse_args(argv)

    print("herd_prob,measured_rate,variant,mean_f1")
    for p in (float(x) for x in args.herd_probs.split(",")):
        corpus = generate(SynthConfig(herd_prob=p))
        rate = measure_herding(corpus.train.comments + corpus.test.comments, corpus.config.herd_window)
        for variant in ("TM", "T-HEA"):
            f1 = []
            for seed in (int(s) for s in args.seeds.split(",")):
                cfg = TrainConfig(d=args.d, learning_rate=args.lr, epochs=args.epochs, variant=variant, seed=seed)
                res = fit(corpus.train, corpus.visual, cfg)
                f1.append(evaluate(res.trained, corpus.test.comments, [args.topx]).topx[args.topx]["f1"])
            print(f"{p},{rate:.4f},{variant},{np.mean(f1):.4f}", flush=True)


if __name__ == "__main__":
    main()
