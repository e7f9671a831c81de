"""Command-line entry point: synth, train, evaluate, recommend, gradcheck, sweep-beta.

Exit codes: 0 success, 1 usage/configuration error, 2 data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import corpus_io
from .attention import HEA_MODES, LITERAL, apply_hea
from .errors import ConfigurationError, DataError, InvalidArgumentError
from .evaluate import DEFAULT_TOPX, build_ground_truth, evaluate, rank_videos
from .model import TrainedModel, build_examples, make_batch, uses_visual
from .synth import SynthConfig, generate
from .trainer import TrainConfig, fit, gradient_check

log = logging.getLogger("tscrec")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3
SWEEP_COLUMNS = ("beta", "m", "topx", "precision", "recall", "f1")
_DEFAULTS = TrainConfig()


class UsageError(Exception):
    pass


@dataclass
class CommandResult:
    exit_code: int = EXIT_OK
    artifacts: list = field(default_factory=list)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _variant(text: str) -> str:
    upper = text.upper()
    if upper not in corpus_io.VARIANTS:
        raise argparse.ArgumentTypeError(f"variant must be one of tm, t-hea, itf, itf-hea (got {text!r})")
    return upper


def _add_model_flags(p, variant_default="itf-hea"):
    p.add_argument("--variant", type=_variant, default=variant_default, help="tm, t-hea, itf or itf-hea")
    p.add_argument("--d", type=int, default=_DEFAULTS.d, help="feature / latent factor dimension")
    p.add_argument("--m", type=int, default=_DEFAULTS.M, help="context window size M")
    p.add_argument("--beta", type=float, default=_DEFAULTS.beta, help="time-decay rate")
    p.add_argument("--hea-mode", choices=HEA_MODES, default=LITERAL, help="final attention softmax variant")
    p.add_argument("--lr", type=float, default=_DEFAULTS.learning_rate, help="Adam learning rate")
    p.add_argument("--epochs", type=int, default=_DEFAULTS.epochs)
    p.add_argument("--batch-size", type=int, default=_DEFAULTS.batch_size)
    p.add_argument("--min-count", type=int, default=_DEFAULTS.min_count, help="vocabulary frequency cutoff")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="tscrec", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", help="JSON file of flag defaults; explicit flags win")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic corpus", formatter_class=fmt)
    p.add_argument("--users", type=int, default=30)
    p.add_argument("--videos", type=int, default=60)
    p.add_argument("--comments", type=int, default=5000)
    p.add_argument("--videos-per-user", type=int, default=40)
    p.add_argument("--herd-prob", type=float, default=0.5)
    p.add_argument("--herd-window", type=float, default=30.0, help="seconds")
    p.add_argument("--latent-dim", type=int, default=8, help="rank of the hidden user/video affinity")
    p.add_argument("--visual-dim", type=int, default=64)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="train one model", formatter_class=fmt)
    p.add_argument("--corpus", required=True, help="training corpus (JSON Lines)")
    p.add_argument("--features", help="frame feature file (required for itf variants)")
    p.add_argument("--validation-corpus", help="corpus used for --patience early stopping")
    p.add_argument("--patience", type=int, default=None, help="stop after N epochs without validation improvement")
    p.add_argument("--dump-attention", help="write the attention trace of the first training example here")
    _add_model_flags(p)
    p.add_argument("--out", required=True, help="checkpoint directory")

    p = sub.add_parser("evaluate", help="Top-X precision/recall/F1 on a test corpus", formatter_class=fmt)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test-corpus", required=True)
    p.add_argument("--topx", type=_int_list, default=list(DEFAULT_TOPX))
    p.add_argument("--out", required=True, help="report JSON path")

    p = sub.add_parser("recommend", help="top-X videos for one user", formatter_class=fmt)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--topx", type=int, default=10)
    p.add_argument("--test-corpus", help="candidates default to this corpus' videos for the user")
    p.add_argument("--candidates", help="comma-separated video ids, or @FILE with one id per line")
    p.add_argument("--out", help="also write the ranking as JSON here")

    p = sub.add_parser("gradcheck", help="finite-difference gradient check", formatter_class=fmt)
    p.add_argument("--variant", type=_variant, action="append", help="repeatable; default all four")
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--beta", type=float, default=_DEFAULTS.beta)
    p.add_argument("--hea-mode", choices=HEA_MODES, default=LITERAL)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="report JSON path")

    p = sub.add_parser("sweep-beta", help="train/evaluate over a beta x M grid", formatter_class=fmt)
    p.add_argument("--corpus", required=True)
    p.add_argument("--test-corpus", required=True)
    p.add_argument("--features")
    p.add_argument("--betas", type=_float_list, default=[0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    p.add_argument("--ms", type=_int_list, default=[_DEFAULTS.M])
    p.add_argument("--topx", type=_int_list, default=list(DEFAULT_TOPX))
    p.add_argument("--jobs", type=int, default=1, help="grid points trained in parallel")
    _add_model_flags(p, variant_default="t-hea")
    p.add_argument("--out", required=True, help="CSV path")
    return parser


def _parse(argv):
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        try:
            overrides = json.loads(Path(known.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read --config {known.config}: {exc}")
        overrides = {k.replace("-", "_"): v for k, v in overrides.items()}
        if "variant" in overrides:
            overrides["variant"] = _variant(overrides["variant"])
        for action in parser._subparsers._group_actions:
            for sp in action.choices.values():
                sp.set_defaults(**overrides)
    return parser.parse_args(argv)


def _train_config(args, **extra) -> TrainConfig:
    return TrainConfig(
        d=args.d, M=args.m, beta=args.beta, learning_rate=args.lr, batch_size=args.batch_size,
        epochs=args.epochs, seed=args.seed, variant=args.variant, hea_mode=args.hea_mode,
        min_count=args.min_count, **extra,
    )


def _load_features(path, variant):
    if uses_visual(variant):
        if not path:
            raise ConfigurationError(f"--features is required for variant {variant}")
        return corpus_io.load_visual_features(path)
    return None


def cmd_synth(args) -> CommandResult:
    cfg = SynthConfig(
        n_users=args.users, n_videos=args.videos, n_comments=args.comments,
        videos_per_user=args.videos_per_user, herd_prob=args.herd_prob, herd_window=args.herd_window,
        latent_dim=args.latent_dim, visual_dim=args.visual_dim, seed=args.seed,
    )
    corpus = generate(cfg)
    paths = corpus.save(args.out)
    print(f"synth: {len(corpus.train)} train + {len(corpus.test)} test comments -> {args.out}")
    return CommandResult(artifacts=paths)


def cmd_train(args) -> CommandResult:
    config = _train_config(args, patience=args.patience)
    train = corpus_io.load_tsc_corpus(args.corpus)
    table = _load_features(args.features, config.variant)
    validation = corpus_io.load_tsc_corpus(args.validation_corpus) if args.validation_corpus else None
    result = fit(train, table, config, validation)
    out = result.trained.save(args.out)
    loss_path = out / "loss_log.csv"
    loss_path.write_text(result.loss_csv(), encoding="utf-8")
    artifacts = [out, loss_path]
    if args.dump_attention:
        artifacts.append(_dump_attention(result.trained, train, table, args.dump_attention))
    final = result.loss_log[-1][1] if result.loss_log else float("nan")
    print(f"train: {config.variant} {len(result.loss_log)} epochs, final mean loss {final:.6f} -> {out}")
    return CommandResult(artifacts=artifacts)


def _dump_attention(trained: TrainedModel, dataset, table, path):
    model = trained.model
    if model.attention is None:
        raise ConfigurationError("--dump-attention needs an attention variant (t-hea or itf-hea)")
    examples = build_examples(dataset, trained.vocab, model.M, table if model.fusion else None)
    batch = make_batch(examples, [0], context=True)
    seq = model.window_features(batch)[0]
    _, trace = apply_hea(seq.detach(), batch.timestamps[0], batch.pad_mask[0], model.attention)
    Path(path).write_text(trace.to_json() + "\n", encoding="utf-8")
    return Path(path)


def cmd_evaluate(args) -> CommandResult:
    trained = TrainedModel.load(args.checkpoint)
    test = corpus_io.load_tsc_corpus(args.test_corpus)
    report = evaluate(trained, test.comments, args.topx)
    Path(args.out).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    summary = ", ".join(
        f"P@{x}={m['precision']:.4f} F1@{x}={m['f1']:.4f}" for x, m in sorted(report.topx.items())
    )
    print(f"evaluate: {summary} -> {args.out}")
    return CommandResult(artifacts=[Path(args.out)])


def recommend(trained: TrainedModel, user_id: str, X: int, candidates) -> list[dict]:
    if user_id not in trained.user_index:
        raise DataError(f"unknown user {user_id!r}")
    scores = {v: trained.score(user_id, v) for v in candidates if v in trained.video_index}
    dropped = sorted(set(candidates) - set(scores))
    if dropped:
        log.warning("ignoring %d candidate(s) unknown to the checkpoint", len(dropped))
    return [{"video_id": v, "score": scores[v]} for v in rank_videos(scores)[:X]]


def cmd_recommend(args) -> CommandResult:
    trained = TrainedModel.load(args.checkpoint)
    if args.candidates:
        if args.candidates.startswith("@"):
            lines = Path(args.candidates[1:]).read_text(encoding="utf-8").split()
        else:
            lines = args.candidates.split(",")
        candidates = sorted({c.strip() for c in lines if c.strip()})
    elif args.test_corpus:
        test = corpus_io.load_tsc_corpus(args.test_corpus)
        candidates = sorted({p.video_id for p in build_ground_truth(test.comments) if p.user_id == args.user})
    else:
        candidates = sorted(trained.video_index)
    ranked = recommend(trained, args.user, args.topx, candidates)
    text = json.dumps({"user_id": args.user, "topx": args.topx, "recommendations": ranked}, indent=2)
    print(text)
    artifacts = []
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        artifacts.append(Path(args.out))
    return CommandResult(artifacts=artifacts)


def cmd_gradcheck(args) -> CommandResult:
    variants = args.variant or list(corpus_io.VARIANTS)
    reports = []
    for v in variants:
        cfg = TrainConfig(d=args.d, M=args.m, beta=args.beta, variant=v, hea_mode=args.hea_mode, seed=args.seed)
        rep = gradient_check(cfg, args.tolerance)
        reports.append(rep.to_dict())
        worst = max((t.max_rel_error for t in rep.tensors if not t.skipped), default=0.0)
        print(f"gradcheck: {v} {'PASS' if rep.passed else 'FAIL'} max rel error {worst:.3e}")
    artifacts = []
    if args.out:
        Path(args.out).write_text(json.dumps(reports, indent=2) + "\n", encoding="utf-8")
        artifacts.append(Path(args.out))
    return CommandResult(artifacts=artifacts)


def _sweep_point(job):
    train, test_comments, table, config, topx = job
    result = fit(train, table, config)
    report = evaluate(result.trained, test_comments, topx)
    return [
        {"beta": config.beta, "m": config.M, "topx": x, **{k: report.topx[x][k] for k in ("precision", "recall", "f1")}}
        for x in topx
    ]


def sweep_beta(train, test, table, base: TrainConfig, betas, ms, topx=DEFAULT_TOPX, jobs: int = 1) -> list[dict]:
    """Train and evaluate one model per (beta, M) grid point, all with ``base.seed``."""
    grid = [(b, m) for m in ms for b in betas]
    work = [
        (train, test.comments, table, TrainConfig(**{**base.to_dict(), "beta": b, "M": m}), list(topx))
        for b, m in grid
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_sweep_point, work))
    else:
        parts = [_sweep_point(w) for w in work]
    return [row for part in parts for row in part]


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k] for k in SWEEP_COLUMNS})
    return buf.getvalue()


def cmd_sweep(args) -> CommandResult:
    base = _train_config(args)
    train = corpus_io.load_tsc_corpus(args.corpus)
    test = corpus_io.load_tsc_corpus(args.test_corpus)
    table = _load_features(args.features, base.variant)
    rows = sweep_beta(train, test, table, base, args.betas, args.ms, args.topx, args.jobs)
    Path(args.out).write_text(sweep_csv(rows), encoding="utf-8")
    print(f"sweep-beta: {len(args.betas) * len(args.ms)} grid points, {len(rows)} rows -> {args.out}")
    return CommandResult(artifacts=[Path(args.out)])


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "recommend": cmd_recommend,
    "gradcheck": cmd_gradcheck,
    "sweep-beta": cmd_sweep,
}


def run(argv=None) -> CommandResult:
    try:
        args = _parse(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return CommandResult(EXIT_USAGE)
    except argparse.ArgumentTypeError as exc:
        print(f"tscrec: {exc}", file=sys.stderr)
        return CommandResult(EXIT_USAGE)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (InvalidArgumentError, ConfigurationError) as exc:
        print(f"tscrec {args.command}: {exc}", file=sys.stderr)
        return CommandResult(EXIT_USAGE)
    except (DataError, OSError) as exc:
        print(f"tscrec {args.command}: {exc}", file=sys.stderr)
        return CommandResult(EXIT_DATA)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        log.debug("command failed", exc_info=True)
        print(f"tscrec {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return CommandResult(EXIT_RUNTIME)


def main(argv=None) -> int:
    try:
        return run(argv).exit_code
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
