"""Seeded synthetic time-sync comment corpora with tunable herding."""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .corpus_io import VisualFeatureTable, save_tsc_corpus, save_visual_features
from .data import Dataset, TimeSyncComment, sort_canonical
from .errors import InvalidArgumentError
from .text import tokenize

COPY_FRACTION = 0.6
SHARE_THRESHOLD = 0.5


@dataclass
class SynthConfig:
    n_users: int = 30
    n_videos: int = 60
    n_comments: int = 5000
    latent_dim: int = 8
    herd_prob: float = 0.5
    herd_window: float = 30.0
    pos_vocab: int = 40
    neg_vocab: int = 40
    neutral_vocab: int = 80
    visual_dim: int = 64
    seed: int = 7
    videos_per_user: int = 40
    video_length: float = 600.0
    frame_interval: float = 10.0
    affinity_std: float = 2.0
    polarity_word_rate: float = 0.6
    min_tokens: int = 3
    max_tokens: int = 8

    def __post_init__(self):
        if not 0.0 <= self.herd_prob <= 1.0:
            raise InvalidArgumentError(f"herd_prob must be in [0, 1], got {self.herd_prob}")
        counts = ("n_users", "n_videos", "n_comments", "latent_dim", "pos_vocab", "neg_vocab",
                  "neutral_vocab", "visual_dim", "videos_per_user", "min_tokens")
        for name in counts:
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be positive")
        if self.videos_per_user > self.n_videos:
            raise InvalidArgumentError("videos_per_user cannot exceed n_videos")
        if self.n_comments < self.n_users * self.videos_per_user:
            raise InvalidArgumentError(
                f"n_comments={self.n_comments} is below one comment per (user, video) pair "
                f"({self.n_users * self.videos_per_user})"
            )
        if self.max_tokens < self.min_tokens:
            raise InvalidArgumentError("max_tokens must be >= min_tokens")
        if self.herd_window < 0 or self.video_length <= 0 or self.frame_interval <= 0:
            raise InvalidArgumentError("herd_window, video_length and frame_interval must be positive")


@dataclass
class SynthCorpus:
    train: Dataset
    test: Dataset
    visual: VisualFeatureTable
    affinities: dict  # (user_id, video_id) -> sigmoid(u . v)
    config: SynthConfig

    def save(self, directory) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = [directory / n for n in ("train.jsonl", "test.jsonl", "features.tsv", "affinities.csv", "synth_config.json")]
        save_tsc_corpus(self.train, paths[0])
        save_tsc_corpus(self.test, paths[1])
        save_visual_features(self.visual, paths[2])
        rows = ["user_id,video_id,affinity"]
        rows += [f"{u},{v},{a!r}" for (u, v), a in sorted(self.affinities.items())]
        paths[3].write_text("\n".join(rows) + "\n", encoding="utf-8")
        paths[4].write_text(json.dumps(asdict(self.config), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return paths


def _sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def token_share(tokens, source_tokens) -> float:
    """Fraction of ``tokens`` that also occur in ``source_tokens``."""
    if not tokens:
        return 0.0
    pool = set(source_tokens)
    return sum(t in pool for t in tokens) / len(tokens)


def generate(config: SynthConfig) -> SynthCorpus:
    rng = np.random.default_rng(config.seed)
    herd_rng = np.random.default_rng([config.seed, 1])
    users = [f"u{i:03d}" for i in range(config.n_users)]
    videos = [f"v{i:03d}" for i in range(config.n_videos)]
    # Factor scale makes u . v have standard deviation ``affinity_std``.
    scale = (config.affinity_std**2 / config.latent_dim) ** 0.25
    U = rng.normal(0.0, scale, (config.n_users, config.latent_dim))
    V = rng.normal(0.0, scale, (config.n_videos, config.latent_dim))
    affinity = {}
    watched = []
    for ui in range(config.n_users):
        picks = np.sort(rng.choice(config.n_videos, config.videos_per_user, replace=False))
        watched.append(picks)
        for vi in picks:
            affinity[(users[ui], videos[vi])] = _sigmoid(float(U[ui] @ V[vi]))
    pairs = [(ui, int(vi)) for ui in range(config.n_users) for vi in watched[ui]]
    extra = rng.multinomial(config.n_comments - len(pairs), np.full(len(pairs), 1.0 / len(pairs)))
    pools = {
        1: [f"pos{i}" for i in range(config.pos_vocab)],
        0: [f"neg{i}" for i in range(config.neg_vocab)],
    }
    neutral = [f"word{i}" for i in range(config.neutral_vocab)]

    raw = []
    for (ui, vi), n in zip(pairs, extra + 1):
        aff = affinity[(users[ui], videos[vi])]
        for _ in range(n):
            t = round(float(rng.uniform(0.0, config.video_length)), 3)
            pol = int(rng.random() < aff)
            length = int(rng.integers(config.min_tokens, config.max_tokens + 1))
            polar = rng.random(length) < config.polarity_word_rate
            tokens = [
                pools[pol][rng.integers(len(pools[pol]))] if is_polar else neutral[rng.integers(len(neutral))]
                for is_polar in polar
            ]
            raw.append([ui, vi, t, pol, tokens])
    comments = [
        TimeSyncComment(f"t{k:06d}", users[ui], videos[vi], t, " ".join(toks), pol)
        for k, (ui, vi, t, pol, toks) in enumerate(raw)
    ]

    # Herding pass: every comment consumes the same random draws whatever
    # herd_prob is, so the herded set grows monotonically with herd_prob.
    texts = {c.tsc_id: c.text.split() for c in comments}
    by_video = defaultdict(list)
    for c in sort_canonical(comments):
        by_video[c.video_id].append(c)
    for vid in sorted(by_video):
        history = by_video[vid]
        for pos, c in enumerate(history):
            draw, pick = herd_rng.random(2)
            own = texts[c.tsc_id]
            n_copy = math.ceil(COPY_FRACTION * len(own))
            copy_idx = herd_rng.random(n_copy)
            order = herd_rng.permutation(len(own))
            if draw >= config.herd_prob:
                continue
            cands = [p for p in history[:pos] if p.video_time >= c.video_time - config.herd_window]
            if not cands:
                continue
            src = texts[cands[int(pick * len(cands))].tsc_id]
            copied = [src[int(r * len(src))] for r in copy_idx]
            merged = copied + own[n_copy:]
            texts[c.tsc_id] = [merged[i] for i in order]
    comments = [
        TimeSyncComment(c.tsc_id, c.user_id, c.video_id, c.video_time, " ".join(texts[c.tsc_id]), c.polarity)
        for c in comments
    ]

    train_pairs = set()
    for ui in range(config.n_users):
        picks = rng.permutation(watched[ui])
        for vi in picks[: len(picks) // 2]:
            train_pairs.add((users[ui], videos[int(vi)]))
    train = [c for c in comments if (c.user_id, c.video_id) in train_pairs]
    test = [c for c in comments if (c.user_id, c.video_id) not in train_pairs]

    table = VisualFeatureTable(config.visual_dim)
    proj = rng.normal(0.0, 1.0 / math.sqrt(config.latent_dim), (config.visual_dim, config.latent_dim))
    n_frames = int(math.ceil(config.video_length / config.frame_interval))
    for vi, vid in enumerate(videos):
        base = proj @ V[vi] + rng.normal(0.0, 0.5, config.visual_dim)
        for f in range(n_frames):
            table.add(vid, f * config.frame_interval, base + rng.normal(0.0, 0.3, config.visual_dim))
    return SynthCorpus(Dataset.from_comments(train), Dataset.from_comments(test), table, affinity, config)


def measure_herding(comments, window: float) -> float:
    """Share of comments that copy >= 50% of their tokens from an earlier one.

    A comment is tested against every earlier comment of the same video at
    most ``window`` seconds before it; comments with no such predecessor are
    left out of the denominator.
    """
    comments = list(comments.comments if isinstance(comments, Dataset) else comments)
    if not comments:
        raise InvalidArgumentError("cannot measure herding on an empty corpus")
    by_video = defaultdict(list)
    for c in sort_canonical(comments):
        by_video[c.video_id].append((c, tokenize(c.text)))
    eligible = herded = 0
    for history in by_video.values():
        for pos, (c, toks) in enumerate(history):
            cands = [p for p in history[:pos] if p[0].video_time >= c.video_time - window]
            if not cands:
                continue
            eligible += 1
            if any(token_share(toks, ptoks) >= SHARE_THRESHOLD for _, ptoks in cands):
                herded += 1
    return herded / eligible if eligible else 0.0
