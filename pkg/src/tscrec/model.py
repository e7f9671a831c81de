"""Latent-factor collaborative filtering over comment features.

The four variants differ only in how a comment's feature vector is produced:

========  ================================================================
TM        BiLSTM sentence feature of the target comment
T-HEA     herding-effect attention over the target's context window
ITF       TM feature fused with the matched frame feature
ITF-HEA   T-HEA feature fused with the matched frame feature
========  ================================================================

The feature gates both latent factors (element-wise) before their inner
product is squashed into a like-probability.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
from torch import nn

from . import corpus_io
from .attention import LITERAL, HerdingAttention
from .corpus_io import CheckpointManifest, VisualFeatureTable, match_frame_feature
from .data import Dataset, build_context_windows
from .errors import ConfigurationError, InvalidArgumentError, MissingFeatureError, UnknownEntityError
from .fusion import ImageTextFusion
from .text import BiLSTMEncoder, Vocabulary, init_bound, pad_token_ids, tokenize

log = logging.getLogger(__name__)

VARIANTS = corpus_io.VARIANTS
BCE_EPS = 1e-7


def normalize_variant(name: str) -> str:
    upper = name.upper()
    if upper not in VARIANTS:
        raise InvalidArgumentError(f"unknown variant {name!r}; expected one of {', '.join(VARIANTS)}")
    return upper


def uses_attention(variant: str) -> bool:
    return variant.endswith("HEA")


def uses_visual(variant: str) -> bool:
    return variant.startswith("ITF")


# --------------------------------------------------------------------------
# Elementary operations


def merge(g, feature):
    g = torch.as_tensor(g, dtype=torch.float64)
    feature = torch.as_tensor(feature, dtype=torch.float64)
    if g.shape[-1] != feature.shape[-1]:
        raise InvalidArgumentError(f"merge: length mismatch {g.shape[-1]} vs {feature.shape[-1]}")
    return g * feature


def predict_interaction(p, q):
    p = torch.as_tensor(p, dtype=torch.float64)
    q = torch.as_tensor(q, dtype=torch.float64)
    if p.shape[-1] != q.shape[-1]:
        raise InvalidArgumentError(f"length mismatch {p.shape[-1]} vs {q.shape[-1]}")
    return torch.sigmoid((p * q).sum(-1))


def bce_objective(pred, label, eps: float = BCE_EPS):
    """Binary cross-entropy summed over the batch (the quantity minimised)."""
    pred = torch.as_tensor(pred, dtype=torch.float64).clamp(eps, 1.0 - eps)
    label = torch.as_tensor(label, dtype=torch.float64)
    return -(label * torch.log(pred) + (1.0 - label) * torch.log1p(-pred)).sum()


def score_user_video(GU, GV, u: int, v: int) -> float:
    """Raw inner product of the user and video factors (no sigmoid)."""
    GU = np.asarray(GU)
    GV = np.asarray(GV)
    if not 0 <= u < GU.shape[0]:
        raise UnknownEntityError(f"unknown user index {u}")
    if not 0 <= v < GV.shape[0]:
        raise UnknownEntityError(f"unknown video index {v}")
    return float(GU[u] @ GV[v])


# --------------------------------------------------------------------------
# Examples and batches


@dataclass
class ExampleSet:
    """Array view of per-comment training examples.

    ``windows[i]`` holds comment indices (into ``token_ids``) of the context
    window of example ``i``; -1 marks a PAD slot.  The last column is the
    target comment itself.
    """

    token_ids: list
    windows: np.ndarray
    timestamps: np.ndarray
    pad_mask: np.ndarray
    users: np.ndarray
    videos: np.ndarray
    labels: np.ndarray
    visual: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.labels)


def build_examples(
    dataset: Dataset,
    vocab: Vocabulary,
    M: int,
    visual_table: Optional[VisualFeatureTable] = None,
    user_index: Optional[dict] = None,
    video_index: Optional[dict] = None,
) -> ExampleSet:
    """One example per comment; labels are the comment polarities."""
    user_index = dataset.user_index if user_index is None else user_index
    video_index = dataset.video_index if video_index is None else video_index
    windows = build_context_windows(dataset, M)
    position = {c.tsc_id: i for i, c in enumerate(dataset.comments)}
    token_ids = [vocab.encode(tokenize(c.text)) for c in dataset.comments]
    n = len(windows)
    win = np.full((n, M), -1, dtype=np.int64)
    for i, w in enumerate(windows):
        for slot, member in enumerate(w.members):
            if member is not None:
                win[i, slot] = position[member.tsc_id]
    try:
        users = np.array([user_index[w.target.user_id] for w in windows], dtype=np.int64)
        videos = np.array([video_index[w.target.video_id] for w in windows], dtype=np.int64)
    except KeyError as exc:
        raise UnknownEntityError(f"entity {exc.args[0]!r} has no latent factor") from exc
    visual = None
    if visual_table is not None:
        visual = np.zeros((n, visual_table.dim), dtype=np.float64)
        missing = 0
        for i, w in enumerate(windows):
            try:
                visual[i] = match_frame_feature(visual_table, w.target.video_id, w.target.video_time)
            except MissingFeatureError:
                missing += 1
        if missing:
            log.warning("%d comment(s) have no frame feature; substituting zero vectors", missing)
    return ExampleSet(
        token_ids=token_ids,
        windows=win,
        timestamps=np.array([w.timestamps for w in windows], dtype=np.float64).reshape(n, M),
        pad_mask=np.array([w.pad_mask for w in windows], dtype=bool).reshape(n, M),
        users=users,
        videos=videos,
        labels=np.array([w.target.polarity for w in windows], dtype=np.float64),
        visual=visual,
    )


@dataclass
class Batch:
    comment_ids: torch.Tensor  # (U, L) token ids of the distinct comments used
    comment_lengths: torch.Tensor
    slots: torch.Tensor  # (B, M) row into comment_ids, -1 for PAD
    timestamps: torch.Tensor
    pad_mask: torch.Tensor
    users: torch.Tensor
    videos: torch.Tensor
    labels: torch.Tensor
    visual: Optional[torch.Tensor]

    def __len__(self):
        return len(self.labels)


def make_batch(examples: ExampleSet, rows, context: bool = True) -> Batch:
    """Gather example ``rows``; with ``context=False`` only targets are encoded."""
    rows = np.asarray(rows, dtype=np.int64)
    win = examples.windows[rows] if context else examples.windows[rows][:, -1:]
    used = np.unique(win[win >= 0])
    remap = np.full(len(examples.token_ids), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    slots = np.where(win >= 0, remap[np.maximum(win, 0)], -1)
    ids, lengths = pad_token_ids([examples.token_ids[i] for i in used])
    ts = examples.timestamps[rows] if context else examples.timestamps[rows][:, -1:]
    mask = examples.pad_mask[rows] if context else examples.pad_mask[rows][:, -1:]
    return Batch(
        comment_ids=ids,
        comment_lengths=lengths,
        slots=torch.as_tensor(slots),
        timestamps=torch.as_tensor(ts),
        pad_mask=torch.as_tensor(mask),
        users=torch.as_tensor(examples.users[rows]),
        videos=torch.as_tensor(examples.videos[rows]),
        labels=torch.as_tensor(examples.labels[rows]),
        visual=None if examples.visual is None else torch.as_tensor(examples.visual[rows]),
    )


# --------------------------------------------------------------------------
# The network


class TscRecommender(nn.Module):
    def __init__(
        self,
        variant: str,
        vocab_size: int,
        n_users: int,
        n_videos: int,
        d: int = 128,
        M: int = 10,
        beta: float = 0.2,
        hea_mode: str = LITERAL,
        visual_dim: int = 0,
    ):
        super().__init__()
        self.variant = normalize_variant(variant)
        if uses_visual(self.variant) and visual_dim < 1:
            raise ConfigurationError(f"{self.variant} needs visual features (visual_dim >= 1)")
        self.d, self.M, self.beta, self.hea_mode = d, M, float(beta), hea_mode
        self.visual_dim = visual_dim if uses_visual(self.variant) else 0
        self.text_encoder = BiLSTMEncoder(vocab_size, d)
        self.attention = HerdingAttention(d, beta, hea_mode) if uses_attention(self.variant) else None
        self.fusion = ImageTextFusion(visual_dim, d) if uses_visual(self.variant) else None
        self.user_factors = nn.Parameter(torch.empty(n_users, d, dtype=torch.float64))
        self.video_factors = nn.Parameter(torch.empty(n_videos, d, dtype=torch.float64))

    @property
    def needs_context(self) -> bool:
        return self.attention is not None

    @torch.no_grad()
    def reset_parameters(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(seed)
        bound = init_bound(self.d)
        self.text_encoder.reset_parameters(gen, bound)
        if self.attention is not None:
            self.attention.reset_parameters(gen, bound)
        if self.fusion is not None:
            self.fusion.reset_parameters(gen, bound)
        self.user_factors.uniform_(-bound, bound, generator=gen)
        self.video_factors.uniform_(-bound, bound, generator=gen)

    def window_features(self, batch: Batch) -> torch.Tensor:
        """``(B, M, d)`` sentence features of every window slot; PAD slots are zero."""
        encoded = self.text_encoder(batch.comment_ids, batch.comment_lengths)
        padded = torch.cat([encoded, torch.zeros(1, self.d, dtype=encoded.dtype)])
        return padded[batch.slots.where(batch.slots >= 0, torch.tensor(len(encoded)))]

    def features(self, batch: Batch, return_trace: bool = False):
        seq = self.window_features(batch)
        trace = None
        if self.attention is not None:
            text = self.attention(seq, batch.timestamps, batch.pad_mask, return_trace=return_trace)
            if return_trace:
                text, trace = text
        else:
            text = seq[:, -1]
        if self.fusion is not None:
            if batch.visual is None:
                raise ConfigurationError(f"{self.variant} requires a visual feature table")
            text = self.fusion(text, batch.visual)
        return (text, trace) if return_trace else text

    def forward(self, batch: Batch) -> torch.Tensor:
        feature = self.features(batch)
        p = merge(self.user_factors[batch.users], feature)
        q = merge(self.video_factors[batch.videos], feature)
        return predict_interaction(p, q)

    def loss(self, batch: Batch) -> torch.Tensor:
        return bce_objective(self(batch), batch.labels)

    def user_video_scores(self) -> np.ndarray:
        """``(n_users, n_videos)`` matrix of raw factor inner products."""
        with torch.no_grad():
            return (self.user_factors @ self.video_factors.T).numpy().copy()

    def numpy_params(self) -> dict:
        return {name: p.detach().numpy().copy() for name, p in self.named_parameters()}

    def load_numpy_params(self, params: dict) -> None:
        own = dict(self.named_parameters())
        if set(own) != set(params):
            raise InvalidArgumentError(
                f"parameter names differ: missing {sorted(set(own) - set(params))}, "
                f"unexpected {sorted(set(params) - set(own))}"
            )
        with torch.no_grad():
            for name, p in own.items():
                value = torch.as_tensor(params[name], dtype=torch.float64)
                if value.shape != p.shape:
                    raise InvalidArgumentError(f"{name}: shape {tuple(value.shape)} != {tuple(p.shape)}")
                p.copy_(value)


def forward(example_batch: Batch, model: TscRecommender) -> torch.Tensor:
    return model(example_batch)


# --------------------------------------------------------------------------
# Checkpointing


@dataclass
class TrainedModel:
    """A network bundled with the vocabulary and id maps needed to use it."""

    model: TscRecommender
    vocab: Vocabulary
    user_index: dict
    video_index: dict
    seed: int = 0

    def score(self, user_id: str, video_id: str) -> float:
        if user_id not in self.user_index:
            raise UnknownEntityError(f"unknown user {user_id!r}")
        if video_id not in self.video_index:
            raise UnknownEntityError(f"unknown video {video_id!r}")
        return score_user_video(
            self.model.user_factors.detach().numpy(),
            self.model.video_factors.detach().numpy(),
            self.user_index[user_id],
            self.video_index[video_id],
        )

    def manifest(self) -> CheckpointManifest:
        m = self.model
        return CheckpointManifest(
            model_variant=m.variant,
            d=m.d,
            M=m.M,
            beta=m.beta,
            vocab_size=self.vocab.size,
            seed=self.seed,
            hea_mode=m.hea_mode,
            visual_dim=m.visual_dim,
        )

    def save(self, directory):
        return corpus_io.save_checkpoint(
            directory,
            self.manifest(),
            self.model.numpy_params(),
            extras={"vocab": self.vocab.to_json(), "users": self.user_index, "videos": self.video_index},
        )

    @classmethod
    def load(cls, directory) -> "TrainedModel":
        manifest, params, extras = corpus_io.load_checkpoint(directory, ("vocab", "users", "videos"))
        vocab = Vocabulary.from_json(extras["vocab"])
        if vocab.size != manifest.vocab_size:
            raise corpus_io.CheckpointError(
                f"{directory}: vocabulary has {vocab.size} entries, manifest says {manifest.vocab_size}"
            )
        model = TscRecommender(
            manifest.model_variant,
            vocab.size,
            len(extras["users"]),
            len(extras["videos"]),
            d=manifest.d,
            M=manifest.M,
            beta=manifest.beta,
            hea_mode=manifest.hea_mode,
            visual_dim=manifest.visual_dim,
        )
        try:
            model.load_numpy_params(params)
        except InvalidArgumentError as exc:
            raise corpus_io.CheckpointError(f"{directory}: {exc}") from exc
        return cls(model, vocab, extras["users"], extras["videos"], seed=manifest.seed)
