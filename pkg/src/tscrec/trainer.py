"""Mini-batch Adam training and the finite-difference gradient check."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import torch

from .attention import HEA_MODES, LITERAL
from .corpus_io import VisualFeatureTable
from .data import Dataset, TimeSyncComment
from .errors import ConfigurationError, InvalidArgumentError, TrainingDivergedError
from .model import (
    ExampleSet,
    TrainedModel,
    TscRecommender,
    build_examples,
    make_batch,
    normalize_variant,
    uses_visual,
)
from .text import build_vocab

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    d: int = 128
    M: int = 10
    beta: float = 0.2
    learning_rate: float = 0.001
    batch_size: int = 64
    epochs: int = 10
    seed: int = 0
    variant: str = "ITF-HEA"
    hea_mode: str = LITERAL
    min_count: int = 1
    patience: Optional[int] = None

    def __post_init__(self):
        self.variant = normalize_variant(self.variant)
        if self.d < 2 or self.d % 2:
            raise InvalidArgumentError(f"d must be a positive even integer, got {self.d}")
        if self.M < 1:
            raise InvalidArgumentError(f"M must be >= 1, got {self.M}")
        if not self.learning_rate >= 0:
            raise InvalidArgumentError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.beta < 0:
            raise InvalidArgumentError(f"beta must be >= 0, got {self.beta}")
        if self.batch_size < 1 or self.epochs < 0:
            raise InvalidArgumentError("batch_size must be >= 1 and epochs >= 0")
        if self.hea_mode not in HEA_MODES:
            raise InvalidArgumentError(f"hea_mode must be one of {HEA_MODES}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FitResult:
    trained: TrainedModel
    loss_log: list  # [(epoch, mean training loss)], epochs numbered from 1
    validation_log: list = field(default_factory=list)

    def loss_csv(self) -> str:
        rows = ["epoch,mean_loss"] + [f"{e},{loss!r}" for e, loss in self.loss_log]
        return "\n".join(rows) + "\n"


def _param_norms(model) -> dict:
    return {n: float(p.detach().norm()) for n, p in model.named_parameters()}


def mean_loss(model: TscRecommender, examples: ExampleSet, batch_size: int = 256) -> float:
    losses = []
    with torch.no_grad():
        for start in range(0, len(examples), batch_size):
            rows = np.arange(start, min(start + batch_size, len(examples)))
            losses.append(float(model.loss(make_batch(examples, rows, model.needs_context))))
    return math.fsum(losses) / max(len(examples), 1)


def fit(
    dataset: Dataset,
    visual_table: Optional[VisualFeatureTable],
    config: TrainConfig,
    validation: Optional[Dataset] = None,
) -> FitResult:
    if len(dataset) == 0:
        raise InvalidArgumentError("training dataset is empty")
    if uses_visual(config.variant) and visual_table is None:
        raise ConfigurationError(f"variant {config.variant} needs a visual feature table")
    torch.manual_seed(config.seed)
    vocab = build_vocab((c.text for c in dataset.comments), config.min_count)
    table = visual_table if uses_visual(config.variant) else None
    examples = build_examples(dataset, vocab, config.M, table)
    model = TscRecommender(
        config.variant,
        vocab.size,
        dataset.n_users,
        dataset.n_videos,
        d=config.d,
        M=config.M,
        beta=config.beta,
        hea_mode=config.hea_mode,
        visual_dim=table.dim if table is not None else 0,
    )
    model.reset_parameters(config.seed)
    val_examples = None
    if validation is not None and len(validation):
        known = [
            c for c in validation.comments
            if c.user_id in dataset.user_index and c.video_id in dataset.video_index
        ]
        if known:
            val_examples = build_examples(
                Dataset.from_comments(known), vocab, config.M, table, dataset.user_index, dataset.video_index
            )
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate, betas=(0.9, 0.999), eps=1e-8)
    rng = np.random.default_rng(config.seed)
    loss_log, val_log = [], []
    best, stale = math.inf, 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(examples))
        losses = []
        for b, start in enumerate(range(0, len(order), config.batch_size)):
            batch = make_batch(examples, order[start : start + config.batch_size], model.needs_context)
            optimizer.zero_grad()
            loss = model.loss(batch)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {b}", epoch, b, _param_norms(model)
                )
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
        bad = [n for n, p in model.named_parameters() if not torch.isfinite(p).all()]
        if bad:
            raise TrainingDivergedError(
                f"non-finite parameters {bad} after epoch {epoch}", epoch, -1, _param_norms(model)
            )
        loss_log.append((epoch, math.fsum(losses) / len(examples)))
        log.info("epoch %d mean loss %.6f", epoch, loss_log[-1][1])
        if val_examples is not None:
            val = mean_loss(model, val_examples)
            val_log.append((epoch, val))
            if config.patience is not None:
                if val < best:
                    best, stale = val, 0
                else:
                    stale += 1
                    if stale >= config.patience:
                        log.info("early stop after epoch %d (validation loss %.6f)", epoch, val)
                        break
    trained = TrainedModel(model, vocab, dict(dataset.user_index), dict(dataset.video_index), seed=config.seed)
    return FitResult(trained, loss_log, val_log)


# --------------------------------------------------------------------------
# Gradient check


@dataclass
class TensorCheck:
    name: str
    max_rel_error: float
    n_coords: int
    skipped: bool = False

    def passed(self, tolerance: float) -> bool:
        return self.skipped or self.max_rel_error < tolerance


@dataclass
class GradCheckReport:
    variant: str
    tolerance: float
    tensors: list

    @property
    def passed(self) -> bool:
        return all(t.passed(self.tolerance) for t in self.tensors)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "tensors": [asdict(t) for t in self.tensors],
        }


def gradcheck_fixture(M: int = 3, visual_dim: int = 6, seed: int = 0):
    """Tiny deterministic corpus whose last comment has a full, PAD-free window."""
    rng = np.random.default_rng(seed)
    words = ["good", "great", "fun", "bad", "dull", "wow", "lol", "meh"]
    comments = []
    for v in range(2):
        t = 0.0
        for k in range(M + 2):
            t += float(rng.uniform(0.5, 4.0))
            text = " ".join(rng.choice(words, size=int(rng.integers(2, 5))))
            comments.append(
                TimeSyncComment(f"c{v}{k}", f"u{k % 3}", f"v{v}", round(t, 3), text, int(rng.integers(0, 2)))
            )
    table = VisualFeatureTable(visual_dim)
    for v in range(2):
        for frame in range(4):
            table.add(f"v{v}", 5.0 * frame, rng.normal(size=visual_dim))
    return Dataset.from_comments(comments), table


def _coords(grad: np.ndarray, n: int, rng) -> np.ndarray:
    flat = np.abs(grad.ravel())
    if flat.size <= n:
        return np.arange(flat.size)
    top = np.argsort(-flat, kind="stable")[: n // 2]
    rest = np.setdiff1d(np.arange(flat.size), top)
    return np.concatenate([top, rng.choice(rest, size=n - len(top), replace=False)])


def gradient_check(
    config: TrainConfig,
    tolerance: float = 1e-4,
    n_coords: int = 24,
    step: float = 1e-5,
    frozen=(),
    n_examples: int = 1,
    init_scale: float = 0.8,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare autograd gradients with central finite differences.

    Relative error per coordinate is ``|a - n| / max(|a|, |n|, floor)``; the
    floor sits five decades above the round-off noise of a central difference
    with step 1e-5 (about 1e-11 on an O(1) loss).  For
    each tensor, half the probed coordinates are those with the largest
    analytic gradient and half are drawn at random from the remainder.
    """
    if config.d > 8 or config.M > 3:
        raise InvalidArgumentError("gradient_check is meant for small configs (d <= 8, M <= 3)")
    dataset, table = gradcheck_fixture(config.M, seed=config.seed)
    vocab = build_vocab(c.text for c in dataset.comments)
    examples = build_examples(dataset, vocab, config.M, table if uses_visual(config.variant) else None)
    full = np.flatnonzero(examples.pad_mask.all(axis=1))
    rows = full[:n_examples]
    model = TscRecommender(
        config.variant, vocab.size, dataset.n_users, dataset.n_videos, d=config.d, M=config.M,
        beta=config.beta, hea_mode=config.hea_mode, visual_dim=table.dim,
    )
    model.reset_parameters(config.seed)
    # A wider init than training uses keeps every gradient well above the
    # finite-difference noise floor (~1e-11 for step 1e-5).
    with torch.no_grad():
        gen = torch.Generator().manual_seed(config.seed + 1)
        for p in model.parameters():
            p.uniform_(-init_scale, init_scale, generator=gen)
    for name, p in model.named_parameters():
        if name in frozen:
            p.requires_grad_(False)
    batch = make_batch(examples, rows, model.needs_context)
    model.zero_grad()
    model.loss(batch).backward()
    rng = np.random.default_rng(config.seed)
    results = []
    for name, p in model.named_parameters():
        if not p.requires_grad:
            results.append(TensorCheck(name, 0.0, 0, skipped=True))
            continue
        analytic = p.grad.detach().numpy().copy()
        worst = 0.0
        coords = _coords(analytic, n_coords, rng)
        flat = p.data.view(-1)
        with torch.no_grad():
            for idx in coords:
                orig = float(flat[idx])
                flat[idx] = orig + step
                up = model.loss(batch).item()
                flat[idx] = orig - step
                down = model.loss(batch).item()
                flat[idx] = orig
                numeric = (up - down) / (2 * step)
                a = float(analytic.ravel()[idx])
                err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
                worst = max(worst, err)
        results.append(TensorCheck(name, worst, len(coords)))
    return GradCheckReport(config.variant, tolerance, results)
