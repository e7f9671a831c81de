"""Herding-effect attention over a context window of comment features.

Each context comment ``j`` attends to earlier comments ``k`` with a score that
multiplies softmax-normalised cosine similarity by an exponential time decay.
The attention distributions mix the hidden states of an encoder LSTM; a decoder
LSTM consumes the mixed context vectors and its last state is the output.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import InvalidArgumentError
from .text import LSTMCell

LITERAL = "literal"
MASKED = "masked"
HEA_MODES = (LITERAL, MASKED)

_NORM_FLOOR = 1e-150


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between ``a`` and ``b``; 0 if either is the zero vector."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


def time_decay(t_j: float, t_k: float, j: int, k: int, beta: float) -> float:
    """Influence of slot ``k`` on slot ``j``: ``exp(-beta * (t_j - t_k))`` if ``j > k`` else 0."""
    if beta < 0:
        raise InvalidArgumentError(f"beta must be >= 0, got {beta}")
    if j <= k:
        return 0.0
    return math.exp(-beta * max(t_j - t_k, 0.0))


def similarity_matrix(seq: torch.Tensor) -> torch.Tensor:
    """Pairwise cosine similarities over the last-but-one axis; zero rows give 0."""
    norms = (seq * seq).sum(-1).clamp(min=_NORM_FLOOR).sqrt()
    unit = seq / norms.unsqueeze(-1)
    return unit @ unit.transpose(-1, -2)


def decay_matrix(timestamps: torch.Tensor, beta: float) -> torch.Tensor:
    """``TD[..., j, k]``: strictly lower-triangular exponential decay factors."""
    if beta < 0:
        raise InvalidArgumentError(f"beta must be >= 0, got {beta}")
    m = timestamps.shape[-1]
    gap = (timestamps.unsqueeze(-1) - timestamps.unsqueeze(-2)).clamp(min=0.0)
    lower = torch.ones(m, m, dtype=torch.bool).tril(-1)
    return torch.where(lower, torch.exp(-beta * gap), torch.zeros((), dtype=timestamps.dtype))


def _scores(seq, timestamps, pad_mask, beta, mode):
    if mode not in HEA_MODES:
        raise InvalidArgumentError(f"unknown attention mode {mode!r}; expected one of {HEA_MODES}")
    sim = similarity_matrix(seq)
    sim_norm = torch.softmax(sim, dim=-1)
    td = decay_matrix(timestamps, beta)
    a = sim_norm * td
    if mode == LITERAL:
        a_bar = torch.softmax(a, dim=-1)
    else:
        m = seq.shape[-2]
        allowed = torch.ones(m, m, dtype=torch.bool).tril(-1) & pad_mask.unsqueeze(-2)
        empty = ~allowed.any(dim=-1, keepdim=True)
        allowed = allowed | (empty & torch.eye(m, dtype=torch.bool))
        a_bar = torch.softmax(a.masked_fill(~allowed, float("-inf")), dim=-1)
    return {"SIM": sim, "SIM_norm": sim_norm, "TD": td, "A": a, "A_bar": a_bar}


def attention_scores(seq, timestamps, pad_mask, beta: float, mode: str = LITERAL):
    """Returns ``(SIM_norm, TD, A_bar)`` for one window or a batch of windows.

    ``seq`` has shape ``(..., M, d)``; ``timestamps`` and ``pad_mask`` ``(..., M)``.
    In literal mode the final softmax runs over all M entries, zeros included.
    In masked mode only earlier, non-PAD entries compete; a row with none
    falls back to attending to itself.
    """
    seq, timestamps, pad_mask = _as_tensors(seq, timestamps, pad_mask)
    s = _scores(seq, timestamps, pad_mask, beta, mode)
    return s["SIM_norm"], s["TD"], s["A_bar"]


def _as_tensors(seq, timestamps, pad_mask):
    seq = torch.as_tensor(seq, dtype=torch.float64)
    timestamps = torch.as_tensor(timestamps, dtype=torch.float64)
    pad_mask = torch.as_tensor(pad_mask, dtype=torch.bool)
    if seq.dim() < 2 or timestamps.shape != seq.shape[:-1] or pad_mask.shape != seq.shape[:-1]:
        raise InvalidArgumentError(
            f"shape mismatch: seq {tuple(seq.shape)}, timestamps {tuple(timestamps.shape)}, "
            f"pad_mask {tuple(pad_mask.shape)}"
        )
    return seq, timestamps, pad_mask


@dataclass
class AttentionTrace:
    SIM: np.ndarray
    SIM_norm: np.ndarray
    TD: np.ndarray
    A: np.ndarray
    A_bar: np.ndarray
    H: np.ndarray
    C: np.ndarray
    h_tilde_M: np.ndarray
    mode: str = LITERAL
    beta: float = 0.0

    def to_dict(self) -> dict:
        out = {}
        for key, value in self.__dict__.items():
            out[key] = value.tolist() if isinstance(value, np.ndarray) else value
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


class HerdingAttention(nn.Module):
    """Encoder LSTM, herding-effect attention, decoder LSTM; hidden width ``d``."""

    def __init__(self, d: int, beta: float = 0.2, mode: str = LITERAL):
        super().__init__()
        if mode not in HEA_MODES:
            raise InvalidArgumentError(f"unknown attention mode {mode!r}")
        if beta < 0:
            raise InvalidArgumentError(f"beta must be >= 0, got {beta}")
        self.d = d
        self.beta = float(beta)
        self.mode = mode
        self.encoder = LSTMCell(d, d)
        self.decoder = LSTMCell(d, d)

    @torch.no_grad()
    def reset_parameters(self, generator: torch.Generator, bound: float) -> None:
        self.encoder.reset_parameters(generator, bound)
        self.decoder.reset_parameters(generator, bound)

    def forward(self, seq, timestamps, pad_mask, return_trace: bool = False):
        """``seq``: ``(B, M, d)``; returns ``(B, d)`` (and the intermediate tensors)."""
        if seq.shape[-1] != self.d:
            raise InvalidArgumentError(f"expected feature width {self.d}, got {seq.shape[-1]}")
        s = _scores(seq, timestamps, pad_mask, self.beta, self.mode)
        hidden = self.encoder.run(seq)
        context = s["A_bar"] @ hidden
        decoded = self.decoder.run(context)
        out = decoded[:, -1]
        if return_trace:
            s.update(H=hidden, C=context)
            return out, s
        return out


def apply_hea(seq, timestamps, pad_mask, module: HerdingAttention):
    """Run attention on a single ``(M, d)`` window; returns ``(h_tilde_M, trace)``."""
    seq, timestamps, pad_mask = _as_tensors(seq, timestamps, pad_mask)
    if seq.dim() != 2:
        raise InvalidArgumentError("apply_hea expects a single (M, d) window")
    out, s = module(seq[None], timestamps[None], pad_mask[None], return_trace=True)
    arrays = {k: v[0].detach().numpy().copy() for k, v in s.items()}
    h = out[0]
    trace = AttentionTrace(h_tilde_M=h.detach().numpy().copy(), mode=module.mode, beta=module.beta, **arrays)
    return h, trace
