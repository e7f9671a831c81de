"""Tokenization, vocabulary and the bidirectional LSTM sentence encoder."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import torch
from torch import nn

from .errors import InvalidArgumentError

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
L_MAX = 50

_CJK = (
    "぀-ヿ"  # kana
    "㐀-䶿"  # ext A
    "一-鿿"  # unified ideographs
    "가-힯"  # hangul syllables
    "豈-﫿"  # compatibility ideographs
)
_PIECES = re.compile(f"[{_CJK}]|[^{_CJK}]+")


def tokenize(text: str, max_len: int = L_MAX) -> list[str]:
    """Whitespace split; every CJK character becomes its own token."""
    tokens = []
    for chunk in text.split():
        tokens.extend(_PIECES.findall(chunk))
    return tokens[:max_len]


@dataclass(frozen=True)
class Vocabulary:
    token_to_id: dict

    @property
    def size(self) -> int:
        return len(self.token_to_id)

    def __len__(self):
        return self.size

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.token_to_id.get(t, UNK_ID) for t in tokens]

    def __contains__(self, token):
        return token in self.token_to_id

    def to_json(self) -> dict:
        return dict(self.token_to_id)

    @classmethod
    def from_json(cls, mapping: dict) -> "Vocabulary":
        ids = sorted(mapping.values())
        if ids != list(range(len(ids))) or mapping.get(PAD_TOKEN) != PAD_ID or mapping.get(UNK_TOKEN) != UNK_ID:
            raise InvalidArgumentError("vocabulary ids must be dense with <pad>=0 and <unk>=1")
        return cls(dict(mapping))


def build_vocab(texts: Iterable[str], min_count: int = 1, max_len: int = L_MAX) -> Vocabulary:
    if min_count < 1:
        raise InvalidArgumentError(f"min_count must be >= 1, got {min_count}")
    counts = Counter()
    n_texts = 0
    for text in texts:
        n_texts += 1
        counts.update(tokenize(text, max_len))
    if n_texts == 0:
        raise InvalidArgumentError("cannot build a vocabulary from an empty corpus")
    kept = sorted((t for t, n in counts.items() if n >= min_count), key=lambda t: (-counts[t], t))
    mapping = {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID}
    for tok in kept:
        if tok not in mapping:
            mapping[tok] = len(mapping)
    return Vocabulary(mapping)


def pad_token_ids(id_lists: Sequence[Sequence[int]], dtype=torch.long):
    """Right-pad id lists into an ``(N, L)`` tensor plus a length vector."""
    lengths = torch.tensor([len(ids) for ids in id_lists], dtype=torch.long)
    width = max(1, int(lengths.max()) if len(id_lists) else 1)
    out = torch.full((len(id_lists), width), PAD_ID, dtype=dtype)
    for row, ids in enumerate(id_lists):
        if ids:
            out[row, : len(ids)] = torch.as_tensor(ids, dtype=dtype)
    return out, lengths


class LSTMCell(nn.Module):
    """Standard LSTM cell, gate order (input, forget, candidate, output)."""

    def __init__(self, input_size: int, hidden_size: int):
        super().__init__()
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.weight_ih = nn.Parameter(torch.empty(4 * hidden_size, input_size, dtype=torch.float64))
        self.weight_hh = nn.Parameter(torch.empty(4 * hidden_size, hidden_size, dtype=torch.float64))
        self.bias = nn.Parameter(torch.empty(4 * hidden_size, dtype=torch.float64))

    @torch.no_grad()
    def reset_parameters(self, generator: torch.Generator, bound: float) -> None:
        for p in (self.weight_ih, self.weight_hh, self.bias):
            p.uniform_(-bound, bound, generator=generator)
        h = self.hidden_size
        self.bias[h : 2 * h] = 1.0

    def forward(self, x, state):
        h, c = state
        gates = x @ self.weight_ih.T + h @ self.weight_hh.T + self.bias
        i, f, g, o = gates.chunk(4, dim=-1)
        c = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
        h = torch.sigmoid(o) * torch.tanh(c)
        return h, c

    def zero_state(self, batch: int):
        z = torch.zeros(batch, self.hidden_size, dtype=self.weight_hh.dtype)
        return z, z

    def run(self, inputs):
        """Unroll over ``inputs`` of shape ``(B, T, input)``; returns ``(B, T, hidden)``."""
        state = self.zero_state(inputs.shape[0])
        outs = []
        for t in range(inputs.shape[1]):
            state = self(inputs[:, t], state)
            outs.append(state[0])
        return torch.stack(outs, dim=1)


def _reverse_prefix(ids, lengths):
    """Reverse the first ``lengths[n]`` entries of each row, keeping padding on the right."""
    width = ids.shape[1]
    pos = torch.arange(width).expand_as(ids)
    src = (lengths.unsqueeze(1) - 1 - pos).clamp(min=0)
    rev = ids.gather(1, src)
    return torch.where(pos < lengths.unsqueeze(1), rev, torch.full_like(ids, PAD_ID))


class BiLSTMEncoder(nn.Module):
    """Embeds tokens and mean-pools the concatenated forward/backward states.

    Each direction has ``d // 2`` hidden units so the pooled feature lies in R^d.
    """

    def __init__(self, vocab_size: int, d: int, embed_dim: int | None = None):
        super().__init__()
        if d % 2:
            raise InvalidArgumentError(f"d must be even, got {d}")
        self.d = d
        self.vocab_size = vocab_size
        embed_dim = embed_dim or d
        self.embedding = nn.Parameter(torch.empty(vocab_size, embed_dim, dtype=torch.float64))
        self.forward_cell = LSTMCell(embed_dim, d // 2)
        self.backward_cell = LSTMCell(embed_dim, d // 2)

    @torch.no_grad()
    def reset_parameters(self, generator: torch.Generator, bound: float) -> None:
        self.embedding.uniform_(-bound, bound, generator=generator)
        self.forward_cell.reset_parameters(generator, bound)
        self.backward_cell.reset_parameters(generator, bound)

    def _pooled(self, cell, ids, valid, lengths):
        states = cell.run(self.embedding[ids])
        summed = (states * valid.unsqueeze(-1)).sum(dim=1)
        return summed / lengths.clamp(min=1).unsqueeze(1).to(summed.dtype)

    def forward(self, ids, lengths):
        """``ids``: ``(N, L)`` right-padded token ids; returns ``(N, d)``."""
        if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= self.vocab_size):
            raise InvalidArgumentError(f"token id out of range [0, {self.vocab_size})")
        n = ids.shape[0]
        if n == 0:
            return torch.zeros(0, self.d, dtype=self.embedding.dtype)
        width = max(1, int(lengths.max()))
        ids = ids[:, :width]
        valid = (torch.arange(width).unsqueeze(0) < lengths.unsqueeze(1)).to(self.embedding.dtype)
        fwd = self._pooled(self.forward_cell, ids, valid, lengths)
        bwd = self._pooled(self.backward_cell, _reverse_prefix(ids, lengths), valid, lengths)
        return torch.cat([fwd, bwd], dim=1)


def encode_tsc(token_ids: Sequence[int], encoder: BiLSTMEncoder) -> torch.Tensor:
    """Sentence feature of a single comment; the empty sequence maps to zeros."""
    ids, lengths = pad_token_ids([list(token_ids)])
    return encoder(ids, lengths)[0]


def init_bound(d: int) -> float:
    return 1.0 / math.sqrt(d)
