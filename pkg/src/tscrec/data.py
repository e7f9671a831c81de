"""Domain types for time-sync comments and context-window construction."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .errors import DataError, InvalidArgumentError


@dataclass(frozen=True)
class TimeSyncComment:
    tsc_id: str
    user_id: str
    video_id: str
    video_time: float
    text: str
    polarity: int

    def __post_init__(self):
        if not self.video_time >= 0:
            raise InvalidArgumentError(
                f"tsc {self.tsc_id!r}: video_time must be >= 0, got {self.video_time!r}"
            )
        if self.polarity not in (0, 1) or isinstance(self.polarity, bool):
            raise InvalidArgumentError(
                f"tsc {self.tsc_id!r}: polarity must be 0 or 1, got {self.polarity!r}"
            )

    def to_record(self) -> dict:
        return {
            "tsc_id": self.tsc_id,
            "user_id": self.user_id,
            "video_id": self.video_id,
            "video_time": self.video_time,
            "text": self.text,
            "polarity": self.polarity,
        }


def canonical_key(c: TimeSyncComment):
    return (c.video_id, c.video_time, c.tsc_id)


def sort_canonical(comments: Iterable[TimeSyncComment]) -> list[TimeSyncComment]:
    """Order comments by (video_id, video_time, tsc_id)."""
    return sorted(comments, key=canonical_key)


@dataclass(frozen=True)
class ContextWindow:
    """The ``M`` comments of one video ending at (and including) ``target``.

    ``members[i]`` is ``None`` for a PAD slot; PAD slots are always on the left.
    """

    target: TimeSyncComment
    members: tuple[Optional[TimeSyncComment], ...]
    timestamps: tuple[float, ...]
    pad_mask: tuple[bool, ...]

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class Dataset:
    comments: tuple[TimeSyncComment, ...]
    user_index: dict = field(default_factory=dict)
    video_index: dict = field(default_factory=dict)

    @classmethod
    def from_comments(cls, comments: Iterable[TimeSyncComment]) -> "Dataset":
        ordered = sort_canonical(comments)
        seen = set()
        dupes = []
        for c in ordered:
            if c.tsc_id in seen:
                dupes.append(c.tsc_id)
            seen.add(c.tsc_id)
        if dupes:
            raise DataError(f"duplicate tsc_id values: {sorted(set(dupes))}")
        users = sorted({c.user_id for c in ordered})
        videos = sorted({c.video_id for c in ordered})
        return cls(
            comments=tuple(ordered),
            user_index={u: i for i, u in enumerate(users)},
            video_index={v: i for i, v in enumerate(videos)},
        )

    def __len__(self) -> int:
        return len(self.comments)

    @property
    def n_users(self) -> int:
        return len(self.user_index)

    @property
    def n_videos(self) -> int:
        return len(self.video_index)


def _window_for(history: Sequence[TimeSyncComment], pos: int, M: int) -> ContextWindow:
    start = max(0, pos - M + 1)
    real = list(history[start : pos + 1])
    n_pad = M - len(real)
    earliest = real[0].video_time
    members = (None,) * n_pad + tuple(real)
    timestamps = (earliest,) * n_pad + tuple(c.video_time for c in real)
    pad_mask = (False,) * n_pad + (True,) * len(real)
    return ContextWindow(history[pos], members, timestamps, pad_mask)


def build_context_windows(dataset: Dataset, M: int) -> list[ContextWindow]:
    """One window per comment, in the dataset's canonical comment order."""
    if not isinstance(M, int) or M < 1:
        raise InvalidArgumentError(f"context size M must be a positive integer, got {M!r}")
    by_video = defaultdict(list)
    for c in sort_canonical(dataset.comments):
        by_video[c.video_id].append(c)
    windows = {}
    for history in by_video.values():
        for pos, c in enumerate(history):
            windows[c.tsc_id] = _window_for(history, pos, M)
    return [windows[c.tsc_id] for c in dataset.comments]
