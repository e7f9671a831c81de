"""Ground-truth construction and Top-X precision / recall / F1."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping

from .data import TimeSyncComment
from .errors import InvalidArgumentError

log = logging.getLogger(__name__)

DEFAULT_TOPX = (5, 10, 20)
POSITIVE_THRESHOLD = 0.5


@dataclass(frozen=True)
class TestPair:
    __test__ = False  # keep pytest from collecting this class

    user_id: str
    video_id: str
    tsc_polarities: tuple
    Po: float
    label: int


def build_ground_truth(comments: Iterable[TimeSyncComment]) -> list[TestPair]:
    """Mean polarity per (user, video); a pair is positive iff the mean is >= 0.5."""
    groups = defaultdict(list)
    for c in comments:
        groups[(c.user_id, c.video_id)].append(c.polarity)
    pairs = []
    for (user, video), pols in sorted(groups.items()):
        po = sum(pols) / len(pols)
        pairs.append(TestPair(user, video, tuple(pols), po, int(po >= POSITIVE_THRESHOLD)))
    return pairs


def rank_videos(scores: Mapping[str, float]) -> list[str]:
    """Videos by descending score, ties broken by ascending video id."""
    return sorted(scores, key=lambda v: (-scores[v], v))


def f1_score(precision: float, recall: float) -> float:
    return 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0


@dataclass
class UserMetrics:
    user_id: str
    precision: float
    recall: float | None
    f1: float | None
    n_candidates: int
    n_positives: int


@dataclass
class MetricsReport:
    """Macro averages per X; ``f1`` is the harmonic mean of the averaged P and R."""

    topx: dict = field(default_factory=dict)  # X -> {"precision", "recall", "f1", "n_users"}
    per_user: dict = field(default_factory=dict)  # X -> [UserMetrics]
    skipped_users: dict = field(default_factory=dict)  # X -> [user ids with < X candidates]

    def to_dict(self) -> dict:
        return {
            "topx": {str(x): v for x, v in self.topx.items()},
            "per_user": {str(x): [asdict(u) for u in us] for x, us in self.per_user.items()},
            "skipped_users": {str(x): v for x, v in self.skipped_users.items()},
        }


def _mean(values):
    values = list(values)
    return sum(values) / len(values) if values else 0.0


def topx_metrics(scores: Mapping[str, Mapping[str, float]], ground_truth: list[TestPair], X) -> MetricsReport:
    """Evaluate per-user Top-X recommendations against ground-truth labels.

    ``scores[user][video]`` scores the user's candidate test videos; only
    pairs present in both ``scores`` and ``ground_truth`` are candidates.
    Precision is averaged over users with at least X candidates, recall over
    those of them with at least one positive.
    """
    if not ground_truth:
        raise InvalidArgumentError("ground truth is empty")
    xs = [X] if isinstance(X, int) else list(X)
    if any(x < 1 for x in xs):
        raise InvalidArgumentError(f"X must be positive, got {xs}")
    labels = defaultdict(dict)
    for pair in ground_truth:
        labels[pair.user_id][pair.video_id] = pair.label
    report = MetricsReport()
    for x in xs:
        rows, skipped = [], []
        for user in sorted(labels):
            user_scores = {v: s for v, s in scores.get(user, {}).items() if v in labels[user]}
            if len(user_scores) < x:
                skipped.append(user)
                continue
            positives = {v for v, y in labels[user].items() if y == 1 and v in user_scores}
            hits = len(set(rank_videos(user_scores)[:x]) & positives)
            precision = hits / x
            recall = hits / len(positives) if positives else None
            f1 = f1_score(precision, recall) if positives else None
            rows.append(UserMetrics(user, precision, recall, f1, len(user_scores), len(positives)))
        if skipped:
            log.info("Top-%d: skipped %d user(s) with fewer than %d candidates", x, len(skipped), x)
        with_pos = [r for r in rows if r.recall is not None]
        p = _mean(r.precision for r in rows)
        r = _mean(r.recall for r in with_pos)
        report.topx[x] = {"precision": p, "recall": r, "f1": f1_score(p, r), "n_users": len(rows)}
        report.per_user[x] = rows
        report.skipped_users[x] = skipped
    return report


def score_table(trained, ground_truth: list[TestPair]) -> dict:
    """Model scores for every ground-truth pair whose user and video have factors."""
    matrix = trained.model.user_video_scores()
    out = defaultdict(dict)
    dropped_users, dropped_videos = set(), set()
    for pair in ground_truth:
        u = trained.user_index.get(pair.user_id)
        v = trained.video_index.get(pair.video_id)
        if u is None:
            dropped_users.add(pair.user_id)
            continue
        if v is None:
            dropped_videos.add(pair.video_id)
            continue
        out[pair.user_id][pair.video_id] = float(matrix[u, v])
    if dropped_users:
        log.info("excluded %d test user(s) without trained factors", len(dropped_users))
    if dropped_videos:
        log.info("excluded %d test video(s) absent from training", len(dropped_videos))
    return dict(out)


def evaluate(trained, test_comments: Iterable[TimeSyncComment], topx=DEFAULT_TOPX) -> MetricsReport:
    truth = build_ground_truth(test_comments)
    return topx_metrics(score_table(trained, truth), truth, topx)
