"""File formats: TSC corpora (JSON Lines), frame features (TSV), checkpoints."""

from __future__ import annotations

import bisect
import dataclasses
import hashlib
import json
import logging
import math
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .data import Dataset, TimeSyncComment
from .errors import (
    CheckpointError,
    CorpusLoadError,
    DataError,
    FeatureFileError,
    IncompatibleCheckpointError,
    InvalidArgumentError,
    MissingFeatureError,
)

log = logging.getLogger(__name__)

REQUIRED_FIELDS = ("tsc_id", "user_id", "video_id", "video_time", "text", "polarity")
MAX_REJECT_FRACTION = 0.10
FORMAT_VERSION = 1
VARIANTS = ("TM", "T-HEA", "ITF", "ITF-HEA")


# --------------------------------------------------------------------------
# TSC corpus


def _record_to_comment(rec) -> TimeSyncComment:
    if not isinstance(rec, dict):
        raise ValueError("record is not a JSON object")
    missing = [f for f in REQUIRED_FIELDS if f not in rec]
    if missing:
        raise ValueError(f"missing required field(s): {', '.join(missing)}")
    for key in ("tsc_id", "user_id", "video_id", "text"):
        if not isinstance(rec[key], str):
            raise ValueError(f"field {key!r} must be a string")
    t = rec["video_time"]
    if isinstance(t, bool) or not isinstance(t, (int, float)) or not math.isfinite(t):
        raise ValueError("field 'video_time' must be a finite number")
    pol = rec["polarity"]
    if isinstance(pol, bool) or pol not in (0, 1):
        raise ValueError("field 'polarity' must be 0 or 1")
    return TimeSyncComment(
        tsc_id=rec["tsc_id"],
        user_id=rec["user_id"],
        video_id=rec["video_id"],
        video_time=float(t),
        text=rec["text"],
        polarity=int(pol),
    )


def parse_tsc_lines(lines: Iterable[str]):
    """Parse corpus lines; returns ``(comments, rejects)``.

    ``rejects`` is a list of ``(line_number, reason)`` with 1-based line numbers.
    Blank lines are skipped and do not count as records.
    """
    comments, rejects = [], []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            comments.append(_record_to_comment(json.loads(line)))
        except (ValueError, DataError) as exc:
            rejects.append((lineno, str(exc)))
    return comments, rejects


def load_tsc_corpus(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        comments, rejects = parse_tsc_lines(fh)
    total = len(comments) + len(rejects)
    for lineno, reason in rejects:
        log.warning("%s:%d: rejected record: %s", path, lineno, reason)
    if rejects:
        log.warning("%s: %d of %d records rejected", path, len(rejects), total)
    if total and len(rejects) / total > MAX_REJECT_FRACTION:
        raise CorpusLoadError(
            f"{path}: {len(rejects)} of {total} records rejected "
            f"(more than {MAX_REJECT_FRACTION:.0%}); first: line {rejects[0][0]}: {rejects[0][1]}",
            rejects,
        )
    try:
        return Dataset.from_comments(comments)
    except DataError as exc:
        raise CorpusLoadError(f"{path}: {exc}", rejects) from exc


def dump_tsc_corpus(comments: Iterable[TimeSyncComment]) -> str:
    return "".join(json.dumps(c.to_record(), ensure_ascii=False) + "\n" for c in comments)


def save_tsc_corpus(dataset, path) -> None:
    comments = dataset.comments if isinstance(dataset, Dataset) else dataset
    Path(path).write_text(dump_tsc_corpus(comments), encoding="utf-8")


# --------------------------------------------------------------------------
# Frame features


@dataclass
class VisualFeatureTable:
    """Frame features keyed by ``(video_id, frame_time)``; vectors are float32."""

    dim: int
    entries: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidArgumentError(f"feature dim must be positive, got {self.dim}")
        self._index = None

    def add(self, video_id: str, frame_time: float, vector) -> None:
        vec = np.asarray(vector, dtype=np.float32)
        if vec.shape != (self.dim,):
            raise InvalidArgumentError(f"expected vector of length {self.dim}, got shape {vec.shape}")
        if not frame_time >= 0:
            raise InvalidArgumentError(f"frame_time must be >= 0, got {frame_time}")
        self.entries[(video_id, float(frame_time))] = vec
        self._index = None

    def _build_index(self):
        index = {}
        for (vid, t) in sorted(self.entries):
            index.setdefault(vid, ([], []))
            index[vid][0].append(t)
            index[vid][1].append(self.entries[(vid, t)])
        self._index = index
        return index

    def frames(self, video_id):
        index = self._index if self._index is not None else self._build_index()
        return index.get(video_id)

    def __len__(self):
        return len(self.entries)


def match_frame_feature(table: VisualFeatureTable, video_id: str, video_time: float) -> np.ndarray:
    """Feature of the latest frame at or before ``video_time``.

    Falls back to the earliest frame of the video when every frame is later.
    """
    frames = table.frames(video_id)
    if not frames:
        raise MissingFeatureError(f"no frame features for video {video_id!r}")
    times, vectors = frames
    pos = bisect.bisect_right(times, video_time) - 1
    return vectors[max(pos, 0)]


def _format_float(x) -> str:
    return format(float(x), ".9g")


def dump_visual_features(table: VisualFeatureTable) -> str:
    lines = [json.dumps({"dim": table.dim}) + "\n"]
    for (vid, t) in sorted(table.entries):
        vec = ",".join(_format_float(x) for x in table.entries[(vid, t)])
        lines.append(f"{vid}\t{t!r}\t{vec}\n")
    return "".join(lines)


def save_visual_features(table: VisualFeatureTable, path) -> None:
    Path(path).write_text(dump_visual_features(table), encoding="utf-8")


def load_visual_features(path) -> VisualFeatureTable:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        try:
            dim = int(json.loads(header)["dim"])
        except (ValueError, KeyError, TypeError) as exc:
            raise FeatureFileError(f"{path}:1: bad header {header.strip()!r}") from exc
        if dim < 1:
            raise FeatureFileError(f"{path}:1: dim must be positive")
        table = VisualFeatureTable(dim)
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise FeatureFileError(f"{path}:{lineno}: expected 3 tab-separated columns")
            vid, t_raw, vec_raw = parts
            try:
                t = float(t_raw)
                values = [float(x) for x in vec_raw.split(",")]
            except ValueError as exc:
                raise FeatureFileError(f"{path}:{lineno}: {exc}") from exc
            if len(values) != dim:
                raise FeatureFileError(
                    f"{path}:{lineno}: expected {dim} floats, found {len(values)}"
                )
            if not (math.isfinite(t) and t >= 0):
                raise FeatureFileError(f"{path}:{lineno}: frame_time must be finite and >= 0")
            if (vid, t) in table.entries:
                log.warning("%s:%d: duplicate frame (%s, %r); last row wins", path, lineno, vid, t)
            table.add(vid, t, values)
    return table


# --------------------------------------------------------------------------
# Checkpoints

MANIFEST_NAME = "manifest.json"
BLOB_NAME = "params.bin"


@dataclass
class CheckpointManifest:
    model_variant: str
    d: int
    M: int
    beta: float
    vocab_size: int
    seed: int
    parameter_blob_path: str = BLOB_NAME
    format_version: int = FORMAT_VERSION
    hea_mode: str = "literal"
    visual_dim: int = 0
    tensors: list = field(default_factory=list)
    blob_sha256: str = ""

    def __post_init__(self):
        if self.model_variant not in VARIANTS:
            raise InvalidArgumentError(f"unknown model variant {self.model_variant!r}")

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CheckpointManifest":
        raw = json.loads(text)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - names
        if unknown:
            raise CheckpointError(f"unknown manifest fields: {sorted(unknown)}")
        return cls(**raw)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def save_checkpoint(directory, manifest: CheckpointManifest, params: dict, extras: dict | None = None) -> Path:
    """Write manifest, parameter blob and JSON extras into ``directory``.

    The checkpoint is assembled in a temporary sibling directory and moved into
    place only once complete, so a failure never leaves a partial checkpoint.
    """
    directory = Path(directory)
    arrays = {}
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        if not np.all(np.isfinite(arr)):
            raise InvalidArgumentError(f"parameter {name!r} has non-finite values")
        arrays[name] = arr
    blob = b"".join(arrays[name].tobytes() for name in arrays)
    manifest = dataclasses.replace(
        manifest,
        parameter_blob_path=BLOB_NAME,
        tensors=[{"name": n, "shape": list(a.shape)} for n, a in arrays.items()],
        blob_sha256=hashlib.sha256(blob).hexdigest(),
    )
    directory.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{directory.name}.", dir=directory.parent))
    try:
        (tmp / BLOB_NAME).write_bytes(blob)
        (tmp / MANIFEST_NAME).write_text(manifest.to_json(), encoding="utf-8")
        for name, obj in sorted((extras or {}).items()):
            _write_json(tmp / f"{name}.json", obj)
        if directory.exists():
            shutil.rmtree(directory)
        os.replace(tmp, directory)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return directory


def load_checkpoint(directory, extra_names=()):
    """Returns ``(manifest, params, extras)``; nothing is returned on any failure."""
    directory = Path(directory)
    try:
        manifest = CheckpointManifest.from_json((directory / MANIFEST_NAME).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise CheckpointError(f"{directory}: no {MANIFEST_NAME}") from exc
    except (ValueError, TypeError) as exc:
        raise CheckpointError(f"{directory}: unreadable manifest: {exc}") from exc
    if manifest.format_version != FORMAT_VERSION:
        raise IncompatibleCheckpointError(
            f"{directory}: checkpoint format_version {manifest.format_version} "
            f"is not supported (expected {FORMAT_VERSION})"
        )
    try:
        blob = (directory / manifest.parameter_blob_path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"{directory}: cannot read parameter blob: {exc}") from exc
    expected = sum(8 * int(np.prod(t["shape"], dtype=np.int64)) for t in manifest.tensors)
    if len(blob) != expected:
        raise CheckpointError(
            f"{directory}: parameter blob has {len(blob)} bytes, manifest expects {expected}"
        )
    if hashlib.sha256(blob).hexdigest() != manifest.blob_sha256:
        raise CheckpointError(f"{directory}: parameter blob checksum mismatch")
    params, offset = {}, 0
    for t in manifest.tensors:
        n = int(np.prod(t["shape"], dtype=np.int64))
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=offset).reshape(t["shape"])
        params[t["name"]] = arr.astype(np.float64)
        offset += 8 * n
    extras = {}
    for name in extra_names:
        path = directory / f"{name}.json"
        try:
            extras[name] = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise CheckpointError(f"{directory}: cannot read {path.name}: {exc}") from exc
    return manifest, params, extras
