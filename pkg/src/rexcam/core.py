"""Domain types shared by every module, plus the re-id stand-in.

The re-identification model is replaced by plain Euclidean distance on
synthetic feature vectors; ranking, match decisions and representation
updates are the only operations the tracker needs from it.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional, Sequence

import numpy as np

EXIT = -1
DEFAULT_FEATURE_DIM = 16


class ContractError(ValueError):
    """An operation was called with arguments violating its precondition."""


def as_feature(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ContractError(f"feature must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractError("feature contains non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class DetectionEvent:
    camera: int
    frame: int
    detection_id: int
    feature: np.ndarray
    truth_entity: Optional[int] = None

    def to_json(self) -> dict:
        return {
            "camera": int(self.camera),
            "frame": int(self.frame),
            "detection_id": int(self.detection_id),
            "feature": [float(x) for x in self.feature],
            "truth_entity": None if self.truth_entity is None else int(self.truth_entity),
        }

    @classmethod
    def from_json(cls, d: dict) -> "DetectionEvent":
        try:
            return cls(
                camera=int(d["camera"]),
                frame=int(d["frame"]),
                detection_id=int(d["detection_id"]),
                feature=as_feature(d["feature"]),
                truth_entity=None if d.get("truth_entity") is None else int(d["truth_entity"]),
            )
        except KeyError as exc:
            raise ValueError(f"detection record missing field {exc.args[0]!r}") from None


@dataclass(frozen=True)
class LabeledDetection:
    """One (camera, frame, entity) tuple as emitted by an MTMC tracker."""

    camera: int
    frame: int
    entity: int

    def to_json(self) -> dict:
        return {"camera": self.camera, "frame": self.frame, "entity": self.entity}

    @classmethod
    def from_json(cls, d: dict) -> "LabeledDetection":
        try:
            return cls(int(d["camera"]), int(d["frame"]), int(d["entity"]))
        except KeyError as exc:
            raise ValueError(f"label record missing field {exc.args[0]!r}") from None


@dataclass(frozen=True, eq=False)
class QuerySpec:
    query_feature: np.ndarray
    query_camera: int
    query_frame: int
    truth_entity: Optional[int] = None
    query_id: int = 0

    def to_json(self) -> dict:
        return {
            "query_id": int(self.query_id),
            "query_feature": [float(x) for x in self.query_feature],
            "query_camera": int(self.query_camera),
            "query_frame": int(self.query_frame),
            "truth_entity": None if self.truth_entity is None else int(self.truth_entity),
        }

    @classmethod
    def from_json(cls, d: dict) -> "QuerySpec":
        try:
            return cls(
                query_feature=as_feature(d["query_feature"]),
                query_camera=int(d["query_camera"]),
                query_frame=int(d["query_frame"]),
                truth_entity=None if d.get("truth_entity") is None else int(d["truth_entity"]),
                query_id=int(d.get("query_id", 0)),
            )
        except KeyError as exc:
            raise ValueError(f"query record missing field {exc.args[0]!r}") from None


@dataclass(frozen=True, eq=False)
class RankedMatch:
    detection: DetectionEvent
    distance: float


# -- re-id primitives --------------------------------------------------------

def feature_distance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ContractError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def rank_gallery(query_feature, gallery: Sequence[DetectionEvent]) -> list[RankedMatch]:
    """Rank gallery detections by distance to the query, ties by detection id."""
    q = np.asarray(query_feature, dtype=float)
    scored = [RankedMatch(det, feature_distance(q, det.feature)) for det in gallery]
    scored.sort(key=lambda m: (m.distance, m.detection.detection_id))
    return scored


def decide_match(ranked: Sequence[RankedMatch], match_thresh: float) -> Optional[RankedMatch]:
    if not ranked:
        return None
    top = ranked[0]
    return top if top.distance < match_thresh else None


def update_representation(current, matched, alpha: float) -> np.ndarray:
    """Exponential moving average of the query representation."""
    if not 0.0 <= alpha <= 1.0:
        raise ContractError(f"alpha must lie in [0, 1], got {alpha}")
    current = np.asarray(current, dtype=float)
    matched = np.asarray(matched, dtype=float)
    if current.shape != matched.shape:
        raise ContractError(f"dimension mismatch: {current.shape} vs {matched.shape}")
    if alpha == 1.0:
        return matched.copy()
    if alpha == 0.0:
        return current.copy()
    return (1.0 - alpha) * current + alpha * matched


def is_perfect_ranking(distances: Sequence[float], positives: Sequence[bool]) -> bool:
    """max positive distance < min negative distance (vacuously true if a side is empty)."""
    d = np.asarray(distances, dtype=float)
    p = np.asarray(positives, dtype=bool)
    if not p.any() or p.all():
        return True
    return bool(d[p].max() < d[~p].min())


def calibrate_match_threshold(
    features: np.ndarray,
    labels: Sequence[Optional[int]],
    n_pairs: int = 20000,
    seed: int = 0,
    neg_weight: float = 1.0,
) -> float:
    """Distance cutoff maximising F1 over sampled co-identical / other pairs.

    Positive and negative pairs are sampled in equal numbers; unlabeled rows
    (distractors) only ever form negatives. ``neg_weight`` scales false
    positives to reflect how many negatives a real gallery holds per positive.
    """
    features = np.asarray(features, dtype=float)
    lab = np.array([-1 if x is None else int(x) for x in labels])
    rng = np.random.default_rng(seed)
    n = len(lab)
    if n < 2:
        raise ContractError("need at least two detections to calibrate")

    pos_a: list[int] = []
    pos_b: list[int] = []
    order = np.argsort(lab, kind="stable")
    sorted_lab = lab[order]
    starts = np.flatnonzero(np.r_[True, sorted_lab[1:] != sorted_lab[:-1]])
    ends = np.r_[starts[1:], n]
    groups = [order[s:e] for s, e in zip(starts, ends) if sorted_lab[s] >= 0 and e - s >= 2]
    if not groups:
        raise ContractError("no co-identical pairs available")
    per_group = max(1, n_pairs // len(groups))
    for g in groups:
        a = rng.choice(g, size=per_group)
        b = rng.choice(g, size=per_group)
        keep = a != b
        pos_a.extend(a[keep])
        pos_b.extend(b[keep])
    pa, pb = np.array(pos_a), np.array(pos_b)

    m = len(pa)
    na = rng.integers(0, n, size=4 * m)
    nb = rng.integers(0, n, size=4 * m)
    neg = (lab[na] != lab[nb]) | (lab[na] < 0)
    neg &= na != nb
    na, nb = na[neg][:m], nb[neg][:m]

    dpos = np.linalg.norm(features[pa] - features[pb], axis=1)
    dneg = np.linalg.norm(features[na] - features[nb], axis=1)
    allv = np.concatenate([dpos, dneg])
    is_pos = np.concatenate([np.ones(len(dpos), bool), np.zeros(len(dneg), bool)])
    idx = np.argsort(allv, kind="stable")
    allv, is_pos = allv[idx], is_pos[idx]
    # threshold just above allv[i] accepts items 0..i (strict "<")
    tp = np.cumsum(is_pos)
    fp = neg_weight * np.cumsum(~is_pos)
    fn = len(dpos) - tp
    f1 = 2 * tp / np.maximum(2 * tp + fp + fn, 1)
    best = int(np.argmax(f1))
    hi = allv[best + 1] if best + 1 < len(allv) else allv[best] + 1e-6
    return float(0.5 * (allv[best] + hi))


# -- detection streams --------------------------------------------------------

class DetectionStreams:
    """All cameras' detections, indexed by frame for fast per-step galleries.

    Rows are stored sorted by (frame, camera, detection_id); the arrays are the
    source of truth and :class:`DetectionEvent` objects are built on demand.
    Truth entity -1 marks a detection with no ground-truth identity.
    """

    def __init__(self, frame, camera, det_id, features, truth, n_cameras: int, n_frames: int):
        frame = np.asarray(frame, dtype=np.int64)
        camera = np.asarray(camera, dtype=np.int64)
        det_id = np.asarray(det_id, dtype=np.int64)
        truth = np.asarray(truth, dtype=np.int64)
        features = np.asarray(features, dtype=float)
        order = np.lexsort((det_id, camera, frame))
        self.frame = frame[order]
        self.camera = camera[order]
        self.det_id = det_id[order]
        self.truth = truth[order]
        self.features = features[order] if len(order) else features.reshape(0, features.shape[-1])
        self.n_cameras = int(n_cameras)
        self.n_frames = int(n_frames)
        self.feature_dim = int(self.features.shape[1])
        if len(np.unique(self.det_id)) != len(self.det_id):
            raise ContractError("detection ids are not unique")
        if len(self.camera) and (self.camera.min() < 0 or self.camera.max() >= self.n_cameras):
            raise ContractError("unknown camera in stream")
        if len(self.frame) and (self.frame.min() < 0 or self.frame.max() >= self.n_frames):
            raise ContractError(f"frame outside stream span [0, {self.n_frames})")
        if not np.all(np.isfinite(self.features)):
            raise ContractError("non-finite feature values in stream")
        self.offsets = np.searchsorted(self.frame, np.arange(self.n_frames + 1), side="left")

    @classmethod
    def from_events(cls, events: Iterable[DetectionEvent], n_cameras: int, n_frames: int,
                    feature_dim: int = DEFAULT_FEATURE_DIM) -> "DetectionStreams":
        evs = list(events)
        feats = np.vstack([e.feature for e in evs]) if evs else np.zeros((0, feature_dim))
        return cls(
            [e.frame for e in evs], [e.camera for e in evs], [e.detection_id for e in evs],
            feats, [-1 if e.truth_entity is None else e.truth_entity for e in evs],
            n_cameras, n_frames,
        )

    def __len__(self) -> int:
        return len(self.frame)

    def event(self, row: int) -> DetectionEvent:
        t = int(self.truth[row])
        return DetectionEvent(int(self.camera[row]), int(self.frame[row]), int(self.det_id[row]),
                              self.features[row].copy(), None if t < 0 else t)

    @property
    def events(self) -> list[DetectionEvent]:
        return [self.event(i) for i in range(len(self))]

    def frame_rows(self, f: int) -> tuple[int, int]:
        return int(self.offsets[f]), int(self.offsets[f + 1])

    def camera_stream(self, camera: int) -> list[DetectionEvent]:
        return [self.event(i) for i in np.flatnonzero(self.camera == camera)]

    def gallery(self, f: int, cameras: Iterable[int]) -> list[DetectionEvent]:
        lo, hi = self.frame_rows(f)
        cams = set(cameras)
        return [self.event(i) for i in range(lo, hi) if int(self.camera[i]) in cams]

    def to_jsonl(self, path) -> None:
        write_jsonl(path, (self.event(i).to_json() for i in range(len(self))))

    @classmethod
    def from_jsonl(cls, path, n_cameras: int, n_frames: int) -> "DetectionStreams":
        evs = [DetectionEvent.from_json(d) for d in read_jsonl(path)]
        dim = len(evs[0].feature) if evs else DEFAULT_FEATURE_DIM
        if any(len(e.feature) != dim for e in evs):
            raise ContractError("feature dimension differs between detections")
        return cls.from_events(evs, n_cameras, n_frames, dim)


# -- serialization helpers ----------------------------------------------------

def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def write_jsonl(path, records: Iterable[dict]) -> None:
    atomic_write_text(path, "".join(dumps(r) + "\n" for r in records))


def read_jsonl(path) -> Iterator[dict]:
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: {exc.msg}") from None


def frames(seconds: float, frame_rate: float) -> int:
    return max(1, int(math.ceil(seconds * frame_rate - 1e-9)))


RankHook = Callable[[np.ndarray, np.ndarray, np.ndarray], None]
