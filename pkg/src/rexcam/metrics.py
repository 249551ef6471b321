"""Evaluation metrics for tracking runs and re-id rankings."""
from __future__ import annotations

import bisect
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import ContractError, LabeledDetection
from .profiler import segment_visits

CSV_COLUMNS = ("scheme", "s_thresh", "t_thresh", "frames_processed", "detections_scored",
               "recall", "precision", "mean_delay_s", "savings_factor")


class ScoringError(ValueError):
    pass


@dataclass(frozen=True)
class CostModel:
    """Per-camera-frame costs; only their sum matters when they are uniform."""

    c_det: float = 1.0
    c_feat: float = 1.0
    c_reid: float = 1.0
    d_bar: float = 1.0

    def __post_init__(self):
        if min(self.c_det, self.c_feat, self.c_reid, self.d_bar) < 0:
            raise ContractError("costs must be non-negative")

    def per_camera_frame(self) -> float:
        return self.c_det + self.d_bar * (self.c_feat + self.c_reid)


def cost_ratio(cost_model: CostModel, n_cameras: int, n_corr: int) -> float:
    """Savings of searching ``n_corr`` cameras instead of ``n_cameras``."""
    if n_corr < 0 or n_cameras < 0:
        raise ContractError("camera counts must be non-negative")
    if n_corr == 0:
        return math.inf
    c = cost_model.per_camera_frame()
    return (n_cameras * c) / (n_corr * c)


class VisitIndex:
    """Maps (entity, camera, frame) to the ground-truth visit containing it."""

    def __init__(self, truth: Iterable[LabeledDetection], gap_thresh: int):
        self.visits = segment_visits(truth, gap_thresh)
        self._by_cam: dict[tuple[int, int], list[tuple[int, int, int]]] = defaultdict(list)
        for e, vs in self.visits.items():
            for i, v in enumerate(vs):
                self._by_cam[(e, v.camera)].append((v.first, v.last, i))
        for lst in self._by_cam.values():
            lst.sort()

    def lookup(self, entity: int, camera: int, frame: int) -> Optional[int]:
        lst = self._by_cam.get((entity, camera))
        if not lst:
            return None
        k = bisect.bisect_right(lst, (frame, math.inf, math.inf)) - 1
        if k >= 0 and lst[k][0] <= frame <= lst[k][1]:
            return lst[k][2]
        return None


@dataclass
class QueryScore:
    query_id: int
    n_targets: int
    n_recalled: int
    n_true_groups: int
    n_groups: int
    delay_s: float
    frames_processed: int
    detections_scored: int

    @property
    def recall(self) -> float:
        return self.n_recalled / self.n_targets if self.n_targets else 1.0

    @property
    def precision(self) -> float:
        return self.n_true_groups / self.n_groups if self.n_groups else 1.0


@dataclass
class EvalReport:
    scheme: str
    s_thresh: Optional[float]
    t_thresh: Optional[float]
    frames_processed: int
    detections_scored: int
    recall: float
    precision: float
    mean_delay_s: float
    savings_factor: float = 1.0
    zero_retrieved: bool = False
    n_queries: int = 0
    per_query: list[QueryScore] = field(default_factory=list, repr=False)

    def row(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in CSV_COLUMNS}


def score_query(result, index: VisitIndex, frame_rate: float) -> QueryScore:
    """Visit-level recall and precision for one tracking result.

    Targets are the query entity's visits other than the one the query was
    taken from and those already over by the query frame. Retrieved
    detections of one (entity, camera, visit) count once; unlabeled
    (distractor) detections each count on their own.
    """
    if result.truth_entity is None:
        raise ScoringError(f"query {result.query_id} has no truth entity")
    e = result.truth_entity
    own = index.lookup(e, result.query_camera, result.query_frame)
    visits = index.visits.get(e, [])
    targets = {i for i, v in enumerate(visits) if i != own and v.last > result.query_frame}

    groups: set = set()
    found: set[int] = set()
    for k, m in enumerate(result.matches):
        det = m.detection
        if det.truth_entity is None:
            groups.add(("distractor", det.detection_id))
            continue
        v = index.lookup(det.truth_entity, det.camera, det.frame)
        if det.truth_entity == e and v == own:
            continue
        groups.add((det.truth_entity, det.camera, v))
        if det.truth_entity == e and v in targets:
            found.add(v)
    n_true = sum(1 for g in groups if g[0] == e)
    return QueryScore(result.query_id, len(targets), len(found), n_true, len(groups),
                      result.delay_frames / frame_rate, result.frames_processed,
                      result.detections_scored)


def score_results(results: Sequence, truth: Iterable[LabeledDetection], *, gap_thresh: int = 2,
                  frame_rate: float = 1.0, scheme: str = "", s_thresh: Optional[float] = None,
                  t_thresh: Optional[float] = None, index: Optional[VisitIndex] = None) -> EvalReport:
    """Pooled visit-level recall / precision, total cost and mean delay over a workload."""
    index = index if index is not None else VisitIndex(truth, gap_thresh)
    scores = sorted((score_query(r, index, frame_rate) for r in results), key=lambda s: s.query_id)
    targets = sum(s.n_targets for s in scores)
    groups = sum(s.n_groups for s in scores)
    return EvalReport(
        scheme=scheme,
        s_thresh=s_thresh,
        t_thresh=t_thresh,
        frames_processed=sum(s.frames_processed for s in scores),
        detections_scored=sum(s.detections_scored for s in scores),
        recall=sum(s.n_recalled for s in scores) / targets if targets else 1.0,
        precision=sum(s.n_true_groups for s in scores) / groups if groups else 1.0,
        mean_delay_s=float(np.mean([s.delay_s for s in scores])) if scores else 0.0,
        zero_retrieved=groups == 0,
        n_queries=len(scores),
        per_query=scores,
    )


def with_savings(report: EvalReport, baseline: EvalReport) -> EvalReport:
    report.savings_factor = (baseline.frames_processed / report.frames_processed
                             if report.frames_processed else math.inf)
    return report


# -- ranking quality ------------------------------------------------------------

@dataclass(frozen=True)
class Ranking:
    """Gallery distances with ground-truth positive flags, in gallery order."""

    distances: tuple[float, ...]
    positives: tuple[bool, ...]
    ids: tuple[int, ...] = ()

    def ordered_positives(self) -> np.ndarray:
        d = np.asarray(self.distances, dtype=float)
        ids = np.asarray(self.ids) if self.ids else np.arange(len(d))
        order = np.lexsort((ids, d))
        return np.asarray(self.positives, dtype=bool)[order]


def _check(rankings: Sequence[Ranking]) -> list[np.ndarray]:
    if not rankings:
        raise ContractError("no rankings given")
    ordered = [r.ordered_positives() for r in rankings]
    ordered = [o for o in ordered if o.any()]
    if not ordered:
        raise ContractError("no ranking contains a positive")
    return ordered


def rank_k_accuracy(rankings: Sequence[Ranking], k: int) -> float:
    """Share of rankings (with at least one positive) holding a positive in the top ``k``."""
    if k < 1:
        raise ContractError("k must be at least 1")
    ordered = _check(rankings)
    return sum(bool(o[:k].any()) for o in ordered) / len(ordered)


def average_precision(ordered_positives: np.ndarray) -> float:
    hits = np.flatnonzero(ordered_positives)
    if len(hits) == 0:
        raise ContractError("average precision needs a positive")
    return float(np.mean((np.arange(len(hits)) + 1) / (hits + 1)))


def mean_average_precision(rankings: Sequence[Ranking]) -> float:
    return float(np.mean([average_precision(o) for o in _check(rankings)]))


class RankingCollector:
    """Tracker ``on_rank`` hook that keeps every gallery scored for one query."""

    def __init__(self, streams, truth_entity: int):
        self.streams = streams
        self.entity = truth_entity
        self.rankings: list[Ranking] = []

    def __call__(self, q, rows, distances) -> None:
        self.rankings.append(Ranking(tuple(float(x) for x in distances),
                                     tuple(bool(x) for x in self.streams.truth[rows] == self.entity),
                                     tuple(int(x) for x in self.streams.det_id[rows])))


def format_csv(reports: Sequence[EvalReport]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for r in reports:
        row = r.row()
        lines.append(",".join(_fmt(row[c]) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "inf" if math.isinf(v) else f"{v:.6g}"
    return str(v)
