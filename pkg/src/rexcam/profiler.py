"""Build a correlation model from (camera, frame, entity) labels.

Also holds the frame-subsampling helper used to cut profiling cost and the
drift monitor that asks for re-profiling when pruning misses spike.
"""
from __future__ import annotations

import logging
from collections import defaultdict, deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .core import EXIT, ContractError, LabeledDetection
from .model import PairHistogram, SpatioTemporalModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Visit:
    entity: int
    camera: int
    first: int
    last: int


@dataclass(frozen=True)
class TransitionRecord:
    entity: int
    src: int
    dst: int  # EXIT for a network exit
    depart_frame: int
    delta: Optional[int] = None


def segment_visits(labels: Iterable[LabeledDetection], gap_thresh: int) -> dict[int, list[Visit]]:
    """Split each entity's sightings into per-camera visits, ordered in time.

    Sightings on one camera belong to the same visit while consecutive frames
    are at most ``gap_thresh`` apart. Overlapping visits on two cameras are
    ordered by last frame, the later one being the entity's current camera.
    """
    runs: dict[tuple[int, int], list[int]] = defaultdict(list)
    for lab in labels:
        runs[(lab.entity, lab.camera)].append(lab.frame)

    per_entity: dict[int, list[Visit]] = defaultdict(list)
    for (entity, camera), frames in runs.items():
        frames = sorted(set(frames))
        start = prev = frames[0]
        for f in frames[1:]:
            if f - prev > gap_thresh:
                per_entity[entity].append(Visit(entity, camera, start, prev))
                start = f
            prev = f
        per_entity[entity].append(Visit(entity, camera, start, prev))

    out = {}
    for entity in sorted(per_entity):
        visits = sorted(per_entity[entity], key=lambda v: (v.last, v.first, v.camera))
        for a, b in zip(visits, visits[1:]):
            if b.first <= a.last:
                log.warning("entity %d visible on cameras %d and %d at once (frames %d-%d)",
                            entity, a.camera, b.camera, b.first, a.last)
        out[entity] = visits
    return out


def extract_transitions(labels: Iterable[LabeledDetection], gap_thresh: int) -> list[TransitionRecord]:
    records: list[TransitionRecord] = []
    for entity, visits in segment_visits(labels, gap_thresh).items():
        for a, b in zip(visits, visits[1:]):
            # overlapping visits are clamped to the smallest positive offset
            records.append(TransitionRecord(entity, a.camera, b.camera, a.last, max(1, b.first - a.last)))
        last = visits[-1]
        records.append(TransitionRecord(entity, last.camera, EXIT, last.last, None))
    return records


def build_model(
    transitions: Iterable[TransitionRecord],
    n_cameras: Optional[int] = None,
    s_thresh: float = 0.05,
    t_thresh: float = 0.02,
    bin_width: int = 1,
) -> SpatioTemporalModel:
    if not (0.0 <= s_thresh <= 1.0 and 0.0 <= t_thresh <= 1.0):
        raise ContractError("thresholds must lie in [0, 1]")
    deltas: dict[tuple[int, int], list[int]] = defaultdict(list)
    exits: dict[int, int] = defaultdict(int)
    max_cam = -1
    for t in transitions:
        max_cam = max(max_cam, t.src, t.dst)
        if t.dst == EXIT:
            exits[t.src] += 1
        else:
            if t.delta is None or t.delta <= 0:
                raise ContractError(f"transition {t} has no positive travel offset")
            deltas[(t.src, t.dst)].append(t.delta)
    if n_cameras is None:
        n_cameras = max_cam + 1
    elif max_cam >= n_cameras:
        raise ContractError(f"camera {max_cam} outside roster of {n_cameras}")

    pairs = {}
    for key in sorted(deltas):
        d = np.asarray(deltas[key], dtype=np.int64)
        j = d // bin_width
        j0 = int(j.min())
        bins = np.bincount(j - j0)
        pairs[key] = PairHistogram(len(d), int(d.min()), tuple(int(b) for b in bins))
    return SpatioTemporalModel(int(n_cameras), s_thresh, t_thresh, int(bin_width),
                               pairs, dict(sorted(exits.items())))


def parse_ratio(keep_ratio: Union[str, float, Fraction]) -> Fraction:
    if isinstance(keep_ratio, str):
        num, _, den = keep_ratio.partition("/")
        return Fraction(int(num), int(den)) if den else Fraction(keep_ratio)
    return Fraction(keep_ratio).limit_denominator(1000)


def sample_labels(labels: Sequence[LabeledDetection], keep_ratio, stride_base: int = 8) -> list[LabeledDetection]:
    """Keep labels whose frame falls in the first ``k`` residues mod ``stride_base``."""
    ratio = parse_ratio(keep_ratio)
    k = ratio * stride_base
    if k.denominator != 1 or not 0 <= k <= stride_base:
        raise ContractError(f"keep_ratio {keep_ratio} is not a multiple of 1/{stride_base}")
    k = int(k)
    return [lab for lab in labels if lab.frame % stride_base < k]


def sampled_gap(gap_thresh: int, keep_ratio, stride_base: int = 8) -> int:
    """Visit gap tolerance widened by the holes subsampling punches into a visit."""
    k = int(parse_ratio(keep_ratio) * stride_base)
    return gap_thresh + (stride_base - k)


# -- drift -------------------------------------------------------------------

@dataclass
class DriftMonitor:
    """Rolling pruning-miss rate compared to a baseline rate.

    The baseline is taken from the first full window unless given. A zero
    baseline is floored at one miss per window so a single stray miss does
    not count as a spike.
    """

    window_len: int = 200
    spike_factor: float = 3.0
    baseline_rate: Optional[float] = None
    miss_flags: deque = field(default_factory=deque)
    n_seen: int = 0

    def __post_init__(self):
        if self.spike_factor <= 1:
            raise ContractError("spike_factor must exceed 1")
        self.miss_flags = deque(self.miss_flags, maxlen=self.window_len)

    @property
    def full(self) -> bool:
        return len(self.miss_flags) == self.window_len

    @property
    def rate(self) -> float:
        return sum(self.miss_flags) / len(self.miss_flags) if self.miss_flags else 0.0

    def record_outcome(self, was_pruning_miss: bool) -> "DriftMonitor":
        self.miss_flags.append(bool(was_pruning_miss))
        self.n_seen += 1
        if self.baseline_rate is None and self.full:
            self.baseline_rate = self.rate
        return self

    def should_reprofile(self) -> bool:
        if not self.full or self.baseline_rate is None:
            return False
        floor = max(self.baseline_rate, 1.0 / self.window_len)
        return self.rate > self.spike_factor * floor


def record_outcome(monitor: DriftMonitor, was_pruning_miss: bool) -> DriftMonitor:
    return monitor.record_outcome(was_pruning_miss)


def should_reprofile(monitor: DriftMonitor) -> bool:
    return monitor.should_reprofile()
