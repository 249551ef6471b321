"""Identity detection: find where and when an identity first shows up.

Time is cut into windows of ``window_len`` frames. Each (camera, window)
cell carries a score: the entry prior of the camera plus whatever score
flows in from earlier cells that were never searched, weighted by the
spatial and windowed temporal correlation. Only cells scoring above a
threshold get searched.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .core import ContractError, DetectionStreams, LabeledDetection
from .model import SpatioTemporalModel


def estimate_entry_priors(labels: Iterable[LabeledDetection]) -> dict[int, float]:
    """Fraction of entities whose first sighting (earliest frame, then lowest camera) is at each camera."""
    first: dict[int, tuple[int, int]] = {}
    for lab in labels:
        key = (lab.frame, lab.camera)
        if lab.entity not in first or key < first[lab.entity]:
            first[lab.entity] = key
    if not first:
        raise ContractError("cannot estimate entry priors from empty labels")
    counts: dict[int, int] = defaultdict(int)
    for _, cam in first.values():
        counts[cam] += 1
    n = len(first)
    return {c: counts[c] / n for c in sorted(counts)}


def priors_array(priors: Mapping[int, float], n_cameras: int) -> np.ndarray:
    p = np.zeros(n_cameras)
    for c, v in priors.items():
        if not 0 <= c < n_cameras:
            raise ContractError(f"prior for unknown camera {c}")
        if v < 0:
            raise ContractError("priors must be non-negative")
        p[c] = v
    if abs(p.sum() - 1.0) > 1e-9:
        raise ContractError(f"priors sum to {p.sum()}, not 1")
    return p


def window_kernel(model: SpatioTemporalModel, window_len: int, n_windows: int) -> np.ndarray:
    """K[k, i, c] = S(i, c) * (share of i -> c travel offsets in [k W, (k+1) W))."""
    n = model.n_cameras
    K = np.zeros((n_windows, n, n))
    S = model.spatial_matrix()
    w = model.bin_width
    for (i, c), h in model.pairs.items():
        if h.count == 0:
            continue
        starts = (h.first_bin(w) + np.arange(len(h.bins))) * w
        k = starts // window_len
        mass = np.asarray(h.bins, dtype=float) / h.count
        ok = k < n_windows
        np.add.at(K[:, i, c], k[ok], S[i, c] * mass[ok])
    return K


@dataclass
class BeliefState:
    p: np.ndarray  # (n_cameras, n_windows) scores
    searched: np.ndarray  # same shape, bool
    priors: np.ndarray
    window_len: int

    @classmethod
    def start(cls, priors: np.ndarray, n_windows: int, window_len: int) -> "BeliefState":
        n = len(priors)
        return cls(np.zeros((n, n_windows)), np.zeros((n, n_windows), dtype=bool),
                   np.asarray(priors, dtype=float), int(window_len))

    @property
    def n_windows(self) -> int:
        return self.p.shape[1]


def propagate(state: BeliefState, kernel: np.ndarray, w: int) -> BeliefState:
    """Fill in the scores of window ``w`` from the priors and unsearched earlier cells.

    Only strictly earlier windows feed window ``w``; a cell cannot feed itself.
    """
    if w >= 1:
        live = state.p[:, :w] * ~state.searched[:, :w]  # (n, w); column j is window j
        # offset k = w - j pairs window j with kernel slice k
        ks = w - np.arange(w)
        state.p[:, w] = state.priors + np.einsum("ij,jic->c", live, kernel[ks])
    else:
        state.p[:, 0] = state.priors
    return state


def schedule_search(state: BeliefState, theta: float, w: int) -> list[int]:
    """Unsearched cameras of window ``w`` scoring above ``theta``.

    ``theta = 0`` schedules every unsearched camera, including zero-score ones,
    so the exhaustive limit holds even for cameras nobody enters at.
    """
    if theta < 0:
        raise ContractError("theta must be non-negative")
    col = state.p[:, w]
    pick = ~state.searched[:, w]
    if theta > 0:
        pick &= col > theta
    return [int(c) for c in np.flatnonzero(pick)]


@dataclass
class DetectionReport:
    found: bool
    camera: Optional[int]
    frame: Optional[int]
    detection_id: Optional[int]
    cells_searched: int
    cells_total: int
    schedule_sizes: list[int] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"found": self.found, "camera": self.camera, "frame": self.frame,
                "cells_searched": self.cells_searched, "cells_total": self.cells_total}


def _earliest_match(streams: DetectionStreams, rows: np.ndarray, q: np.ndarray, match_thresh: float):
    if len(rows) == 0:
        return None
    d = np.sqrt(((streams.features[rows] - q) ** 2).sum(axis=1))
    hit = d < match_thresh
    if not hit.any():
        return None
    rows, d = rows[hit], d[hit]
    best = int(np.lexsort((streams.det_id[rows], d, streams.frame[rows]))[0])
    return int(rows[best])


def detect_identity(
    streams: DetectionStreams,
    model: SpatioTemporalModel,
    priors: Mapping[int, float],
    theta: float,
    query_feature,
    match_thresh: float,
    window_len: int = 10,
    *,
    return_state: bool = False,
):
    """Scan windows in time order, searching only cells whose score passes ``theta``.

    Returns the earliest match inside the first window that yields one.
    """
    if model.n_cameras != streams.n_cameras:
        raise ContractError("model and streams disagree on the camera roster")
    if window_len < 1:
        raise ContractError("window_len must be at least one frame")
    n = streams.n_cameras
    n_windows = max(1, math.ceil(streams.n_frames / window_len))
    state = BeliefState.start(priors_array(priors, n), n_windows, window_len)
    kernel = window_kernel(model, window_len, n_windows)
    q = np.asarray(query_feature, dtype=float)
    report = DetectionReport(False, None, None, None, 0, n * n_windows)

    for w in range(n_windows):
        propagate(state, kernel, w)
        targets = schedule_search(state, theta, w)
        report.schedule_sizes.append(len(targets))
        if not targets:
            continue
        lo = streams.offsets[w * window_len]
        hi = streams.offsets[min((w + 1) * window_len, streams.n_frames)]
        want = np.zeros(n, dtype=bool)
        want[targets] = True
        rows = lo + np.flatnonzero(want[streams.camera[lo:hi]])
        state.searched[targets, w] = True
        report.cells_searched += len(targets)
        row = _earliest_match(streams, rows, q, match_thresh)
        if row is not None:
            report.found = True
            report.camera = int(streams.camera[row])
            report.frame = int(streams.frame[row])
            report.detection_id = int(streams.det_id[row])
            break
    return (report, state) if return_state else report


def brute_force_detect(streams: DetectionStreams, query_feature, match_thresh: float,
                       window_len: int = 10) -> DetectionReport:
    """Earliest match over every camera and frame, with no pruning at all."""
    n_windows = max(1, math.ceil(streams.n_frames / window_len))
    report = DetectionReport(False, None, None, None, 0, streams.n_cameras * n_windows)
    row = _earliest_match(streams, np.arange(len(streams)), np.asarray(query_feature, dtype=float),
                          match_thresh)
    if row is None:
        report.cells_searched = report.cells_total
        return report
    f = int(streams.frame[row])
    report.found = True
    report.camera = int(streams.camera[row])
    report.frame = f
    report.detection_id = int(streams.det_id[row])
    report.cells_searched = streams.n_cameras * (f // window_len + 1)
    return report


def theta_at_quantile(scores: Sequence[float], q: float) -> float:
    """Score-scale threshold at quantile ``q`` of the given cell scores."""
    arr = np.asarray(scores, dtype=float).ravel()
    if arr.size == 0:
        raise ContractError("no scores to take a quantile of")
    return float(np.quantile(arr, q))
