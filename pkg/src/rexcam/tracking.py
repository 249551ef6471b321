"""Cross-camera identity tracking with spatio-temporal filtering and replay.

Phase 1 searches only cameras the model marks as correlated with the query
camera at the current offset. When every correlated window has closed
without a match, the tracker rewinds to the last sighting and replays with
thresholds relaxed (phase 2), and if that also fails, over the whole network
until the exit threshold. Baselines search all cameras, or all cameras
within a radius, every frame.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (ContractError, DetectionEvent, DetectionStreams, QuerySpec, RankHook,
                   update_representation)
from .model import SpatioTemporalModel, relax

PHASE_1 = "1"
PHASE_2 = "2"
FULL_NETWORK = "full_network"

MODES = ("rexcam", "baseline_all", "baseline_geo")


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class ReplayMode:
    kind: str = "realtime"  # realtime | skip | fastforward
    factor: int = 1

    def __post_init__(self):
        if self.kind not in ("realtime", "skip", "fastforward"):
            raise ContractError(f"unknown replay mode {self.kind!r}")
        if self.factor < 1 or (self.kind != "realtime" and self.factor < 2):
            raise ContractError("skip / fastforward need a factor of at least 2")

    @classmethod
    def parse(cls, text: str) -> "ReplayMode":
        t = text.strip().lower().replace("(", "").replace(")", "")
        if t in ("realtime", "rt"):
            return cls()
        for prefix, kind in (("fastforward", "fastforward"), ("skip", "skip"), ("ff", "fastforward")):
            if t.startswith(prefix):
                return cls(kind, int(t[len(prefix):]))
        raise ContractError(f"cannot parse replay mode {text!r}")

    def __str__(self) -> str:
        return "realtime" if self.kind == "realtime" else f"{self.kind}({self.factor})"


def replay_cost(mode: ReplayMode, n_replay_frames: int, live_rate: float = 1.0) -> int:
    """Lag, in frames, accrued by replaying ``n_replay_frames`` historical frames.

    ``live_rate`` is the tracker's normal processing speed relative to the live
    frame rate. Skip mode scores one frame in ``factor``; fast-forward scores
    them all at ``factor`` times the rate.
    """
    if n_replay_frames < 0:
        raise ContractError("n_replay_frames must be non-negative")
    speed = live_rate * (1 if mode.kind == "realtime" else mode.factor)
    return int(math.ceil(n_replay_frames / speed - 1e-12))


@dataclass(frozen=True)
class TrackingConfig:
    exit_t: int
    match_thresh: float
    mode: str = "rexcam"
    geo_radius: float = 400.0  # metres; 4 x a 100 m field of view
    replay: bool = True
    replay_relax_factor: float = 10.0
    replay_mode: ReplayMode = ReplayMode()
    alpha: float = 1.0
    continuation: int = 2  # frames the last camera stays searched after a sighting
    dedup: bool = True
    record_events: bool = True

    def __post_init__(self):
        if self.exit_t <= 0:
            raise ContractError("exit_t must be positive")
        if self.replay_relax_factor <= 1:
            raise ContractError("replay_relax_factor must exceed 1")
        if self.mode not in MODES:
            raise ContractError(f"unknown tracking mode {self.mode!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ContractError("alpha must lie in [0, 1]")

    @classmethod
    def for_frame_rate(cls, frame_rate: float, match_thresh: float, **kw) -> "TrackingConfig":
        """Defaults scaled to the frame rate: 90 s exit threshold, 2 s continuation."""
        kw.setdefault("exit_t", int(round(90 * frame_rate)))
        kw.setdefault("continuation", max(1, int(round(2 * frame_rate))))
        return cls(match_thresh=match_thresh, **kw)


@dataclass(frozen=True, eq=False)
class MatchRecord:
    detection: DetectionEvent
    distance: float
    phase_found: str
    was_replay: bool

    def to_json(self) -> dict:
        return {
            "detection_id": self.detection.detection_id,
            "camera": self.detection.camera,
            "frame": self.detection.frame,
            "distance": self.distance,
            "phase_found": self.phase_found,
            "was_replay": self.was_replay,
        }


@dataclass(frozen=True)
class TrackEvent:
    kind: str  # trigger | feedback
    camera: int
    frame: int  # controller clock, monotone within a query
    payload: str

    def to_json(self) -> dict:
        return {"kind": self.kind, "camera": self.camera, "frame": self.frame, "payload": self.payload}


@dataclass
class TrackerState:
    q_feat: np.ndarray
    f_q: int
    c_q: int
    f_curr: int
    phase: str = PHASE_1
    matches: list[MatchRecord] = field(default_factory=list)
    frames_processed: int = 0
    detections_scored: int = 0
    delay_frames: int = 0


@dataclass
class TrackResult:
    query_id: int
    truth_entity: Optional[int]
    query_camera: int
    query_frame: int
    matches: list[MatchRecord]
    frames_processed: int
    detections_scored: int
    delay_frames: int
    replay_frames_processed: int
    replay_episodes: int
    exit_declared_at: Optional[int]
    phase_trace: list[tuple[int, str]] = field(default_factory=list)
    events: list[TrackEvent] = field(default_factory=list)

    @property
    def left_phase_one(self) -> bool:
        return self.replay_episodes > 0

    def pruning_misses(self, continuation: int = 2) -> list[bool]:
        """One flag per rediscovery: was it found only by replay?

        Matches that merely continue a sighting on the same camera are not
        separate search iterations and are skipped.
        """
        flags = []
        cam, frame = self.query_camera, self.query_frame
        for m in self.matches:
            d = m.detection
            if d.camera != cam or d.frame - frame > continuation:
                flags.append(m.was_replay)
            cam, frame = d.camera, d.frame
        return flags

    def to_json(self) -> dict:
        return {
            "query_id": self.query_id,
            "truth_entity": self.truth_entity,
            "query_camera": self.query_camera,
            "query_frame": self.query_frame,
            "matches": [m.to_json() for m in self.matches],
            "frames_processed": self.frames_processed,
            "detections_scored": self.detections_scored,
            "delay_frames": self.delay_frames,
            "replay_frames_processed": self.replay_frames_processed,
            "replay_episodes": self.replay_episodes,
            "exit_declared_at": self.exit_declared_at,
            "phase_trace": [[f, p] for f, p in self.phase_trace],
        }


def _geo_masks(network, radius: float) -> np.ndarray:
    return network.distances() <= radius


def track_query(
    streams: DetectionStreams,
    model: SpatioTemporalModel,
    query: QuerySpec,
    config: TrackingConfig,
    *,
    network=None,
    on_rank: Optional[RankHook] = None,
) -> TrackResult:
    n = streams.n_cameras
    if model.n_cameras != n:
        raise ConfigurationError(f"model has {model.n_cameras} cameras, streams have {n}")
    if not 0 <= query.query_camera < n:
        raise ConfigurationError(f"unknown query camera {query.query_camera}")
    if not 0 <= query.query_frame < streams.n_frames:
        raise ContractError("query frame outside the stream span")
    if len(query.query_feature) != streams.feature_dim:
        raise ContractError("query feature dimension differs from the stream's")

    rexcam = config.mode == "rexcam"
    use_replay = rexcam and config.replay
    relaxed = relax(model, config.replay_relax_factor) if use_replay else None
    geo = None
    if config.mode == "baseline_geo":
        if network is None:
            raise ConfigurationError("baseline_geo needs the camera network positions")
        geo = _geo_masks(network, config.geo_radius)
    everywhere = np.ones(n, dtype=bool)
    mode = config.replay_mode
    speed = 1 if mode.kind == "realtime" else mode.factor
    skip = mode.factor if mode.kind == "skip" else 1

    st = TrackerState(np.asarray(query.query_feature, dtype=float).copy(),
                      query.query_frame, query.query_camera, query.query_frame + 1)
    F, cam_of, ids = streams.features, streams.camera, streams.det_id
    searched: dict[int, np.ndarray] = {}
    episode = 0
    episodes = 0
    replay_frames = 0
    exit_at: Optional[int] = None
    trace: list[tuple[int, str]] = [(st.f_curr, PHASE_1)]
    events: list[TrackEvent] = []
    prev_mask = np.zeros(n, dtype=bool)
    tick = float(query.query_frame)

    def log(kind: str, camera: int, payload: str) -> None:
        if config.record_events:
            events.append(TrackEvent(kind, int(camera), int(tick), payload))

    def enter(phase: str) -> None:
        nonlocal episodes
        if st.phase == PHASE_1:
            episodes += 1
        st.phase = phase
        st.f_curr = st.f_q + 1
        trace.append((st.f_curr, phase))

    while st.f_curr < streams.n_frames:
        f = st.f_curr
        gap = f - st.f_q

        replaying = st.phase != PHASE_1
        # in skip mode a sampled frame stands in for the frames skipped before it,
        # so it searches every offset in (gap - stride, gap]
        stride = skip if replaying else 1
        if use_replay and st.phase != FULL_NETWORK:
            m = model if st.phase == PHASE_1 else relaxed
            covered = gap - stride + 1
            if gap > config.exit_t or (covered > config.continuation and m.peers_closed(st.c_q, covered)):
                enter(PHASE_2 if st.phase == PHASE_1 else FULL_NETWORK)
                continue
        if gap > config.exit_t:
            exit_at = f
            log("feedback", st.c_q, f"exit declared at frame {f}")
            break

        if replaying:
            episode += 1
            if gap % stride:
                st.f_curr += 1
                continue
            tick += 1.0 / speed
        else:
            tick += 1.0

        if st.phase == FULL_NETWORK or config.mode == "baseline_all":
            mask = everywhere
        elif geo is not None:
            mask = geo[st.c_q]
        else:
            m = model if st.phase == PHASE_1 else relaxed
            mask = m.filter_mask(st.c_q, gap)
            for g in range(max(1, gap - stride + 1), gap):
                mask = mask | m.filter_mask(st.c_q, g)
            if gap - stride + 1 <= config.continuation:
                mask = mask.copy()
                mask[st.c_q] = True

        if config.record_events and not np.array_equal(mask, prev_mask):
            for c in np.flatnonzero(mask & ~prev_mask):
                log("trigger", c, f"start search phase={st.phase} frame={f}")
            for c in np.flatnonzero(prev_mask & ~mask):
                log("trigger", c, f"stop search phase={st.phase} frame={f}")
            prev_mask = mask

        if config.dedup:
            done = searched.get(f)
            if done is not None:
                mask = mask & ~done
                done |= mask
            else:
                searched[f] = mask.copy()
        k = int(mask.sum())
        st.frames_processed += k
        if replaying:
            replay_frames += k

        lo, hi = streams.frame_rows(f)
        if k and hi > lo:
            rows = lo + np.flatnonzero(mask[cam_of[lo:hi]])
            if len(rows):
                d = np.sqrt(((F[rows] - st.q_feat) ** 2).sum(axis=1))
                st.detections_scored += len(rows)
                if on_rank is not None:
                    on_rank(st.q_feat, rows, d)
                best = int(np.lexsort((ids[rows], d))[0])
                if d[best] < config.match_thresh:
                    row = int(rows[best])
                    st.matches.append(MatchRecord(streams.event(row), float(d[best]), st.phase, replaying))
                    new_q = update_representation(st.q_feat, F[row], config.alpha)
                    if not np.array_equal(new_q, st.q_feat):
                        searched.clear()
                    st.q_feat = new_q
                    if replaying:
                        st.delay_frames += replay_cost(mode, episode)
                        episode = 0
                        trace.append((f + 1, PHASE_1))
                    st.f_q = f
                    st.c_q = int(cam_of[row])
                    st.phase = PHASE_1
                    log("feedback", st.c_q, f"match det={int(ids[row])} frame={f}")
        st.f_curr += 1

    # a replay that ends in an exit or at the stream end delivers nothing late,
    # so only episodes closed by a match add to the delay
    return TrackResult(
        query_id=query.query_id,
        truth_entity=query.truth_entity,
        query_camera=query.query_camera,
        query_frame=query.query_frame,
        matches=st.matches,
        frames_processed=st.frames_processed,
        detections_scored=st.detections_scored,
        delay_frames=st.delay_frames,
        replay_frames_processed=replay_frames,
        replay_episodes=episodes,
        exit_declared_at=exit_at,
        phase_trace=trace,
        events=events,
    )


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("REXCAM_THREADS", "1")))
    except ValueError:
        return 1


def run_workload(
    streams: DetectionStreams,
    model: SpatioTemporalModel,
    queries: Sequence[QuerySpec],
    config: TrackingConfig,
    *,
    network=None,
    workers: Optional[int] = None,
) -> list[TrackResult]:
    """Run independent queries; result order follows query order."""
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(queries) <= 1:
        return [track_query(streams, model, q, config, network=network) for q in queries]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda q: track_query(streams, model, q, config, network=network), queries))
