"""Synthetic camera networks, ground-truth trajectories and detection streams.

Stands in for real video plus detector and re-id model: entities walk a
mobility graph between cameras, each sighting becomes a detection whose
feature is the entity's latent vector plus gaussian noise.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Sequence

import numpy as np

from .core import ContractError, DetectionStreams, LabeledDetection, QuerySpec

WALKING_SPEED = 1.4  # m/s
TRAVEL_CV = 0.23  # travel-time std / mean


@dataclass(frozen=True)
class Camera:
    id: int
    position: tuple[float, float]
    fov_half_len: float = 50.0


@dataclass(frozen=True)
class CameraNetwork:
    cameras: tuple[Camera, ...]
    frame_rate: float = 1.0

    @property
    def n_cameras(self) -> int:
        return len(self.cameras)

    def positions(self) -> np.ndarray:
        return np.array([c.position for c in self.cameras], dtype=float)

    def distances(self) -> np.ndarray:
        p = self.positions()
        return np.linalg.norm(p[:, None, :] - p[None, :, :], axis=-1)

    def to_json(self) -> dict:
        return {
            "frame_rate": self.frame_rate,
            "cameras": [{"id": c.id, "position": list(c.position), "fov_half_len": c.fov_half_len}
                        for c in self.cameras],
        }

    @classmethod
    def from_json(cls, d: dict) -> "CameraNetwork":
        cams = tuple(Camera(int(c["id"]), (float(c["position"][0]), float(c["position"][1])),
                            float(c.get("fov_half_len", 50.0))) for c in d["cameras"])
        return cls(cams, float(d.get("frame_rate", 1.0)))


@dataclass(frozen=True)
class Edge:
    probability: float
    travel_mean: float  # seconds
    travel_std: float


@dataclass
class MobilityGraph:
    n_cameras: int
    edges: dict[tuple[int, int], Edge]
    exit_prob: list[float]
    entry_weights: list[float]

    def validate(self, tol: float = 1e-9) -> None:
        out = np.array(self.exit_prob, dtype=float)
        for (s, _), e in self.edges.items():
            out[s] += e.probability
            if e.travel_mean <= 0:
                raise ContractError("travel_mean must be positive")
        if np.any(np.abs(out - 1.0) > tol):
            raise ContractError("per-source edge probabilities plus exit must sum to 1")
        if abs(sum(self.entry_weights) - 1.0) > tol:
            raise ContractError("entry weights must sum to 1")

    def neighbors(self, c: int) -> list[int]:
        return sorted(d for (s, d) in self.edges if s == c)

    def transition_matrix(self) -> np.ndarray:
        """(n, n + 1) matrix of next-camera probabilities, last column = exit."""
        P = np.zeros((self.n_cameras, self.n_cameras + 1))
        for (s, d), e in self.edges.items():
            P[s, d] = e.probability
        P[:, -1] = self.exit_prob
        return P

    def remove_edge(self, src: int, dst: int, redirect_to: int) -> "MobilityGraph":
        """Copy with the src->dst probability moved onto src->redirect_to."""
        edges = dict(self.edges)
        gone = edges.pop((src, dst))
        old = edges.get((src, redirect_to))
        if old is None:
            edges[(src, redirect_to)] = Edge(gone.probability, gone.travel_mean, gone.travel_std)
        else:
            edges[(src, redirect_to)] = Edge(old.probability + gone.probability, old.travel_mean, old.travel_std)
        return MobilityGraph(self.n_cameras, edges, list(self.exit_prob), list(self.entry_weights))

    def to_json(self) -> dict:
        return {
            "n_cameras": self.n_cameras,
            "edges": [{"src": s, "dst": d, "probability": e.probability,
                       "travel_mean": e.travel_mean, "travel_std": e.travel_std}
                      for (s, d), e in sorted(self.edges.items())],
            "exit_prob": list(self.exit_prob),
            "entry_weights": list(self.entry_weights),
        }

    @classmethod
    def from_json(cls, d: dict) -> "MobilityGraph":
        edges = {(int(e["src"]), int(e["dst"])): Edge(float(e["probability"]), float(e["travel_mean"]),
                                                      float(e["travel_std"])) for e in d["edges"]}
        return cls(int(d["n_cameras"]), edges, [float(x) for x in d["exit_prob"]],
                   [float(x) for x in d["entry_weights"]])


@dataclass
class SimulationConfig:
    n_entities: int = 300
    duration: float = 600.0  # seconds
    feature_dim: int = 16
    feature_noise_sigma: float = 0.0
    distractor_rate: float = 0.0  # detections / frame / camera
    miss_prob: float = 0.0
    seed: int = 0
    dwell_mean: float = 8.0  # seconds
    persistent_distractors: int = 0  # size of a recurring distractor pool; 0 = fresh features

    def __post_init__(self):
        if not 0.0 <= self.miss_prob <= 1.0:
            raise ContractError("miss_prob must lie in [0, 1]")
        if self.feature_noise_sigma < 0 or self.distractor_rate < 0:
            raise ContractError("noise sigma and distractor rate must be non-negative")
        if self.n_entities < 0 or self.duration <= 0 or self.feature_dim < 1:
            raise ContractError("n_entities, duration and feature_dim must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ContractError(f"unknown simulation config field(s): {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def _layout_positions(n: int, layout: str, spacing: float, rng: np.random.Generator) -> np.ndarray:
    if layout == "line":
        return np.column_stack([np.arange(n) * spacing, np.zeros(n)])
    if layout == "grid":
        cols = int(math.ceil(math.sqrt(n)))
        idx = np.arange(n)
        return np.column_stack([(idx % cols) * spacing, (idx // cols) * spacing]).astype(float)
    if layout == "random":
        side = spacing * math.sqrt(n)
        return rng.uniform(0.0, side, size=(n, 2))
    raise ContractError(f"unknown layout {layout!r}")


def _adjacency(pos: np.ndarray, layout: str, spacing: float, k: int = 3) -> np.ndarray:
    n = len(pos)
    dist = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
    if layout in ("line", "grid"):
        adj = (dist > 0) & (dist <= spacing * 1.01)
    else:
        adj = np.zeros((n, n), dtype=bool)
        for i in range(n):
            order = np.argsort(dist[i], kind="stable")
            adj[i, order[1:k + 1]] = True
        adj |= adj.T
    return adj


def generate_network(
    n_cameras: int,
    layout: str = "grid",
    spacing: float = 62.0,
    seed: int = 0,
    *,
    frame_rate: float = 1.0,
    fov_half_len: float = 50.0,
    exit_prob: float = 0.05,
    walking_speed: float = WALKING_SPEED,
    travel_cv: float = TRAVEL_CV,
    entry_cameras: Optional[Sequence[int]] = None,
) -> tuple[CameraNetwork, MobilityGraph]:
    """Place cameras and connect spatial neighbours with a random mobility graph.

    Edge probabilities are uniform(0.5, 1.5) weights normalised per source to
    ``1 - exit_prob``; travel time mean is distance / walking speed. Entities
    enter anywhere unless ``entry_cameras`` restricts them to a few gates.
    """
    if n_cameras < 2:
        raise ContractError("need at least two cameras")
    rng = np.random.default_rng([seed, 0x6E6574])
    pos = _layout_positions(n_cameras, layout, spacing, rng)
    adj = _adjacency(pos, layout, spacing)
    dist = np.linalg.norm(pos[:, None] - pos[None], axis=-1)

    edges: dict[tuple[int, int], Edge] = {}
    exits = []
    for s in range(n_cameras):
        nbrs = np.flatnonzero(adj[s])
        if len(nbrs) == 0:
            exits.append(1.0)
            continue
        w = rng.uniform(0.5, 1.5, size=len(nbrs))
        w = w / w.sum() * (1.0 - exit_prob)
        for d, p in zip(nbrs, w):
            mean = float(dist[s, d] / walking_speed)
            edges[(s, int(d))] = Edge(float(p), mean, travel_cv * mean)
        exits.append(float(exit_prob))
    entry = rng.uniform(0.5, 1.5, size=n_cameras)
    if entry_cameras is not None:
        gates = np.zeros(n_cameras, dtype=bool)
        gates[list(entry_cameras)] = True
        if not gates.any():
            raise ContractError("entry_cameras must name at least one camera")
        entry = np.where(gates, entry, 0.0)
    entry = entry / entry.sum()

    cams = tuple(Camera(i, (float(x), float(y)), fov_half_len) for i, (x, y) in enumerate(pos))
    graph = MobilityGraph(n_cameras, edges, exits, [float(x) for x in entry])
    return CameraNetwork(cams, frame_rate), graph


def n_frames_for(config: SimulationConfig, network: CameraNetwork) -> int:
    return int(round(config.duration * network.frame_rate))


def _rngs(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    truth_ss, feat_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(truth_ss), np.random.default_rng(feat_ss)


def generate_truth(network: CameraNetwork, graph: MobilityGraph, config: SimulationConfig,
                   forced_paths: Optional[dict[int, Sequence[int]]] = None) -> list[LabeledDetection]:
    """One label per frame of every visit of every entity, sorted by (frame, camera, entity).

    ``forced_paths`` pins an entity's camera sequence (it exits after the last
    camera); travel and dwell times are still drawn from the graph/config.
    """
    graph.validate(tol=1e-6)
    fps = network.frame_rate
    n_frames = n_frames_for(config, network)
    rng, _ = _rngs(config.seed)
    P = graph.transition_matrix()
    n = graph.n_cameras
    entry = np.asarray(graph.entry_weights)
    cams: list[int] = []
    frs: list[int] = []
    ents: list[int] = []

    for e in range(config.n_entities):
        t0 = rng.uniform(0.0, config.duration)
        path = list(forced_paths[e]) if forced_paths and e in forced_paths else None
        cam = path.pop(0) if path else int(rng.choice(n, p=entry))
        f = int(t0 * fps)
        while f < n_frames:
            dwell = max(1, int(round(rng.normal(config.dwell_mean, 0.25 * config.dwell_mean) * fps)))
            last = min(f + dwell, n_frames) - 1
            cams.extend([cam] * (last - f + 1))
            frs.extend(range(f, last + 1))
            ents.extend([e] * (last - f + 1))
            if path is not None:
                if not path:
                    break
                nxt = path.pop(0)
            else:
                nxt = int(rng.choice(n + 1, p=P[cam]))
                if nxt == n:
                    break
            edge = graph.edges.get((cam, nxt))
            mean, std = (edge.travel_mean, edge.travel_std) if edge else (30.0, 0.0)
            travel = max(1, int(round(rng.normal(mean, std) * fps)))
            f = last + travel
            cam = nxt

    order = np.lexsort((ents, cams, frs))
    return [LabeledDetection(int(cams[i]), int(frs[i]), int(ents[i])) for i in order]


def _unit(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    v = rng.normal(size=(n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def synthesize_detections(truth: Sequence[LabeledDetection], config: SimulationConfig,
                          network: CameraNetwork) -> DetectionStreams:
    """Turn ground-truth sightings into a noisy detection stream.

    Each entity owns a unit-norm latent feature; detections add gaussian noise,
    drop with ``miss_prob``, and distractors arrive Poisson(``distractor_rate``)
    per camera frame.
    """
    _, rng = _rngs(config.seed)
    n_frames = n_frames_for(config, network)
    n_cams = network.n_cameras
    dim = config.feature_dim
    latents = _unit(rng, max(config.n_entities, 1), dim)

    t_cam = np.array([t.camera for t in truth], dtype=np.int64)
    t_frame = np.array([t.frame for t in truth], dtype=np.int64)
    t_ent = np.array([t.entity for t in truth], dtype=np.int64)
    keep = rng.random(len(truth)) >= config.miss_prob
    t_cam, t_frame, t_ent = t_cam[keep], t_frame[keep], t_ent[keep]
    feats = latents[t_ent] if len(t_ent) else np.zeros((0, dim))
    if config.feature_noise_sigma > 0:
        feats = feats + config.feature_noise_sigma * rng.normal(size=feats.shape)

    counts = rng.poisson(config.distractor_rate, size=(n_frames, n_cams)) if config.distractor_rate > 0 \
        else np.zeros((n_frames, n_cams), dtype=np.int64)
    d_frame, d_cam = np.nonzero(counts)
    reps = counts[d_frame, d_cam]
    d_frame = np.repeat(d_frame, reps)
    d_cam = np.repeat(d_cam, reps)
    if config.persistent_distractors > 0:
        pool = _unit(rng, config.persistent_distractors, dim)
        d_feat = pool[rng.integers(0, config.persistent_distractors, size=len(d_frame))]
        if config.feature_noise_sigma > 0:
            d_feat = d_feat + config.feature_noise_sigma * rng.normal(size=d_feat.shape)
    else:
        d_feat = _unit(rng, len(d_frame), dim)

    frame = np.concatenate([t_frame, d_frame])
    camera = np.concatenate([t_cam, d_cam])
    truth_ids = np.concatenate([t_ent, np.full(len(d_frame), -1, dtype=np.int64)])
    features = np.vstack([feats, d_feat]) if len(frame) else np.zeros((0, dim))
    # ids follow (frame, camera, entity-before-distractor) order
    tie = np.where(truth_ids < 0, np.iinfo(np.int64).max, truth_ids)
    order = np.lexsort((np.arange(len(frame)), tie, camera, frame))
    det_id = np.empty(len(frame), dtype=np.int64)
    det_id[order] = np.arange(len(frame))
    return DetectionStreams(frame, camera, det_id, features, truth_ids, n_cams, n_frames)


def entity_latents(config: SimulationConfig) -> np.ndarray:
    """The noiseless per-entity features used by :func:`synthesize_detections`."""
    _, rng = _rngs(config.seed)
    return _unit(rng, max(config.n_entities, 1), config.feature_dim)


def make_queries(streams: DetectionStreams, n_queries: int, seed: int = 0, *,
                 max_frame: Optional[int] = None, min_detections: int = 1) -> list[QuerySpec]:
    """Queries start from each chosen entity's first detection in the stream."""
    ent = streams.truth
    has = ent >= 0
    uniq, first_row, counts = np.unique(ent[has], return_index=True, return_counts=True)
    rows = np.flatnonzero(has)[first_row]
    ok = counts >= min_detections
    if max_frame is not None:
        ok &= streams.frame[rows] <= max_frame
    uniq, rows = uniq[ok], rows[ok]
    rng = np.random.default_rng([seed, 0x7175])
    pick = np.sort(rng.choice(len(uniq), size=min(n_queries, len(uniq)), replace=False))
    out = []
    for qid, i in enumerate(pick):
        r = rows[i]
        out.append(QuerySpec(streams.features[r].copy(), int(streams.camera[r]), int(streams.frame[r]),
                             int(uniq[i]), qid))
    return out
