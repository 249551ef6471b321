"""Scenario construction and the scheme x threshold benchmark grid."""
from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Sequence

from .core import ContractError, DetectionStreams, LabeledDetection, QuerySpec, calibrate_match_threshold
from .metrics import EvalReport, VisitIndex, score_results, with_savings
from .model import SpatioTemporalModel, with_thresholds
from .profiler import build_model, extract_transitions
from .simulator import (CameraNetwork, MobilityGraph, SimulationConfig, generate_network, generate_truth,
                        make_queries, n_frames_for, synthesize_detections)
from .tracking import ReplayMode, TrackingConfig, run_workload

_SCHEME = re.compile(r"^S(\d+(?:\.\d+)?)-T(\d+(?:\.\d+)?)$")


def parse_scheme(name: str) -> tuple[str, Optional[float], Optional[float]]:
    """'S5-T2' -> ('rexcam', 0.05, 0.02); baselines carry no thresholds."""
    key = name.strip().replace("-", "_").lower()
    if key in ("baseline_all", "baseline_geo"):
        return key, None, None
    m = _SCHEME.match(name.strip())
    if not m:
        raise ContractError(f"unknown scheme {name!r}")
    return "rexcam", float(m.group(1)) / 100, float(m.group(2)) / 100


def scheme_name(s_thresh: float, t_thresh: float) -> str:
    return f"S{s_thresh * 100:g}-T{t_thresh * 100:g}"


@dataclass
class ScenarioConfig:
    n_cameras: int = 8
    layout: str = "grid"
    spacing: float = 62.0
    exit_prob: float = 0.05
    frame_rate: float = 1.0
    network_seed: int = 0
    entry_cameras: Optional[list[int]] = None
    sim: SimulationConfig = field(default_factory=SimulationConfig)
    profile_seed: Optional[int] = None  # None profiles on the evaluated truth itself
    n_queries: int = 100
    query_horizon: float = 0.5  # queries start within this leading share of the stream
    match_thresh: Optional[float] = 0.7  # None calibrates on the stream
    gap_seconds: float = 2.0

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ContractError(f"unknown scenario config field(s): {sorted(unknown)}")
        if "sim" in d:
            d["sim"] = SimulationConfig.from_dict(d["sim"])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def gap_thresh(self) -> int:
        return max(1, int(round(self.gap_seconds * self.frame_rate)))


@dataclass
class Scenario:
    config: ScenarioConfig
    network: CameraNetwork
    graph: MobilityGraph
    truth: list[LabeledDetection]
    streams: DetectionStreams
    model: SpatioTemporalModel
    queries: list[QuerySpec]
    match_thresh: float
    index: VisitIndex

    def tracking_config(self, scheme: str = "S5-T2", **kw) -> tuple[TrackingConfig, SpatioTemporalModel]:
        mode, s, t = parse_scheme(scheme)
        model = self.model if s is None else with_thresholds(self.model, s, t)
        cfg = TrackingConfig.for_frame_rate(self.network.frame_rate, self.match_thresh, mode=mode,
                                            continuation=self.config.gap_thresh, **kw)
        return cfg, model


def mean_gallery_size(streams: DetectionStreams) -> float:
    """Average number of detections across the whole network per frame."""
    return max(1.0, len(streams) / streams.n_frames)


def build_scenario(cfg: ScenarioConfig) -> Scenario:
    network, graph = generate_network(cfg.n_cameras, cfg.layout, cfg.spacing, cfg.network_seed,
                                      frame_rate=cfg.frame_rate, exit_prob=cfg.exit_prob,
                                      entry_cameras=cfg.entry_cameras)
    truth = generate_truth(network, graph, cfg.sim)
    streams = synthesize_detections(truth, cfg.sim, network)
    if cfg.profile_seed is None:
        history = truth
    else:
        history = generate_truth(network, graph, SimulationConfig.from_dict(
            {**cfg.sim.to_dict(), "seed": cfg.profile_seed}))
    model = build_model(extract_transitions(history, cfg.gap_thresh), cfg.n_cameras)
    horizon = int(cfg.query_horizon * n_frames_for(cfg.sim, network))
    queries = make_queries(streams, cfg.n_queries, seed=cfg.sim.seed, max_frame=horizon)
    thresh = cfg.match_thresh
    if thresh is None:
        thresh = calibrate_match_threshold(streams.features, [None if t < 0 else int(t) for t in streams.truth],
                                           seed=cfg.sim.seed, neg_weight=mean_gallery_size(streams))
    return Scenario(cfg, network, graph, truth, streams, model, queries, thresh,
                    VisitIndex(truth, cfg.gap_thresh))


def evaluate_scheme(sc: Scenario, scheme: str, *, workers: Optional[int] = None, **kw) -> tuple[EvalReport, list]:
    cfg, model = sc.tracking_config(scheme, **kw)
    results = run_workload(sc.streams, model, sc.queries, cfg, network=sc.network, workers=workers)
    _, s, t = parse_scheme(scheme)
    report = score_results(results, sc.truth, frame_rate=sc.network.frame_rate, scheme=scheme,
                           s_thresh=s, t_thresh=t, index=sc.index)
    return report, results


@dataclass
class SuiteConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    schemes: Sequence[str] = ("baseline_all", "baseline_geo", "S5-T2")
    replay: bool = True
    replay_mode: str = "realtime"

    @classmethod
    def from_dict(cls, d: dict) -> "SuiteConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ContractError(f"unknown suite config field(s): {sorted(unknown)}")
        if "scenario" in d:
            d["scenario"] = ScenarioConfig.from_dict(d["scenario"])
        if "schemes" in d:
            d["schemes"] = tuple(d["schemes"])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schemes"] = list(self.schemes)
        return d


def run_benchmark(suite: SuiteConfig, *, scenario: Optional[Scenario] = None,
                  workers: Optional[int] = None) -> list[EvalReport]:
    """One report per requested scheme; savings are relative to the all-camera baseline."""
    for s in suite.schemes:
        parse_scheme(s)
    sc = scenario if scenario is not None else build_scenario(suite.scenario)
    mode = ReplayMode.parse(suite.replay_mode)
    base, _ = evaluate_scheme(sc, "baseline_all", workers=workers)
    reports = []
    for name in suite.schemes:
        if parse_scheme(name)[0] == "baseline_all":
            rep = base
        else:
            rep, _ = evaluate_scheme(sc, name, workers=workers, replay=suite.replay, replay_mode=mode)
        reports.append(with_savings(rep, base))
    return reports
