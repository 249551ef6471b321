"""Command-line entry point: simulate, profile, track, detect, bench, rerun.

Every command writes its outputs plus a ``manifest.json`` into ``--out``;
``rexcam rerun <manifest>`` replays the recorded command line.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from pathlib import Path
from typing import Optional

from . import __version__
from .bench import ScenarioConfig, SuiteConfig, build_scenario, run_benchmark, scheme_name
from .core import (ContractError, DetectionStreams, LabeledDetection, QuerySpec, atomic_write_text, dumps,
                   read_jsonl, write_jsonl)
from .detection import brute_force_detect, detect_identity, estimate_entry_priors
from .metrics import format_csv, score_results, with_savings
from .model import ModelFormatError, filter_agreement, load_model, model_to_json, validate_model, with_thresholds
from .profiler import build_model, extract_transitions, sample_labels, sampled_gap
from .simulator import CameraNetwork, entity_latents
from .tracking import ReplayMode, TrackingConfig, run_workload

EXIT_OK, EXIT_INVALID, EXIT_USAGE = 0, 1, 2


class CommandError(Exception):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Run:
    """Collects inputs / outputs of one command and writes its manifest."""

    def __init__(self, args, argv: list[str]):
        self.args = args
        self.argv = argv
        self.out = Path(args.out)
        self.inputs: dict[str, str] = {}
        self.outputs: dict[str, str] = {}
        self.t0 = time.time()

    def input(self, path) -> Path:
        p = Path(path).resolve()
        if not p.exists():
            raise CommandError(f"input file not found: {p}")
        self.inputs[str(p)] = _sha256(p)
        return p

    def write(self, name: str, text: str) -> None:
        path = self.out / name
        atomic_write_text(path, text)
        self.outputs[name] = _sha256(path)

    def write_records(self, name: str, records) -> None:
        path = self.out / name
        write_jsonl(path, records)
        self.outputs[name] = _sha256(path)

    def finish(self, config: dict) -> None:
        manifest = {
            "command": self.args.command,
            "argv": self.argv,
            "seed": self.args.seed,
            "version": __version__,
            "config_hash": hashlib.sha256(dumps(config).encode()).hexdigest(),
            "config": config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "wall_clock_s": round(time.time() - self.t0, 3),
        }
        atomic_write_text(self.out / "manifest.json", json.dumps(manifest, sort_keys=True, indent=1) + "\n")


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _load_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CommandError(f"{path}: {exc.msg}") from None


def _data_path(args, explicit: Optional[str], name: str) -> str:
    if explicit:
        return explicit
    if args.data:
        return str(Path(args.data) / name)
    raise CommandError(f"need --data or an explicit path for {name}")


# -- commands -----------------------------------------------------------------

def cmd_simulate(args, run: Run) -> int:
    doc = _load_json(run.input(args.config)) if args.config else {}
    cfg = ScenarioConfig.from_dict(doc)
    if args.seed is not None:
        cfg.sim.seed = args.seed
    args.seed = cfg.sim.seed
    sc = build_scenario(cfg)
    run.write_records("detections.jsonl", (sc.streams.event(i).to_json() for i in range(len(sc.streams))))
    run.write_records("truth.jsonl", (t.to_json() for t in sc.truth))
    run.write_records("queries.jsonl", (q.to_json() for q in sc.queries))
    network = {"network": sc.network.to_json(), "graph": sc.graph.to_json(),
               "n_frames": sc.streams.n_frames, "scenario": cfg.to_dict()}
    run.write("network.json", _json(network))
    print(f"simulated {cfg.n_cameras} cameras, {cfg.sim.n_entities} entities, "
          f"{len(sc.streams)} detections, {len(sc.queries)} queries")
    run.finish({"scenario": cfg.to_dict()})
    return EXIT_OK


def _read_network(run: Run, path: str) -> tuple[CameraNetwork, int, dict]:
    doc = _load_json(run.input(path))
    try:
        return CameraNetwork.from_json(doc["network"]), int(doc["n_frames"]), doc
    except KeyError as exc:
        raise CommandError(f"network file lacks {exc.args[0]!r}") from None


def _read_truth(run: Run, path: str) -> list[LabeledDetection]:
    return [LabeledDetection.from_json(d) for d in read_jsonl(run.input(path))]


def cmd_profile(args, run: Run) -> int:
    network, _, doc = _read_network(run, _data_path(args, args.network, "network.json"))
    truth = _read_truth(run, _data_path(args, args.truth, "truth.jsonl"))
    if not truth:
        raise CommandError("truth file holds no labels")
    fps = network.frame_rate
    gap = max(1, int(round(args.gap_seconds * fps)))
    s, t = args.s / 100, args.t / 100
    full = build_model(extract_transitions(truth, gap), network.n_cameras, s, t, args.bin_width)
    model = full
    report: dict = {"scheme": scheme_name(s, t), "n_labels": len(truth)}
    if args.sample:
        labels = sample_labels(truth, args.sample)
        if not labels:
            raise CommandError("sampling left no labels")
        model = build_model(extract_transitions(labels, sampled_gap(gap, args.sample)),
                            network.n_cameras, s, t, args.bin_width)
        horizon = int(round(90 * fps))
        report["sample"] = args.sample
        report["filter_agreement_vs_full"] = filter_agreement(model, full, horizon)
        print(f"sampled {args.sample}: filter agreement with full model "
              f"{report['filter_agreement_vs_full']:.4f}")
    problems = validate_model(model)
    report["validation"] = "pass" if not problems else problems
    run.write("model.json", _json(model_to_json(model)))
    run.write("profile_report.json", _json(report))
    print(f"row-sum validation: {'pass' if not problems else 'FAIL'}")
    for p in problems:
        print(f"  {p}", file=sys.stderr)
    run.finish({"s": args.s, "t": args.t, "bin_width": args.bin_width, "sample": args.sample,
                "gap_seconds": args.gap_seconds})
    return EXIT_OK if not problems else EXIT_INVALID


def _load_streams(run: Run, args, n_cameras: int, n_frames: int) -> DetectionStreams:
    return DetectionStreams.from_jsonl(run.input(_data_path(args, args.streams, "detections.jsonl")),
                                       n_cameras, n_frames)


def _load_queries(run: Run, args) -> list[QuerySpec]:
    qs = [QuerySpec.from_json(d) for d in read_jsonl(run.input(_data_path(args, args.queries, "queries.jsonl")))]
    if args.query_id is not None:
        qs = [q for q in qs if q.query_id == args.query_id]
        if not qs:
            raise CommandError(f"no query with id {args.query_id}")
    return qs


def _load_model(run: Run, args, n_cameras: int):
    model = load_model(run.input(_data_path(args, args.model, "model.json")))
    if model.n_cameras != n_cameras:
        raise CommandError(f"model covers {model.n_cameras} cameras, network has {n_cameras}")
    return model


def cmd_track(args, run: Run) -> int:
    network, n_frames, _ = _read_network(run, _data_path(args, args.network, "network.json"))
    streams = _load_streams(run, args, network.n_cameras, n_frames)
    model = _load_model(run, args, network.n_cameras)
    queries = _load_queries(run, args)
    mode = args.scheme.replace("-", "_")
    s = t = None
    if mode == "rexcam":
        s = args.s / 100 if args.s is not None else model.s_thresh
        t = args.t / 100 if args.t is not None else model.t_thresh
        model = with_thresholds(model, s, t)
    fps = network.frame_rate
    replay = args.replay != "off"
    cfg = TrackingConfig.for_frame_rate(
        fps, args.match_thresh, mode=mode, replay=replay,
        replay_mode=ReplayMode.parse(args.replay) if replay else ReplayMode(),
        continuation=max(1, int(round(args.gap_seconds * fps))), alpha=args.alpha)
    results = run_workload(streams, model, queries, cfg, network=network)
    run.write("results.json", _json([r.to_json() for r in results]))
    name = scheme_name(s, t) if mode == "rexcam" else mode
    status = EXIT_OK
    if args.truth:
        truth = _read_truth(run, args.truth)
        report = score_results(results, truth, gap_thresh=cfg.continuation, frame_rate=fps,
                               scheme=name, s_thresh=s, t_thresh=t)
        if args.compare_baseline:
            base_cfg = TrackingConfig.for_frame_rate(fps, args.match_thresh, mode="baseline_all",
                                                     continuation=cfg.continuation, alpha=args.alpha)
            base = score_results(run_workload(streams, model, queries, base_cfg, network=network), truth,
                                 gap_thresh=cfg.continuation, frame_rate=fps, scheme="baseline_all")
            with_savings(report, base)
        _write_reports(run, args, [report], "report")
        print(format_csv([report]), end="")
    print(f"{name}: {len(results)} queries, {sum(r.frames_processed for r in results)} camera-frames processed")
    run.finish({"scheme": name, "replay": args.replay, "match_thresh": args.match_thresh,
                "alpha": args.alpha, "gap_seconds": args.gap_seconds, "query_id": args.query_id,
                "compare_baseline": args.compare_baseline})
    return status


def _write_reports(run: Run, args, reports, stem: str) -> None:
    if args.format == "json":
        rows = [{k: (None if isinstance(v, float) and math.isinf(v) else v) for k, v in r.row().items()}
                for r in reports]
        run.write(f"{stem}.json", _json(rows))
    else:
        run.write(f"{stem}.csv", format_csv(reports))


def cmd_detect(args, run: Run) -> int:
    network, n_frames, doc = _read_network(run, _data_path(args, args.network, "network.json"))
    streams = _load_streams(run, args, network.n_cameras, n_frames)
    model = _load_model(run, args, network.n_cameras)
    truth = _read_truth(run, _data_path(args, args.truth, "truth.jsonl"))
    priors = estimate_entry_priors(truth)
    window = max(1, int(round(args.window_seconds * network.frame_rate)))
    if args.latent:
        scen = ScenarioConfig.from_dict(doc["scenario"])
        lat = entity_latents(scen.sim)
        targets = [(int(e), lat[int(e)]) for e in args.latent]
    else:
        targets = [(q.query_id, q.query_feature) for q in _load_queries(run, args)]
    out = []
    for key, feat in targets:
        if args.brute_force:
            rep = brute_force_detect(streams, feat, args.match_thresh, window)
        else:
            rep = detect_identity(streams, model, priors, args.theta, feat, args.match_thresh, window)
        out.append({"target": key, **rep.to_json()})
    run.write("detect.json", _json(out))
    found = sum(r["found"] for r in out)
    print(f"detect: {found}/{len(out)} found, {sum(r['cells_searched'] for r in out)} cells searched")
    run.finish({"theta": args.theta, "match_thresh": args.match_thresh, "window_seconds": args.window_seconds,
                "brute_force": args.brute_force, "latent": args.latent, "query_id": args.query_id})
    return EXIT_OK


def cmd_bench(args, run: Run) -> int:
    doc = _load_json(run.input(args.config)) if args.config else {}
    suite = SuiteConfig.from_dict(doc)
    if args.seed is not None:
        suite.scenario.sim.seed = args.seed
    args.seed = suite.scenario.sim.seed
    reports = run_benchmark(suite)
    _write_reports(run, args, reports, "bench")
    print(format_csv(reports), end="")
    run.finish({"suite": suite.to_dict()})
    return EXIT_OK


def cmd_rerun(args) -> int:
    manifest = _load_json(Path(args.manifest))
    argv = list(manifest["argv"])
    if args.out is not None:
        argv = _replace_out(argv, args.out)
    for path, digest in manifest.get("inputs", {}).items():
        p = Path(path)
        if not p.exists() or _sha256(p) != digest:
            print(f"input changed since the manifest was written: {path}", file=sys.stderr)
            return EXIT_INVALID
    return main(argv)


def _replace_out(argv: list[str], out: str) -> list[str]:
    res, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--out":
            skip = True
            continue
        if a.startswith("--out="):
            continue
        res.append(a)
    return ["--out", out] + res


# -- argument parsing ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rexcam", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=None, help="random seed (default: config value, else 0)")
    p.add_argument("--out", default=None, help="output directory (default: current directory)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="generate a network, trajectories, detections and queries")
    sp.add_argument("--config", help="scenario JSON (fields of ScenarioConfig)")

    def data_args(q, streams=True, queries=True, model=True):
        q.add_argument("--data", help="directory written by `simulate`")
        q.add_argument("--network")
        q.add_argument("--truth")
        if streams:
            q.add_argument("--streams")
        if queries:
            q.add_argument("--queries")
            q.add_argument("--query-id", type=int)
        if model:
            q.add_argument("--model")

    pp = sub.add_parser("profile", help="build a correlation model from truth labels")
    data_args(pp, streams=False, queries=False, model=False)
    pp.add_argument("--s", type=float, default=5, help="spatial threshold in percent")
    pp.add_argument("--t", type=float, default=2, help="temporal threshold in percent")
    pp.add_argument("--bin-width", type=int, default=1)
    pp.add_argument("--sample", help="keep ratio such as 4/8")
    pp.add_argument("--gap-seconds", type=float, default=2.0)

    pt = sub.add_parser("track", help="run tracking queries")
    data_args(pt)
    pt.add_argument("--scheme", choices=("rexcam", "baseline-all", "baseline-geo"), default="rexcam")
    pt.add_argument("--s", type=float, help="spatial threshold in percent")
    pt.add_argument("--t", type=float, help="temporal threshold in percent")
    pt.add_argument("--replay", default="realtime", help="realtime | skip2 | ff2 | off")
    pt.add_argument("--match-thresh", type=float, default=0.7)
    pt.add_argument("--alpha", type=float, default=1.0)
    pt.add_argument("--gap-seconds", type=float, default=2.0)
    pt.add_argument("--compare-baseline", action="store_true", help="also run baseline-all for savings")

    pd = sub.add_parser("detect", help="identity detection with a score threshold")
    data_args(pd)
    pd.add_argument("--theta", type=float, default=0.0)
    pd.add_argument("--match-thresh", type=float, default=0.7)
    pd.add_argument("--window-seconds", type=float, default=10.0)
    pd.add_argument("--latent", type=int, nargs="*", help="search for these entities' noiseless features")
    pd.add_argument("--brute-force", action="store_true")

    pb = sub.add_parser("bench", help="scheme x threshold benchmark grid")
    pb.add_argument("--config", help="suite JSON (fields of SuiteConfig)")

    pr = sub.add_parser("rerun", help="re-execute a command from its manifest")
    pr.add_argument("manifest")
    return p


def _normalise_argv(argv: list[str]) -> list[str]:
    """Make file arguments absolute so a manifest replays from any directory."""
    path_flags = {"--config", "--data", "--network", "--truth", "--streams", "--queries", "--model", "--out"}
    res = []
    i = 0
    while i < len(argv):
        a = argv[i]
        if a in path_flags and i + 1 < len(argv):
            res += [a, str(Path(argv[i + 1]).resolve())]
            i += 2
            continue
        flag, eq, val = a.partition("=")
        if eq and flag in path_flags:
            res.append(f"{flag}={Path(val).resolve()}")
        else:
            res.append(a)
        i += 1
    return res


COMMANDS = {"simulate": cmd_simulate, "profile": cmd_profile, "track": cmd_track,
            "detect": cmd_detect, "bench": cmd_bench}


def main(argv: Optional[list[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    if args.command == "rerun":
        return cmd_rerun(args)
    if args.out is None:
        args.out = "."
    run = Run(args, _normalise_argv(argv))
    try:
        return COMMANDS[args.command](args, run)
    except (CommandError, ContractError, ModelFormatError, ValueError) as exc:
        print(f"rexcam {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
