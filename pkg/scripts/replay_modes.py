"""Delay and replay work of realtime, skip and fast-forward replay on one scenario."""
import argparse

import numpy as np

from rexcam.bench import ScenarioConfig, build_scenario, evaluate_scheme
from rexcam.simulator import SimulationConfig
from rexcam.tracking import ReplayMode


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--modes", nargs="+", default=["realtime", "skip2", "ff2", "skip4", "ff4"])
    ap.add_argument("--scheme", default="S20-T20")
    ap.add_argument("--sigma", type=float, default=0.1)
    ap.add_argument("--distractor-rate", type=float, default=4.0)
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()
    sc = build_scenario(ScenarioConfig(sim=SimulationConfig(n_entities=300, duration=1200, seed=args.seed,
                                                            feature_noise_sigma=args.sigma,
                                                            distractor_rate=args.distractor_rate)))
    print("mode,mean_delay_s,replay_frames,replay_match_share,recall,precision")
    for mode in args.modes:
        r, res = evaluate_scheme(sc, args.scheme, replay_mode=ReplayMode.parse(mode))
        share = np.mean([any(m.was_replay for m in q.matches) for q in res])
        frames = sum(q.replay_frames_processed for q in res)
        print(f"{mode},{r.mean_delay_s:.2f},{frames},{share:.2f},{r.recall:.3f},{r.precision:.3f}")


if __name__ == "__main__":
    main()
