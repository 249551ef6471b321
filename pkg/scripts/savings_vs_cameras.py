"""Savings factor of a pruning scheme as the grid network grows."""
import argparse

from rexcam.bench import ScenarioConfig, SuiteConfig, run_benchmark
from rexcam.simulator import SimulationConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cameras", type=int, nargs="+", default=[8, 16, 32, 64, 128])
    ap.add_argument("--scheme", default="S5-T2")
    ap.add_argument("--entities", type=int, default=300)
    ap.add_argument("--duration", type=float, default=1200)
    ap.add_argument("--queries", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print("n_cameras,scheme,savings_factor,recall,precision,mean_delay_s")
    for n in args.cameras:
        cfg = ScenarioConfig(n_cameras=n, n_queries=args.queries,
                             sim=SimulationConfig(n_entities=args.entities, duration=args.duration, seed=args.seed))
        r = run_benchmark(SuiteConfig(cfg, schemes=(args.scheme,)))[0]
        print(f"{n},{r.scheme},{r.savings_factor:.3f},{r.recall:.3f},{r.precision:.3f},{r.mean_delay_s:.2f}")


if __name__ == "__main__":
    main()
