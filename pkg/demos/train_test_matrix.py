"""Train agents under one dynamics and test them under the other.

Cohorts are trained on every synthetic day with sequential replay and with
time travel.  Each trained agent is then tested on every day under both
dynamics, which gives eight cells (four pairs, same day or cross day).
The default sizes here are small; see README for the full-size settings.
"""

import sys
import tempfile

from lobtravel.harness import ExperimentConfig, run_matrix, summary_table
from lobtravel.synth_data import GenConfig


def main(n_days=3, n_agents=8, t_train=4000):
    cfg = ExperimentConfig(synthetic_days=n_days, n_agents=n_agents, t_train=t_train,
                           gen=GenConfig(n_events=60_000))
    with tempfile.TemporaryDirectory() as out:
        res = run_matrix(cfg, out, progress=lambda msg: print("  " + msg))
        print(f"\nwrote matrix.csv and manifest.txt to {out} (removed on exit)")

    tick = cfg.gen.tick_size
    print(f"\n{'train->test':>12s} {'day':>6s} {'final gain':>11s} {'std':>8s} {'runs':>5s}   (currency)")
    for a, b, same, mean, std, n in summary_table(res.cells):
        # rewards are in half ticks x shares
        print(f"{a + '->' + b:>12s} {'same' if same else 'cross':>6s} {mean * tick / 2:11.5f} "
              f"{std * tick / 2:8.5f} {n:5d}")

    print("\nconsistency per dynamics:")
    for (phase, dyn), frac in sorted(res.consistency.items()):
        print(f"  {phase:5s} {dyn:4s} {frac:.3f}")


if __name__ == "__main__":
    main(*map(int, sys.argv[1:]))
