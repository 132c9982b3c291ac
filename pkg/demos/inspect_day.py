"""Generate a synthetic trading day, write it to CSV and look at what is in it."""

import sys
import tempfile
from pathlib import Path

from lobtravel.lob_core import mid_and_spread, read_log, write_log
from lobtravel.synth_data import GenConfig, generate_day, summarize


def main(n_events=50_000, seed=3):
    log = generate_day(GenConfig(seed=seed, n_events=n_events, day_id="DEMO"))
    print(f"day {log.day_id}: {len(log)} events, tick size {log.tick_size}")

    s = summarize(log)
    print("\nevent types (kind/level/side):")
    for label, count in s.event_type_counts.items():
        print(f"  {label:12s} {count:7d}")

    print("\nspread distribution (ticks -> share of time):")
    for ticks, frac in s.spread_histogram.items():
        print(f"  {ticks:3d}  {frac:.3f}")

    # a handful of books along the day
    print("\nbook snapshots:")
    for t in (0, len(log) // 4, len(log) // 2, len(log)):
        b = log.state(t)
        mid2, spread = mid_and_spread(b)  # mid in half ticks, spread in ticks
        print(f"  t={t:6d}  bid {b.b1}x{b.vb1}  ask {b.c1}x{b.vs1}  "
              f"mid {mid2 * log.tick_size / 2:.4f}  spread {spread} ticks")

    # the CSV format round-trips exactly
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "DEMO.csv"
        write_log(log, path)
        back = read_log(path)
        same = (back.states == log.states).all()
        print(f"\nwrote {path.stat().st_size / 1e6:.1f} MB, re-read states identical: {same}")


if __name__ == "__main__":
    main(*map(int, sys.argv[1:]))
