"""Command line: generate, index, train, test, matrix, report."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import glob
import logging
import os
import sys

import numpy as np

from . import harness
from .episode import Agent, run_episode, sequential_activations
from .harness import DYNAMICS, ROLE_TEST, ROLE_TRAIN, cumulative_gain, load_config, rng_for
from .lob_core import read_log, write_log
from .q_agent import load_qtable, save_qtable
from .synth_data import generate_day, summarize
from .time_travel import cached_index

log = logging.getLogger("lobtravel")


def _overrides(pairs) -> dict:
    out = {}
    for item in pairs or ():
        if "=" not in item:
            raise SystemExit(f"override must be key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _config(args) -> harness.ExperimentConfig:
    ov = _overrides(args.set)
    if args.config:
        return load_config(args.config, ov)
    return harness.config_from_items(ov)


def cmd_generate(args) -> int:
    cfg = _config(args)
    os.makedirs(args.out, exist_ok=True)
    for d in range(cfg.synthetic_days):
        gen = dataclasses.replace(cfg.gen, seed=harness.day_seed(cfg.master_seed, d), day_id=f"SYN{d}")
        day = generate_day(gen)
        path = os.path.join(args.out, f"{gen.day_id}.csv")
        write_log(day, path)
        s = summarize(day)
        tight = s.spread_histogram.get(1, 0.0)
        print(f"{path}: {len(day)} events, spread=1 on {tight:.1%} of indices")
    return 0


def cmd_index(args) -> int:
    cfg = _config(args)
    day = read_log(args.log)
    index = cached_index(day, cfg.jump, args.cache_dir)
    print(f"{day.day_id}: {index.n_events} events, max spread {index.max_spread}, "
          f"{len(index.by_spread)} spread keys")
    return 0


def _index_for(dynamics: str, day, cfg, cache_dir):
    return cached_index(day, cfg.jump, cache_dir or cfg.index_cache_dir) if dynamics == "jump" else None


def cmd_train(args) -> int:
    cfg = _config(args)
    day = read_log(args.log)
    index = _index_for(args.dynamics, day, cfg, args.cache_dir)
    os.makedirs(args.out, exist_ok=True)
    n = ("seq", "jump").index(args.dynamics)
    rows = []
    for i in range(cfg.n_agents):
        agent = Agent.fresh(rng_for(cfg.master_seed, harness.ROLE_QINIT, args.day_number, n, i), cfg.agent)
        res = run_episode(day, index, agent, DYNAMICS[args.dynamics],
                          rng_for(cfg.master_seed, ROLE_TRAIN, args.day_number, n, i),
                          cfg.t_train, cfg.agent, cfg.jump, cfg.latency)
        save_qtable(os.path.join(args.out, f"{day.day_id}_{args.dynamics}_{i:03d}.npz"), agent.q, agent.schedule)
        g = cumulative_gain(res.rewards)
        rows.append((i, len(res.rewards), float(g[-1]) if len(g) else float("nan"), res.consistency))
    with open(os.path.join(args.out, "training.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["agent", "updates", "final_gain", "consistency"])
        for i, u, g, c in rows:
            w.writerow([i, u, repr(g), repr(c)])
    print(f"trained {len(rows)} agents on {day.day_id} ({args.dynamics}); checkpoints in {args.out}")
    return 0


def cmd_test(args) -> int:
    cfg = _config(args)
    day = read_log(args.log)
    index = _index_for(args.dynamics, day, cfg, args.cache_dir)
    paths = sorted(glob.glob(os.path.join(args.checkpoints, "*.npz")))
    if not paths:
        raise SystemExit(f"no checkpoints in {args.checkpoints}")
    budget = cfg.t_test or sequential_activations(day, cfg.latency)
    rewards = []
    for i, path in enumerate(paths):
        q, sched = load_qtable(path)
        res = run_episode(day, index, Agent(q, sched), DYNAMICS[args.dynamics],
                          rng_for(cfg.master_seed, ROLE_TEST, args.day_number, i), budget, cfg.agent, cfg.jump,
                          cfg.latency, learn=not cfg.frozen_test)
        rewards.append(res.rewards)
    acc = harness._CurveAccumulator()
    for r in rewards:
        acc.add(r)
    c = acc.curve()
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("update,mean_gain,std,sample_count,snr\n")
        for u, m, s, r in zip(c.updates.tolist(), c.mean.tolist(), c.std.tolist(), c.snr.tolist()):
            fh.write(f"{u},{m!r},{s!r},{c.sample_count},{r!r}\n")
    print(f"tested {len(paths)} checkpoints on {day.day_id} ({args.dynamics}); {len(c.updates)} updates -> {args.out}")
    return 0


def cmd_matrix(args) -> int:
    cfg = _config(args)
    res = harness.run_matrix(cfg, args.out, progress=log.info)
    for a, b, same, m, s, n in harness.summary_table(res.cells):
        print(f"{a}->{b} {'same' if same else 'cross'}: G={m:.4g} ({s:.2g}) n={n}")
    return 0


def cmd_report(args) -> int:
    cells = harness.read_matrix_csv(args.matrix)
    scale = args.tick_size / 2 if args.tick_size else 1.0
    unit = "currency" if args.tick_size else "half-tick*shares"
    print(f"{'train->test':<12}{'days':<7}{'final gain':>14}{'std':>12}{'final snr':>11}{'n':>6}   [{unit}]")
    for a, b, same, m, s, n in harness.summary_table(cells):
        snr = cells[(a, b, same)].snr[-1]
        print(f"{a + '->' + b:<12}{'same' if same else 'cross':<7}{m * scale:>14.5g}{s * scale:>12.3g}"
              f"{snr:>11.3g}{n:>6}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lobtravel", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")

    sp = sub.add_parser("generate", help="write synthetic event-log days")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("index", help="build or refresh the jump index cache for a day")
    common(sp)
    sp.add_argument("--log", required=True)
    sp.add_argument("--cache-dir", required=True)
    sp.set_defaults(func=cmd_index)

    for name, func in (("train", cmd_train), ("test", cmd_test)):
        sp = sub.add_parser(name, help=f"{name} a cohort on one day")
        common(sp)
        sp.add_argument("--log", required=True)
        sp.add_argument("--dynamics", choices=sorted(DYNAMICS), default="seq")
        sp.add_argument("--day-number", type=int, default=0, help="seed-stream day number")
        sp.add_argument("--cache-dir")
        if name == "train":
            sp.add_argument("--out", required=True, help="checkpoint directory")
        else:
            sp.add_argument("--checkpoints", required=True)
            sp.add_argument("--out", required=True, help="curve CSV")
        sp.set_defaults(func=func)

    sp = sub.add_parser("matrix", help="run the train/test matrix")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_matrix)

    sp = sub.add_parser("report", help="summarise a matrix CSV")
    sp.add_argument("--matrix", required=True)
    sp.add_argument("--tick-size", type=float, default=0.0, help="convert gains to currency")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    np.seterr(all="ignore")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
