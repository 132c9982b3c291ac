"""Train/test experiment matrix, gain and signal-to-noise curves, config and outputs.

Seeding: every random stream is ``default_rng(SeedSequence(master_seed,
spawn_key=key))`` with a role-specific key, so adding agents or days never
perturbs the streams of existing runs:

=============  ===============================================
role            spawn key
=============  ===============================================
day            (0, day)
Q init         (1, day, train dynamics, agent)
training       (2, day, train dynamics, agent)
testing        (3, day, train dynamics, agent, test day, test dynamics)
=============  ===============================================
"""

from __future__ import annotations

import dataclasses
import hashlib
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from . import __version__
from .episode import Agent, AgentConfig, run_episode, sequential_activations
from .lob_core import EventLog, read_log
from .synth_data import GenConfig, generate_day
from .time_travel import EVENT_TICKS, JUMP, SEQUENTIAL, WALL_CLOCK, JumpConfig, JumpIndex, Latency, cached_index

log = logging.getLogger(__name__)

DYNAMICS = {"seq": SEQUENTIAL, "jump": JUMP}
ALL_PAIRS = (("jump", "jump"), ("seq", "jump"), ("seq", "seq"), ("jump", "seq"))
LATENCY_MODES = {"event_ticks": EVENT_TICKS, "wall_clock": WALL_CLOCK}
ROLE_DAY, ROLE_QINIT, ROLE_TRAIN, ROLE_TEST = range(4)


class InsufficientDays(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    days: tuple = ()  # event-log CSV paths; when empty, ``synthetic_days`` days are generated
    synthetic_days: int = 4
    n_agents: int = 48
    t_train: int = 15_000
    t_test: int = 0  # 0: as many updates as a sequential pass over the test day
    pairs: tuple = ALL_PAIRS
    cross_validate: bool = True
    frozen_test: bool = False
    master_seed: int = 0
    latency: Latency = Latency()
    agent: AgentConfig = AgentConfig()
    jump: JumpConfig = JumpConfig()
    gen: GenConfig = GenConfig()
    index_cache_dir: Optional[str] = None

    def __post_init__(self):
        if self.n_agents < 1:
            raise ValueError("n_agents must be >= 1")
        if self.t_train < 1:
            raise ValueError("t_train must be >= 1")
        for pair in self.pairs:
            if len(pair) != 2 or any(p not in DYNAMICS for p in pair):
                raise ValueError(f"bad dynamics pair {pair!r}")

    def n_days(self) -> int:
        return len(self.days) if self.days else self.synthetic_days


def rng_for(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=tuple(key)))


def day_seed(master_seed: int, day: int) -> int:
    return int(np.random.SeedSequence(master_seed, spawn_key=(ROLE_DAY, day)).generate_state(1)[0])


# ---------------------------------------------------------------------------
# flat key = value configuration


def _coerce(value: str, like):
    if isinstance(like, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if isinstance(like, int):
        return int(value.replace("_", ""))
    if isinstance(like, float):
        return float(value)
    return value


def _parse_pairs(value: str) -> tuple:
    pairs = []
    for item in value.split(","):
        item = item.strip()
        if not item:
            continue
        if item == "all":
            pairs.extend(ALL_PAIRS)
            continue
        a, b = (s.strip() for s in item.split("->"))
        pairs.append((a, b))
    return tuple(pairs)


def parse_config_text(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse ``key = value`` lines (``#`` comments); nested fields use dotted
    prefixes ``agent.``, ``jump.``, ``gen.`` and ``latency.``."""
    items = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line: {raw!r}")
        k, v = line.split("=", 1)
        items[k.strip()] = v.strip()
    items.update(overrides or {})
    return config_from_items(items)


def config_from_items(items: dict) -> ExperimentConfig:
    top, nested = {}, {"agent": {}, "jump": {}, "gen": {}, "latency": {}}
    base = ExperimentConfig()
    for key, value in items.items():
        if "." in key:
            group, name = key.split(".", 1)
            if group not in nested:
                raise KeyError(f"unknown config group {group!r}")
            nested[group][name] = value
            continue
        if key == "days":
            top[key] = tuple(p.strip() for p in value.split(",") if p.strip())
        elif key == "pairs":
            top[key] = _parse_pairs(value)
        elif key == "index_cache_dir":
            top[key] = value or None
        elif key in {f.name for f in dataclasses.fields(ExperimentConfig)}:
            top[key] = _coerce(value, getattr(base, key))
        else:
            raise KeyError(f"unknown config key {key!r}")
    for group in ("agent", "jump", "gen"):
        obj = getattr(base, group)
        known = {f.name for f in dataclasses.fields(obj)}
        kw = {}
        for name, value in nested[group].items():
            if name not in known:
                raise KeyError(f"unknown config key {group}.{name}")
            kw[name] = _coerce(value, getattr(obj, name))
        top[group] = dataclasses.replace(obj, **kw)
    lat = nested["latency"]
    unknown = set(lat) - {"mode", "value"}
    if unknown:
        raise KeyError(f"unknown latency keys {sorted(unknown)}")
    mode = LATENCY_MODES[lat.get("mode", "event_ticks")]
    top["latency"] = Latency(mode, int(lat.get("value", base.latency.value)))
    return ExperimentConfig(**top)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), overrides)


def config_to_text(cfg: ExperimentConfig) -> str:
    """Canonical text form; parsing it back gives an equal config."""
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if f.name in ("agent", "jump", "gen"):
            for g in dataclasses.fields(v):
                lines.append(f"{f.name}.{g.name} = {getattr(v, g.name)!r}".replace("'", ""))
        elif f.name == "latency":
            mode = {m: k for k, m in LATENCY_MODES.items()}[v.mode]
            lines.append(f"latency.mode = {mode}")
            lines.append(f"latency.value = {v.value}")
        elif f.name == "days":
            lines.append(f"days = {','.join(v)}")
        elif f.name == "pairs":
            lines.append("pairs = " + ", ".join(f"{a}->{b}" for a, b in v))
        elif f.name == "index_cache_dir":
            lines.append(f"index_cache_dir = {v or ''}")
        else:
            lines.append(f"{f.name} = {v!r}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(config_to_text(cfg).encode()).hexdigest()


# ---------------------------------------------------------------------------
# curves


class GainCurve(NamedTuple):
    updates: np.ndarray  # 1 .. U
    mean: np.ndarray
    std: np.ndarray
    sample_count: int
    snr: np.ndarray  # nan where the cohort has zero variance


def cumulative_gain(rewards: np.ndarray) -> np.ndarray:
    """Average reward per update since the start of the episode."""
    rewards = np.asarray(rewards, dtype=float)
    return np.cumsum(rewards) / np.arange(1, len(rewards) + 1)


def snr_curve(rewards) -> np.ndarray:
    """Pointwise cohort mean / cohort std (ddof=1) of the cumulative-average gain.

    ``rewards`` is a (cohort, updates) array.  Zero-variance points are nan.
    """
    gains = np.array([cumulative_gain(r) for r in rewards], dtype=float)
    if gains.ndim != 2 or gains.shape[0] < 2:
        raise ValueError("snr needs a cohort of at least two runs")
    mean = gains.mean(axis=0)
    std = gains.std(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(std > 0, mean / np.where(std > 0, std, 1.0), np.nan)


class _CurveAccumulator:
    """Running mean and M2 of cumulative gains; curves are cut to the shortest run."""

    def __init__(self):
        self.n = 0
        self.min_len = None
        self.mean = np.zeros(0)
        self.m2 = np.zeros(0)

    def add(self, rewards: np.ndarray) -> None:
        g = cumulative_gain(rewards)
        self.min_len = len(g) if self.min_len is None else min(self.min_len, len(g))
        if len(g) > len(self.mean):
            grow = len(g) - len(self.mean)
            self.mean = np.concatenate([self.mean, np.full(grow, np.nan)])
            self.m2 = np.concatenate([self.m2, np.full(grow, np.nan)])
        self.n += 1
        k = self.min_len
        g = g[:k]
        if self.n == 1:
            self.mean[:k] = g
            self.m2[:k] = 0.0
            return
        delta = g - self.mean[:k]
        self.mean[:k] += delta / self.n
        self.m2[:k] += delta * (g - self.mean[:k])

    def curve(self) -> GainCurve:
        k = self.min_len or 0
        mean = self.mean[:k].copy()
        if self.n >= 2:
            std = np.sqrt(self.m2[:k] / (self.n - 1))
            with np.errstate(divide="ignore", invalid="ignore"):
                snr = np.where(std > 0, mean / np.where(std > 0, std, 1.0), np.nan)
        else:
            std = np.full(k, np.nan)
            snr = np.full(k, np.nan)
        return GainCurve(np.arange(1, k + 1), mean, std, self.n, snr)


# ---------------------------------------------------------------------------
# experiment


@dataclass
class MatrixResult:
    cells: dict  # (train, test, same_day) -> GainCurve
    consistency: dict = field(default_factory=dict)  # (phase, dynamics) -> covered fraction
    day_ids: tuple = ()
    index_builds: int = 0


def load_days(cfg: ExperimentConfig) -> list[EventLog]:
    if cfg.days:
        return [read_log(p) for p in cfg.days]
    return [generate_day(dataclasses.replace(cfg.gen, seed=day_seed(cfg.master_seed, d), day_id=f"SYN{d}"))
            for d in range(cfg.synthetic_days)]


def _dyn_index(name: str) -> int:
    return ("seq", "jump").index(name)


def train_cohort(day_log: EventLog, index: Optional[JumpIndex], dynamics: str, cfg: ExperimentConfig,
                 day: int) -> list[tuple[Agent, np.ndarray]]:
    """Train ``n_agents`` fresh agents on one day; returns (agent, rewards) pairs."""
    n = _dyn_index(dynamics)
    out = []
    for i in range(cfg.n_agents):
        agent = Agent.fresh(rng_for(cfg.master_seed, ROLE_QINIT, day, n, i), cfg.agent)
        res = run_episode(day_log, index, agent, DYNAMICS[dynamics], rng_for(cfg.master_seed, ROLE_TRAIN, day, n, i),
                          cfg.t_train, cfg.agent, cfg.jump, cfg.latency)
        out.append((agent, res.rewards))
    return out


def train_test_matrix(cfg: ExperimentConfig, logs: Optional[list[EventLog]] = None,
                      progress: Optional[Callable[[str], None]] = None) -> MatrixResult:
    """Train cohorts per (day, train dynamics) and test every checkpoint on every
    day under the paired test dynamics.

    Same-day cells average over n_agents * |D| runs, cross-validated cells over
    n_agents * |D| * (|D| - 1) runs.
    """
    from . import time_travel

    logs = logs if logs is not None else load_days(cfg)
    n_days = len(logs)
    if n_days < 1:
        raise InsufficientDays("no days configured")
    cross = cfg.cross_validate and n_days >= 2
    builds_before = time_travel.INDEX_BUILDS
    uses_jump = any("jump" in p for p in cfg.pairs)
    indices = [cached_index(lg, cfg.jump, cfg.index_cache_dir) if uses_jump else None for lg in logs]
    budgets = [cfg.t_test or sequential_activations(lg, cfg.latency) for lg in logs]

    train_dyns = sorted({a for a, _ in cfg.pairs}, key=_dyn_index)
    acc: dict = {}
    consistency: dict = {}
    for d, day_log in enumerate(logs):
        for dyn in train_dyns:
            if progress:
                progress(f"train day={day_log.day_id} dynamics={dyn}")
            cohort = train_cohort(day_log, indices[d], dyn, cfg, d)
            for train_dyn, test_dyn in cfg.pairs:
                if train_dyn != dyn:
                    continue
                for d2, test_log in enumerate(logs):
                    same = d2 == d
                    if not same and not cross:
                        continue
                    cell = acc.setdefault((train_dyn, test_dyn, same), _CurveAccumulator())
                    covered = consistency.setdefault(("test", test_dyn), [0, 0])
                    for i, (agent, _) in enumerate(cohort):
                        rng = rng_for(cfg.master_seed, ROLE_TEST, d, _dyn_index(dyn), i, d2, _dyn_index(test_dyn))
                        res = run_episode(test_log, indices[d2], agent.copy(), DYNAMICS[test_dyn], rng, budgets[d2],
                                          cfg.agent, cfg.jump, cfg.latency, learn=not cfg.frozen_test)
                        cell.add(res.rewards)
                        covered[0] += res.stats["covered"]
                        covered[1] += res.stats["activations"]
    cells = {k: v.curve() for k, v in sorted(acc.items())}
    cons = {k: c / n if n else float("nan") for k, (c, n) in sorted(consistency.items())}
    return MatrixResult(cells, cons, tuple(lg.day_id for lg in logs), time_travel.INDEX_BUILDS - builds_before)


def expected_sample_count(cfg_or_days, n_agents: int, same_day: bool) -> int:
    n_days = cfg_or_days if isinstance(cfg_or_days, int) else cfg_or_days.n_days()
    return n_agents * n_days * (1 if same_day else n_days - 1)


# ---------------------------------------------------------------------------
# outputs

MATRIX_COLUMNS = ("train", "test", "same_day", "update", "mean_gain", "std", "sample_count", "snr")


def _fmt(x: float) -> str:
    return repr(float(x))


def write_matrix_csv(result: MatrixResult, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(MATRIX_COLUMNS) + "\n")
        for (a, b, same), c in result.cells.items():
            prefix = f"{a},{b},{int(same)},"
            for u, m, s, r in zip(c.updates.tolist(), c.mean.tolist(), c.std.tolist(), c.snr.tolist()):
                fh.write(f"{prefix}{u},{_fmt(m)},{_fmt(s)},{c.sample_count},{_fmt(r)}\n")


def read_matrix_csv(path) -> dict:
    """Back to {(train, test, same_day): GainCurve}."""
    import csv

    rows: dict = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for r in csv.DictReader(fh):
            key = (r["train"], r["test"], r["same_day"] == "1")
            rows.setdefault(key, []).append(r)
    out = {}
    for key, rs in rows.items():
        out[key] = GainCurve(np.array([int(r["update"]) for r in rs]), np.array([float(r["mean_gain"]) for r in rs]),
                             np.array([float(r["std"]) for r in rs]), int(rs[0]["sample_count"]),
                             np.array([float(r["snr"]) for r in rs]))
    return out


def write_manifest(cfg: ExperimentConfig, result: MatrixResult, path) -> None:
    lines = [
        f"lobtravel_version = {__version__}",
        f"config_hash = {config_hash(cfg)}",
        f"master_seed = {cfg.master_seed}",
        "seed_scheme = SeedSequence(master_seed, spawn_key=(role, ...)); roles day=0 qinit=1 train=2 test=3",
        f"days = {','.join(result.day_ids)}",
        f"index_builds = {result.index_builds}",
    ]
    if not cfg.days:
        lines.append("day_seeds = " + ",".join(str(day_seed(cfg.master_seed, d)) for d in range(cfg.synthetic_days)))
    for (a, b, same), c in result.cells.items():
        tag = "same_day" if same else "cross"
        lines.append(f"cell.{a}->{b}.{tag}.sample_count = {c.sample_count}")
        lines.append(f"cell.{a}->{b}.{tag}.updates = {len(c.updates)}")
    for (phase, dyn), frac in result.consistency.items():
        lines.append(f"consistency.{phase}.{dyn} = {frac!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
        fh.write("\n# config\n")
        fh.write(config_to_text(cfg))


def run_matrix(cfg: ExperimentConfig, out_dir, progress=None) -> MatrixResult:
    os.makedirs(out_dir, exist_ok=True)
    result = train_test_matrix(cfg, progress=progress)
    write_matrix_csv(result, os.path.join(out_dir, "matrix.csv"))
    write_manifest(cfg, result, os.path.join(out_dir, "manifest.txt"))
    return result


def summary_table(cells: dict) -> list[tuple]:
    """(train, test, same_day, final mean gain, final std, sample count) per cell,
    ordered like a train/test results table."""
    order = {p: i for i, p in enumerate(ALL_PAIRS)}
    rows = []
    for (a, b, same), c in sorted(cells.items(), key=lambda kv: (not kv[0][2], order.get(kv[0][:2], 99))):
        if len(c.mean) == 0:
            continue
        rows.append((a, b, same, float(c.mean[-1]), float(c.std[-1]), c.sample_count))
    return rows
