"""Experiment orchestration: replay backtests and paired IABS trials."""

from __future__ import annotations

import json
import logging
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import eventstudy as es
from .agents import ImpactAgent, ImpactParams, ReplayImpactAgent, ZIAgent, ZIParams
from .exchange import ExchangeAgent
from .kernel import NS_PER_MS, NS_PER_SECOND, UNIT_NS, Kernel, KernelConfig, SimulationLog, _stream
from .lobster import LobsterEvent, parse_messages, parse_orderbook
from .oracle import FundamentalParams, FundamentalSeries
from .orderbook import Side
from .replay import MarketReplayAgent

log = logging.getLogger(__name__)

_POPULATION_STREAM = 2
EXCHANGE_ID = 0


class ConfigError(ValueError):
    pass


def parse_clock(value) -> int:
    """``"09:45:00.5"`` or seconds after midnight to ns."""
    if isinstance(value, (int, float)):
        return int(round(value * NS_PER_SECOND))
    m = re.fullmatch(r"(\d{1,2}):(\d{2}):(\d{2})(?:\.(\d{1,9}))?", value.strip())
    if not m:
        raise ConfigError(f"bad clock time {value!r}")
    h, mi, s, frac = m.groups()
    ns = ((int(h) * 60 + int(mi)) * 60 + int(s)) * NS_PER_SECOND
    if frac:
        ns += int(frac.ljust(9, "0"))
    return ns


@dataclass
class ExperimentConfig:
    mode: str = "iabs_impact"
    # replay mode
    message_file: str | None = None
    orderbook_file: str | None = None
    market_open: str = "09:30:00"
    market_close: str | None = None
    start: str = "09:45:00"
    end: str = "09:53:15"
    interval_ms: int = 5000
    latency_ns: int = 0
    # sizes are inside-size multipliers (replay) or greeds (iabs)
    sizes: list[float] = field(default_factory=lambda: [2.0])
    sides: str = "both"
    trials: int = 100
    base_seed: int = 1
    window_pre_ms: int = 10_000
    window_post_ms: int = 60_000
    sample_interval_ms: int = 1
    output_dir: str = "out"
    # iabs mode
    n_agents: int = 100
    horizon: int = 1000
    trigger_time: int = 200
    band_fraction: float = 0.01
    market_order: bool = False
    r_bar: int = 100_000
    kappa: float = 0.002
    sigma_shock_sq: float = 1e4
    obs_noise_sq: float = 1e6
    arrival_rate: float = 0.05
    q_max: int = 10
    pv_var: float = 5e6
    surplus_min: int = 0
    surplus_max_range: list[int] = field(default_factory=lambda: [500, 2000])
    etas: list[float] = field(default_factory=lambda: [0.2, 0.5, 0.8, 1.0])

    def __post_init__(self):
        if self.mode not in ("replay_impact", "iabs_impact"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.interval_ms <= 0 or self.sample_interval_ms <= 0:
            raise ConfigError("intervals must be positive")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.sizes:
            raise ConfigError("sizes must be non-empty")
        if self.sides not in ("buy", "sell", "both"):
            raise ConfigError("sides must be buy, sell or both")
        if self.mode == "iabs_impact" and (self.window_pre_ms % 100 or self.window_post_ms % 100):
            raise ConfigError("iabs windows must be whole 100 ms units")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        """JSON object, or flat ``key = value`` lines whose values are JSON or bare strings."""
        text = Path(path).read_text()
        if text.lstrip().startswith("{"):
            data = json.loads(text)
        else:
            data = {}
            for raw in text.splitlines():
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                key, sep, value = line.partition("=")
                if not sep:
                    raise ConfigError(f"expected key = value, got {raw!r}")
                value = value.strip()
                try:
                    data[key.strip()] = json.loads(value)
                except json.JSONDecodeError:
                    data[key.strip()] = value
        base = Path(path).parent
        for key in ("message_file", "orderbook_file"):
            if data.get(key) and not os.path.isabs(data[key]):
                data[key] = str(base / data[key])
        return cls.from_dict(data)

    def side_list(self) -> list[Side]:
        return {"buy": [Side.BUY], "sell": [Side.SELL], "both": [Side.BUY, Side.SELL]}[self.sides]


def trial_times(start: int, end: int, interval: int) -> list[int]:
    if interval <= 0:
        raise ValueError("interval must be positive")
    if start > end:
        return []
    return list(range(start, end + 1, interval))


def worker_count() -> int:
    env = os.environ.get("MARKETSIM_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _map(fn: Callable, jobs: Sequence, workers: int | None = None) -> list:
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


# --- replay backtests -------------------------------------------------------


@dataclass
class ReplayData:
    opening_row: list[int]
    events: list[LobsterEvent]
    market_open: int
    market_close: int

    @classmethod
    def from_config(cls, cfg: ExperimentConfig) -> "ReplayData":
        if not cfg.message_file or not cfg.orderbook_file:
            raise ConfigError("replay mode needs message_file and orderbook_file")
        events = parse_messages(cfg.message_file)
        rows = parse_orderbook(cfg.orderbook_file)
        if not rows:
            raise ConfigError("orderbook file is empty")
        market_open = parse_clock(cfg.market_open)
        if cfg.market_close:
            close = parse_clock(cfg.market_close)
        else:
            close = events[-1].time if events else market_open
        return cls(rows[0], events, market_open, close)


def _replay_kernel(data: ReplayData, stop: int, latency_ns: int, extra=(),
                   l2_levels: int | None = None) -> tuple[Kernel, ExchangeAgent]:
    exchange = ExchangeAgent(EXCHANGE_ID, l2_levels=l2_levels)
    replay = MarketReplayAgent(1, EXCHANGE_ID, data.opening_row, data.events,
                               data.market_open, data.market_close)
    cfg = KernelConfig(start=data.market_open, stop=stop, latency_ns=latency_ns)
    return Kernel(cfg, [exchange, replay, *extra]), exchange


def run_replay(data: ReplayData, stop: int, latency_ns: int = 0, agent=None,
               l2_levels: int | None = None) -> tuple[SimulationLog, ExchangeAgent]:
    kernel, exchange = _replay_kernel(data, stop, latency_ns,
                                      [] if agent is None else [agent], l2_levels)
    return kernel.run(), exchange


def _mid_series(exchange: ExchangeAgent, t0: int, interval: int, count: int) -> es.SampledSeries:
    q = exchange.quotes
    return es.sample_mid(q.times, q.mids(), t0, interval, count)


@dataclass(frozen=True)
class _ReplayJob:
    data: ReplayData
    trigger: int
    side: int
    multiplier: float
    pre: int
    post: int
    interval: int
    latency_ns: int


def _run_replay_trial(job: _ReplayJob) -> np.ndarray:
    agent = ReplayImpactAgent(2, EXCHANGE_ID, job.trigger, Side(job.side), job.multiplier)
    _, exchange = run_replay(job.data, job.trigger + job.post, job.latency_ns, agent)
    t0 = job.trigger - job.pre
    n = (job.pre + job.post) // job.interval + 1
    return _mid_series(exchange, t0, job.interval, n).values


def run_replay_impact(cfg: ExperimentConfig, data: ReplayData | None = None,
                      workers: int | None = None) -> dict[tuple[Side, float], es.EventStudyResult]:
    """One baseline replay, then one isolated simulation per (time, side, size)."""
    data = data or ReplayData.from_config(cfg)
    pre, post = cfg.window_pre_ms * NS_PER_MS, cfg.window_post_ms * NS_PER_MS
    interval = cfg.sample_interval_ms * NS_PER_MS
    times = trial_times(parse_clock(cfg.start), parse_clock(cfg.end), cfg.interval_ms * NS_PER_MS)
    if not times:
        raise ConfigError("empty trial schedule")
    for t in times:
        if t - pre < data.market_open or t + post > data.market_close:
            raise ConfigError(f"trial at {t} ns with its window is outside data coverage "
                              f"[{data.market_open}, {data.market_close}]")

    stop = times[-1] + post
    _, base_exchange = run_replay(data, stop, cfg.latency_ns)
    t0 = times[0] - pre
    baseline = _mid_series(base_exchange, t0, interval, (stop - t0) // interval + 1)
    base_windows = {t: es.extract_window(baseline, t, pre, post) for t in times}

    jobs = [_ReplayJob(data, t, int(side), float(m), pre, post, interval, cfg.latency_ns)
            for side in cfg.side_list() for m in cfg.sizes for t in times]
    outputs = _map(_run_replay_trial, jobs, workers)

    grouped: dict[tuple[Side, float], list[es.Subseries]] = {}
    for job, values in zip(jobs, outputs):
        bw = base_windows[job.trigger]
        sub = es.Subseries(bw.offsets, values, interval, job.trigger)
        grouped.setdefault((Side(job.side), job.multiplier), []).append(
            es.normalize_baseline(sub, bw))
    return {key: es.aggregate(subs) for key, subs in grouped.items()}


def price_level_volume(data: ReplayData, stop: int, step: int = NS_PER_SECOND,
                       n_levels: int = 10) -> list[tuple[float, int, float, float]]:
    """(time_s, price, log10 volume, mid) rows sampled every ``step`` ns from a replay-only run."""
    _, exchange = run_replay(data, stop, l2_levels=n_levels)
    hist = exchange.l2_history
    times = np.array([t for t, _ in hist], dtype=np.int64)
    rows = []
    for t in range(data.market_open, stop + 1, step):
        k = int(np.searchsorted(times, t, side="right")) - 1
        if k < 0:
            continue
        snap = hist[k][1]
        asks = [(snap[i], snap[i + 1]) for i in range(0, len(snap), 4) if snap[i + 1] > 0]
        bids = [(snap[i + 2], snap[i + 3]) for i in range(0, len(snap), 4) if snap[i + 3] > 0]
        mid = (asks[0][0] + bids[0][0]) / 2 if asks and bids else float("nan")
        for price, vol in asks + bids:
            rows.append((t / NS_PER_SECOND, price, math.log10(vol), mid))
    return rows


# --- interactive agent-based simulation ------------------------------------


def population(cfg: ExperimentConfig, seed: int) -> list[ZIParams]:
    """Per-agent ZI parameters, drawn from a stream reserved for the roster."""
    rng = _stream(seed, (_POPULATION_STREAM,))
    lo, hi = cfg.surplus_max_range
    out = []
    for _ in range(cfg.n_agents):
        surplus_max = int(rng.integers(max(lo, cfg.surplus_min), hi + 1))
        eta = float(cfg.etas[int(rng.integers(len(cfg.etas)))])
        out.append(ZIParams(cfg.surplus_min, surplus_max, eta, cfg.obs_noise_sq,
                            cfg.arrival_rate, cfg.q_max))
    return out


def fundamental_params(cfg: ExperimentConfig) -> FundamentalParams:
    return FundamentalParams(cfg.r_bar, cfg.kappa, cfg.sigma_shock_sq, cfg.horizon,
                             cfg.obs_noise_sq)


def build_iabs(cfg: ExperimentConfig, seed: int, impact: ImpactParams | None
               ) -> tuple[Kernel, ExchangeAgent, FundamentalSeries]:
    oracle = FundamentalSeries(fundamental_params(cfg), seed)
    exchange = ExchangeAgent(EXCHANGE_ID)
    agents = [exchange]
    for i, params in enumerate(population(cfg, seed), start=1):
        agents.append(ZIAgent(i, EXCHANGE_ID, oracle, params, cfg.pv_var))
    if impact is not None:
        agents.append(ImpactAgent(cfg.n_agents + 1, EXCHANGE_ID, impact))
    kcfg = KernelConfig(start=0, stop=cfg.horizon * UNIT_NS, global_seed=seed)
    return Kernel(kcfg, agents), exchange, oracle


@dataclass
class IabsRun:
    log: SimulationLog
    mids: np.ndarray  # one sample per unit, 0..horizon
    fundamental: list[int]


def run_iabs(cfg: ExperimentConfig, seed: int, impact: ImpactParams | None) -> IabsRun:
    kernel, exchange, oracle = build_iabs(cfg, seed, impact)
    sim_log = kernel.run()
    mids = _mid_series(exchange, 0, UNIT_NS, cfg.horizon + 1).values
    return IabsRun(sim_log, mids, oracle.path())


def _impact_params(cfg: ExperimentConfig, side: Side, greed: float, active: bool) -> ImpactParams:
    return ImpactParams(cfg.trigger_time, side, greed, cfg.band_fraction, active, cfg.market_order)


def _iabs_window(cfg: ExperimentConfig, mids: np.ndarray) -> es.Subseries:
    series = es.SampledSeries(0, UNIT_NS, mids)
    return es.extract_window(series, cfg.trigger_time * UNIT_NS,
                             cfg.window_pre_ms * NS_PER_MS, cfg.window_post_ms * NS_PER_MS)


def iabs_pair_impacts(job: tuple[ExperimentConfig, int, int, tuple[float, ...]]) -> list[np.ndarray]:
    """Control plus one experimental run per greed, all on one seed.

    The control does not depend on greed, so a single control run serves the
    whole greed grid. Returns paired-impact values, one array per greed.
    """
    cfg, seed, side, greeds = job
    side = Side(side)
    control = _iabs_window(cfg, run_iabs(cfg, seed, _impact_params(cfg, side, 1.0, False)).mids)
    out = []
    for g in greeds:
        exp = _iabs_window(cfg, run_iabs(cfg, seed, _impact_params(cfg, side, g, True)).mids)
        out.append(es.paired_impact(exp, control).values)
    return out


def run_iabs_impact(cfg: ExperimentConfig, workers: int | None = None
                    ) -> dict[tuple[Side, float], es.EventStudyResult]:
    """Trial k uses seed ``base_seed + k`` for both its experimental and control run."""
    greeds = tuple(float(g) for g in cfg.sizes)
    jobs = [(cfg, cfg.base_seed + k, int(side), greeds)
            for side in cfg.side_list() for k in range(cfg.trials)]
    outputs = _map(iabs_pair_impacts, jobs, workers)
    pre_units = cfg.window_pre_ms // 100
    offsets = np.arange(-pre_units, cfg.window_post_ms // 100 + 1)
    grouped: dict[tuple[Side, float], list[es.Subseries]] = {}
    for (_, _, side, _), per_greed in zip(jobs, outputs):
        for g, values in zip(greeds, per_greed):
            grouped.setdefault((Side(side), g), []).append(es.Subseries(offsets, values, UNIT_NS))
    return {key: es.aggregate(subs) for key, subs in grouped.items()}


# --- output -----------------------------------------------------------------


def _label(key: tuple[Side, float]) -> str:
    side, size = key
    return f"{side.name.lower()}_{size:g}"


def emit_csv(results: dict, directory, prefix: str = "impact") -> list[Path]:
    if not results:
        raise ValueError("no results to write")
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for key in sorted(results, key=lambda k: (-int(k[0]), k[1])):
        path = out / f"{prefix}_{_label(key)}.csv"
        results[key].to_csv(path)
        paths.append(path)
    return paths


def read_result_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return arr[:, 0], arr[:, 1], arr[:, 2], int(arr[0, 3])


_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def render_svg(title: str, curves: list[tuple[str, es.EventStudyResult]],
               width: int = 640, height: int = 400) -> str:
    """Mean line with a +/-1 std band per curve; x is offset in ms."""
    pad = 50
    xs = curves[0][1].offset_ms()
    lo = min(np.nanmin(r.mean - r.std) for _, r in curves)
    hi = max(np.nanmax(r.mean + r.std) for _, r in curves)
    if not np.isfinite(lo) or not np.isfinite(hi) or hi == lo:
        lo, hi = (lo - 1, hi + 1) if np.isfinite(lo) else (-1.0, 1.0)
    x0, x1 = float(xs[0]), float(xs[-1]) if xs[-1] != xs[0] else float(xs[0]) + 1

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def py(y):
        return height - pad - (y - lo) / (hi - lo) * (height - 2 * pad)

    def pts(x, y):
        return " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y) if np.isfinite(b))

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<title>{title}</title>',
             f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
             f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
             f'<text x="{pad}" y="{height - pad + 15}" font-size="10">{x0:g} ms</text>',
             f'<text x="{width - pad}" y="{height - pad + 15}" font-size="10" text-anchor="end">{x1:g} ms</text>',
             f'<text x="5" y="{pad}" font-size="10">{hi:.6g}</text>',
             f'<text x="5" y="{height - pad}" font-size="10">{lo:.6g}</text>']
    for i, (label, r) in enumerate(curves):
        color = _PALETTE[i % len(_PALETTE)]
        upper, lower = r.mean + r.std, r.mean - r.std
        band = pts(xs, upper) + " " + pts(xs[::-1], lower[::-1])
        parts.append(f'<polygon points="{band}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        line = pts(xs, r.mean).replace(" ", " L")
        parts.append(f'<path d="M{line}" fill="none" stroke="{color}" stroke-width="1.2">'
                     f'<title>{label}</title></path>')
        parts.append(f'<text x="{width - pad}" y="{pad + 14 * i}" font-size="11" '
                     f'text-anchor="end" fill="{color}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_svg(results: dict, directory, prefix: str = "impact") -> list[Path]:
    """One figure per side holding every size's curve."""
    if not results:
        raise ValueError("no results to write")
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for side in sorted({k[0] for k in results}, reverse=True):
        keys = sorted((k for k in results if k[0] == side), key=lambda k: k[1])
        curves = [(f"size {k[1]:g} (n={results[k].n})", results[k]) for k in keys]
        path = out / f"{prefix}_{side.name.lower()}.svg"
        path.write_text(render_svg(f"{prefix} {side.name.lower()}", curves))
        paths.append(path)
    return paths


def write_config_echo(cfg: ExperimentConfig, directory) -> None:
    Path(directory, "config.json").write_text(json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n")
