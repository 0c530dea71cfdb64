"""Event studies over sampled mid-price series.

Series are numpy float arrays with NaN where the book was one-sided.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class EventStudyError(ValueError):
    pass


@dataclass(frozen=True)
class SampledSeries:
    t0: int
    interval: int
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    @property
    def end(self) -> int:
        return self.t0 + (len(self.values) - 1) * self.interval

    def index_of(self, t: int) -> int:
        k, rem = divmod(t - self.t0, self.interval)
        if rem:
            raise EventStudyError(f"time {t} is not on the sampling grid")
        return k


@dataclass(frozen=True)
class Subseries:
    """Window cut around an event; ``offsets`` are sample counts, event at 0."""

    offsets: np.ndarray
    values: np.ndarray
    interval: int
    event_time: int | None = None


@dataclass(frozen=True)
class EventStudyResult:
    offsets: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    n: int
    interval: int  # ns between offsets

    def offset_ms(self) -> np.ndarray:
        return self.offsets * (self.interval / 1e6)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["offset_ms", "mean", "std", "n"])
            for off, m, s in zip(self.offset_ms(), self.mean, self.std):
                w.writerow([repr(float(off)), repr(float(m)), repr(float(s)), self.n])


def sample_mid(times: Sequence[int], mids: Sequence[float | None], t0: int, interval: int,
               count: int) -> SampledSeries:
    """Sample a step series at ``t0 + k*interval``, carrying the last value forward.

    A change stamped exactly at a sample time is included in that sample.
    """
    if interval <= 0:
        raise EventStudyError("interval must be positive")
    grid = t0 + interval * np.arange(count, dtype=np.int64)
    vals = np.array([np.nan if m is None else float(m) for m in mids], dtype=float)
    idx = np.searchsorted(np.asarray(times, dtype=np.int64), grid, side="right") - 1
    out = np.full(count, np.nan)
    ok = idx >= 0
    out[ok] = vals[idx[ok]]
    return SampledSeries(t0, interval, out)


def extract_window(series: SampledSeries, event_time: int, pre: int, post: int) -> Subseries:
    """Cut ``[event_time - pre, event_time + post]`` (ns) and index it relative to the event."""
    if pre < 0 or post < 0:
        raise EventStudyError("pre and post must be non-negative")
    if event_time - pre < series.t0 or event_time + post > series.end:
        raise EventStudyError(f"window around event at {event_time} exceeds the series "
                              f"[{series.t0}, {series.end}]")
    k0 = series.index_of(event_time)
    n_pre, n_post = pre // series.interval, post // series.interval
    offsets = np.arange(-n_pre, n_post + 1)
    return Subseries(offsets, series.values[k0 - n_pre:k0 + n_post + 1].copy(),
                     series.interval, event_time)


def _zero_index(sub: Subseries) -> int:
    hits = np.flatnonzero(sub.offsets == 0)
    if not len(hits):
        raise EventStudyError("subseries has no offset 0")
    return int(hits[0])


def normalize_benchmark(sub: Subseries) -> Subseries:
    base = sub.values[_zero_index(sub)]
    if not np.isfinite(base) or base <= 0:
        raise EventStudyError(f"benchmark value at offset 0 is unusable: {base}")
    return Subseries(sub.offsets, sub.values / base, sub.interval, sub.event_time)


def _check_aligned(a: Subseries, b: Subseries) -> None:
    if a.interval != b.interval or not np.array_equal(a.offsets, b.offsets):
        raise EventStudyError("subseries offsets do not match")


def normalize_baseline(sub: Subseries, baseline: Subseries) -> Subseries:
    _check_aligned(sub, baseline)
    b = baseline.values
    if not np.all(np.isfinite(b)) or np.any(b <= 0):
        raise EventStudyError("baseline must be present and positive at every offset")
    return Subseries(sub.offsets, sub.values / b, sub.interval, sub.event_time)


def paired_impact(experimental: Subseries, control: Subseries) -> Subseries:
    _check_aligned(experimental, control)
    c = control.values
    return Subseries(experimental.offsets, (experimental.values - c) / c,
                     experimental.interval, experimental.event_time)


def aggregate(subseries: Sequence[Subseries]) -> EventStudyResult:
    """Per-offset mean and population standard deviation.

    Offsets where a subseries is missing (one-sided book) are skipped for that
    subseries only.
    """
    if not subseries:
        raise EventStudyError("nothing to aggregate")
    first = subseries[0]
    for s in subseries[1:]:
        _check_aligned(first, s)
    stack = np.vstack([s.values for s in subseries])
    if np.isnan(stack).any():
        # all-NaN columns yield NaN; numpy warns about them
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            mean = np.nanmean(stack, axis=0)
            std = np.nanstd(stack, axis=0)
    else:
        mean = stack.mean(axis=0)
        std = stack.std(axis=0)
    return EventStudyResult(first.offsets.copy(), mean, std, len(subseries), first.interval)
