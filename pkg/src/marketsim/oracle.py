"""Mean-reverting fundamental value and noisy observations of it."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .kernel import oracle_stream


@dataclass(frozen=True)
class FundamentalParams:
    r_bar: int = 100_000
    kappa: float = 0.002
    sigma_shock_sq: float = 1e4
    horizon_T: int = 1000
    obs_noise_sq_default: float = 1e6

    def __post_init__(self):
        if not 0 <= self.kappa <= 1:
            raise ValueError("kappa must lie in [0, 1]")
        if self.sigma_shock_sq < 0 or self.obs_noise_sq_default < 0:
            raise ValueError("variances must be non-negative")
        if self.r_bar <= 0:
            raise ValueError("r_bar must be positive")


class FundamentalSeries:
    """r_t = max(0, round(kappa*r_bar + (1-kappa)*r_{t-1} + u_t)), r_0 = r_bar.

    Values are produced lazily, in order, from a stream reserved for the
    oracle, so the path is a function of the seed alone.
    """

    def __init__(self, params: FundamentalParams, global_seed: int = 0,
                 rng: np.random.Generator | None = None):
        self.params = params
        self._rng = rng if rng is not None else oracle_stream(global_seed)
        self._values = [params.r_bar]
        self._sd = math.sqrt(params.sigma_shock_sq)

    def value_at(self, t: int) -> int:
        p = self.params
        if not 0 <= t <= p.horizon_T:
            raise IndexError(f"time {t} outside [0, {p.horizon_T}]")
        values = self._values
        if t >= len(values):
            n = t + 1 - len(values)
            shocks = self._rng.normal(0.0, self._sd, size=n)
            r = values[-1]
            anchor = p.kappa * p.r_bar
            keep = 1 - p.kappa
            for u in shocks:
                r = max(0, round(anchor + keep * r + u))
                values.append(r)
        return values[t]

    def observe(self, t: int, obs_noise_sq: float, rng: np.random.Generator) -> int:
        """Fundamental plus noise drawn from the caller's stream."""
        noise = rng.normal(0.0, math.sqrt(obs_noise_sq))
        return int(round(self.value_at(t) + noise))

    def path(self) -> list[int]:
        self.value_at(self.params.horizon_T)
        return list(self._values)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "value"])
            w.writerows(enumerate(self.path()))
