"""Generative model for future requests.

Each hour is split into ``N`` equal intervals. A count forecaster predicts
how many real-time requests arrive in each interval of the next hour; every
predicted request enters at the end of its interval, its pickup is drawn
from the empirical pickup histogram for (month, weekday, hour) and its
dropoff from the dropoff histogram for (month, weekday, pickup node).
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from os import PathLike
from typing import Protocol, Sequence

import numpy as np

from .core import DayLog, Request

SECONDS_PER_HOUR = 3600
DEFAULT_INTERVALS = 12
DEFAULT_SCENARIOS = 20
DEFAULT_LEAD = 60
SYNTHETIC_ID_BASE = 1_000_000_000

ANY = -1  # wildcard used by the back-off keys


class DemandError(RuntimeError):
    pass


@dataclass(frozen=True)
class DemandContext:
    month: int
    weekday: int
    hour: int
    interval_index: int = 0
    temperature: float | None = None
    precipitation: float | None = None
    date: str = ""

    def __post_init__(self):
        if not (1 <= self.month <= 12 and 0 <= self.weekday <= 6 and 0 <= self.hour <= 23
                and self.interval_index >= 0):
            raise ValueError(f"context out of range: {self}")


@dataclass(frozen=True)
class CountForecast:
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if any(c < 0 for c in self.counts):
            raise ValueError("forecast counts must be non-negative")

    def __len__(self):
        return len(self.counts)

    @property
    def total(self) -> int:
        return sum(self.counts)


@dataclass
class Scenario:
    requests: list[Request] = field(default_factory=list)

    def __len__(self):
        return len(self.requests)


def hour_of(t: int) -> int:
    return (t // SECONDS_PER_HOUR) % 24


def interval_counts(requests: Sequence[Request], hour_start: int, n_intervals: int = DEFAULT_INTERVALS) -> list[int]:
    """Observed arrivals per interval of the hour beginning at ``hour_start``."""
    width = SECONDS_PER_HOUR // n_intervals
    out = [0] * n_intervals
    for r in requests:
        k = (r.entry_time - hour_start) // width
        if 0 <= k < n_intervals:
            out[k] += 1
    return out


# ---------------------------------------------------------------- histograms

@dataclass
class ConditionalHistograms:
    """Pickup counts keyed by (month, weekday, hour) and dropoff counts keyed by
    (month, weekday, pickup node). Back-off keys use ``ANY`` in the dropped slots."""

    n_nodes: int
    pickup_counts: dict[tuple[int, int, int], np.ndarray] = field(default_factory=dict)
    dropoff_counts: dict[tuple[int, int, int], np.ndarray] = field(default_factory=dict)

    def _bucket(self, table, key):
        v = table.get(key)
        if v is None or v.sum() == 0:
            return None
        return v

    def pickup_distribution(self, month: int, weekday: int, hour: int) -> np.ndarray:
        """Probability over node ids 1..n (index 0 = node 1), with back-off for unseen contexts."""
        for key in ((month, weekday, hour), (month, weekday, ANY), (month, ANY, ANY), (ANY, ANY, ANY)):
            v = self._bucket(self.pickup_counts, key)
            if v is not None:
                return v / v.sum()
        raise DemandError("histograms are empty")

    def dropoff_distribution(self, month: int, weekday: int, pickup: int) -> np.ndarray:
        """Dropoff probabilities given the pickup node; the pickup node itself gets zero mass."""
        for key in ((month, weekday, pickup), (month, ANY, pickup), (ANY, ANY, pickup), (ANY, ANY, ANY)):
            v = self._bucket(self.dropoff_counts, key)
            if v is None:
                continue
            v = v.astype(float).copy()
            v[pickup - 1] = 0.0
            if v.sum() > 0:
                return v / v.sum()
        v = np.ones(self.n_nodes)
        v[pickup - 1] = 0.0
        return v / v.sum()


def build_histograms(history: Sequence[DayLog], n_nodes: int) -> ConditionalHistograms:
    if not history:
        raise DemandError("empty history")
    hist = ConditionalHistograms(n_nodes)
    pick = defaultdict(lambda: np.zeros(n_nodes, dtype=np.int64))
    drop = defaultdict(lambda: np.zeros(n_nodes, dtype=np.int64))
    for day in history:
        m, w = day.month, day.weekday
        for r in day.requests:
            h = hour_of(r.entry_time)
            for key in ((m, w, h), (m, w, ANY), (m, ANY, ANY), (ANY, ANY, ANY)):
                pick[key][r.pickup - 1] += 1
            for key in ((m, w, r.pickup), (m, ANY, r.pickup), (ANY, ANY, r.pickup), (ANY, ANY, ANY)):
                drop[key][r.dropoff - 1] += 1
    hist.pickup_counts = dict(pick)
    hist.dropoff_counts = dict(drop)
    return hist


# ---------------------------------------------------------------- forecasters

class CountForecaster(Protocol):
    n_intervals: int

    def forecast(self, observed: Sequence[int], context: DemandContext) -> CountForecast: ...


class HistoricalMeanForecaster:
    """Mean historical count per (month, weekday, hour, interval), rounded half up."""

    def __init__(self, n_intervals: int = DEFAULT_INTERVALS):
        self.n_intervals = n_intervals
        self._means: dict[tuple[int, int, int], np.ndarray] | None = None

    def fit(self, history: Sequence[DayLog]) -> "HistoricalMeanForecaster":
        if not history:
            raise DemandError("empty history")
        n = self.n_intervals
        width = SECONDS_PER_HOUR // n
        hours = sorted({r.entry_time // SECONDS_PER_HOUR for d in history for r in d.requests})
        sums: dict[tuple[int, int, int], np.ndarray] = defaultdict(lambda: np.zeros(n))
        days: dict[tuple[int, int], int] = defaultdict(int)
        for d in history:
            days[(d.month, d.weekday)] += 1
            per_hour: dict[int, np.ndarray] = {h: np.zeros(n) for h in hours}
            for r in d.requests:
                h = r.entry_time // SECONDS_PER_HOUR
                per_hour[h][(r.entry_time % SECONDS_PER_HOUR) // width] += 1
            for h, counts in per_hour.items():
                sums[(d.month, d.weekday, h % 24)] += counts
        self._means = {k: v / days[k[:2]] for k, v in sums.items()}
        return self

    def forecast(self, observed: Sequence[int], context: DemandContext) -> CountForecast:
        if self._means is None:
            raise DemandError("forecaster is not trained")
        if len(observed) != self.n_intervals:
            raise ValueError(f"expected {self.n_intervals} observed counts, got {len(observed)}")
        mean = self._means.get((context.month, context.weekday, context.hour))
        if mean is None:
            return CountForecast((0,) * self.n_intervals)
        return CountForecast(tuple(int(math.floor(x + 0.5)) for x in mean))


class BootstrapForecaster:
    """Day total from a normal fit of historical day totals, spread uniformly over the day's intervals."""

    def __init__(self, n_intervals: int = DEFAULT_INTERVALS, seed: int = 0):
        self.n_intervals = n_intervals
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self._fit: tuple[float, float, int] | None = None

    def fit(self, history: Sequence[DayLog], operating_hours: int | None = None) -> "BootstrapForecaster":
        if not history:
            raise DemandError("empty history")
        totals = np.array([len(d.requests) for d in history], dtype=float)
        if operating_hours is None:
            hours = {r.entry_time // SECONDS_PER_HOUR for d in history for r in d.requests}
            operating_hours = max(1, (max(hours) - min(hours) + 1) if hours else 1)
        self._fit = (float(totals.mean()), float(totals.std(ddof=1)) if len(totals) > 1 else 0.0,
                     operating_hours * self.n_intervals)
        return self

    def reseed(self, seed: int) -> None:
        self.seed = seed
        self._rng = np.random.default_rng(seed)

    def forecast(self, observed: Sequence[int], context: DemandContext) -> CountForecast:
        if self._fit is None:
            raise DemandError("forecaster is not trained")
        if len(observed) != self.n_intervals:
            raise ValueError(f"expected {self.n_intervals} observed counts, got {len(observed)}")
        mu, sigma, n_day = self._fit
        total = max(0, int(round(self._rng.normal(mu, sigma))))
        counts = self._rng.multinomial(total, np.full(n_day, 1.0 / n_day))[:self.n_intervals]
        return CountForecast(tuple(int(c) for c in counts))


class PrecomputedForecaster:
    """Forecasts read from ``forecast <date> <hour> <k> <count>`` records (externally trained models)."""

    def __init__(self, table: dict[tuple[str, int], list[int]], n_intervals: int = DEFAULT_INTERVALS):
        self.n_intervals = n_intervals
        self.table = table

    @classmethod
    def load(cls, path: str | PathLike, n_intervals: int = DEFAULT_INTERVALS) -> "PrecomputedForecaster":
        table: dict[tuple[str, int], list[int]] = {}
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split()
                if parts[0] != "forecast" or len(parts) != 5:
                    raise DemandError(f"{path}:{lineno}: cannot parse {raw.strip()!r}")
                date, hour, k, count = parts[1], int(parts[2]), int(parts[3]), int(parts[4])
                if not 0 <= k < n_intervals or count < 0:
                    raise DemandError(f"{path}:{lineno}: interval or count out of range")
                table.setdefault((date, hour), [0] * n_intervals)[k] = count
        return cls(table, n_intervals)

    def forecast(self, observed: Sequence[int], context: DemandContext) -> CountForecast:
        counts = self.table.get((context.date, context.hour), [0] * self.n_intervals)
        return CountForecast(tuple(counts))


def forecast_counts(forecaster: CountForecaster, observed: Sequence[int], context: DemandContext) -> CountForecast:
    fc = forecaster.forecast(observed, context)
    if len(fc) != forecaster.n_intervals:
        raise DemandError(f"forecaster returned {len(fc)} intervals, expected {forecaster.n_intervals}")
    return fc


# ---------------------------------------------------------------- sampling

def sample_locations(hist: ConditionalHistograms, context: DemandContext, n: int,
                     rng: np.random.Generator) -> list[tuple[int, int]]:
    """Draw ``n`` (pickup, dropoff) pairs; dropoffs are conditioned on the drawn pickup."""
    if n == 0:
        return []
    p_pick = hist.pickup_distribution(context.month, context.weekday, context.hour)
    picks = rng.choice(hist.n_nodes, size=n, p=p_pick) + 1
    out = []
    cache: dict[int, np.ndarray] = {}
    for rho in picks.tolist():
        p_drop = cache.get(rho)
        if p_drop is None:
            p_drop = cache[rho] = hist.dropoff_distribution(context.month, context.weekday, rho)
        delta = int(rng.choice(hist.n_nodes, p=p_drop)) + 1
        out.append((rho, delta))
    return out


def sample_scenarios(forecast: CountForecast, hist: ConditionalHistograms, context: DemandContext,
                     seed: int | np.random.Generator, n: int = DEFAULT_SCENARIOS, hour_start: int | None = None,
                     lead: int = DEFAULT_LEAD, t_last: int | None = None) -> list[Scenario]:
    """Sample ``n`` future scenarios for the hour starting at ``hour_start``.

    A request predicted for interval ``k`` enters at the interval's end and
    asks to be picked up ``lead`` seconds later; requests that would ask for
    a pickup after ``t_last`` are dropped.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n_int = len(forecast)
    if hour_start is None:
        hour_start = context.hour * SECONDS_PER_HOUR
    width = SECONDS_PER_HOUR // n_int
    scenarios = []
    next_id = SYNTHETIC_ID_BASE
    for _ in range(n):
        locs = sample_locations(hist, context, forecast.total, rng)
        reqs = []
        it = iter(locs)
        for k, count in enumerate(forecast.counts):
            entry = hour_start + (k + 1) * width
            for _ in range(count):
                rho, delta = next(it)
                if t_last is not None and entry + lead > t_last:
                    continue
                reqs.append(Request(next_id, rho, delta, entry, entry + lead))
                next_id += 1
        scenarios.append(Scenario(reqs))
    return scenarios


class DemandModel:
    """Bundles a forecaster with the location histograms for use inside rollout."""

    def __init__(self, forecaster: CountForecaster, histograms: ConditionalHistograms,
                 n_scenarios: int = DEFAULT_SCENARIOS, lead: int = DEFAULT_LEAD):
        self.forecaster = forecaster
        self.histograms = histograms
        self.n_scenarios = n_scenarios
        self.lead = lead

    @property
    def n_intervals(self) -> int:
        return self.forecaster.n_intervals

    def scenarios(self, observed: Sequence[int], day: DayLog, hour_start: int, seed: int,
                  t_last: int | None = None) -> list[Scenario]:
        ctx = DemandContext(day.month, day.weekday, hour_of(hour_start), date=day.date)
        if isinstance(self.forecaster, BootstrapForecaster):
            self.forecaster.reseed(seed)
        fc = forecast_counts(self.forecaster, observed, ctx)
        return sample_scenarios(fc, self.histograms, ctx, seed, self.n_scenarios, hour_start, self.lead, t_last)
