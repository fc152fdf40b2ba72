"""Event-time analysis around trading halts.

Event time counts traded minutes only: t = -1 is the last bar before
the halt, t = 0 the first bar after resumption, and neither the halted
span nor overnight gaps consume indices. Activity measures (absolute
return, volume, bid-ask spread) are deseasonalized by dividing each
value by a per-minute baseline averaged over the 40 most recent active
days before the halt, which removes the U-shaped intraday profile.
Cumulative log-return curves use a wider symmetric window and are pinned
to zero at t = 0.

All averaging uses running (Welford) accumulation in sorted event order,
so results are independent of input order and bitwise reproducible; it
also keeps the mean of N identical series exactly equal to that series.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    EmptyGroup,
    InsufficientHistory,
    InsufficientPostWindow,
    InsufficientWindow,
    NoData,
    ZeroBaseline,
)
from .events import EventSign, HaltEvent, HaltType, group_name
from .market_data import MINUTES_PER_DAY, Panel

# event-time windows, in traded minutes
MEASURE_PRE_WINDOW = 80
POST_WINDOW = 160
CUMULATIVE_WINDOW = 160
DEFAULT_LOOKBACK_DAYS = 40

SERIES_CSV_HEADER = ("group", "measure", "t", "mean", "stderr", "n")
CUMULATIVE_LABEL = "cumulative_return"


class MeasureKind(Enum):
    """Per-minute activity measures taken from the bar stream."""

    ABSOLUTE_RETURN = "absolute_return"
    VOLUME = "volume"
    BID_ASK_SPREAD = "bid_ask_spread"


class _Welford:
    """Per-slot running mean and spread that skip missing (NaN) entries.

    Updates add zero increments for slots where the incoming value is
    missing or identical to the running mean, so averaging N copies of
    one series reproduces it bit for bit and its spread is exactly 0.
    """

    def __init__(self, size: int):
        self.n = np.zeros(size, dtype=np.int64)
        self.mean = np.zeros(size)
        self.m2 = np.zeros(size)

    def add(self, values: np.ndarray) -> None:
        ok = ~np.isnan(values)
        self.n[ok] += 1
        delta = np.where(ok, values - self.mean, 0.0)
        self.mean += delta / np.maximum(self.n, 1)
        delta2 = np.where(ok, values - self.mean, 0.0)
        self.m2 += delta * delta2

    def counts(self) -> np.ndarray:
        return self.n.copy()

    def means(self) -> np.ndarray:
        return np.where(self.n > 0, self.mean, np.nan)

    def sample_stds(self) -> np.ndarray:
        out = np.full(self.n.size, np.nan)
        two = self.n >= 2
        out[two] = np.sqrt(self.m2[two] / (self.n[two] - 1))
        return out

    def stderrs(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return self.sample_stds() / np.sqrt(self.n)


@dataclass(frozen=True)
class IntradayPattern:
    """Per-minute baseline I(1..240) for one stock, measure and event.

    ``values[m-1]`` is the mean of the measure at intraday minute m over
    the lookback days; minutes never observed are NaN and
    ``n_observations`` carries the per-minute averaging count.
    """

    measure: MeasureKind
    lookback_days: int
    values: np.ndarray
    n_observations: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != (MINUTES_PER_DAY,):
            raise ValueError("pattern must cover one full session")
        if self.n_observations.shape != (MINUTES_PER_DAY,):
            raise ValueError("observation counts must cover one full session")

    def baseline(self, minute: int) -> float:
        """I at intraday minute 1..240."""
        if not 1 <= minute <= MINUTES_PER_DAY:
            raise ValueError(f"minute index out of range: {minute}")
        return float(self.values[minute - 1])


@dataclass(frozen=True)
class EventTrajectory:
    """Deseasonalized series z(t) for one event and measure.

    ``t`` runs -80..160 by default; NaN marks minutes with no usable
    observation (filled bars, missing quotes, or an absent predecessor
    for returns).
    """

    event: HaltEvent
    measure: MeasureKind
    t: np.ndarray
    values: np.ndarray

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)


@dataclass(frozen=True)
class GroupAverage:
    """Equal-weight per-t average of one measure over one event group."""

    measure: MeasureKind
    halt_type: HaltType
    sign: EventSign
    t: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n: np.ndarray

    @property
    def group(self) -> str:
        return group_name(self.halt_type, self.sign)


@dataclass(frozen=True)
class CumulativeReturnCurve:
    """Averaged cumulative log-return path, shifted so the t = 0 value is 0."""

    halt_type: HaltType
    sign: EventSign
    t: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n: int

    @property
    def group(self) -> str:
        return group_name(self.halt_type, self.sign)

    @property
    def stability_s(self) -> float:
        return stability_stat(self)


def measure_series(panel: Panel, stock_id: str,
                   measure: MeasureKind) -> np.ndarray:
    """Measure values per global minute, NaN where nothing was observed.

    Only real (non-filled) bars carry values. Absolute returns also need
    a bar at the previous traded minute; spreads need both quotes.
    """
    real = panel.present_mask(stock_id) & ~panel.synthetic_mask(stock_id)
    if measure is MeasureKind.ABSOLUTE_RETURN:
        lnp = panel.log_prices(stock_id)
        ok = real.copy()
        ok[0] = False
        ok[1:] &= panel.present_mask(stock_id)[:-1]
        out = np.full(lnp.size, np.nan)
        out[1:] = np.abs(np.diff(lnp))
        return np.where(ok, out, np.nan)
    if measure is MeasureKind.VOLUME:
        return np.where(real, panel.volumes(stock_id), np.nan)
    spread = panel.asks(stock_id) - panel.bids(stock_id)
    return np.where(real, spread, np.nan)


def compute_intraday_pattern(panel: Panel, event: HaltEvent,
                             measure: MeasureKind,
                             lookback: int = DEFAULT_LOOKBACK_DAYS,
                             ) -> IntradayPattern:
    """Average the measure per intraday minute over recent active days.

    The window is the ``lookback`` most recent days before the event's
    halt day on which the stock actually traded; fully suspended days
    are skipped rather than counted. Minutes with no observation on any
    window day come out NaN.
    """
    if lookback < 1:
        raise ValueError("lookback must be positive")
    rec = event.record
    cal = panel.calendar
    real = panel.present_mask(rec.stock_id) & ~panel.synthetic_mask(rec.stock_id)
    active = np.flatnonzero(
        real.reshape(cal.n_days, MINUTES_PER_DAY).any(axis=1))
    active = active[active < cal.day_index(rec.halt_day)]
    if active.size < lookback:
        raise InsufficientHistory(
            f"{rec.stock_id}: {active.size} active days before "
            f"{rec.halt_day}, need {lookback}")
    series = measure_series(panel, rec.stock_id, measure)
    acc = _Welford(MINUTES_PER_DAY)
    for d in active[-lookback:]:
        start = int(d) * MINUTES_PER_DAY
        acc.add(series[start:start + MINUTES_PER_DAY])
    return IntradayPattern(measure, lookback, acc.means(), acc.counts())


def deseasonalize(value: float, baseline: float) -> float:
    """Express a raw measure value as a multiple of its baseline."""
    if not baseline > 0:
        raise ZeroBaseline(f"baseline {baseline} is not positive")
    return value / baseline


def extract_trajectory(panel: Panel, event: HaltEvent, measure: MeasureKind,
                       pattern: IntradayPattern | None = None,
                       pre_window: int = MEASURE_PRE_WINDOW,
                       post_window: int = POST_WINDOW) -> EventTrajectory:
    """Deseasonalized event-time series over t = -pre_window..post_window.

    Each raw value is divided by the pattern value for its own intraday
    minute. Minutes without an observation stay NaN; a minute whose
    observation would divide by a zero or undefined baseline raises
    ZeroBaseline.
    """
    rec = event.record
    cal = panel.calendar
    g_begin = rec.global_begin(cal)
    g_resume = rec.global_resume(cal)
    if g_begin - pre_window < 0:
        raise InsufficientHistory(
            f"{rec.stock_id}: pre window starts before the calendar")
    try:
        first, last = panel.coverage(rec.stock_id)
    except NoData as exc:
        raise InsufficientHistory(str(exc)) from None
    if first > g_begin - pre_window:
        raise InsufficientHistory(
            f"{rec.stock_id}: bars start inside the pre window")
    if last < g_resume + post_window:
        raise InsufficientPostWindow(
            f"{rec.stock_id}: bars end {g_resume + post_window - last} "
            "minutes short of the post window")
    if pattern is None:
        pattern = compute_intraday_pattern(panel, event, measure)
    elif pattern.measure is not measure:
        raise ValueError("pattern measure does not match")
    series = measure_series(panel, rec.stock_id, measure)
    gs = np.concatenate([np.arange(g_begin - pre_window, g_begin),
                         np.arange(g_resume, g_resume + post_window + 1)])
    raw = series[gs]
    base = pattern.values[gs % MINUTES_PER_DAY]
    observed = ~np.isnan(raw)
    with np.errstate(invalid="ignore"):
        bad = observed & ~(base > 0)
    if bad.any():
        t_bad = int(np.arange(-pre_window, post_window + 1)[bad][0])
        raise ZeroBaseline(
            f"{rec.stock_id}: unusable baseline at event minute {t_bad}")
    values = np.full(raw.size, np.nan)
    values[observed] = raw[observed] / base[observed]
    return EventTrajectory(event, measure,
                           np.arange(-pre_window, post_window + 1), values)


def _check_same_group(events: Sequence[HaltEvent]) -> tuple[HaltType, EventSign]:
    halt_type = events[0].halt_type
    sign = events[0].sign
    if sign is None:
        raise ValueError("event without a trend sign")
    for ev in events[1:]:
        if ev.halt_type is not halt_type or ev.sign is not sign:
            raise ValueError("events from different groups")
    return halt_type, sign


def group_average(trajectories: Iterable[EventTrajectory]) -> GroupAverage:
    """Equal-weight per-t mean with per-t standard error and count.

    Only non-missing values enter each t's average. Accumulation runs in
    ascending (stock_id, halt begin) order, so the result is identical
    however the trajectories were produced or ordered.
    """
    trajs = sorted(trajectories, key=lambda tr: tr.event.record.sort_key())
    if not trajs:
        raise EmptyGroup("no trajectories to average")
    halt_type, sign = _check_same_group([tr.event for tr in trajs])
    head = trajs[0]
    acc = _Welford(head.values.size)
    for tr in trajs:
        if tr.measure is not head.measure:
            raise ValueError("trajectories mix measures")
        if not np.array_equal(tr.t, head.t):
            raise ValueError("trajectories use different event-time axes")
        acc.add(tr.values)
    return GroupAverage(head.measure, halt_type, sign, head.t.copy(),
                        acc.means(), acc.stderrs(), acc.counts())


def average_cumulative_return(panel: Panel, events: Sequence[HaltEvent],
                              window: int = CUMULATIVE_WINDOW,
                              ) -> CumulativeReturnCurve:
    """Average cumulative log-return path over t = -window..window.

    Each event contributes the running sum of its event-time returns;
    the return at t = 0 is the jump from the last pre-halt price to the
    first post-resumption price, however long the halt lasted. Events
    are averaged with equal weights and the curve is then shifted
    vertically so its t = 0 value is exactly zero.
    """
    ordered = sorted(events, key=lambda ev: ev.record.sort_key())
    if not ordered:
        raise EmptyGroup("no events to average")
    halt_type, sign = _check_same_group(ordered)
    cal = panel.calendar
    acc = _Welford(2 * window + 1)
    for ev in ordered:
        rec = ev.record
        g_pre = rec.global_pre(cal)
        g_resume = rec.global_resume(cal)
        if g_pre - window < 0:
            raise InsufficientWindow(
                f"{rec.stock_id}: return window starts before the calendar")
        try:
            first, last = panel.coverage(rec.stock_id)
        except NoData as exc:
            raise InsufficientWindow(str(exc)) from None
        if first > g_pre - window or last < g_resume + window:
            raise InsufficientWindow(
                f"{rec.stock_id}: bars do not cover both return windows")
        lnp = panel.log_prices(rec.stock_id)
        gs = np.concatenate([np.arange(g_pre - window, g_pre + 1),
                             np.arange(g_resume, g_resume + window + 1)])
        prices = lnp[gs]
        if np.isnan(prices).any():
            raise InsufficientWindow(
                f"{rec.stock_id}: missing bar inside the return window")
        acc.add(np.cumsum(np.diff(prices)))
    mean = acc.means()
    return CumulativeReturnCurve(halt_type, sign, np.arange(-window, window + 1),
                                 mean - mean[window], acc.stderrs(),
                                 len(ordered))


def stability_stat(curve: CumulativeReturnCurve) -> float:
    """Sample standard deviation of the averaged curve strictly after t = 0.

    The t = 0 point is excluded: the vertical shift pins it to zero, so
    it carries no variation. An exactly flat tail gives exactly 0.0.
    """
    t0 = int(np.flatnonzero(curve.t == 0)[0])
    tail = curve.mean[t0 + 1:]
    if tail.size < 2:
        raise ValueError("curve too short for a spread statistic")
    if np.all(tail == tail[0]):
        return 0.0
    return float(np.std(tail, ddof=1))


def reversal_stats(panel: Panel, events: Sequence[HaltEvent],
                   horizons: Sequence[int] = (1, 2)) -> dict[int, float]:
    """Fraction of events whose early post-halt move opposed their trend.

    For horizon k the move is the log-price change from the last
    pre-halt bar to the k-th bar after resumption. Only a strictly
    opposite sign counts; an unchanged price does not.
    """
    ordered = sorted(events, key=lambda ev: ev.record.sort_key())
    if not ordered:
        raise EmptyGroup("no events")
    cal = panel.calendar
    out = {}
    for k in horizons:
        if k < 1:
            raise ValueError(f"horizon must be positive, got {k}")
        n_reversed = 0
        for ev in ordered:
            if ev.sign is None:
                raise ValueError("event without a trend sign")
            rec = ev.record
            lnp = panel.log_prices(rec.stock_id)
            g_pre = rec.global_pre(cal)
            g_post = rec.global_resume(cal) + k - 1
            if g_pre < 0 or np.isnan(lnp[g_pre]):
                raise InsufficientHistory(
                    f"{rec.stock_id}: no pre-halt bar")
            if g_post >= lnp.size or np.isnan(lnp[g_post]):
                raise InsufficientPostWindow(
                    f"{rec.stock_id}: no bar {k} minutes after resumption")
            move = lnp[g_post] - lnp[g_pre]
            if ev.sign is EventSign.NEGATIVE and move > 0:
                n_reversed += 1
            elif ev.sign is EventSign.POSITIVE and move < 0:
                n_reversed += 1
        out[k] = n_reversed / len(ordered)
    return out


def _field(x: float) -> str:
    return "" if np.isnan(x) else repr(float(x))


def write_group_average_csv(averages: Iterable[GroupAverage],
                            stream: IO[str]) -> None:
    """Rows ``group,measure,t,mean,stderr,n``, sorted by group and measure."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(SERIES_CSV_HEADER)
    for ga in sorted(averages, key=lambda a: (a.group, a.measure.value)):
        for i, t in enumerate(ga.t):
            writer.writerow((ga.group, ga.measure.value, int(t),
                             _field(ga.mean[i]), _field(ga.stderr[i]),
                             int(ga.n[i])))


def write_curve_csv(curves: Iterable[CumulativeReturnCurve],
                    stream: IO[str]) -> None:
    """Cumulative curves in the same layout as the measure averages."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(SERIES_CSV_HEADER)
    for curve in sorted(curves, key=lambda c: c.group):
        for i, t in enumerate(curve.t):
            writer.writerow((curve.group, CUMULATIVE_LABEL, int(t),
                             _field(curve.mean[i]), _field(curve.stderr[i]),
                             curve.n))
