"""Exogenous drivers: weather, grid carbon intensity, workload, and tariff.

Covers CSV ingestion/validation, resampling of hourly public data to the
15-minute control grid, OU noise augmentation for training robustness, and
deterministic synthetic location profiles (AZ / NY / WA fixtures).
"""

import csv
import json
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path

import numpy as np

from . import kernels
from .errors import (
    BadDays,
    EmptyFile,
    IncompatibleStep,
    MalformedRow,
    NonUniformSpacing,
    OutOfRange,
    WrongKind,
)


class SeriesKind(Enum):
    WEATHER_C = "weather_c"
    CI_G_PER_KWH = "ci_g_per_kwh"
    WORKLOAD_FRACTION = "workload_fraction"


@dataclass
class TimeSeries:
    """Uniformly spaced scalar signal starting at a UTC timestamp."""

    start_time: datetime
    step_minutes: int
    values: np.ndarray
    kind: SeriesKind

    def __post_init__(self):
        if self.step_minutes <= 0:
            raise OutOfRange(f"step_minutes must be positive, got {self.step_minutes}")
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.size == 0:
            raise EmptyFile("series has no values")
        if self.start_time.tzinfo is None:
            self.start_time = self.start_time.replace(tzinfo=timezone.utc)
        if self.kind == SeriesKind.WORKLOAD_FRACTION:
            if self.values.min() < 0.0 or self.values.max() > 1.0:
                raise OutOfRange("workload fraction values must lie in [0, 1]")
        elif self.kind == SeriesKind.CI_G_PER_KWH:
            if self.values.min() < 0.0:
                raise OutOfRange("carbon intensity values must be non-negative")

    def __len__(self) -> int:
        return int(self.values.size)

    def time_at(self, index: int) -> datetime:
        return self.start_time + timedelta(minutes=self.step_minutes * index)


@dataclass(frozen=True)
class TouBand:
    hour_start: int
    hour_end: int
    weekend: bool
    price: float


@dataclass
class TouSchedule:
    """Time-of-use tariff: hour_start inclusive, hour_end exclusive.

    Validity requires that every (hour-of-day, weekend-flag) pair is covered
    by exactly one band, so `price_at` is total by construction.
    """

    bands: list

    def __post_init__(self):
        for flag in (False, True):
            cover = np.zeros(24, dtype=np.int64)
            for b in self.bands:
                if not (0 <= b.hour_start < b.hour_end <= 24):
                    raise OutOfRange(f"band hours invalid: {b}")
                if b.price < 0:
                    raise OutOfRange(f"negative price: {b}")
                if b.weekend == flag:
                    cover[b.hour_start:b.hour_end] += 1
            if not np.all(cover == 1):
                raise OutOfRange(
                    f"{'weekend' if flag else 'weekday'} hours not covered exactly once"
                )

    @classmethod
    def flat(cls, price: float) -> "TouSchedule":
        """Single-price schedule (one all-day band per weekend flag)."""
        return cls([TouBand(0, 24, False, price), TouBand(0, 24, True, price)])

    def to_json_obj(self) -> list:
        return [
            {"hour_start": b.hour_start, "hour_end": b.hour_end,
             "weekend": b.weekend, "price": b.price}
            for b in self.bands
        ]

    @classmethod
    def from_json_obj(cls, obj: list) -> "TouSchedule":
        return cls([
            TouBand(int(d["hour_start"]), int(d["hour_end"]),
                    bool(d["weekend"]), float(d["price"]))
            for d in obj
        ])


@dataclass(frozen=True)
class OuParams:
    theta: float = 0.1
    sigma: float = 0.4
    mu: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.theta <= 1.0):
            raise OutOfRange(f"theta must be in (0, 1], got {self.theta}")
        if self.sigma < 0.0:
            raise OutOfRange(f"sigma must be non-negative, got {self.sigma}")


@dataclass
class TraceBundle:
    """Aligned weather/CI/workload series plus the tariff schedule."""

    weather: TimeSeries
    ci: TimeSeries
    workload: TimeSeries
    tou: TouSchedule

    def __post_init__(self):
        series = [self.weather, self.ci, self.workload]
        if len({s.start_time for s in series}) != 1:
            raise OutOfRange("bundle series must share start_time")
        if len({s.step_minutes for s in series}) != 1:
            raise OutOfRange("bundle series must share step_minutes")
        if len({len(s) for s in series}) != 1:
            raise OutOfRange("bundle series must share length")

    def __len__(self) -> int:
        return len(self.weather)

    @property
    def step_minutes(self) -> int:
        return self.weather.step_minutes


def _parse_timestamp(raw: str) -> datetime:
    text = raw.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    try:
        ts = datetime.fromisoformat(text)
    except ValueError as exc:
        raise MalformedRow(f"bad timestamp {raw!r}") from exc
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def parse_trace(path, kind: SeriesKind) -> TimeSeries:
    """Read a `timestamp,value` CSV into a validated TimeSeries.

    Timestamps must be ISO-8601 UTC, strictly increasing, and uniformly
    spaced; the step is inferred from the first gap.
    """
    path = Path(path)
    times = []
    values = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyFile(f"{path} is empty")
        if [c.strip().lower() for c in header[:2]] != ["timestamp", "value"]:
            raise MalformedRow(f"{path} must start with header 'timestamp,value'")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 2:
                raise MalformedRow(f"{path}:{lineno}: expected 2 columns")
            times.append(_parse_timestamp(row[0]))
            try:
                values.append(float(row[1]))
            except ValueError as exc:
                raise MalformedRow(f"{path}:{lineno}: non-numeric value {row[1]!r}") from exc
    if not values:
        raise EmptyFile(f"{path} has no data rows")
    if len(values) == 1:
        raise NonUniformSpacing(f"{path}: need at least 2 rows to infer the step")
    deltas = [(times[i + 1] - times[i]).total_seconds() for i in range(len(times) - 1)]
    if min(deltas) <= 0:
        raise NonUniformSpacing(f"{path}: timestamps must be strictly increasing")
    step_s = deltas[0]
    if any(d != step_s for d in deltas):
        raise NonUniformSpacing(f"{path}: spacing varies ({sorted(set(deltas))} seconds)")
    if step_s % 60 != 0:
        raise NonUniformSpacing(f"{path}: step must be a whole number of minutes")
    return TimeSeries(times[0], int(step_s // 60), np.array(values), kind)


def resample(series: TimeSeries, target_step: int) -> TimeSeries:
    """Refine a series to a finer grid.

    Weather is linearly interpolated between knots; CI and workload are
    step-held. The final knot is held to fill the tail, so the output spans
    exactly the source duration.
    """
    if target_step <= 0 or series.step_minutes % target_step != 0:
        raise IncompatibleStep(
            f"target step {target_step} must divide source step {series.step_minutes}"
        )
    factor = series.step_minutes // target_step
    if factor == 1:
        return TimeSeries(series.start_time, target_step, series.values.copy(), series.kind)
    n = len(series)
    out = np.empty(n * factor, dtype=np.float64)
    if series.kind == SeriesKind.WEATHER_C:
        for i in range(n):
            left = series.values[i]
            right = series.values[i + 1] if i + 1 < n else series.values[i]
            for j in range(factor):
                out[i * factor + j] = left + (right - left) * (j / factor)
    else:
        out = np.repeat(series.values, factor)
    return TimeSeries(series.start_time, target_step, out, series.kind)


def ou_augment(series: TimeSeries, p: OuParams, seed: int) -> TimeSeries:
    """Add a seeded Ornstein-Uhlenbeck perturbation to a weather series."""
    if series.kind != SeriesKind.WEATHER_C:
        raise WrongKind(f"OU augmentation applies to weather series, got {series.kind}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(len(series) - 1)
    noise = kernels.ou_scan(z, p.theta, p.sigma, p.mu)
    return TimeSeries(series.start_time, series.step_minutes,
                      series.values + noise, series.kind)


def price_at(tou: TouSchedule, t: datetime) -> float:
    """Price for the band covering t's UTC hour-of-day and weekend flag."""
    if t.tzinfo is None:
        t = t.replace(tzinfo=timezone.utc)
    t = t.astimezone(timezone.utc)
    weekend = t.weekday() >= 5
    hour = t.hour
    for b in tou.bands:
        if b.weekend == weekend and b.hour_start <= hour < b.hour_end:
            return b.price
    raise OutOfRange(f"no band covers {t}")  # unreachable on a valid schedule


def ci_window(ci: TimeSeries, t_index: int, n_hours: int) -> np.ndarray:
    """Current CI plus the next n_hours values at hourly offsets.

    Offsets past the series end (including a t_index at or past the end,
    which occurs for the terminal observation) repeat the final value.
    """
    steps_per_hour = 60 // ci.step_minutes
    last = len(ci) - 1
    idx = np.minimum(t_index + np.arange(n_hours + 1) * steps_per_hour, last)
    return ci.values[idx]


# --- synthetic location fixtures -------------------------------------------
#
# Constants below are fixtures tuned for qualitative realism only: WA has the
# cleanest grid, AZ the hottest weather, and the CI trough sits at the midday
# solar peak. CI noise is deliberately volatile (std 55% of the mean with a
# ~2 h decorrelation, clamped to [20, 2.4x mean]) in the spirit of a grid
# swinging between renewable surplus and peaker plants, so that intra-day
# carbon arbitrage is a first-order signal rather than a rounding error.

@dataclass(frozen=True)
class SynthProfile:
    w_mean: float
    w_annual_amp: float
    w_diurnal_amp: float
    ci_mean: float


PROFILES = {
    "NY": SynthProfile(w_mean=12.0, w_annual_amp=12.0, w_diurnal_amp=4.0, ci_mean=350.0),
    "AZ": SynthProfile(w_mean=24.0, w_annual_amp=10.0, w_diurnal_amp=6.0, ci_mean=450.0),
    "WA": SynthProfile(w_mean=11.0, w_annual_amp=7.0, w_diurnal_amp=3.0, ci_mean=150.0),
}

SYNTH_STEP_MINUTES = 15
STEPS_PER_DAY = 24 * 60 // SYNTH_STEP_MINUTES
CI_FLOOR = 20.0
CI_CAP_FRAC = 2.4         # upper clamp as a multiple of the profile mean
CI_DIURNAL_FRAC = 0.30    # diurnal amplitude as a fraction of the mean
CI_NOISE_STD_FRAC = 0.55  # OU stationary std as a fraction of the mean
CI_NOISE_THETA = 0.15     # per-step mean reversion (~2 h decorrelation)
WORKLOAD_FLOOR = 0.25
WORKLOAD_PEAK = 0.85
WEEKEND_HUMP_SCALE = 0.7


def _ou_noise(rng: np.random.Generator, n: int, theta: float, std: float) -> np.ndarray:
    if std == 0.0 or n < 2:
        return np.zeros(n)
    sigma = std * math.sqrt(theta * (2.0 - theta))
    return kernels.ou_scan(rng.standard_normal(n - 1), theta, sigma, 0.0)


def synth_bundle(profile: str, year_days: int, seed: int) -> TraceBundle:
    """Deterministic synthetic traces for one location profile at 15-min step."""
    if profile not in PROFILES:
        raise OutOfRange(f"unknown profile {profile!r}; expected one of {sorted(PROFILES)}")
    if not (1 <= year_days <= 366):
        raise BadDays(f"year_days must be in [1, 366], got {year_days}")
    p = PROFILES[profile]
    n = year_days * STEPS_PER_DAY
    start = datetime(2023, 1, 1, tzinfo=timezone.utc)
    profile_key = sorted(PROFILES).index(profile)  # process-independent, unlike hash()
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(profile_key,))
    rng_w, rng_ci = [np.random.default_rng(s) for s in ss.spawn(2)]

    step_idx = np.arange(n)
    hour = (step_idx % STEPS_PER_DAY) * (SYNTH_STEP_MINUTES / 60.0)
    day = step_idx // STEPS_PER_DAY
    dow = (6 + day) % 7  # 2023-01-01 is a Sunday
    frac_year = (day + hour / 24.0) / 365.25

    # Weather: annual cycle troughs mid-January, diurnal peaks at 15:00.
    annual = -np.cos(2.0 * np.pi * (frac_year - 15.0 / 365.25))
    diurnal_w = -np.cos(2.0 * np.pi * (hour - 3.0) / 24.0)
    weather = (p.w_mean + p.w_annual_amp * annual + p.w_diurnal_amp * diurnal_w
               + _ou_noise(rng_w, n, theta=0.1, std=1.0))

    # Carbon intensity: diurnal trough at 13:00 (solar), prominent OU noise.
    diurnal_ci = np.cos(2.0 * np.pi * (hour - 13.0) / 24.0)
    ci = p.ci_mean * (1.0 + CI_DIURNAL_FRAC * diurnal_ci)
    ci = ci + _ou_noise(rng_ci, n, theta=CI_NOISE_THETA, std=CI_NOISE_STD_FRAC * p.ci_mean)
    ci = np.clip(ci, CI_FLOOR, CI_CAP_FRAC * p.ci_mean)

    # Workload: deterministic business-hours hump, attenuated on weekends.
    hump = np.where((hour >= 8.0) & (hour < 20.0),
                    np.sin(np.pi * (hour - 8.0) / 12.0) ** 2, 0.0)
    scale = np.where(dow >= 5, WEEKEND_HUMP_SCALE, 1.0)
    workload = WORKLOAD_FLOOR + (WORKLOAD_PEAK - WORKLOAD_FLOOR) * scale * hump

    tou = TouSchedule([
        TouBand(0, 8, False, 0.10),
        TouBand(8, 20, False, 0.24),
        TouBand(20, 24, False, 0.10),
        TouBand(0, 24, True, 0.10),
    ])
    return TraceBundle(
        weather=TimeSeries(start, SYNTH_STEP_MINUTES, weather, SeriesKind.WEATHER_C),
        ci=TimeSeries(start, SYNTH_STEP_MINUTES, ci, SeriesKind.CI_G_PER_KWH),
        workload=TimeSeries(start, SYNTH_STEP_MINUTES, workload, SeriesKind.WORKLOAD_FRACTION),
        tou=tou,
    )


# --- bundle I/O -------------------------------------------------------------

_TRACE_FILES = {
    "weather.csv": ("weather", SeriesKind.WEATHER_C),
    "ci.csv": ("ci", SeriesKind.CI_G_PER_KWH),
    "workload.csv": ("workload", SeriesKind.WORKLOAD_FRACTION),
}


def write_trace_csv(path, series: TimeSeries) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "value"])
        for i, v in enumerate(series.values):
            ts = series.time_at(i).strftime("%Y-%m-%dT%H:%M:%SZ")
            writer.writerow([ts, repr(float(v))])


def write_bundle(bundle: TraceBundle, out_dir) -> None:
    """Write weather.csv, ci.csv, workload.csv, and tou.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for fname, (attr, _) in _TRACE_FILES.items():
        write_trace_csv(out / fname, getattr(bundle, attr))
    with (out / "tou.json").open("w", encoding="utf-8") as fh:
        json.dump(bundle.tou.to_json_obj(), fh, indent=1)
        fh.write("\n")


def load_bundle(trace_dir) -> TraceBundle:
    trace_dir = Path(trace_dir)
    parts = {}
    for fname, (attr, kind) in _TRACE_FILES.items():
        parts[attr] = parse_trace(trace_dir / fname, kind)
    with (trace_dir / "tou.json").open(encoding="utf-8") as fh:
        tou = TouSchedule.from_json_obj(json.load(fh))
    return TraceBundle(tou=tou, **parts)
