"""RSSI channel model: render packet schedules into sampled dBm traces and
recover packet rising edges from them.

Powers combine in linear milliwatts: the noise floor, every scheduled packet
and every interference packet active at a sample instant are summed, then a
Gaussian perturbation of ``sigma_db`` is applied in the dB domain.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numba
import numpy as np

# 6 kHz RSSI sampling, the TelosB rate
DEFAULT_SAMPLE_PERIOD_NS = 166_667
DEFAULT_MARGIN_DB = 10.0
DEFAULT_MIN_HIGH_SAMPLES = 3
DEFAULT_BASELINE_ALPHA = 0.01


@dataclass(frozen=True)
class PacketEvent:
    start: int
    duration_ns: int
    power_dbm: float

    def __post_init__(self):
        if self.duration_ns <= 0:
            raise ValueError("duration_ns must be positive")

    @property
    def end(self) -> int:
        return self.start + self.duration_ns


@dataclass(frozen=True)
class NoiseModel:
    floor_dbm: float = -95.0
    sigma_db: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma_db < 0:
            raise ValueError("sigma_db must be non-negative")


def _span_draw(rng: np.random.Generator, spec, n: int) -> np.ndarray:
    if isinstance(spec, (tuple, list)):
        lo, hi = spec
        return rng.uniform(lo, hi, n)
    return np.full(n, float(spec))


@dataclass(frozen=True)
class InterferenceModel:
    """Foreign WiFi traffic as a Poisson packet process.

    ``duration_ns`` and ``power_dbm`` are either fixed values or ``(lo, hi)``
    ranges drawn uniformly per packet.
    """

    mean_rate_hz: float = 0.0
    duration_ns: int | tuple[int, int] = 1_000_000
    power_dbm: float | tuple[float, float] = -60.0
    seed: int = 0

    def __post_init__(self):
        if self.mean_rate_hz < 0:
            raise ValueError("mean_rate_hz must be non-negative")

    def events(self, span: tuple[int, int], rng: np.random.Generator | None = None) -> list[PacketEvent]:
        if self.mean_rate_hz == 0:
            return []
        if rng is None:
            rng = np.random.default_rng(self.seed)
        max_dur = max(self.duration_ns) if isinstance(self.duration_ns, (tuple, list)) else self.duration_ns
        lo = span[0] - int(max_dur)
        width_s = (span[1] - lo) / 1e9
        n = int(rng.poisson(self.mean_rate_hz * width_s))
        starts = np.sort(rng.uniform(lo, span[1], n))
        durs = _span_draw(rng, self.duration_ns, n)
        powers = _span_draw(rng, self.power_dbm, n)
        return [
            PacketEvent(int(s), max(1, int(d)), float(p))
            for s, d, p in zip(starts, durs, powers)
        ]


@dataclass
class RssiTrace:
    """Sample ``i`` was taken at true time ``start + i * sample_period_ns``."""

    start: int
    sample_period_ns: int
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.sample_period_ns <= 0:
            raise ValueError("sample_period_ns must be positive")
        self.samples = np.asarray(self.samples, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def end(self) -> int:
        return self.start + len(self.samples) * self.sample_period_ns

    def time_of(self, index: int) -> int:
        return self.start + int(index) * self.sample_period_ns

    def index_at(self, t: int) -> int:
        """Index of the first sample taken at or after ``t``."""
        return -((self.start - int(t)) // self.sample_period_ns)

    def slice(self, t0: int, t1: int) -> "RssiTrace":
        i0 = max(0, self.index_at(t0))
        i1 = min(len(self), max(i0, self.index_at(t1)))
        return RssiTrace(self.time_of(i0), self.sample_period_ns, self.samples[i0:i1])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# start_ns={self.start} sample_period_ns={self.sample_period_ns}\n")
            w = csv.writer(fh)
            w.writerow(["sample_index", "dbm"])
            for i, v in enumerate(self.samples):
                w.writerow([i, repr(float(v))])

    @classmethod
    def from_csv(cls, path: str | Path, start: int | None = None,
                 sample_period_ns: int | None = None) -> "RssiTrace":
        meta = {}
        values = []
        with open(path, newline="") as fh:
            for line in fh:
                if line.startswith("#"):
                    for tok in line[1:].split():
                        k, _, v = tok.partition("=")
                        meta[k] = int(v)
                    continue
                row = next(csv.reader([line]))
                if row[0] == "sample_index":
                    continue
                if int(row[0]) != len(values):
                    raise ValueError(f"non-contiguous sample_index {row[0]} in {path}")
                values.append(float(row[1]))
        if start is None:
            start = meta.get("start_ns", 0)
        if sample_period_ns is None:
            sample_period_ns = meta.get("sample_period_ns", DEFAULT_SAMPLE_PERIOD_NS)
        return cls(start, sample_period_ns, np.array(values))


@dataclass(frozen=True)
class PacketDetection:
    rise_sample_index: int
    rise_true_time: int
    mean_power_dbm: float
    fall_sample_index: int = -1


def dbm_to_mw(dbm):
    return np.power(10.0, np.asarray(dbm, dtype=np.float64) / 10.0)


def mw_to_dbm(mw):
    return 10.0 * np.log10(mw)


def _ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


def render_trace(
    schedule: Iterable[PacketEvent],
    noise: NoiseModel = NoiseModel(),
    interference: InterferenceModel = InterferenceModel(),
    sample_period_ns: int = DEFAULT_SAMPLE_PERIOD_NS,
    span: tuple[int, int] = (0, 0),
    rng: np.random.Generator | None = None,
    interference_rng: np.random.Generator | None = None,
) -> RssiTrace:
    """Sample the channel over ``span = (t0, t1)``.

    ``rng`` drives the dB perturbation and ``interference_rng`` the foreign
    traffic; each defaults to a generator seeded from its model.
    """
    t0, t1 = int(span[0]), int(span[1])
    if t1 <= t0:
        raise ValueError(f"empty span {span}")
    n = _ceil_div(t1 - t0, sample_period_ns)
    mw = np.full(n, float(dbm_to_mw(noise.floor_dbm)))
    packets = list(schedule) + interference.events((t0, t1), interference_rng)
    # fixed summation order keeps the output independent of schedule order
    packets.sort(key=lambda p: (p.start, p.duration_ns, p.power_dbm))
    for p in packets:
        i0 = max(0, _ceil_div(p.start - t0, sample_period_ns))
        i1 = min(n, _ceil_div(p.end - t0, sample_period_ns))
        if i1 > i0:
            mw[i0:i1] += dbm_to_mw(p.power_dbm)
    dbm = mw_to_dbm(mw)
    if noise.sigma_db > 0:
        if rng is None:
            rng = np.random.default_rng(noise.seed)
        dbm += noise.sigma_db * rng.standard_normal(n)
    return RssiTrace(t0, sample_period_ns, dbm)


@numba.njit(cache=True)
def _scan_edges(x, base, margin, alpha, min_high, min_low):  # pragma: no cover - jitted
    n = x.shape[0]
    rises = np.empty(n, dtype=np.int64)
    falls = np.empty(n, dtype=np.int64)
    count = 0
    in_pkt = False
    low_run = 0
    i = 0
    while i < n:
        hi = x[i] > base + margin
        if not in_pkt:
            if hi:
                ok = True
                for k in range(1, min_high):
                    if i + k >= n or not (x[i + k] > base + margin):
                        ok = False
                        break
                if ok:
                    in_pkt = True
                    low_run = 0
                    rises[count] = i
                    i += min_high
                    continue
            else:
                base += alpha * (x[i] - base)
        else:
            if hi:
                low_run = 0
            else:
                base += alpha * (x[i] - base)
                low_run += 1
                if low_run >= min_low:
                    falls[count] = i - min_low + 1
                    count += 1
                    in_pkt = False
        i += 1
    if in_pkt:
        falls[count] = n
        count += 1
    return rises[:count], falls[:count]


def detect_packets(
    trace: RssiTrace,
    margin_db: float = DEFAULT_MARGIN_DB,
    min_high_samples: int = DEFAULT_MIN_HIGH_SAMPLES,
    alpha: float = DEFAULT_BASELINE_ALPHA,
    min_low_samples: int | None = None,
    interpolate: bool = False,
    baseline_dbm: float | None = None,
) -> list[PacketDetection]:
    """Find packet rising edges in ``trace``.

    A packet starts at the first sample above ``baseline + margin_db`` that is
    followed by ``min_high_samples - 1`` further high samples, and ends after
    ``min_low_samples`` (default ``min_high_samples``) consecutive low ones.
    The baseline is an EMA of non-high samples, initialised from the trace's
    median unless ``baseline_dbm`` is given.  A run that is already
    high at sample 0 has no visible edge and is dropped.

    With ``interpolate`` the rise time is moved back half a sample period,
    the midpoint between the last low and the first high sample.
    """
    if margin_db <= 0:
        raise ValueError("margin_db must be positive")
    if min_high_samples < 1:
        raise ValueError("min_high_samples must be >= 1")
    if len(trace) == 0:
        return []
    x = trace.samples
    if baseline_dbm is None:
        baseline_dbm = float(np.median(x))
    rises, falls = _scan_edges(
        x, float(baseline_dbm), float(margin_db), float(alpha),
        int(min_high_samples), int(min_low_samples or min_high_samples),
    )
    shift = trace.sample_period_ns // 2 if interpolate else 0
    out = []
    for r, f in zip(rises.tolist(), falls.tolist()):
        if r == 0:
            continue
        out.append(PacketDetection(
            rise_sample_index=r,
            rise_true_time=trace.time_of(r) - shift,
            mean_power_dbm=float(mw_to_dbm(dbm_to_mw(x[r:f]).mean())),
            fall_sample_index=f,
        ))
    return out


def jitter_schedule(
    events: Sequence[PacketEvent],
    jitter,
    rng: np.random.Generator,
    rigid: bool = False,
) -> list[PacketEvent]:
    """Apply sender emission delays to a nominal schedule.

    Each packet is sent relative to the actual emission of its predecessor,
    so per-interval delays accumulate and every measured interval comes out
    longer than nominal on average.  With ``rigid`` a single delay shifts the
    whole block, as for a hardware-timed burst.
    """
    events = sorted(events, key=lambda e: e.start)
    if not events or jitter.is_identity:
        return list(events)
    if rigid:
        d = jitter.sample(rng)
        return [PacketEvent(e.start + d, e.duration_ns, e.power_dbm) for e in events]
    delays = np.cumsum(jitter.sample(rng, len(events))).tolist()
    return [PacketEvent(e.start + d, e.duration_ns, e.power_dbm) for e, d in zip(events, delays)]


def rise_times(detections: Sequence[PacketDetection]) -> list[int]:
    return [d.rise_true_time for d in detections]


def intervals(detections: Sequence[PacketDetection]) -> list[int]:
    """Rise-to-rise gaps in ns; empty when fewer than two detections."""
    rises = rise_times(detections)
    return [b - a for a, b in zip(rises, rises[1:])]



__all__ = [
    "DEFAULT_SAMPLE_PERIOD_NS", "PacketEvent", "NoiseModel", "InterferenceModel",
    "RssiTrace", "PacketDetection", "render_trace", "detect_packets", "intervals",
    "rise_times", "jitter_schedule", "dbm_to_mw", "mw_to_dbm",
]
