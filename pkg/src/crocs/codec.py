"""Timestamp transfer over the RSSI side channel.

Two modulations are provided:

* temporal: a decimal digit ``a`` becomes two packet intervals
  ``g*(10+a)`` and ``g*(20-a)`` ms, so every digit occupies a fixed
  ``30*g`` ms window.  Consecutive windows share their boundary packet.
* energy: each slot carries ``log2(L)`` bits as packet absence (0) or one
  of ``L-1`` transmit power levels.

Timestamps are 64-bit NTP-style values (32-bit seconds, 32-bit fraction).
After the first full transfer a sender may ship only the microsecond
difference from its last full timestamp, which fits in 26 bits for gaps
under about 67 s.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import PacketEvent, RssiTrace, dbm_to_mw, mw_to_dbm

NS_PER_MS = 1_000_000
TIMESTAMP_DIGITS = 20
DELTA_BITS = 26
DELTA_LIMIT_US = 1 << DELTA_BITS
DELTA_DIGITS = len(str(DELTA_LIMIT_US - 1))
_FRAC = 1 << 32


class DeltaOverflowError(ValueError):
    """The increment does not fit in 26 bits of microseconds."""


@dataclass(frozen=True, order=True)
class Timestamp64:
    value: int

    def __post_init__(self):
        if not 0 <= self.value < 1 << 64:
            raise ValueError(f"timestamp {self.value} outside 64-bit range")

    @property
    def seconds(self) -> int:
        return self.value >> 32

    @property
    def fraction(self) -> int:
        return self.value & (_FRAC - 1)

    @classmethod
    def from_parts(cls, seconds: int, fraction: int) -> "Timestamp64":
        return cls((seconds << 32) | fraction)

    @classmethod
    def _from_subunits(cls, x: int, per_second: int) -> "Timestamp64":
        sec, rem = divmod(int(x), per_second)
        frac = (rem * _FRAC + per_second // 2) // per_second
        if frac == _FRAC:
            sec, frac = sec + 1, 0
        return cls.from_parts(sec, frac)

    def _to_subunits(self, per_second: int) -> int:
        return self.seconds * per_second + (self.fraction * per_second + _FRAC // 2) // _FRAC

    @classmethod
    def from_ns(cls, ns: int) -> "Timestamp64":
        return cls._from_subunits(ns, 1_000_000_000)

    def to_ns(self) -> int:
        return self._to_subunits(1_000_000_000)

    @classmethod
    def from_us(cls, us: int) -> "Timestamp64":
        return cls._from_subunits(us, 1_000_000)

    def to_us(self) -> int:
        return self._to_subunits(1_000_000)


def timestamp_to_digits(ts: Timestamp64) -> list[int]:
    return [int(c) for c in str(ts.value).zfill(TIMESTAMP_DIGITS)]


def digits_to_timestamp(digits: Sequence[int]) -> Timestamp64:
    if len(digits) != TIMESTAMP_DIGITS:
        raise ValueError(f"expected {TIMESTAMP_DIGITS} digits, got {len(digits)}")
    return Timestamp64(int("".join(str(int(d)) for d in digits)))


def timestamp_to_bits(ts: Timestamp64, width: int = 64) -> list[int]:
    return int_to_bits(ts.value, width)


def int_to_bits(value: int, width: int) -> list[int]:
    if not 0 <= value < 1 << width:
        raise ValueError(f"{value} does not fit in {width} bits")
    return [(value >> (width - 1 - i)) & 1 for i in range(width)]


def bits_to_int(bits: Sequence[int]) -> int:
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out


def int_to_digits(value: int, width: int) -> list[int]:
    s = str(int(value))
    if value < 0 or len(s) > width:
        raise ValueError(f"{value} does not fit in {width} digits")
    return [int(c) for c in s.zfill(width)]


def digits_to_int(digits: Sequence[int]) -> int:
    return int("".join(str(int(d)) for d in digits)) if digits else 0


def delta_encode(prev: Timestamp64, cur: Timestamp64) -> int:
    """Microseconds from ``prev`` to ``cur``; raises DeltaOverflowError past 26 bits."""
    delta = cur.to_us() - prev.to_us()
    if delta < 0:
        raise DeltaOverflowError(f"timestamp went backwards by {-delta} us")
    if delta >= DELTA_LIMIT_US:
        raise DeltaOverflowError(f"delta {delta} us does not fit in {DELTA_BITS} bits")
    return delta


def delta_decode(prev: Timestamp64, delta_us: int) -> Timestamp64:
    if not 0 <= delta_us < DELTA_LIMIT_US:
        raise DeltaOverflowError(f"delta {delta_us} us outside 26-bit range")
    return Timestamp64.from_us(prev.to_us() + delta_us)


@dataclass
class DecodeResult:
    """Per-symbol decode output; ``erased[i]`` marks an abandoned symbol."""

    symbols: list[int]
    erased: list[bool]
    bits_per_symbol: int = 0
    # true time at which the last symbol became available
    ready_time: int | None = None

    @property
    def ok(self) -> bool:
        return not any(self.erased)

    @property
    def status(self) -> list[str]:
        return ["erasure" if e else "ok" for e in self.erased]

    @property
    def value(self) -> list[int] | None:
        """Decoded digits (temporal) or bits (energy); None if anything was erased."""
        if not self.ok:
            return None
        return self.units()

    def units(self) -> list[int | None]:
        if not self.bits_per_symbol:
            return [None if e else s for s, e in zip(self.symbols, self.erased)]
        out: list[int | None] = []
        for s, e in zip(self.symbols, self.erased):
            if e:
                out.extend([None] * self.bits_per_symbol)
            else:
                out.extend(int_to_bits(s, self.bits_per_symbol))
        return out


def ber(sent: Sequence[int], received) -> float:
    """Error rate between sent units and a DecodeResult (or plain sequence).

    Erased units count as errors.
    """
    got = received.units() if isinstance(received, DecodeResult) else list(received)
    if len(got) != len(sent):
        raise ValueError(f"length mismatch: sent {len(sent)}, received {len(got)}")
    if not sent:
        raise ValueError("empty streams")
    errors = sum(1 for s, r in zip(sent, got) if r is None or int(r) != int(s))
    return errors / len(sent)


# -- temporal ---------------------------------------------------------------

@dataclass(frozen=True)
class TemporalParams:
    granularity_ms: int = 1
    compensation_ns: int = 400_000
    min_interval_ns: int = 10 * NS_PER_MS

    def __post_init__(self):
        if self.granularity_ms < 1:
            raise ValueError("granularity must be at least 1 ms")

    @property
    def g_ns(self) -> int:
        return self.granularity_ms * NS_PER_MS

    @property
    def window_ns(self) -> int:
        return 30 * self.g_ns

    def digit_intervals(self, digit: int) -> tuple[int, int]:
        if not 0 <= digit <= 9:
            raise ValueError(f"digit {digit} outside 0..9")
        return (10 + digit) * self.g_ns, (20 - digit) * self.g_ns

    def check_hardware(self) -> None:
        if 10 * self.g_ns < self.min_interval_ns:
            raise ValueError(
                f"granularity {self.granularity_ms} ms gives intervals below the "
                f"{self.min_interval_ns / NS_PER_MS:g} ms hardware minimum"
            )


def temporal_encode(
    digits: Sequence[int],
    p: TemporalParams,
    start: int,
    duration_ns: int = 1_000_000,
    power_dbm: float = -60.0,
) -> list[PacketEvent]:
    """Nominal packets for ``digits``: ``2n + 1`` rises, windows sharing boundaries."""
    p.check_hardware()
    t = start
    out = [PacketEvent(t, duration_ns, power_dbm)]
    for d in digits:
        first, second = p.digit_intervals(int(d))
        out.append(PacketEvent(t + first, duration_ns, power_dbm))
        t += first + second
        out.append(PacketEvent(t, duration_ns, power_dbm))
    return out


def _digit_of(first_ns: float, p: TemporalParams) -> int:
    d = int(round(first_ns / p.g_ns - 10))
    return min(9, max(0, d))


def temporal_decode(intervals: Sequence[int], p: TemporalParams) -> DecodeResult:
    """Digits from measured interval pairs.

    Compensation is subtracted from each interval; a pair whose sum strays
    more than ``g/2`` from the ``30*g`` window is erased.  An odd trailing
    interval is an erasure.
    """
    ivs = [iv - p.compensation_ns for iv in intervals]
    symbols, erased = [], []
    for k in range(0, len(ivs) - 1, 2):
        i1, i2 = ivs[k], ivs[k + 1]
        if abs(i1 + i2 - p.window_ns) * 2 > p.g_ns:
            symbols.append(0)
            erased.append(True)
        else:
            symbols.append(_digit_of(i1, p))
            erased.append(False)
    if len(ivs) % 2:
        symbols.append(0)
        erased.append(True)
    return DecodeResult(symbols, erased)


def temporal_demodulate(
    rises: Sequence[int],
    start_hint: int,
    n_digits: int,
    p: TemporalParams,
    search_ns: int | None = None,
) -> DecodeResult:
    """Frame and decode ``n_digits`` windows from raw rise times.

    The first window opens at the rise nearest ``start_hint``.  Each window
    closes at the rise nearest its expected end; a window with no closing
    rise, or not exactly one rise inside it, is erased.  Framing continues
    from the closing rise (or the nominal one when it is missing), so one bad
    window does not shift the rest.
    """
    search = 5 * p.g_ns if search_ns is None else search_ns
    rises = sorted(rises)
    arr = np.asarray(rises, dtype=np.int64)
    symbols = [0] * n_digits
    erased = [True] * n_digits

    def nearest(t: int, tol: int) -> int | None:
        if len(arr) == 0:
            return None
        i = int(np.searchsorted(arr, t))
        best = None
        for j in (i - 1, i):
            if 0 <= j < len(arr) and abs(int(arr[j]) - t) <= tol:
                if best is None or abs(int(arr[j]) - t) < abs(int(arr[best]) - t):
                    best = j
        return best

    a = nearest(start_hint, search)
    if a is None:
        return DecodeResult(symbols, erased, ready_time=None)
    anchor = int(arr[a])
    step = p.window_ns + 2 * p.compensation_ns
    ready = anchor
    for k in range(n_digits):
        c = nearest(anchor + step, search)
        if c is None or int(arr[c]) <= anchor:
            anchor += step
            continue
        close = int(arr[c])
        inside = arr[(arr > anchor) & (arr < close)]
        if len(inside) == 1:
            mid = int(inside[0])
            res = temporal_decode([mid - anchor, close - mid], p)
            symbols[k], erased[k] = res.symbols[0], res.erased[0]
        anchor = close
        ready = close
    return DecodeResult(symbols, erased, ready_time=ready)


# -- energy -----------------------------------------------------------------

def _default_levels(levels: int) -> tuple[float, ...]:
    return {2: (-60.0,), 4: (-80.0, -70.0, -60.0)}[levels]


@dataclass(frozen=True)
class EnergyParams:
    """``power_dbm[s-1]`` is the transmit level for slot symbol ``s``; 0 is silence."""

    slot_ns: int = 10 * NS_PER_MS
    levels: int = 2
    power_dbm: tuple[float, ...] = field(default=())
    floor_dbm: float = -95.0
    edge_guard: float = 0.1
    compensation_ns: int = 400_000
    erasure_margin_db: float = 0.0

    def __post_init__(self):
        if self.levels not in (2, 4):
            raise ValueError("levels must be 2 or 4")
        if not self.power_dbm:
            object.__setattr__(self, "power_dbm", _default_levels(self.levels))
        object.__setattr__(self, "power_dbm", tuple(float(x) for x in self.power_dbm))
        if len(self.power_dbm) != self.levels - 1:
            raise ValueError(f"need {self.levels - 1} power levels, got {len(self.power_dbm)}")
        if any(b <= a for a, b in zip(self.power_dbm, self.power_dbm[1:])):
            raise ValueError("power levels must be strictly increasing")
        if not 0 <= self.edge_guard < 0.5:
            raise ValueError("edge_guard must lie in [0, 0.5)")

    @property
    def bits_per_slot(self) -> int:
        return self.levels.bit_length() - 1

    def received_levels(self) -> np.ndarray:
        """Expected dBm per symbol, floor included."""
        floor = dbm_to_mw(self.floor_dbm)
        return np.concatenate([[self.floor_dbm], mw_to_dbm(floor + dbm_to_mw(list(self.power_dbm)))])


def bits_to_symbols(bits: Sequence[int], bits_per_symbol: int) -> list[int]:
    if len(bits) % bits_per_symbol:
        raise ValueError(f"{len(bits)} bits do not split into {bits_per_symbol}-bit symbols")
    return [bits_to_int(bits[i:i + bits_per_symbol]) for i in range(0, len(bits), bits_per_symbol)]


def energy_encode(
    bits: Sequence[int],
    p: EnergyParams,
    start: int,
) -> list[PacketEvent]:
    """One slot-filling packet per non-zero symbol, at that symbol's power."""
    out = []
    for k, s in enumerate(bits_to_symbols(bits, p.bits_per_slot)):
        if s:
            out.append(PacketEvent(start + k * p.slot_ns, p.slot_ns, p.power_dbm[s - 1]))
    return out


def energy_decode(trace: RssiTrace, start: int, n_slots: int, p: EnergyParams) -> DecodeResult:
    """Nearest-level decision on the mean dBm of each slot's interior.

    ``edge_guard`` of the slot is ignored at both ends to absorb alignment
    error.  With ``erasure_margin_db`` > 0 a slot whose mean lies that close
    to a decision threshold is erased.
    """
    if start < trace.start or start + n_slots * p.slot_ns > trace.end:
        raise ValueError("trace does not cover the requested slots")
    levels = p.received_levels()
    thresholds = (levels[1:] + levels[:-1]) / 2
    guard = int(p.slot_ns * p.edge_guard)
    symbols, erased = [], []
    for k in range(n_slots):
        s0 = start + k * p.slot_ns
        i0 = trace.index_at(s0 + guard)
        i1 = trace.index_at(s0 + p.slot_ns - guard)
        if i1 <= i0:
            raise ValueError("slot shorter than one sample")
        m = float(trace.samples[i0:i1].mean())
        sym = int(np.searchsorted(thresholds, m))
        symbols.append(sym)
        erased.append(bool(p.erasure_margin_db > 0 and np.min(np.abs(thresholds - m)) < p.erasure_margin_db))
    ready = start + n_slots * p.slot_ns
    return DecodeResult(symbols, erased, bits_per_symbol=p.bits_per_slot, ready_time=ready)
