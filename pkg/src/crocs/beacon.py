"""Barker-coded packet-interval beacons.

A beacon of ``length`` packets has ``length - 1`` rise-to-rise intervals,
each one of two atomic values ``t1`` (+1) or ``t2`` (-1) arranged as a
Barker sequence.  The receiver symbolises measured intervals and slides the
code over them; the rise of the first packet of the matching window is the
alignment event both sides timestamp.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .channel import PacketEvent

UNKNOWN = 0

# beacon length -> interval patterns, t1 = +1 and t2 = -1
BEACON_TABLE: dict[int, tuple[tuple[int, ...], ...]] = {
    3: ((+1, -1),),
    4: ((+1, +1, -1),),
    5: ((+1, +1, +1, -1), (+1, +1, -1, +1)),
    6: ((+1, +1, +1, -1, +1),),
    8: ((+1, +1, +1, -1, -1, +1, -1),),
    12: ((+1, +1, +1, -1, -1, -1, +1, -1, -1, +1, -1),),
    14: ((+1, +1, +1, +1, +1, -1, -1, +1, +1, -1, +1, -1, +1),),
}

_VARIANTS = "AB"


def pattern_of(length: int, variant: str = "A") -> tuple[int, ...]:
    """Interval code for a beacon of ``length`` packets (+1 for t1, -1 for t2)."""
    try:
        rows = BEACON_TABLE[length]
    except KeyError:
        raise ValueError(
            f"unsupported beacon length {length}; choose from {sorted(BEACON_TABLE)}"
        ) from None
    idx = _VARIANTS.find(variant.upper())
    if idx < 0 or idx >= len(rows):
        raise ValueError(f"beacon length {length} has no variant {variant!r}")
    return rows[idx]


def autocorrelation(code: Sequence[int], lag: int) -> int:
    """Aperiodic autocorrelation ``sum_j b_j * b_{j+lag}``."""
    n = len(code)
    if not 0 <= lag < n:
        raise ValueError(f"lag {lag} outside [0, {n})")
    return sum(code[j] * code[j + lag] for j in range(n - lag))


def is_barker(code: Sequence[int]) -> bool:
    return all(abs(autocorrelation(code, v)) <= 1 for v in range(1, len(code)))


@dataclass(frozen=True)
class BeaconSpec:
    length: int = 3
    t1_ns: int = 30_000_000
    t2_ns: int = 70_000_000
    variant: str = "A"

    def __post_init__(self):
        if self.t1_ns == self.t2_ns:
            raise ValueError("t1 and t2 must differ")
        if min(self.t1_ns, self.t2_ns) <= 0:
            raise ValueError("atomic intervals must be positive")
        pattern_of(self.length, self.variant)

    @property
    def code(self) -> tuple[int, ...]:
        return pattern_of(self.length, self.variant)

    @property
    def intervals_ns(self) -> tuple[int, ...]:
        return tuple(self.t1_ns if c > 0 else self.t2_ns for c in self.code)

    @property
    def span_ns(self) -> int:
        """First-to-last rise distance: the minimum sampling window for one beacon."""
        return sum(self.intervals_ns)

    @property
    def default_tol_ns(self) -> int:
        return min(abs(self.t2_ns - self.t1_ns) // 4, 5_000_000)


def beacon_schedule(
    spec: BeaconSpec,
    first_packet_start: int,
    duration_ns: int = 1_000_000,
    power_dbm: float = -60.0,
) -> tuple[list[PacketEvent], int]:
    """Nominal beacon packets and the sender-side alignment time."""
    starts = [first_packet_start]
    for gap in spec.intervals_ns:
        starts.append(starts[-1] + gap)
    return [PacketEvent(s, duration_ns, power_dbm) for s in starts], first_packet_start


def symbolize(intervals: Iterable[int], t1_ns: int, t2_ns: int, tol_ns: int) -> list[int]:
    """Map intervals to +1 (near t1), -1 (near t2) or UNKNOWN."""
    if not tol_ns < abs(t2_ns - t1_ns) / 2:
        raise ValueError("tolerance must be below half the t1/t2 separation")
    out = []
    for iv in intervals:
        if abs(iv - t1_ns) <= tol_ns:
            out.append(+1)
        elif abs(iv - t2_ns) <= tol_ns:
            out.append(-1)
        else:
            out.append(UNKNOWN)
    return out


def correlation_profile(symbols: Sequence[int], code: Sequence[int]) -> list[int]:
    """Score of ``code`` against every full window of ``symbols``."""
    n = len(code)
    return [
        sum(c * s for c, s in zip(code, symbols[w:w + n]))
        for w in range(len(symbols) - n + 1)
    ]


@dataclass(frozen=True)
class BeaconDetection:
    first_packet_rise: int
    first_index: int
    rise_indices: tuple[int, ...]
    matched_length: int
    correlation_score: int
    first_sample_index: int | None = None

    @property
    def last_index(self) -> int:
        return self.rise_indices[-1]


def _walk(rises: Sequence[int], start: int, spec: BeaconSpec, tol: int, max_insertions: int):
    # follow the pattern from rises[start], skipping up to max_insertions stray rises
    picked = [start]
    skipped = 0
    t = rises[start]
    j = start + 1
    for gap in spec.intervals_ns:
        expected = t + gap
        best = None
        k = j
        while k < len(rises) and rises[k] <= expected + tol:
            if abs(rises[k] - expected) <= tol and (
                best is None or abs(rises[k] - expected) < abs(rises[best] - expected)
            ):
                best = k
            k += 1
        if best is None:
            return None
        skipped += best - j
        if skipped > max_insertions:
            return None
        picked.append(best)
        t = rises[best]
        j = best + 1
    return tuple(picked)


def match_beacon(
    rises: Sequence[int],
    spec: BeaconSpec,
    tol_ns: int | None = None,
    threshold: int | None = None,
    max_insertions: int = 0,
    sample_indices: Sequence[int] | None = None,
) -> BeaconDetection | None:
    """Earliest beacon in a stream of packet rise times (arrival order).

    The code slides over the symbolised consecutive intervals; UNKNOWN
    symbols score 0 and a window matches when its score reaches
    ``threshold`` (default: the full code length).  With ``max_insertions``
    > 0 every rise is also tried as a window start while skipping up to that
    many stray rises inside the beacon; that path always requires an exact
    match.
    """
    tol = spec.default_tol_ns if tol_ns is None else tol_ns
    code = spec.code
    n = len(code)
    need = n if threshold is None else threshold
    rises = list(rises)
    gaps = [b - a for a, b in zip(rises, rises[1:])]
    symbols = symbolize(gaps, spec.t1_ns, spec.t2_ns, tol)

    best: tuple[int, tuple[int, ...], int] | None = None
    for w, score in enumerate(correlation_profile(symbols, code)):
        if score >= need:
            best = (w, tuple(range(w, w + n + 1)), score)
            break

    if max_insertions > 0:
        stop = best[0] if best is not None else len(rises)
        for i in range(stop):
            picked = _walk(rises, i, spec, tol, max_insertions)
            if picked is not None:
                best = (i, picked, n)
                break

    if best is None:
        return None
    i, picked, score = best
    return BeaconDetection(
        first_packet_rise=rises[i],
        first_index=i,
        rise_indices=picked,
        matched_length=n + 1,
        correlation_score=score,
        first_sample_index=None if sample_indices is None else sample_indices[i],
    )


def matching_rate(trials: Iterable) -> float:
    """Fraction of trials whose beacon was correctly matched.

    Items are booleans or objects exposing a ``beacon_matched`` attribute.
    """
    flags = [bool(getattr(t, "beacon_matched", t)) for t in trials]
    if not flags:
        raise ValueError("matching_rate needs at least one trial")
    return sum(flags) / len(flags)
