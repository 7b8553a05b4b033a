"""Virtual per-node clocks.

Every node reads a local clock that is an affine view of the simulator's
true time axis (integer nanoseconds since the simulation epoch)::

    local(t) = offset_ns + round_half_even(skew * (t - anchor))

Events are always ordered by true time; the clocks only transform what a
node perceives.  Timestamping is imperfect: a stamp is taken a little after
the event it records, modelled by :class:`JitterModel`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000


@dataclass(frozen=True)
class ClockParams:
    """Affine local clock: ``offset_ns`` is the reading at ``anchor``."""

    offset_ns: int = 0
    skew: float = 1.0
    anchor: int = 0

    def __post_init__(self):
        if not self.skew > 0:
            raise ValueError(f"skew must be positive, got {self.skew}")

    @classmethod
    def from_ppm(cls, ppm: float, offset_ns: int = 0, anchor: int = 0) -> "ClockParams":
        return cls(offset_ns=offset_ns, skew=1.0 + ppm * 1e-6, anchor=anchor)


def _round_half_even(x: float) -> int:
    # builtin round() on floats is banker's rounding
    return int(round(x))


def read_local(clock: ClockParams, t: int) -> int:
    """Local reading of ``clock`` at true time ``t`` (both in ns)."""
    dt = int(t) - clock.anchor
    if clock.skew == 1.0:
        return clock.offset_ns + dt
    return clock.offset_ns + _round_half_even(clock.skew * dt)


def read_local_array(clock: ClockParams, t: np.ndarray) -> np.ndarray:
    """Vectorised :func:`read_local` for int64 arrays of true times."""
    dt = np.asarray(t, dtype=np.int64) - clock.anchor
    if clock.skew == 1.0:
        return clock.offset_ns + dt
    return clock.offset_ns + np.rint(clock.skew * dt).astype(np.int64)


def true_of_local(clock: ClockParams, local: int) -> int:
    """True time at which ``clock`` reads ``local``; inverse of read_local within 1 ns."""
    d = int(local) - clock.offset_ns
    if clock.skew == 1.0:
        return clock.anchor + d
    return clock.anchor + _round_half_even(d / clock.skew)


@dataclass(frozen=True)
class JitterModel:
    """Non-negative timing jitter: a truncated normal plus rare uniform spikes.

    Normal samples below zero are redrawn, so a stamp never precedes its
    event.  ``spike_prob`` adds an extra uniform delay in ``[0, spike_max_ns]``
    with that probability, which models the abrupt sender stalls seen on
    software radios.  ``JitterModel()`` is the identity.
    """

    mean_ns: int = 0
    stddev_ns: int = 0
    seed: int = 0
    spike_prob: float = 0.0
    spike_max_ns: int = 0

    def __post_init__(self):
        # a non-negative mean keeps the redraw acceptance rate at or above 1/2
        if self.mean_ns < 0:
            raise ValueError("mean_ns must be non-negative")
        if self.stddev_ns < 0:
            raise ValueError("stddev_ns must be non-negative")
        if not 0.0 <= self.spike_prob <= 1.0:
            raise ValueError("spike_prob must lie in [0, 1]")

    @property
    def is_identity(self) -> bool:
        return self.mean_ns == 0 and self.stddev_ns == 0 and self.spike_prob == 0.0

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def sample(self, rng: np.random.Generator, size: int | None = None):
        """Draw jitter in integer ns; returns an int, or an int64 array if ``size`` is given."""
        n = 1 if size is None else int(size)
        if self.stddev_ns == 0:
            out = np.full(n, self.mean_ns, dtype=np.float64)
        else:
            out = rng.normal(self.mean_ns, self.stddev_ns, n)
            neg = out < 0
            while neg.any():
                out[neg] = rng.normal(self.mean_ns, self.stddev_ns, int(neg.sum()))
                neg = out < 0
        if self.spike_prob > 0.0:
            hit = rng.random(n) < self.spike_prob
            out = out + np.where(hit, rng.uniform(0.0, self.spike_max_ns, n), 0.0)
        out = np.rint(out).astype(np.int64)
        return int(out[0]) if size is None else out


def stamp_event(
    clock: ClockParams,
    jitter: JitterModel,
    t: int,
    rng: np.random.Generator | None = None,
) -> int:
    """Local timestamp a node records for an event at true time ``t``.

    The stamp reads the clock ``j`` ns late, with ``j`` drawn from ``jitter``.
    When ``rng`` is omitted a generator seeded from ``jitter.seed`` is used,
    which makes a single call repeatable.
    """
    if jitter.is_identity:
        return read_local(clock, t)
    if rng is None:
        rng = jitter.rng()
    return read_local(clock, int(t) + jitter.sample(rng))
