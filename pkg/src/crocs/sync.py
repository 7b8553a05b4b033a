"""Protocol rounds, clock calibration and whole-session simulation.

One round: the sender emits a beacon and stamps the actual emission of its
first packet (t_w), then after a guard gap sends a one-symbol header
(0 = full timestamp, 1 = increment) and the timestamp itself.  The receiver
matches the beacon, stamps the matched first rise on its own clock (t_z),
decodes the payload and, if nothing was erased, feeds the pair (t_z, t_w)
to a sliding-window least-squares fit of t_w on t_z.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np

from .beacon import BeaconDetection, BeaconSpec, match_beacon
from .channel import (
    DEFAULT_SAMPLE_PERIOD_NS,
    InterferenceModel,
    NoiseModel,
    PacketEvent,
    RssiTrace,
    detect_packets,
    render_trace,
)
from .clocks import (
    NS_PER_MS,
    NS_PER_S,
    ClockParams,
    JitterModel,
    read_local,
    read_local_array,
    true_of_local,
)
from .codec import (
    DELTA_BITS,
    DELTA_DIGITS,
    TIMESTAMP_DIGITS,
    DeltaOverflowError,
    EnergyParams,
    TemporalParams,
    Timestamp64,
    bits_to_int,
    delta_decode,
    delta_encode,
    digits_to_int,
    digits_to_timestamp,
    energy_decode,
    energy_encode,
    int_to_bits,
    int_to_digits,
    temporal_demodulate,
    temporal_encode,
    timestamp_to_digits,
)

# NTP seconds around 2023, so full timestamps use every digit position
DEFAULT_SENDER_EPOCH_NS = 3_900_000_000 * NS_PER_S


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SyncPair:
    t_z: int
    t_w: Timestamp64

    @property
    def t_w_ns(self) -> int:
        return self.t_w.to_ns()


def ols_fit(xs: list[int], ys: list[int]) -> tuple[Fraction, Fraction] | None:
    """Exact least-squares slope and intercept of ys on xs, None if xs are all equal."""
    n = len(xs)
    sx, sy = sum(xs), sum(ys)
    sxx = sum(x * x for x in xs)
    sxy = sum(x * y for x, y in zip(xs, ys))
    den = n * sxx - sx * sx
    if den == 0:
        return None
    slope = Fraction(n * sxy - sx * sy, den)
    return slope, Fraction(sy, n) - slope * Fraction(sx, n)


@dataclass(frozen=True)
class CalibrationModel:
    """Linear map from receiver local time to sender time.

    Fitted on the last ``window`` pairs.  With a single pair (or ``window``
    of 1) the map is offset-only: ``t_w = t_z + (t_w1 - t_z1)``.
    """

    window: int = 5
    pairs: tuple[SyncPair, ...] = ()
    alpha: float = 1.0
    beta: float = 0.0
    fitted: bool = False
    # integer reference point on the fitted line; keeps predictions exact near 1e18 ns
    x_ref: int = 0
    y_ref: int = 0

    @property
    def usable(self) -> bool:
        return self.fitted or bool(self.pairs)

    def predict_ns(self, local):
        """Estimated sender time (ns) for a receiver reading or int64 array of them."""
        if self.fitted:
            if isinstance(local, np.ndarray):
                return self.y_ref + np.rint(self.alpha * (local - self.x_ref)).astype(np.int64)
            return self.y_ref + int(round(self.alpha * (int(local) - self.x_ref)))
        if not self.pairs:
            raise ValueError("calibration model has no synchronization pairs")
        last = self.pairs[-1]
        return local + (last.t_w_ns - last.t_z)


def calibrate(model: CalibrationModel, pair: SyncPair) -> CalibrationModel:
    pairs = (model.pairs + (pair,))[-model.window:]
    fit = ols_fit([p.t_z for p in pairs], [p.t_w_ns for p in pairs]) if len(pairs) >= 2 else None
    if fit is None:
        return dataclasses.replace(model, pairs=pairs)
    slope, intercept = fit
    x_ref = round(Fraction(sum(p.t_z for p in pairs), len(pairs)))
    y_ref = round(slope * x_ref + intercept)
    return dataclasses.replace(
        model, pairs=pairs, alpha=float(slope), beta=float(intercept),
        fitted=True, x_ref=x_ref, y_ref=y_ref,
    )


def estimate_global(model: CalibrationModel, local: int) -> Timestamp64:
    if not model.usable:
        raise ValueError("calibration model has no synchronization pairs")
    return Timestamp64.from_ns(int(model.predict_ns(int(local))))


# -- configuration ------------------------------------------------------------

_NESTED = {
    "beacon": BeaconSpec,
    "temporal": TemporalParams,
    "energy": EnergyParams,
    "noise": NoiseModel,
    "interference": InterferenceModel,
    "clock_w": ClockParams,
    "clock_z": ClockParams,
    "tx_jitter": JitterModel,
    "rx_jitter": JitterModel,
}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(unknown)}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class SessionConfig:
    seed: int = 0
    rounds: int = 5
    pair_interval_ns: int = 7 * NS_PER_S
    tail_ns: int = 43 * NS_PER_S
    start_ns: int = NS_PER_S
    error_cadence_ns: int = 100 * NS_PER_MS

    beacon: BeaconSpec = field(default_factory=BeaconSpec)
    symbol_tol_ns: int | None = None
    beacon_max_insertions: int = 0
    guard_ns: int | None = None
    packet_ns: int = NS_PER_MS
    tx_power_dbm: float = -60.0
    min_interval_ns: int = 10 * NS_PER_MS

    codec: str = "temporal"
    temporal: TemporalParams = field(default_factory=lambda: TemporalParams(granularity_ms=2))
    energy: EnergyParams = field(default_factory=EnergyParams)
    incremental: bool = False

    calibration: str = "regression"
    window: int = 5

    sample_period_ns: int = DEFAULT_SAMPLE_PERIOD_NS
    margin_db: float = 10.0
    min_high_samples: int = 3
    interpolate: bool = False
    listen_pre_ns: int = 20 * NS_PER_MS
    listen_post_ns: int = 20 * NS_PER_MS
    noise: NoiseModel = field(default_factory=NoiseModel)
    interference: InterferenceModel = field(default_factory=InterferenceModel)

    clock_w: ClockParams = field(default_factory=lambda: ClockParams(offset_ns=DEFAULT_SENDER_EPOCH_NS))
    clock_z: ClockParams = field(default_factory=lambda: ClockParams.from_ppm(50, offset_ns=123 * NS_PER_MS))
    tx_jitter: JitterModel = field(default_factory=lambda: JitterModel(400_000, 100_000))
    rx_jitter: JitterModel = field(default_factory=lambda: JitterModel(0, 200_000))

    def __post_init__(self):
        self.validate()

    @property
    def guard(self) -> int:
        return 5 * self.beacon.t1_ns if self.guard_ns is None else self.guard_ns

    @property
    def symbol_tol(self) -> int:
        return self.beacon.default_tol_ns if self.symbol_tol_ns is None else self.symbol_tol_ns

    @property
    def window_size(self) -> int:
        return 1 if self.calibration == "offset" else self.window

    def payload_airtime(self, mode: str = "full") -> int:
        if self.codec == "temporal":
            n = TIMESTAMP_DIGITS if mode == "full" else DELTA_DIGITS
            return (1 + n) * (self.temporal.window_ns + 2 * self.temporal.compensation_ns)
        n_bits = 64 if mode == "full" else DELTA_BITS
        b = self.energy.bits_per_slot
        return (1 + -(-n_bits // b)) * self.energy.slot_ns

    def round_airtime(self, mode: str = "full") -> int:
        return self.beacon.span_ns + self.guard + self.payload_airtime(mode) + self.packet_ns

    def validate(self) -> None:
        if self.codec not in ("temporal", "energy"):
            raise ConfigError(f"codec: expected 'temporal' or 'energy', got {self.codec!r}")
        if self.calibration not in ("regression", "offset"):
            raise ConfigError(f"calibration: expected 'regression' or 'offset', got {self.calibration!r}")
        if self.rounds < 1:
            raise ConfigError("rounds: must be >= 1")
        if self.window < 1:
            raise ConfigError("window: must be >= 1")
        if self.error_cadence_ns <= 0:
            raise ConfigError("error_cadence_ns: must be positive")
        if min(self.beacon.t1_ns, self.beacon.t2_ns) < self.min_interval_ns:
            raise ConfigError("beacon: atomic intervals below min_interval_ns")
        if not self.symbol_tol < abs(self.beacon.t2_ns - self.beacon.t1_ns) / 2:
            raise ConfigError("symbol_tol_ns: must be below half the t1/t2 separation")
        if self.codec == "temporal" and 10 * self.temporal.g_ns < self.min_interval_ns:
            raise ConfigError("temporal: granularity gives intervals below min_interval_ns")
        if self.codec == "energy" and self.energy.slot_ns * (1 - 2 * self.energy.edge_guard) < self.sample_period_ns:
            raise ConfigError("energy: slot interior shorter than one RSSI sample")
        if self.rounds > 1:
            busy = self.round_airtime("full") + self.listen_pre_ns + self.listen_post_ns
            if busy > self.pair_interval_ns:
                raise ConfigError(
                    f"pair_interval_ns: {self.pair_interval_ns} cannot hold a round "
                    f"({busy} ns of beacon, payload and listening)"
                )

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any], where: str = "session") -> "SessionConfig":
        if not isinstance(data, dict):
            raise ConfigError(f"{where}: expected an object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"{where}: unknown field(s) {', '.join(unknown)}")
        kwargs = {}
        for k, v in data.items():
            if k in _NESTED and isinstance(v, dict):
                kwargs[k] = _build(_NESTED[k], v, f"{where}.{k}")
            else:
                kwargs[k] = v
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from exc

    def replace(self, **changes) -> "SessionConfig":
        return dataclasses.replace(self, **changes)


# -- sender -------------------------------------------------------------------

@dataclass
class SenderRound:
    round_index: int
    packets: list[PacketEvent]
    t_w: Timestamp64
    alignment_true: int
    beacon_last_true: int
    mode: str
    header: int
    payload: list[int]
    payload_start_true: int
    end_true: int

    @property
    def beacon_packets(self) -> list[PacketEvent]:
        return [p for p in self.packets if p.start <= self.beacon_last_true]

    @property
    def payload_packets(self) -> list[PacketEvent]:
        return [p for p in self.packets if p.start > self.beacon_last_true]


def _payload_units(cfg: SessionConfig, t_w: Timestamp64, reference: Timestamp64 | None):
    if cfg.incremental and reference is not None:
        try:
            delta = delta_encode(reference, t_w)
        except DeltaOverflowError:
            pass
        else:
            if cfg.codec == "temporal":
                return "delta", int_to_digits(delta, DELTA_DIGITS)
            return "delta", int_to_bits(delta, DELTA_BITS)
    if cfg.codec == "temporal":
        return "full", timestamp_to_digits(t_w)
    return "full", int_to_bits(t_w.value, 64)


def _pad_bits(bits: list[int], b: int) -> list[int]:
    return bits + [0] * (-len(bits) % b)


def sender_round(
    cfg: SessionConfig,
    round_index: int,
    clock_w: ClockParams | None = None,
    rng: np.random.Generator | None = None,
    reference: Timestamp64 | None = None,
) -> SenderRound:
    """Packets and stamp for one round.

    ``reference`` is the last full timestamp this sender transmitted; with
    ``cfg.incremental`` the payload is the increment from it when that fits
    in 26 bits.  Emission jitter accumulates packet to packet; the stamp is
    the sender's microsecond reading at the actual first emission.
    """
    clock_w = cfg.clock_w if clock_w is None else clock_w
    rng = np.random.default_rng(cfg.tx_jitter.seed) if rng is None else rng
    jit = cfg.tx_jitter

    def to_true(local_starts, power):
        return [PacketEvent(true_of_local(clock_w, s), cfg.packet_ns, power) for s in local_starts]

    local0 = read_local(clock_w, cfg.start_ns) + round_index * cfg.pair_interval_ns
    gaps = (0,) + cfg.beacon.intervals_ns
    delays = jit.sample(rng, len(gaps)) if not jit.is_identity else np.zeros(len(gaps), dtype=np.int64)
    beacon_local = (local0 + np.cumsum(gaps) + np.cumsum(delays)).tolist()
    t_w = Timestamp64.from_us(beacon_local[0] // 1000)

    mode, payload = _payload_units(cfg, t_w, reference)
    header = 0 if mode == "full" else 1
    pay_local0 = beacon_local[-1] + cfg.guard
    if cfg.codec == "temporal":
        nominal = temporal_encode([header] + payload, cfg.temporal, 0)
        rel = [e.start for e in nominal]
        d = jit.sample(rng, len(rel)) if not jit.is_identity else np.zeros(len(rel), dtype=np.int64)
        pay_local = (pay_local0 + np.asarray(rel) + np.cumsum(d)).tolist()
        payload_events = to_true(pay_local, cfg.tx_power_dbm)
        pay_start_local = pay_local[0]
    else:
        b = cfg.energy.bits_per_slot
        bits = _pad_bits([header] + [0] * (b - 1) + _pad_bits(payload, b), b)
        d = jit.sample(rng) if not jit.is_identity else 0
        pay_start_local = pay_local0 + d
        payload_events = [
            PacketEvent(true_of_local(clock_w, pay_start_local + e.start), e.duration_ns, e.power_dbm)
            for e in energy_encode(bits, cfg.energy, 0)
        ]
    beacon_events = to_true(beacon_local, cfg.tx_power_dbm)
    if cfg.codec == "temporal":
        end = payload_events[-1].end
    else:
        n_slots = len(_pad_bits([header] + [0] * (b - 1) + _pad_bits(payload, b), b)) // b
        end = true_of_local(clock_w, pay_start_local + n_slots * cfg.energy.slot_ns)
    return SenderRound(
        round_index=round_index,
        packets=beacon_events + payload_events,
        t_w=t_w,
        alignment_true=beacon_events[0].start,
        beacon_last_true=beacon_events[-1].start,
        mode=mode,
        header=header,
        payload=list(payload),
        payload_start_true=true_of_local(clock_w, pay_start_local),
        end_true=max(end, beacon_events[-1].end),
    )


# -- receiver -----------------------------------------------------------------

@dataclass
class RoundOutcome:
    pair: SyncPair | None
    reason: str
    detection: BeaconDetection | None = None
    rise_true: int | None = None
    t_z: int | None = None
    rx_jitter_ns: int = 0
    mode: str | None = None
    t_w: Timestamp64 | None = None
    ready_true: int | None = None
    model: CalibrationModel | None = None

    @property
    def accepted(self) -> bool:
        return self.pair is not None

    @property
    def beacon_matched(self) -> bool:
        return self.detection is not None


class Receiver:
    """Receiver-side protocol state: calibration window and last full timestamp."""

    def __init__(self, cfg: SessionConfig, clock_z: ClockParams | None = None,
                 rng: np.random.Generator | None = None):
        self.cfg = cfg
        self.clock_z = cfg.clock_z if clock_z is None else clock_z
        self.rng = np.random.default_rng(cfg.rx_jitter.seed) if rng is None else rng
        self.model = CalibrationModel(window=cfg.window_size)
        self.reference: Timestamp64 | None = None
        self.last_pair: SyncPair | None = None

    def _decode_temporal(self, rises, hint):
        p = self.cfg.temporal
        head = temporal_demodulate(rises, hint + p.compensation_ns, 1, p)
        if not head.ok:
            return None, None, "erasure", head.ready_time
        mode = {0: "full", 1: "delta"}.get(head.symbols[0])
        if mode is None:
            return None, None, "bad-header", head.ready_time
        n = TIMESTAMP_DIGITS if mode == "full" else DELTA_DIGITS
        body = temporal_demodulate(rises, head.ready_time, n, p)
        if not body.ok:
            return mode, None, "erasure", body.ready_time
        if mode == "full":
            try:
                return mode, digits_to_timestamp(body.symbols), "ok", body.ready_time
            except ValueError:
                return mode, None, "bad-value", body.ready_time
        return mode, digits_to_int(body.symbols), "ok", body.ready_time

    def _decode_energy(self, trace, hint):
        p = self.cfg.energy
        b = p.bits_per_slot
        start = hint + p.compensation_ns
        try:
            head = energy_decode(trace, start, 1, p)
        except ValueError:
            return None, None, "truncated", None
        if not head.ok:
            return None, None, "erasure", head.ready_time
        sym = head.symbols[0]
        if sym & ((1 << (b - 1)) - 1):
            return None, None, "bad-header", head.ready_time
        mode = "full" if sym >> (b - 1) == 0 else "delta"
        n_bits = 64 if mode == "full" else DELTA_BITS
        n_slots = -(-n_bits // b)
        try:
            body = energy_decode(trace, start + p.slot_ns, n_slots, p)
        except ValueError:
            return mode, None, "truncated", None
        if not body.ok:
            return mode, None, "erasure", body.ready_time
        bits = body.value[:n_bits]
        if mode == "full":
            return mode, Timestamp64(bits_to_int(bits)), "ok", body.ready_time
        return mode, bits_to_int(bits), "ok", body.ready_time

    def process(self, trace: RssiTrace) -> RoundOutcome:
        cfg = self.cfg
        dets = detect_packets(
            trace, cfg.margin_db, cfg.min_high_samples, interpolate=cfg.interpolate,
        )
        rises = [d.rise_true_time for d in dets]
        det = match_beacon(
            rises, cfg.beacon, cfg.symbol_tol, max_insertions=cfg.beacon_max_insertions,
            sample_indices=[d.rise_sample_index for d in dets],
        )
        if det is None:
            return RoundOutcome(None, "no-beacon", model=self.model)
        rise = det.first_packet_rise
        j = 0 if cfg.rx_jitter.is_identity else cfg.rx_jitter.sample(self.rng)
        t_z = read_local(self.clock_z, rise + j)
        hint = rises[det.last_index] + cfg.guard
        out = RoundOutcome(None, "", det, rise, t_z, j, model=self.model)

        if cfg.codec == "temporal":
            mode, value, status, ready = self._decode_temporal(rises, hint)
        else:
            mode, value, status, ready = self._decode_energy(trace, hint)
        out.mode, out.ready_true = mode, ready
        if status != "ok":
            out.reason = status
            return out

        if mode == "delta":
            if self.reference is None:
                out.reason = "no-reference"
                return out
            try:
                t_w = delta_decode(self.reference, value)
            except DeltaOverflowError:
                out.reason = "bad-value"
                return out
            # a stale reference shows up as an increment far from the elapsed time
            if self.model.usable and abs(t_w.to_ns() - self.model.predict_ns(t_z)) * 2 > cfg.pair_interval_ns:
                out.t_w = t_w
                out.reason = "implausible"
                return out
        else:
            t_w = value
        out.t_w = t_w
        last = self.last_pair
        if last is not None and (t_z <= last.t_z or t_w <= last.t_w):
            out.reason = "non-monotone"
            return out

        pair = SyncPair(t_z, t_w)
        if mode == "full":
            self.reference = t_w
        self.last_pair = pair
        self.model = calibrate(self.model, pair)
        out.pair, out.reason, out.model = pair, "accepted", self.model
        return out


def receiver_round(
    cfg: SessionConfig,
    trace: RssiTrace,
    clock_z: ClockParams | None = None,
    rng: np.random.Generator | None = None,
    receiver: Receiver | None = None,
) -> SyncPair | None:
    """Process one round's trace; returns the accepted pair, if any."""
    receiver = Receiver(cfg, clock_z, rng) if receiver is None else receiver
    return receiver.process(trace).pair


# -- session ------------------------------------------------------------------

ROUND_COLUMNS = [
    "round", "beacon_sent_ns", "beacon_matched", "detected_rise_ns", "alignment_error_ns",
    "t_z", "t_z_truth", "rx_jitter_ns", "mode", "t_w_sent", "t_w_decoded",
    "accepted", "reason", "ready_ns", "alpha", "beta", "fitted",
]
SERIES_COLUMNS = ["t_ns", "since_sync_ns", "model_round", "error_ns"]


@dataclass
class RoundRecord:
    round: int
    beacon_sent_ns: int
    beacon_matched: bool
    detected_rise_ns: int | None
    alignment_error_ns: int | None
    t_z: int | None
    t_z_truth: int
    rx_jitter_ns: int
    mode: str
    t_w_sent: int
    t_w_decoded: int | None
    accepted: bool
    reason: str
    ready_ns: int | None
    alpha: float
    beta: float
    fitted: bool

    def row(self) -> list:
        return [getattr(self, c) for c in ROUND_COLUMNS]


@dataclass
class SessionLog:
    config: SessionConfig
    rounds: list[RoundRecord]
    series_t: np.ndarray
    series_since: np.ndarray
    series_round: np.ndarray
    series_error_ns: np.ndarray
    model: CalibrationModel

    @property
    def accepted(self) -> list[RoundRecord]:
        return [r for r in self.rounds if r.accepted]

    @property
    def true_alpha(self) -> float:
        return self.config.clock_w.skew / self.config.clock_z.skew

    def after_round(self, round_index: int, horizon_ns: int | None = None):
        """(since_sync_ns, error_ns) while the model from ``round_index`` is in effect."""
        m = self.series_round == round_index
        since, err = self.series_since[m], self.series_error_ns[m]
        if horizon_ns is not None:
            keep = since <= horizon_ns
            since, err = since[keep], err[keep]
        return since, err

    def write_csv(self, series_path: str | Path | None = None, rounds_path: str | Path | None = None) -> None:
        if series_path is not None:
            with open(series_path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(SERIES_COLUMNS)
                for row in zip(self.series_t.tolist(), self.series_since.tolist(),
                               self.series_round.tolist(), self.series_error_ns.tolist()):
                    w.writerow(row)
        if rounds_path is not None:
            with open(rounds_path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(ROUND_COLUMNS)
                for r in self.rounds:
                    w.writerow(["" if v is None else v for v in r.row()])


def session_streams(seed: int) -> dict[str, np.random.Generator]:
    names = ("tx", "rx", "noise", "interference")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(s) for n, s in zip(names, children)}


def run_session(cfg: SessionConfig) -> SessionLog:
    """Simulate ``cfg.rounds`` rounds and the resulting sync-error series.

    Each round's model takes effect when its payload has been received.  The
    error series (estimated minus true sender time, ns) runs from the first
    usable model until ``tail_ns`` after the last round.
    """
    rngs = session_streams(cfg.seed)
    receiver = Receiver(cfg, rng=rngs["rx"])
    all_packets: list[PacketEvent] = []
    records: list[RoundRecord] = []
    epochs: list[tuple[int, int, CalibrationModel]] = []
    reference = None
    last_end = cfg.start_ns

    for k in range(cfg.rounds):
        sr = sender_round(cfg, k, rng=rngs["tx"], reference=reference)
        if sr.mode == "full":
            reference = sr.t_w
        all_packets.extend(sr.packets)
        # the sampling grid is fixed in true time, not phase-locked to the sender
        period = cfg.sample_period_ns
        span = ((sr.alignment_true - cfg.listen_pre_ns) // period * period, sr.end_true + cfg.listen_post_ns)
        visible = [p for p in all_packets if p.end > span[0] and p.start < span[1]]
        trace = render_trace(
            visible, cfg.noise, cfg.interference, cfg.sample_period_ns, span,
            rng=rngs["noise"], interference_rng=rngs["interference"],
        )
        res = receiver.process(trace)
        model = receiver.model
        last_end = max(sr.end_true, res.ready_true or 0)
        if res.accepted:
            epochs.append((res.ready_true, k, model))
        records.append(RoundRecord(
            round=k,
            beacon_sent_ns=sr.alignment_true,
            beacon_matched=res.beacon_matched,
            detected_rise_ns=res.rise_true,
            alignment_error_ns=None if res.rise_true is None else res.rise_true - sr.alignment_true,
            t_z=res.t_z,
            t_z_truth=read_local(receiver.clock_z, sr.alignment_true),
            rx_jitter_ns=res.rx_jitter_ns,
            mode=sr.mode,
            t_w_sent=sr.t_w.value,
            t_w_decoded=None if res.t_w is None else res.t_w.value,
            accepted=res.accepted,
            reason=res.reason,
            ready_ns=res.ready_true,
            alpha=model.alpha,
            beta=model.beta,
            fitted=model.fitted,
        ))

    ts, since, rnd, err = [], [], [], []
    if epochs:
        end = last_end + cfg.tail_ns
        t0 = epochs[0][0]
        grid = np.arange(t0, end + 1, cfg.error_cadence_ns, dtype=np.int64)
        bounds = [e[0] for e in epochs[1:]] + [end + 1]
        for (ready, k, model), stop in zip(epochs, bounds):
            t = grid[(grid >= ready) & (grid < stop)]
            if len(t) == 0:
                continue
            est = model.predict_ns(read_local_array(cfg.clock_z, t))
            ts.append(t)
            since.append(t - ready)
            rnd.append(np.full(len(t), k, dtype=np.int64))
            err.append(est - read_local_array(cfg.clock_w, t))

    def cat(parts):
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)

    return SessionLog(cfg, records, cat(ts), cat(since), cat(rnd), cat(err), receiver.model)


def load_config(path: str | Path) -> dict:
    """Read a JSON config file, reporting syntax errors with line and column."""
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
