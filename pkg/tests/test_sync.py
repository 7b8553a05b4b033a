import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crocs.beacon import BeaconSpec
from crocs.channel import InterferenceModel, NoiseModel, PacketEvent, render_trace
from crocs.clocks import NS_PER_MS, NS_PER_S, ClockParams, JitterModel, read_local
from crocs.codec import EnergyParams, Timestamp64
from crocs.sync import (
    CalibrationModel,
    ConfigError,
    Receiver,
    SessionConfig,
    SyncPair,
    calibrate,
    estimate_global,
    load_config,
    ols_fit,
    receiver_round,
    run_session,
    sender_round,
)

MS = NS_PER_MS
QUIET = dict(tx_jitter=JitterModel(), rx_jitter=JitterModel())


def pairs_on_line(alpha, beta_ns, xs):
    return [SyncPair(x, Timestamp64.from_ns(round(alpha * x + beta_ns))) for x in xs]


def fit(pairs, window=5):
    m = CalibrationModel(window=window)
    for p in pairs:
        m = calibrate(m, p)
    return m


def round_trace(cfg, sr, packets=None):
    span = (sr.alignment_true - cfg.listen_pre_ns, sr.end_true + cfg.listen_post_ns)
    return render_trace(sr.packets if packets is None else packets, cfg.noise, cfg.interference,
                        cfg.sample_period_ns, span, rng=np.random.default_rng(0))


# -- calibration ---------------------------------------------------------------

def test_noiseless_ols_is_exact():
    xs = [k * 7 * NS_PER_S + 10**12 for k in range(5)]
    m = fit([SyncPair(x, Timestamp64.from_ns(x + x // 10_000 + 5 * MS)) for x in xs])
    assert m.fitted
    assert abs(m.alpha - 1.0001) / 1.0001 < 1e-12
    assert abs(m.beta - 5 * MS) / (5 * MS) < 1e-12


def test_ols_fit_fractions():
    slope, icpt = ols_fit([0, 1, 2], [1, 3, 5])
    assert slope == 2 and icpt == 1
    assert ols_fit([4, 4], [1, 2]) is None
    assert isinstance(slope, Fraction)


def test_single_pair_falls_back_to_offset():
    m = fit([SyncPair(1_000, Timestamp64.from_ns(51_000))])
    assert not m.fitted and m.usable
    assert m.predict_ns(2_000) == 52_000
    assert estimate_global(m, 2_000).to_ns() == 52_000


def test_identical_receiver_stamps_refuse_fit():
    m = calibrate(CalibrationModel(window=2), SyncPair(5_000, Timestamp64.from_ns(7_000)))
    m = calibrate(m, SyncPair(5_000, Timestamp64.from_ns(9_000)))
    assert not m.fitted
    fitted = fit(pairs_on_line(2.0, 0, [1_000, 2_000]), window=2)
    step = calibrate(fitted, SyncPair(2_000, Timestamp64.from_ns(4_500)))
    assert [p.t_z for p in step.pairs] == [2_000, 2_000]
    # the refused fit leaves the previous line in place
    assert (step.alpha, step.beta) == (2.0, 0.0)
    assert step.predict_ns(3_000) == 6_000


def test_window_evicts_oldest():
    m = fit(pairs_on_line(1.0, 0, [k * 10**9 for k in range(1, 8)]), window=5)
    assert [p.t_z for p in m.pairs] == [k * 10**9 for k in range(3, 8)]


def test_offset_window_never_fits():
    m = fit(pairs_on_line(1.5, 0, [10**9, 2 * 10**9, 3 * 10**9]), window=1)
    assert not m.fitted and len(m.pairs) == 1
    assert m.predict_ns(3 * 10**9 + 10) == int(4.5 * 10**9) + 10


def test_estimate_global_examples():
    ident = fit(pairs_on_line(1.0, 0, [10**6, 2 * 10**6]))
    assert estimate_global(ident, 777).to_ns() == 777
    double = fit(pairs_on_line(2.0, 0, [1_000, 2_000]))
    assert (double.alpha, double.beta) == (2.0, 0.0)
    assert estimate_global(double, 10).to_ns() == 20
    with pytest.raises(ValueError):
        estimate_global(CalibrationModel(), 10)


def test_predict_array_matches_scalar():
    m = fit(pairs_on_line(0.99995, 3.9e18, [k * 7 * NS_PER_S for k in range(1, 6)]))
    xs = np.array([0, 10**9, 5 * 10**10], dtype=np.int64)
    assert m.predict_ns(xs).tolist() == [m.predict_ns(int(x)) for x in xs]


@settings(max_examples=40)
@given(st.floats(0.999, 1.001), st.integers(0, 10**15), st.integers(1, 10**10))
def test_ols_recovers_any_line(alpha, beta, step):
    xs = [10**9 + k * step for k in range(5)]
    ys = [round(alpha * x) + beta for x in xs]
    m = fit([SyncPair(x, Timestamp64.from_ns(y)) for x, y in zip(xs, ys)])
    # rounding of the ys to whole ns bounds the residual
    assert max(abs(m.predict_ns(x) - y) for x, y in zip(xs, ys)) <= 2


def test_slope_spread_matches_ols_variance():
    rng = np.random.default_rng(0)
    K, T, sigma = 5, 7 * NS_PER_S, 200_000
    xs = np.arange(K) * T
    slopes = []
    for _ in range(3000):
        ys = xs + rng.normal(0, sigma, K)
        slopes.append(np.polyfit(xs, ys, 1)[0])
        m = fit([SyncPair(int(x), Timestamp64.from_ns(int(round(y)) + 10**12)) for x, y in zip(xs, ys)])
        assert m.alpha == pytest.approx(slopes[-1], abs=1e-9)
    oracle = sigma * np.sqrt(12 / (K * (K * K - 1))) / T
    assert np.std(slopes) == pytest.approx(oracle, rel=0.05)


# -- configuration ---------------------------------------------------------------

def test_config_defaults_are_valid():
    cfg = SessionConfig()
    assert cfg.guard == 5 * cfg.beacon.t1_ns
    assert cfg.window_size == 5
    assert SessionConfig(calibration="offset").window_size == 1


def test_config_round_trips_through_json():
    cfg = SessionConfig(codec="energy", energy=EnergyParams(levels=4), incremental=True,
                        interference=InterferenceModel(5.0, (MS, 2 * MS)))
    back = SessionConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg


@pytest.mark.parametrize("data, msg", [
    ({"codec": "morse"}, "codec"),
    ({"bogus": 1}, "bogus"),
    ({"beacon": {"length": 7}}, "beacon"),
    ({"noise": {"sigma_db": -1}}, "noise"),
    ({"pair_interval_ns": 500 * MS}, "pair_interval_ns"),
    ({"beacon": {"t1_ns": 5 * MS, "t2_ns": 9 * MS}}, "min_interval"),
    ({"symbol_tol_ns": 30 * MS}, "symbol_tol_ns"),
])
def test_config_errors_name_the_field(data, msg):
    with pytest.raises(ConfigError, match=msg):
        SessionConfig.from_dict(data)


def test_load_config_reports_position(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{\n  "rounds": ,\n}')
    with pytest.raises(ConfigError, match=r"c.json:2:"):
        load_config(p)


# -- rounds --------------------------------------------------------------------

def test_round_zero_temporal_shape():
    cfg = SessionConfig(**QUIET)
    sr = sender_round(cfg, 0)
    assert sr.mode == "full" and len(sr.payload) == 20
    assert len(sr.beacon_packets) == 3
    # a header digit and 20 payload digits, two intervals each
    assert len(sr.payload_packets) - 1 == 2 * 21
    assert sr.payload_packets[0].start - sr.beacon_last_true >= cfg.guard


def test_delta_round_has_eight_digits():
    cfg = SessionConfig(incremental=True, **QUIET)
    r0 = sender_round(cfg, 0)
    r1 = sender_round(cfg, 1, reference=r0.t_w)
    assert r1.mode == "delta" and len(r1.payload) == 8
    assert int("".join(map(str, r1.payload))) == r1.t_w.to_us() - r0.t_w.to_us()


def test_delta_overflow_falls_back_to_full():
    cfg = SessionConfig(incremental=True, pair_interval_ns=70 * NS_PER_S, **QUIET)
    r0 = sender_round(cfg, 0)
    r1 = sender_round(cfg, 1, reference=r0.t_w)
    assert r1.mode == "full"


def test_stamp_is_actual_first_emission():
    cfg = SessionConfig()
    sr = sender_round(cfg, 2, rng=np.random.default_rng(5))
    local = read_local(cfg.clock_w, sr.alignment_true)
    assert abs(sr.t_w.to_us() - local // 1000) <= 1
    nominal = read_local(cfg.clock_w, cfg.start_ns) + 2 * cfg.pair_interval_ns
    assert local > nominal


@pytest.mark.parametrize("codec", ["temporal", "energy"])
def test_clean_round_trip(codec):
    cfg = SessionConfig(codec=codec, rx_jitter=JitterModel(0, 100_000))
    sr = sender_round(cfg, 0, rng=np.random.default_rng(1))
    rx = Receiver(cfg, rng=np.random.default_rng(2))
    out = rx.process(round_trace(cfg, sr))
    assert out.accepted and out.pair.t_w == sr.t_w
    truth = read_local(cfg.clock_z, sr.alignment_true)
    assert 0 <= out.pair.t_z - truth < cfg.sample_period_ns + out.rx_jitter_ns + 1
    assert out.rx_jitter_ns >= 0


def test_receiver_round_wrapper():
    cfg = SessionConfig(**QUIET)
    sr = sender_round(cfg, 0)
    pair = receiver_round(cfg, round_trace(cfg, sr))
    assert pair.t_w == sr.t_w


def test_interference_burst_on_beacon_drops_round():
    cfg = SessionConfig(**QUIET)
    sr = sender_round(cfg, 0)
    b0, b1 = sr.beacon_packets[:2]
    burst = [PacketEvent(b0.start + 10 * MS, MS, -60.0)]
    out = Receiver(cfg).process(round_trace(cfg, sr, sr.packets + burst))
    assert not out.accepted and out.reason == "no-beacon"


def test_payload_erasure_drops_round():
    cfg = SessionConfig(**QUIET)
    sr = sender_round(cfg, 0)
    pay = sr.payload_packets
    damaged = sr.beacon_packets + pay[:10] + pay[11:]
    out = Receiver(cfg).process(round_trace(cfg, sr, damaged))
    assert out.beacon_matched and not out.accepted and out.reason == "erasure"


def test_delta_without_reference_rejected():
    cfg = SessionConfig(incremental=True, **QUIET)
    r0 = sender_round(cfg, 0)
    r1 = sender_round(cfg, 1, reference=r0.t_w)
    out = Receiver(cfg).process(round_trace(cfg, r1))
    assert out.mode == "delta" and out.reason == "no-reference"


# -- sessions --------------------------------------------------------------------

def test_session_records_and_determinism(tmp_path):
    cfg = SessionConfig(seed=3, rounds=3, tail_ns=5 * NS_PER_S)
    a, b = run_session(cfg), run_session(cfg)
    a.write_csv(tmp_path / "a_series.csv", tmp_path / "a_rounds.csv")
    b.write_csv(tmp_path / "b_series.csv", tmp_path / "b_rounds.csv")
    assert (tmp_path / "a_series.csv").read_bytes() == (tmp_path / "b_series.csv").read_bytes()
    assert (tmp_path / "a_rounds.csv").read_bytes() == (tmp_path / "b_rounds.csv").read_bytes()
    header = (tmp_path / "a_rounds.csv").read_text().splitlines()[0]
    assert header.startswith("round,beacon_sent_ns,beacon_matched")
    assert len(a.rounds) == 3
    assert np.all(np.diff(a.series_t) == cfg.error_cadence_ns)


def test_different_seeds_differ():
    a = run_session(SessionConfig(seed=1, rounds=2, tail_ns=NS_PER_S))
    b = run_session(SessionConfig(seed=2, rounds=2, tail_ns=NS_PER_S))
    assert a.rounds[0].t_w_sent != b.rounds[0].t_w_sent


@pytest.mark.parametrize("codec", ["temporal", "energy"])
def test_accepted_pairs_are_bit_exact(codec):
    cfg = SessionConfig(codec=codec, incremental=True, rounds=4, tail_ns=NS_PER_S,
                        noise=NoiseModel(sigma_db=3.0), seed=8)
    log = run_session(cfg)
    assert log.accepted
    for r in log.accepted:
        assert r.beacon_matched and r.t_w_decoded == r.t_w_sent
    assert [r.mode for r in log.rounds] == ["full", "delta", "delta", "delta"]


def test_degenerate_session_error_is_quantization_only():
    cfg = SessionConfig(clock_z=ClockParams(offset_ns=123), rounds=3, tail_ns=10 * NS_PER_S, **QUIET)
    log = run_session(cfg)
    assert len(log.accepted) == 3
    # one RSSI sample of rise lateness plus the microsecond stamp floor
    assert np.abs(log.series_error_ns).max() <= cfg.sample_period_ns + 1_000


def test_offset_drift_slope_is_relative_skew():
    skew = 1 + 1 / 44
    cfg = SessionConfig(rounds=1, calibration="offset", clock_z=ClockParams(skew=skew),
                        tail_ns=60 * NS_PER_S, error_cadence_ns=NS_PER_S)
    log = run_session(cfg)
    since, err = log.after_round(0)
    slope = np.polyfit(since / 1e9, err / 1e9, 1)[0]
    assert slope == pytest.approx(skew - 1, rel=0.01)
    assert since[-1] >= 60 * NS_PER_S


def test_regression_error_stays_bounded():
    log = run_session(SessionConfig(seed=4, rounds=8, tail_ns=43 * NS_PER_S))
    assert len(log.accepted) == 8
    _, err = log.after_round(7, 43 * NS_PER_S)
    assert np.abs(err).max() < NS_PER_MS
    assert log.model.alpha == pytest.approx(log.true_alpha, abs=3e-5)
