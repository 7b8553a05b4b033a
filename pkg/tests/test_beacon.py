import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crocs.beacon import (
    BEACON_TABLE,
    UNKNOWN,
    BeaconSpec,
    autocorrelation,
    beacon_schedule,
    correlation_profile,
    is_barker,
    match_beacon,
    matching_rate,
    pattern_of,
    symbolize,
)
from crocs.channel import NoiseModel, detect_packets, render_trace

MS = 1_000_000


@pytest.mark.parametrize("length", sorted(BEACON_TABLE))
def test_table_patterns_are_barker(length):
    for code in BEACON_TABLE[length]:
        assert len(code) == length - 1
        assert is_barker(code)


def test_counter_sequence_breaks_sidelobe_bound():
    code = (+1, -1, +1, -1)
    assert autocorrelation(code, 2) == 2
    assert not is_barker(code)


def test_barker13_peak_and_sidelobes():
    code = pattern_of(14)
    assert autocorrelation(code, 0) == 13
    assert [abs(autocorrelation(code, v)) for v in range(1, 13)] == [0, 1] * 6


def test_pattern_lookup_errors():
    assert pattern_of(5, "B") == (+1, +1, -1, +1)
    with pytest.raises(ValueError):
        pattern_of(7)
    with pytest.raises(ValueError):
        pattern_of(3, "B")
    with pytest.raises(ValueError):
        autocorrelation((1, 1), 2)


def test_spec_validation_and_geometry():
    spec = BeaconSpec()
    assert spec.intervals_ns == (30 * MS, 70 * MS)
    assert spec.span_ns == 100 * MS
    assert spec.default_tol_ns == 5 * MS
    with pytest.raises(ValueError):
        BeaconSpec(t1_ns=5, t2_ns=5)
    with pytest.raises(ValueError):
        BeaconSpec(length=9)


def test_schedule_intervals():
    spec = BeaconSpec(length=5, variant="B")
    events, first = beacon_schedule(spec, 7 * MS)
    assert first == 7 * MS
    gaps = [b.start - a.start for a, b in zip(events, events[1:])]
    assert tuple(gaps) == spec.intervals_ns


def test_symbolize():
    s = symbolize([30 * MS, 70 * MS, 50 * MS, 33 * MS], 30 * MS, 70 * MS, 5 * MS)
    assert s == [+1, -1, UNKNOWN, +1]
    with pytest.raises(ValueError):
        symbolize([], 30 * MS, 70 * MS, 20 * MS)


def test_correlation_profile():
    assert correlation_profile([1, -1, 1, 1, -1], (1, -1)) == [2, -2, 0, 2]


def test_match_skips_leading_noise_packets():
    spec = BeaconSpec()
    rises = [0, 12 * MS, 40 * MS, 70 * MS, 140 * MS, 300 * MS]
    det = match_beacon(rises, spec)
    assert det.first_packet_rise == 40 * MS
    assert det.rise_indices == (2, 3, 4)
    assert det.last_index == 4
    assert det.matched_length == 3


def test_match_returns_none_without_beacon():
    assert match_beacon([0, 50 * MS, 100 * MS], BeaconSpec()) is None
    assert match_beacon([], BeaconSpec()) is None


def test_stray_rise_inside_beacon():
    spec = BeaconSpec()
    rises = [10 * MS, 40 * MS, 75 * MS, 110 * MS]
    assert match_beacon(rises, spec) is None
    det = match_beacon(rises, spec, max_insertions=1)
    assert det.first_packet_rise == 10 * MS
    assert det.rise_indices == (0, 1, 3)


def test_threshold_allows_partial_match():
    spec = BeaconSpec(length=5)
    rises = [0, 30 * MS, 60 * MS, 90 * MS, 190 * MS]
    assert match_beacon(rises, spec) is None
    assert match_beacon(rises, spec, threshold=2).first_packet_rise == 0


@settings(max_examples=60)
@given(
    st.sampled_from(sorted(BEACON_TABLE)),
    st.lists(st.integers(1, 25 * MS), max_size=4),
    st.integers(-MS, MS),
)
def test_match_finds_first_packet(length, lead_gaps, wobble):
    spec = BeaconSpec(length=length)
    # stray packets before the beacon, spaced too tightly to look like t1 or t2
    t, rises = 0, []
    for g in lead_gaps:
        rises.append(t)
        t += g
    events, first = beacon_schedule(spec, t + 200 * MS)
    beacon_rises = [e.start + (wobble if i % 2 else 0) for i, e in enumerate(events)]
    det = match_beacon(rises + beacon_rises, spec)
    assert det is not None
    assert det.first_packet_rise == first


def test_match_on_rendered_trace():
    spec = BeaconSpec(length=4)
    events, first = beacon_schedule(spec, 25 * MS)
    tr = render_trace(events, NoiseModel(sigma_db=1.0), span=(0, 250 * MS), rng=np.random.default_rng(2))
    dets = detect_packets(tr)
    det = match_beacon([d.rise_true_time for d in dets], spec,
                       sample_indices=[d.rise_sample_index for d in dets])
    assert 0 <= det.first_packet_rise - first < 166_667
    assert tr.time_of(det.first_sample_index) == det.first_packet_rise


def test_matching_rate():
    assert matching_rate([True, False, True, True]) == 0.75

    class R:
        def __init__(self, m):
            self.beacon_matched = m

    assert matching_rate([R(True), R(False)]) == 0.5
    with pytest.raises(ValueError):
        matching_rate([])
