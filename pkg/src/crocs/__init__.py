"""Clock synchronization between WiFi and ZigBee nodes through RSSI side channels."""

from .beacon import BeaconSpec, match_beacon
from .channel import InterferenceModel, NoiseModel, PacketEvent, RssiTrace, detect_packets, render_trace
from .clocks import ClockParams, JitterModel, read_local, stamp_event
from .codec import EnergyParams, TemporalParams, Timestamp64
from .sync import CalibrationModel, SessionConfig, SyncPair, calibrate, estimate_global, run_session

__version__ = "0.1.0"

__all__ = [
    "BeaconSpec", "match_beacon",
    "InterferenceModel", "NoiseModel", "PacketEvent", "RssiTrace", "detect_packets", "render_trace",
    "ClockParams", "JitterModel", "read_local", "stamp_event",
    "EnergyParams", "TemporalParams", "Timestamp64",
    "CalibrationModel", "SessionConfig", "SyncPair", "calibrate", "estimate_global", "run_session",
]
