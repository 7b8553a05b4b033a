"""Experiment runners and the ``crocs`` command line."""

from .experiments import ExperimentSpec, ResultTable, cmd_beacon_match, cmd_ber_energy, cmd_ber_temporal, cmd_sweep, cmd_sync_error

__all__ = ["ExperimentSpec", "ResultTable", "cmd_beacon_match", "cmd_ber_energy", "cmd_ber_temporal", "cmd_sweep", "cmd_sync_error"]
