"""Seeded Monte Carlo experiment runners.

Every experiment is a grid of cells times a number of trials.  Trial ``i``
draws its randomness from ``SeedSequence([seed, i])`` in every cell, so
neighbouring cells see the same jitter, noise and payload draws (common
random numbers) and differ only in the swept parameter.  Results are
assembled in grid order and therefore do not depend on worker scheduling.
"""

from __future__ import annotations

import copy
import csv
import io
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import numpy as np

from ..beacon import BeaconSpec, beacon_schedule, match_beacon
from ..channel import NoiseModel, detect_packets, jitter_schedule, render_trace
from ..clocks import NS_PER_MS, JitterModel
from ..codec import EnergyParams, TemporalParams, ber, energy_decode, energy_encode, temporal_demodulate, temporal_encode
from ..sync import ConfigError, SessionConfig, SessionLog, run_session

KINDS = ("beacon-match", "ber-temporal", "ber-energy", "sync-error", "sweep")
LEAD_NS = 20 * NS_PER_MS
TAIL_NS = 20 * NS_PER_MS


@lru_cache(maxsize=None)
def _presets_text() -> str:
    return resources.files("crocs.harness").joinpath("presets.json").read_text()


def load_presets() -> dict:
    return json.loads(_presets_text())


def noise_sigma(level, presets: dict) -> float:
    """A named noise level (none/low/medium/high) or a sigma in dB."""
    if isinstance(level, str):
        try:
            return float(presets["noise_sigma_db"][level])
        except KeyError:
            raise ConfigError(
                f"grid.noise: unknown level {level!r}; choose from {sorted(presets['noise_sigma_db'])}"
            ) from None
    return float(level)


def merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def set_path(d: dict, path: str, value) -> dict:
    out = copy.deepcopy(d)
    node = out
    keys = path.split(".")
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"grid.{path}: {k} is not an object")
    node[keys[-1]] = value
    return out


def session_base(presets: dict, preset: str, overrides: dict | None = None) -> dict:
    try:
        base = presets["sessions"][preset]
    except KeyError:
        raise ConfigError(f"preset: unknown session preset {preset!r}") from None
    return merge(base, overrides or {})


# -- spec and results ---------------------------------------------------------

DEFAULT_GRIDS: dict[str, dict[str, list]] = {
    "beacon-match": {"length": [3, 4, 5], "t2_ms": [50, 60, 70], "noise": ["none", "low", "medium", "high"]},
    "ber-temporal": {"g_ms": [1, 2, 3], "noise": ["none", "low", "medium", "high"]},
    "ber-energy": {"levels": [2, 4], "slot_ms": [2, 5, 10], "noise": ["none", "low", "medium", "high"]},
    "sync-error": {"pair_interval_ms": [50, 7000], "calibration": ["offset", "regression"]},
    "sweep": {"pair_interval_ns": [7_000_000_000]},
}
DEFAULT_TRIALS = {"beacon-match": 2000, "ber-temporal": 2000, "ber-energy": 2000, "sync-error": 100, "sweep": 10}
DEFAULT_PRESET = {"sync-error": "fast", "sweep": "default"}
_GRID_KEYS = {
    "beacon-match": {"length", "t1_ms", "t2_ms", "noise"},
    "ber-temporal": {"g_ms", "noise"},
    "ber-energy": {"levels", "slot_ms", "noise"},
    "sync-error": {"pair_interval_ms", "calibration", "noise"},
}


@dataclass
class ExperimentSpec:
    kind: str
    grid: dict[str, list] = field(default_factory=dict)
    trials: int = 1
    seed: int = 0
    out: str | None = None
    preset: str = "default"
    base: dict = field(default_factory=dict)
    workers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind: expected one of {', '.join(KINDS)}, got {self.kind!r}")
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError(f"trials: must be an integer >= 1, got {self.trials!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 1 << 64:
            raise ConfigError(f"seed: must be an unsigned 64-bit integer, got {self.seed!r}")
        if not self.grid:
            raise ConfigError("grid: must name at least one parameter")
        for k, v in self.grid.items():
            if not isinstance(v, list) or not v:
                raise ConfigError(f"grid.{k}: expected a non-empty list")
        allowed = _GRID_KEYS.get(self.kind)
        if allowed is not None:
            bad = sorted(set(self.grid) - allowed)
            if bad:
                raise ConfigError(f"grid: unknown parameter(s) {', '.join(bad)} for {self.kind}")

    @classmethod
    def from_config(cls, kind: str, data: dict | None = None, **overrides) -> "ExperimentSpec":
        data = dict(data or {})
        known = {"grid", "trials", "seed", "out", "preset", "base", "workers", "kind"}
        bad = sorted(set(data) - known)
        if bad:
            raise ConfigError(f"config: unknown field(s) {', '.join(bad)}")
        if data.pop("kind", kind) != kind:
            raise ConfigError(f"kind: config is for a different command than {kind!r}")
        grid = data.pop("grid", None) or DEFAULT_GRIDS[kind]
        kw = dict(
            kind=kind, grid=grid, trials=data.pop("trials", DEFAULT_TRIALS[kind]),
            preset=data.pop("preset", DEFAULT_PRESET.get(kind, "default")), **data,
        )
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)

    def cells(self) -> list[dict]:
        names = list(self.grid)
        return [dict(zip(names, combo)) for combo in itertools.product(*(self.grid[n] for n in names))]


@dataclass
class ResultTable:
    kind: str
    params: list[str]
    rows: list[dict] = field(default_factory=list)

    @property
    def columns(self) -> list[str]:
        return self.params + ["metric", "value", "ci_halfwidth", "trials"]

    def add(self, cell: dict, metric: str, value: float, ci: float, n: int) -> None:
        self.rows.append({**cell, "metric": metric, "value": value, "ci_halfwidth": ci, "trials": n})

    def get(self, metric: str, **cell) -> dict:
        for r in self.rows:
            if r["metric"] == metric and all(r[k] == v for k, v in cell.items()):
                return r
        raise KeyError((metric, cell))

    def value(self, metric: str, **cell) -> float:
        return self.get(metric, **cell)["value"]

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in self.columns])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def summary(self) -> str:
        lines = [f"{self.kind}: {len({tuple(r[p] for p in self.params) for r in self.rows})} cells"]
        for r in self.rows:
            cell = " ".join(f"{p}={r[p]}" for p in self.params)
            lines.append(f"  {cell:<48} {r['metric']:<16} {_fmt(r['value']):>12} +/- {_fmt(r['ci_halfwidth'])}")
        return "\n".join(lines)


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.10g}"
    return str(v)


def mean_ci(values) -> tuple[float, float]:
    """Mean and 95% normal-approximation confidence half-width."""
    x = np.asarray(values, dtype=np.float64)
    x = x[~np.isnan(x)]
    if len(x) == 0:
        return math.nan, math.nan
    if len(x) == 1:
        return float(x[0]), 0.0
    return float(x.mean()), float(1.96 * x.std(ddof=1) / math.sqrt(len(x)))


def trial_streams(seed: int, trial: int, n: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence([seed, trial]).spawn(n)
    return [np.random.default_rng(c) for c in children]


def trial_seed(seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, trial]).generate_state(1, np.uint64)[0])


# -- trial bodies --------------------------------------------------------------

def beacon_trial(cell: dict, seed: int, trial: int, presets: dict) -> dict[str, float]:
    bp = presets["beacon_match"]
    tx, noise_rng = trial_streams(seed, trial, 2)
    t1 = int(cell.get("t1_ms", bp["t1_ms"]) * NS_PER_MS)
    t2 = int(cell["t2_ms"] * NS_PER_MS)
    spec = BeaconSpec(int(cell["length"]), t1, t2)
    events, _ = beacon_schedule(spec, LEAD_NS, bp["packet_ms"] * NS_PER_MS, bp["power_dbm"])
    # named noise levels also set how often the sender stalls between packets
    spikes = bp["spike_prob"].get(cell["noise"], 0.0) if isinstance(cell["noise"], str) else 0.0
    events = jitter_schedule(events, JitterModel(**bp["tx_jitter"], spike_prob=spikes), tx)
    noise = NoiseModel(presets["floor_dbm"], noise_sigma(cell["noise"], presets))
    trace = render_trace(events, noise, span=(0, events[-1].end + TAIL_NS), rng=noise_rng)
    rises = [d.rise_true_time for d in detect_packets(trace, presets["margin_db"])]
    det = match_beacon(rises, spec, abs(t2 - t1) // 4)
    hit = det is not None and abs(det.first_packet_rise - events[0].start) <= bp["hit_tolerance_ns"]
    return {"match_rate": float(hit)}


def temporal_trial(cell: dict, seed: int, trial: int, presets: dict) -> dict[str, float]:
    tp = presets["ber_temporal"]
    tx, noise_rng, data = trial_streams(seed, trial, 3)
    p = TemporalParams(granularity_ms=int(cell["g_ms"]))
    digits = data.integers(0, 10, tp["digits"]).tolist()
    events = temporal_encode(digits, p, LEAD_NS, tp["packet_ms"] * NS_PER_MS, tp["power_dbm"])
    sd = tp["jitter_stddev_ns"].get(cell["noise"], 0) if isinstance(cell["noise"], str) else 0
    events = jitter_schedule(events, JitterModel(**tp["tx_jitter"], stddev_ns=sd), tx)
    noise = NoiseModel(presets["floor_dbm"], noise_sigma(cell["noise"], presets))
    trace = render_trace(events, noise, span=(0, events[-1].end + TAIL_NS), rng=noise_rng)
    rises = [d.rise_true_time for d in detect_packets(trace, presets["margin_db"])]
    res = temporal_demodulate(rises, events[0].start, len(digits), p)
    return {"ber": ber(digits, res), "erasure_rate": sum(res.erased) / len(digits)}


def energy_trial(cell: dict, seed: int, trial: int, presets: dict) -> dict[str, float]:
    ep = presets["ber_energy"]
    tx, noise_rng, data = trial_streams(seed, trial, 3)
    levels = int(cell["levels"])
    p = EnergyParams(
        slot_ns=int(cell["slot_ms"] * NS_PER_MS), levels=levels,
        power_dbm=tuple(ep["power_dbm"][str(levels)]), floor_dbm=presets["floor_dbm"],
        edge_guard=ep["edge_guard"],
    )
    bits = data.integers(0, 2, ep["bits"]).tolist()
    n_slots = len(bits) // p.bits_per_slot
    start = LEAD_NS + JitterModel(**ep["tx_jitter"]).sample(tx)
    events = energy_encode(bits, p, start)
    noise = NoiseModel(presets["floor_dbm"], noise_sigma(cell["noise"], presets))
    span = (0, LEAD_NS + (n_slots + 2) * p.slot_ns + TAIL_NS)
    trace = render_trace(events, noise, span=span, rng=noise_rng)
    res = energy_decode(trace, LEAD_NS + p.compensation_ns, n_slots, p)
    return {"ber": ber(bits, res)}


def session_metrics(log: SessionLog) -> dict[str, float]:
    """Per-session summary: errors over the tail after the last accepted round."""
    cfg = log.config
    acc = log.accepted
    out = {
        "accepted_rounds": float(len(acc)),
        "skew_error_ppm": (log.model.alpha - log.true_alpha) * 1e6 if acc else math.nan,
        "max_error_ms": math.nan,
        "exceeds_10ms": math.nan,
    }
    if acc:
        _, err = log.after_round(acc[-1].round, cfg.tail_ns)
        if len(err):
            m = float(np.abs(err).max()) / NS_PER_MS
            out["max_error_ms"] = m
            out["exceeds_10ms"] = float(m > 10.0)
    return out


def duty_cycle(cfg: SessionConfig) -> float:
    """Receiver listening time per round over the pair interval, steady state."""
    mode = "delta" if cfg.incremental else "full"
    listen = cfg.listen_pre_ns + cfg.round_airtime(mode) + cfg.listen_post_ns
    return listen / cfg.pair_interval_ns


def sync_config(cell: dict, base: dict, seed: int, trial: int) -> SessionConfig:
    d = dict(base)
    for k, v in cell.items():
        if k == "pair_interval_ms":
            d["pair_interval_ns"] = int(round(v * NS_PER_MS))
        elif k == "noise":
            d = set_path(d, "noise.sigma_db", noise_sigma(v, load_presets()))
        else:
            d = set_path(d, k, v)
    d["seed"] = trial_seed(seed, trial)
    where = "cell " + ",".join(f"{k}={v}" for k, v in cell.items())
    return SessionConfig.from_dict(d, where)


def session_trial(cell: dict, seed: int, trial: int, base: dict) -> tuple[dict[str, float], SessionLog]:
    log = run_session(sync_config(cell, base, seed, trial))
    return session_metrics(log), log


# -- runners --------------------------------------------------------------------

def _run_cell(args) -> tuple[dict[str, list[float]], Any]:
    kind, cell, seed, trials, base = args
    presets = load_presets()
    cell = {**presets["cell_defaults"].get(kind, {}), **cell}
    metrics: dict[str, list[float]] = {}
    first_log = None
    for i in range(trials):
        if kind in ("sync-error", "sweep"):
            m, log = session_trial(cell, seed, i, base)
            if i == 0:
                first_log = log
        else:
            m = {"beacon-match": beacon_trial, "ber-temporal": temporal_trial,
                 "ber-energy": energy_trial}[kind](cell, seed, i, presets)
        for k, v in m.items():
            metrics.setdefault(k, []).append(v)
    return metrics, first_log


def run_cells(spec: ExperimentSpec, base: dict | None = None) -> list[tuple[dict, dict, Any]]:
    cells = spec.cells()
    jobs = [(spec.kind, c, spec.seed, spec.trials, base) for c in cells]
    if spec.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as ex:
            results = list(ex.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]
    return [(c, m, log) for c, (m, log) in zip(cells, results)]


def _table(spec: ExperimentSpec, results, extra: Callable | None = None) -> ResultTable:
    table = ResultTable(spec.kind, list(spec.grid))
    for cell, metrics, log in results:
        for name, values in metrics.items():
            mean, ci = mean_ci(values)
            table.add(cell, name, mean, ci, spec.trials)
        if extra is not None:
            extra(table, cell, metrics, log)
    return table


def cmd_beacon_match(spec: ExperimentSpec) -> ResultTable:
    return _table(spec, run_cells(spec))


def cmd_ber_temporal(spec: ExperimentSpec) -> ResultTable:
    return _table(spec, run_cells(spec))


def cmd_ber_energy(spec: ExperimentSpec) -> ResultTable:
    return _table(spec, run_cells(spec))


def _skew_spread(table: ResultTable, cell: dict, metrics: dict, log) -> None:
    x = np.asarray(metrics["skew_error_ppm"], dtype=np.float64)
    x = x[~np.isnan(x)]
    n = len(x)
    sd = float(x.std(ddof=1)) if n > 1 else math.nan
    # normal-theory CI of a standard deviation
    ci = 1.96 * sd / math.sqrt(2 * (n - 1)) if n > 1 else math.nan
    table.add(cell, "skew_std_ppm", sd, ci, n)


SERIES_COLUMNS = ["t_ns", "since_sync_ns", "model_round", "error_ns"]


def series_csv(params: list[str], results) -> str:
    """Error series of the first session in each cell."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(params + SERIES_COLUMNS)
    for cell, _, log in results:
        if log is None:
            continue
        for row in zip(log.series_t.tolist(), log.series_since.tolist(),
                       log.series_round.tolist(), log.series_error_ns.tolist()):
            w.writerow([_fmt(cell[p]) for p in params] + list(row))
    return buf.getvalue()


def cmd_sync_error(spec: ExperimentSpec) -> tuple[ResultTable, str]:
    base = session_base(load_presets(), spec.preset, spec.base)
    results = run_cells(spec, base)
    return _table(spec, results, _skew_spread), series_csv(list(spec.grid), results)


def cmd_sweep(spec: ExperimentSpec) -> ResultTable:
    base = session_base(load_presets(), spec.preset, spec.base)

    def extra(table, cell, metrics, log):
        _skew_spread(table, cell, metrics, log)
        table.add(cell, "duty_cycle", duty_cycle(log.config), 0.0, 1)

    return _table(spec, run_cells(spec, base), extra)
