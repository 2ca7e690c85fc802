"""Interface-log ingestion, panel persistence and synthetic telemetry.

A :class:`LogPanel` is the time-aligned ``[tick, node, attribute]`` array that
every later stage reads windows from.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError, DataError, EmptyInputError, SchemaError

DEFAULT_TICK_INTERVAL_S = 300
# One day of 5-minute ticks; period of the synthetic diurnal cycle.
TICKS_PER_DAY = 288
# Longest precursor and half-width of the unknown zone around each event.
MAX_LEAD_TICKS = 72
MIN_EVENT_SEPARATION = 2 * MAX_LEAD_TICKS


@dataclass(frozen=True)
class LogRecord:
    timestamp: int
    interface_id: str
    attributes: tuple[float, ...]


@dataclass
class LogPanel:
    """Dense, tick-aligned attribute readings for one network.

    ``values`` has shape ``[num_ticks, n, F]``; ``missing_mask`` has shape
    ``[num_ticks, n]`` and is True where no reading fell into the bucket.
    """

    interface_ids: list[str]
    tick_interval_s: int
    ticks: np.ndarray
    values: np.ndarray
    missing_mask: np.ndarray

    @property
    def num_ticks(self) -> int:
        return int(self.values.shape[0])

    @property
    def n(self) -> int:
        return int(self.values.shape[1])

    @property
    def F(self) -> int:
        return int(self.values.shape[2])

    def tick_index(self, timestamp: float) -> int:
        """Index of the latest tick at or before ``timestamp`` (may be out of range)."""
        return int(math.floor((timestamp - int(self.ticks[0])) / self.tick_interval_s))


@dataclass
class EventLog:
    entries: list[tuple[int, str]] = field(default_factory=list)

    def __post_init__(self):
        self.entries = sorted((int(t), str(net)) for t, net in self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def timestamps(self) -> list[int]:
        return [t for t, _ in self.entries]

    def clipped(self, start: int, end: int) -> "EventLog":
        """Events with ``start <= timestamp <= end``."""
        return EventLog([(t, net) for t, net in self.entries if start <= t <= end])


@dataclass(frozen=True)
class SynthConfig:
    n_interfaces: int = 12
    F: int = 4
    num_ticks: int = 6000
    num_events: int = 25
    anomaly_lead_ticks: int = 48
    noise_scale: float = 1.0
    # Peak precursor offset as a multiple of the interface's base level.
    precursor_strength: float = 1.0
    seed: int = 0
    tick_interval_s: int = DEFAULT_TICK_INTERVAL_S
    start_timestamp: int = 1_589_241_600  # 2020-05-12T00:00:00Z
    network_id: str = "synthetic"

    def __post_init__(self):
        for name in ("n_interfaces", "F", "num_ticks", "anomaly_lead_ticks", "tick_interval_s"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.num_events < 0:
            raise ConfigError(f"num_events must be non-negative, got {self.num_events}")
        if self.noise_scale <= 0:
            raise ConfigError(f"noise_scale must be positive, got {self.noise_scale}")
        if self.precursor_strength <= 0:
            raise ConfigError("precursor_strength must be positive")
        if self.anomaly_lead_ticks > MAX_LEAD_TICKS:
            raise ConfigError(f"anomaly_lead_ticks must be <= {MAX_LEAD_TICKS}")
        if self.num_events * MIN_EVENT_SEPARATION >= self.num_ticks:
            raise ConfigError(
                f"cannot place {self.num_events} events {MIN_EVENT_SEPARATION} ticks apart "
                f"in {self.num_ticks} ticks"
            )
        if self.num_events > 0 and self.n_interfaces < 2:
            raise ConfigError("precursor patterns need at least 2 interfaces")


# -- ingestion -----------------------------------------------------------------


def ingest_arrays(
    timestamps: np.ndarray,
    interface_ids: Sequence[str],
    attributes: np.ndarray,
    tick_interval_s: int = DEFAULT_TICK_INTERVAL_S,
) -> LogPanel:
    """Vectorized core of :func:`ingest_logs` over column arrays."""
    timestamps = np.asarray(timestamps, dtype=np.int64)
    attributes = np.asarray(attributes, dtype=np.float64)
    if timestamps.size == 0:
        raise EmptyInputError("no log records")
    if attributes.ndim != 2 or attributes.shape[0] != timestamps.size:
        raise SchemaError("attributes must be a [records x F] array")
    if tick_interval_s < 1:
        raise ConfigError("tick_interval_s must be positive")

    ids, node = np.unique(np.asarray(interface_ids, dtype=object).astype(str), return_inverse=True)
    buckets = timestamps // tick_interval_s
    first = int(buckets.min())
    row = buckets - first
    num_ticks = int(row.max()) + 1
    n, F = len(ids), attributes.shape[1]

    sums = np.zeros((num_ticks, n, F))
    counts = np.zeros((num_ticks, n), dtype=np.int64)
    np.add.at(sums, (row, node), attributes)
    np.add.at(counts, (row, node), 1)

    missing = counts == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        values = sums / counts[..., None]
    values[missing] = np.nan
    ticks = (first + np.arange(num_ticks, dtype=np.int64)) * tick_interval_s
    return LogPanel(
        interface_ids=[str(i) for i in ids],
        tick_interval_s=int(tick_interval_s),
        ticks=ticks,
        values=values,
        missing_mask=missing,
    )


def ingest_logs(records: Iterable[LogRecord], tick_interval_s: int = DEFAULT_TICK_INTERVAL_S) -> LogPanel:
    """Bucket raw records onto the tick grid.

    Duplicate readings inside one bucket are averaged, absent cells are
    flagged in ``missing_mask`` and interfaces are ordered lexicographically.
    """
    records = list(records)
    if not records:
        raise EmptyInputError("no log records")
    width = len(records[0].attributes)
    if any(len(r.attributes) != width for r in records):
        raise SchemaError("records disagree on the number of attributes")
    return ingest_arrays(
        np.array([r.timestamp for r in records], dtype=np.int64),
        [r.interface_id for r in records],
        np.array([r.attributes for r in records], dtype=np.float64).reshape(len(records), width),
        tick_interval_s,
    )


def panel_to_records(panel: LogPanel) -> Iterator[LogRecord]:
    """Inverse of ingestion: one record per observed (tick, interface) cell."""
    for t, ts in enumerate(panel.ticks):
        for i, iface in enumerate(panel.interface_ids):
            if not panel.missing_mask[t, i]:
                yield LogRecord(int(ts), iface, tuple(float(v) for v in panel.values[t, i]))


def fill_missing(panel: LogPanel) -> LogPanel:
    """Forward-fill missing cells per (interface, attribute); leading gaps become 0."""
    observed = ~panel.missing_mask
    idx = np.where(observed, np.arange(panel.num_ticks)[:, None], -1)
    idx = np.maximum.accumulate(idx, axis=0)
    nodes = np.arange(panel.n)[None, :]
    filled = panel.values[np.maximum(idx, 0), nodes]
    filled[idx < 0] = 0.0
    return LogPanel(
        interface_ids=list(panel.interface_ids),
        tick_interval_s=panel.tick_interval_s,
        ticks=panel.ticks.copy(),
        values=filled,
        missing_mask=panel.missing_mask.copy(),
    )


# -- synthetic telemetry -------------------------------------------------------


def schedule_events(config: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """Event tick indices, pairwise at least MIN_EVENT_SEPARATION apart."""
    k = config.num_events
    if k == 0:
        return np.zeros(0, dtype=np.int64)
    lo, hi = MAX_LEAD_TICKS, config.num_ticks - 1
    slack = hi - lo - (k - 1) * MIN_EVENT_SEPARATION
    if slack < 0:
        raise ConfigError("event schedule infeasible")
    offsets = np.sort(rng.integers(0, slack + 1, size=k))
    return lo + offsets + np.arange(k) * MIN_EVENT_SEPARATION


def synthesize(config: SynthConfig) -> tuple[LogPanel, EventLog]:
    """Generate background traffic with coordinated-ramp precursors before each event.

    Background per (interface, attribute) is a daily sinusoid plus AR(1)
    noise. Before each event a random subset of at least two interfaces ramps
    up linearly over ``anomaly_lead_ticks`` ticks, ending at the event tick.
    """
    rng = np.random.default_rng(config.seed)
    n, F, L = config.n_interfaces, config.F, config.num_ticks
    t = np.arange(L, dtype=np.float64)

    base = rng.uniform(500.0, 2000.0, size=(n, F))
    amplitude = rng.uniform(0.2, 0.4, size=(n, F)) * base
    phase = rng.uniform(0.0, 2 * np.pi, size=(n, 1)) + rng.normal(0.0, 0.1, size=(n, F))
    values = base + amplitude * np.sin(2 * np.pi * t[:, None, None] / TICKS_PER_DAY + phase)

    shocks = rng.standard_normal(size=(L, n, F)) * (0.05 * config.noise_scale * base)
    values += lfilter([1.0], [1.0, -0.8], shocks, axis=0)

    event_ticks = schedule_events(config, rng)
    lead = config.anomaly_lead_ticks
    ramp = np.arange(1, lead + 1, dtype=np.float64) / lead
    event_ts = []
    for e in event_ticks:
        size = int(rng.integers(2, max(2, n // 2) + 1))
        subset = np.sort(rng.choice(n, size=size, replace=False))
        magnitude = config.precursor_strength * rng.uniform(0.5, 1.0, size=(size, F)) * base[subset]
        values[e - lead + 1 : e + 1, subset, :] += ramp[:, None, None] * magnitude
        offset = int(rng.integers(1, config.tick_interval_s)) if config.tick_interval_s > 1 else 0
        event_ts.append(config.start_timestamp + int(e) * config.tick_interval_s + offset)

    np.maximum(values, 0.0, out=values)
    panel = LogPanel(
        interface_ids=[f"if{i:03d}" for i in range(n)],
        tick_interval_s=config.tick_interval_s,
        ticks=config.start_timestamp + np.arange(L, dtype=np.int64) * config.tick_interval_s,
        values=values,
        missing_mask=np.zeros((L, n), dtype=bool),
    )
    return panel, EventLog([(ts, config.network_id) for ts in event_ts])


# -- persistence ---------------------------------------------------------------


def save_panel(panel: LogPanel, directory: str | Path) -> Path:
    """Write ``meta.json`` plus little-endian ``values.f32`` (and ``missing.u8``)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "interface_ids": list(panel.interface_ids),
        "tick_interval_s": int(panel.tick_interval_s),
        "F": panel.F,
        "start_timestamp": int(panel.ticks[0]),
        "num_ticks": panel.num_ticks,
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    (directory / "values.f32").write_bytes(np.ascontiguousarray(panel.values, dtype="<f4").tobytes())
    (directory / "missing.u8").write_bytes(np.ascontiguousarray(panel.missing_mask, dtype=np.uint8).tobytes())
    return directory


def load_panel(directory: str | Path) -> LogPanel:
    directory = Path(directory)
    try:
        meta = json.loads((directory / "meta.json").read_text())
        raw = np.frombuffer((directory / "values.f32").read_bytes(), dtype="<f4")
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read panel at {directory}: {exc}") from exc
    n, F = len(meta["interface_ids"]), int(meta["F"])
    if n == 0 or raw.size % (n * F):
        raise DataError(f"values.f32 size {raw.size} is not a multiple of n*F={n * F}")
    num_ticks = raw.size // (n * F)
    values = raw.reshape(num_ticks, n, F).astype(np.float64)
    missing_path = directory / "missing.u8"
    if missing_path.exists():
        missing = np.frombuffer(missing_path.read_bytes(), dtype=np.uint8).reshape(num_ticks, n).astype(bool)
    else:
        missing = ~np.isfinite(values).all(axis=2)
    tick = int(meta["tick_interval_s"])
    start = int(meta.get("start_timestamp", 0))
    return LogPanel(
        interface_ids=list(meta["interface_ids"]),
        tick_interval_s=tick,
        ticks=start + np.arange(num_ticks, dtype=np.int64) * tick,
        values=values,
        missing_mask=missing,
    )


def read_log_csv(path: str | Path) -> Iterator[LogRecord]:
    """Stream records from ``timestamp,interface_id,attr_0,...`` CSV."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["timestamp", "interface_id"]:
            raise SchemaError(f"{path}: expected header timestamp,interface_id,attr_0,...")
        width = len(header) - 2
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width + 2:
                raise SchemaError(f"{path}:{lineno}: expected {width} attributes, got {len(row) - 2}")
            try:
                yield LogRecord(int(row[0]), row[1], tuple(float(v) for v in row[2:]))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc


def write_log_csv(records: Iterable[LogRecord], path: str | Path) -> None:
    records = iter(records)
    first = next(records, None)
    width = len(first.attributes) if first else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "interface_id"] + [f"attr_{j}" for j in range(width)])
        for rec in itertools.chain([first] if first else [], records):
            writer.writerow([rec.timestamp, rec.interface_id, *map(repr, rec.attributes)])


def read_events_csv(path: str | Path) -> EventLog:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"timestamp", "network_id"} <= set(reader.fieldnames):
            raise SchemaError(f"{path}: expected header timestamp,network_id")
        try:
            return EventLog([(int(float(row["timestamp"])), row["network_id"]) for row in reader])
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from exc


def write_events_csv(events: EventLog, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "network_id"])
        writer.writerows(events.entries)
