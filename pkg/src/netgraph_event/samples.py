"""Window labeling, stratified splitting, normalization and graph construction."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError, SplitError
from .ingest import EventLog, LogPanel

NORMAL, ABNORMAL, UNKNOWN = 0, 1, -1
LABEL_NAMES = {NORMAL: "0", ABNORMAL: "1", UNKNOWN: "unknown"}
DEFAULT_T = 72
DEFAULT_STRIDE = 12


@dataclass
class GraphSequenceSample:
    """T consecutive snapshots ending at ``end_tick`` (inclusive)."""

    end_tick: int
    label: int
    split: str | None = None

    @property
    def sample_id(self) -> str:
        return f"t{self.end_tick}"

    def window(self, values: np.ndarray, T: int) -> np.ndarray:
        """View of ``values[end_tick - T + 1 : end_tick + 1]``."""
        return values[self.end_tick - T + 1 : self.end_tick + 1]


@dataclass
class SampleMeta:
    T: int
    stride: int
    event_ticks: list[int] = field(default_factory=list)
    skipped_events: int = 0


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.6
    val: float = 0.2
    test: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if min(self.train, self.val, self.test) <= 0:
            raise ConfigError("split fractions must be positive")
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise ConfigError("split fractions must sum to 1")


def event_ticks(panel: LogPanel, events: EventLog) -> list[int]:
    """Latest panel tick at or before each in-range event, deduplicated."""
    last = int(panel.ticks[-1]) + panel.tick_interval_s - 1
    inside = events.clipped(int(panel.ticks[0]), last)
    return sorted({panel.tick_index(ts) for ts in inside.timestamps})


def build_samples(
    panel: LogPanel, events: EventLog, T: int = DEFAULT_T, stride: int = DEFAULT_STRIDE
) -> tuple[list[GraphSequenceSample], SampleMeta]:
    """Label every candidate window as normal, abnormal or unknown.

    The window ending at an event's tick is abnormal. Any other candidate
    whose span touches ``[t - T + 1, t + T]`` around some event tick ``t`` is
    unknown; everything else is normal. Events earlier than tick ``T - 1``
    have no full window and are counted in ``meta.skipped_events``; they
    still mask their neighbourhood.
    """
    if T < 1 or T > panel.num_ticks:
        raise ConfigError(f"T={T} must lie in [1, {panel.num_ticks}]")
    if stride < 1:
        raise ConfigError("stride must be >= 1")

    ticks = np.asarray(event_ticks(panel, events), dtype=np.int64)
    positive = ticks[ticks >= T - 1]
    meta = SampleMeta(T=T, stride=stride, event_ticks=[int(t) for t in positive],
                      skipped_events=int((ticks < T - 1).sum()))

    candidates = np.arange(T - 1, panel.num_ticks, stride, dtype=np.int64)
    ends = np.union1d(candidates, positive)
    labels = np.full(ends.shape, NORMAL, dtype=np.int64)
    if ticks.size:
        # Window [e - T + 1, e] meets zone [t - T + 1, t + T] iff t - T + 1 <= e <= t + 2T - 1.
        lo = ticks[None, :] - T + 1
        hi = ticks[None, :] + 2 * T - 1
        near = ((ends[:, None] >= lo) & (ends[:, None] <= hi)).any(axis=1)
        labels[near] = UNKNOWN
    labels[np.isin(ends, positive)] = ABNORMAL
    samples = [GraphSequenceSample(int(e), int(y)) for e, y in zip(ends, labels)]
    return samples, meta


def split_samples(
    samples: Sequence[GraphSequenceSample], spec: SplitSpec = SplitSpec()
) -> tuple[list[GraphSequenceSample], list[GraphSequenceSample], list[GraphSequenceSample]]:
    """Stratified train/val/test split; unknown samples all go to train.

    Returned samples are copies tagged with their split name.
    """
    rng = np.random.default_rng(spec.seed)
    parts: dict[str, list[GraphSequenceSample]] = {"train": [], "val": [], "test": []}
    for label in (NORMAL, ABNORMAL):
        group = [s for s in samples if s.label == label]
        if len(group) < 3:
            raise SplitError(
                f"need at least 3 samples with label {label} to stratify, got {len(group)}"
            )
        order = rng.permutation(len(group))
        n_val = max(1, int(round(spec.val * len(group))))
        n_test = max(1, int(round(spec.test * len(group))))
        n_train = len(group) - n_val - n_test
        if n_train < 1:
            n_train, n_val = 1, len(group) - 1 - n_test
        picked = [group[i] for i in order]
        parts["train"] += picked[:n_train]
        parts["val"] += picked[n_train : n_train + n_val]
        parts["test"] += picked[n_train + n_val :]
    parts["train"] += [s for s in samples if s.label == UNKNOWN]

    out = []
    for name in ("train", "val", "test"):
        tagged = [GraphSequenceSample(s.end_tick, s.label, name) for s in parts[name]]
        out.append(sorted(tagged, key=lambda s: s.end_tick))
    return tuple(out)


def relabel_as_unknown(
    samples: Sequence[GraphSequenceSample], fraction: float, seed: int
) -> list[GraphSequenceSample]:
    """Hide ``fraction`` of the abnormal labels, keeping at least one."""
    positives = [i for i, s in enumerate(samples) if s.label == ABNORMAL]
    k = min(int(np.floor(fraction * len(positives))), max(len(positives) - 1, 0))
    hidden = set(np.random.default_rng(seed).choice(positives, size=k, replace=False).tolist()) if k else set()
    return [
        GraphSequenceSample(s.end_tick, UNKNOWN if i in hidden else s.label, s.split)
        for i, s in enumerate(samples)
    ]


def stack_windows(values: np.ndarray, samples: Sequence[GraphSequenceSample], T: int) -> np.ndarray:
    """Materialize ``[len(samples), T, n, F]`` windows."""
    if not samples:
        return np.zeros((0, T) + values.shape[1:], dtype=values.dtype)
    bad = [s.end_tick for s in samples if s.end_tick < T - 1 or s.end_tick >= values.shape[0]]
    if bad:
        raise DataError(f"windows ending at ticks {bad[:5]} fall outside the panel")
    return np.stack([s.window(values, T) for s in samples])


def labels_of(samples: Sequence[GraphSequenceSample]) -> np.ndarray:
    return np.array([s.label for s in samples], dtype=np.int64)


@dataclass
class NormStats:
    mean: np.ndarray  # [n, F]
    std: np.ndarray  # [n, F]

    def apply(self, windows: np.ndarray) -> np.ndarray:
        return (windows - self.mean) / self.std


def fit_norm_stats(train: np.ndarray) -> NormStats:
    """Per (node, attribute) mean/std over every time step of the train windows."""
    if train.shape[0] == 0:
        raise DataError("cannot normalize with an empty train split")
    flat = train.reshape(-1, *train.shape[-2:])
    std = flat.std(axis=0)
    return NormStats(mean=flat.mean(axis=0), std=np.where(std < 1e-8, 1.0, std))


def normalize(train: np.ndarray, val: np.ndarray, test: np.ndarray):
    """Z-score all three splits with train statistics.

    Not idempotent: a second application re-centres with the same stats.
    """
    stats = fit_norm_stats(train)
    return stats.apply(train), stats.apply(val), stats.apply(test), stats


# -- graphs --------------------------------------------------------------------


def full_adjacency(n: int) -> np.ndarray:
    if n < 1:
        raise ConfigError("graph needs at least one node")
    return np.ones((n, n), dtype=np.int64)


def pearson_matrix(series: np.ndarray) -> np.ndarray:
    """Pearson correlation of columns of ``[ticks, n]``; zero-variance pairs give 0."""
    centered = series - series.mean(axis=0)
    norms = np.sqrt((centered**2).sum(axis=0))
    safe = np.where(norms > 0, norms, 1.0)
    corr = (centered.T @ centered) / np.outer(safe, safe)
    dead = norms <= 1e-12 * max(1.0, float(np.abs(series).max(initial=0.0)))
    corr[dead, :] = 0.0
    corr[:, dead] = 0.0
    return corr


def correlation_adjacency(panel: LogPanel | np.ndarray) -> np.ndarray:
    """Connect node pairs whose |Pearson r| exceeds mean + one std of all pairs.

    Each node is summarized by its attribute-mean series. Accepts a panel or
    a raw ``[ticks, n, F]`` array.
    """
    values = panel.values if isinstance(panel, LogPanel) else np.asarray(panel, dtype=np.float64)
    if values.shape[0] < 2:
        raise DataError("correlation graph needs at least 2 ticks")
    n = values.shape[1]
    adj = np.eye(n, dtype=np.int64)
    if n == 1:
        return adj
    strength = np.abs(pearson_matrix(values.mean(axis=2)))
    off = strength[~np.eye(n, dtype=bool)]
    threshold = off.mean() + off.std()
    adj[(strength > threshold) & ~np.eye(n, dtype=bool)] = 1
    return np.maximum(adj, adj.T)


# -- persistence ---------------------------------------------------------------


def write_sample_index(samples: Sequence[GraphSequenceSample], path: str | Path) -> None:
    """``sample_id,end_tick,label,split`` rows; windows stay in the panel file."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "end_tick", "label", "split"])
        for s in samples:
            writer.writerow([s.sample_id, s.end_tick, LABEL_NAMES[s.label], s.split or ""])


def read_sample_index(path: str | Path) -> list[GraphSequenceSample]:
    parse = {v: k for k, v in LABEL_NAMES.items()}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                out.append(GraphSequenceSample(int(row["end_tick"]), parse[row["label"]], row.get("split") or None))
            except (KeyError, ValueError) as exc:
                raise DataError(f"{path}: bad sample row {row}") from exc
    return out
