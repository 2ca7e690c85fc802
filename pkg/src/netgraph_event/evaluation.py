"""Label-1 metrics, the repeated-split experiment driver and embedding export."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import Config
from .encoder import EncoderConfig
from .errors import DataError
from .ingest import LogPanel, fill_missing, ingest_logs, load_panel, read_events_csv, read_log_csv, synthesize
from .samples import (
    LABEL_NAMES,
    GraphSequenceSample,
    SplitSpec,
    build_samples,
    correlation_adjacency,
    labels_of,
    normalize,
    relabel_as_unknown,
    split_samples,
    stack_windows,
    write_sample_index,
)
from .trainer import Checkpoint, save_checkpoint, train

log = logging.getLogger(__name__)


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int
    network_id: str = ""
    variant: str = ""
    seed: int | None = None
    split_sizes: dict = field(default_factory=dict)
    stride: int | None = None
    seeds: list[int] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    best_epoch: int | None = None

    def to_json(self) -> dict:
        return asdict(self)


def f1_from(precision: float, recall: float) -> float:
    return 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0


def score(predictions: Sequence[int], labels: Sequence[int]) -> EvalReport:
    """Precision, recall and F1 for label 1; zero denominators give 0 plus a flag."""
    pred = np.asarray(predictions, dtype=np.int64)
    truth = np.asarray(labels, dtype=np.int64)
    if pred.size == 0:
        raise DataError("cannot score an empty prediction set")
    if pred.shape != truth.shape:
        raise DataError(f"{pred.size} predictions for {truth.size} labels")
    if not np.isin(truth, (0, 1)).all() or not np.isin(pred, (0, 1)).all():
        raise DataError("labels and predictions must be 0 or 1")
    tp = int(((pred == 1) & (truth == 1)).sum())
    fp = int(((pred == 1) & (truth == 0)).sum())
    fn = int(((pred == 0) & (truth == 1)).sum())
    tn = int(((pred == 0) & (truth == 0)).sum())
    flags = []
    if tp + fp == 0:
        flags.append("precision_undefined")
    if tp + fn == 0:
        flags.append("recall_undefined")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return EvalReport(precision, recall, f1_from(precision, recall), tp, fp, fn, tn, flags=flags)


def mean_report(reports: Sequence[EvalReport]) -> EvalReport:
    """Average metrics over seeds; counts are summed."""
    first = reports[0]
    return EvalReport(
        precision=float(np.mean([r.precision for r in reports])),
        recall=float(np.mean([r.recall for r in reports])),
        f1=float(np.mean([r.f1 for r in reports])),
        tp=sum(r.tp for r in reports),
        fp=sum(r.fp for r in reports),
        fn=sum(r.fn for r in reports),
        tn=sum(r.tn for r in reports),
        network_id=first.network_id,
        variant=first.variant,
        seed=None,
        stride=first.stride,
        split_sizes=first.split_sizes if len(reports) == 1 else {},
        seeds=[r.seed for r in reports],
        flags=sorted({f for r in reports for f in r.flags}),
    )


# -- experiment ----------------------------------------------------------------


@dataclass
class PreparedData:
    """Normalized windows for one split seed, plus the bookkeeping behind them."""

    panel: LogPanel
    train: list[GraphSequenceSample]
    val: list[GraphSequenceSample]
    test: list[GraphSequenceSample]
    train_x: np.ndarray
    val_x: np.ndarray
    test_x: np.ndarray
    norm: object
    skipped_events: int

    @property
    def split_sizes(self) -> dict:
        def counts(group):
            y = labels_of(group)
            return {"0": int((y == 0).sum()), "1": int((y == 1).sum()), "unknown": int((y == -1).sum())}

        return {"train": counts(self.train), "val": counts(self.val), "test": counts(self.test)}


def load_data(config: Config, seed: int):
    """Panel and events: synthesized per seed, or read from the configured files."""
    exp = config.experiment
    if exp.synthetic:
        return synthesize(replace(config.synth, seed=seed))
    if exp.panel_dir is not None:
        if exp.events_csv is None:
            raise DataError("experiment.panel_dir requires experiment.events_csv")
        panel = load_panel(exp.panel_dir)
    else:
        panel = ingest_logs(read_log_csv(exp.logs_csv), exp.tick_interval_s)
    return fill_missing(panel), read_events_csv(exp.events_csv)


def prepare(panel: LogPanel, events, config: Config, seed: int) -> PreparedData:
    sc = config.samples
    samples, meta = build_samples(panel, events, T=sc.T, stride=sc.stride)
    train_s, val_s, test_s = split_samples(samples, SplitSpec(sc.train, sc.val, sc.test, seed=seed))
    if sc.relabel_unknown_fraction > 0:
        train_s = relabel_as_unknown(train_s, sc.relabel_unknown_fraction, seed)
    assert_not_test(train_s, val_s)
    train_x, val_x, test_x, stats = normalize(
        stack_windows(panel.values, train_s, sc.T),
        stack_windows(panel.values, val_s, sc.T),
        stack_windows(panel.values, test_s, sc.T),
    )
    return PreparedData(panel, train_s, val_s, test_s, train_x, val_x, test_x, stats, meta.skipped_events)


def assert_not_test(*groups: Sequence[GraphSequenceSample]) -> None:
    for group in groups:
        if any(s.split == "test" for s in group):
            raise DataError("test-split sample routed into a training stage")


def encoder_config_for(config: Config, panel: LogPanel) -> EncoderConfig:
    e = config.encoder
    return EncoderConfig(n=panel.n, F=panel.F, T=config.samples.T, K=e.K, C=e.C, D=e.D)


def run_single(data: PreparedData, config: Config, variant: str, seed: int, network_id: str,
               checkpoint_dir: Path | None = None) -> tuple[EvalReport, object]:
    """Train one variant on prepared splits and score it on the test split."""
    tcfg = replace(config.train, variant=variant, seed=seed)
    adj = None
    if variant == "corr_graph":
        # Correlation over the ticks the train windows cover; no val/test data.
        T = config.samples.T
        ticks = np.unique(np.concatenate([np.arange(s.end_tick - T + 1, s.end_tick + 1) for s in data.train]))
        adj = correlation_adjacency(data.norm.apply(data.panel.values[ticks]))
    result = train(
        data.train_x, labels_of(data.train), data.val_x, labels_of(data.val),
        encoder_config_for(config, data.panel), tcfg, config.loss, adj,
    )
    if checkpoint_dir is not None:
        save_checkpoint(result, data.norm, checkpoint_dir, tcfg, config.loss,
                        extra={"network_id": network_id, "variant": variant, "seed": seed,
                               "stride": config.samples.stride})
    checkpoint = Checkpoint(result.encoder, result.centers, result.head, data.norm, result.adjacency, {})
    report = score(checkpoint.head.predict(checkpoint.embed_normalized(data.test_x)), labels_of(data.test))
    report.network_id, report.variant, report.seed = network_id, variant, seed
    report.split_sizes, report.stride, report.seeds = data.split_sizes, config.samples.stride, [seed]
    report.best_epoch = result.best_epoch
    return report, result


def grid_search_lambda(data: PreparedData, config: Config, grid: Sequence[float], seed: int) -> float:
    """Lambda with the best validation F1 for the full variant; ties keep the earlier value."""
    best_lam, best_f1 = grid[0], -1.0
    for lam in grid:
        tcfg = replace(config.train, variant="full", seed=seed, lam=lam)
        result = train(data.train_x, labels_of(data.train), data.val_x, labels_of(data.val),
                       encoder_config_for(config, data.panel), tcfg, replace(config.loss, lam=lam))
        f1 = max(h["val_f1"] for h in result.history)
        log.info("lambda %g: best val F1 %.4f", lam, f1)
        if f1 > best_f1:
            best_lam, best_f1 = lam, f1
    return best_lam


def write_table(per_seed: dict, means: dict, variants: Sequence[str], path: Path) -> None:
    """Rows per seed plus a mean row; columns grouped precision | recall | F1 by variant."""
    metrics = ("precision", "recall", "f1")
    header = ["network_id", "seed"] + [f"{m}_{v}" for m in metrics for v in variants]
    rows = []
    seeds = sorted({seed for (_, seed) in per_seed})
    network = next(iter(means.values())).network_id if means else ""
    for seed in seeds:
        row = [network, str(seed)]
        for m in metrics:
            row += [f"{getattr(per_seed[(v, seed)], m):.6f}" if (v, seed) in per_seed else "" for v in variants]
        rows.append(row)
    if means:
        row = [network, "mean"]
        for m in metrics:
            row += [f"{getattr(means[v], m):.6f}" if v in means else "" for v in variants]
        rows.append(row)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def run_experiment(config: Config, out_dir: str | Path, save_checkpoints: bool = True) -> dict[str, EvalReport]:
    """Repeat split/train/score for every seed and variant; return mean reports by variant.

    Artifacts under ``out_dir``: ``config.json``, ``reports.json`` (rewritten
    after every run so partial results survive failures), ``table.csv`` and
    per-run checkpoints.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    exp = config.experiment
    (out_dir / "config.json").write_text(json.dumps(config.to_json(), indent=2, sort_keys=True) + "\n")

    per_seed: dict[tuple[str, int], EvalReport] = {}
    means: dict[str, EvalReport] = {}

    def flush():
        payload = {
            "runs": [r.to_json() for r in per_seed.values()],
            "mean": {v: r.to_json() for v, r in means.items()},
        }
        (out_dir / "reports.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        write_table(per_seed, means, exp.variants, out_dir / "table.csv")

    shared = None if exp.synthetic else load_data(config, exp.seed)
    for seed in exp.seed_list():
        panel, events = shared if shared is not None else load_data(config, seed)
        network_id = exp.network_id or (config.synth.network_id if exp.synthetic else (events.entries[0][1] if len(events) else "network"))
        data = prepare(panel, events, config, seed)
        run_config = config
        if exp.lambda_grid:
            lam = grid_search_lambda(data, config, exp.lambda_grid, seed)
            run_config = replace(config, train=replace(config.train, lam=lam), loss=replace(config.loss, lam=lam))
        seed_dir = out_dir / f"seed{seed}"
        seed_dir.mkdir(exist_ok=True)
        write_sample_index(data.train + data.val + data.test, seed_dir / "samples.csv")
        for variant in exp.variants:
            ckpt = seed_dir / variant if save_checkpoints else None
            report, _ = run_single(data, run_config, variant, seed, network_id, ckpt)
            per_seed[(variant, seed)] = report
            log.info("seed %d variant %s: P %.3f R %.3f F1 %.3f", seed, variant, report.precision, report.recall, report.f1)
            flush()
    for variant in exp.variants:
        means[variant] = mean_report([per_seed[(variant, s)] for s in exp.seed_list()])
    flush()
    return means


# -- embedding export ----------------------------------------------------------


def export_embeddings(checkpoint: Checkpoint, panel: LogPanel, samples: Sequence[GraphSequenceSample], path: str | Path) -> int:
    """Write ``sample_id,label,e_0..e_{D-1}`` rows; returns the row count."""
    T = checkpoint.config.T
    windows = stack_windows(panel.values, samples, T)
    emb = checkpoint.embed(windows) if len(samples) else np.zeros((0, checkpoint.config.D))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "label"] + [f"e_{j}" for j in range(checkpoint.config.D)])
        for s, row in zip(samples, emb):
            writer.writerow([s.sample_id, LABEL_NAMES[s.label]] + [f"{float(v):.9g}" for v in row])
    return len(samples)
