"""Command-line entry point.

Exit codes: 0 success, 2 config error, 3 data error, 4 training divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import Config, load_config
from .errors import ConfigError, DataError, TrainingDivergence
from .evaluation import assert_not_test, encoder_config_for, export_embeddings, run_experiment, score
from .ingest import (
    fill_missing,
    ingest_logs,
    load_panel,
    panel_to_records,
    read_events_csv,
    read_log_csv,
    save_panel,
    synthesize,
    write_events_csv,
    write_log_csv,
)
from .samples import (
    GraphSequenceSample,
    SplitSpec,
    build_samples,
    labels_of,
    normalize,
    read_sample_index,
    relabel_as_unknown,
    split_samples,
    stack_windows,
    write_sample_index,
)
from .trainer import load_checkpoint, save_checkpoint, train

EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGENCE = 2, 3, 4


def _effective_config(args) -> Config:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(
            cfg,
            synth=replace(cfg.synth, seed=args.seed),
            train=replace(cfg.train, seed=args.seed),
            experiment=replace(cfg.experiment, seed=args.seed),
        )
    if args.variant is not None:
        cfg = replace(
            cfg,
            train=replace(cfg.train, variant=args.variant),
            experiment=replace(cfg.experiment, variants=(args.variant,)),
        )
    return cfg


def _out(args) -> Path:
    path = Path(args.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _split(samples: list[GraphSequenceSample], name: str) -> list[GraphSequenceSample]:
    return [s for s in samples if s.split == name]


def cmd_synth(args, cfg: Config) -> None:
    out = _out(args)
    panel, events = synthesize(cfg.synth)
    save_panel(panel, out / "panel")
    write_events_csv(events, out / "events.csv")
    if args.logs_csv:
        write_log_csv(panel_to_records(panel), out / "logs.csv")
    print(f"panel: {panel.num_ticks} ticks x {panel.n} interfaces x {panel.F} attributes; {len(events)} events")


def cmd_ingest(args, cfg: Config) -> None:
    out = _out(args)
    panel = ingest_logs(read_log_csv(args.logs), args.tick_interval)
    missing = int(panel.missing_mask.sum())
    if not args.no_fill:
        panel = fill_missing(panel)
    save_panel(panel, out / "panel")
    print(f"panel: {panel.num_ticks} ticks x {panel.n} interfaces x {panel.F} attributes; {missing} missing cells")


def cmd_build_samples(args, cfg: Config) -> None:
    out = _out(args)
    panel = load_panel(args.panel)
    sc = cfg.samples
    samples, meta = build_samples(panel, read_events_csv(args.events), T=sc.T, stride=sc.stride)
    seed = cfg.train.seed
    train_s, val_s, test_s = split_samples(samples, SplitSpec(sc.train, sc.val, sc.test, seed=seed))
    if sc.relabel_unknown_fraction > 0:
        train_s = relabel_as_unknown(train_s, sc.relabel_unknown_fraction, seed)
    write_sample_index(train_s + val_s + test_s, out / "samples.csv")
    info = {"T": meta.T, "stride": meta.stride, "event_ticks": meta.event_ticks,
            "skipped_events": meta.skipped_events, "seed": seed}
    (out / "samples_meta.json").write_text(json.dumps(info, indent=2) + "\n")
    counts = {name: len(group) for name, group in (("train", train_s), ("val", val_s), ("test", test_s))}
    print(f"samples: {counts}; skipped events: {meta.skipped_events}")


def cmd_train(args, cfg: Config) -> None:
    out = _out(args)
    panel = load_panel(args.panel)
    samples = read_sample_index(args.samples)
    train_s, val_s = _split(samples, "train"), _split(samples, "val")
    assert_not_test(train_s, val_s)
    T = cfg.samples.T
    # Test windows never reach the normalizer.
    train_x, val_x, _, stats = normalize(
        stack_windows(panel.values, train_s, T), stack_windows(panel.values, val_s, T), np.zeros((0, T, panel.n, panel.F))
    )
    result = train(train_x, labels_of(train_s), val_x, labels_of(val_s), encoder_config_for(cfg, panel),
                   cfg.train, cfg.loss)
    save_checkpoint(result, stats, out / "checkpoint", cfg.train, cfg.loss,
                    extra={"variant": cfg.train.variant, "seed": cfg.train.seed, "stride": cfg.samples.stride})
    print(f"best epoch {result.best_epoch}, val F1 {result.history[result.best_epoch]['val_f1']:.4f}")


def cmd_eval(args, cfg: Config) -> None:
    out = _out(args)
    ckpt = load_checkpoint(args.checkpoint)
    panel = load_panel(args.panel)
    group = _split(read_sample_index(args.samples), args.split)
    if not group:
        raise DataError(f"no samples tagged {args.split!r} in {args.samples}")
    report = score(ckpt.predict(stack_windows(panel.values, group, ckpt.config.T)), labels_of(group))
    report.variant = ckpt.manifest.get("variant", "")
    report.seed = ckpt.manifest.get("seed")
    report.stride = ckpt.manifest.get("stride")
    (out / "report.json").write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
    print(f"precision {report.precision:.3f} recall {report.recall:.3f} F1 {report.f1:.3f}")


def cmd_predict(args, cfg: Config) -> None:
    ckpt = load_checkpoint(args.checkpoint)
    panel = load_panel(args.panel)
    if args.end_tick:
        group = [GraphSequenceSample(t, -1) for t in args.end_tick]
    elif args.samples:
        group = read_sample_index(args.samples)
    else:
        group = [GraphSequenceSample(panel.num_ticks - 1, -1)]
    preds = ckpt.predict(stack_windows(panel.values, group, ckpt.config.T))
    print("end_tick,timestamp,prediction")
    for s, p in zip(group, preds):
        print(f"{s.end_tick},{int(panel.ticks[s.end_tick])},{int(p)}")


def cmd_export(args, cfg: Config) -> None:
    out = _out(args)
    ckpt = load_checkpoint(args.checkpoint)
    panel = load_panel(args.panel)
    rows = export_embeddings(ckpt, panel, read_sample_index(args.samples), out / "embeddings.csv")
    print(f"wrote {rows} embeddings to {out / 'embeddings.csv'}")


def cmd_experiment(args, cfg: Config) -> None:
    means = run_experiment(cfg, _out(args))
    for variant, rep in means.items():
        print(f"{variant}: precision {rep.precision:.3f} recall {rep.recall:.3f} F1 {rep.f1:.3f}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config with sections synth/samples/encoder/loss/train/experiment")
    common.add_argument("--seed", type=int, help="override every seed in the config")
    common.add_argument("--out-dir", default=".", help="directory for outputs (default: .)")
    common.add_argument("--variant", choices=["full", "only_cc", "only_kl", "corr_graph"])
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="netgraph-event", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic panel and event log")
    p.add_argument("--logs-csv", action="store_true", help="also write raw records as logs.csv")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[common], help="bucket a log CSV into a panel")
    p.add_argument("--logs", required=True)
    p.add_argument("--tick-interval", type=int, default=300)
    p.add_argument("--no-fill", action="store_true", help="keep gaps instead of forward-filling")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build-samples", parents=[common], help="label windows and split them")
    p.add_argument("--panel", required=True)
    p.add_argument("--events", required=True)
    p.set_defaults(func=cmd_build_samples)

    p = sub.add_parser("train", parents=[common], help="train encoder, centers and head")
    p.add_argument("--panel", required=True)
    p.add_argument("--samples", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="score a checkpoint on one split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--panel", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", parents=[common], help="predict whether windows precede an event")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--panel", required=True)
    p.add_argument("--end-tick", type=int, action="append", help="window end tick (repeatable)")
    p.add_argument("--samples", help="sample index CSV to predict instead")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("export-embeddings", parents=[common], help="write embeddings with labels as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--panel", required=True)
    p.add_argument("--samples", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("experiment", parents=[common], help="repeated splits over variants and seeds")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args, _effective_config(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDivergence as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    return 0


if __name__ == "__main__":
    sys.exit(main())
