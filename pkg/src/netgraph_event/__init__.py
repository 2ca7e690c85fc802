"""Predict network events from sequences of interface-telemetry graphs."""
from .config import Config, load_config
from .encoder import EncoderConfig, GatedConvNGAT, embed
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    EmptyInputError,
    SchemaError,
    SplitError,
    TrainingDivergence,
)
from .evaluation import EvalReport, export_embeddings, run_experiment, score
from .ingest import EventLog, LogPanel, LogRecord, SynthConfig, fill_missing, ingest_logs, synthesize
from .objective import LossConfig, total_loss
from .samples import GraphSequenceSample, SplitSpec, build_samples, normalize, split_samples
from .trainer import TrainConfig, fit_head, load_checkpoint, save_checkpoint, train

__all__ = [
    "CheckpointError", "Config", "ConfigError", "DataError", "EmptyInputError", "EncoderConfig",
    "EvalReport", "EventLog", "GatedConvNGAT", "GraphSequenceSample", "LogPanel", "LogRecord",
    "LossConfig", "SchemaError", "SplitError", "SplitSpec", "SynthConfig", "TrainConfig",
    "TrainingDivergence", "build_samples", "embed", "export_embeddings", "fill_missing", "fit_head",
    "ingest_logs", "load_checkpoint", "load_config", "normalize", "run_experiment", "save_checkpoint",
    "score", "split_samples", "synthesize", "total_loss", "train",
]
