"""Joint encoder/center optimization, the SVC head, and checkpoint bundles."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
from sklearn.preprocessing import StandardScaler
from sklearn.svm import SVC

from .encoder import (
    EncoderConfig,
    GatedConvNGAT,
    as_adjacency,
    embed,
    load_encoder,
    read_tensor_file,
    save_encoder,
    write_tensor_file,
)
from .errors import CheckpointError, ConfigError, SplitError, TrainingDivergence
from .objective import LossConfig, total_loss
from .samples import ABNORMAL, NORMAL, NormStats, correlation_adjacency, full_adjacency

log = logging.getLogger(__name__)

VARIANTS = ("full", "only_cc", "only_kl", "corr_graph")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 0.001
    lam: float = 0.1
    max_epochs: int = 30
    patience: int = 5
    seed: int = 0
    variant: str = "full"
    labeled_fraction: float = 0.75
    warmup_epochs: int = 1
    svc_C: float = 1.0
    svc_gamma: str | float = "scale"

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not 0 < self.labeled_fraction <= 1:
            raise ConfigError("labeled_fraction must lie in (0, 1]")
        if self.warmup_epochs < 0:
            raise ConfigError("warmup_epochs must be >= 0")


# -- classifier head -----------------------------------------------------------


@dataclass
class ClassifierHead:
    """Standardization plus a fitted RBF support-vector classifier, as plain arrays.

    ``decision_function`` reproduces the libsvm decision value so the head can
    be serialized without pickling an estimator.
    """

    offset: np.ndarray
    scale: np.ndarray
    support_vectors: np.ndarray
    dual_coef: np.ndarray
    intercept: float
    gamma: float
    kernel: str = "rbf"

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = (np.asarray(X, dtype=np.float64) - self.offset) / self.scale
        sq = ((X[:, None, :] - self.support_vectors[None, :, :]) ** 2).sum(axis=-1)
        return np.exp(-self.gamma * sq) @ self.dual_coef + self.intercept

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.decision_function(X) > 0).astype(np.int64)

    def to_json(self) -> dict:
        return {
            "kernel": self.kernel,
            "offset": [float(v) for v in self.offset],
            "scale": [float(v) for v in self.scale],
            "gamma": float(self.gamma),
            "intercept": float(self.intercept),
            "dual_coef": [float(v) for v in self.dual_coef],
            "support_vectors": [[float(v) for v in row] for row in self.support_vectors],
        }

    @classmethod
    def from_json(cls, state: dict) -> "ClassifierHead":
        return cls(
            offset=np.asarray(state["offset"], dtype=np.float64),
            scale=np.asarray(state["scale"], dtype=np.float64),
            support_vectors=np.asarray(state["support_vectors"], dtype=np.float64),
            dual_coef=np.asarray(state["dual_coef"], dtype=np.float64),
            intercept=float(state["intercept"]),
            gamma=float(state["gamma"]),
            kernel=state.get("kernel", "rbf"),
        )


def fit_head(embeddings: np.ndarray, labels: np.ndarray, C: float = 1.0, gamma="scale") -> ClassifierHead:
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    present = set(np.unique(labels).tolist())
    if present != {NORMAL, ABNORMAL}:
        raise SplitError(f"classifier head needs both labels 0 and 1, got {sorted(present)}; check the splits")
    # Embeddings carry a large shared offset; per-dimension scaling keeps the RBF width meaningful.
    scaler = StandardScaler().fit(embeddings)
    svc = SVC(C=C, kernel="rbf", gamma=gamma).fit(scaler.transform(embeddings), labels)
    # libsvm orders the binary decision so that positive means classes_[1].
    return ClassifierHead(
        offset=scaler.mean_.copy(),
        scale=scaler.scale_.copy(),
        support_vectors=svc.support_vectors_.copy(),
        dual_coef=svc.dual_coef_[0].copy(),
        intercept=float(svc.intercept_[0]),
        gamma=float(svc._gamma),
    )


def predict(head: ClassifierHead, model: GatedConvNGAT, windows: np.ndarray, adj) -> np.ndarray:
    """Encode normalized windows and classify them; a single window yields one label."""
    single = windows.ndim == 3
    batch = windows[None] if single else windows
    out = head.predict(embed(model, batch, adj))
    return out[0] if single else out


def f1_score(pred: np.ndarray, truth: np.ndarray) -> float:
    tp = int(((pred == 1) & (truth == 1)).sum())
    fp = int(((pred == 1) & (truth == 0)).sum())
    fn = int(((pred == 0) & (truth == 1)).sum())
    return 2 * tp / (2 * tp + fp + fn) if tp else 0.0


# -- training ------------------------------------------------------------------


@dataclass
class TrainResult:
    encoder: GatedConvNGAT
    centers: np.ndarray
    head: ClassifierHead
    adjacency: np.ndarray
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1


def class_means(E: np.ndarray, y: np.ndarray) -> np.ndarray:
    centers = np.stack([E[y == NORMAL].mean(axis=0), E[y == ABNORMAL].mean(axis=0)])
    if np.allclose(centers[0], centers[1]):
        centers[1] = centers[1] + 1e-3
    return centers


def _batches(labeled: np.ndarray, unknown: np.ndarray, cfg: TrainConfig, rng: np.random.Generator):
    """Index batches mixing labeled and unknown samples at ``labeled_fraction``."""
    labeled = labeled[rng.permutation(len(labeled))]
    if len(unknown) == 0:
        n_lab, n_unk = cfg.batch_size, 0
    else:
        n_lab = max(1, min(cfg.batch_size - 1, int(round(cfg.batch_size * cfg.labeled_fraction))))
        n_unk = cfg.batch_size - n_lab
    num = math.ceil(len(labeled) / n_lab)
    if n_unk:
        reps = math.ceil(num * n_unk / len(unknown))
        pool = np.concatenate([unknown[rng.permutation(len(unknown))] for _ in range(reps)])
    for b in range(num):
        chunk = labeled[b * n_lab : (b + 1) * n_lab]
        if n_unk:
            chunk = np.concatenate([chunk, pool[b * n_unk : (b + 1) * n_unk]])
        yield chunk


def train(
    train_x: np.ndarray,
    train_y: np.ndarray,
    val_x: np.ndarray,
    val_y: np.ndarray,
    encoder_config: EncoderConfig,
    cfg: TrainConfig = TrainConfig(),
    loss_config: LossConfig = LossConfig(),
    adj: np.ndarray | None = None,
) -> TrainResult:
    """Fit encoder and centers, refitting the head each epoch for early stopping.

    ``train_y`` uses -1 for unknown samples. The returned state is the epoch
    with the best validation F1 (label 1); ties keep the earlier epoch.
    """
    train_y = np.asarray(train_y, dtype=np.int64)
    val_y = np.asarray(val_y, dtype=np.int64)
    labeled = np.flatnonzero(train_y >= 0)
    unknown = np.flatnonzero(train_y < 0)
    if not {NORMAL, ABNORMAL} <= set(train_y[labeled].tolist()):
        raise SplitError("train split needs labeled samples of both classes")

    if adj is None:
        if cfg.variant == "corr_graph":
            adj = correlation_adjacency(train_x.reshape(-1, *train_x.shape[-2:]))
        else:
            adj = full_adjacency(encoder_config.n)
    adj = np.asarray(adj, dtype=np.int64)
    adj_t = as_adjacency(adj)

    lam = 0.0 if cfg.variant == "only_cc" else cfg.lam
    if cfg.variant == "only_cc":
        unknown = unknown[:0]
    loss_cfg = replace(loss_config, lam=lam)
    warmup_cfg = replace(loss_config, lam=0.0)

    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    model = GatedConvNGAT(encoder_config, seed=cfg.seed)
    x_all = torch.as_tensor(train_x, dtype=torch.float32)
    y_all = torch.as_tensor(train_y)

    lab_x, lab_y = train_x[labeled], train_y[labeled]
    centers = torch.nn.Parameter(torch.as_tensor(class_means(embed(model, lab_x, adj), lab_y), dtype=torch.float32))

    def make_optimizer():
        return torch.optim.Adam(list(model.parameters()) + [centers], lr=cfg.learning_rate)

    optimizer = make_optimizer()
    history: list[dict] = []
    best = None
    best_f1, wait = -1.0, 0

    for epoch in range(cfg.max_epochs):
        warm = epoch < cfg.warmup_epochs
        step_cfg = warmup_cfg if warm else loss_cfg
        use_cc = warm or cfg.variant != "only_kl"
        batch_unknown = unknown[:0] if warm else unknown

        model.train()
        total, count = 0.0, 0
        for b, idx in enumerate(_batches(labeled, batch_unknown, cfg, rng)):
            idx_t = torch.as_tensor(idx)
            E = model(x_all[idx_t], adj_t)
            loss = total_loss(E, y_all[idx_t], centers, step_cfg, use_cc=use_cc)
            if not torch.isfinite(loss):
                raise TrainingDivergence(
                    f"non-finite loss {loss.item()} at epoch {epoch}, batch {b} (train rows {idx.tolist()})"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += loss.item()
            count += 1

        model.eval()
        lab_emb = embed(model, lab_x, adj)
        if warm and epoch == cfg.warmup_epochs - 1:
            with torch.no_grad():
                centers.copy_(torch.as_tensor(class_means(lab_emb, lab_y)))
            optimizer = make_optimizer()
        head = fit_head(lab_emb, lab_y, cfg.svc_C, cfg.svc_gamma)
        val_f1 = f1_score(head.predict(embed(model, val_x, adj)), val_y)

        improved = val_f1 > best_f1
        if improved:
            best_f1, wait = val_f1, 0
            best = (
                {k: v.detach().clone() for k, v in model.state_dict().items()},
                centers.detach().clone().numpy(),
                head,
                epoch,
            )
        else:
            wait += 1
        history.append({
            "epoch": epoch,
            "phase": "warmup" if warm else "joint",
            "loss": total / max(count, 1),
            "val_f1": val_f1,
            "best_f1": best_f1,
        })
        log.info("epoch %d loss %.6f val_f1 %.4f", epoch, history[-1]["loss"], val_f1)
        if wait >= cfg.patience:
            break

    state, best_centers, best_head, best_epoch = best
    model.load_state_dict(state)
    model.eval()
    return TrainResult(model, best_centers, best_head, adj, history, best_epoch)


# -- checkpoint bundles --------------------------------------------------------


@dataclass
class Checkpoint:
    encoder: GatedConvNGAT
    centers: np.ndarray
    head: ClassifierHead
    norm: NormStats
    adjacency: np.ndarray
    manifest: dict

    @property
    def config(self) -> EncoderConfig:
        return self.encoder.config

    def check_windows(self, windows: np.ndarray) -> None:
        cfg = self.config
        if windows.shape[-3:] != (cfg.T, cfg.n, cfg.F):
            raise CheckpointError(
                f"checkpoint expects windows [{cfg.T}, {cfg.n}, {cfg.F}], data gives {list(windows.shape[-3:])}"
            )

    def embed(self, raw_windows: np.ndarray) -> np.ndarray:
        """Normalize raw panel windows with stored stats and encode them."""
        self.check_windows(raw_windows)
        return embed(self.encoder, self.norm.apply(raw_windows), self.adjacency)

    def embed_normalized(self, windows: np.ndarray) -> np.ndarray:
        self.check_windows(windows)
        return embed(self.encoder, windows, self.adjacency)

    def predict(self, raw_windows: np.ndarray) -> np.ndarray:
        return self.head.predict(self.embed(raw_windows))


def save_checkpoint(
    result: TrainResult,
    norm: NormStats,
    directory: str | Path,
    train_config: TrainConfig,
    loss_config: LossConfig,
    extra: dict | None = None,
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_encoder(result.encoder, directory / "encoder.bin")
    write_tensor_file(
        directory / "state.bin",
        {"kind": "state"},
        {"centers": result.centers},
    )
    (directory / "head.json").write_text(json.dumps(result.head.to_json(), sort_keys=True) + "\n")
    manifest = {
        "files": {"encoder": "encoder.bin", "state": "state.bin", "head": "head.json"},
        "encoder_config": asdict(result.encoder.config),
        "train_config": asdict(train_config),
        "loss_config": asdict(loss_config),
        "best_epoch": result.best_epoch,
        "adjacency": np.asarray(result.adjacency).tolist(),
        # float64 stats kept in JSON so reloaded checkpoints normalize identically
        "norm": {"mean": norm.mean.tolist(), "std": norm.std.tolist()},
        "history": result.history,
        **(extra or {}),
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return directory


def load_checkpoint(directory: str | Path) -> Checkpoint:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
        head = ClassifierHead.from_json(json.loads((directory / manifest["files"]["head"]).read_text()))
    except (OSError, KeyError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint at {directory}: {exc}") from exc
    encoder = load_encoder(directory / manifest["files"]["encoder"])
    encoder.eval()
    _, state = read_tensor_file(directory / manifest["files"]["state"])
    if asdict(encoder.config) != manifest["encoder_config"]:
        raise CheckpointError("encoder file and manifest disagree on the encoder config")
    if state["centers"].shape != (2, encoder.config.D):
        raise CheckpointError("centers do not match the embedding size")
    return Checkpoint(
        encoder=encoder,
        centers=state["centers"].astype(np.float64),
        head=head,
        norm=NormStats(np.asarray(manifest["norm"]["mean"]), np.asarray(manifest["norm"]["std"])),
        adjacency=np.asarray(manifest["adjacency"], dtype=np.int64),
        manifest=manifest,
    )
