"""GatedConv-NGAT encoder.

Pipeline per graph sequence ``[T, n, F]``::

    gated conv (time) -> graph attention + GraphNorm (per time step)
    -> gated conv (time) -> flatten time x channel -> sum over nodes -> linear

The building blocks are exposed as plain functions so they can be checked
against scalar references independently of :class:`GatedConvNGAT`.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import CheckpointError, ConfigError

GRAPHNORM_EPS = 1e-5
LEAKY_SLOPE = 0.2
CHECKPOINT_MAGIC = b"NGEC"


@dataclass(frozen=True)
class EncoderConfig:
    n: int
    F: int
    T: int = 72
    K: int = 12
    C: int = 32
    D: int = 256

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 1:
                raise ConfigError(f"encoder {name} must be positive, got {value}")
        if self.out_steps < 1:
            raise ConfigError(f"T - 2(K - 1) must be >= 1 (T={self.T}, K={self.K})")

    @property
    def out_steps(self) -> int:
        return self.T - 2 * (self.K - 1)

    @property
    def pre_projection(self) -> int:
        return self.out_steps * self.C


def gated_conv(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    """GLU over a valid 1-D convolution along time.

    Args:
        x: ``[..., L, F_in]``.
        weight: ``[2C, F_in, K]``; the first C output channels are the value
            half, the last C the gate half.
        bias: ``[2C]``.

    Returns:
        ``[..., L - K + 1, C]``.
    """
    L, f_in = x.shape[-2:]
    K = weight.shape[-1]
    if L < K:
        raise ValueError(f"sequence length {L} shorter than kernel {K}")
    lead = x.shape[:-2]
    out = F.conv1d(x.reshape(-1, L, f_in).transpose(1, 2), weight, bias)
    value, gate = out.chunk(2, dim=1)
    return (value * torch.sigmoid(gate)).transpose(1, 2).reshape(*lead, L - K + 1, -1)


def attention_scores(H: torch.Tensor, adj: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
    """Row-normalized attention ``alpha[..., i, k]``; exactly 0 off the neighbourhood."""
    C = H.shape[-1]
    src = H @ w[:C]  # contribution of the target node i
    dst = H @ w[C:]  # contribution of the neighbour k
    raw = F.leaky_relu(src.unsqueeze(-1) + dst.unsqueeze(-2), LEAKY_SLOPE)
    raw = raw.masked_fill(adj == 0, float("-inf"))
    return torch.softmax(raw, dim=-1)


def gat_layer(H: torch.Tensor, adj: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
    """``sigmoid(sum_k alpha_ik v_k)`` for every node; ``H`` is ``[..., n, C]``."""
    return torch.sigmoid(attention_scores(H, adj, w) @ H)


def graph_norm(
    H: torch.Tensor, alpha: torch.Tensor, gamma: torch.Tensor, beta: torch.Tensor, eps: float = GRAPHNORM_EPS
) -> torch.Tensor:
    """Per-graph, per-feature normalization over the node axis (second to last)."""
    centered = H - alpha * H.mean(dim=-2, keepdim=True)
    sigma = torch.sqrt((centered**2).mean(dim=-2, keepdim=True) + eps)
    return gamma * centered / sigma + beta


class GatedConvNGAT(nn.Module):
    """Maps ``[B, T, n, F]`` windows to ``[B, D]`` embeddings."""

    def __init__(self, config: EncoderConfig, seed: int = 0):
        super().__init__()
        self.config = config
        C, K, f_in = config.C, config.K, config.F
        self.conv1_weight = nn.Parameter(torch.empty(2 * C, f_in, K))
        self.conv1_bias = nn.Parameter(torch.empty(2 * C))
        self.attn_weight = nn.Parameter(torch.empty(2 * C))
        self.norm_alpha = nn.Parameter(torch.ones(C))
        self.norm_gamma = nn.Parameter(torch.ones(C))
        self.norm_beta = nn.Parameter(torch.zeros(C))
        self.conv2_weight = nn.Parameter(torch.empty(2 * C, C, K))
        self.conv2_bias = nn.Parameter(torch.empty(2 * C))
        self.proj_weight = nn.Parameter(torch.empty(config.D, config.pre_projection))
        self.proj_bias = nn.Parameter(torch.empty(config.D))
        self.reset_parameters(seed)

    def reset_parameters(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(seed)
        C, K = self.config.C, self.config.K
        fan_in = {
            "conv1_weight": self.config.F * K,
            "conv1_bias": self.config.F * K,
            "attn_weight": 2 * C,
            "conv2_weight": C * K,
            "conv2_bias": C * K,
            "proj_weight": self.config.pre_projection,
            "proj_bias": self.config.pre_projection,
        }
        with torch.no_grad():
            for name, fan in fan_in.items():
                bound = math.sqrt(1.0 / fan)
                p = getattr(self, name)
                p.copy_(torch.rand(p.shape, generator=gen, dtype=torch.float64).mul(2 * bound).sub(bound))
            self.norm_alpha.fill_(1.0)
            self.norm_gamma.fill_(1.0)
            self.norm_beta.fill_(0.0)

    def node_features(self, x: torch.Tensor, adj: torch.Tensor) -> torch.Tensor:
        """``[B, T, n, F]`` -> ``[B, n, T - 2(K - 1), C]`` before pooling."""
        cfg = self.config
        if x.shape[-3:] != (cfg.T, cfg.n, cfg.F):
            raise ValueError(f"expected windows of shape [*, {cfg.T}, {cfg.n}, {cfg.F}], got {tuple(x.shape)}")
        per_node = x.transpose(-3, -2)  # [B, n, T, F]
        h = gated_conv(per_node, self.conv1_weight, self.conv1_bias)  # [B, n, T-K+1, C]
        h = h.transpose(-3, -2)  # [B, T-K+1, n, C]
        h = gat_layer(h, adj, self.attn_weight)
        h = graph_norm(h, self.norm_alpha, self.norm_gamma, self.norm_beta)
        return gated_conv(h.transpose(-3, -2), self.conv2_weight, self.conv2_bias)

    def pooled(self, x: torch.Tensor, adj: torch.Tensor) -> torch.Tensor:
        """Graph embedding of length ``(T - 2(K - 1)) * C`` before projection."""
        h = self.node_features(x, adj)
        return h.flatten(-2).sum(dim=-2)

    def forward(self, x: torch.Tensor, adj: torch.Tensor) -> torch.Tensor:
        return F.linear(self.pooled(x, adj), self.proj_weight, self.proj_bias)


def as_adjacency(adj, device=None) -> torch.Tensor:
    return torch.as_tensor(np.asarray(adj), dtype=torch.int64, device=device)


@torch.no_grad()
def embed(model: GatedConvNGAT, windows: np.ndarray, adj, batch_size: int = 256) -> np.ndarray:
    """Embeddings for a stack of windows, in the model's dtype."""
    dtype = next(model.parameters()).dtype
    adj_t = as_adjacency(adj)
    out = [
        model(torch.as_tensor(windows[i : i + batch_size], dtype=dtype), adj_t)
        for i in range(0, len(windows), batch_size)
    ]
    if not out:
        return np.zeros((0, model.config.D))
    return torch.cat(out).numpy()


# -- checkpoint files ----------------------------------------------------------


def write_tensor_file(path: str | Path, header: dict, tensors: dict[str, np.ndarray]) -> None:
    """JSON header with a tensor manifest, then concatenated little-endian float32 payloads.

    Layout: 4-byte magic, 8-byte little-endian header length, header, payload.
    """
    manifest, blobs, offset = [], [], 0
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype="<f4")
        manifest.append({"name": name, "shape": list(data.shape), "offset": offset, "count": int(data.size)})
        blobs.append(data.tobytes())
        offset += data.nbytes
    head = json.dumps({**header, "tensors": manifest}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for blob in blobs:
            fh.write(blob)


def read_tensor_file(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from exc
    if raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    (size,) = struct.unpack("<Q", raw[4:12])
    header = json.loads(raw[12 : 12 + size])
    payload = raw[12 + size :]
    tensors = {}
    for entry in header.pop("tensors"):
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype="<f4", count=entry["count"], offset=start)
        tensors[entry["name"]] = arr.reshape(entry["shape"]).astype(np.float32)
    return header, tensors


def save_encoder(model: GatedConvNGAT, path: str | Path) -> None:
    tensors = {name: p.detach().cpu().numpy() for name, p in model.named_parameters()}
    write_tensor_file(path, {"kind": "encoder", "config": asdict(model.config)}, tensors)


def load_encoder(path: str | Path) -> GatedConvNGAT:
    header, tensors = read_tensor_file(path)
    if header.get("kind") != "encoder":
        raise CheckpointError(f"{path} does not hold encoder parameters")
    model = GatedConvNGAT(EncoderConfig(**header["config"]))
    state = model.state_dict()
    if set(tensors) != set(state):
        raise CheckpointError(f"{path}: parameter names {sorted(tensors)} do not match the encoder")
    for name, arr in tensors.items():
        if tuple(arr.shape) != tuple(state[name].shape):
            raise CheckpointError(f"{path}: {name} has shape {arr.shape}, expected {tuple(state[name].shape)}")
    model.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in tensors.items()})
    return model
