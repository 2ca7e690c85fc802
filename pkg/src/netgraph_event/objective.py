"""Semi-supervised clustering losses over embeddings and two class centers.

Centers are stored as a ``[2, D]`` tensor: row 0 is the normal center,
row 1 the abnormal one. Labels use ``-1`` for unknown samples.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import ConfigError

LABELED_TARGETS = ("auxiliary", "one_hot")


@dataclass(frozen=True)
class LossConfig:
    lam: float = 0.1
    epsilon_cc: float = 1e-6
    labeled_target: str = "auxiliary"
    # Block center gradients coming through the KL term.
    freeze_centers_in_kl: bool = False

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.epsilon_cc <= 0:
            raise ConfigError("epsilon_cc must be positive")
        if self.labeled_target not in LABELED_TARGETS:
            raise ConfigError(f"labeled_target must be one of {LABELED_TARGETS}")


def squared_distances(E: torch.Tensor, centers: torch.Tensor) -> torch.Tensor:
    """``[B, 2]`` squared Euclidean distances to each center."""
    return ((E.unsqueeze(1) - centers.unsqueeze(0)) ** 2).sum(dim=-1)


def contrastive_center_loss(
    E: torch.Tensor, y: torch.Tensor, centers: torch.Tensor, eps: float = 1e-6
) -> torch.Tensor:
    """Half the summed ratio of own-center to other-center squared distance.

    An empty batch returns a zero that still participates in autograd.
    """
    if E.shape[0] == 0:
        return (E.sum() + centers.sum()) * 0.0
    d = squared_distances(E, centers)
    rows = torch.arange(E.shape[0])
    y = y.long()
    return 0.5 * (d[rows, y] / (d[rows, 1 - y] + eps)).sum()


def soft_assignment(E: torch.Tensor, centers: torch.Tensor) -> torch.Tensor:
    """Student-t (one degree of freedom) membership probabilities ``Q``."""
    kernel = 1.0 / (1.0 + squared_distances(E, centers))
    return kernel / kernel.sum(dim=1, keepdim=True)


@torch.no_grad()
def target_distribution(Q: torch.Tensor) -> torch.Tensor:
    """Sharpened, cluster-frequency-normalized targets ``P``; carries no gradient."""
    weight = Q**2 / Q.sum(dim=0)
    return weight / weight.sum(dim=1, keepdim=True)


def kl_loss(P: torch.Tensor, Q: torch.Tensor) -> torch.Tensor:
    """``sum_ij p_ij log(p_ij / q_ij)`` with ``0 log 0 = 0``."""
    safe_p = torch.where(P > 0, P, torch.ones_like(P))
    return torch.where(P > 0, P * (torch.log(safe_p) - torch.log(Q)), torch.zeros_like(P)).sum()


def total_loss(
    E: torch.Tensor,
    labels: torch.Tensor,
    centers: torch.Tensor,
    config: LossConfig = LossConfig(),
    use_cc: bool = True,
) -> torch.Tensor:
    """Contrastive-center loss on labeled rows plus ``lam`` times KL over all rows."""
    labels = torch.as_tensor(labels, dtype=torch.long)
    known = labels >= 0
    loss = (
        contrastive_center_loss(E[known], labels[known], centers, config.epsilon_cc)
        if use_cc
        else (E.sum() + centers.sum()) * 0.0
    )
    if config.lam == 0 or E.shape[0] == 0:
        return loss
    kl_centers = centers.detach() if config.freeze_centers_in_kl else centers
    Q = soft_assignment(E, kl_centers)
    P = target_distribution(Q)
    if config.labeled_target == "one_hot" and known.any():
        P = P.clone()
        P[known] = torch.nn.functional.one_hot(labels[known], 2).to(P.dtype)
    return loss + config.lam * kl_loss(P, Q)
