"""TransE-style L1 score, hinge loss, and the combined objective."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import Tensor, as_tensor


@dataclass(frozen=True)
class LossWeights:
    margin: float = 1.0
    lambda_kld: float = 1.0
    lambda_reg: float = 1.0
    kld_sign: str = "paper"

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be > 0")
        if self.lambda_kld < 0 or self.lambda_reg < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.kld_sign not in ("paper", "elbo"):
            raise ValueError(f"unknown kld_sign {self.kld_sign!r}")

    @classmethod
    def from_model(cls, cfg) -> "LossWeights":
        return cls(cfg.margin, cfg.lambda_kld, cfg.lambda_reg, cfg.kld_sign)


def score_triplet(e_h, e_r, e_t) -> Tensor:
    """C = sum_j |e_h + e_r - e_t|; works row-wise on stacked inputs."""
    return (as_tensor(e_h) + e_r - e_t).abs().sum(axis=-1)


def score_rows(g: Tensor) -> Tensor:
    """Score a (3, u) generated triplet."""
    return score_triplet(g[0], g[1], g[2])


def kgc_loss(c_pos, c_neg, margin: float) -> Tensor:
    return (as_tensor(c_pos) - c_neg + margin).relu()


def total_loss(l_kgc, l_rec, l_kld, l_reg, w: LossWeights) -> Tensor:
    """L = L_KGC - L_rec -/+ lambda1 L_kld - lambda2 L_reg (sign of KL per ``w.kld_sign``)."""
    kld_coef = -w.lambda_kld if w.kld_sign == "paper" else w.lambda_kld
    return as_tensor(l_kgc) - l_rec + kld_coef * as_tensor(l_kld) - w.lambda_reg * as_tensor(l_reg)


def score_numpy(e_h: np.ndarray, e_r: np.ndarray, e_t: np.ndarray) -> np.ndarray:
    return np.abs(e_h + e_r - e_t).sum(axis=-1)
