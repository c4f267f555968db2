"""InfoNCE, self-similarity / hardest-negative loss and similarity regularization."""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .augment import BatchLabeling
from .errors import NoPositivesError, RowWithoutNegativesError


@dataclass
class LossConfig:
    tau: float = 0.03
    lam: float = 3.0
    r: float = 1.0
    eps_log: float = 1e-8
    # toggles for the two SSHN terms (ablation axes)
    use_ss: bool = True
    use_hn: bool = True

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.lam < 0 or self.r < 0:
            raise ValueError("lambda and r must be >= 0")


@dataclass
class LossReport:
    nce: torch.Tensor
    sshn: torch.Tensor
    reg: torch.Tensor
    total: torch.Tensor
    P: int

    def as_dict(self) -> dict:
        return {"nce": self.nce.item(), "sshn": self.sshn.item(), "reg": self.reg.item(),
                "total": self.total.item(), "P": self.P}


def _masks(labeling: BatchLabeling, S: torch.Tensor):
    if labeling.B != S.shape[0] or S.shape[0] != S.shape[1]:
        raise ValueError(f"labeling for B={labeling.B} does not match S of shape {tuple(S.shape)}")
    pos = torch.as_tensor(labeling.positive_mask())
    neg = torch.as_tensor(labeling.negative_mask())
    return pos, neg


def infonce_loss(S, labeling: BatchLabeling, tau: float = 0.03) -> torch.Tensor:
    """Mean over positive pairs (i, j) of -log softmax of S_ij against row i's negatives.

    The denominator holds the positive itself plus every column outside
    p(i) and i, so other positives and the diagonal never compete.
    """
    S = torch.as_tensor(S)
    pos, neg = _masks(labeling, S)
    P = int(pos.sum())
    if P == 0:
        raise NoPositivesError("batch has no positive pairs")
    logits = S / tau
    neg_lse = torch.logsumexp(logits.masked_fill(~neg, float("-inf")), dim=1, keepdim=True)
    has_neg = neg.any(dim=1, keepdim=True)
    neg_lse = torch.where(has_neg, neg_lse, torch.full_like(neg_lse, float("-inf")))
    per_pair = torch.logaddexp(logits, neg_lse) - logits
    return per_pair[pos].sum() / P


def hardest_negatives(S, labeling: BatchLabeling) -> torch.Tensor:
    """Column index of the most similar negative per row (first index on ties)."""
    S = torch.as_tensor(S)
    _, neg = _masks(labeling, S)
    if not bool(neg.any(dim=1).all()):
        row = int((~neg.any(dim=1)).nonzero()[0])
        raise RowWithoutNegativesError(f"row {row} has no negative columns")
    return S.detach().masked_fill(~neg, float("-inf")).argmax(dim=1)


def sshn_loss(S, labeling: BatchLabeling, eps: float = 1e-8, use_ss: bool = True, use_hn: bool = True) -> torch.Tensor:
    """Row mean of -log S_ii - log(1 - max_{j in n(i)} S_ij); log arguments floored at ``eps``."""
    S = torch.as_tensor(S)
    hn = hardest_negatives(S, labeling)
    rows = torch.arange(S.shape[0])
    loss = torch.zeros((), dtype=S.dtype)
    if use_ss:
        loss = loss - torch.log(torch.clamp(S[rows, rows], min=eps)).mean()
    if use_hn:
        loss = loss - torch.log(torch.clamp(1.0 - S[rows, hn], min=eps)).mean()
    return loss


def similarity_regularization(filtered, r: float = 1.0) -> torch.Tensor:
    """r * sum of hinge penalties on filtered-similarity entries outside [-1, 1]."""
    if isinstance(filtered, (list, tuple)):
        filtered = torch.cat([torch.as_tensor(f).reshape(-1) for f in filtered])
    x = torch.as_tensor(filtered)
    return r * (torch.relu(x - 1.0).sum() + torch.relu(-1.0 - x).sum())


def total_loss(S, labeling: BatchLabeling, filtered, cfg: LossConfig) -> LossReport:
    """nce + lambda * sshn + r * reg, with every component reported separately."""
    S = torch.as_tensor(S)
    nce = infonce_loss(S, labeling, cfg.tau)
    if cfg.use_ss or cfg.use_hn:
        sshn = sshn_loss(S, labeling, cfg.eps_log, cfg.use_ss, cfg.use_hn)
    else:
        sshn = torch.zeros((), dtype=S.dtype)
    reg = similarity_regularization(filtered, 1.0) if filtered is not None else torch.zeros((), dtype=S.dtype)
    total = nce + cfg.lam * sshn + cfg.r * reg
    return LossReport(nce, sshn, reg, total, labeling.num_positive_pairs)
