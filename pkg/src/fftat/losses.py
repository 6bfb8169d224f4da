"""Objective terms: source classification, domain and patch adversaries, self-clustering MI.

Discriminator losses are plain (positive) binary cross-entropies. The
adversarial sign lives in the gradient-reversal op the model inserts in
front of each discriminator.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import numerics as nx
from .numerics import NonFiniteError, Tensor

PROB_EPS = 1e-7
_LOG_FLOOR = 1e-30


@dataclass
class LossReport:
    l_clc: float
    l_dis: float
    l_pat: float
    mi: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def classification_loss(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy over the source batch."""
    labels = np.asarray(labels, dtype=np.int64)
    k = logits.shape[-1]
    if labels.size and (labels.max() >= k or labels.min() < 0):
        raise ValueError(f"classification_loss: labels must lie in [0, {k}), got {labels.tolist()}")
    logp = nx.log_softmax(logits)
    picked = logp[np.arange(labels.shape[0]), labels]
    return -picked.mean()


def binary_cross_entropy(probs: Tensor, targets) -> Tensor:
    """Mean BCE of probabilities (clamped to [eps, 1-eps]) against 0/1 targets."""
    t = np.broadcast_to(np.asarray(targets, dtype=nx.default_dtype()), probs.shape)
    p = nx.clip(probs, PROB_EPS, 1.0 - PROB_EPS)
    ll = nx.log(p) * t + nx.log(1.0 - p) * (1.0 - t)
    return -ll.mean()


def domain_loss(domain_probs: Tensor, domain_labels) -> Tensor:
    """BCE of the image-level discriminator over both domains (1 = source)."""
    return binary_cross_entropy(domain_probs, np.asarray(domain_labels))


def patch_loss(patch_probs: Tensor, domain_labels) -> Tensor:
    """BCE averaged over all n*P patches; each patch inherits its image's domain."""
    labels = np.asarray(domain_labels, dtype=nx.default_dtype())[:, None]
    return binary_cross_entropy(patch_probs, labels)


def entropy(probs: Tensor, axis: int = -1) -> Tensor:
    """Shannon entropy in nats; 0 log 0 treated as 0."""
    return -(probs * nx.log(nx.clip(probs, _LOG_FLOOR, 1.0))).sum(axis=axis)


def mutual_information(probs: Tensor) -> Tensor:
    """H(mean_i p_i) - mean_i H(p_i) for a (B, K) matrix of class distributions."""
    if probs.shape[0] == 0:
        raise ValueError("mutual_information: empty target batch")
    return entropy(probs.mean(axis=0)) - entropy(probs).mean()


def self_clustering_mi(target_logits: Tensor) -> Tensor:
    if target_logits.shape[0] == 0:
        raise ValueError("self_clustering_mi: empty target batch")
    return mutual_information(nx.softmax(target_logits))


def total_loss(parts: dict[str, Tensor], alpha: float, beta: float, gamma: float) -> Tensor:
    """l_clc + alpha*l_dis + beta*l_pat - gamma*mi."""
    for name in ("l_clc", "l_dis", "l_pat", "mi"):
        value = float(np.asarray(parts[name].data))
        if not math.isfinite(value):
            raise NonFiniteError(f"loss term {name} is non-finite ({value})")
    return parts["l_clc"] + parts["l_dis"] * alpha + parts["l_pat"] * beta - parts["mi"] * gamma


def report(parts: dict[str, Tensor], total: Tensor) -> LossReport:
    return LossReport(*(float(parts[k].data) for k in ("l_clc", "l_dis", "l_pat", "mi")),
                      total=float(total.data))
