"""Latent feature fusion across a single-domain batch."""

from __future__ import annotations

from fractions import Fraction

from . import numerics as nx
from .numerics import Tensor


def fusion_coefficients(batch_size: int) -> tuple[Fraction, Fraction]:
    """(self weight, weight of each other sample) as exact rationals; self + (B-1)*other == 1."""
    return Fraction(2, batch_size + 1), Fraction(1, batch_size + 1)


def fuse(batch: Tensor, enabled: bool = True) -> Tensor:
    """Replace each embedding by 2/(B+1) of itself plus 1/(B+1) of every other
    same-position embedding. Axis 0 is the batch; call once per domain."""
    if not enabled:
        return batch
    b = batch.shape[0]
    if b < 1:
        raise ValueError("fuse: empty batch")
    own, other = map(float, fusion_coefficients(b))
    others = nx.tsum(batch, axis=0, keepdims=True) - batch
    return batch * own + others * other
