"""Patch discriminator, per-patch transferability scores and the transferability graph."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import numerics as nx
from .numerics import Tensor

PROB_EPS = 1e-7


@dataclass
class TransferabilityGraph:
    matrix: np.ndarray  # (P, P), entries in [0, 1]
    iteration_built: int = -1

    @classmethod
    def unweighted(cls, num_patches: int) -> "TransferabilityGraph":
        return cls(np.ones((num_patches, num_patches), dtype=nx.default_dtype()), -1)

    @property
    def num_patches(self) -> int:
        return self.matrix.shape[0]


def init_discriminator(rng, prefix: str, dim: int, init_weight) -> dict[str, Tensor]:
    hidden = max(1, dim // 2)
    return {
        f"{prefix}.w1": Tensor(init_weight(rng, (dim, hidden))),
        f"{prefix}.b1": Tensor(np.zeros(hidden)),
        f"{prefix}.w2": Tensor(init_weight(rng, (hidden, 1))),
        f"{prefix}.b2": Tensor(np.zeros(1)),
    }


def discriminate(features: Tensor, params: dict, prefix: str) -> Tensor:
    """Shared MLP d -> d/2 -> 1 with sigmoid; returns P(source) with the trailing axis dropped."""
    h = nx.gelu(features @ params[f"{prefix}.w1"] + params[f"{prefix}.b1"])
    logit = h @ params[f"{prefix}.w2"] + params[f"{prefix}.b2"]
    return nx.sigmoid(logit.reshape(logit.shape[:-1]))


def patch_discriminate(patch_tokens: Tensor, params: dict, prefix: str = "patch_disc") -> Tensor:
    """(B, P, d) patch features -> (B, P) source probabilities."""
    return discriminate(patch_tokens, params, prefix)


def transferability_score(p) -> np.ndarray:
    """Binary entropy in bits of the discriminator output; 1 at p = 0.5, 0 at saturation."""
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    h = -(p * np.log2(p) + (1.0 - p) * np.log2(1.0 - p))
    return np.clip(h, 0.0, 1.0)


def build_graph(scores: np.ndarray, heads: int, iteration: int = -1) -> TransferabilityGraph:
    """Batch-averaged outer product of per-image score vectors.

    Every head sees the same score vectors, so the per-head sum divides out.
    """
    scores = np.asarray(scores)
    if scores.ndim != 2 or scores.shape[0] == 0:
        raise ValueError(f"build_graph: need a non-empty (B, P) score matrix, got shape {scores.shape}")
    if heads < 1:
        raise ValueError(f"build_graph: heads must be >= 1, got {heads}")
    # elementwise products summed over the batch axis keep the result exactly symmetric
    m = (scores[:, :, None] * scores[:, None, :]).sum(axis=0) / scores.shape[0]
    return TransferabilityGraph(m.astype(nx.default_dtype()), iteration)


def blend_graph(old: TransferabilityGraph, fresh: TransferabilityGraph, ema: float) -> TransferabilityGraph:
    if ema <= 0.0:
        return fresh
    return TransferabilityGraph(ema * old.matrix + (1.0 - ema) * fresh.matrix, fresh.iteration_built)


def pad_graph(graph: TransferabilityGraph | np.ndarray) -> np.ndarray:
    """Prepend a row and column of ones for the class token."""
    m = graph.matrix if isinstance(graph, TransferabilityGraph) else np.asarray(graph)
    p = m.shape[0]
    out = np.ones((p + 1, p + 1), dtype=m.dtype)
    out[1:, 1:] = m
    return out


def write_graph_csv(graph: TransferabilityGraph, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        for row in graph.matrix:
            writer.writerow([f"{v:.6g}" for v in row])
    return path


def read_graph_csv(path, iteration: int = -1) -> TransferabilityGraph:
    with Path(path).open(newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    return TransferabilityGraph(np.asarray(rows, dtype=nx.default_dtype()), iteration)


_SHADES = " .:-=+*#%@"


def text_heatmap(graph: TransferabilityGraph, lo: float | None = None, hi: float | None = None) -> str:
    """ASCII intensity grid, one character per entry. A constant graph renders uniformly."""
    m = np.asarray(graph.matrix, dtype=np.float64)
    lo = 0.0 if lo is None else lo
    hi = 1.0 if hi is None else hi
    span = hi - lo if hi > lo else 1.0
    idx = np.clip(((m - lo) / span * (len(_SHADES) - 1)).round().astype(int), 0, len(_SHADES) - 1)
    return "\n".join("".join(_SHADES[i] * 2 for i in row) for row in idx)
