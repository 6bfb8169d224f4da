"""Full network assembly: embedding, graph-guided blocks, fusion, patch scoring,
transferability-aware last block, classifier and domain heads."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .attention import init_block, transformer_block
from .fusion import fuse
from .losses import (classification_loss, domain_loss, patch_loss,
                     self_clustering_mi)
from .numerics import Tensor
from .patch_embedding import embed_images, init_embedding, num_patches
from .transferability import (TransferabilityGraph, build_graph, discriminate,
                              init_discriminator, pad_graph, patch_discriminate,
                              transferability_score)


@dataclass
class ModelConfig:
    image_size: int = 32
    channels: int = 3
    patch_size: int = 8
    dim: int = 64
    heads: int = 4
    depth: int = 4
    num_classes: int = 4
    mlp_ratio: int = 4
    feature_fusion: bool = True
    tg_guidance: bool = True
    grl_lambda: float = 1.0

    def __post_init__(self):
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        num_patches(self.image_size, self.patch_size)

    @property
    def num_patches(self) -> int:
        return num_patches(self.image_size, self.patch_size)


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """N(0, std) truncated at two standard deviations (resampled)."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out


def init_params(cfg: ModelConfig, seed: int) -> dict[str, Tensor]:
    rng = np.random.default_rng(seed)
    p = init_embedding(rng, cfg.channels, cfg.image_size, cfg.patch_size, cfg.dim, trunc_normal)
    for i in range(cfg.depth):
        p.update(init_block(rng, f"blocks.{i}", cfg.dim, cfg.mlp_ratio, trunc_normal))
    p["norm.g"] = Tensor(np.ones(cfg.dim))
    p["norm.b"] = Tensor(np.zeros(cfg.dim))
    p["head.w"] = Tensor(trunc_normal(rng, (cfg.dim, cfg.num_classes)))
    p["head.b"] = Tensor(np.zeros(cfg.num_classes))
    p.update(init_discriminator(rng, "domain_disc", cfg.dim, trunc_normal))
    p.update(init_discriminator(rng, "patch_disc", cfg.dim, trunc_normal))
    for t in p.values():
        t.requires_grad = True
    return p


def cast_params(params: dict[str, Tensor]) -> dict[str, Tensor]:
    """Copy of ``params`` in the current global precision."""
    out = {}
    for k, v in params.items():
        out[k] = Tensor(np.array(v.data, dtype=nx.default_dtype()), requires_grad=True)
    return out


@dataclass
class ForwardOutput:
    class_logits: Tensor  # (B, K)
    class_token: Tensor  # (B, d)
    patch_probs: Tensor  # (B, P)
    patch_scores: np.ndarray  # (B, P), detached
    domain_probs: Tensor  # (B,)
    fresh_graph: TransferabilityGraph
    n_source: int = 0
    losses: dict[str, Tensor] = field(default_factory=dict)


def _head(z: Tensor, params: dict) -> tuple[Tensor, Tensor]:
    cls = nx.layer_norm(z[:, 0], params["norm.g"], params["norm.b"])
    return cls, cls @ params["head.w"] + params["head.b"]


def encode(images: np.ndarray, params: dict, cfg: ModelConfig, graph: TransferabilityGraph,
           n_source: int | None, fusion: bool, grl_lambda: float | None,
           scores: np.ndarray | None = None, step: int = -1) -> ForwardOutput:
    """Shared forward body.

    ``n_source`` splits the batch into its source and target parts for
    per-domain fusion (None = one domain). ``grl_lambda`` None skips gradient
    reversal (evaluation). ``scores`` overrides the computed patch scores.
    """
    z = embed_images(images, params, cfg.patch_size)
    padded = pad_graph(graph) if cfg.tg_guidance else None
    kind = "tg" if cfg.tg_guidance else "vanilla"
    for i in range(cfg.depth - 1):
        z = transformer_block(z, params, f"blocks.{i}", cfg.heads, kind, padded)

    cls_tok, patches = z[:, :1], z[:, 1:]
    if fusion:
        parts = [patches] if not n_source or n_source >= z.shape[0] else \
            [patches[:n_source], patches[n_source:]]
        patches = nx.concat([fuse(part) for part in parts], axis=0) if len(parts) > 1 else fuse(parts[0])
        z = nx.concat([cls_tok, patches], axis=1)

    disc_in = patches if grl_lambda is None else nx.gradient_reversal(patches, grl_lambda)
    probs = patch_discriminate(disc_in, params)
    if scores is None:
        scores = transferability_score(probs.data)
    scores = np.asarray(scores, dtype=nx.default_dtype())

    z = transformer_block(z, params, f"blocks.{cfg.depth - 1}", cfg.heads, "tsa", scores)
    cls, logits = _head(z, params)
    dom_in = cls if grl_lambda is None else nx.gradient_reversal(cls, grl_lambda)
    dom_probs = discriminate(dom_in, params, "domain_disc")
    return ForwardOutput(logits, cls, probs, scores, dom_probs,
                         build_graph(scores, cfg.heads, step), n_source or 0)


def forward_train(params: dict, cfg: ModelConfig, source_images: np.ndarray, source_labels,
                  target_images: np.ndarray, graph: TransferabilityGraph,
                  scores: np.ndarray | None = None, step: int = -1) -> ForwardOutput:
    """One joint source+target pass; fills ``losses`` with the four objective terms."""
    ns, nt = len(source_images), len(target_images)
    images = np.concatenate([source_images, target_images], axis=0)
    out = encode(images, params, cfg, graph, ns, cfg.feature_fusion, cfg.grl_lambda, scores, step)
    domain_labels = np.concatenate([np.ones(ns), np.zeros(nt)])
    out.losses = {
        "l_clc": classification_loss(out.class_logits[:ns], source_labels),
        "l_dis": domain_loss(out.domain_probs, domain_labels),
        "l_pat": patch_loss(out.patch_probs, domain_labels),
        "mi": self_clustering_mi(out.class_logits[ns:]),
    }
    return out


def forward_eval(images: np.ndarray, params: dict, cfg: ModelConfig,
                 graph: TransferabilityGraph) -> ForwardOutput:
    """Inference pass: fusion off, no gradient reversal, scores from the patch discriminator."""
    return encode(np.asarray(images), params, cfg, graph, None, False, None)


def vanilla_vit_logits(images: np.ndarray, params: dict, cfg: ModelConfig) -> Tensor:
    """Plain ViT forward over the same parameters (every block vanilla attention)."""
    z = embed_images(np.asarray(images), params, cfg.patch_size)
    for i in range(cfg.depth):
        z = transformer_block(z, params, f"blocks.{i}", cfg.heads, "vanilla")
    return _head(z, params)[1]


def predict(images: np.ndarray, params: dict, cfg: ModelConfig, graph: TransferabilityGraph,
            batch_size: int = 64) -> np.ndarray:
    images = np.asarray(images)
    if images.ndim == 3:
        images = images[None]
    labels = []
    for start in range(0, len(images), batch_size):
        out = forward_eval(images[start:start + batch_size], params, cfg, graph)
        labels.append(np.argmax(out.class_logits.data, axis=-1))
    return np.concatenate(labels) if labels else np.zeros(0, dtype=np.int64)
