"""Self-attention variants and the pre-norm transformer block.

Three attention forms share one parameter layout:

* ``vanilla``: softmax(Q K^T / sqrt(d_k)) V per head.
* ``tg``: the (padded) transferability graph scales the raw logits before
  the softmax, so a zero edge gives a zero logit, not a masked one.
* ``tsa``: the class-token row of the post-softmax weights is multiplied by
  ``[1; scores]``; patch rows stay vanilla.

Graphs and scores are constants here: callers pass detached arrays.
"""

from __future__ import annotations

import math

import numpy as np

from . import numerics as nx
from .numerics import ShapeError, Tensor

ATTN_KINDS = ("vanilla", "tg", "tsa")


def init_attention(rng, prefix: str, dim: int, init_weight) -> dict[str, Tensor]:
    p = {}
    for name in ("q", "k", "v", "o"):
        p[f"{prefix}.w{name}"] = Tensor(init_weight(rng, (dim, dim)))
        p[f"{prefix}.b{name}"] = Tensor(np.zeros(dim))
    return p


def init_block(rng, prefix: str, dim: int, mlp_ratio: int, init_weight) -> dict[str, Tensor]:
    hidden = mlp_ratio * dim
    p = {
        f"{prefix}.ln1.g": Tensor(np.ones(dim)),
        f"{prefix}.ln1.b": Tensor(np.zeros(dim)),
        f"{prefix}.ln2.g": Tensor(np.ones(dim)),
        f"{prefix}.ln2.b": Tensor(np.zeros(dim)),
        f"{prefix}.mlp.w1": Tensor(init_weight(rng, (dim, hidden))),
        f"{prefix}.mlp.b1": Tensor(np.zeros(hidden)),
        f"{prefix}.mlp.w2": Tensor(init_weight(rng, (hidden, dim))),
        f"{prefix}.mlp.b2": Tensor(np.zeros(dim)),
    }
    p.update(init_attention(rng, f"{prefix}.attn", dim, init_weight))
    return p


def _split_heads(x: Tensor, heads: int) -> Tensor:
    b, n, d = x.shape
    if d % heads:
        raise ShapeError(f"attention: embed dim {d} not divisible by {heads} heads")
    return x.reshape(b, n, heads, d // heads).transpose(0, 2, 1, 3)


def _merge_heads(x: Tensor) -> Tensor:
    b, h, n, dk = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, n, h * dk)


def _project(x: Tensor, params: dict, prefix: str, name: str) -> Tensor:
    return x @ params[f"{prefix}.w{name}"] + params[f"{prefix}.b{name}"]


def _as_batch(tokens: Tensor) -> tuple[Tensor, bool]:
    if tokens.ndim == 2:
        return tokens.reshape(1, *tokens.shape), True
    if tokens.ndim != 3:
        raise ShapeError(f"attention: tokens must be (N, d) or (B, N, d), got {tokens.shape}")
    return tokens, False


def attention_weights(tokens: Tensor, params: dict, prefix: str, heads: int,
                      graph: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """Post-softmax weights (B, H, N, N) and values (B, H, N, d_k)."""
    q = _split_heads(_project(tokens, params, prefix, "q"), heads)
    k = _split_heads(_project(tokens, params, prefix, "k"), heads)
    v = _split_heads(_project(tokens, params, prefix, "v"), heads)
    logits = q @ k.transpose(0, 1, 3, 2)
    if graph is not None:
        logits = logits * nx.stop_gradient(graph)
    return nx.softmax(logits * (1.0 / math.sqrt(q.shape[-1]))), v


def _output(weights: Tensor, v: Tensor, params: dict, prefix: str) -> Tensor:
    return _project(_merge_heads(weights @ v), params, prefix, "o")


def vanilla_mhsa(tokens: Tensor, params: dict, prefix: str, heads: int) -> Tensor:
    x, single = _as_batch(tokens)
    out = _output(*attention_weights(x, params, prefix, heads), params, prefix)
    return out[0] if single else out


def tg_sa(tokens: Tensor, params: dict, prefix: str, heads: int, graph: np.ndarray) -> Tensor:
    """Graph-guided attention; ``graph`` is the padded (1+P, 1+P) matrix."""
    x, single = _as_batch(tokens)
    n = x.shape[1]
    graph = np.asarray(graph)
    if graph.shape != (n, n):
        raise ShapeError(f"tg_sa: graph shape {graph.shape} != ({n}, {n})")
    out = _output(*attention_weights(x, params, prefix, heads, graph), params, prefix)
    return out[0] if single else out


def tsa_mask(scores: np.ndarray, n_tokens: int) -> np.ndarray:
    """(B, 1, N, N) multiplier: class row = [1; scores], every other entry 1."""
    scores = np.atleast_2d(np.asarray(scores))
    b, p = scores.shape
    if p != n_tokens - 1:
        raise ShapeError(f"tsa: {p} scores for {n_tokens - 1} patches")
    mask = np.ones((b, 1, n_tokens, n_tokens), dtype=nx.default_dtype())
    mask[:, 0, 0, 1:] = scores
    return mask


def tsa(tokens: Tensor, params: dict, prefix: str, heads: int, scores: np.ndarray) -> Tensor:
    """Transferability-aware attention.

    Returns the full layer output; row 0 is the score-weighted class-token
    row, the remaining rows are plain attention.
    """
    x, single = _as_batch(tokens)
    weights, v = attention_weights(x, params, prefix, heads)
    mask = nx.stop_gradient(tsa_mask(scores, x.shape[1]))
    out = _output(weights * mask, v, params, prefix)
    return out[0] if single else out


def attend(tokens: Tensor, params: dict, prefix: str, heads: int, kind: str, guide=None) -> Tensor:
    if kind == "vanilla":
        return vanilla_mhsa(tokens, params, prefix, heads)
    if kind == "tg":
        return tg_sa(tokens, params, prefix, heads, guide)
    if kind == "tsa":
        return tsa(tokens, params, prefix, heads, guide)
    raise ValueError(f"unknown attention kind {kind!r}; expected one of {ATTN_KINDS}")


def mlp(x: Tensor, params: dict, prefix: str) -> Tensor:
    h = nx.gelu(x @ params[f"{prefix}.w1"] + params[f"{prefix}.b1"])
    return h @ params[f"{prefix}.w2"] + params[f"{prefix}.b2"]


def transformer_block(tokens: Tensor, params: dict, prefix: str, heads: int,
                      kind: str = "vanilla", guide=None) -> Tensor:
    """z_hat = Attn(LN(z)) + z;  z' = MLP(LN(z_hat)) + z_hat."""
    h = nx.layer_norm(tokens, params[f"{prefix}.ln1.g"], params[f"{prefix}.ln1.b"])
    z = attend(h, params, f"{prefix}.attn", heads, kind, guide) + tokens
    h = nx.layer_norm(z, params[f"{prefix}.ln2.g"], params[f"{prefix}.ln2.b"])
    return mlp(h, params, f"{prefix}.mlp") + z
