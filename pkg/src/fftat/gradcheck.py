"""Finite-difference verification suite: every differentiable op plus the full objective.

Runs in f64. Each entry reports the max relative error of backprop against
central differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import numerics as nx
from .attention import init_block, transformer_block
from .fusion import fuse
from .losses import (classification_loss, domain_loss, patch_loss, self_clustering_mi,
                     total_loss)
from .model import ModelConfig, forward_train, init_params
from .numerics import Tensor, grad_check
from .transferability import TransferabilityGraph

DISCRIMINATOR_PREFIXES = ("patch_disc.", "domain_disc.")


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance


def _p(rng, *shape, scale=1.0):
    return Tensor(rng.normal(0, scale, size=shape), requires_grad=True)


def _away_from(rng, kinks, n, gap=0.2):
    """Points at least ``gap`` away from every kink, where central differences are valid."""
    x = rng.uniform(-2, 2, n)
    for k in kinks:
        near = np.abs(x - k) < gap
        x[near] = k + np.sign(x[near] - k + 1e-12) * gap * 1.5
    return Tensor(x, requires_grad=True)


def _op_cases(rng) -> dict[str, Callable[[], tuple[Callable, list]]]:
    """name -> factory of (function, params[, references])."""
    w35 = Tensor(rng.normal(size=(3, 5)))
    w46 = Tensor(rng.normal(size=(4, 6)))
    w8 = Tensor(rng.normal(size=8))

    def grl():
        x = _p(rng, 8)
        return (lambda a: (nx.gradient_reversal(a, 0.7) * w8).sum(), [x],
                [lambda: (x * -0.7 * w8).sum()])

    def block(kind):
        p = init_block(rng, "b", 4, 2, lambda r, s: r.normal(0, 0.5, s))
        x = _p(rng, 2, 3, 4)
        guide = {"vanilla": None, "tg": rng.uniform(0.2, 1, (3, 3)), "tsa": rng.uniform(0.2, 1, (2, 2))}[kind]
        w = rng.normal(size=(2, 3, 4))
        return (lambda *a: (transformer_block(x, p, "b", 2, kind, guide) * w).sum(), [x, *p.values()])

    return {
        "add": lambda: (lambda a, b: ((a + b) * (a + b)).sum(), [_p(rng, 3, 4), _p(rng, 4)]),
        "sub": lambda: (lambda a, b: ((a - b) * (a - b)).sum(), [_p(rng, 3, 4), _p(rng, 4)]),
        "neg": lambda: (lambda a: (-a * w8).sum(), [_p(rng, 8)]),
        "mul": lambda: (lambda a, b: (a * b).sum(), [_p(rng, 3, 4), _p(rng, 4)]),
        "div": lambda: (lambda a, b: (a / b).sum(), [_p(rng, 3), Tensor(rng.uniform(1, 2, 3), True)]),
        "matmul": lambda: (lambda a, b: ((a @ b) * (a @ b)).sum(), [_p(rng, 2, 3, 4), _p(rng, 4, 2)]),
        "softmax": lambda: (lambda a: (nx.softmax(a) * w35).sum(), [_p(rng, 3, 5)]),
        "log_softmax": lambda: (lambda a: (nx.log_softmax(a) * w35).sum(), [_p(rng, 3, 5)]),
        "layer_norm": lambda: (lambda x, g, b: (nx.layer_norm(x, g, b) * w46).sum(),
                               [_p(rng, 4, 6), _p(rng, 6), _p(rng, 6)]),
        "gelu": lambda: (lambda a: nx.gelu(a).sum(), [_p(rng, 8, scale=2.0)]),
        "sigmoid": lambda: (lambda a: nx.sigmoid(a).sum(), [_p(rng, 8, scale=2.0)]),
        "relu": lambda: (lambda a: (nx.relu(a) * w8).sum(), [_away_from(rng, [0.0], 8)]),
        "clip": lambda: (lambda a: (nx.clip(a, -1.0, 1.0) * w8).sum(), [_away_from(rng, [-1.0, 1.0], 8)]),
        "sqrt": lambda: (lambda a: nx.sqrt(a).sum(), [Tensor(rng.uniform(0.5, 2, 5), True)]),
        "square": lambda: (lambda a: (nx.square(a) * w8).sum(), [_p(rng, 8)]),
        "sum": lambda: (lambda a: (a.sum(axis=1) * a.sum(axis=1)).sum(), [_p(rng, 3, 4)]),
        "gradient_reversal": grl,
        "exp": lambda: (lambda a: nx.exp(a).sum(), [_p(rng, 5)]),
        "log": lambda: (lambda a: nx.log(a).sum(), [Tensor(rng.uniform(0.5, 2, 5), True)]),
        "mean": lambda: (lambda a: (a.mean(axis=0) * a.mean(axis=0)).sum(), [_p(rng, 3, 4)]),
        "concat": lambda: (lambda a, b: (nx.concat([a, b], 1) * nx.concat([b, a], 1)).sum(),
                           [_p(rng, 2, 3), _p(rng, 2, 3)]),
        "slice": lambda: (lambda a: (a[:, 1:] * a[:, :-1]).sum(), [_p(rng, 3, 4)]),
        "transpose": lambda: (lambda a: (a.transpose(1, 0) @ a).sum(), [_p(rng, 3, 4)]),
        "reshape": lambda: (lambda a: (a.reshape(2, 6) * a.reshape(2, 6)).sum(), [_p(rng, 3, 4)]),
        "feature_fusion": lambda: (lambda a: (fuse(a) * fuse(a)).sum(), [_p(rng, 3, 2, 2)]),
        "block_vanilla": lambda: block("vanilla"),
        "block_tg_sa": lambda: block("tg"),
        "block_tsa": lambda: block("tsa"),
        "classification_loss": lambda: (lambda a: classification_loss(a, [0, 2, 1]), [_p(rng, 3, 4)]),
        "domain_loss": lambda: (lambda a: domain_loss(a, [1, 1, 0, 0]), [Tensor(rng.uniform(0.1, 0.9, 4), True)]),
        "patch_loss": lambda: (lambda a: patch_loss(a, [1, 0]), [Tensor(rng.uniform(0.1, 0.9, (2, 3)), True)]),
        "self_clustering_mi": lambda: (lambda a: self_clustering_mi(a), [_p(rng, 5, 4)]),
    }


TINY = ModelConfig(image_size=4, channels=3, patch_size=2, dim=8, heads=2, depth=2, num_classes=2, mlp_ratio=2)


def end_to_end_check(seed: int = 0, weights=(1.0, 1.0, 1.0), eps: float = 1e-6,
                     cfg: ModelConfig = TINY, batch: int = 2) -> float:
    """Full objective on a tiny model (d=8, P=4, L=2, B=2 per domain, K=2).

    Gradient reversal makes backprop differ from the gradient of the total
    loss for encoder parameters: there the reference is
    l_clc - alpha*l_dis - beta*l_pat - gamma*mi, while discriminator
    parameters are checked against the total itself. Patch scores are held
    at their base-point values (they are detached in the model). Always f64.
    """
    with nx.precision("f64"):
        return _end_to_end(seed, weights, eps, cfg, batch)


def _end_to_end(seed, weights, eps, cfg, batch) -> float:
    rng = np.random.default_rng(seed)
    params = init_params(cfg, seed)
    for t in params.values():  # larger than the 0.02 init so every path carries signal
        t.data[...] = rng.normal(0, 0.4, size=t.shape)
    xs = rng.uniform(size=(batch, cfg.channels, cfg.image_size, cfg.image_size))
    xt = rng.uniform(size=(batch, cfg.channels, cfg.image_size, cfg.image_size))
    ys = rng.integers(0, cfg.num_classes, batch)
    m = rng.uniform(0.3, 1.0, (cfg.num_patches, cfg.num_patches))
    graph = TransferabilityGraph((m + m.T) / 2)  # non-trivial, so the TG-SA path is exercised
    a, b, g = weights
    base = forward_train(params, cfg, xs, ys, xt, graph)
    frozen = base.patch_scores.copy()

    def losses():
        return forward_train(params, cfg, xs, ys, xt, graph, scores=frozen).losses

    def total():
        return total_loss(losses(), a, b, g)

    def encoder_view():
        parts = losses()
        return parts["l_clc"] - parts["l_dis"] * a - parts["l_pat"] * b - parts["mi"] * g

    names = list(params)
    refs = [total if n.startswith(DISCRIMINATOR_PREFIXES) else encoder_view for n in names]
    return grad_check(total, [params[n] for n in names], eps=eps, references=refs)


def run_suite(seed: int = 0, op_tol: float = 1e-6, e2e_tol: float = 1e-4) -> list[CheckResult]:
    results = []
    with nx.precision("f64"):
        rng = np.random.default_rng(seed)
        for name, make in _op_cases(rng).items():
            f, params, *refs = make()
            err = grad_check(lambda: f(*params), params, eps=1e-6, references=refs[0] if refs else None)
            results.append(CheckResult(name, err, op_tol))
        results.append(CheckResult("total_loss (end-to-end)", end_to_end_check(seed), e2e_tol))
    return results


def format_report(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'component':<{width}}  {'max_rel_err':>12}  {'tol':>8}  status"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {r.max_rel_err:12.3e}  {r.tolerance:8.0e}  {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
