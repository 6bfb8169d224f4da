"""SGD-momentum training loop with warmup + cosine schedule and per-step graph refresh."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import numerics as nx
from .data import BatchStream, DomainBatch, EvalSet, LabeledSet
from .losses import LossReport, report, total_loss
from .model import ModelConfig, forward_train, init_params, predict
from .numerics import NonFiniteError, Tensor
from .transferability import TransferabilityGraph, blend_graph, write_graph_csv

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    steps: int = 2000
    warmup_steps: int = 200
    peak_lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0
    alpha: float = 1.0
    beta: float = 0.01
    gamma: float = 0.1
    batch_size: int = 16
    seed: int = 0
    eval_every: int = 500
    graph_ema: float = 0.0
    grad_clip: float = 1.0  # global L2 norm; 0 disables

    def __post_init__(self):
        if not 0 <= self.warmup_steps < self.steps:
            raise ValueError(f"need 0 <= warmup_steps < steps, got {self.warmup_steps} / {self.steps}")
        if self.peak_lr <= 0:
            raise ValueError("peak_lr must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if not 0 <= self.graph_ema < 1:
            raise ValueError("graph_ema must lie in [0, 1)")
        if self.grad_clip < 0:
            raise ValueError("grad_clip must be >= 0")


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Linear warmup from 0 to ``peak_lr``, then cosine decay to 0 at ``steps``."""
    if step < cfg.warmup_steps:
        return cfg.peak_lr * step / cfg.warmup_steps
    frac = (step - cfg.warmup_steps) / (cfg.steps - cfg.warmup_steps)
    return cfg.peak_lr * 0.5 * (1.0 + math.cos(math.pi * min(frac, 1.0)))


@dataclass
class TrainState:
    step: int
    params: dict[str, Tensor]
    velocity: dict[str, np.ndarray]
    graph: TransferabilityGraph
    log: list[dict] = field(default_factory=list)

    @classmethod
    def fresh(cls, model_cfg: ModelConfig, seed: int) -> "TrainState":
        params = init_params(model_cfg, seed)
        velocity = {k: np.zeros_like(v.data) for k, v in params.items()}
        return cls(0, params, velocity, TransferabilityGraph.unweighted(model_cfg.num_patches))


class TrainingDiverged(NonFiniteError):
    pass


def train_step(state: TrainState, batch: DomainBatch, cfg: TrainConfig, model_cfg: ModelConfig) -> TrainState:
    """Forward with the stored graph, SGD-momentum update, then replace the graph."""
    lr = lr_at(state.step, cfg)
    for p in state.params.values():
        p.grad = None
    out = forward_train(state.params, model_cfg, batch.source_images, batch.source_labels,
                        batch.target_images, state.graph, step=state.step)
    try:
        total = total_loss(out.losses, cfg.alpha, cfg.beta, cfg.gamma)
    except NonFiniteError as exc:
        terms = {k: float(v.data) for k, v in out.losses.items()}
        raise TrainingDiverged(f"step {state.step}: {exc}; loss terms {terms}") from exc
    if not np.isfinite(total.data):
        raise TrainingDiverged(f"step {state.step}: total loss non-finite; terms "
                               f"{ {k: float(v.data) for k, v in out.losses.items()} }")
    total.backward()

    grads = {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in state.params.items()}
    norm = math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))
    if cfg.grad_clip and norm > cfg.grad_clip:
        scale = cfg.grad_clip / norm
        grads = {k: g * scale for k, g in grads.items()}

    m = cfg.momentum
    for name, p in state.params.items():
        g = grads[name]
        if cfg.weight_decay:
            g = g + cfg.weight_decay * p.data
        v = state.velocity[name]
        v *= m
        v += g
        p.data -= lr * v
        p.grad = None

    state.graph = blend_graph(state.graph, out.fresh_graph, cfg.graph_ema)
    rep: LossReport = report(out.losses, total)
    state.log.append({"step": state.step, **rep.as_dict(), "lr": lr, "grad_norm": norm})
    state.step += 1
    return state


def evaluate(params: dict[str, Tensor], model_cfg: ModelConfig, graph: TransferabilityGraph,
             eval_set, batch_size: int = 64) -> float:
    """Fraction of argmax-correct predictions (fusion off)."""
    if len(eval_set) == 0:
        raise ValueError("evaluate: empty evaluation set")
    pred = predict(eval_set.images, params, model_cfg, graph, batch_size)
    return float(np.mean(pred == np.asarray(eval_set.labels)))


# ---------------------------------------------------------------- checkpoints


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def save_checkpoint(path, state: TrainState, config: dict | None = None) -> Path:
    """JSON header (length-prefixed) followed by raw little-endian parameter buffers.

    Buffers are stored at the run precision so an f64 resume is bitwise exact.
    """
    path = Path(path)
    arrays = [("param/" + k, v.data) for k, v in state.params.items()]
    arrays += [("velocity/" + k, v) for k, v in state.velocity.items()]
    arrays += [("graph", state.graph.matrix)]
    entries, offset = [], 0
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr)
        entries.append({"name": name, "shape": list(arr.shape), "dtype": arr.dtype.str.replace(">", "<"),
                        "offset": offset, "nbytes": arr.nbytes})
        offset += arr.nbytes
    header = {
        "step": state.step,
        "graph_iteration": state.graph.iteration_built,
        "config_hash": config_hash(config or {}),
        "config": config or {},
        "tensors": entries,
    }
    blob = json.dumps(header).encode()
    with path.open("wb") as fh:
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes())
    return path


def load_checkpoint(path) -> tuple[TrainState, dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint {path} not found")
    raw = path.read_bytes()
    (n,) = struct.unpack("<Q", raw[:8])
    header = json.loads(raw[8:8 + n])
    base = 8 + n
    params, velocity, graph = {}, {}, None
    for e in header["tensors"]:
        arr = np.frombuffer(raw, dtype=np.dtype(e["dtype"]), count=int(np.prod(e["shape"], dtype=np.int64)),
                            offset=base + e["offset"]).reshape(e["shape"]).copy()
        kind, _, name = e["name"].partition("/")
        if kind == "param":
            params[name] = Tensor(arr, requires_grad=True, dtype=arr.dtype)
        elif kind == "velocity":
            velocity[name] = arr
        else:
            graph = TransferabilityGraph(arr, header["graph_iteration"])
    state = TrainState(header["step"], params, velocity, graph)
    return state, header


# ---------------------------------------------------------------- full runs


@dataclass
class RunResult:
    state: TrainState
    target_acc: float
    source_acc: float
    history: list[dict] = field(default_factory=list)


def write_metrics(path, records: list[dict]) -> None:
    with Path(path).open("w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def train(model_cfg: ModelConfig, cfg: TrainConfig, source: LabeledSet, target_eval: EvalSet,
          out_dir=None, config: dict | None = None, state: TrainState | None = None,
          source_eval: LabeledSet | None = None, stop_at: int | None = None) -> RunResult:
    """Run ``cfg.steps`` steps (or up to ``stop_at``). Only target images enter training;
    target labels are used by periodic evaluation alone."""
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    stream = BatchStream(source, target_eval.unlabeled(), cfg.batch_size, cfg.seed)
    if state is None:
        state = TrainState.fresh(model_cfg, cfg.seed)
    history = []
    end = cfg.steps if stop_at is None else min(stop_at, cfg.steps)
    while state.step < end:
        train_step(state, stream.batch(state.step), cfg, model_cfg)
        done = state.step
        if cfg.eval_every and (done % cfg.eval_every == 0 or done == cfg.steps):
            acc = evaluate(state.params, model_cfg, state.graph, target_eval)
            history.append({"step": done, "target_acc": acc})
            log.info("step %d  total %.4f  target acc %.4f", done, state.log[-1]["total"], acc)
            if out is not None:
                save_checkpoint(out / f"ckpt_{done:06d}.bin", state, config)
                write_graph_csv(state.graph, out / f"graph_step{done}.csv")
    if out is not None:
        write_metrics(out / "metrics.jsonl", state.log)
    target_acc = evaluate(state.params, model_cfg, state.graph, target_eval)
    src_eval = source_eval if source_eval is not None else source
    source_acc = evaluate(state.params, model_cfg, state.graph, src_eval)
    if out is not None:
        last = state.log[-1] if state.log else {}
        with (out / "summary.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["steps", "target_acc", "source_acc", "final_total", "final_l_clc"])
            w.writerow([state.step, repr(target_acc), repr(source_acc),
                        repr(last.get("total", float("nan"))), repr(last.get("l_clc", float("nan")))])
    return RunResult(state, target_acc, source_acc, history)


# ---------------------------------------------------------------- ablation

VARIANTS = {
    "full": {},
    "w/o FF": {"feature_fusion": False},
    "w/o TG-SA": {"tg_guidance": False},
    "source-only": {"alpha": 0.0, "beta": 0.0, "gamma": 0.0},
}


def variant_configs(name: str, model_cfg: ModelConfig, cfg: TrainConfig) -> tuple[ModelConfig, TrainConfig]:
    overrides = VARIANTS[name]
    m = {k: v for k, v in overrides.items() if hasattr(model_cfg, k)}
    t = {k: v for k, v in overrides.items() if hasattr(cfg, k)}
    return replace(model_cfg, **m), replace(cfg, **t)


def _ablation_job(args):
    name, seed, model_cfg, cfg, data_seed, n_per_class, prec = args
    from .data import gen_synthetic_pair
    with nx.precision(prec):
        source, target = gen_synthetic_pair(data_seed, n_per_class, model_cfg.num_classes, model_cfg.image_size)
        m, t = variant_configs(name, model_cfg, replace(cfg, seed=seed))
        res = train(m, t, source, target)
    return {"variant": name, "seed": seed, "target_acc": res.target_acc, "source_acc": res.source_acc}


def run_ablation(model_cfg: ModelConfig, cfg: TrainConfig, seeds=(0, 1, 2),
                 variants=("full", "w/o FF", "w/o TG-SA"), data_seed: int = 0,
                 n_per_class: int = 100, jobs: int = 1) -> list[dict]:
    """One training run per (variant, seed); rows carry target/source accuracy."""
    work = [(v, s, model_cfg, cfg, data_seed, n_per_class, nx.get_precision()) for v in variants for s in seeds]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_ablation_job, work))
    return [_ablation_job(w) for w in work]


def summarize_ablation(rows: list[dict]) -> dict[str, float]:
    means = {}
    for v in dict.fromkeys(r["variant"] for r in rows):
        means[v] = float(np.mean([r["target_acc"] for r in rows if r["variant"] == v]))
    return means


def write_ablation_csv(rows: list[dict], path) -> Path:
    path = Path(path)
    means = summarize_ablation(rows)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "seed", "target_acc", "source_acc"])
        for r in rows:
            w.writerow([r["variant"], r["seed"], f"{r['target_acc']:.4f}", f"{r['source_acc']:.4f}"])
        for v, acc in means.items():
            w.writerow([v, "mean", f"{acc:.4f}", ""])
    return path
