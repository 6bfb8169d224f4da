"""Train one run and show how the transferability graph evolves (text heatmaps).

Graphs are also written as CSV for external plotting.
"""

import argparse
from dataclasses import replace
from pathlib import Path

import numpy as np

from fftat.config import RunConfig
from fftat.data import BatchStream, gen_synthetic_pair
from fftat.trainer import TrainState, evaluate, train_step
from fftat.transferability import text_heatmap, write_graph_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--every", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/graph_evolution")
    args = ap.parse_args()

    run = RunConfig()
    cfg = replace(run.train, steps=args.steps, warmup_steps=args.steps // 10, seed=args.seed)
    source, target = gen_synthetic_pair(run.data.data_seed, run.data.n_per_class)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    state = TrainState.fresh(run.model, args.seed)
    stream = BatchStream(source, target.unlabeled(), cfg.batch_size, cfg.seed)
    while state.step < cfg.steps:
        train_step(state, stream.batch(state.step), cfg, run.model)
        if state.step % args.every == 0 or state.step == cfg.steps:
            m = state.graph.matrix
            acc = evaluate(state.params, run.model, state.graph, target)
            print(f"step {state.step}: graph min {m.min():.3f} mean {m.mean():.3f}  "
                  f"max {m.max():.3f}  target acc {acc:.4f}")
            print(text_heatmap(state.graph, lo=float(np.floor(m.min() * 10) / 10), hi=1.0))
            write_graph_csv(state.graph, out / f"graph_step{state.step}.csv")


if __name__ == "__main__":
    main()
