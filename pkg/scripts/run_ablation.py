"""Variant x seed ablation on the synthetic domain pair; writes a CSV table.

    python scripts/run_ablation.py --seeds 0,1,2 --steps 2000 --out runs/ablation.csv
"""

import argparse
import time
from dataclasses import replace
from pathlib import Path

from fftat.config import RunConfig
from fftat.trainer import VARIANTS, run_ablation, summarize_ablation, write_ablation_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--steps", type=int, default=None)
    ap.add_argument("--variants", default=",".join(VARIANTS))
    ap.add_argument("--n-per-class", type=int, default=None)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="runs/ablation.csv")
    args = ap.parse_args()

    run = RunConfig()
    train_cfg = run.train
    if args.steps:
        train_cfg = replace(train_cfg, steps=args.steps, warmup_steps=args.steps // 10)
    npc = args.n_per_class or run.data.n_per_class
    seeds = [int(s) for s in args.seeds.split(",")]
    variants = args.variants.split(",")

    t0 = time.perf_counter()
    rows = run_ablation(run.model, train_cfg, seeds, variants, run.data.data_seed, npc, args.jobs)
    for r in rows:
        print(f"{r['variant']:<12} seed {r['seed']}  target {r['target_acc']:.4f}  source {r['source_acc']:.4f}")
    print()
    for v, acc in summarize_ablation(rows).items():
        print(f"{v:<12} mean target acc {acc:.4f}")
    print(f"{len(rows)} runs in {(time.perf_counter() - t0) / 60:.1f} min")
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_ablation_csv(rows, args.out)


if __name__ == "__main__":
    main()
