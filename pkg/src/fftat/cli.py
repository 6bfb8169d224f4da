"""``fftat`` command line: dataset gen, train, eval, ablate, gradcheck, export-graph.

Exit codes: 0 success, 1 usage error (bad flags, unknown config keys,
missing files), 2 numerical failure (non-finite loss, failed gradient check).
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import sys
from pathlib import Path

from . import numerics as nx
from .config import ConfigKeyError, RunConfig, load_config, save_config
from .data import EvalSet, gen_synthetic_pair, load_folder, write_folder
from .numerics import NonFiniteError
from .transferability import TransferabilityGraph, text_heatmap, write_graph_csv

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
HELD_OUT_OFFSET = 1_000_003  # generator seed offset for the held-out eval split


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def code_version() -> str:
    """Hash of the package sources; stored next to every run config."""
    h = hashlib.sha256()
    for f in sorted(Path(__file__).parent.glob("*.py")):
        h.update(f.name.encode())
        h.update(f.read_bytes())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------- data


def training_data(cfg: RunConfig):
    d, m = cfg.data, cfg.model
    if d.source_dir or d.target_dir:
        if not (d.source_dir and d.target_dir):
            raise UsageError("source_dir and target_dir must be given together")
        source = load_folder(d.source_dir, m.image_size)
        tgt = load_folder(d.target_dir, m.image_size)
        if len(source.class_names) != m.num_classes:
            raise UsageError(f"{d.source_dir} has {len(source.class_names)} classes, "
                             f"config says num_classes={m.num_classes}")
        return source, EvalSet(tgt.images, tgt.labels, tgt.class_names)
    return gen_synthetic_pair(d.data_seed, d.n_per_class, m.num_classes, m.image_size)


def held_out(cfg: RunConfig):
    d, m = cfg.data, cfg.model
    n = max(1, d.n_per_class // 2)
    return gen_synthetic_pair(d.data_seed + HELD_OUT_OFFSET, n, m.num_classes, m.image_size)


# ---------------------------------------------------------------- commands


def cmd_dataset_gen(args) -> int:
    source, target = gen_synthetic_pair(args.seed, args.n_per_class, args.num_classes, args.image_size)
    out = Path(args.out)
    write_folder(source.images, source.labels, source.class_names, out / "source")
    write_folder(target.images, target.labels, target.class_names, out / "target")
    print(f"wrote {len(source)} source and {len(target)} target images to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .trainer import train

    cfg = load_config(args.config, args.set)
    nx.set_precision(cfg.precision)
    source, target = training_data(cfg)
    run_dir = cfg.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, run_dir / "config.json")
    (run_dir / "code_version").write_text(code_version() + "\n")
    result = train(cfg.model, cfg.train, source, target, out_dir=run_dir, config=cfg.flat())
    print(f"{run_dir}: target acc {result.target_acc:.4f}  source acc {result.source_acc:.4f}")
    return EXIT_OK


def _run_config(run_dir: Path) -> RunConfig:
    path = run_dir / "config.json"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; is {run_dir} a run directory?")
    return load_config(path)


def _checkpoint(args) -> Path:
    if args.checkpoint:
        return Path(args.checkpoint)
    run_dir = Path(args.run)
    ckpts = sorted(run_dir.glob("ckpt_*.bin"))
    if not ckpts:
        raise FileNotFoundError(f"no checkpoint in {run_dir}")
    return ckpts[-1]


def cmd_eval(args) -> int:
    from .trainer import evaluate, load_checkpoint

    run_dir = Path(args.run)
    cfg = _run_config(run_dir)
    nx.set_precision(cfg.precision)
    state, header = load_checkpoint(_checkpoint(args))
    source, target = held_out(cfg)
    t = evaluate(state.params, cfg.model, state.graph, target)
    s = evaluate(state.params, cfg.model, state.graph, source)
    print(f"step {header['step']}  held-out target acc {t:.4f}  held-out source acc {s:.4f}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .trainer import VARIANTS, run_ablation, summarize_ablation, write_ablation_csv

    cfg = load_config(args.config, args.set)
    nx.set_precision(cfg.precision)
    seeds = [int(s) for s in args.seeds.split(",")]
    variants = [v.strip() for v in args.variants.split(",")]
    bad = [v for v in variants if v not in VARIANTS]
    if bad:
        raise UsageError(f"unknown variant(s) {bad}; choose from {list(VARIANTS)}")
    rows = run_ablation(cfg.model, cfg.train, seeds, variants, cfg.data.data_seed, cfg.data.n_per_class, args.jobs)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_ablation_csv(rows, out)
    for v, acc in summarize_ablation(rows).items():
        print(f"{v:<12} mean target acc {acc:.4f}")
    print(f"table written to {out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import format_report, run_suite

    results = run_suite(seed=args.seed)
    print(format_report(results))
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"FAILED: {', '.join(failed)}")
        return EXIT_NUMERIC
    print("all gradient checks passed")
    return EXIT_OK


def cmd_export_graph(args) -> int:
    from .trainer import load_checkpoint

    ckpt = _checkpoint(args)
    state, header = load_checkpoint(ckpt)
    graph: TransferabilityGraph = state.graph
    out = Path(args.out) if args.out else ckpt.with_name(f"graph_step{header['step']}.csv")
    write_graph_csv(graph, out)
    print(f"graph (built at iteration {graph.iteration_built}) written to {out}")
    print(text_heatmap(graph))
    return EXIT_OK


# ---------------------------------------------------------------- wiring


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fftat", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    ds = sub.add_parser("dataset", help="synthetic dataset tools")
    ds_sub = ds.add_subparsers(dest="action", parser_class=_Parser)
    ds_sub.required = True
    gen = ds_sub.add_parser("gen", help="render the synthetic domain pair to image folders")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.add_argument("--n-per-class", type=int, default=200)
    gen.add_argument("--num-classes", type=int, default=4)
    gen.add_argument("--image-size", type=int, default=32)
    gen.set_defaults(func=cmd_dataset_gen)

    def config_args(sp):
        sp.add_argument("--config", help="TOML or JSON key-value file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")

    tr = sub.add_parser("train", help="train one run")
    config_args(tr)
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="accuracy of a run's checkpoint on the held-out split")
    ev.add_argument("--run", required=True)
    ev.add_argument("--checkpoint", help="defaults to the run's latest checkpoint")
    ev.set_defaults(func=cmd_eval)

    ab = sub.add_parser("ablate", help="variant x seed grid")
    config_args(ab)
    ab.add_argument("--seeds", default="0,1,2")
    ab.add_argument("--variants", default="full,w/o FF,w/o TG-SA,source-only")
    ab.add_argument("--jobs", type=int, default=1)
    ab.add_argument("--out", default="runs/ablation.csv")
    ab.set_defaults(func=cmd_ablate)

    gc = sub.add_parser("gradcheck", help="finite-difference check of every op and the full objective")
    gc.add_argument("--seed", type=int, default=0)
    gc.set_defaults(func=cmd_gradcheck)

    eg = sub.add_parser("export-graph", help="write a checkpoint's transferability graph as CSV + text heatmap")
    eg.add_argument("--run")
    eg.add_argument("--checkpoint")
    eg.add_argument("--out")
    eg.set_defaults(func=cmd_export_graph)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "export-graph" and not (args.run or args.checkpoint):
            raise UsageError("export-graph needs --run or --checkpoint")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        return args.func(args)
    except NonFiniteError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ConfigKeyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
