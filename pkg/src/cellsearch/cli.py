"""Command-line entry point.

Subcommands: search, evaluate, probe, sweep, plot, complexity. All accept
``--config``, ``--seed`` and ``--out-dir``. On failure a machine-readable
``error_summary.json`` is written to the output directory and the exit code
is nonzero.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import torch

from .complexity import count_macs
from .config import config_hash, parse_config
from .errors import CellSearchError, ConfigError
from .evaluation import EvalConfig, build_eval_network
from .genotype import parse as parse_genotype
from .genotype import render
from .plots import emit_plots
from .probing import stable_rank
from .sweep import orchestrate_sweep, run_evaluation, run_search


def _parser():
    parser = argparse.ArgumentParser(prog="cellsearch")
    sub = parser.add_subparsers(dest="mode", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", type=Path, default=None)

    common(sub.add_parser("search", help="run one architecture search"))
    p = sub.add_parser("evaluate", help="train a discrete architecture from scratch")
    common(p)
    p.add_argument("--genotype", type=Path, required=True)
    p.add_argument("--epochs", type=int, default=None)
    p = sub.add_parser("probe", help="stable-rank probe of a checkpoint")
    common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    common(sub.add_parser("sweep", help="run the (cells x nodes x optimizer) grid"))
    common(sub.add_parser("plot", help="render figures from persisted CSVs"))
    p = sub.add_parser("complexity", help="parameter / MAC report for a genotype")
    common(p)
    p.add_argument("--genotype", type=Path, required=True)
    p.add_argument("--render", action="store_true", help="also emit DOT graphs")
    return parser


def _load_config(args):
    if args.config is None:
        raise ConfigError("this mode requires --config")
    cfg = parse_config(args.config)
    if args.out_dir is not None:
        cfg.out_dir = str(args.out_dir)
    if args.seed is not None:
        cfg.seeds = [args.seed]
    return cfg


def _cmd_search(args):
    cfg = _load_config(args)
    out_dir = Path(cfg.out_dir)
    seed = cfg.seeds[0]
    cells = cfg.search.cells_list()[0]
    nodes = cfg.search.nodes_list()[0]
    optimizer = cfg.search.optimizer_list()[0]
    result = run_search(cfg, cells, nodes, optimizer, seed, out_dir)
    print(f"genotype: {result['genotype']}")
    print(f"metrics:  {result['metrics']}")
    print(f"skip fraction: {result['skip_fraction']:.3f}")


def _cmd_evaluate(args):
    cfg = _load_config(args)
    result = run_evaluation(cfg, args.genotype, cfg.seeds[0], Path(cfg.out_dir),
                            epochs=args.epochs)
    print(f"history:    {result['history']}")
    print(f"checkpoint: {result['checkpoint']}")
    if result["accuracy"] is not None:
        print(f"final test accuracy: {result['accuracy']:.2f}%")


def _cmd_probe(args):
    out_dir = Path(args.out_dir or ".")
    ckpt = torch.load(args.checkpoint, map_location="cpu", weights_only=False)
    geno = parse_genotype(ckpt["genotype"])
    known = {f.name for f in dataclasses.fields(EvalConfig)}
    saved = {k: v for k, v in ckpt.get("eval_config", {}).items() if k in known}
    network = build_eval_network(geno, EvalConfig(**saved), ckpt["num_classes"],
                                 ckpt["label_mode"])
    network.load_state_dict(ckpt["state_dict"])
    out_dir.mkdir(parents=True, exist_ok=True)
    probe_path = out_dir / "probe.csv"
    with open(probe_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer_id", "stable_rank"])
        for layer_id, module in network.conv_registry():
            writer.writerow([layer_id, f"{stable_rank(module.weight):.8g}"])
    print(f"probe written: {probe_path}")


def _cmd_sweep(args):
    cfg = _load_config(args)
    rows = orchestrate_sweep(cfg)
    print(f"sweep finished: {len(rows)} result rows in {cfg.out_dir}/results.csv")


def _cmd_plot(args):
    out_dir = args.out_dir
    if out_dir is None and args.config is not None:
        out_dir = Path(_load_config(args).out_dir)
    if out_dir is None:
        raise ConfigError("plot mode requires --out-dir or --config")
    report = emit_plots(out_dir)
    for path in report["files"]:
        print(f"wrote {path}")
    for warning in report["warnings"]:
        print(f"warning: {warning}", file=sys.stderr)


def _cmd_complexity(args):
    cfg = _load_config(args) if args.config else None
    geno = parse_genotype(Path(args.genotype).read_text())
    eval_cfg = cfg.eval if cfg else EvalConfig()
    num_classes = cfg.dataset.num_classes if cfg else 10
    label_mode = cfg.dataset.label_mode if cfg else "single_label"
    resolution = cfg.dataset.resolution if cfg else 32
    network = build_eval_network(geno, eval_cfg, num_classes, label_mode, seed=0)
    report = count_macs(network, (resolution, resolution))
    out_dir = Path(args.out_dir or (cfg.out_dir if cfg else "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "complexity.txt").write_text(report.to_text())
    if args.render:
        (out_dir / "genotype.dot").write_text(render(geno))
    print(f"params: {report.params}")
    print(f"macs:   {report.macs} at {report.input_resolution}")


_COMMANDS = {
    "search": _cmd_search,
    "evaluate": _cmd_evaluate,
    "probe": _cmd_probe,
    "sweep": _cmd_sweep,
    "plot": _cmd_plot,
    "complexity": _cmd_complexity,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        _COMMANDS[args.mode](args)
    except (CellSearchError, OSError) as exc:
        summary = {"mode": args.mode, "error": type(exc).__name__, "message": str(exc)}
        out_dir = Path(getattr(args, "out_dir", None) or ".")
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "error_summary.json").write_text(json.dumps(summary, indent=2))
        except OSError:
            pass
        print(f"error: {summary['error']}: {summary['message']}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
