"""Command-line interface.

Subcommands::

    shiftlab pretrain --config cfg.json [--seed N]
    shiftlab run      --config cfg.json [--parallel N] [--timing]
    shiftlab sweep    --config cfg.json --vary eta_min|eta_max --values 1e-6,1e-5,...
    shiftlab trace    --config cfg.json --shift squ --seed 3
    shiftlab report   --in runs/out

Exit codes: 0 success, 1 configuration error, 2 runtime cell failure(s).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .asap import DEFAULT_BOUNDS, LrBounds
from .errors import ConfigError
from .harness import (
    build_seed_context,
    build_stream,
    child_seed,
    load_config,
    read_summary_csv,
    render_summary,
    run_matrix,
    sensitivity_sweep,
    write_lr_trace,
)
from .methods import run_asap
from .model import accuracy, save_checkpoint


class _Parser(argparse.ArgumentParser):
    """argparse exits with code 2 on bad usage; the CLI contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="shiftlab", description="Online label-shift adaptation lab")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("pretrain", help="pretrain one seed's model and write a checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="replicate seed (default: first in config)")

    p = sub.add_parser("run", help="run the shift x method x seed matrix")
    p.add_argument("--config", required=True)
    p.add_argument("--parallel", type=int, default=None, help="worker pool size (default: cpu count)")
    p.add_argument("--timing", action="store_true", help="serial execution, record wall times")

    p = sub.add_parser("sweep", help="sensitivity sweep over one learning-rate bound")
    p.add_argument("--config", required=True)
    p.add_argument("--vary", required=True, choices=["eta_min", "eta_max"])
    p.add_argument("--values", required=True, help="comma-separated positive values, ascending")
    p.add_argument("--parallel", type=int, default=None)

    p = sub.add_parser("trace", help="export one adaptive-rate trace (t, shift_e, eta)")
    p.add_argument("--config", required=True)
    p.add_argument("--shift", required=True)
    p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("report", help="render markdown tables from a summary.csv")
    p.add_argument("--in", dest="in_dir", required=True)
    return parser


def _cmd_pretrain(args) -> int:
    config = load_config(args.config)
    seed = args.seed if args.seed is not None else config.seeds[0]
    ctx = build_seed_context(config, seed)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"checkpoint_seed{seed}.json"
    save_checkpoint(ctx.params, path, seed=seed)
    train_acc = 100.0 * accuracy(ctx.params, ctx.train.inputs, ctx.train.labels)
    print(f"checkpoint written to {path}")
    print(f"train accuracy {train_acc:.2f}%  holdout accuracy {100.0 * ctx.holdout_accuracy:.2f}%")
    return 0


def _cmd_run(args) -> int:
    config = load_config(args.config)
    result = run_matrix(config, parallel=args.parallel, timing=args.timing)
    print(render_summary(result.rows))
    print(f"outputs written to {config.output_dir}")
    if result.failures:
        for cell in result.failures:
            print(f"FAILED {cell.shift}/{cell.method}/seed{cell.seed}: {cell.error}", file=sys.stderr)
        return 2
    return 0


def _cmd_sweep(args) -> int:
    config = load_config(args.config)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --values list: {exc}") from exc
    rows = sensitivity_sweep(config, vary=args.vary, values=values, parallel=args.parallel)
    for value, mean_acc, std_acc, status in rows:
        shown = f"{mean_acc:.2f}±{std_acc:.2f}" if mean_acc is not None else status
        print(f"{args.vary}={value:g}: {shown}")
    print(f"sweep CSV written to {Path(config.output_dir) / f'sweep_{args.vary}.csv'}")
    if any(status == "failed" for *_, status in rows):
        return 2
    return 0


def _cmd_trace(args) -> int:
    config = load_config(args.config)
    if args.seed not in config.seeds:
        raise ConfigError(f"seed {args.seed} is not in the config seeds {list(config.seeds)}")
    asap_methods = [m for m in config.methods if m.kind == "asap"]
    if asap_methods:
        m = asap_methods[0]
        bounds = LrBounds(m.eta_min, m.eta_max)
        ridge = m.ridge
    else:
        bounds, ridge = DEFAULT_BOUNDS, None
    ctx = build_seed_context(config, args.seed)
    stream = build_stream(config, ctx, args.shift)
    records = run_asap(
        ctx.params,
        ctx.holdout,
        stream,
        bounds=bounds,
        ridge=ridge,
        buffer_seed=child_seed(args.seed, "buffer"),
    )
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"trace_{stream.schedule.kind}_{args.seed}.csv"
    write_lr_trace(path, records, stream.schedule.kind)
    print(f"trace written to {path}")
    return 0


def _cmd_report(args) -> int:
    summary = Path(args.in_dir) / "summary.csv"
    if not summary.exists():
        raise ConfigError(f"no summary.csv under {args.in_dir}")
    rows = read_summary_csv(summary)
    text = render_summary(rows)
    (Path(args.in_dir) / "summary.md").write_text(text, encoding="utf-8")
    print(text)
    return 0


_COMMANDS = {
    "pretrain": _cmd_pretrain,
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "trace": _cmd_trace,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
