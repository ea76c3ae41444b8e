"""Command-line front end: ``perturbrnn {gen-data,train,sweep,compare,export}``.

Exit codes: 0 on success (an unstable run is a result, not a failure),
2 for usage or configuration errors, 1 for runtime failures such as I/O or
bad data files.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

from . import harness
from .errors import ConfigurationError, DataError
from .tasks import save_dataset

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

# flag name -> task data key
_DATA_FLAGS = {
    "num_symbols": "num_symbols", "seq_len": "seq_len", "delay": "delay", "loss_mask": "loss_mask",
    "num_train": "num_train", "num_test": "num_test",
    "length": "length", "tau_mg": "tau_mg", "horizon": "horizon", "train_fraction": "train_fraction",
    "window": "window", "test_window": "test_window",
    "data_path": "path", "train_months": "train_months", "test_months": "test_months",
}

LONG_HEADER = ["task", "learner", "seed", "epoch", "split", "metric", "value"]


class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage errors go through the same exit-code path."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    return values


def _name_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _add_data_flags(p):
    g = p.add_argument_group("task data")
    g.add_argument("--num-symbols", type=int, help="copying: alphabet size")
    g.add_argument("--seq-len", type=int, help="copying: symbols to remember")
    g.add_argument("--delay", type=int, help="copying: blank steps before the cue")
    g.add_argument("--loss-mask", choices=["full", "recall"], help="copying: steps that count in the loss")
    g.add_argument("--num-train", type=int, help="copying: training sequences")
    g.add_argument("--num-test", type=int, help="copying: test sequences")
    g.add_argument("--length", type=int, help="mackey-glass: series length")
    g.add_argument("--tau-mg", type=float, help="mackey-glass: delay tau")
    g.add_argument("--horizon", type=int, help="mackey-glass / weather: prediction horizon in steps")
    g.add_argument("--train-fraction", type=float, help="mackey-glass: chronological train share")
    g.add_argument("--window", type=int, help="training window length for stream tasks")
    g.add_argument("--test-window", type=int, help="test window length for stream tasks")
    g.add_argument("--data-path", help="weather: hourly CSV (synthetic data when omitted)")
    g.add_argument("--train-months", type=int, help="weather: months used for training")
    g.add_argument("--test-months", type=int, help="weather: months used for testing")
    g.add_argument("--data-seed", type=int, help="seed for generated data")


def _add_run_flags(p, learner_required=False):
    p.add_argument("--config", type=Path, help="TOML or JSON config file; flags override its values")
    p.add_argument("--task", help="mackey-glass, copying or weather")
    p.add_argument("--learner", required=learner_required, help="BP, DBP, NP, DNP, WP, DWP, ANP, DANP, "
                   "NP_GLOBAL, WP_GLOBAL or RFLO (case-insensitive)")
    p.add_argument("--preset", choices=harness.PRESETS, help="built-in defaults (default: reference)")
    p.add_argument("--hidden-size", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--eta", type=float, help="learning rate (default from the preset)")
    p.add_argument("--epsilon", type=float, help="decorrelation rate (default from the preset)")
    p.add_argument("--sigma2", type=float, help="perturbation noise variance")
    seeds = p.add_mutually_exclusive_group()
    seeds.add_argument("--seeds", type=int, metavar="N", help="run seeds 0..N-1")
    seeds.add_argument("--seed-list", type=_int_list, metavar="S1,S2,...", help="explicit seeds")
    p.add_argument("--anp-norm", choices=["per_layer", "joint"])
    p.add_argument("--init-scheme", choices=["uniform", "gaussian"])
    p.add_argument("--jobs", type=int, default=1, help="concurrent seeds (default 1)")
    p.add_argument("--out", type=Path, help="output directory (default: runs)")
    _add_data_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="perturbrnn", description="Train RNNs with perturbation rules or BPTT.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write a task's train/test data as CSV")
    p.add_argument("--task", required=True)
    p.add_argument("--preset", choices=harness.PRESETS, default="reference")
    p.add_argument("--out", type=Path, required=True, help="dataset directory")
    _add_data_flags(p)

    p = sub.add_parser("train", help="train one learner over several seeds")
    _add_run_flags(p)

    p = sub.add_parser("sweep", help="final performance across hidden sizes")
    _add_run_flags(p)
    p.add_argument("--sizes", type=_int_list, required=True, metavar="N1,N2,...")
    p.add_argument("--learners", type=_name_list, metavar="L1,L2,...",
                   help="learners to sweep (default: --learner)")

    p = sub.add_parser("compare", help="side-by-side final performance of several learners")
    _add_run_flags(p)
    p.add_argument("--learners", type=_name_list, required=True, metavar="L1,L2,...")

    p = sub.add_parser("export", help="collect run metrics into one long-format CSV for plotting")
    p.add_argument("--runs", type=Path, required=True, help="output directory of earlier runs")
    p.add_argument("--out", type=Path, required=True, help="CSV file to write")
    return parser


def _data_overrides(args) -> dict:
    return {key: getattr(args, flag) for flag, key in _DATA_FLAGS.items()
            if getattr(args, flag, None) is not None}


def _config_from(args, learner=None):
    seeds = args.seed_list
    if args.seeds is not None:
        if args.seeds < 1:
            raise ConfigurationError("--seeds must be at least 1")
        seeds = list(range(args.seeds))
    flags = dict(task=args.task, learner=learner or args.learner, preset=args.preset,
                 hidden_size=args.hidden_size, batch_size=args.batch_size, epochs=args.epochs,
                 eta=args.eta, epsilon=args.epsilon, sigma2=args.sigma2, seeds=seeds,
                 anp_norm=args.anp_norm, init_scheme=args.init_scheme, data_seed=args.data_seed,
                 out_dir=None if args.out is None else str(args.out), data=_data_overrides(args))
    config = harness.load_config(args.config, **flags)
    if config.out_dir is None:
        config.out_dir = "runs"
    return config


def _fmt(value) -> str:
    return "nan" if value is None or (isinstance(value, float) and math.isnan(value)) else f"{value:.6g}"


def cmd_gen_data(args) -> int:
    data = dict(harness.preset_table(args.preset)[harness.canonical_task(args.task)].get("data", {}))
    data.update(_data_overrides(args))
    # windowing is a training concern; the export keeps whole sequences
    for key in ("window", "test_window"):
        data.pop(key, None)
    seed = args.data_seed if args.data_seed is not None else 0
    train, test = harness.split_data(args.task, data, seed)
    save_dataset(args.out, train, test)
    length = sum(train.lengths) + sum(test.lengths)
    print(f"task={harness.canonical_task(args.task)} steps={length} "
          f"train={len(train)}x{train.lengths[0]} test={len(test)}x{test.lengths[0]} out={args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _config_from(args)
    summary = harness.run_multi_seed(config, jobs=args.jobs)
    for record in summary.records:
        print(f"seed {record.seed}: {record.status.label()}  final train {_fmt(record.final('train'))}"
              f"  final test {_fmt(record.final('test'))}")
    for split in ("train", "test"):
        stats = summary.final(split)
        print(f"{config.task} {config.learner} final {split} loss: mean {_fmt(stats['mean'])} "
              f"min {_fmt(stats['min'])} max {_fmt(stats['max'])} "
              f"({len(summary.stable_records)}/{len(summary.records)} stable)")
    print(f"metrics written to {Path(config.out_dir) / config.task / config.learner}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    learners = args.learners or ([args.learner] if args.learner else None)
    if not args.sizes:
        raise ConfigurationError("--sizes needs at least one hidden size")
    if not learners and args.config is None:
        raise ConfigurationError("give --learners or --learner")
    config = _config_from(args, learner=(learners or [None])[0])
    record = harness.run_scaling_sweep(config, args.sizes, learners, jobs=args.jobs)
    print(harness.format_table(record.rows), end="")
    out = Path(config.out_dir) / config.task
    print(f"per-run rows written to {out / 'sweep.csv'}, summary to {out / 'sweep_summary.csv'}")
    return EXIT_OK


def cmd_compare(args) -> int:
    if len(args.learners) < 2:
        raise ConfigurationError("compare needs at least two learners")
    config = _config_from(args, learner=args.learners[0])
    rows = harness.run_comparison(config, args.learners, jobs=args.jobs)
    print(harness.format_table(rows), end="")
    print(f"table written to {Path(config.out_dir) / config.task / 'compare.csv'}")
    return EXIT_OK


def export_long(runs_dir, out_path) -> int:
    """Gather ``<task>/<learner>/seed<k>/metrics.csv`` files into one long CSV; returns row count."""
    runs_dir = Path(runs_dir)
    files = sorted(runs_dir.glob("*/*/seed*/metrics.csv"))
    if not files:
        raise DataError(f"no metrics.csv files under {runs_dir}")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LONG_HEADER)
        for path in files:
            task, learner = path.parts[-4], path.parts[-3]
            with open(path, newline="") as src:
                for row in csv.DictReader(src):
                    writer.writerow([task, learner, row["seed"], row["epoch"], row["split"],
                                     row["metric"], row["value"]])
                    n += 1
    return n


def cmd_export(args) -> int:
    n = export_long(args.runs, args.out)
    print(f"wrote {n} rows to {args.out}")
    return EXIT_OK


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "sweep": cmd_sweep,
            "compare": cmd_compare, "export": cmd_export}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "jobs", 1) < 1:
            raise ConfigurationError("--jobs must be at least 1")
        return COMMANDS[args.command](args)
    except SystemExit as exc:
        # --help exits 0 through argparse
        return int(exc.code or 0)
    except (_UsageError, ConfigurationError) as exc:
        print(f"perturbrnn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"perturbrnn: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
