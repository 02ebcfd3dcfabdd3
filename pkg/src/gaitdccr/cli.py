"""Command-line entry point: ``gaitdccr <subcommand> [options]``.

Exit status: 0 success, 2 usage, 3 configuration, 4 data or file, 5 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import metrics
from .arrays import ArrayFileError
from .config import ConfigError, dump_config, load_config, parse_config, parse_overrides
from .dataio import DatasetError, read_split, resolve_split, write_dataset
from .encoder import EncoderDivergenceError, encode, load_params, save_params
from .labels import write_soft_labels_csv
from .membank import DegenerateCentroidError, MemoryBank
from .silhouette import MODES, PbmError, augment_sequence, read_sequence, write_sequence
from .synthgen import gen_embeddings
from .training import (
    GaitDataset,
    ablate,
    ablation_csv,
    decay_grid,
    finetune,
    k_grid,
    pretrain,
    split_rank1,
    split_specs,
    synthetic_domains,
    toggle_grid,
    write_run,
)

log = logging.getLogger("gaitdccr")

EXIT_USAGE, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, message, status):
        super().__init__(message)
        self.status = status


# ---------------------------------------------------------------------------
# Shared helpers


def _configs(args):
    overrides = parse_overrides(args.set or [])
    if args.seed is not None:
        overrides["data_seed" if args.command == "gen" else "seed"] = str(args.seed)
    if args.config:
        return load_config(args.config, overrides)
    return parse_config("", overrides)


def _run_dir(args, run) -> Path:
    root = Path(args.out)
    name = args.run_name or f"{time.strftime('%Y%m%d-%H%M%S')}_seed{run.seed}"
    path, n = root / name, 1
    while path.exists() and not args.run_name:
        path, n = root / f"{name}_{n}", n + 1
    path.mkdir(parents=True, exist_ok=True)
    return path


def _domains(args, data, augment) -> dict:
    """Splits read from ``--data`` or generated in memory."""
    if args.data:
        return {name: read_split(resolve_split(args.data, name), augment=augment and name == "target")
                for name in ("source", "target", "eval") if _has_split(args.data, name)}
    if data.kind == "embeddings":
        out = {}
        for name, spec in split_specs(data).items():
            feats, truth = gen_embeddings(spec)
            out[name] = GaitDataset(feats, truth.sample_ids, truth.identities, truth.clothing)
        return out
    doms = synthetic_domains(data, augment=augment)
    return {"source": doms.source, "target": doms.target, "eval": doms.eval}


def _has_split(directory, name):
    try:
        resolve_split(directory, name)
        return True
    except DatasetError:
        return False


def _need(domains, name):
    if name not in domains:
        raise CliError(f"dataset has no '{name}' split", EXIT_DATA)
    return domains[name]


def _init_params(args, domains, run):
    if args.init:
        return load_params(args.init)
    log.info("no --init given; pre-training on the source split")
    return pretrain(_need(domains, "source"), run)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_gen(args):
    _, data = _configs(args)
    out = write_dataset(args.out, data)
    print(f"wrote {data.kind} dataset to {out}")


def cmd_pretrain(args):
    run, data = _configs(args)
    domains = _domains(args, data, augment=False)
    losses = []
    params = pretrain(_need(domains, "source"), run,
                      observer=lambda ev, **kw: losses.append((kw["epoch"], kw["iteration"], kw["loss"])))
    out = _run_dir(args, run)
    (out / "config.cfg").write_text(dump_config(run, data))
    save_params(out / "checkpoints" / "encoder.bin", params)
    with (out / "pretrain_losses.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "iteration", "loss"])
        writer.writerows([e, i, f"{v:.12g}"] for e, i, v in losses)
    if "eval" in domains:
        r1 = split_rank1(encode(params, domains["eval"].inputs), domains["eval"].identities,
                         domains["eval"].clothing)
        print(f"eval rank1 {r1:.6f}")
    print(f"run directory {out}")


def _label_dumper(out, target, iterations):
    """Observer writing the soft-label stages of each epoch's last batch."""
    def observer(event, **kw):
        if event != "iteration" or kw["iteration"] != iterations - 1:
            return
        ids = [target.sample_ids[i] for i in kw["batch"]]
        path = out / "labels" / f"epoch_{kw['epoch']:03d}.csv"
        for n, (stage, probs) in enumerate(kw["stages"].items()):
            write_soft_labels_csv(path, ids, stage, probs, append=n > 0)

    return observer


def cmd_finetune(args):
    run, data = _configs(args)
    domains = _domains(args, data, augment=run.ctm and run.augment)
    target = _need(domains, "target")
    init = _init_params(args, domains, run)
    out = _run_dir(args, run)
    observer = _label_dumper(out, target, run.iterations) if args.dump_labels else None
    result = finetune(target, init, run, domains.get("eval"), observer)
    write_run(out, result, target.sample_ids)
    (out / "config.cfg").write_text(dump_config(run, data))
    final = result.log.epochs[-1] if result.log.epochs else {}
    for key in ("f1", "rank1", "num_clusters"):
        if key in final:
            print(f"final {key} {final[key]}")
    print(f"run directory {out}")


def cmd_ablate(args):
    run, data = _configs(args)
    if args.grid == "table":
        names = args.rows.split(",") if args.rows else None
        try:
            grid = toggle_grid(names)
        except KeyError as exc:
            raise CliError(f"unknown ablation row {exc.args[0]!r}", EXIT_CONFIG) from exc
    elif args.grid == "k":
        grid = k_grid()
    else:
        grid = decay_grid()
    domains = _domains(args, data, augment=True)
    target = _need(domains, "target")
    init = _init_params(args, domains, run)
    rows = ablate(grid, run, target, init, domains.get("eval"))
    out = _run_dir(args, run)
    (out / "config.cfg").write_text(dump_config(run, data))
    text = ablation_csv(rows)
    (out / "ablation.csv").write_text(text)
    sys.stdout.write(text)
    print(f"run directory {out}")


def cmd_augment(args):
    try:
        seq = read_sequence(args.input)
    except OSError as exc:
        raise CliError(f"cannot read sequence {args.input}: {exc.strerror}", EXIT_DATA) from exc
    mode = None if args.mode == "random" else args.mode
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    out = augment_sequence(seq, rng, mode)
    write_sequence(args.out, out)
    print(f"wrote {len(out)} frames to {args.out}")


def _eval_features(args, dataset):
    if args.checkpoint:
        params = load_params(args.checkpoint)
        if params.input_dim != dataset.inputs.shape[1]:
            raise CliError(f"checkpoint expects {params.input_dim} inputs, data has "
                           f"{dataset.inputs.shape[1]}", EXIT_DATA)
        return encode(params, dataset.inputs)
    norms = np.linalg.norm(dataset.inputs, axis=1)
    if np.abs(norms - 1.0).max() > 1e-6:
        raise CliError("data are not unit embeddings; pass --checkpoint to encode them", EXIT_DATA)
    return dataset.inputs


def cmd_eval(args):
    _configs(args)
    dataset = read_split(resolve_split(args.data, args.split))
    feats = _eval_features(args, dataset)
    report = {"samples": len(dataset),
              "rank1": split_rank1(feats, dataset.identities, dataset.clothing)}
    if args.bank:
        bank = MemoryBank.load(args.bank)
        if bank.dim != feats.shape[1]:
            raise CliError(f"bank width {bank.dim} != feature width {feats.shape[1]}", EXIT_DATA)
        pred = np.argmax(feats @ bank.centroids.T, axis=1)
        used, pred = np.unique(pred, return_inverse=True)
        report["num_clusters"] = int(used.size)
        report["pairwise_f1"] = metrics.pairwise_f1(pred, dataset.identities)
        report["label_accuracy"] = metrics.label_accuracy(pred, dataset.identities)
        report["centroid_mse"] = metrics.centroid_mse(bank.centroids[used], pred,
                                                      dataset.identities, feats)
    lines = [f"{k},{v:.12g}" if isinstance(v, float) else f"{k},{v}" for k, v in report.items()]
    text = "metric,value\n" + "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaitdccr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=False, out_help="run directory root"):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, help="run seed (data seed for gen)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("-v", "--verbose", action="store_true")
        if out_required is not None:
            p.add_argument("--out", required=out_required, default="runs", help=out_help)

    def training(p):
        common(p)
        p.add_argument("--data", help="dataset directory written by gen")
        p.add_argument("--run-name", help="fixed run directory name instead of timestamp_seed")

    p = sub.add_parser("gen", help="write a synthetic dataset")
    common(p, out_required=True, out_help="dataset directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("pretrain", help="supervised pre-training on the source split")
    training(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="unsupervised fine-tuning on the target split")
    training(p)
    p.add_argument("--init", help="encoder checkpoint (default: pre-train in process)")
    p.add_argument("--dump-labels", action="store_true",
                   help="write per-epoch soft labels of the last batch under labels/")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("ablate", help="component, k or decay-mode sweep")
    training(p)
    p.add_argument("--init", help="encoder checkpoint (default: pre-train in process)")
    p.add_argument("--grid", choices=("table", "k", "decay"), default="table")
    p.add_argument("--rows", help="comma-separated component rows for --grid table")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("augment", help="body-row morphology on one sequence directory")
    p.add_argument("--in", dest="input", required=True, help="input sequence directory")
    p.add_argument("--mode", choices=MODES + ("random",), default="random")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output sequence directory")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("eval", help="rank-1 and cluster metrics on one split")
    common(p, out_required=None)
    p.add_argument("--data", required=True, help="dataset or split directory")
    p.add_argument("--split", default="eval", help="split name inside --data")
    p.add_argument("--checkpoint", help="encoder checkpoint (omit for embedding data)")
    p.add_argument("--bank", help="memory bank file to assign samples to")
    p.add_argument("--out", help="also write the report CSV here")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CliError as exc:
        return _fail(str(exc), exc.status)
    except ConfigError as exc:
        return _fail(f"config error: {exc}", EXIT_CONFIG)
    except (DatasetError, PbmError, ArrayFileError) as exc:
        return _fail(f"data error: {exc}", EXIT_DATA)
    except OSError as exc:
        return _fail(f"file error: {exc}", EXIT_DATA)
    except (EncoderDivergenceError, DegenerateCentroidError, FloatingPointError) as exc:
        return _fail(f"numerical error: {exc}", EXIT_NUMERIC)
    except (KeyError, ValueError) as exc:
        return _fail(f"invalid input: {exc}", EXIT_DATA)
    return 0


def _fail(message, status):
    print(f"gaitdccr: {message}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
