import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import pandas as pd

from ro_norm.baselines import svd_decay_report, train_pca_net, train_ro_fc_nn
from ro_norm.config import config_hash, expand_sweep, load_config
from ro_norm.train import (
    build_bases,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train_decrease,
    train_increase,
)
from ro_norm.utils import (
    DataError,
    PointSelection,
    RONormError,
    aggregate_reports,
    build_dataset,
    load_mesh,
    load_splits,
    save_basis,
)

logger = logging.getLogger(__name__)


def _setup_logging(out_dir, verbose=True):
    out_dir.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        stream=sys.stdout,
        level=logging.INFO if verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        force=True,
    )
    handler = logging.FileHandler(out_dir / "log.txt")
    handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
    logging.getLogger().addHandler(handler)


def _load(path, seed=None):
    config = load_config(path)
    if seed is not None:
        config = replace(config, seed=seed, train=replace(config.train, seed=seed))
    return config


def _out_dir(config, out):
    return Path(out) if out is not None else config.out_dir / config.name


def ensure_dataset(config, generate=True, verbose=True):
    """Load the dataset of ``config``, generating it first if allowed."""
    data_dir = config.dataset_dir
    if not (data_dir / "train" / "header.json").exists():
        if not generate:
            raise DataError(
                f"No dataset in {data_dir}, run gen-data with this config first"
            )
        build_dataset(
            config.case,
            config.n_train,
            config.n_test,
            config.seed,
            load_mesh(config.mesh),
            config.run,
            config.grf,
            config.layout,
            kind=config.kind,
            data_dir=data_dir,
            n_jobs=config.n_jobs,
            provenance={"config_hash": config_hash(config)},
            verbose=verbose,
        )
    return load_splits(data_dir)


def train_model(config, train, test, mesh, cache_dir=None, verbose=True):
    """Train the configured method, returning ``(operator, history, seconds)``."""
    time_start = time.time()
    if config.method == "pca_net":
        operator, history = train_pca_net(train, config.train, test=test, verbose=verbose)
    elif config.method == "ro_fc_nn":
        operator, history = train_ro_fc_nn(
            train, config.train, mesh, test, cache_dir, verbose
        )
    else:
        trainer = train_increase if train.kind.is_increase else train_decrease
        operator, history = trainer(
            train, config.train, mesh, test, cache_dir, verbose
        )
    return operator, history, time.time() - time_start


def run_experiment(config, out_dir, generate=True, threshold=None, verbose=True):
    """Train and evaluate ``config.repeats`` seeds, one directory per seed.

    Returns
    -------
    rows : list of dict
        ``EvalReport.summary()`` of every repeat.
    """
    train, test, mesh = ensure_dataset(config, generate, verbose)
    h = config_hash(config)
    rows = []
    for repeat in range(config.repeats):
        seed = config.train.seed + repeat
        member = config.with_seed(seed)
        run_dir = Path(out_dir) / f"seed{seed}"
        logger.info("%s: method %s, seed %d, hash %s", config.name, config.method, seed, h)
        operator, history, wall_clock = train_model(
            member, train, test, mesh, Path(out_dir) / "bases", verbose
        )
        run_dir.mkdir(parents=True, exist_ok=True)
        history["config_hash"] = h
        history.to_csv(run_dir / "log.csv", index=False)
        save_checkpoint(
            operator, run_dir / "checkpoint", seed=seed, config_hash=h, name=config.name
        )
        report = evaluate(
            operator,
            test,
            wall_clock_s=wall_clock,
            threshold=threshold,
            selection=PointSelection(seed=seed),
            name=config.name,
            method=config.method,
            seed=seed,
            config_hash=h,
        )
        report.save(run_dir)
        logger.info("%s seed %d: E_L2 %.4e, MME %.4e", config.name, seed, report.e_l2, report.mme)
        rows.append(report.summary())
    return rows


def cmd_gen_data(args):
    config = _load(args.config, args.seed)
    if args.out is not None:
        config = replace(config, data_dir=Path(args.out))
    _setup_logging(config.dataset_dir, args.verbose)
    ensure_dataset(config, True, args.verbose)
    logger.info("Dataset ready in %s", config.dataset_dir)
    return config.dataset_dir


def cmd_basis(args):
    config = _load(args.config, args.seed)
    out_dir = _out_dir(config, args.out) / "bases"
    _setup_logging(out_dir, args.verbose)
    train, _, mesh = ensure_dataset(config, False, args.verbose)
    network_basis, reduction_basis = build_bases(train, config.train, mesh, out_dir)
    save_basis(network_basis, out_dir / "network")
    save_basis(reduction_basis, out_dir / "reduction")
    logger.info(
        "Saved %s network basis (k=%d) and %s reduction basis (k=%d) to %s",
        network_basis.kind, network_basis.k, reduction_basis.kind,
        reduction_basis.k, out_dir,
    )
    return out_dir


def cmd_train(args):
    config = _load(args.config, args.seed)
    out_dir = _out_dir(config, args.out)
    _setup_logging(out_dir, args.verbose)
    logger.info("Arguments: %s", vars(args))
    logger.info("Config hash: %s", config_hash(config))
    rows = run_experiment(config, out_dir, False, args.threshold, args.verbose)
    table = aggregate_reports(rows)
    table.to_csv(out_dir / "aggregate.csv", index=False)
    logger.info("\n%s", table.to_string(index=False))
    return table


def cmd_eval(args):
    config = _load(args.config, args.seed)
    out_dir = Path(args.out) if args.out is not None else Path(args.checkpoint).parent
    _setup_logging(out_dir, args.verbose)
    _, test, _ = ensure_dataset(config, False, args.verbose)
    operator, header = load_checkpoint(args.checkpoint)
    report = evaluate(
        operator,
        test,
        threshold=args.threshold,
        selection=PointSelection(seed=header.get("seed", 0)),
        name=header.get("name", config.name),
        method=header["method"],
        seed=header.get("seed"),
        config_hash=header.get("config_hash"),
    )
    report.save(out_dir)
    logger.info("E_L2 %.4e, MME %.4e", report.e_l2, report.mme)
    return report


def cmd_compare(args):
    configs = [c for path in args.config for c in expand_sweep(_load(path, args.seed))]
    out_dir = Path(args.out) if args.out is not None else configs[0].out_dir / "compare"
    _setup_logging(out_dir, args.verbose)
    rows = []
    for config in configs:
        try:
            runs = run_experiment(
                config, out_dir / config.name, True, args.threshold, args.verbose
            )
        except Exception as e:
            # one failing member must not lose the others
            logger.exception("%s failed: %s", config.name, e)
            rows.append(
                {"name": config.name, "method": config.method, "status": "failed",
                 "error": str(e)}
            )
            continue
        row = aggregate_reports(runs).iloc[0].to_dict()
        row.update(status="ok", config_hash=config_hash(config))
        rows.append(row)
    table = pd.DataFrame(rows)
    table.to_csv(out_dir / "comparison.csv", index=False)
    logger.info("\n%s", table.to_string(index=False))
    return table


def cmd_svd_report(args):
    config = _load(args.config, args.seed)
    out_dir = _out_dir(config, args.out) / "svd_report"
    _setup_logging(out_dir, args.verbose)
    train, _, _ = ensure_dataset(config, True, args.verbose)
    report = svd_decay_report(train, args.reduce_axis, args.threshold or 0.99)
    report.save(out_dir)
    logger.info("%s", json.dumps(report.summary()))
    return report


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ro-norm", description="Reduced-order neural operator experiments"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    commands = {
        "gen-data": (cmd_gen_data, "generate a dataset"),
        "basis": (cmd_basis, "compute and cache the network and reduction bases"),
        "train": (cmd_train, "train and evaluate a config"),
        "eval": (cmd_eval, "evaluate a checkpoint on the test split"),
        "compare": (cmd_compare, "run several configs and tabulate them"),
        "svd-report": (cmd_svd_report, "separate vs overall singular value decay"),
    }
    for name, (func, help_) in commands.items():
        sub = subparsers.add_parser(name, help=help_)
        sub.set_defaults(func=func)
        if name == "compare":
            sub.add_argument("--config", type=str, nargs="+", required=True)
        else:
            sub.add_argument("--config", type=str, required=True)
        sub.add_argument("--out", type=str, default=None)
        sub.add_argument("--seed", type=int, default=None)
        sub.add_argument("--threshold", type=float, default=None)
        sub.add_argument("--quiet", dest="verbose", action="store_false")
        if name == "eval":
            sub.add_argument("--checkpoint", type=str, required=True)
        if name == "svd-report":
            sub.add_argument("--reduce-axis", type=str, default=None,
                             choices=["time", "space"])
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except RONormError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
