"""Command-line front end.

Subcommands: gen (blobs/moons/ood), train, eval, gap, sweep, active,
certify. Every command echoes its fully resolved parameters into a JSON
manifest next to (or inside) its outputs; rerunning with ``--config
<manifest>`` reproduces the outputs byte-identically. Flags always override
config-file values. Exit codes: 0 success, 1 usage, 2 data error,
3 contract violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import active as active_mod
from . import datasets, metrics, numerics, pipeline, theory
from .errors import ContractError, DataError
from .losses import LossWeights


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the CLI contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_hidden(text: str) -> list[int]:
    try:
        sizes = [int(part) for part in text.split(",") if part != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad hidden sizes {text!r}") from None
    if not sizes or any(s <= 0 for s in sizes):
        raise argparse.ArgumentTypeError(f"bad hidden sizes {text!r}")
    return sizes


def _parse_schedule(text: str) -> list[list[float]]:
    entries = []
    try:
        for part in text.split(","):
            epoch, lr = part.split(":")
            entries.append([int(epoch), float(lr)])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad lr schedule {text!r}") from None
    return entries


def _load_config_params(path: str) -> dict:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"config {path} is not valid JSON: {exc}") from exc
    if isinstance(payload, dict) and isinstance(payload.get("params"), dict):
        return payload["params"]
    if isinstance(payload, dict):
        return payload
    raise DataError(f"config {path} must hold a JSON object")


def _resolve(defaults: dict, args, keys) -> dict:
    resolved = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        for key, value in _load_config_params(config_path).items():
            if key in resolved:
                resolved[key] = value
    for key in keys:
        value = getattr(args, key)
        if value is not None:
            resolved[key] = value
    return resolved


def _write_manifest(path: Path, command: str, params: dict) -> None:
    payload = {"command": command, "params": params}
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def _config_hash(command: str, params: dict) -> str:
    blob = json.dumps({"command": command, "params": params}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


# ---------------------------------------------------------------- gen

_GEN_DEFAULTS = {
    "blobs": {"classes": 3, "per_class": 400, "dim": 2, "sep": 3.0, "seed": 0, "out": "blobs.csv"},
    "moons": {"n": 800, "noise": 0.1, "seed": 0, "out": "moons.csv"},
    "ood": {"dim": 2, "n": 400, "shift": 4.0, "seed": 0, "out": "ood.csv"},
}


def cmd_gen(args) -> int:
    kind = args.kind
    keys = [k for k in _GEN_DEFAULTS[kind] if k != "out"] + ["out"]
    params = _resolve(_GEN_DEFAULTS[kind], args, keys)
    if kind == "blobs":
        sample_set = datasets.make_blobs(
            params["classes"], params["per_class"], params["dim"], params["sep"], params["seed"]
        )
    elif kind == "moons":
        sample_set = datasets.make_moons(params["n"], params["noise"], params["seed"])
    else:
        sample_set = datasets.make_ood(params["dim"], params["n"], params["shift"], params["seed"])
    out = Path(params["out"])
    datasets.save_csv(sample_set, out)
    _write_manifest(Path(str(out) + ".manifest.json"), f"gen:{kind}", params)
    print(f"wrote {out} ({sample_set.m} rows)")
    return 0


# ---------------------------------------------------------------- train-like commands

_TRAIN_DEFAULTS = {
    "data": None,
    "test": None,
    "labeled_frac": None,
    "test_frac": None,
    "lambda1": 0.5,
    "lambda2": 0.5,
    "epochs": 200,
    "batch_labeled": 32,
    "batch_unlabeled": 64,
    "hidden": [32, 32],
    "activation": "relu",
    "lr_schedule": [[1, 0.1], [150, 0.01], [250, 0.001]],
    "momentum": 0.9,
    "weight_decay": 0.0001,
    "seed": 0,
    "bins": metrics.DEFAULT_ECE_BINS,
    "out_dir": "runs",
}

_TRAIN_KEYS = tuple(_TRAIN_DEFAULTS)


def _train_config(params: dict, record_history: bool = False) -> pipeline.TrainConfig:
    return pipeline.TrainConfig(
        epochs=int(params["epochs"]),
        labeled_batch=int(params["batch_labeled"]),
        unlabeled_batch=int(params["batch_unlabeled"]),
        weights=LossWeights(float(params["lambda1"]), float(params["lambda2"])),
        hidden=tuple(int(s) for s in params["hidden"]),
        activation=params["activation"],
        lr_schedule=tuple((int(t), float(lr)) for t, lr in params["lr_schedule"]),
        momentum=float(params["momentum"]),
        weight_decay=float(params["weight_decay"]),
        seed=int(params["seed"]),
        record_history=record_history,
        n_bins=int(params["bins"]),
    )


def _prepare_data(params: dict):
    """Load the train CSV and resolve the labeled mask and test set.

    Fully labeled files are split here (stratified, seeded); partially
    labeled files keep their own mask and need --test for a test report.
    The resolved fractions are written back into ``params``.
    """
    if not params["data"]:
        raise DataError("no input data file given (positional DATA or config 'data')")
    full = datasets.load_csv(params["data"])
    test = datasets.load_csv(params["test"]) if params["test"] else None
    partially_labeled = bool((~full.labeled_mask).any())
    if partially_labeled:
        if params["labeled_frac"] is not None or params["test_frac"] is not None:
            raise DataError(
                f"{params['data']} already carries an unlabeled mask; "
                "drop --labeled-frac/--test-frac"
            )
        return full, test
    params["labeled_frac"] = 0.1 if params["labeled_frac"] is None else params["labeled_frac"]
    if test is not None:
        if params["test_frac"] is not None:
            raise DataError("--test and --test-frac are mutually exclusive")
        mask = datasets.stratified_labeled_mask(full.labels, params["labeled_frac"], params["seed"])
        train = datasets.SampleSet(
            features=full.features, labels=full.labels, labeled_mask=mask
        )
        return train, test
    params["test_frac"] = 0.25 if params["test_frac"] is None else params["test_frac"]
    train, test = datasets.split_semi(
        full, params["labeled_frac"], params["test_frac"], params["seed"]
    )
    return train, test


def _run_dir(command: str, params: dict) -> Path:
    return Path(params["out_dir"]) / _config_hash(command, params)


def cmd_train(args) -> int:
    params = _resolve(_TRAIN_DEFAULTS, args, _TRAIN_KEYS)
    train, test = _prepare_data(params)
    record = pipeline.train_semisupervised(_train_config(params), train, test)
    out = _run_dir("train", params)
    pipeline.save_run(record, out, {"command": "train", "params": params})
    unlabeled_ids = np.flatnonzero(~train.labeled_mask)
    if unlabeled_ids.size and np.all(train.labels[unlabeled_ids] >= 0):
        datasets.save_csv(train.subset(unlabeled_ids), out / "train_unlabeled.csv")
    if test is not None:
        datasets.save_csv(test, out / "test.csv")
    print(f"run directory: {out}")
    return 0


def cmd_eval(args) -> int:
    defaults = {"checkpoint": None, "data": None, "bins": metrics.DEFAULT_ECE_BINS, "out": "metrics.json"}
    params = _resolve(defaults, args, tuple(defaults))
    if not params["checkpoint"] or not params["data"]:
        raise DataError("eval needs a checkpoint and a data file")
    model = numerics.load_checkpoint(params["checkpoint"])
    sample_set = datasets.load_csv(params["data"])
    report = pipeline.evaluate(model, sample_set, n_bins=int(params["bins"]))
    out = Path(params["out"])
    report.to_json(out)
    _write_manifest(Path(str(out) + ".manifest.json"), "eval", params)
    print(f"wrote {out}")
    return 0


def cmd_gap(args) -> int:
    params = _resolve(_TRAIN_DEFAULTS, args, _TRAIN_KEYS)
    train, test = _prepare_data(params)
    rows = pipeline.gap_experiment(_train_config(params), train, test)
    out = _run_dir("gap", params)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(out / "config.json", "gap", params)
    columns = (
        "arm",
        "aurc_softmax",
        "e_aurc_softmax",
        "aurc_consistency",
        "e_aurc_consistency",
        "diff_aurc",
        "diff_e_aurc",
    )
    with (out / "gap.csv").open("w", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(
                ",".join(
                    [row["arm"]] + [format(row[c], ".17g") for c in columns[1:]]
                )
                + "\n"
            )
    print(f"run directory: {out}")
    return 0


def cmd_sweep(args) -> int:
    params = _resolve(_TRAIN_DEFAULTS, args, _TRAIN_KEYS)
    train, test = _prepare_data(params)
    unlabeled_ids = np.flatnonzero(~train.labeled_mask)
    if unlabeled_ids.size == 0 or np.any(train.labels[unlabeled_ids] < 0):
        raise DataError("the sweep needs unlabeled rows with oracle labels")
    record = pipeline.train_semisupervised(_train_config(params, record_history=True), train, test)
    rows = metrics.surrogate_quality_sweep(
        record.prediction_history[:, unlabeled_ids],
        record.confidence_history[:, unlabeled_ids],
        train.labels[unlabeled_ids],
    )
    out = _run_dir("sweep", params)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(out / "config.json", "sweep", params)
    metrics.sweep_to_csv(rows, out / "sweep.csv")
    print(f"run directory: {out}")
    return 0


def cmd_active(args) -> int:
    defaults = dict(_TRAIN_DEFAULTS)
    defaults.update({"stages": 5, "query_size": 50, "strategy": "least_confidence"})
    keys = tuple(defaults)
    params = _resolve(defaults, args, keys)
    train, test = _prepare_data(params)
    if test is None:
        raise DataError("active learning needs a test set (--test or a fully labeled file)")
    config = active_mod.ActiveConfig(
        stages=int(params["stages"]),
        query_size=int(params["query_size"]),
        strategy=params["strategy"],
        train=_train_config(params),
        seed=int(params["seed"]),
    )
    results = active_mod.run_active(config, train, test)
    out = _run_dir("active", params)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(out / "config.json", "active", params)
    active_mod.stages_to_csv(results, params["strategy"], out / "stages.csv")
    print(f"run directory: {out}")
    return 0


def cmd_certify(args) -> int:
    defaults = {
        "instances": 500,
        "max_m": theory.DEFAULT_ENUMERATION_CAP,
        "max_classes": 3,
        "seed": 0,
        "jobs": 1,
        "out": "certificates.jsonl",
    }
    params = _resolve(defaults, args, tuple(defaults))
    certificates = theory.certification_campaign(
        int(params["instances"]),
        seed=int(params["seed"]),
        max_m=int(params["max_m"]),
        max_classes=int(params["max_classes"]),
        jobs=int(params["jobs"]),
    )
    out = Path(params["out"])
    theory.certificates_to_jsonl(certificates, out)
    _write_manifest(Path(str(out) + ".manifest.json"), "certify", params)
    violations = sum(1 for cert in certificates if not cert.holds)
    print(f"instances: {len(certificates)}  violations: {violations}")
    return 0


# ---------------------------------------------------------------- parser wiring

def _add_train_flags(sub) -> None:
    sub.add_argument("data", nargs="?", default=None, help="training CSV (id,label,f0,...)")
    sub.add_argument("--test", default=None, help="separate test CSV")
    sub.add_argument("--labeled-frac", dest="labeled_frac", type=float, default=None)
    sub.add_argument("--test-frac", dest="test_frac", type=float, default=None)
    sub.add_argument("--lambda1", type=float, default=None, help="correctness ranking weight")
    sub.add_argument("--lambda2", type=float, default=None, help="consistency ranking weight")
    sub.add_argument("--epochs", type=int, default=None)
    sub.add_argument("--batch-labeled", dest="batch_labeled", type=int, default=None)
    sub.add_argument("--batch-unlabeled", dest="batch_unlabeled", type=int, default=None)
    sub.add_argument("--hidden", type=_parse_hidden, default=None, help="e.g. 32,32")
    sub.add_argument("--activation", choices=("relu", "tanh"), default=None)
    sub.add_argument(
        "--lr-schedule", dest="lr_schedule", type=_parse_schedule, default=None,
        help="e.g. 1:0.1,150:0.01,250:0.001",
    )
    sub.add_argument("--momentum", type=float, default=None)
    sub.add_argument("--weight-decay", dest="weight_decay", type=float, default=None)
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--bins", type=int, default=None, help="ECE bin count")
    sub.add_argument("--out-dir", dest="out_dir", default=None)
    sub.add_argument("--config", default=None, help="JSON config/manifest; flags override it")


def build_parser() -> _Parser:
    parser = _Parser(prog="conrank", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen", help="generate synthetic datasets")
    gen_kinds = gen.add_subparsers(dest="kind", required=True)
    blobs = gen_kinds.add_parser("blobs")
    blobs.add_argument("--classes", type=int, default=None)
    blobs.add_argument("--per-class", dest="per_class", type=int, default=None)
    blobs.add_argument("--dim", type=int, default=None)
    blobs.add_argument("--sep", type=float, default=None)
    moons = gen_kinds.add_parser("moons")
    moons.add_argument("--n", type=int, default=None)
    moons.add_argument("--noise", type=float, default=None)
    ood = gen_kinds.add_parser("ood")
    ood.add_argument("--dim", type=int, default=None)
    ood.add_argument("--n", type=int, default=None)
    ood.add_argument("--shift", type=float, default=None)
    for sub in (blobs, moons, ood):
        sub.add_argument("--seed", type=int, default=None)
        sub.add_argument("--out", default=None)
        sub.add_argument("--config", default=None)
        sub.set_defaults(func=cmd_gen)

    train = commands.add_parser("train", help="semi-supervised training run")
    _add_train_flags(train)
    train.set_defaults(func=cmd_train)

    evaluate = commands.add_parser("eval", help="evaluate a checkpoint on a CSV")
    evaluate.add_argument("checkpoint", nargs="?", default=None)
    evaluate.add_argument("data", nargs="?", default=None)
    evaluate.add_argument("--bins", type=int, default=None)
    evaluate.add_argument("--out", default=None)
    evaluate.add_argument("--config", default=None)
    evaluate.set_defaults(func=cmd_eval)

    gap = commands.add_parser("gap", help="ranking-gap experiment (two arms)")
    _add_train_flags(gap)
    gap.set_defaults(func=cmd_gap)

    sweep = commands.add_parser("sweep", help="surrogate quality sweep over epochs")
    _add_train_flags(sweep)
    sweep.set_defaults(func=cmd_sweep)

    active = commands.add_parser("active", help="staged active-learning simulation")
    _add_train_flags(active)
    active.add_argument("--stages", type=int, default=None)
    active.add_argument("--query-size", dest="query_size", type=int, default=None)
    active.add_argument("--strategy", choices=active_mod.STRATEGIES, default=None)
    active.set_defaults(func=cmd_active)

    certify = commands.add_parser("certify", help="randomized bound-certification campaign")
    certify.add_argument("--instances", type=int, default=None)
    certify.add_argument("--max-m", dest="max_m", type=int, default=None)
    certify.add_argument("--max-classes", dest="max_classes", type=int, default=None)
    certify.add_argument("--seed", type=int, default=None)
    certify.add_argument("--jobs", type=int, default=None)
    certify.add_argument("--out", default=None)
    certify.add_argument("--config", default=None)
    certify.set_defaults(func=cmd_certify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
