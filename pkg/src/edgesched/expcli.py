"""Experiment harness: INI config sections to averaged accuracy curves in CSV.

Each config section describes one experiment: a dataset, a base simulation
setup, a sweep axis with its values, the policies to compare and the trial
count.  Results land in ``<out>/<section>.csv`` with the fixed column set
``sweep_value,policy,round,mean_accuracy,std_accuracy,trials``.

Any key can be overridden through the environment as ``EDGESCHED_<KEY>``
(uppercased), which applies to every section.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataio import (
    Dataset,
    binary_subset,
    load_digits_dataset,
    load_idx,
    multiclass_subset,
    synthetic_gaussian,
    train_test_split,
)
from .probcls import OptimizerConfig
from .scheduler import Policy
from .simkit import SimConfig, run_experiment
from .svm import SvmConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATASET = 3

SWEEP_AXES = (
    "budget",
    "device_count",
    "buffer_size",
    "refresh_per_slot",
    "replaced_users_per_slot",
    "transmit_snr_db",
    "compression_ratio",
)

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class ConfigError(Exception):
    """Config text cannot be turned into a runnable experiment."""


class DatasetNotFoundError(Exception):
    """Referenced dataset files are absent."""


@dataclass(frozen=True)
class ExperimentSpec:
    """One fully resolved config section."""

    name: str
    base: SimConfig
    sweep: str | None
    values: tuple
    policies: tuple[Policy, ...]
    trials: int
    dataset: str = "digits"
    classes: tuple = (3, 5)
    mnist_dir: str | None = None
    test_fraction: float = 0.4
    split_seed: int = 7
    synth_dim: int = 4
    synth_scale: float = 1.0
    synth_count: int = 400
    synth_separation: float = 2.0


_CASTS = {
    "sweep": str,
    "values": str,
    "policies": str,
    "trials": int,
    "dataset": str,
    "classes": str,
    "mnist_dir": str,
    "test_fraction": float,
    "split_seed": int,
    "synth_dim": int,
    "synth_scale": float,
    "synth_count": int,
    "synth_separation": float,
    "device_count": int,
    "buffer_size": int,
    "refresh_per_slot": int,
    "replaced_users_per_slot": int,
    "transmit_snr_db": float,
    "noise_variance": float,
    "budget": int,
    "learner": str,
    "compression_ratio": float,
    "seed": int,
    "initial_per_class": int,
    "hidden_units": int,
    "retrain_stride": int,
    "eval_stride": int,
    "svm_tradeoff": float,
    "svm_tolerance": float,
    "svm_max_iterations": int,
    "opt_step_size": float,
    "opt_momentum": float,
    "opt_epochs": int,
}


def _parse_value(name: str, key: str, raw: str, cast):
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"[{name}] {key}: cannot parse {raw!r} as {cast.__name__}") from exc


def _split_list(raw: str) -> list[str]:
    return [item for item in raw.replace(",", " ").split() if item]


def _parse_section(name: str, raw: dict[str, str]) -> ExperimentSpec:
    unknown = sorted(set(raw) - set(_CASTS))
    if unknown:
        raise ConfigError(f"[{name}] unknown keys: {', '.join(unknown)}")
    values = {k: _parse_value(name, k, v, _CASTS[k]) for k, v in raw.items()}

    snr_db = values.pop("transmit_snr_db", 15.0)
    noise = values.pop("noise_variance", 1.0)
    base = SimConfig(
        device_count=values.pop("device_count", 10),
        buffer_size=values.pop("buffer_size", 10),
        refresh_per_slot=values.pop("refresh_per_slot", 1),
        replaced_users_per_slot=values.pop("replaced_users_per_slot", 0),
        transmit_power=noise * 10.0 ** (snr_db / 10.0),
        noise_variance=noise,
        budget=values.pop("budget", 100),
        learner=values.pop("learner", "svm"),
        compression_ratio=values.pop("compression_ratio", 1.0),
        seed=values.pop("seed", 0),
        initial_per_class=values.pop("initial_per_class", 2),
        hidden_units=values.pop("hidden_units", 0),
        retrain_stride=values.pop("retrain_stride", 1),
        eval_stride=values.pop("eval_stride", 1),
        svm=SvmConfig(
            tradeoff=values.pop("svm_tradeoff", 1.0),
            tolerance=values.pop("svm_tolerance", 1e-3),
            max_iterations=values.pop("svm_max_iterations", 1_000_000),
        ),
        optimizer=OptimizerConfig(
            step_size=values.pop("opt_step_size", 0.05),
            momentum=values.pop("opt_momentum", 0.9),
            epochs=values.pop("opt_epochs", 120),
        ),
    )

    sweep = values.pop("sweep", None)
    if sweep is not None and sweep not in SWEEP_AXES:
        raise ConfigError(f"[{name}] sweep: {sweep!r} is not one of {', '.join(SWEEP_AXES)}")
    raw_values = values.pop("values", None)
    if sweep is None:
        sweep_values: tuple = (None,)
        if raw_values is not None:
            raise ConfigError(f"[{name}] values given without a sweep axis")
    else:
        if raw_values is None:
            raise ConfigError(f"[{name}] sweep {sweep!r} needs a values list")
        caster = float if sweep in ("transmit_snr_db", "compression_ratio") else int
        sweep_values = tuple(
            _parse_value(name, "values", item, caster) for item in _split_list(raw_values)
        )
        if not sweep_values:
            raise ConfigError(f"[{name}] values list is empty")

    policy_names = _split_list(values.pop("policies", Policy.IMPORTANCE_AWARE.value))
    policies = []
    for pname in policy_names:
        try:
            policies.append(Policy(pname))
        except ValueError:
            legal = ", ".join(p.value for p in Policy)
            raise ConfigError(f"[{name}] policies: {pname!r} is not one of {legal}") from None

    dataset = values.pop("dataset", "digits")
    if dataset not in ("digits", "mnist", "synthetic"):
        raise ConfigError(f"[{name}] dataset: {dataset!r} is not digits, mnist or synthetic")
    classes_raw = values.pop("classes", "3 5")
    classes = tuple(_parse_value(name, "classes", c, int) for c in _split_list(classes_raw))
    if len(classes) < 2:
        raise ConfigError(f"[{name}] classes: need at least two, got {classes}")

    spec = ExperimentSpec(
        name=name,
        base=base,
        sweep=sweep,
        values=sweep_values,
        policies=tuple(policies),
        trials=values.pop("trials", 10),
        dataset=dataset,
        classes=classes,
        mnist_dir=values.pop("mnist_dir", None),
        test_fraction=values.pop("test_fraction", 0.4),
        split_seed=values.pop("split_seed", 7),
        synth_dim=values.pop("synth_dim", 4),
        synth_scale=values.pop("synth_scale", 1.0),
        synth_count=values.pop("synth_count", 400),
        synth_separation=values.pop("synth_separation", 2.0),
    )
    if spec.trials < 1:
        raise ConfigError(f"[{name}] trials must be at least 1")
    for policy in spec.policies:
        try:
            replace(base, policy=policy).validate()
        except ValueError as exc:
            raise ConfigError(f"[{name}] {exc}") from exc
    return spec


def parse_config(text: str, env: dict[str, str] | None = None) -> list[ExperimentSpec]:
    """Parse config text into specs, applying ``EDGESCHED_*`` environment overrides."""
    env = os.environ if env is None else env
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from exc
    if not parser.sections():
        raise ConfigError("config defines no experiment sections")
    overrides = {
        key: env[f"EDGESCHED_{key.upper()}"]
        for key in _CASTS
        if f"EDGESCHED_{key.upper()}" in env
    }
    specs = []
    for section in parser.sections():
        raw = dict(parser[section])
        raw.update(overrides)
        specs.append(_parse_section(section, raw))
    return specs


def render_config(specs: list[ExperimentSpec]) -> str:
    """Inverse of :func:`parse_config` up to default filling."""
    parser = configparser.ConfigParser()
    for spec in specs:
        base = spec.base
        snr_db = 10.0 * np.log10(base.transmit_power / base.noise_variance)
        section = {
            "policies": " ".join(p.value for p in spec.policies),
            "trials": str(spec.trials),
            "dataset": spec.dataset,
            "classes": " ".join(str(c) for c in spec.classes),
            "test_fraction": repr(spec.test_fraction),
            "split_seed": str(spec.split_seed),
            "device_count": str(base.device_count),
            "buffer_size": str(base.buffer_size),
            "refresh_per_slot": str(base.refresh_per_slot),
            "replaced_users_per_slot": str(base.replaced_users_per_slot),
            "transmit_snr_db": repr(float(snr_db)),
            "noise_variance": repr(base.noise_variance),
            "budget": str(base.budget),
            "learner": base.learner,
            "compression_ratio": repr(base.compression_ratio),
            "seed": str(base.seed),
            "initial_per_class": str(base.initial_per_class),
            "hidden_units": str(base.hidden_units),
            "retrain_stride": str(base.retrain_stride),
            "eval_stride": str(base.eval_stride),
            "svm_tradeoff": repr(base.svm.tradeoff),
            "svm_tolerance": repr(base.svm.tolerance),
            "svm_max_iterations": str(base.svm.max_iterations),
            "opt_step_size": repr(base.optimizer.step_size),
            "opt_momentum": repr(base.optimizer.momentum),
            "opt_epochs": str(base.optimizer.epochs),
            "synth_dim": str(spec.synth_dim),
            "synth_scale": repr(spec.synth_scale),
            "synth_count": str(spec.synth_count),
            "synth_separation": repr(spec.synth_separation),
        }
        if spec.mnist_dir is not None:
            section["mnist_dir"] = spec.mnist_dir
        if spec.sweep is not None:
            section["sweep"] = spec.sweep
            section["values"] = " ".join(repr(v) if isinstance(v, float) else str(v) for v in spec.values)
        parser[spec.name] = section
    out = []
    for name in parser.sections():
        out.append(f"[{name}]")
        out.extend(f"{k} = {v}" for k, v in parser[name].items())
        out.append("")
    return "\n".join(out)


def apply_sweep(cfg: SimConfig, axis: str, value) -> SimConfig:
    if axis == "transmit_snr_db":
        return replace(cfg, transmit_power=cfg.noise_variance * 10.0 ** (value / 10.0))
    if axis in SWEEP_AXES:
        return replace(cfg, **{axis: value})
    raise ValueError(f"unknown sweep axis {axis!r}")


def build_datasets(spec: ExperimentSpec) -> tuple[Dataset, Dataset]:
    """Materialize (train, test) for a spec; binary when exactly two classes."""
    if spec.dataset == "synthetic":
        dim = spec.synth_dim
        offsets = np.linspace(-1.0, 1.0, len(spec.classes)) * spec.synth_separation / 2.0
        means = np.zeros((len(spec.classes), dim))
        means[:, 0] = offsets
        counts = [spec.synth_count] * len(spec.classes)
        rng = np.random.default_rng(spec.split_seed)
        train = synthetic_gaussian(means, spec.synth_scale, counts, rng)
        test = synthetic_gaussian(means, spec.synth_scale, counts, rng)
        if len(spec.classes) == 2:
            train = Dataset(train.features, np.where(train.labels == 1, 1, -1), 2)
            test = Dataset(test.features, np.where(test.labels == 1, 1, -1), 2)
        return train, test

    if spec.dataset == "mnist":
        if spec.mnist_dir is None:
            raise DatasetNotFoundError("mnist dataset requested but mnist_dir is not set")
        root = Path(spec.mnist_dir)
        paths = {
            split: (root / images, root / labels)
            for split, (images, labels) in MNIST_FILES.items()
        }
        missing = [str(p) for pair in paths.values() for p in pair if not p.exists()]
        if missing:
            raise DatasetNotFoundError(f"missing dataset files: {', '.join(missing)}")
        train = load_idx(*paths["train"], split="train")
        test = load_idx(*paths["test"], split="test")
        if len(spec.classes) == 2:
            return binary_subset(train, *spec.classes), binary_subset(test, *spec.classes)
        return multiclass_subset(train, spec.classes), multiclass_subset(test, spec.classes)

    full = load_digits_dataset()
    if len(spec.classes) == 2:
        full = binary_subset(full, *spec.classes)
    else:
        full = multiclass_subset(full, spec.classes)
    rng = np.random.default_rng(spec.split_seed)
    return train_test_split(full, spec.test_fraction, rng)


def run_spec(spec: ExperimentSpec, out_dir, max_workers: int = 1) -> Path:
    """Run every (sweep value, policy) combination and write one CSV."""
    train, test = build_datasets(spec)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / f"{spec.name}.csv"
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sweep_value", "policy", "round", "mean_accuracy", "std_accuracy", "trials"])
        for value in spec.values:
            cfg = spec.base if value is None else apply_sweep(spec.base, spec.sweep, value)
            curves = run_experiment(cfg, train, test, spec.trials, list(spec.policies), max_workers)
            for policy in spec.policies:
                stats = curves[policy]
                for round_index in range(len(stats.mean)):
                    writer.writerow(
                        [
                            "" if value is None else value,
                            policy.value,
                            round_index + 1,
                            repr(float(stats.mean[round_index])),
                            repr(float(stats.std[round_index])),
                            stats.trials,
                        ]
                    )
    return out_path


def budget_to_accuracy(csv_path, policy: Policy, target: float, sweep_value=None) -> int | None:
    """First round whose mean accuracy reaches ``target``, or None if never.

    ``sweep_value`` selects among swept runs; leave it None for unswept CSVs.
    """
    rows = []
    with open(csv_path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["policy"] != policy.value:
                continue
            if sweep_value is not None and (
                row["sweep_value"] == "" or float(row["sweep_value"]) != float(sweep_value)
            ):
                continue
            rows.append(row)
    if not rows:
        raise ValueError(f"no rows for policy {policy.value!r} in {csv_path}")
    seen = {row["sweep_value"] for row in rows}
    if sweep_value is None and len(seen) > 1:
        raise ValueError(f"multiple sweep values {sorted(seen)}; pass sweep_value")
    rows.sort(key=lambda row: int(row["round"]))
    for row in rows:
        if float(row["mean_accuracy"]) >= target:
            return int(row["round"])
    return None


def run_cli(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="edgesched",
        description="Run scheduling-policy experiments described by an INI config.",
    )
    parser.add_argument("--config", required=True, help="experiment config file")
    parser.add_argument("--out", default="results", help="output directory for CSV files")
    parser.add_argument("--seed", type=int, default=None, help="override every section's seed")
    parser.add_argument("--trials", type=int, default=None, help="override every section's trials")
    parser.add_argument("--threads", type=int, default=1, help="worker processes per experiment")
    parser.add_argument("--list", action="store_true", help="list experiment sections and exit")
    args = parser.parse_args(argv)

    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        specs = parse_config(text)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.list:
        for spec in specs:
            axis = f"{spec.sweep}={list(spec.values)}" if spec.sweep else "no sweep"
            print(f"{spec.name}: {spec.dataset} {spec.classes}, {axis}, trials={spec.trials}")
        return EXIT_OK

    for spec in specs:
        if args.seed is not None:
            spec = replace(spec, base=replace(spec.base, seed=args.seed))
        if args.trials is not None:
            spec = replace(spec, trials=args.trials)
        try:
            path = run_spec(spec, args.out, max_workers=max(1, args.threads))
        except DatasetNotFoundError as exc:
            print(f"dataset error: {exc}", file=sys.stderr)
            return EXIT_DATASET
        print(f"{spec.name}: wrote {path}")
    return EXIT_OK


def main() -> None:
    sys.exit(run_cli())
