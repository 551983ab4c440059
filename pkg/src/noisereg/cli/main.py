"""``noisereg`` command line: train, gap, augment, verify, sweep.

Exit status: 0 success (every selected verification passed), 1 a
verification failed or training diverged, 2 configuration error, 3 I/O
error.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .. import __version__, tasks, verify
from ..augment import NoiseSpec, generate_batch
from ..experiment import Dataset, Memorizer, TrainConfig, TrainingDiverged, gap_estimate, gap_exact, train
from ..net import LayerParams, Loss, NetworkParams
from ..numkit import RandomStream
from .config import ConfigError, ExperimentConfig, parse_config, validate_config
from .dataio import DatasetError, dataset_rows, load_dataset_csv, write_csv
from .report import emit_report

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
SUBCOMMANDS = ("train", "gap", "augment", "verify", "sweep")

log = logging.getLogger("noisereg")


class RunError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def load_data(config: ExperimentConfig, seed: int) -> Dataset:
    t = config.task
    if t.name is not None:
        params = {k: int(v) if float(v).is_integer() else v for k, v in t.params.items()}
        try:
            return tasks.load_task(t.name, seed=seed, **params)
        except TypeError as exc:
            raise RunError(f"task.params: {exc}", EXIT_CONFIG) from None
    try:
        return load_dataset_csv(t.path)
    except OSError as exc:
        raise RunError(f"cannot read dataset {t.path}: {exc}", EXIT_IO) from None
    except DatasetError as exc:
        raise RunError(str(exc), EXIT_IO) from None


def _check_shapes(config: ExperimentConfig, data: Dataset):
    w = config.network.widths
    if data.x.shape[1] != w[0] or data.y.shape[1] != w[-1]:
        raise RunError(
            f"network.widths: input/output widths {w[0]}/{w[-1]} do not match the data "
            f"({data.x.shape[1]} inputs, {data.y.shape[1]} labels)",
            EXIT_CONFIG,
        )


def _train(config: ExperimentConfig, data: Dataset, seed: int):
    _check_shapes(config, data)
    tc = config.train_config(seed)
    if config.train.augment:
        tc = _with_augmentation(tc, config, data)
    try:
        return train(tc, data, config.network.build())
    except TrainingDiverged as exc:
        raise RunError(str(exc), EXIT_FAILED) from None
    except ValueError as exc:
        raise RunError(str(exc), EXIT_CONFIG) from None


def _with_augmentation(tc, config, data):
    try:
        return replace(tc, augmentation=config.augment_spec(data.decoder))
    except ValueError as exc:
        raise RunError(f"augmentation: {exc}", EXIT_CONFIG) from None


def _layer_dict(l: LayerParams) -> dict:
    return {"W": l.W.tolist(), "b": l.b.tolist(), "activation": l.activation.value}


def _gap_dict(g, seed) -> dict:
    return {"estimator": g.estimator, "train_loss": g.train_loss, "eval_loss": g.eval_loss, "gap": g.gap, "seed": seed}


def run_train(config: ExperimentConfig, seed: int) -> dict:
    data = load_data(config, seed)
    result = _train(config, data, seed)
    return {
        "run_id": f"train-{seed}",
        "seed": seed,
        "losses": result.losses,
        "params": [_layer_dict(l) for l in result.params.layers],
        "gaps": [],
        "verifications": [],
    }


def run_gap(config: ExperimentConfig, seed: int) -> dict:
    data = load_data(config, seed)
    for split in ("train", "val"):
        if data.count(split) == 0:
            raise RunError(f"gap needs a nonempty '{split}' split; dataset has none", EXIT_CONFIG)
    losses = []
    if config.gap.model == "memorizer":
        x, _, y = data.part("train")
        model = Memorizer(x, y)
    else:
        result = _train(config, data, seed)
        model, losses = result.params, result.losses
    kind = config.train.loss
    gaps = [_gap_dict(gap_estimate(model, data, kind), seed)]
    if data.full_domain:
        gaps.append(_gap_dict(gap_exact(model, data, kind), seed))
    return {"run_id": f"gap-{seed}", "seed": seed, "losses": losses, "gaps": gaps, "verifications": []}


def run_augment(config: ExperimentConfig, seed: int, out):
    if config.augmentation is None:
        raise RunError("augment needs an 'augmentation' block", EXIT_CONFIG)
    data = load_data(config, seed)
    try:
        spec = config.augment_spec(data.decoder)
        count = config.augmentation.count or len(data)
        batch = generate_batch(data.x, data.y, spec, count, RandomStream(seed).split("augment"), z=data.z)
    except ValueError as exc:
        raise RunError(f"augmentation: {exc}", EXIT_CONFIG) from None
    idx = np.array([s.origin_index for s in batch], dtype=int)
    aug = Dataset(
        np.array([s.x_hat for s in batch]).reshape(len(batch), data.x.shape[1]),
        np.array([s.y for s in batch]).reshape(len(batch), data.y.shape[1]),
        data.split[idx],
        z=None if data.z is None else data.z[idx],
    )
    header, rows = dataset_rows(aug, {"origin_index": idx.tolist(), "provenance": [s.provenance for s in batch]})
    if out is None:
        sys.stdout.write("\n".join(",".join(r) for r in [header] + rows) + "\n")
        return
    try:
        write_csv(out, header, rows)
    except OSError as exc:
        raise RunError(f"cannot write {out}: {exc}", EXIT_IO) from None


def run_verifications(config: ExperimentConfig, seed: int) -> list:
    root = RandomStream(seed)
    out = []
    for k, item in enumerate(config.verify):
        s = root.split(("verify", k, item.name))
        report = _run_one(item, s, seed)
        d = report.to_dict()
        d["seed"] = seed
        out.append(d)
        log.info("%s: %s (discrepancy %.6g, tolerance %.6g)", item.name, "pass" if report.passed else "FAIL",
                 report.discrepancy, report.tolerance)
    return out


def _run_one(item, s: RandomStream, seed: int):
    name = item.name
    if name == "dropout_reduction":
        return verify.verify_dropout_reduction(item.n_cases, s, item.max_dim)
    if name == "gradients":
        return verify.verify_gradients(item.n_nets, s, item.tol)
    if name == "mask_count":
        return verify.verify_mask_count(item.max_units)
    if name == "memorizer_gap":
        return verify.verify_memorizer_gap(tuple(item.domains))
    if name == "bishop":
        return verify.verify_bishop(item.w, item.x, [item.t], item.sigma, item.n_mc, s)
    if name == "dropout_noise":
        layer = verify.random_layer(s.split("layer"), item.max_dim)
        y = s.split("input").uniform01(layer.in_dim) * 2 - 1
        return verify.verify_dropout_as_noise(layer, y, item.p, item.n_trials, s.split("masks"))
    if name == "l2_vs_noise":
        alpha = item.sigma**2 if item.alpha is None else item.alpha
        cfg = TrainConfig(eta=item.eta, epochs=item.epochs, minibatch_size=item.minibatch_size, seed=seed)
        return verify.verify_l2_vs_noise_training(tasks.linreg2d(seed), item.sigma, alpha, cfg, item.tolerance)
    if name == "scheme_check":
        return verify.verify_scheme_check(item.n_seeds)
    setup = verify.FeatureNoiseSetup(
        hidden=item.hidden,
        noise=NoiseSpec(item.mode, item.dist.build()),
        config=TrainConfig(eta=item.eta, epochs=item.epochs, minibatch_size=item.minibatch_size, loss=Loss.BCE),
    )
    return verify.verify_feature_noise_regularizes(item.n_seeds, setup)


def run_verify(config: ExperimentConfig, seed: int) -> dict:
    return {"run_id": f"verify-{seed}", "seed": seed, "losses": [], "gaps": [],
            "verifications": run_verifications(config, seed)}


def _set_path(d: dict, path: str, value):
    keys = path.split(".")
    cur = d
    for k in keys[:-1]:
        if not isinstance(cur, dict) or cur.get(k) is None:
            raise ConfigError([f"sweep.overrides.{path}: no such config key {k!r}"])
        cur = cur[k]
    if not isinstance(cur, dict) or keys[-1] not in cur:
        raise ConfigError([f"sweep.overrides.{path}: no such config key {keys[-1]!r}"])
    cur[keys[-1]] = value


def sweep_points(config: ExperimentConfig) -> list:
    """``(label, config)`` for every combination of overrides, validated up front."""
    overrides = config.sweep.overrides
    names = sorted(overrides)
    points = []
    for combo in itertools.product(*(overrides[n] for n in names)):
        data = config.model_dump(mode="json")
        data["sweep"] = None
        for name, value in zip(names, combo):
            _set_path(data, name, value)
        label = ",".join(f"{n}={json.dumps(v)}" for n, v in zip(names, combo))
        points.append((label, validate_config(data)))
    return points


def _sweep_job(args):
    idx, label, config_json, seed = args
    config = ExperimentConfig.model_validate_json(config_json)
    run = run_train(config, seed)
    data = load_data(config, seed)
    if data.count("val"):
        params = NetworkParams(
            tuple(LayerParams(np.array(l["W"]), np.array(l["b"]), l["activation"]) for l in run["params"])
        )
        run["gaps"].append(_gap_dict(gap_estimate(params, data, config.train.loss), seed))
    if config.verify:
        run["verifications"] = run_verifications(config, seed)
    run["run_id"] = f"sweep-{idx}-{seed}"
    run["overrides"] = label
    return run


def run_sweep(config: ExperimentConfig, jobs: int) -> list:
    if config.sweep is None:
        raise RunError("sweep needs a 'sweep' block", EXIT_CONFIG)
    points = sweep_points(config)
    work = [(i, label, cfg.model_dump_json(), seed) for i, (label, cfg) in enumerate(points) for seed in config.sweep.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_sweep_job, work))
    else:
        runs = [_sweep_job(w) for w in work]
    return runs


def run(subcommand: str, config: ExperimentConfig, seed: int | None = None, out=None, fmt: str | None = None,
        jobs: int = 1) -> int:
    """Execute one subcommand; returns the process exit status."""
    seed = config.seed if seed is None else seed
    out = config.output.path if out is None else out
    fmt = fmt or config.output.format
    started = time.perf_counter()
    try:
        if subcommand == "augment":
            run_augment(config, seed, out)
            return EXIT_OK
        if subcommand == "train":
            runs = [run_train(config, seed)]
        elif subcommand == "gap":
            runs = [run_gap(config, seed)]
        elif subcommand == "verify":
            runs = [run_verify(config, seed)]
        elif subcommand == "sweep":
            runs = run_sweep(config, jobs)
        else:
            raise RunError(f"unknown subcommand {subcommand!r}", EXIT_CONFIG)
    except RunError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    report = {
        "schema_version": 1,
        "artifact_version": __version__,
        "subcommand": subcommand,
        "seed": seed,
        "config": config.model_dump(mode="json"),
        "runs": runs,
    }
    if config.report.include_timing:
        report["wall_clock_s"] = time.perf_counter() - started
    try:
        emit_report(report, fmt, out)
    except OSError as exc:
        print(f"error: cannot write report to {out}: {exc}", file=sys.stderr)
        return EXIT_IO
    failed = [v["claim"] for r in runs for v in r.get("verifications", []) if not v["passed"]]
    if failed:
        print(f"verification failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noisereg", description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", help="output path (default: config output.path, else stdout)")
    parser.add_argument("--format", choices=("json", "csv"), help="report format")
    parser.add_argument("--jobs", type=int, default=1, help="concurrent sweep jobs")
    parser.add_argument("-v", "--verbose", action="store_true", help="log one line per epoch")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(name)s: %(message)s")
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        config = parse_config(text)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("config error: --seed must be a 64-bit unsigned integer", file=sys.stderr)
        return EXIT_CONFIG
    return run(args.subcommand, config, args.seed, args.out, args.format, max(1, args.jobs))
