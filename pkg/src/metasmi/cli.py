"""Experiment front-end: generate | train | evaluate | ablate | select.

Every run is fully described by one JSON config plus a seed, so results are
reproducible from a single artifact. Exit codes: 0 success, 2 configuration
error, 3 data error, 4 numeric divergence.
"""

from __future__ import annotations

import os

_threads = os.environ.get("METASMI_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .episodes import (
    EpisodeShape,
    SyntheticDataset,
    TEST,
    gen_synthetic,
    load_dataset,
    sample_episode,
    save_dataset,
    split_labeled,
)
from .errors import ConfigError, InputError, NumericError
from .kernel import read_kernel_csv
from .maximize import MaximizerKind
from .meta import MetaTestResult, Schedules, TrainConfig, derive_seed, meta_test, meta_train
from .net import ParamVector, load_params, save_params
from .select import Budget, per_class_select
from .smi import SetFunctionKind
from .strategy import parse_strategy

_SPLIT_TAG, _TEST_EP_TAG = 21, 22

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


@dataclass
class MetricsRecord:
    strategy: str
    rho: float
    ood_classes: int
    outer_selection: bool
    mean_acc: float
    ci95: float
    selection_label_match: float
    selection_in_dist: float
    wall_time_s: float
    seed: int


@dataclass
class DatasetConfig:
    seed: int = 1
    classes: int = 44
    dim: int = 32
    per_class: int = 320
    spread: float = 0.3
    class_counts: tuple[int, int, int] | None = (20, 12, 12)


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig
    rho: float
    episode_shape: EpisodeShape
    train: TrainConfig
    n_test_episodes: int
    ablate_ood_classes: list[int]
    ablate_strategies: list[str]
    out_dir: Path
    dataset_path: Path | None


def _section(doc: dict, key: str, allowed: set[str]) -> dict:
    sec = doc.pop(key, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"config section '{key}' must be an object")
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in '{key}': {sorted(unknown)}")
    return sec


def load_config(path, seed_override: int | None = None, out_override: str | None = None) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")

    ds = _section(doc, "dataset", {"seed", "classes", "dim", "per_class", "spread", "class_counts"})
    ep = _section(doc, "episode", {"way", "shot", "query_per_class", "unlabeled_per_class", "ood_classes"})
    tr = _section(
        doc,
        "train",
        {
            "alpha", "beta", "batch_tasks", "t_in", "t_out", "t_warm", "t_in_test",
            "iterations_per_epoch", "b_in", "b_out", "strategy", "confidence_threshold",
            "gc_lambda", "maximizer", "epsilon", "seed", "outer_selection",
            "n_val_episodes", "hidden",
        },
    )
    ev = _section(doc, "eval", {"n_test_episodes"})
    ab = _section(doc, "ablate", {"ood_classes", "strategies"})
    paths = _section(doc, "paths", {"out_dir", "dataset"})
    rho = doc.pop("rho", 0.05)
    if doc:
        raise ConfigError(f"unknown top-level config keys: {sorted(doc)}")

    counts = ds.get("class_counts", (20, 12, 12))
    dataset = DatasetConfig(
        seed=int(ds.get("seed", 1)),
        classes=int(ds.get("classes", 44)),
        dim=int(ds.get("dim", 32)),
        per_class=int(ds.get("per_class", 320)),
        spread=float(ds.get("spread", 0.3)),
        class_counts=tuple(int(c) for c in counts) if counts is not None else None,
    )
    shape = EpisodeShape(
        way=int(ep.get("way", 5)),
        shot=int(ep.get("shot", 1)),
        query_per_class=int(ep.get("query_per_class", 15)),
        unlabeled_per_class=int(ep.get("unlabeled_per_class", 50)),
        ood_classes=int(ep.get("ood_classes", 0)),
    )
    strategy = parse_strategy(
        str(tr.get("strategy", "flmi")),
        confidence_threshold=float(tr.get("confidence_threshold", 0.0)),
        gc_lambda=float(tr.get("gc_lambda", 1.0)),
    )
    maximizer = MaximizerKind(str(tr.get("maximizer", "naive")), float(tr.get("epsilon", 0.1)))
    seed = int(tr.get("seed", 0)) if seed_override is None else int(seed_override)
    train = TrainConfig(
        alpha=float(tr.get("alpha", 0.3)),
        beta=float(tr.get("beta", 0.01)),
        batch_tasks=int(tr.get("batch_tasks", 1)),
        schedules=Schedules(
            t_in=int(tr.get("t_in", 5)),
            t_out=int(tr.get("t_out", 60)),
            t_warm=int(tr.get("t_warm", 5)),
        ),
        budget=Budget(int(tr.get("b_in", 25)), int(tr.get("b_out", 50)), shape.way),
        strategy=strategy,
        maximizer=maximizer,
        seed=seed,
        iterations_per_epoch=int(tr.get("iterations_per_epoch", 100)),
        episode_shape=shape,
        t_in_test=int(tr.get("t_in_test", 10)),
        outer_selection=bool(tr.get("outer_selection", True)),
        n_val_episodes=int(tr.get("n_val_episodes", 20)),
        hidden=tuple(int(h) for h in tr.get("hidden", (64, 64))),
    )
    out_dir = Path(out_override if out_override is not None else paths.get("out_dir", "runs"))
    dataset_path = paths.get("dataset")
    return ExperimentConfig(
        dataset=dataset,
        rho=float(rho),
        episode_shape=shape,
        train=train,
        n_test_episodes=int(ev.get("n_test_episodes", 600)),
        ablate_ood_classes=[int(v) for v in ab.get("ood_classes", [0, 3, 5, 7])],
        ablate_strategies=[str(s) for s in ab.get("strategies", ["pseudo_label", "flmi", "gcmi"])],
        out_dir=out_dir,
        dataset_path=Path(dataset_path) if dataset_path else None,
    )


def build_dataset(cfg: ExperimentConfig) -> SyntheticDataset:
    ds = cfg.dataset
    raw = gen_synthetic(ds.seed, ds.classes, ds.dim, ds.per_class, ds.spread, ds.class_counts)
    return split_labeled(raw, cfg.rho, derive_seed(ds.seed, _SPLIT_TAG))


def obtain_dataset(cfg: ExperimentConfig) -> SyntheticDataset:
    """Load the configured dataset file when it exists, else build it in memory."""
    if cfg.dataset_path is not None and cfg.dataset_path.exists():
        return load_dataset(cfg.dataset_path, rho=cfg.rho, spread=cfg.dataset.spread,
                            seed=cfg.dataset.seed)
    return build_dataset(cfg)


def sample_test_episodes(dataset: SyntheticDataset, cfg: ExperimentConfig, n: int | None = None):
    n = cfg.n_test_episodes if n is None else n
    return [
        sample_episode(dataset, TEST, cfg.episode_shape, derive_seed(cfg.train.seed, _TEST_EP_TAG, k))
        for k in range(n)
    ]


def _write_metrics(records: list[MetricsRecord], csv_path: Path, jsonl_path: Path) -> None:
    fields = list(MetricsRecord.__dataclass_fields__)
    with open(csv_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for rec in records:
            w.writerow(asdict(rec))
    with open(jsonl_path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(asdict(rec)) + "\n")


def cmd_generate(cfg: ExperimentConfig) -> Path:
    dataset = build_dataset(cfg)
    path = cfg.dataset_path if cfg.dataset_path is not None else cfg.out_dir / "dataset.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(dataset, path)
    print(f"wrote {dataset.labels.size} points to {path}")
    return path


def cmd_train(cfg: ExperimentConfig) -> tuple[Path, Path]:
    dataset = obtain_dataset(cfg)
    theta, history = meta_train(cfg.train, dataset)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = cfg.out_dir / "checkpoint.json"
    hist = cfg.out_dir / "history.jsonl"
    save_params(theta, ckpt)
    with open(hist, "w") as fh:
        for rec in history:
            fh.write(json.dumps(rec) + "\n")
    if history:
        best = int(np.argmax([rec["val_accuracy"] for rec in history]))
        print(f"best validation accuracy {history[best]['val_accuracy']:.4f} at epoch {history[best]['epoch']}")
    print(f"checkpoint: {ckpt}")
    return ckpt, hist


def evaluate_checkpoint(
    theta: ParamVector, dataset: SyntheticDataset, cfg: ExperimentConfig
) -> tuple[MetricsRecord, MetaTestResult]:
    t0 = time.perf_counter()
    result = meta_test(theta, sample_test_episodes(dataset, cfg), cfg.train)
    wall = time.perf_counter() - t0
    strategy = cfg.train.strategy
    name = strategy.smi_kind.variant if strategy.smi_kind is not None else strategy.variant
    record = MetricsRecord(
        strategy=name,
        rho=cfg.rho,
        ood_classes=cfg.episode_shape.ood_classes,
        outer_selection=cfg.train.outer_selection,
        mean_acc=result.mean_acc,
        ci95=result.ci95,
        selection_label_match=result.selection_label_match,
        selection_in_dist=result.selection_in_dist,
        wall_time_s=wall,
        seed=cfg.train.seed,
    )
    return record, result


def cmd_evaluate(cfg: ExperimentConfig, checkpoint: Path) -> Path:
    dataset = obtain_dataset(cfg)
    theta = load_params(checkpoint)
    record, _ = evaluate_checkpoint(theta, dataset, cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    out = cfg.out_dir / "metrics.csv"
    _write_metrics([record], out, cfg.out_dir / "metrics.jsonl")
    print(f"{record.strategy}: {100 * record.mean_acc:.2f}% +/- {100 * record.ci95:.2f} -> {out}")
    return out


def cmd_ablate(cfg: ExperimentConfig) -> Path:
    """Grid over distractor counts x outer-selection toggle x strategies,
    sharing one seed so cells are paired."""
    dataset = obtain_dataset(cfg)
    records = []
    for ood in cfg.ablate_ood_classes:
        shape = replace(cfg.episode_shape, ood_classes=ood)
        for outer in (True, False):
            for name in cfg.ablate_strategies:
                strategy = parse_strategy(name)
                train = replace(
                    cfg.train, strategy=strategy, outer_selection=outer, episode_shape=shape
                )
                cell = replace(cfg, train=train, episode_shape=shape)
                t0 = time.perf_counter()
                theta, _ = meta_train(train, dataset)
                record, _ = evaluate_checkpoint(theta, dataset, cell)
                record.wall_time_s = time.perf_counter() - t0
                records.append(record)
                print(
                    f"ood={ood} outer={outer} {record.strategy}: "
                    f"{100 * record.mean_acc:.2f}%"
                )
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    out = cfg.out_dir / "ablation.csv"
    _write_metrics(records, out, cfg.out_dir / "ablation.jsonl")
    return out


def cmd_select(kernel_path, budget: int, function: str, maximizer: str, epsilon: float, out_path) -> Path:
    kernel = read_kernel_csv(kernel_path)
    classes = np.unique(kernel.row_class)
    if budget % classes.size:
        raise ConfigError(f"budget {budget} does not split over {classes.size} row classes")
    subset = per_class_select(
        kernel,
        np.arange(kernel.cols),
        budget // classes.size,
        SetFunctionKind(function),
        MaximizerKind(maximizer, epsilon),
    )
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pool_index", "label", "gain", "step"])
        for e in subset.entries:
            w.writerow([e.pool_index, e.label, repr(e.gain), e.step])
    print(f"selected {len(subset)} points -> {out_path}")
    return out_path


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="metasmi", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("generate", "train", "evaluate", "ablate"):
        q = sub.add_parser(name)
        q.add_argument("--config", required=True, help="experiment config JSON")
        q.add_argument("--seed", type=int, default=None, help="override train.seed")
        q.add_argument("--out", default=None, help="override paths.out_dir")
        if name == "evaluate":
            q.add_argument("--checkpoint", required=True)
    q = sub.add_parser("select")
    q.add_argument("--kernel", required=True, help="kernel CSV (row_class header)")
    q.add_argument("--budget", type=int, required=True, help="total budget across classes")
    q.add_argument("--function", default="flmi", choices=["fl", "gc", "flmi", "gcmi"])
    q.add_argument("--maximizer", default="lazy", choices=["naive", "lazy", "stochastic"])
    q.add_argument("--epsilon", type=float, default=0.1)
    q.add_argument("--out", required=True, help="output subset CSV")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "select":
            cmd_select(args.kernel, args.budget, args.function, args.maximizer, args.epsilon, args.out)
            return EXIT_OK
        cfg = load_config(args.config, seed_override=args.seed, out_override=args.out)
        if args.command == "generate":
            cmd_generate(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, Path(args.checkpoint))
        elif args.command == "ablate":
            cmd_ablate(cfg)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
