"""Experiment orchestration: repeated-split runs, reports, and alpha search.

A method is one of gcn-view1 / gcn-view2 / gcn-union / multi-gcn. Every
repeat r derives its seed as base_seed + r and drives the split sampler,
the centroid clustering, and the trainer from it, so a report is a pure
function of its configuration. Reports serialize to JSON with the
wall-clock measurements kept in a separate, non-canonical section.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .data import Dataset, load_dataset, make_split
from .fusion import FusionConfig, merge_views
from .gcn import LabeledSplit, TrainConfig, evaluate, train
from .graph import renormalized_propagation, union_views
from .ranking import MATRIX_MODES, RankingConfig, augment_graph

METHODS = ("gcn-view1", "gcn-view2", "gcn-union", "multi-gcn")
FEATURE_SOURCES = ("provided", "adjacency-view-1")


@dataclass(frozen=True)
class SplitSpec:
    per_class: int = 20
    val_size: int = 500
    test_size: int = 1000

    def __post_init__(self):
        if self.per_class < 1 or self.val_size < 0 or self.test_size < 1:
            raise ValueError("split sizes must be positive (val_size may be 0)")


@dataclass(frozen=True)
class FusionSpec:
    """Fusion knobs; k defaults to 2*C and alpha to 0.5 per view at run time."""

    k: int | None = None
    alphas: tuple | None = None

    def resolve(self, num_views: int, num_classes: int) -> FusionConfig:
        k = self.k if self.k is not None else 2 * num_classes
        if self.alphas is None:
            alphas = (0.5,) * num_views
        elif np.isscalar(self.alphas):
            alphas = (float(self.alphas),) * num_views
        else:
            alphas = tuple(float(a) for a in self.alphas)
        return FusionConfig(k=k, alphas=alphas)


@dataclass(frozen=True)
class RankingSpec:
    """Ranking knobs; the centroid count defaults to 10*C at run time."""

    beta: float = 0.99
    num_centroids: int | None = None
    add_per_centroid: int = 5
    prune_per_centroid: int = 5
    kmeans_restarts: int = 10
    matrix_mode: str = "laplacian"

    def resolve(self, num_classes: int, seed: int) -> RankingConfig:
        count = self.num_centroids if self.num_centroids is not None else 10 * num_classes
        return RankingConfig(
            num_centroids=count,
            beta=self.beta,
            add_per_centroid=self.add_per_centroid,
            prune_per_centroid=self.prune_per_centroid,
            kmeans_restarts=self.kmeans_restarts,
            seed=seed,
            matrix_mode=self.matrix_mode,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_dir: str
    method: str
    split: SplitSpec = SplitSpec()
    train: TrainConfig = TrainConfig()
    fusion: FusionSpec = FusionSpec()
    ranking: RankingSpec = RankingSpec()
    num_repeats: int = 10
    base_seed: int = 0
    feature_source: str = "provided"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.feature_source not in FEATURE_SOURCES:
            raise ValueError(
                f"feature_source must be one of {FEATURE_SOURCES}, got {self.feature_source!r}"
            )
        if self.num_repeats < 1:
            raise ValueError("num_repeats must be >= 1")
        if self.ranking.matrix_mode not in MATRIX_MODES:
            raise ValueError(f"unknown ranking matrix mode {self.ranking.matrix_mode!r}")


@dataclass
class ExperimentReport:
    method: str
    dataset_name: str
    num_repeats: int
    seeds: list
    accuracies: list  # test accuracy per successful repeat
    val_accuracies: list
    mean: float | None
    stderr: float | None
    partial: bool
    failures: list  # (repeat index, message) pairs
    config: dict
    resolved: dict
    stage_seconds: dict
    total_seconds: float
    created_at: str

    def canonical_dict(self) -> dict:
        """Everything that must be byte-identical across reruns."""
        return {
            "method": self.method,
            "dataset_name": self.dataset_name,
            "num_repeats": self.num_repeats,
            "seeds": self.seeds,
            "accuracies": self.accuracies,
            "val_accuracies": self.val_accuracies,
            "mean": self.mean,
            "stderr": self.stderr,
            "partial": self.partial,
            "failures": self.failures,
            "config": self.config,
            "resolved": self.resolved,
        }

    def canonical_json(self) -> str:
        return json.dumps(self.canonical_dict(), indent=2, sort_keys=True)

    def to_json(self) -> str:
        payload = {
            "report": self.canonical_dict(),
            "timing": {
                "stage_seconds": self.stage_seconds,
                "total_seconds": self.total_seconds,
                "created_at": self.created_at,
            },
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def write(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")


def write_repeat_csv(report: ExperimentReport, path) -> None:
    """Per-repeat detail: repeat, seed, test_acc, val_acc."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("repeat,seed,test_acc,val_acc\n")
        for i, (seed, acc, vacc) in enumerate(
            zip(report.seeds, report.accuracies, report.val_accuracies)
        ):
            fh.write(f"{i},{seed},{acc!r},{vacc!r}\n")


class _StageClock:
    def __init__(self):
        self.seconds = {}
        self._t0 = time.perf_counter()

    def stage(self, name):
        clock = self

        class _Timer:
            def __enter__(self):
                self.start = time.perf_counter()

            def __exit__(self, *exc):
                clock.seconds[name] = clock.seconds.get(name, 0.0) + (
                    time.perf_counter() - self.start
                )
                return False

        return _Timer()

    @property
    def total(self):
        return time.perf_counter() - self._t0


def _feature_matrix(d: Dataset, source: str) -> np.ndarray:
    if source == "provided":
        return d.X
    return d.graph.views[0].to_dense()


def _validate_method(d: Dataset, cfg: ExperimentConfig) -> None:
    if cfg.method == "gcn-view2" and d.graph.num_views < 2:
        raise ValueError("method gcn-view2 requires a dataset with at least two views")


def _static_method_graph(d: Dataset, method: str):
    if method == "gcn-view1":
        return d.graph.views[0]
    if method == "gcn-view2":
        return d.graph.views[1]
    if method == "gcn-union":
        return union_views(d.graph)
    return None  # multi-gcn builds its graph per repeat


def _resolved_echo(d: Dataset, cfg: ExperimentConfig) -> dict:
    resolved = {"feature_source": cfg.feature_source}
    if cfg.method == "multi-gcn":
        fusion = cfg.fusion.resolve(d.graph.num_views, d.num_classes)
        resolved["fusion_k"] = fusion.k
        resolved["fusion_alphas"] = list(fusion.alphas)
        ranking = cfg.ranking.resolve(d.num_classes, cfg.base_seed)
        resolved["num_centroids"] = ranking.num_centroids
        resolved["beta"] = ranking.beta
        resolved["matrix_mode"] = ranking.matrix_mode
    return resolved


def _config_echo(cfg: ExperimentConfig) -> dict:
    echo = asdict(cfg)
    if echo["fusion"]["alphas"] is not None:
        echo["fusion"]["alphas"] = [float(a) for a in np.atleast_1d(cfg.fusion.alphas)]
    return echo


def _run_repeats(d: Dataset, cfg: ExperimentConfig, splits_with_seeds) -> ExperimentReport:
    clock = _StageClock()
    _validate_method(d, cfg)

    static_graph = _static_method_graph(d, cfg.method)
    merged = None
    a_hat_static = None
    with clock.stage("build"):
        if cfg.method == "multi-gcn":
            merged = merge_views(d.graph, cfg.fusion.resolve(d.graph.num_views, d.num_classes))
        else:
            a_hat_static = renormalized_propagation(static_graph)
        X = _feature_matrix(d, cfg.feature_source)

    seeds, accuracies, val_accuracies, failures = [], [], [], []
    for repeat, (seed, split_maker) in enumerate(splits_with_seeds):
        try:
            with clock.stage("split"):
                split = split_maker()
            if cfg.method == "multi-gcn":
                with clock.stage("build"):
                    ranking_cfg = cfg.ranking.resolve(d.num_classes, seed)
                    merged_graph = augment_graph(d.graph, merged, ranking_cfg)
                    a_hat = renormalized_propagation(merged_graph.A_mod)
            else:
                a_hat = a_hat_static
            with clock.stage("train"):
                train_cfg = _with_seed(cfg.train, seed)
                model, _ = train(a_hat, X, split, train_cfg, num_classes=d.num_classes)
            with clock.stage("evaluate"):
                test_acc = evaluate(model, a_hat, X, split.test_idx, split.labels)
                val_acc = (
                    evaluate(model, a_hat, X, split.val_idx, split.labels)
                    if split.val_idx.size
                    else float("nan")
                )
            seeds.append(seed)
            accuracies.append(test_acc)
            val_accuracies.append(val_acc)
        except Exception as exc:  # stage failure aborts this repeat only
            failures.append([repeat, f"{type(exc).__name__}: {exc}"])

    mean = float(np.mean(accuracies)) if accuracies else None
    if len(accuracies) >= 2:
        stderr = float(np.std(accuracies, ddof=1) / np.sqrt(len(accuracies)))
    elif accuracies:
        stderr = 0.0
    else:
        stderr = None
    return ExperimentReport(
        method=cfg.method,
        dataset_name=d.name,
        num_repeats=cfg.num_repeats,
        seeds=seeds,
        accuracies=accuracies,
        val_accuracies=val_accuracies,
        mean=mean,
        stderr=stderr,
        partial=len(accuracies) < cfg.num_repeats,
        failures=failures,
        config=_config_echo(cfg),
        resolved=_resolved_echo(d, cfg),
        stage_seconds=clock.seconds,
        total_seconds=clock.total,
        created_at=datetime.now(timezone.utc).isoformat(),
    )


def _with_seed(train_cfg: TrainConfig, seed: int) -> TrainConfig:
    params = asdict(train_cfg)
    params["seed"] = seed
    return TrainConfig(**params)


def run_experiment(cfg: ExperimentConfig, dataset: Dataset | None = None) -> ExperimentReport:
    """Repeated-random-split experiment; repeat r uses seed base_seed + r."""
    clock = time.perf_counter()
    if dataset is None:
        dataset = load_dataset(cfg.dataset_dir)
    load_seconds = time.perf_counter() - clock

    def maker(seed):
        return lambda: make_split(
            dataset, cfg.split.per_class, cfg.split.val_size, cfg.split.test_size, seed
        )

    plan = [(cfg.base_seed + r, maker(cfg.base_seed + r)) for r in range(cfg.num_repeats)]
    report = _run_repeats(dataset, cfg, plan)
    report.stage_seconds["load"] = load_seconds
    report.total_seconds += load_seconds
    return report


def load_split_file(path, labels) -> LabeledSplit:
    """Read a fixed split JSON {"train": [...], "val": [...], "test": [...]}.

    Overlapping or unlabeled indices are rejected by LabeledSplit.
    """
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    for key in ("train", "val", "test"):
        if key not in payload:
            raise ValueError(f"{path}: missing key {key!r}")
    return LabeledSplit(
        train_idx=np.asarray(payload["train"], dtype=np.int64),
        val_idx=np.asarray(payload["val"], dtype=np.int64),
        test_idx=np.asarray(payload["test"], dtype=np.int64),
        labels=labels,
    )


def run_predefined_split(
    cfg: ExperimentConfig, split_file, dataset: Dataset | None = None
) -> ExperimentReport:
    """Single run on a fixed split file; the report has num_repeats = 1."""
    clock = time.perf_counter()
    if dataset is None:
        dataset = load_dataset(cfg.dataset_dir)
    load_seconds = time.perf_counter() - clock
    split = load_split_file(split_file, dataset.labels)
    single = _replace_repeats(cfg, 1)
    plan = [(cfg.base_seed, lambda: split)]
    report = _run_repeats(dataset, single, plan)
    report.stage_seconds["load"] = load_seconds
    report.total_seconds += load_seconds
    report.config["split_file"] = str(split_file)
    return report


def _replace_repeats(cfg: ExperimentConfig, count: int) -> ExperimentConfig:
    params = {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}
    params["num_repeats"] = count
    return ExperimentConfig(**params)


def score_prediction_file(dataset: Dataset, csv_path, idx) -> float:
    """Accuracy of externally produced predictions on the given vertices.

    The CSV has `vertex,predicted_class` rows (one per vertex, `#` comments
    allowed) and must cover every requested index. This is how baseline
    systems that are not implemented here (random-walk embeddings etc.)
    enter a comparison on equal footing.
    """
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("cannot score an empty index set")
    preds = {}
    with open(csv_path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValueError(f"{csv_path}:{lineno}: expected 'vertex,predicted_class'")
            try:
                vertex, cls = int(parts[0]), int(parts[1])
            except ValueError:
                raise ValueError(f"{csv_path}:{lineno}: non-integer entry") from None
            if not 0 <= vertex < dataset.n:
                raise ValueError(f"{csv_path}:{lineno}: vertex {vertex} out of range")
            if not 0 <= cls < dataset.num_classes:
                raise ValueError(f"{csv_path}:{lineno}: class {cls} out of range")
            if vertex in preds:
                raise ValueError(f"{csv_path}:{lineno}: duplicate prediction for vertex {vertex}")
            preds[vertex] = cls
    missing = [int(v) for v in idx if int(v) not in preds]
    if missing:
        raise ValueError(f"{csv_path}: no prediction for vertices {missing[:5]}")
    hits = sum(1 for v in idx if preds[int(v)] == dataset.labels[v])
    return hits / idx.size


@dataclass
class GridSearchResult:
    best_alpha: float
    table: list  # one row per alpha: {"alpha", "mean_val_acc", "mean_test_acc", "stderr"}
    reports: list

    def to_json(self) -> str:
        return json.dumps(
            {"best_alpha": self.best_alpha, "table": self.table}, indent=2, sort_keys=True
        )


def grid_search_alpha(cfg: ExperimentConfig, alpha_grid, dataset: Dataset | None = None) -> GridSearchResult:
    """Pick the shared alpha maximizing mean validation accuracy.

    Ties go to the smallest alpha; the full per-alpha table is returned.
    """
    grid = sorted(float(a) for a in alpha_grid)
    if not grid:
        raise ValueError("alpha grid must be non-empty")
    if cfg.method != "multi-gcn":
        raise ValueError("alpha search only applies to method multi-gcn")
    if cfg.split.val_size < 1:
        raise ValueError("alpha search needs a non-empty validation set")
    if dataset is None:
        dataset = load_dataset(cfg.dataset_dir)
    best_alpha, best_score = None, -np.inf
    table, reports = [], []
    for alpha in grid:
        params = {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}
        params["fusion"] = FusionSpec(k=cfg.fusion.k, alphas=(alpha,) * dataset.graph.num_views)
        report = run_experiment(ExperimentConfig(**params), dataset=dataset)
        if not report.val_accuracies:
            raise RuntimeError(f"alpha={alpha}: every repeat failed")
        score = float(np.mean(report.val_accuracies))
        table.append(
            {
                "alpha": alpha,
                "mean_val_acc": score,
                "mean_test_acc": report.mean,
                "stderr": report.stderr,
            }
        )
        reports.append(report)
        if score > best_score:  # strict: ties keep the smaller alpha
            best_alpha, best_score = alpha, score
    return GridSearchResult(best_alpha=best_alpha, table=table, reports=reports)
