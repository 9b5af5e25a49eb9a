"""Command-line entry points for the pipeline and experiment harness.

Subcommands: fuse, rank, train, run, run-fixed, grid-alpha, synth, spy,
convert. Experiment configuration comes from a TOML or JSON file plus flag
overrides; --seed and --out-dir are global. Exit codes: 0 success, 2
configuration/input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .data import (
    Dataset,
    DatasetError,
    SyntheticSpec,
    build_similarity_view,
    generate_synthetic,
    load_dataset,
    make_split,
    save_dataset,
)
from .experiments import (
    FEATURE_SOURCES,
    METHODS,
    ExperimentConfig,
    FusionSpec,
    RankingSpec,
    SplitSpec,
    grid_search_alpha,
    run_experiment,
    run_predefined_split,
    score_prediction_file,
    write_repeat_csv,
)
from .experiments import load_split_file
from .fusion import (
    EigensolverError,
    load_modified_laplacian,
    merge_views,
    save_modified_laplacian,
    spectral_embedding,
)
from .gcn import TrainConfig, evaluate, save_model, train, write_history_csv
from .graph import (
    GraphFormatError,
    MultiViewGraph,
    SparseSymGraph,
    load_edge_tsv,
    normalized_laplacian,
    renormalized_propagation,
    union_views,
)
from .ranking import MATRIX_MODES, RankingConditionError, augment_graph, export_merged_graph
from .spyplot import emit_spy_plot


class ConfigError(ValueError):
    """Invalid configuration file or flag combination."""


_CONFIG_SECTIONS = {
    "split": {"per_class", "val_size", "test_size"},
    "fusion": {"k", "alphas"},
    "ranking": {
        "beta",
        "num_centroids",
        "add_per_centroid",
        "prune_per_centroid",
        "kmeans_restarts",
        "matrix_mode",
    },
    "train": {
        "learning_rate",
        "max_epochs",
        "hidden_units",
        "dropout",
        "weight_decay",
        "early_stop_patience",
    },
}
_CONFIG_TOP = {"dataset", "method", "num_repeats", "base_seed", "feature_source"}


def load_experiment_config(path, overrides=None) -> ExperimentConfig:
    """Parse a TOML/JSON experiment config, applying flag overrides."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: config file not found")
    try:
        if path.suffix == ".toml":
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        elif path.suffix == ".json":
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        else:
            raise ConfigError(f"{path}: expected a .toml or .json config file")
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from None

    unknown = set(raw) - _CONFIG_TOP - set(_CONFIG_SECTIONS)
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    for section, allowed in _CONFIG_SECTIONS.items():
        extra = set(raw.get(section, {})) - allowed
        if extra:
            raise ConfigError(f"{path}: unknown keys in [{section}]: {sorted(extra)}")

    overrides = overrides or {}
    dataset = overrides.get("dataset") or raw.get("dataset")
    method = overrides.get("method") or raw.get("method")
    if dataset is None or method is None:
        raise ConfigError(f"{path}: 'dataset' and 'method' are required")

    fusion_raw = dict(raw.get("fusion", {}))
    if overrides.get("alpha") is not None:
        fusion_raw["alphas"] = overrides["alpha"]
    alphas = fusion_raw.get("alphas")
    if alphas is not None and not np.isscalar(alphas):
        alphas = tuple(float(a) for a in alphas)
    ranking_raw = dict(raw.get("ranking", {}))
    if overrides.get("ranking_matrix") is not None:
        ranking_raw["matrix_mode"] = overrides["ranking_matrix"]

    try:
        return ExperimentConfig(
            dataset_dir=str(dataset),
            method=str(method),
            split=SplitSpec(**raw.get("split", {})),
            train=TrainConfig(**raw.get("train", {})),
            fusion=FusionSpec(k=fusion_raw.get("k"), alphas=alphas),
            ranking=RankingSpec(**ranking_raw),
            num_repeats=int(overrides.get("repeats") or raw.get("num_repeats", 10)),
            base_seed=int(
                overrides["seed"] if overrides.get("seed") is not None else raw.get("base_seed", 0)
            ),
            feature_source=str(overrides.get("feature_source") or raw.get("feature_source", "provided")),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _experiment_overrides(args) -> dict:
    return {
        "dataset": args.dataset,
        "method": args.method,
        "repeats": args.repeats,
        "seed": args.seed,
        "feature_source": args.feature_source,
        "ranking_matrix": args.ranking_matrix,
        "alpha": args.alpha,
    }


def _parse_view_pairs(values):
    pairs = []
    for text in values:
        parts = text.split(":")
        if len(parts) != 2:
            raise ConfigError(f"--view expects 'p_intra:p_inter', got {text!r}")
        pairs.append((float(parts[0]), float(parts[1])))
    return tuple(pairs)


def _fusion_alphas(dataset, alpha_values):
    if not alpha_values:
        return (0.5,) * dataset.graph.num_views
    if len(alpha_values) == 1:
        return (alpha_values[0],) * dataset.graph.num_views
    if len(alpha_values) != dataset.graph.num_views:
        raise ConfigError(
            f"{len(alpha_values)} alphas for {dataset.graph.num_views} views"
        )
    return tuple(alpha_values)


def _cmd_synth(args):
    spec = SyntheticSpec(
        n=args.n,
        num_blocks=args.classes,
        edge_probs=_parse_view_pairs(args.view),
        feature_noise=args.noise,
        seed=args.seed or 0,
    )
    dataset = generate_synthetic(spec)
    out = Path(args.out_dir) / (args.name or dataset.name)
    save_dataset(dataset, out)
    print(f"wrote dataset {dataset.name!r} to {out}")
    return 0


def _cmd_convert(args):
    out = Path(args.out_dir) / args.name
    dataset = _convert_linqs(
        args.content,
        args.cites,
        args.name,
        threshold=args.similarity_threshold,
        allow_dangling=args.allow_dangling,
    )
    save_dataset(dataset, out)
    if args.emit_split:
        split = make_split(
            dataset, args.split_per_class, args.split_val, args.split_test, args.seed or 0
        )
        payload = {
            "train": split.train_idx.tolist(),
            "val": split.val_idx.tolist(),
            "test": split.test_idx.tolist(),
        }
        with open(out / "split.json", "w", encoding="utf-8") as fh:
            json.dump(payload, fh)
            fh.write("\n")
    print(
        f"wrote dataset {args.name!r} to {out}: n={dataset.n}, "
        f"view1 edges={dataset.graph.views[0].num_edges}, "
        f"view2 edges={dataset.graph.views[1].num_edges}, "
        f"C={dataset.num_classes}, F={dataset.num_features}"
    )
    return 0


def _convert_linqs(content_path, cites_path, name, *, threshold, allow_dangling):
    """Convert the public text distribution of a citation network.

    content: one line per document, `id<TAB>f1..fF<TAB>label`.
    cites:   one line per citation, `cited<TAB>citing`.
    The citation graph becomes view 1 (undirected, duplicates collapsed);
    view 2 connects documents with feature cosine similarity > threshold.
    """
    ids, rows, label_names = [], [], []
    with open(content_path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.rstrip("\n").split("\t")
            if len(parts) < 3:
                raise DatasetError(f"{content_path}:{lineno}: expected id, features, label")
            ids.append(parts[0])
            try:
                rows.append([float(x) for x in parts[1:-1]])
            except ValueError:
                raise DatasetError(f"{content_path}:{lineno}: non-numeric feature") from None
            label_names.append(parts[-1])
    if len(set(ids)) != len(ids):
        raise DatasetError(f"{content_path}: duplicate document ids")
    index = {doc: i for i, doc in enumerate(ids)}
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DatasetError(f"{content_path}: inconsistent feature widths {sorted(widths)}")
    X = np.asarray(rows, dtype=np.float64)
    classes = sorted(set(label_names))
    labels = np.array([classes.index(l) for l in label_names], dtype=np.int64)

    pairs = set()
    dangling = 0
    with open(cites_path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise DatasetError(f"{cites_path}:{lineno}: expected two document ids")
            a, b = parts
            if a not in index or b not in index:
                dangling += 1
                if not allow_dangling:
                    raise DatasetError(
                        f"{cites_path}:{lineno}: citation references unknown document "
                        f"(re-run with --allow-dangling to skip such lines)"
                    )
                continue
            u, v = index[a], index[b]
            if u == v:
                continue
            pairs.add((min(u, v), max(u, v)))
    if dangling:
        print(f"note: skipped {dangling} citation lines with unknown ids", file=sys.stderr)

    n = len(ids)
    view1 = SparseSymGraph.from_pairs(n, sorted(pairs))
    view2 = build_similarity_view(X, threshold)
    return Dataset(
        graph=MultiViewGraph(n, [view1, view2]),
        X=X,
        labels=labels,
        num_classes=len(classes),
        name=name,
    )


def _cmd_fuse(args):
    dataset = load_dataset(args.dataset)
    cfg = FusionSpec(
        k=args.k, alphas=_fusion_alphas(dataset, args.alpha)
    ).resolve(dataset.graph.num_views, dataset.num_classes)
    if args.eig_maxiter is not None:
        for view in dataset.graph.views:  # surface non-convergence before any heavy work
            spectral_embedding(normalized_laplacian(view), cfg.k, maxiter=args.eig_maxiter)
    merged = merge_views(dataset.graph, cfg)
    out = Path(args.out or Path(args.out_dir) / "merged.bin")
    save_modified_laplacian(merged, out)
    print(f"wrote merged Laplacian (n={merged.n}, k={merged.k}) to {out}")
    return 0


def _cmd_rank(args):
    dataset = load_dataset(args.dataset)
    if args.lmod:
        merged = load_modified_laplacian(args.lmod)
        if merged.n != dataset.n:
            raise ConfigError(f"checkpoint n={merged.n} does not match dataset n={dataset.n}")
    else:
        cfg = FusionSpec(k=args.k, alphas=_fusion_alphas(dataset, args.alpha)).resolve(
            dataset.graph.num_views, dataset.num_classes
        )
        merged = merge_views(dataset.graph, cfg)
    ranking = RankingSpec(
        beta=args.beta,
        num_centroids=args.centroids,
        add_per_centroid=args.add,
        prune_per_centroid=args.prune,
        kmeans_restarts=args.restarts,
        matrix_mode=args.ranking_matrix,
    ).resolve(dataset.num_classes, args.seed or 0)
    result = augment_graph(dataset.graph, merged, ranking)
    out_dir = Path(args.out_dir)
    export_merged_graph(result, ranking, out_dir / "amod.tsv", out_dir / "amod.json")
    print(
        f"augmented view 1: +{len(result.E_s)} salient, -{len(result.E_ns)} pruned "
        f"(ranking matrix: {result.matrix_mode_used}); wrote {out_dir / 'amod.tsv'}"
    )
    return 0


def _cmd_train(args):
    dataset = load_dataset(args.dataset)
    if args.graph == "view1":
        g = dataset.graph.views[0]
    elif args.graph == "view2":
        if dataset.graph.num_views < 2:
            raise ConfigError("dataset has no second view")
        g = dataset.graph.views[1]
    elif args.graph == "union":
        g = union_views(dataset.graph)
    else:
        g = load_edge_tsv(args.graph)
        if g.n != dataset.n:
            raise ConfigError(f"graph file n={g.n} does not match dataset n={dataset.n}")
    a_hat = renormalized_propagation(g)
    X = dataset.X if args.feature_source == "provided" else dataset.graph.views[0].to_dense()
    seed = args.seed or 0
    if args.split:
        split = load_split_file(args.split, dataset.labels)
    else:
        split = make_split(dataset, args.per_class, args.val_size, args.test_size, seed)
    cfg = TrainConfig(
        learning_rate=args.lr,
        max_epochs=args.epochs,
        hidden_units=args.hidden,
        dropout=args.dropout,
        weight_decay=args.weight_decay,
        early_stop_patience=args.patience,
        seed=seed,
    )
    model, history = train(a_hat, X, split, cfg, num_classes=dataset.num_classes)
    out_dir = Path(args.out_dir)
    save_model(model, out_dir / "model.bin")
    write_history_csv(history, out_dir / "history.csv")
    acc = evaluate(model, a_hat, X, split.test_idx, dataset.labels)
    print(f"test accuracy {acc:.4f} after {len(history)} epochs; wrote {out_dir / 'model.bin'}")
    return 0


def _cmd_run(args):
    cfg = load_experiment_config(args.config, _experiment_overrides(args))
    report = run_experiment(cfg)
    return _finish_report(report, args)


def _cmd_run_fixed(args):
    cfg = load_experiment_config(args.config, _experiment_overrides(args))
    report = run_predefined_split(cfg, args.split)
    return _finish_report(report, args)


def _finish_report(report, args):
    out_dir = Path(args.out_dir)
    report.write(out_dir / "report.json")
    write_repeat_csv(report, out_dir / "repeats.csv")
    mean = "n/a" if report.mean is None else f"{report.mean:.4f}"
    stderr = "n/a" if report.stderr is None else f"{report.stderr:.4f}"
    flag = " (PARTIAL)" if report.partial else ""
    print(
        f"{report.method} on {report.dataset_name}: mean={mean} stderr={stderr} "
        f"over {len(report.accuracies)}/{report.num_repeats} repeats{flag}"
    )
    for repeat, message in report.failures:
        print(f"  repeat {repeat} failed: {message}", file=sys.stderr)
    print(f"wrote {out_dir / 'report.json'}")
    return 0


def _cmd_grid_alpha(args):
    cfg = load_experiment_config(args.config, _experiment_overrides(args))
    grid = [float(a) for a in args.alphas.split(",") if a.strip() != ""]
    result = grid_search_alpha(cfg, grid)
    out = Path(args.out_dir) / "grid.json"
    out.write_text(result.to_json() + "\n", encoding="utf-8")
    for row in result.table:
        print(
            f"alpha={row['alpha']:g}: val acc {row['mean_val_acc']:.4f}, "
            f"test acc {row['mean_test_acc']:.4f}"
        )
    print(f"best alpha {result.best_alpha:g}; wrote {out}")
    return 0


def _cmd_spy(args):
    dataset = load_dataset(args.dataset)
    first = dataset.graph.views[0]
    if dataset.graph.num_views >= 2:
        second = dataset.graph.views[1]
    else:
        second = SparseSymGraph(dataset.n, [])
    out = Path(args.out or Path(args.out_dir) / "spy.ppm")
    emit_spy_plot(first, second, out)
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multigcn", description=__doc__)
    parser.add_argument("--seed", type=int, default=None, help="global seed override")
    parser.add_argument("--out-dir", default=".", help="directory for outputs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a planted-partition multi-view dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--view", action="append", required=True, metavar="P_INTRA:P_INTER")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--name", default=None)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("convert", help="convert a raw text citation dataset")
    p.add_argument("--content", required=True, help="id<TAB>features<TAB>label file")
    p.add_argument("--cites", required=True, help="cited<TAB>citing file")
    p.add_argument("--name", required=True)
    p.add_argument("--similarity-threshold", type=float, default=0.8)
    p.add_argument("--allow-dangling", action="store_true")
    p.add_argument("--emit-split", action="store_true")
    p.add_argument("--split-per-class", type=int, default=20)
    p.add_argument("--split-val", type=int, default=500)
    p.add_argument("--split-test", type=int, default=1000)
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("fuse", help="merge view Laplacians into a checkpoint")
    p.add_argument("--dataset", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--alpha", type=float, action="append", default=None)
    p.add_argument("--eig-maxiter", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("rank", help="augment view 1 with salient edges")
    p.add_argument("--dataset", required=True)
    p.add_argument("--lmod", default=None, help="merged-Laplacian checkpoint from fuse")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--alpha", type=float, action="append", default=None)
    p.add_argument("--beta", type=float, default=0.99)
    p.add_argument("--centroids", type=int, default=None)
    p.add_argument("--add", type=int, default=5)
    p.add_argument("--prune", type=int, default=5)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--ranking-matrix", choices=MATRIX_MODES, default="laplacian")
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("train", help="train a GCN on one graph")
    p.add_argument("--dataset", required=True)
    p.add_argument("--graph", default="view1", help="view1 | view2 | union | edge-list TSV path")
    p.add_argument("--feature-source", choices=FEATURE_SOURCES, default="provided")
    p.add_argument("--split", default=None, help="fixed split JSON (overrides sampling)")
    p.add_argument("--per-class", type=int, default=20)
    p.add_argument("--val-size", type=int, default=500)
    p.add_argument("--test-size", type=int, default=1000)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--weight-decay", type=float, default=5e-4)
    p.add_argument("--patience", type=int, default=10)
    p.set_defaults(func=_cmd_train)

    for name, func in (("run", _cmd_run), ("run-fixed", _cmd_run_fixed), ("grid-alpha", _cmd_grid_alpha)):
        p = sub.add_parser(name, help=f"{name} experiment from a config file")
        p.add_argument("--config", required=True)
        p.add_argument("--dataset", default=None)
        p.add_argument("--method", choices=METHODS, default=None)
        p.add_argument("--repeats", type=int, default=None)
        p.add_argument("--feature-source", choices=FEATURE_SOURCES, default=None)
        p.add_argument("--ranking-matrix", choices=MATRIX_MODES, default=None)
        p.add_argument("--alpha", type=float, default=None)
        if name == "run-fixed":
            p.add_argument("--split", required=True)
        if name == "grid-alpha":
            p.add_argument("--alphas", required=True, help="comma-separated grid")
        p.set_defaults(func=func)

    p = sub.add_parser("spy", help="write a two-view adjacency spy plot (PPM)")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_spy)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        return args.func(args)
    except (EigensolverError, RankingConditionError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, DatasetError, GraphFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
