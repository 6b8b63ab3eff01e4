"""Command-line interface: dataset generation, distances, training, evaluation.

Exit codes: 0 success, 1 usage error, 2 data error.  Training subcommands read
a flat ``key=value`` config file (``#`` comments allowed); ``--set key=value``
flags override file values.  ``--threads`` falls back to the TFGW_THREADS
environment variable.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .checkpoint import CheckpointError, load_model, save_model, write_history
from .fgw import CgOptions, solve_fgw
from .graphs import (DatasetParseError, GraphValidationError, LabeledDataset,
                     StructureKind, gen_four_cycles, gen_skip_circles,
                     load_tu_dataset, save_tu_dataset, shortest_path_matrix)
from .layer import tfgw_forward
from .trainer import (TrainConfig, TrainingError, _forward_graphs, cross_validate,
                      evaluate, pca_project, stratified_split, train)


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 instead of argparse's default 2
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="tfgw", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    ds = sub.add_parser("dataset", help="generate or inspect datasets")
    ds_sub = ds.add_subparsers(dest="dataset_command", required=True)
    gen = ds_sub.add_parser("gen", help="write a synthetic dataset in TU format")
    gen.add_argument("--kind", required=True, choices=["four-cycles", "skip-circles"])
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--num", type=int, default=200,
                     help="graph count (four-cycles)")
    gen.add_argument("--nodes", type=int, default=10,
                     help="nodes per graph (four-cycles)")
    gen.add_argument("--copies", type=int, default=15,
                     help="permuted copies per class (skip-circles)")
    info = ds_sub.add_parser("info", help="print dataset statistics")
    info.add_argument("directory")

    dist = sub.add_parser("dist", help="FGW distance between two graphs")
    dist.add_argument("--a", required=True, metavar="DIR[:INDEX]")
    dist.add_argument("--b", required=True, metavar="DIR[:INDEX]")
    dist.add_argument("--alpha", type=float, required=True)
    dist.add_argument("--structure", choices=["adj", "sp"], default="adj")

    for name, help_text in (("train", "train a model on a dataset"),
                            ("cv", "holdout + k-fold cross-validation")):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--data", required=True)
        cmd.add_argument("--config", required=True)
        cmd.add_argument("--out", required=True)
        cmd.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                         help="override a config file entry")
        cmd.add_argument("--threads", type=int, default=None)

    ev = sub.add_parser("eval", help="accuracy of a checkpoint on a dataset")
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", required=True)

    em = sub.add_parser("embed", help="export distance embeddings as CSV")
    em.add_argument("--model", required=True)
    em.add_argument("--data", required=True)
    em.add_argument("--out", required=True)
    return parser


# ---------------------------------------------------------------------------
# config files


_CONFIG_FIELDS = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def _coerce(key: str, raw: str):
    if key not in _CONFIG_FIELDS:
        raise UsageError(f"unknown config key '{key}'")
    default = TrainConfig.__dataclass_fields__[key].default
    if isinstance(default, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise UsageError(f"config key '{key}' expects a boolean, got '{raw}'")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, StructureKind):
        return StructureKind(raw)
    return raw


def read_config(path: str, overrides: list[str]) -> TrainConfig:
    """Parse a key=value config file, then apply --set overrides on top."""
    values: dict = {}
    if not os.path.exists(path):
        raise DataError(f"config file not found: {path}")
    with open(path) as f:
        for ln, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{ln}: expected key=value")
            key, raw = (part.strip() for part in line.split("=", 1))
            values[key] = _coerce(key, raw)
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got '{item}'")
        key, raw = (part.strip() for part in item.split("=", 1))
        values[key] = _coerce(key, raw)
    try:
        return TrainConfig(**values)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid configuration: {exc}")


def _thread_count(flag_value) -> int:
    if flag_value is not None:
        return max(1, flag_value)
    env = os.environ.get("TFGW_THREADS", "")
    return max(1, int(env)) if env.isdigit() else 1


# ---------------------------------------------------------------------------
# dataset helpers


def _detect_name(directory: str) -> str:
    if not os.path.isdir(directory):
        raise DataError(f"not a directory: {directory}")
    names = [f[:-6] for f in sorted(os.listdir(directory)) if f.endswith("_A.txt")]
    if not names:
        raise DataError(f"no TU dataset (*_A.txt) found in {directory}")
    if len(names) > 1:
        raise DataError(f"multiple datasets in {directory}: {', '.join(names)}")
    return names[0]


def _load_dataset(directory: str) -> LabeledDataset:
    name = _detect_name(directory)
    try:
        return load_tu_dataset(directory, name)
    except (DatasetParseError, GraphValidationError) as exc:
        raise DataError(str(exc))


def _load_graph(spec: str, structure: str):
    """Resolve DIR[:INDEX] to a single graph's (structure, features, weights)."""
    directory, _, index_text = spec.partition(":")
    index = 0
    if index_text:
        try:
            index = int(index_text)
        except ValueError:
            raise UsageError(f"bad graph index in '{spec}'")
    dataset = _load_dataset(directory)
    if not 0 <= index < len(dataset):
        raise DataError(f"graph index {index} out of range for {directory} "
                        f"({len(dataset)} graphs)")
    g = dataset.graphs[index]
    C = shortest_path_matrix(g.structure) if structure == "sp" else g.structure
    return C, g.features, g.weights


# ---------------------------------------------------------------------------
# subcommands


def _cmd_dataset_gen(args) -> int:
    if args.kind == "four-cycles":
        dataset = gen_four_cycles(args.num, args.nodes, seed=args.seed)
    else:
        dataset = gen_skip_circles(args.copies, seed=args.seed)
    save_tu_dataset(dataset, args.out)
    print(f"wrote {len(dataset)} graphs ({dataset.class_count} classes) to {args.out}")
    return 0


def _cmd_dataset_info(args) -> int:
    dataset = _load_dataset(args.directory)
    sizes = np.array([g.node_count for g in dataset.graphs])
    print(f"name: {dataset.name}")
    print(f"graphs: {len(dataset)}")
    print(f"classes: {dataset.class_count}")
    counts = np.bincount(dataset.labels, minlength=dataset.class_count)
    print("per-class counts: " + " ".join(str(c) for c in counts))
    print(f"nodes: min {sizes.min()} median {int(np.median(sizes))} max {sizes.max()}")
    print(f"feature dim: {dataset.feature_dim}")
    return 0


def _cmd_dist(args) -> int:
    if not 0.0 <= args.alpha <= 1.0:
        raise UsageError("--alpha must be in [0, 1]")
    triple_a = _load_graph(args.a, args.structure)
    triple_b = _load_graph(args.b, args.structure)
    result = solve_fgw(triple_a, triple_b, args.alpha, CgOptions())
    print(f"fgw {result.value:.12g}")
    print(f"gw_part {result.gw_part:.12g}")
    print(f"w_part {result.w_part:.12g}")
    print(f"iterations {result.iterations} converged {result.converged}")
    return 0


def _cmd_train(args) -> int:
    config = read_config(args.config, args.set)
    config.threads = _thread_count(args.threads)
    dataset = _load_dataset(args.data)
    train_idx, val_idx = stratified_split(dataset.labels, config.holdout_fraction,
                                          config.seed)
    try:
        model, history = train([dataset.graphs[i] for i in train_idx],
                               dataset.labels[train_idx], config,
                               class_count=dataset.class_count,
                               val_graphs=[dataset.graphs[i] for i in val_idx],
                               val_labels=dataset.labels[val_idx])
    except TrainingError as exc:
        raise DataError(str(exc))
    os.makedirs(args.out, exist_ok=True)
    save_model(os.path.join(args.out, "model.ckpt"), model)
    write_history(os.path.join(args.out, "history.jsonl"), history)
    val_acc = evaluate(model, [dataset.graphs[i] for i in val_idx],
                       dataset.labels[val_idx])
    print(f"validation accuracy {val_acc:.4f}")
    print(f"checkpoint {os.path.join(args.out, 'model.ckpt')}")
    return 0


def _cmd_cv(args) -> int:
    config = read_config(args.config, args.set)
    config.threads = _thread_count(args.threads)
    dataset = _load_dataset(args.data)
    try:
        reports, holdout_acc, model = cross_validate(dataset, config)
    except TrainingError as exc:
        raise DataError(str(exc))
    os.makedirs(args.out, exist_ok=True)
    save_model(os.path.join(args.out, "model.ckpt"), model)
    with open(os.path.join(args.out, "folds.json"), "w") as f:
        json.dump([{"fold": r.fold, "best_epoch": r.best_epoch,
                    "best_val_acc": r.best_val_acc, "history": r.history}
                   for r in reports], f, indent=1)
    with open(os.path.join(args.out, "holdout.json"), "w") as f:
        json.dump({"holdout_accuracy": holdout_acc}, f)
    for r in reports:
        print(f"fold {r.fold} best_epoch {r.best_epoch} val_acc {r.best_val_acc:.4f}")
    print(f"holdout accuracy {holdout_acc:.4f}")
    return 0


def _load_checkpoint(path: str):
    try:
        return load_model(path)
    except (CheckpointError, OSError) as exc:
        raise DataError(f"cannot load checkpoint {path}: {exc}")


def _cmd_eval(args) -> int:
    model = _load_checkpoint(args.model)
    dataset = _load_dataset(args.data)
    acc = evaluate(model, dataset.graphs, dataset.labels)
    print(f"accuracy {acc:.4f}")
    return 0


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(repr(float(x)) if isinstance(x, float) else str(x)
                             for x in row) + "\n")


def _cmd_embed(args) -> int:
    model = _load_checkpoint(args.model)
    dataset = _load_dataset(args.data)
    X, _, _, _ = _forward_graphs(model, dataset.graphs, train=False,
                                 options=CgOptions())
    K = model.template_count
    # template self-embeddings: each template located in the same distance space
    template_rows = []
    for tmpl in model.templates:
        record = tfgw_forward(tmpl.active_triple(), model.templates, model.alpha,
                              CgOptions())
        template_rows.append(record.distances)
    all_points = np.vstack([X] + [row[None, :] for row in template_rows])
    header = ["kind", "label"] + [f"dist_{k}" for k in range(K)]
    rows = [["graph", int(y)] + [float(v) for v in X[i]]
            for i, y in enumerate(dataset.labels)]
    rows += [["template", -1] + [float(v) for v in template_rows[k]]
             for k in range(K)]
    _write_csv(args.out, header, rows)

    projected, _ = pca_project(all_points, dims=min(2, K))
    pca_path = (args.out[:-4] if args.out.endswith(".csv") else args.out) + "_pca.csv"
    pca_header = ["kind", "label"] + [f"pc_{d}" for d in range(projected.shape[1])]
    pca_rows = [["graph", int(y)] + [float(v) for v in projected[i]]
                for i, y in enumerate(dataset.labels)]
    pca_rows += [["template", -1] + [float(v) for v in projected[len(dataset) + k]]
                 for k in range(K)]
    _write_csv(pca_path, pca_header, pca_rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    print(f"wrote PCA projection to {pca_path}")
    return 0


_HANDLERS = {
    "dist": _cmd_dist,
    "train": _cmd_train,
    "cv": _cmd_cv,
    "eval": _cmd_eval,
    "embed": _cmd_embed,
}


def dispatch(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "dataset":
            handler = (_cmd_dataset_gen if args.dataset_command == "gen"
                       else _cmd_dataset_info)
        else:
            handler = _HANDLERS[args.command]
        return handler(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
