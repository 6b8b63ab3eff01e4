"""End-to-end training of the template-distance classifier.

Pipeline per batch: GIN node embeddings -> template-distance vector ->
classifier MLP -> cross-entropy; gradients chain back through the head, the
envelope-theorem layer gradients and the GIN, followed by one Adam step and
the feasibility projections.  Also hosts the evaluation protocol: stratified
holdout + 10-fold cross-validation with periodic validation tracking, and
PCA of the learned embeddings.
"""

from __future__ import annotations

import copy
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .fgw import CgOptions
from .graphs import Graph, LabeledDataset, StructureKind
from .layer import Template, apply_constraints, tfgw_backward, tfgw_forward
from .nn import (AdamState, GinParams, MlpParams, adam_step, cross_entropy_batch,
                 gin_backward, gin_forward, init_gin, init_mlp, mlp_backward,
                 mlp_forward)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 500
    batch_size: int = 128
    learning_rate: float = 0.01
    num_templates: int = 4
    gin_layers: int = 2
    hidden_units: int = 16
    dropout: float = 0.0
    learn_template_weights: bool = True
    learn_templates: bool = True
    structure_kind: StructureKind = StructureKind.ADJACENCY
    alpha_mode: str = "learned"  # or "fixed"
    alpha_init: float = 0.5
    seed: int = 0
    validation_period: int = 5
    threads: int = 1
    cg_max_iterations: int = 1000
    cg_relative_tolerance: float = 1e-9
    cg_multi_start: int = 1
    cg_isomorphism_shortcut: bool = True
    holdout_fraction: float = 0.1
    folds: int = 10

    def __post_init__(self):
        if isinstance(self.structure_kind, str):
            self.structure_kind = StructureKind(self.structure_kind)
        if self.dropout not in (0.0, 0.2, 0.5):
            raise ValueError("dropout must be one of 0, 0.2, 0.5")
        if self.alpha_mode not in ("learned", "fixed"):
            raise ValueError("alpha_mode must be 'learned' or 'fixed'")
        for name in ("epochs", "batch_size", "num_templates", "hidden_units",
                     "validation_period"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.gin_layers < 0:
            raise ValueError("gin_layers must be >= 0")


@dataclass
class TfgwModel:
    gin: GinParams | None
    templates: list[Template]
    alpha: float
    head: MlpParams
    structure_kind: StructureKind = StructureKind.ADJACENCY
    input_dim: int = 1
    class_count: int = 2

    @property
    def template_count(self) -> int:
        return len(self.templates)

    def parameters(self) -> dict[str, np.ndarray]:
        """Trainable arrays in a fixed declared order (drives Adam and IO)."""
        params: dict[str, np.ndarray] = {}
        if self.gin is not None:
            for ell in range(self.gin.layer_count):
                for name in ("weights1", "biases1", "gamma1", "beta1",
                             "weights2", "biases2", "gamma2", "beta2"):
                    params[f"gin.{ell}.{name}"] = getattr(self.gin, name)[ell]
        for k, tmpl in enumerate(self.templates):
            params[f"template.{k}.structure"] = tmpl.structure
            params[f"template.{k}.features"] = tmpl.features
            params[f"template.{k}.weights"] = tmpl.weights
        for layer in range(len(self.head.weights)):
            params[f"head.{layer}.weight"] = self.head.weights[layer]
            params[f"head.{layer}.bias"] = self.head.biases[layer]
        return params

    def state_arrays(self) -> dict[str, np.ndarray]:
        """All arrays needed to restore the model (parameters + BN stats)."""
        arrays = dict(self.parameters())
        if self.gin is not None:
            for ell in range(self.gin.layer_count):
                for name in ("run_mean1", "run_var1", "run_mean2", "run_var2"):
                    arrays[f"gin.{ell}.{name}"] = getattr(self.gin, name)[ell]
        return arrays


def _median_size(graphs: list[Graph]) -> int:
    sizes = sorted(g.node_count for g in graphs)
    mid = len(sizes) // 2
    if len(sizes) % 2:
        return sizes[mid]
    return int(round((sizes[mid - 1] + sizes[mid]) / 2.0))


def _resize_triple(C, F, size):
    n = C.shape[0]
    if n >= size:
        return C[:size, :size].copy(), F[:size].copy()
    C_out = np.zeros((size, size))
    C_out[:n, :n] = C
    F_out = np.zeros((size, F.shape[1]))
    F_out[:n] = F
    return C_out, F_out


def init_templates(graphs: list[Graph], labels: np.ndarray, num_templates: int,
                   structure_kind: StructureKind, seed: int,
                   gin: GinParams | None = None) -> list[Template]:
    """Class-balanced random sample of training graphs, resized to the
    median training node count, with uniform node weights."""
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if num_templates % len(classes) != 0:
        raise ValueError("number of templates must be divisible by the class count")
    per_class = num_templates // len(classes)
    rng = np.random.default_rng(seed)
    size = _median_size(graphs)
    chosen: list[int] = []
    for c in classes:
        idx = np.where(labels == c)[0]
        chosen.extend(rng.choice(idx, size=per_class, replace=len(idx) < per_class))
    templates = []
    adjacency = structure_kind is StructureKind.ADJACENCY
    for i in chosen:
        g = graphs[i]
        feats = g.features
        if gin is not None:
            feats = gin_forward([g], gin, train=False)[0][0]
        C, F = _resize_triple(g.structure, feats, size)
        templates.append(Template(C, F, np.full(size, 1.0 / size),
                                  adjacency_domain=adjacency))
    return templates


def _cg_options(config: TrainConfig) -> CgOptions:
    return CgOptions(max_iterations=config.cg_max_iterations,
                     relative_tolerance=config.cg_relative_tolerance,
                     multi_start=config.cg_multi_start,
                     isomorphism_shortcut=config.cg_isomorphism_shortcut)


def _forward_graphs(model: TfgwModel, graphs: list[Graph], train: bool,
                    options: CgOptions, pool=None):
    """Embed graphs: GIN features (if any) then per-graph distance vectors."""
    if model.gin is not None:
        feats, gin_cache = gin_forward(graphs, model.gin, train=train)
        proc = [Graph(g.structure, f, g.weights) for g, f in zip(graphs, feats)]
    else:
        gin_cache = None
        proc = graphs
    records = [tfgw_forward(g, model.templates, model.alpha, options, pool=pool)
               for g in proc]
    X = np.stack([r.distances for r in records])
    return X, records, proc, gin_cache


def _embeddings_static(model: TfgwModel, config: TrainConfig) -> bool:
    # distances never change when nothing upstream of the head is trained
    return (model.gin is None and not config.learn_templates
            and config.alpha_mode == "fixed")


def evaluate(model: TfgwModel, graphs: list[Graph], labels: np.ndarray,
             options: CgOptions | None = None, pool=None) -> float:
    """Eval-mode argmax accuracy on a split."""
    if not graphs:
        raise ValueError("cannot evaluate on an empty split")
    options = options or CgOptions()
    X, _, _, _ = _forward_graphs(model, graphs, train=False, options=options, pool=pool)
    logits, _ = mlp_forward(X, model.head, train=False)
    pred = logits.argmax(axis=1)
    return float((pred == np.asarray(labels)).mean())


def _init_model(graphs, labels, class_count, config: TrainConfig) -> TfgwModel:
    rng = np.random.default_rng(config.seed)
    input_dim = graphs[0].feature_dim
    gin = None
    feat_dim = input_dim
    if config.gin_layers > 0:
        gin = init_gin(input_dim, config.hidden_units, config.gin_layers, rng)
        feat_dim = gin.output_dim
    templates = init_templates(graphs, labels, config.num_templates,
                               config.structure_kind, config.seed, gin=gin)
    head = init_mlp(config.num_templates, class_count, rng,
                    hidden=128, dropout=config.dropout)
    alpha = config.alpha_init
    return TfgwModel(gin=gin, templates=templates, alpha=float(alpha),
                     head=head, structure_kind=config.structure_kind,
                     input_dim=input_dim, class_count=class_count)


def train(train_graphs: list[Graph], train_labels: np.ndarray, config: TrainConfig,
          class_count: int | None = None, val_graphs=None, val_labels=None,
          model: TfgwModel | None = None, fold: int = -1, on_validation=None):
    """Optimize all model parameters; returns (best model, history records)."""
    if not train_graphs:
        raise TrainingError("empty training split")
    train_labels = np.asarray(train_labels, dtype=np.int64)
    if class_count is None:
        class_count = int(train_labels.max()) + 1
    if model is None:
        model = _init_model(train_graphs, train_labels, class_count, config)
    options = _cg_options(config)
    rng = np.random.default_rng(config.seed + 1)
    state = AdamState(learning_rate=config.learning_rate)
    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    history: list[dict] = []
    best_val = -1.0
    best_state = None
    static = _embeddings_static(model, config)
    static_X: dict[int, np.ndarray] = {}
    n = len(train_graphs)
    try:
        for epoch in range(1, config.epochs + 1):
            order = rng.permutation(n)
            epoch_loss = 0.0
            batches = 0
            for start in range(0, n, config.batch_size):
                idx = order[start:start + config.batch_size]
                graphs = [train_graphs[i] for i in idx]
                labels = train_labels[idx]
                if static and all(int(i) in static_X for i in idx):
                    X = np.stack([static_X[int(i)] for i in idx])
                    records = proc = gin_cache = None
                else:
                    X, records, proc, gin_cache = _forward_graphs(
                        model, graphs, train=True, options=options, pool=pool)
                    if static:
                        for pos, i in enumerate(idx):
                            static_X[int(i)] = X[pos]
                if not np.all(np.isfinite(X)):
                    raise TrainingError("non-finite distance embedding; aborting")
                logits, head_cache = mlp_forward(X, model.head, train=True, rng=rng)
                loss, dlogits = cross_entropy_batch(logits, labels)
                if not np.isfinite(loss):
                    raise TrainingError(f"NaN loss at epoch {epoch}")
                epoch_loss += loss
                batches += 1
                head_grads, dX = mlp_backward(model.head, head_cache, dlogits)

                grads: dict[str, np.ndarray] = {}
                for layer in range(len(model.head.weights)):
                    grads[f"head.{layer}.weight"] = head_grads.weights[layer]
                    grads[f"head.{layer}.bias"] = head_grads.biases[layer]
                d_alpha = 0.0
                if records is not None:
                    tmpl_dC = [np.zeros_like(t.structure) for t in model.templates]
                    tmpl_dF = [np.zeros_like(t.features) for t in model.templates]
                    tmpl_dh = [np.zeros_like(t.weights) for t in model.templates]
                    feat_grads = []
                    for pos, record in enumerate(records):
                        lg = tfgw_backward(proc[pos], model.templates, model.alpha,
                                           record, dX[pos])
                        for k in range(len(model.templates)):
                            tmpl_dC[k] += lg.d_structure[k]
                            tmpl_dF[k] += lg.d_features[k]
                            tmpl_dh[k] += lg.d_weights[k]
                        d_alpha += lg.d_alpha
                        feat_grads.append(lg.d_graph_features)
                    if config.learn_templates:
                        for k in range(len(model.templates)):
                            grads[f"template.{k}.structure"] = tmpl_dC[k]
                            grads[f"template.{k}.features"] = tmpl_dF[k]
                            if config.learn_template_weights:
                                grads[f"template.{k}.weights"] = tmpl_dh[k]
                    if model.gin is not None:
                        gin_grads, _ = gin_backward(model.gin, gin_cache, feat_grads)
                        for ell in range(model.gin.layer_count):
                            for name in ("weights1", "biases1", "gamma1", "beta1",
                                         "weights2", "biases2", "gamma2", "beta2"):
                                grads[f"gin.{ell}.{name}"] = getattr(gin_grads, name)[ell]

                params = {name: arr for name, arr in model.parameters().items()
                          if name in grads}
                adam_step(params, grads, state)
                if config.alpha_mode == "learned" and records is not None:
                    # scalar handled outside the dict-of-arrays optimizer
                    key = "alpha"
                    if key not in state.m:
                        state.m[key] = 0.0
                        state.v[key] = 0.0
                    state.m[key] = state.beta1 * state.m[key] + (1 - state.beta1) * d_alpha
                    state.v[key] = state.beta2 * state.v[key] + (1 - state.beta2) * d_alpha ** 2
                    m_hat = state.m[key] / (1 - state.beta1 ** state.step)
                    v_hat = state.v[key] / (1 - state.beta2 ** state.step)
                    model.alpha -= config.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
                _, model.alpha = apply_constraints(model.templates, model.alpha)

            if epoch % config.validation_period == 0 or epoch == config.epochs:
                if val_graphs:
                    val_acc = evaluate(model, val_graphs, val_labels, options, pool)
                elif static and len(static_X) == n:
                    # distances are frozen; score the head on the cached matrix
                    X_all = np.stack([static_X[i] for i in range(n)])
                    logits, _ = mlp_forward(X_all, model.head, train=False)
                    val_acc = float((logits.argmax(axis=1) == train_labels).mean())
                else:
                    val_acc = evaluate(model, train_graphs, train_labels, options, pool)
                history.append({"epoch": epoch, "fold": fold,
                                "train_loss": epoch_loss / max(batches, 1),
                                "val_acc": val_acc, "alpha": model.alpha})
                if val_acc > best_val:
                    best_val = val_acc
                    best_state = _snapshot(model)
                if on_validation is not None:
                    on_validation(epoch, model, val_acc)
    finally:
        if pool is not None:
            pool.shutdown()
    if best_state is not None:
        model = _restore(model, best_state)
    return model, history


def _snapshot(model: TfgwModel):
    return {name: arr.copy() for name, arr in model.state_arrays().items()} | {
        "alpha": model.alpha}


def _restore(model: TfgwModel, snap) -> TfgwModel:
    model = copy.deepcopy(model)
    arrays = model.state_arrays()
    for name, arr in arrays.items():
        arr[...] = snap[name]
    model.alpha = snap["alpha"]
    return model


def stratified_split(labels: np.ndarray, fraction: float, seed: int):
    """Indices of a stratified held-out subset and its complement."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    held, rest = [], []
    for c in np.unique(labels):
        idx = rng.permutation(np.where(labels == c)[0])
        k = int(round(fraction * len(idx)))
        held.extend(idx[:k])
        rest.extend(idx[k:])
    return np.sort(np.array(rest, dtype=np.int64)), np.sort(np.array(held, dtype=np.int64))


def stratified_folds(labels: np.ndarray, folds: int, seed: int) -> list[np.ndarray]:
    """Partition indices into stratified validation folds."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    assignments = [[] for _ in range(folds)]
    for c in np.unique(labels):
        idx = rng.permutation(np.where(labels == c)[0])
        if len(idx) < folds:
            raise ValueError(f"class {c} has fewer samples than folds")
        for pos, i in enumerate(idx):
            assignments[pos % folds].append(i)
    return [np.sort(np.array(a, dtype=np.int64)) for a in assignments]


@dataclass
class FoldReport:
    fold: int
    history: list[dict]
    best_epoch: int
    best_val_acc: float


def cross_validate(dataset: LabeledDataset, config: TrainConfig):
    """Holdout + k-fold protocol.

    A stratified holdout is carved out first and never touched during
    training or selection; the remaining data is split into stratified
    folds, each trained with periodic validation.  The reported model is
    the per-fold best checkpoint taken at the epoch with maximal cross-fold
    average validation accuracy.
    Returns (fold reports, holdout accuracy, selected model).
    """
    labels = dataset.labels
    rest_idx, hold_idx = stratified_split(labels, config.holdout_fraction, config.seed)
    rest_labels = labels[rest_idx]
    folds = stratified_folds(rest_labels, config.folds, config.seed + 17)
    options = _cg_options(config)

    reports: list[FoldReport] = []
    fold_models: list[TfgwModel] = []
    fold_snapshots: list[dict[int, dict]] = []  # epoch -> model snapshot
    fold_curves: list[dict[int, float]] = []
    for f, val_pos in enumerate(folds):
        val_mask = np.zeros(len(rest_idx), dtype=bool)
        val_mask[val_pos] = True
        tr = rest_idx[~val_mask]
        va = rest_idx[val_mask]
        snapshots: dict[int, dict] = {}
        curve: dict[int, float] = {}

        def capture(epoch, model, val_acc, snapshots=snapshots, curve=curve):
            # deduplicate the final epoch when it is not a period multiple
            snapshots[epoch] = _snapshot(model)
            curve[epoch] = val_acc

        model, history = train([dataset.graphs[i] for i in tr], labels[tr], config,
                               dataset.class_count, [dataset.graphs[i] for i in va],
                               labels[va], fold=f, on_validation=capture)
        best_epoch = max(curve, key=lambda e: (curve[e], -e))
        reports.append(FoldReport(f, history, best_epoch, curve[best_epoch]))
        fold_models.append(model)
        fold_snapshots.append(snapshots)
        fold_curves.append(curve)

    epochs = sorted(set.intersection(*(set(c) for c in fold_curves)))
    avg = {e: float(np.mean([c[e] for c in fold_curves])) for e in epochs}
    e_star = max(epochs, key=lambda e: (avg[e], -e))
    best_fold = max(range(len(folds)), key=lambda f: (fold_curves[f][e_star], -f))
    final = _restore(fold_models[best_fold], fold_snapshots[best_fold][e_star])
    holdout_acc = evaluate(final, [dataset.graphs[i] for i in hold_idx],
                           labels[hold_idx], options)
    return reports, holdout_acc, final


def pca_project(X: np.ndarray, dims: int = 2):
    """Mean-centered PCA via eigen-decomposition of the covariance.

    Sign convention: the largest-magnitude entry of each component is
    positive.  Returns (projected coordinates, components as rows).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < dims:
        raise ValueError("need at least as many samples as output dimensions")
    Xc = X - X.mean(axis=0)
    cov = Xc.T @ Xc / max(X.shape[0] - 1, 1)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1][:dims]
    comps = vecs[:, order].T
    for i in range(comps.shape[0]):
        j = np.argmax(np.abs(comps[i]))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    return Xc @ comps.T, comps
