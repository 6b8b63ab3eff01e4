"""Graph data model, structure matrices, synthetic generators and TU-format IO.

A graph is a triple (structure matrix, node feature matrix, node weight
vector).  The structure matrix is either a 0/1 adjacency matrix or a
shortest-path hop-count matrix; node weights are a probability vector,
uniform unless stated otherwise.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.sparse.csgraph import shortest_path as _csgraph_shortest_path


class StructureKind(str, Enum):
    ADJACENCY = "adjacency"
    SHORTEST_PATH = "shortest_path"


class GraphValidationError(ValueError):
    pass


class DatasetParseError(ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    """Attributed graph: symmetric structure matrix, node features, node weights."""

    structure: np.ndarray
    features: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.structure, dtype=np.float64)
        F = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        n = C.shape[0]
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise GraphValidationError("structure matrix must be square")
        if not np.allclose(C, C.T, atol=1e-12):
            raise GraphValidationError("structure matrix must be symmetric")
        if not np.all(np.isfinite(C)) or np.any(C < 0):
            raise GraphValidationError("structure entries must be finite and nonnegative")
        if np.any(np.diag(C) != 0):
            raise GraphValidationError("structure diagonal must be zero")
        h = np.asarray(self.weights, dtype=np.float64)
        if h.shape != (n,) or np.any(h < 0) or abs(h.sum() - 1.0) > 1e-12:
            raise GraphValidationError("weights must be a length-n probability vector")
        if F.shape[0] != n:
            raise GraphValidationError("features must have one row per node")
        object.__setattr__(self, "structure", C)
        object.__setattr__(self, "features", F)
        object.__setattr__(self, "weights", h)

    @property
    def node_count(self) -> int:
        return self.structure.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


def uniform_weights(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def make_graph(structure, features=None, weights=None) -> Graph:
    """Build a Graph, defaulting to constant-1 features and uniform weights."""
    C = np.asarray(structure, dtype=np.float64)
    n = C.shape[0]
    if features is None:
        features = np.ones((n, 1))
    if weights is None:
        weights = uniform_weights(n)
    return Graph(C, features, weights)


@dataclass
class LabeledDataset:
    """Graphs with class labels in [0, class_count)."""

    graphs: list[Graph]
    labels: np.ndarray
    class_count: int
    name: str = ""
    structure_kind: StructureKind = StructureKind.ADJACENCY
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.labels) != len(self.graphs):
            raise GraphValidationError("labels and graphs must have the same length")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise GraphValidationError("labels out of range")
        dims = {g.feature_dim for g in self.graphs}
        if len(dims) > 1:
            raise GraphValidationError("all graphs must share feature dimension")

    def __len__(self) -> int:
        return len(self.graphs)

    @property
    def feature_dim(self) -> int:
        return self.graphs[0].feature_dim if self.graphs else 0


def shortest_path_matrix(adjacency: np.ndarray) -> np.ndarray:
    """Hop-count matrix of an undirected 0/1 adjacency matrix.

    Pairs in different components get (max finite hop count) + 1 so the
    output stays finite while ranking farther than any reachable pair.
    """
    A = np.asarray(adjacency, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or not np.allclose(A, A.T, atol=1e-12):
        raise GraphValidationError("adjacency must be a symmetric square matrix")
    D = _csgraph_shortest_path(A, method="D", unweighted=True, directed=False)
    finite = D[np.isfinite(D)]
    if np.any(~np.isfinite(D)):
        D[~np.isfinite(D)] = finite.max() + 1.0
    return D


def degree_features(adjacency: np.ndarray, max_degree: int) -> np.ndarray:
    """One-hot degree features, degrees capped at max_degree."""
    A = np.asarray(adjacency, dtype=np.float64)
    deg = np.minimum((A > 0).sum(axis=1), max_degree).astype(np.int64)
    F = np.zeros((A.shape[0], max_degree + 1))
    F[np.arange(A.shape[0]), deg] = 1.0
    return F


def _cycle_adjacency(order: int, offset: int = 0, n_total: int | None = None) -> np.ndarray:
    n = n_total if n_total is not None else order
    A = np.zeros((n, n))
    for i in range(order):
        j = (i + 1) % order
        A[offset + i, offset + j] = A[offset + j, offset + i] = 1.0
    return A


def _permute_adjacency(A: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    perm = rng.permutation(A.shape[0])
    return A[np.ix_(perm, perm)]


def gen_four_cycles(num_graphs: int, nodes_per_graph: int = 10, seed: int = 0) -> LabeledDataset:
    """Binary dataset: label 1 iff the graph contains a cycle of length 4.

    Label-1 graphs are a disjoint 4-cycle plus an (n-4)-cycle; label-0
    graphs are two disjoint cycles of length n/2 each (n/2 != 4 forces
    n >= 10).  Node order is randomly permuted per graph.
    """
    if num_graphs < 2 or num_graphs % 2 != 0:
        raise GraphValidationError("num_graphs must be even and >= 2")
    if nodes_per_graph < 10 or nodes_per_graph % 2 != 0:
        raise GraphValidationError("nodes_per_graph must be even and >= 10")
    n = nodes_per_graph
    rng = np.random.default_rng(seed)
    graphs, labels = [], []
    pos = _cycle_adjacency(4, 0, n) + _cycle_adjacency(n - 4, 4, n)
    neg = _cycle_adjacency(n // 2, 0, n) + _cycle_adjacency(n // 2, n // 2, n)
    order = rng.permutation(num_graphs)
    for idx in order:
        label = int(idx < num_graphs // 2)
        A = _permute_adjacency(pos if label else neg, rng)
        graphs.append(make_graph(A))
        labels.append(label)
    return LabeledDataset(graphs, np.array(labels), 2, name="four-cycles",
                          structure_kind=StructureKind.ADJACENCY,
                          metadata={"seed": seed, "nodes_per_graph": n})


SKIP_LENGTHS = (2, 3, 4, 5, 6, 9, 11, 12, 13, 16)
SKIP_CIRCLE_NODES = 41


def gen_skip_circles(copies_per_class: int, seed: int = 0) -> LabeledDataset:
    """Ten classes of 41-node circulant graphs, one skip length per class.

    Every sample of a class is the same base circulant under a fresh random
    node permutation; node features are constant 1.
    """
    if copies_per_class < 1:
        raise GraphValidationError("copies_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    n = SKIP_CIRCLE_NODES
    bases = []
    for k in SKIP_LENGTHS:
        A = _cycle_adjacency(n)
        for i in range(n):
            j = (i + k) % n
            A[i, j] = A[j, i] = 1.0
        bases.append(A)
    graphs, labels = [], []
    for c in range(copies_per_class):
        for y, A in enumerate(bases):
            graphs.append(make_graph(_permute_adjacency(A, rng)))
            labels.append(y)
    return LabeledDataset(graphs, np.array(labels), len(SKIP_LENGTHS), name="skip-circles",
                          structure_kind=StructureKind.ADJACENCY,
                          metadata={"seed": seed, "copies_per_class": copies_per_class})


def _read_lines(path: str) -> list[str]:
    with open(path, "r") as f:
        return [line.strip() for line in f if line.strip()]


def load_tu_dataset(directory: str, name: str) -> LabeledDataset:
    """Load a dataset in the standard TU text format.

    Discrete node labels are one-hot encoded; continuous node attributes are
    passed through (concatenated after the one-hot labels when both exist).
    Graph labels are remapped to contiguous 0-based class indices.
    """
    prefix = os.path.join(directory, name + "_")
    for required in ("A.txt", "graph_indicator.txt", "graph_labels.txt"):
        if not os.path.exists(prefix + required):
            raise DatasetParseError(f"missing required file {prefix + required}")

    indicator = []
    for ln, line in enumerate(_read_lines(prefix + "graph_indicator.txt"), 1):
        try:
            indicator.append(int(line))
        except ValueError:
            raise DatasetParseError(f"{name}_graph_indicator.txt:{ln}: not an integer")
    indicator = np.asarray(indicator, dtype=np.int64)
    num_nodes = len(indicator)
    num_graphs = int(indicator.max()) if num_nodes else 0
    if num_nodes and indicator.min() < 1:
        raise DatasetParseError(f"{name}_graph_indicator.txt: graph ids must be 1-based")

    raw_labels = []
    for ln, line in enumerate(_read_lines(prefix + "graph_labels.txt"), 1):
        try:
            raw_labels.append(int(line))
        except ValueError:
            raise DatasetParseError(f"{name}_graph_labels.txt:{ln}: not an integer")
    if len(raw_labels) != num_graphs:
        raise DatasetParseError(f"{name}: expected {num_graphs} graph labels, got {len(raw_labels)}")
    classes = sorted(set(raw_labels))
    labels = np.array([classes.index(y) for y in raw_labels], dtype=np.int64)

    # local node indices within each graph
    node_graph = indicator - 1
    counts = np.bincount(node_graph, minlength=num_graphs)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    order = np.argsort(node_graph, kind="stable")
    local = np.empty(num_nodes, dtype=np.int64)
    for g in range(num_graphs):
        local[order[offsets[g]:offsets[g + 1]]] = np.arange(counts[g])

    adjs = [np.zeros((c, c)) for c in counts]
    for ln, line in enumerate(_read_lines(prefix + "A.txt"), 1):
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise DatasetParseError(f"{name}_A.txt:{ln}: expected 'i, j'")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise DatasetParseError(f"{name}_A.txt:{ln}: not integers")
        if not (1 <= i <= num_nodes and 1 <= j <= num_nodes):
            raise DatasetParseError(f"{name}_A.txt:{ln}: node index out of range")
        gi, gj = node_graph[i - 1], node_graph[j - 1]
        if gi != gj:
            raise DatasetParseError(f"{name}_A.txt:{ln}: edge endpoints in different graphs")
        adjs[gi][local[i - 1], local[j - 1]] = 1.0

    feature_blocks = []
    label_path = prefix + "node_labels.txt"
    if os.path.exists(label_path):
        node_labels = []
        for ln, line in enumerate(_read_lines(label_path), 1):
            try:
                node_labels.append(int(line))
            except ValueError:
                raise DatasetParseError(f"{name}_node_labels.txt:{ln}: not an integer")
        if len(node_labels) != num_nodes:
            raise DatasetParseError(f"{name}: expected {num_nodes} node labels")
        values = sorted(set(node_labels))
        onehot = np.zeros((num_nodes, len(values)))
        for v, lab in enumerate(node_labels):
            onehot[v, values.index(lab)] = 1.0
        feature_blocks.append(onehot)
    attr_path = prefix + "node_attributes.txt"
    if os.path.exists(attr_path):
        rows = []
        for ln, line in enumerate(_read_lines(attr_path), 1):
            try:
                rows.append([float(x) for x in line.split(",")])
            except ValueError:
                raise DatasetParseError(f"{name}_node_attributes.txt:{ln}: bad float")
        if len(rows) != num_nodes:
            raise DatasetParseError(f"{name}: expected {num_nodes} attribute rows")
        feature_blocks.append(np.asarray(rows))
    if feature_blocks:
        features = np.concatenate(feature_blocks, axis=1)
    else:
        features = np.ones((num_nodes, 1))

    graphs = []
    for g in range(num_graphs):
        idx = np.where(node_graph == g)[0]
        A = np.maximum(adjs[g], adjs[g].T)
        np.fill_diagonal(A, 0.0)
        graphs.append(make_graph(A, features[idx][np.argsort(local[idx])]))
    return LabeledDataset(graphs, labels, len(classes), name=name,
                          structure_kind=StructureKind.ADJACENCY)


def save_tu_dataset(dataset: LabeledDataset, directory: str) -> None:
    """Write a dataset as TU text files plus a key=value metadata file."""
    os.makedirs(directory, exist_ok=True)
    name = dataset.name or "dataset"
    prefix = os.path.join(directory, name + "_")
    with open(prefix + "A.txt", "w") as fa, \
         open(prefix + "graph_indicator.txt", "w") as fi, \
         open(prefix + "graph_labels.txt", "w") as fl:
        offset = 0
        for g, (graph, label) in enumerate(zip(dataset.graphs, dataset.labels), 1):
            A = graph.structure
            edges = (A > 0) if dataset.structure_kind is StructureKind.ADJACENCY else (A == 1)
            for i in range(graph.node_count):
                fi.write(f"{g}\n")
                for j in range(graph.node_count):
                    if i != j and edges[i, j]:
                        fa.write(f"{offset + i + 1}, {offset + j + 1}\n")
            fl.write(f"{label}\n")
            offset += graph.node_count
    with open(prefix + "node_attributes.txt", "w") as ff:
        for graph in dataset.graphs:
            for row in graph.features:
                ff.write(", ".join(repr(float(x)) for x in row) + "\n")
    with open(os.path.join(directory, name + "_meta.txt"), "w") as fm:
        fm.write(f"name={name}\n")
        fm.write(f"structure_kind={dataset.structure_kind.value}\n")
        for key, value in dataset.metadata.items():
            fm.write(f"{key}={value}\n")


def apply_structure_kind(dataset: LabeledDataset, kind: StructureKind) -> LabeledDataset:
    """Return a dataset whose structure matrices follow the requested kind.

    Stored graphs keep 0/1 adjacency; shortest-path matrices are derived on
    demand here.
    """
    if kind is StructureKind.ADJACENCY or dataset.structure_kind is kind:
        return LabeledDataset(dataset.graphs, dataset.labels, dataset.class_count,
                              dataset.name, kind, dataset.metadata)
    graphs = [Graph(shortest_path_matrix(g.structure), g.features, g.weights)
              for g in dataset.graphs]
    return LabeledDataset(graphs, dataset.labels, dataset.class_count,
                          dataset.name, kind, dataset.metadata)
