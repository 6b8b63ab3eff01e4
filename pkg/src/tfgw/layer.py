"""Template-distance embedding layer.

Forward: the vector of FGW distances from a graph to K learnable template
triples.  Backward: gradients of a weighted sum of those distances with the
optimal couplings held fixed (envelope theorem), plus the projections that
keep template parameters feasible after a gradient step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fgw import CgOptions, solve_fgw


@dataclass
class Template:
    """Learnable reference graph: structure, features and simplex node weights.

    Zero-weight nodes are pruned from every solve but stay in the arrays so
    checkpoints keep the declared size.
    """

    structure: np.ndarray
    features: np.ndarray
    weights: np.ndarray
    adjacency_domain: bool = True  # clamp structure to [0, 1] instead of R+

    def __post_init__(self):
        self.structure = np.asarray(self.structure, dtype=np.float64)
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        self.weights = np.asarray(self.weights, dtype=np.float64)

    @property
    def active_index(self) -> np.ndarray:
        return np.where(self.weights > 0.0)[0]

    @property
    def active_size(self) -> int:
        return int(np.count_nonzero(self.weights > 0.0))

    def active_triple(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        idx = self.active_index
        if idx.size == 0:
            raise ValueError("template has no active nodes (all weights zero)")
        return (self.structure[np.ix_(idx, idx)], self.features[idx], self.weights[idx])


@dataclass
class TfgwForwardRecord:
    distances: np.ndarray
    couplings: list  # coupling per template, on active template nodes
    parts: list[tuple[float, float]]  # (gw_part, w_part) per template
    active_indices: list[np.ndarray]
    lp_degenerate: bool = False


@dataclass
class TfgwGrads:
    d_structure: list[np.ndarray]
    d_features: list[np.ndarray]
    d_weights: list[np.ndarray]
    d_alpha: float
    d_graph_features: np.ndarray


def tfgw_forward(graph, templates: list[Template], alpha: float,
                 options: CgOptions | None = None, pool=None) -> TfgwForwardRecord:
    """Distance vector from a graph to each template (pruned to active nodes)."""
    options = options or CgOptions()

    def solve_one(tmpl):
        return solve_fgw(graph, tmpl.active_triple(), alpha, options)

    if pool is not None:
        results = list(pool.map(solve_one, templates))
    else:
        results = [solve_one(t) for t in templates]
    return TfgwForwardRecord(
        distances=np.array([r.value for r in results]),
        couplings=[r.coupling for r in results],
        parts=[(r.gw_part, r.w_part) for r in results],
        active_indices=[t.active_index for t in templates],
        lp_degenerate=any(r.lp_degenerate for r in results),
    )


def tfgw_backward(graph, templates: list[Template], alpha: float,
                  record: TfgwForwardRecord, upstream: np.ndarray) -> TfgwGrads:
    """Envelope-theorem gradients of sum_k upstream[k] * distances[k].

    Each coupling from the forward record is held fixed; only the explicit
    dependence of the cost on the parameters is differentiated.
    """
    C = np.asarray(graph.structure, dtype=np.float64)
    F = np.atleast_2d(np.asarray(graph.features, dtype=np.float64))
    h = np.asarray(graph.weights, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != record.distances.shape:
        raise ValueError("upstream length must match the number of templates")

    d_structure, d_features, d_weights = [], [], []
    d_alpha = 0.0
    dF = np.zeros_like(F)
    for k, tmpl in enumerate(templates):
        idx = record.active_indices[k]
        T = record.couplings[k].plan
        if T.shape != (C.shape[0], idx.size):
            raise ValueError("stale forward record: coupling shape mismatch")
        Cb = tmpl.structure[np.ix_(idx, idx)]
        Fb = tmpl.features[idx]
        hb = tmpl.weights[idx]
        w = upstream[k]
        gw_part, w_part = record.parts[k]

        dC = np.zeros_like(tmpl.structure)
        dC[np.ix_(idx, idx)] = w * 2.0 * alpha * (Cb * np.outer(hb, hb) - T.T @ C @ T)
        dFk = np.zeros_like(tmpl.features)
        dFk[idx] = w * 2.0 * (1.0 - alpha) * (hb[:, None] * Fb - T.T @ F)
        dh = np.zeros_like(tmpl.weights)
        dh[idx] = w * (alpha * 2.0 * ((Cb * Cb) @ hb)
                       + (1.0 - alpha) * (Fb * Fb).sum(axis=1))
        d_structure.append(dC)
        d_features.append(dFk)
        d_weights.append(dh)
        d_alpha += w * (gw_part - w_part)
        dF += w * 2.0 * (1.0 - alpha) * (h[:, None] * F - T @ Fb)
    return TfgwGrads(d_structure, d_features, d_weights, float(d_alpha), dF)


def simplex_project(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort and threshold)."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("cannot project an empty vector")
    if np.all(v >= 0.0) and abs(v.sum() - 1.0) <= 1e-12:
        return v.copy()  # already feasible; keeps the projection idempotent
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.nonzero(u * np.arange(1, v.size + 1) > css)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def apply_constraints(templates: list[Template], alpha: float) -> tuple[list[Template], float]:
    """Project template parameters and alpha back onto their feasible sets."""
    for tmpl in templates:
        C = 0.5 * (tmpl.structure + tmpl.structure.T)
        if tmpl.adjacency_domain:
            C = np.clip(C, 0.0, 1.0)
        else:
            C = np.maximum(C, 0.0)
        tmpl.structure = C
        tmpl.weights = simplex_project(tmpl.weights)
    return templates, float(min(max(alpha, 0.0), 1.0))
