"""Relational message-passing severity model.

Each layer computes ``H' = ReLU(sum_r A_r H W_r + H W_0)`` where ``A_r`` is
the mean in-adjacency of relation ``r`` (all seven edge families and their
reverses). A two-layer head maps the final embeddings to ``s_hat`` in (0, 1).
Gradients are derived by hand; training is plain full-batch gradient descent.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, NamedTuple, Optional

import numpy as np
from scipy import stats

from .errors import DomainError, FormatError, KindError, NodeLookupError, ShapeError, TrainingError
from .graph import RELATIONS, Edge, NodeKind, ThreatGraph, remove_edge_family
from .scoring import priority_bucket

CHECKPOINT_HEADER = "threatgraph-sevnet 1"


@dataclass(frozen=True)
class SevNetConfig:
    layers: int = 2
    hidden_dims: int = 16
    learning_rate: float = 0.5
    epochs: int = 500
    seed: int = 0
    high_sev_weight_alpha: float = 2.0
    train_fraction: float = 0.8

    def __post_init__(self):
        if self.layers < 1:
            raise DomainError(f"layers must be >= 1, got {self.layers}")
        if self.hidden_dims < 1:
            raise DomainError(f"hidden_dims must be >= 1, got {self.hidden_dims}")
        if not self.learning_rate > 0:
            raise DomainError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 0:
            raise DomainError(f"epochs must be >= 0, got {self.epochs}")
        if not 0.0 < self.train_fraction <= 1.0:
            raise DomainError(f"train_fraction must lie in (0, 1], got {self.train_fraction}")


def param_shapes(input_dims: int, cfg: SevNetConfig) -> dict:
    """Parameter names and shapes in their canonical order."""
    shapes = {}
    d_in = input_dims
    for layer in range(cfg.layers):
        shapes[f"layer{layer}.W0"] = (d_in, cfg.hidden_dims)
        for rel in RELATIONS:
            shapes[f"layer{layer}.{rel.name}"] = (d_in, cfg.hidden_dims)
        d_in = cfg.hidden_dims
    shapes["head.U1"] = (d_in, cfg.hidden_dims)
    shapes["head.b1"] = (cfg.hidden_dims,)
    shapes["head.u2"] = (cfg.hidden_dims,)
    shapes["head.b2"] = ()
    return shapes


@dataclass(frozen=True)
class SevNetModel:
    config: SevNetConfig
    input_dims: int
    params: dict = field(repr=False)
    loss_trace: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        expected = param_shapes(self.input_dims, self.config)
        if list(self.params) != list(expected):
            raise ShapeError("parameter names do not match the configured architecture")
        for name, shape in expected.items():
            arr = np.asarray(self.params[name], dtype=float)
            if arr.shape != shape:
                raise ShapeError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.isfinite(arr).all():
                raise ShapeError(f"{name} holds non-finite values")

    def with_params(self, params: dict, loss_trace=None) -> "SevNetModel":
        trace = self.loss_trace if loss_trace is None else tuple(loss_trace)
        return SevNetModel(self.config, self.input_dims, params, trace)


def init_model(input_dims: int, cfg: SevNetConfig) -> SevNetModel:
    rng = np.random.default_rng(cfg.seed)
    params = {}
    for name, shape in param_shapes(input_dims, cfg).items():
        params[name] = rng.uniform(-0.1, 0.1, size=shape)
    return SevNetModel(cfg, input_dims, params)


def zero_model(input_dims: int, cfg: SevNetConfig) -> SevNetModel:
    params = {name: np.zeros(shape) for name, shape in param_shapes(input_dims, cfg).items()}
    return SevNetModel(cfg, input_dims, params)


# --- forward / backward ----------------------------------------------------------

def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _check_dims(model: SevNetModel, g: ThreatGraph):
    if g.dims != model.input_dims:
        raise ShapeError(f"graph feature dims {g.dims} do not match model input dims {model.input_dims}")


def _forward_cache(model: SevNetModel, g: ThreatGraph):
    _check_dims(model, g)
    p = model.params
    adj = g.mean_adjacency
    H = g.feature_matrix
    cache = []
    for layer in range(model.config.layers):
        Z = H @ p[f"layer{layer}.W0"]
        aggs = {}
        for rel in RELATIONS:
            A = adj[rel]
            if A.nnz == 0:
                continue
            M = A @ H
            aggs[rel] = M
            Z = Z + M @ p[f"layer{layer}.{rel.name}"]
        cache.append((H, aggs, Z))
        H = np.maximum(Z, 0.0)
    P = np.tanh(H @ p["head.U1"] + p["head.b1"])
    out = P @ p["head.u2"] + p["head.b2"]
    return cache, H, P, _sigmoid(out)


def forward(model: SevNetModel, g: ThreatGraph) -> dict:
    """Map every node id to its predicted severity in (0, 1)."""
    if len(g) == 0:
        return {}
    s = _forward_cache(model, g)[3]
    return dict(zip(g.node_ids, (float(x) for x in s)))


def _label_arrays(g: ThreatGraph, targets: Mapping[str, float], alpha: float):
    idx, t = [], []
    for nid in sorted(targets):
        node = g.node(nid)
        if node.kind != NodeKind.CVE:
            raise KindError(f"target {nid!r} is a {node.kind.value} node, not a CVE")
        value = float(targets[nid])
        if not 0.0 <= value <= 1.0:
            raise DomainError(f"target for {nid} is {value}, outside [0, 1]")
        idx.append(g.index[nid])
        t.append(value)
    t = np.array(t)
    return np.array(idx, dtype=np.int64), t, 1.0 + alpha * t


def loss_and_gradients(model: SevNetModel, g: ThreatGraph, targets: Mapping[str, float]):
    """Weighted MSE ``mean_v (1 + alpha s_v)(s_hat_v - s_v)^2`` and its gradients."""
    idx, t, w = _label_arrays(g, targets, model.config.high_sev_weight_alpha)
    n = len(idx)
    if n == 0:
        raise DomainError("no labelled nodes")
    p = model.params
    cache, H_last, P, s = _forward_cache(model, g)
    resid = s[idx] - t
    loss = float(np.dot(w, resid * resid) / n)

    grads = {}
    ds = np.zeros_like(s)
    ds[idx] = 2.0 * w * resid / n
    do = ds * s * (1.0 - s)
    grads["head.b2"] = np.array(do.sum())
    grads["head.u2"] = P.T @ do
    dQ = np.outer(do, p["head.u2"]) * (1.0 - P * P)
    grads["head.b1"] = dQ.sum(axis=0)
    grads["head.U1"] = H_last.T @ dQ
    dH = dQ @ p["head.U1"].T

    adj = g.mean_adjacency
    for layer in reversed(range(model.config.layers)):
        H, aggs, Z = cache[layer]
        dZ = dH * (Z > 0)
        W0 = p[f"layer{layer}.W0"]
        grads[f"layer{layer}.W0"] = H.T @ dZ
        dH = dZ @ W0.T
        for rel in RELATIONS:
            name = f"layer{layer}.{rel.name}"
            if rel not in aggs:
                grads[name] = np.zeros_like(p[name])
                continue
            grads[name] = aggs[rel].T @ dZ
            dH = dH + adj[rel].T @ (dZ @ p[name].T)

    ordered = {name: np.asarray(grads[name]).reshape(np.shape(p[name])) for name in p}
    return loss, ordered


def loss_value(model: SevNetModel, g: ThreatGraph, targets: Mapping[str, float]) -> float:
    idx, t, w = _label_arrays(g, targets, model.config.high_sev_weight_alpha)
    s = _forward_cache(model, g)[3]
    resid = s[idx] - t
    return float(np.dot(w, resid * resid) / len(idx))


# --- training ----------------------------------------------------------------------

def train(g: ThreatGraph, targets: Mapping[str, float], cfg: SevNetConfig) -> SevNetModel:
    """Full-batch gradient descent from a seeded initialisation.

    The returned model carries ``loss_trace``: the loss before each update
    followed by the final loss.
    """
    if len(targets) < 2:
        raise DomainError(f"need at least 2 labelled nodes, got {len(targets)}")
    for nid in targets:
        if nid not in g:
            raise NodeLookupError(f"target {nid!r} is not in the graph")
    model = init_model(g.dims, cfg)
    params = {k: v.copy() for k, v in model.params.items()}
    trace = []
    # overflow shows up as a non-finite loss, which is reported below
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.epochs):
            try:
                loss, grads = loss_and_gradients(model.with_params(params), g, targets)
            except ShapeError:
                raise TrainingError(f"parameters became non-finite at epoch {epoch}", epoch) from None
            if not math.isfinite(loss):
                raise TrainingError(f"loss became non-finite at epoch {epoch}", epoch)
            trace.append(loss)
            for name in params:
                params[name] = params[name] - cfg.learning_rate * grads[name]
        try:
            final = loss_value(model.with_params(params), g, targets)
        except ShapeError:
            final = math.nan
    if not math.isfinite(final) or not all(np.isfinite(v).all() for v in params.values()):
        raise TrainingError(f"loss became non-finite at epoch {cfg.epochs}", cfg.epochs)
    trace.append(final)
    return model.with_params(params, trace)


def split_targets(targets: Mapping[str, float], fraction: float, seed: int):
    """Seeded shuffle of the sorted ids; first ``fraction`` trains, the rest is held out."""
    ids = sorted(targets)
    order = np.random.default_rng(seed).permutation(len(ids))
    n_train = max(1, min(len(ids), int(round(fraction * len(ids)))))
    train_ids = sorted(ids[i] for i in order[:n_train])
    held_ids = sorted(ids[i] for i in order[n_train:])
    return {i: targets[i] for i in train_ids}, {i: targets[i] for i in held_ids}


class Metrics(NamedTuple):
    spearman_rho: float
    kendall_tau: float
    prec_at_k: float


def top_k(scores: Mapping[str, float], k: int) -> list:
    """Ids of the ``k`` highest scores, ties broken by ascending id."""
    return sorted(scores, key=lambda i: (-scores[i], i))[:k]


def evaluate(pred: Mapping[str, float], truth: Mapping[str, float], k: int = 10) -> Metrics:
    """Spearman (average-rank ties), Kendall tau-b and precision at ``k``.

    A correlation that is undefined because one side is constant is reported as 0.
    """
    shared = sorted(set(pred) & set(truth))
    if len(shared) < 2:
        raise DomainError(f"need at least 2 shared ids, got {len(shared)}")
    if not 1 <= k <= len(shared):
        raise DomainError(f"k={k} must lie in [1, {len(shared)}]")
    p = np.array([pred[i] for i in shared], dtype=float)
    t = np.array([truth[i] for i in shared], dtype=float)
    rho = stats.spearmanr(p, t).statistic if np.ptp(p) > 0 and np.ptp(t) > 0 else 0.0
    tau = stats.kendalltau(p, t).statistic if np.ptp(p) > 0 and np.ptp(t) > 0 else 0.0
    sp = {i: pred[i] for i in shared}
    st = {i: truth[i] for i in shared}
    prec = len(set(top_k(sp, k)) & set(top_k(st, k))) / k
    return Metrics(float(rho), float(tau), float(prec))


def fit_and_evaluate(g: ThreatGraph, targets: Mapping[str, float], cfg: SevNetConfig, k: int = 10):
    """Train on the seeded split and score the held-out part. Returns (model, metrics, held_out)."""
    train_part, held = split_targets(targets, cfg.train_fraction, cfg.seed)
    if len(held) < 2:
        raise DomainError("held-out split has fewer than 2 nodes")
    model = train(g, train_part, cfg)
    pred = forward(model, g)
    return model, evaluate(pred, held, min(k, len(held))), held


def ablate_edge_family(g: ThreatGraph, targets: Mapping[str, float], cfg: SevNetConfig, r, k: int = 10) -> float:
    """Held-out rho on the full graph minus rho with edge family ``r`` removed."""
    _, full, _ = fit_and_evaluate(g, targets, cfg, k)
    _, reduced, _ = fit_and_evaluate(remove_edge_family(g, r), targets, cfg, k)
    return full.spearman_rho - reduced.spearman_rho


# --- evidence paths ----------------------------------------------------------------

@dataclass(frozen=True)
class EvidencePath:
    target: str
    path: tuple
    contribution: float

    def describe(self) -> str:
        if not self.path:
            return self.target
        hops = [self.path[0].src]
        for e in self.path:
            hops.append(f"-[{e.relation.name}]-> {e.dst}")
        return " ".join(hops)


def candidate_chains(g: ThreatGraph, target: str, max_len: int) -> list:
    """All simple edge chains of length 1..max_len that end at ``target``.

    Chains follow message direction, so each edge's ``dst`` is the next
    edge's ``src``; they are returned far end first.
    """
    incoming: dict = {}
    for e in g.edges:
        incoming.setdefault(e.dst, []).append(e)
    out = []

    def grow(chain, visited):
        out.append(tuple(chain))
        if len(chain) == max_len:
            return
        head = chain[0].src
        for e in incoming.get(head, ()):
            if e.src not in visited:
                grow([e] + chain, visited | {e.src})

    for e in incoming.get(target, ()):
        if e.src != target:
            grow([e], {target, e.src})
    return out


def _path_key(path):
    return tuple(e.sort_key() for e in path)


def evidence_paths(model: SevNetModel, g: ThreatGraph, target: str, max_len: int = 3, top_n: int = 5) -> list:
    """Rank chains ending at ``target`` by how much removing them lowers its score."""
    g.node(target)
    if max_len < 1 or top_n < 0:
        raise DomainError("max_len must be >= 1 and top_n >= 0")
    chains = candidate_chains(g, target, min(max_len, model.config.layers))
    if not chains:
        return []
    base = forward(model, g)[target]
    raw = []
    for chain in chains:
        reduced = forward(model, g.without_edges(chain))[target]
        raw.append(max(0.0, base - reduced))
    top = max(raw)
    scaled = [x / top if top > 0 else 0.0 for x in raw]
    ranked = sorted(zip(scaled, chains), key=lambda item: (-item[0], _path_key(item[1])))
    return [EvidencePath(target, chain, c) for c, chain in ranked[:top_n]]


# --- persistence ---------------------------------------------------------------------

def save_checkpoint(model: SevNetModel, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(CHECKPOINT_HEADER + "\n")
        fh.write("config " + json.dumps(asdict(model.config), sort_keys=True) + "\n")
        fh.write(f"input_dims {model.input_dims}\n")
        fh.write("relations " + " ".join(r.name for r in RELATIONS) + "\n")
        for name, arr in model.params.items():
            arr = np.asarray(arr, dtype=float)
            fh.write(f"param {name} {' '.join(str(d) for d in arr.shape)}".rstrip() + "\n")
            fh.write(" ".join(repr(float(x)) for x in arr.ravel()) + "\n")
        fh.write("end\n")


def load_checkpoint(path) -> SevNetModel:
    with open(path) as fh:
        lines = fh.read().split("\n")
    try:
        if lines[0] != CHECKPOINT_HEADER:
            raise FormatError(f"not a checkpoint (header {lines[0]!r})")
        cfg = SevNetConfig(**json.loads(lines[1].removeprefix("config ")))
        input_dims = int(lines[2].removeprefix("input_dims "))
        relations = lines[3].split()[1:]
        if relations != [r.name for r in RELATIONS]:
            raise FormatError("checkpoint relation list does not match this build")
        params = {}
        i = 4
        while lines[i] != "end":
            head = lines[i].split()
            if head[0] != "param":
                raise FormatError(f"line {i + 1}: expected a param block")
            shape = tuple(int(d) for d in head[2:])
            values = [float(x) for x in lines[i + 1].split()]
            params[head[1]] = np.array(values, dtype=float).reshape(shape)
            i += 2
    except (IndexError, ValueError, TypeError) as exc:
        raise FormatError(f"corrupt checkpoint: {exc}") from exc
    return SevNetModel(cfg, input_dims, params)


def write_predictions(pred: Mapping[str, float], path, ids: Optional[list] = None) -> None:
    """CSV of ``id,s_hat,priority`` for ``ids`` (default: all, sorted)."""
    ids = sorted(pred) if ids is None else ids
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "s_hat", "priority"])
        for nid in ids:
            w.writerow([nid, repr(pred[nid]), priority_bucket(pred[nid]).value])
