"""Seeded k-means, agglomerative clustering, diagonal GMM and the ASR curve.

The three clusterings mint the centroid nodes of the threat graph: k-means on
attack-success-rate metadata, agglomerative on stealth/evasion metrics and a
Gaussian mixture on compute cost.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError
from .features import FeatureMatrix

DEFAULT_K = {"asr": 15, "stealth": 10, "cost": 8}
VARIANCE_FLOOR = 1e-6


class Method(str, enum.Enum):
    KMEANS = "KMEANS"
    AGGLOMERATIVE = "AGGLOMERATIVE"
    GMM = "GMM"


@dataclass(frozen=True, eq=False)
class ClusterModel:
    method: Method
    k: int
    centroids: np.ndarray
    assignments: dict
    weights: Optional[np.ndarray] = None
    variances: Optional[np.ndarray] = None
    # per-iteration SSE (k-means), log-likelihood (GMM) or merge list (agglomerative)
    trace: tuple = field(default=(), compare=False)

    def __eq__(self, other):
        if not isinstance(other, ClusterModel):
            return NotImplemented
        return (
            self.method == other.method
            and self.k == other.k
            and self.assignments == other.assignments
            and _same(self.centroids, other.centroids)
            and _same(self.weights, other.weights)
            and _same(self.variances, other.variances)
        )

    __hash__ = None

    def members(self, index: int) -> list:
        return sorted(e for e, c in self.assignments.items() if c == index)

    def to_dict(self) -> dict:
        out = {
            "method": self.method.value,
            "k": self.k,
            "centroids": self.centroids.tolist(),
            "assignments": dict(sorted(self.assignments.items())),
        }
        if self.weights is not None:
            out["weights"] = self.weights.tolist()
            out["variances"] = self.variances.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ClusterModel":
        return cls(
            method=Method(data["method"]),
            k=int(data["k"]),
            centroids=np.asarray(data["centroids"], dtype=float),
            assignments={str(e): int(c) for e, c in data["assignments"].items()},
            weights=None if "weights" not in data else np.asarray(data["weights"], dtype=float),
            variances=None if "variances" not in data else np.asarray(data["variances"], dtype=float),
        )


def _same(a, b) -> bool:
    if a is None or b is None:
        return a is b
    return np.array_equal(a, b)


def _check_k(points: FeatureMatrix, k: int):
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    if k > len(points):
        raise DomainError(f"k={k} exceeds the number of points ({len(points)})")


def _sq_dists(X, C):
    diff = X[:, None, :] - C[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _kmeanspp(X, k, rng):
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(X, X[chosen]).min(axis=1)
    while len(chosen) < k:
        total = d2.sum()
        if total <= 0.0:
            # only duplicates left; take the first unchosen point
            nxt = next(i for i in range(n) if i not in chosen)
        else:
            nxt = int(rng.choice(n, p=d2 / total))
        chosen.append(nxt)
        d2 = np.minimum(d2, _sq_dists(X, X[[nxt]])[:, 0])
    return X[chosen].copy()


def _lloyd(X, centroids, max_iter=300):
    labels = None
    sse_trace = []
    for _ in range(max_iter):
        d2 = _sq_dists(X, centroids)
        new = d2.argmin(axis=1)  # argmin keeps the lowest index on ties
        sse_trace.append(float(d2[np.arange(len(X)), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(centroids.shape[0]):
            mask = labels == c
            if mask.any():
                centroids[c] = X[mask].mean(axis=0)
    return labels, centroids, sse_trace


def kmeans(points: FeatureMatrix, k: int, seed: int = 0, max_iter: int = 300) -> ClusterModel:
    """Lloyd's algorithm from k-means++ seeding."""
    _check_k(points, k)
    X = points.values
    rng = np.random.default_rng(seed)
    labels, centroids, trace = _lloyd(X, _kmeanspp(X, k, rng), max_iter)
    return ClusterModel(
        method=Method.KMEANS,
        k=k,
        centroids=centroids,
        assignments={e: int(c) for e, c in zip(points.rows, labels)},
        trace=tuple(trace),
    )


def agglomerative(points: FeatureMatrix, k: int, linkage: str = "average") -> ClusterModel:
    """Bottom-up merging until ``k`` clusters remain.

    Clusters are labelled by their smallest member index; among equally close
    pairs the lexicographically smallest label pair merges first. Final
    cluster indices follow the order of those labels.
    """
    _check_k(points, k)
    if linkage not in ("average", "single", "complete"):
        raise DomainError(f"unknown linkage {linkage!r}")
    X = points.values
    n = X.shape[0]
    D = np.sqrt(_sq_dists(X, X))
    D[np.diag_indices(n)] = np.inf
    size = np.ones(n)
    active = np.ones(n, dtype=bool)
    members = {i: [i] for i in range(n)}
    merges = []
    upper = np.triu(np.ones((n, n), dtype=bool), 1)
    for _ in range(n - k):
        masked = np.where(upper & active[:, None] & active[None, :], D, np.inf)
        flat = int(np.argmin(masked))
        i, j = divmod(flat, n)
        merges.append((i, j, float(D[i, j])))
        if linkage == "average":
            row = (size[i] * D[i] + size[j] * D[j]) / (size[i] + size[j])
        elif linkage == "single":
            row = np.minimum(D[i], D[j])
        else:
            row = np.maximum(D[i], D[j])
        D[i, :] = row
        D[:, i] = row
        D[i, i] = np.inf
        active[j] = False
        size[i] += size[j]
        members[i].extend(members.pop(j))
    labels_order = sorted(members)
    assignments, centroids = {}, []
    for c, label in enumerate(labels_order):
        idx = sorted(members[label])
        centroids.append(X[idx].mean(axis=0))
        for p in idx:
            assignments[points.rows[p]] = c
    return ClusterModel(
        method=Method.AGGLOMERATIVE,
        k=k,
        centroids=np.array(centroids),
        assignments=assignments,
        trace=tuple(merges),
    )


def _log_gauss(X, means, variances):
    # (n, k) matrix of log N(x | mean_c, diag(var_c))
    d = X.shape[1]
    diff = X[:, None, :] - means[None, :, :]
    return -0.5 * (
        d * math.log(2 * math.pi)
        + np.log(variances).sum(axis=1)[None, :]
        + (diff * diff / variances[None, :, :]).sum(axis=2)
    )


def _logsumexp(a):
    m = a.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=1, keepdims=True)))[:, 0]


def gmm_fit(points: FeatureMatrix, k: int, seed: int = 0, max_iter: int = 200, tol: float = 1e-8) -> ClusterModel:
    """EM for a diagonal-covariance mixture, initialised from :func:`kmeans`."""
    _check_k(points, k)
    X = points.values
    n = X.shape[0]
    init = kmeans(points, k, seed)
    labels = np.array([init.assignments[e] for e in points.rows])
    means = init.centroids.copy()
    global_var = np.maximum(X.var(axis=0), VARIANCE_FLOOR)
    variances = np.empty_like(means)
    weights = np.empty(k)
    for c in range(k):
        mask = labels == c
        if mask.any():
            variances[c] = np.maximum(X[mask].var(axis=0), VARIANCE_FLOOR)
            weights[c] = mask.sum() / n
        else:
            variances[c] = global_var
            weights[c] = 1.0 / n
    weights /= weights.sum()

    trace = []
    prev = -np.inf
    for _ in range(max_iter):
        joint = _log_gauss(X, means, variances) + np.log(weights)[None, :]
        norm = _logsumexp(joint)
        ll = float(norm.sum())
        trace.append(ll)
        if ll - prev < tol:
            break
        prev = ll
        resp = np.exp(joint - norm[:, None])
        nk = resp.sum(axis=0)
        nk_safe = np.maximum(nk, np.finfo(float).tiny)
        weights = nk / n
        means = (resp.T @ X) / nk_safe[:, None]
        sq = (resp.T @ (X * X)) / nk_safe[:, None] - means * means
        variances = np.maximum(sq, VARIANCE_FLOOR)
        weights = np.maximum(weights, np.finfo(float).tiny)
        weights /= weights.sum()

    joint = _log_gauss(X, means, variances) + np.log(weights)[None, :]
    labels = joint.argmax(axis=1)
    return ClusterModel(
        method=Method.GMM,
        k=k,
        centroids=means,
        assignments={e: int(c) for e, c in zip(points.rows, labels)},
        weights=weights,
        variances=variances,
        trace=tuple(trace),
    )


def asr_curve(lam: float, queries: int) -> float:
    """Attack success rate after ``queries`` queries: 1 - exp(-lam * Q)."""
    if not lam > 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    if queries < 0:
        raise DomainError(f"query budget must be non-negative, got {queries}")
    return -math.expm1(-lam * queries)


# --- ASR study fixture --------------------------------------------------------

@dataclass(frozen=True)
class AsrStudy:
    attack_type: str
    target_model: str
    dataset: str
    asr_percent: Optional[float]
    asr_text: str
    source: str


def _parse_asr(text: str) -> Optional[float]:
    text = text.strip()
    if not text:
        return None
    # "63-69" is a range; qualitative cells such as "Varies" carry no number
    m = re.fullmatch(r"(\d+(?:\.\d+)?)(?:\s*-\s*(\d+(?:\.\d+)?))?", text)
    if m is None:
        return None
    if m.group(2) is None:
        return float(m.group(1))
    return (float(m.group(1)) + float(m.group(2))) / 2.0


def load_asr_studies(document) -> list[AsrStudy]:
    """Read the ASR study CSV; ranges like ``63-69`` become their midpoint, text cells ``None``."""
    if isinstance(document, (bytes, bytearray)):
        document = document.decode("utf-8")
    lines = [line for line in document.splitlines() if not line.startswith("#")]
    reader = csv.DictReader(io.StringIO("\n".join(lines)))
    out = []
    for row in reader:
        out.append(
            AsrStudy(
                attack_type=row["attack_type"],
                target_model=row["target_model"],
                dataset=row["dataset"],
                asr_percent=_parse_asr(row["asr_percent"]),
                asr_text=row["asr_percent"],
                source=row["source"],
            )
        )
    return out


def effective_k(requested: int, n_points: int) -> int:
    return max(1, min(requested, n_points))


METRIC_COLUMNS = ("asr", "stealth", "cost")


def load_cve_attributes(document) -> dict:
    """Per-CVE ``asr``, ``stealth`` and ``cost`` metrics as one FeatureMatrix per column."""
    if isinstance(document, (bytes, bytearray)):
        document = document.decode("utf-8")
    lines = [line for line in document.splitlines() if not line.startswith("#")]
    rows = list(csv.DictReader(io.StringIO("\n".join(lines))))
    ids = [r["cve_id"] for r in rows]
    if len(set(ids)) != len(ids):
        raise DomainError("duplicate cve_id in attribute table")
    try:
        return {col: FeatureMatrix(tuple(ids), np.array([float(r[col]) for r in rows])) for col in METRIC_COLUMNS}
    except (KeyError, ValueError) as exc:
        raise DomainError(f"bad attribute table: {exc}") from None
