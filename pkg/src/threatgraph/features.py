"""TF-IDF vectors, weighted Jaccard similarity and scalar normalisers."""

from __future__ import annotations

import csv
import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError

_TOKEN_RE = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercased maximal alphanumeric runs of length >= 2."""
    return [t for t in _TOKEN_RE.findall((text or "").lower()) if len(t) >= 2]


@dataclass(frozen=True)
class TfidfModel:
    """Counts-only TF-IDF model.

    ``vocabulary`` is ordered by descending document frequency, ties
    alphabetical, so truncating vectors to the first ``dims`` indices keeps
    the most widely shared terms.
    """

    vocabulary: dict
    doc_count: int
    doc_freq: dict

    def idf(self, term: str) -> float:
        return math.log(self.doc_count / (1 + self.doc_freq[term])) + 1.0

    def idf_vector(self) -> np.ndarray:
        out = np.empty(len(self.vocabulary))
        for term, i in self.vocabulary.items():
            out[i] = self.idf(term)
        return out

    def to_dict(self) -> dict:
        terms = sorted(self.vocabulary, key=self.vocabulary.__getitem__)
        return {"doc_count": self.doc_count, "terms": [[t, self.doc_freq[t]] for t in terms]}

    @classmethod
    def from_dict(cls, data: dict) -> "TfidfModel":
        terms = data["terms"]
        vocab = {t: i for i, (t, _) in enumerate(terms)}
        return cls(vocabulary=vocab, doc_count=int(data["doc_count"]), doc_freq={t: int(df) for t, df in terms})


def fit_tfidf(corpus: Sequence[str]) -> TfidfModel:
    if not corpus:
        raise DomainError("cannot fit TF-IDF on an empty corpus")
    df: Counter = Counter()
    for doc in corpus:
        df.update(set(tokenize(doc)))
    ordered = sorted(df, key=lambda t: (-df[t], t))
    return TfidfModel(
        vocabulary={t: i for i, t in enumerate(ordered)},
        doc_count=len(corpus),
        doc_freq=dict(df),
    )


def vectorize(model: TfidfModel, doc: str, dims: int | None = None) -> np.ndarray:
    """L2-normalised tf*idf vector, truncated or zero-padded to ``dims``.

    ``dims=None`` keeps the full vocabulary width. Unseen terms are ignored.
    """
    if dims is not None and dims < 1:
        raise DomainError(f"dims must be >= 1, got {dims}")
    width = len(model.vocabulary) if dims is None else dims
    vec = np.zeros(width)
    for term, tf in Counter(tokenize(doc)).items():
        i = model.vocabulary.get(term)
        if i is not None and i < width:
            vec[i] = tf * model.idf(term)
    norm = float(np.sqrt(np.dot(vec, vec)))
    if norm > 0:
        vec /= norm
    return vec


def weighted_jaccard(u, v) -> float:
    """sum(min(u, v)) / sum(max(u, v)); 0 when both vectors are zero."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise DomainError(f"dimension mismatch {u.shape} vs {v.shape}")
    if (u < 0).any() or (v < 0).any():
        raise DomainError("weighted Jaccard needs non-negative entries")
    denom = float(np.maximum(u, v).sum())
    if denom == 0.0:
        return 0.0
    return float(np.minimum(u, v).sum()) / denom


def z_normalize(xs) -> list[float]:
    """Population z-scores; a constant input maps to all zeros."""
    arr = np.asarray(xs, dtype=float)
    if arr.size == 0:
        raise DomainError("z_normalize needs at least one value")
    std = float(arr.std())
    if std == 0.0:
        return [0.0] * arr.size
    return list((arr - arr.mean()) / std)


def min_max_scale(xs, eps: float = 1e-4) -> list[float]:
    """(x - min) / (max - min + eps)."""
    if eps <= 0:
        raise DomainError("eps must be positive")
    arr = np.asarray(xs, dtype=float)
    if arr.size == 0:
        raise DomainError("min_max_scale needs at least one value")
    lo, hi = float(arr.min()), float(arr.max())
    return list((arr - lo) / (hi - lo + eps))


@dataclass(frozen=True)
class FeatureMatrix:
    rows: tuple
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.shape[0] != len(self.rows):
            raise DomainError(f"{len(self.rows)} row ids for {values.shape[0]} value rows")
        if not np.isfinite(values).all():
            raise DomainError("feature matrix holds non-finite values")
        object.__setattr__(self, "rows", tuple(self.rows))
        object.__setattr__(self, "values", values)

    @property
    def dims(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return len(self.rows)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id"] + [f"dim_{j}" for j in range(self.dims)])
            for rid, row in zip(self.rows, self.values):
                w.writerow([rid] + [repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path) -> "FeatureMatrix":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            ids, vals = [], []
            for row in reader:
                ids.append(row[0])
                vals.append([float(x) for x in row[1:]])
        return cls(tuple(ids), np.array(vals, dtype=float).reshape(len(ids), -1))
