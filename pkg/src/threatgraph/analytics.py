"""Portfolio analytics: deployment weights, CVS ranking, Pareto and OLS."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, DomainError, FormatError
from .features import min_max_scale, z_normalize

EPSILON = 1e-4
PROXIES = ("pkg_installs", "ckpt_pulls", "docker_pulls", "citation_momentum")
DEFAULT_CVS_WEIGHTS = (1 / 3, 1 / 3, 1 / 3)


@dataclass(frozen=True)
class DeploymentProxies:
    model_family: str
    pkg_installs: float
    ckpt_pulls: float
    docker_pulls: float
    citation_momentum: float

    def __post_init__(self):
        for name in PROXIES:
            value = getattr(self, name)
            if value is None or not math.isfinite(value) or value < 0:
                raise DomainError(f"{self.model_family}: proxy {name}={value!r} must be a finite value >= 0")

    def values(self, proxies=PROXIES) -> list:
        return [getattr(self, p) for p in proxies]


def deployment_weights(rows: Sequence[DeploymentProxies], proxies=PROXIES) -> dict:
    """Z-score each proxy across models, average per model, min-max scale with eps."""
    if not rows:
        raise DomainError("need at least one model")
    names = [r.model_family for r in rows]
    if len(set(names)) != len(names):
        raise DomainError("duplicate model family")
    cols = [z_normalize([getattr(r, p) for r in rows]) for p in proxies]
    mean_z = np.mean(np.array(cols), axis=0)
    return dict(zip(names, min_max_scale(mean_z, EPSILON)))


def normalized_frequency(f: float, w: float) -> float:
    """f / (w + eps)."""
    if f < 0:
        raise DomainError(f"attack count must be >= 0, got {f}")
    if not 0.0 <= w <= 1.0:
        raise DomainError(f"deployment weight must lie in [0, 1], got {w}")
    return f / (w + EPSILON)


def round_half_up(x: float) -> int:
    return int(Decimal(repr(float(x))).quantize(Decimal(1), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class ModelRiskRow:
    model_family: str
    f: int
    w: float
    f_hat: float

    @property
    def f_hat_rounded(self) -> int:
        return round_half_up(self.f_hat)


def risk_table(counts: Mapping[str, int], weights: Mapping[str, float]) -> list:
    """Rows sorted by descending f_hat, ties by name."""
    missing = sorted(set(counts) - set(weights))
    if missing:
        raise DomainError(f"no deployment weight for {missing}")
    rows = [ModelRiskRow(m, counts[m], weights[m], normalized_frequency(counts[m], weights[m])) for m in counts]
    return sorted(rows, key=lambda r: (-r.f_hat, r.model_family))


def _positions(counts, weights) -> dict:
    return {r.model_family: i for i, r in enumerate(risk_table(counts, weights))}


def loo_sensitivity(rows: Sequence[DeploymentProxies], f: Mapping[str, int], k: int = 5) -> dict:
    """For each omitted proxy, (max rank shift over all models, max shift within the baseline top-k)."""
    if not 1 <= k <= len(rows):
        raise DomainError(f"k={k} needs between 1 and {len(rows)} models")
    base = _positions(f, deployment_weights(rows))
    top = [m for m, pos in base.items() if pos < k]
    out = {}
    for omitted in PROXIES:
        kept = tuple(p for p in PROXIES if p != omitted)
        pos = _positions(f, deployment_weights(rows, kept))
        shifts = {m: abs(pos[m] - base[m]) for m in base}
        out[omitted] = (max(shifts.values()), max(shifts[m] for m in top))
    return out


# --- CVS ------------------------------------------------------------------------------

@dataclass(frozen=True)
class CvsRow:
    model: str
    prompt_asr: float
    backdoor_asr: float
    training_risk: float
    weights: tuple = DEFAULT_CVS_WEIGHTS

    def __post_init__(self):
        for name in ("prompt_asr", "backdoor_asr", "training_risk"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"{self.model}: {name}={value} outside [0, 1]")
        check_cvs_weights(self.weights)

    @property
    def cvs(self) -> float:
        w1, w2, w3 = self.weights
        return w1 * self.prompt_asr + w2 * self.backdoor_asr + w3 * self.training_risk


def check_cvs_weights(weights) -> tuple:
    weights = tuple(float(w) for w in weights)
    if len(weights) != 3 or any(w < 0 for w in weights):
        raise ConfigError(f"CVS weights must be three non-negative numbers, got {weights}")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ConfigError(f"CVS weights must sum to 1, got {sum(weights)!r}")
    return weights


def cvs_rank(rows: Sequence[CvsRow], weights=DEFAULT_CVS_WEIGHTS) -> list:
    """Re-weight every row and sort by descending CVS, ties by model name."""
    weights = check_cvs_weights(weights)
    scored = [CvsRow(r.model, r.prompt_asr, r.backdoor_asr, r.training_risk, weights) for r in rows]
    return sorted(scored, key=lambda r: (-r.cvs, r.model))


# --- Pareto and regression -----------------------------------------------------------

class ParetoResult(NamedTuple):
    prefix_size: int
    prefix_share: float
    curve: list  # (cpe, count, cumulative_share)

    @property
    def prefix(self) -> list:
        return [c for c, _, _ in self.curve[: self.prefix_size]]


def pareto(counts: Mapping[str, float], threshold: float = 0.8) -> ParetoResult:
    """Smallest count-ordered prefix of CPEs whose share of all CVEs reaches ``threshold``."""
    if not counts:
        raise DomainError("pareto needs at least one CPE")
    if not 0.0 < threshold <= 1.0:
        raise DomainError(f"threshold must lie in (0, 1], got {threshold}")
    if any(v < 0 for v in counts.values()):
        raise DomainError("counts must be non-negative")
    items = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    total = sum(v for _, v in items)
    if total <= 0:
        raise DomainError("counts sum to zero")
    curve, running = [], 0
    for name, v in items:
        running += v
        curve.append((name, v, running / total))
    size = next(i + 1 for i, (_, _, share) in enumerate(curve) if share >= threshold)
    return ParetoResult(size, curve[size - 1][2], curve)


class OlsFit(NamedTuple):
    slope: float
    intercept: float
    r: float


def ols_fit(points: Sequence[tuple]) -> OlsFit:
    """Least-squares line and Pearson r; a constant ``y`` gives slope 0 and r 0."""
    if len(points) < 2:
        raise DomainError("ols_fit needs at least 2 points")
    xy = np.asarray(points, dtype=float)
    x, y = xy[:, 0], xy[:, 1]
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0:
        raise DomainError("degenerate fit: x is constant")
    slope = float(dx @ dy) / sxx
    intercept = float(y.mean() - slope * x.mean())
    r = 0.0 if syy == 0.0 else float(dx @ dy) / math.sqrt(sxx * syy)
    return OlsFit(slope, intercept, max(-1.0, min(1.0, r)))


# --- CSV plumbing -------------------------------------------------------------------

def _rows(document):
    if isinstance(document, (bytes, bytearray)):
        document = document.decode("utf-8")
    lines = [line for line in document.splitlines() if not line.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def load_deployment_proxies(document) -> list:
    out = []
    for n, row in enumerate(_rows(document), start=2):
        try:
            out.append(DeploymentProxies(row["model_family"], *(float(row[p]) for p in PROXIES)))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"deployment proxies line {n}: {exc}", line=n) from exc
    return out


def load_frequency_table(document) -> list:
    """Rows of ``model_family,f,w[,f_hat]``; returns :class:`ModelRiskRow` with recomputed f_hat."""
    out = []
    for n, row in enumerate(_rows(document), start=2):
        try:
            f, w = int(row["f"]), float(row["w"])
            out.append(ModelRiskRow(row["model_family"], f, w, normalized_frequency(f, w)))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"frequency table line {n}: {exc}", line=n) from exc
    return out


def load_cvs_inputs(document) -> list:
    out = []
    for n, row in enumerate(_rows(document), start=2):
        try:
            out.append(CvsRow(row["model"], float(row["prompt_asr"]), float(row["backdoor_asr"]), float(row["training_risk"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"CVS inputs line {n}: {exc}", line=n) from exc
    return out
