"""``threatgraph`` command line: the pipeline end to end, reports and watch mode.

Every command recomputes what it depends on from the configured inputs, so
``threatgraph report`` on a fresh output directory does the whole job. Inputs
left unset in the config fall back to the fixtures shipped with the package.
"""

from __future__ import annotations

import argparse
import csv
import enum
import json
import logging
import os
import queue
import sys
import threading
import time
from dataclasses import asdict, dataclass, field, fields, replace
from functools import cached_property
from importlib import resources
from typing import Callable, Optional

from . import analytics, clustering, taxonomy
from .errors import ConfigError, ThreatGraphError
from .features import TfidfModel, fit_tfidf
from .graph import EdgeKind, GraphConfig, NodeKind, build_graph, graph_corpus
from .ingest import (
    Records,
    VulnRecord,
    dump_nvd_feed,
    load_issue_dump,
    load_technique_catalog,
    parse_nvd_feed,
)
from .scoring import score_record, training_target
from .sevnet import (
    SevNetConfig,
    evidence_paths,
    fit_and_evaluate,
    forward,
    load_checkpoint,
    save_checkpoint,
    top_k,
    write_predictions,
)

log = logging.getLogger("threatgraph")

EXIT_CODES = {"IO": 3, "SCHEMA": 4, "CONFIG": 5, "NUMERIC": 6, "INTERNAL": 1}

INPUT_FIXTURES = {
    "issues": "issues.jsonl",
    "techniques": "techniques.json",
    "cve_attributes": "cve_attributes.csv",
    "deployment_proxies": "deployment_proxies.csv",
    "frequency_table": "frequency_table.csv",
    "cvs_inputs": "cvs_inputs.csv",
    "scenarios": "scenarios.json",
    "tactic_phase": "tactic_phase.csv",
    "cross_level": "cross_level.json",
    "mitigations": "mitigations.json",
    "asr_studies": "asr_studies.csv",
}


# --- configuration ------------------------------------------------------------------

@dataclass(frozen=True)
class WatchConfig:
    drop_dir: Optional[str] = None
    alert_log: Optional[str] = None
    poll_interval: float = 2.0
    queue_size: int = 16
    checkpoint: Optional[str] = None
    tfidf: Optional[str] = None
    high_threshold: float = 0.8
    medium_threshold: float = 0.5


@dataclass(frozen=True)
class PipelineConfig:
    feeds: tuple = ()
    issues: Optional[str] = None
    techniques: Optional[str] = None
    cve_attributes: Optional[str] = None
    deployment_proxies: Optional[str] = None
    frequency_table: Optional[str] = None
    cvs_inputs: Optional[str] = None
    scenarios: Optional[str] = None
    tactic_phase: Optional[str] = None
    cross_level: Optional[str] = None
    mitigations: Optional[str] = None
    asr_studies: Optional[str] = None
    tfidf_dims: int = 64
    jaccard_threshold: float = 0.15
    cluster_k: dict = field(default_factory=lambda: dict(clustering.DEFAULT_K))
    cluster_seed: int = 0
    sevnet: SevNetConfig = field(default_factory=SevNetConfig)
    watch: WatchConfig = field(default_factory=WatchConfig)
    alert_threshold: float = 0.8
    pareto_threshold: float = 0.8
    loo_k: int = 5
    cvs_weights: tuple = analytics.DEFAULT_CVS_WEIGHTS
    evidence_targets: int = 3
    evidence_top_n: int = 5

    def __post_init__(self):
        for name in ("jaccard_threshold", "alert_threshold", "pareto_threshold"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ConfigError(f"{name} must lie in (0, 1], got {value}")
        for name in ("high_threshold", "medium_threshold"):
            value = getattr(self.watch, name)
            if not 0.0 < value <= 1.0:
                raise ConfigError(f"watch.{name} must lie in (0, 1], got {value}")
        if self.watch.medium_threshold > self.watch.high_threshold:
            raise ConfigError("watch.medium_threshold exceeds watch.high_threshold")
        if self.tfidf_dims < 1:
            raise ConfigError(f"tfidf_dims must be >= 1, got {self.tfidf_dims}")
        if self.watch.poll_interval <= 0 or self.watch.queue_size < 1:
            raise ConfigError("watch.poll_interval must be positive and watch.queue_size >= 1")
        unknown = set(self.cluster_k) - set(clustering.DEFAULT_K)
        if unknown or any(int(k) < 1 for k in self.cluster_k.values()):
            raise ConfigError(f"cluster_k needs positive asr/stealth/cost entries, got {self.cluster_k}")
        analytics.check_cvs_weights(self.cvs_weights)

    @classmethod
    def from_dict(cls, data: dict, base_dir: str = ".") -> "PipelineConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")

        def resolve(path):
            return None if path is None else os.path.normpath(os.path.join(base_dir, path))

        kwargs = dict(data)
        try:
            kwargs["feeds"] = tuple(resolve(p) for p in data.get("feeds", ()))
            for key in INPUT_FIXTURES:
                if key in data:
                    kwargs[key] = resolve(data[key])
            if "sevnet" in data:
                kwargs["sevnet"] = SevNetConfig(**data["sevnet"])
            if "watch" in data:
                w = dict(data["watch"])
                for key in ("drop_dir", "alert_log", "checkpoint", "tfidf"):
                    if w.get(key) is not None:
                        w[key] = resolve(w[key])
                kwargs["watch"] = WatchConfig(**w)
            if "cluster_k" in data:
                kwargs["cluster_k"] = {**clustering.DEFAULT_K, **data["cluster_k"]}
            if "cvs_weights" in data:
                kwargs["cvs_weights"] = tuple(data["cvs_weights"])
            return cls(**kwargs)
        except (TypeError, ThreatGraphError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid config: {exc}") from None

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, cluster_seed=seed, sevnet=replace(self.sevnet, seed=seed))


def load_config(path: Optional[str]) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None
    return PipelineConfig.from_dict(data, os.path.dirname(os.path.abspath(path)))


def fixture_bytes(name: str) -> bytes:
    return resources.files("threatgraph").joinpath("fixtures", name).read_bytes()


def _read_input(cfg: PipelineConfig, key: str) -> bytes:
    path = getattr(cfg, key)
    if path is None:
        return fixture_bytes(INPUT_FIXTURES[key])
    with open(path, "rb") as fh:
        return fh.read()


# --- pipeline ------------------------------------------------------------------------

class Pipeline:
    """Lazily computed pipeline stages; each is built at most once per instance."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg

    def _text(self, key):
        return _read_input(self.cfg, key).decode("utf-8")

    @cached_property
    def vulns(self) -> Records:
        docs = []
        if self.cfg.feeds:
            for path in self.cfg.feeds:
                with open(path, "rb") as fh:
                    docs.append((path, fh.read()))
        else:
            docs.append(("<fixture>", fixture_bytes("sample_feed.json")))
        merged, seen = Records(), set()
        for name, doc in docs:
            recs = parse_nvd_feed(doc)
            for err in recs.errors:
                log.warning("%s: %s", name, err)
                merged.errors.append(err)
            for rec in recs:
                if rec.cve_id in seen:
                    log.info("%s: duplicate %s ignored", name, rec.cve_id)
                    continue
                seen.add(rec.cve_id)
                merged.append(rec)
        merged.sort(key=lambda r: r.cve_id)
        return merged

    @cached_property
    def issues(self) -> Records:
        recs = load_issue_dump(_read_input(self.cfg, "issues"))
        for err in recs.errors:
            log.warning("issues: %s", err)
        return recs

    @cached_property
    def techniques(self) -> list:
        return load_technique_catalog(_read_input(self.cfg, "techniques"))

    @cached_property
    def attributes(self) -> dict:
        attrs = clustering.load_cve_attributes(self._text("cve_attributes"))
        known = {v.cve_id for v in self.vulns}
        out = {}
        for col, fm in attrs.items():
            keep = [i for i, r in enumerate(fm.rows) if r in known]
            dropped = len(fm.rows) - len(keep)
            if dropped:
                log.info("%s attributes: %d rows for CVEs outside the feed ignored", col, dropped)
            out[col] = clustering.FeatureMatrix(tuple(fm.rows[i] for i in keep), fm.values[keep])
        return out

    @cached_property
    def clusters(self) -> dict:
        seed = self.cfg.cluster_seed
        out = {}
        fit = {
            "asr": lambda fm, k: clustering.kmeans(fm, k, seed),
            "stealth": lambda fm, k: clustering.agglomerative(fm, k),
            "cost": lambda fm, k: clustering.gmm_fit(fm, k, seed),
        }
        for family, fm in self.attributes.items():
            if len(fm) == 0:
                continue
            k = clustering.effective_k(int(self.cfg.cluster_k[family]), len(fm))
            out[family] = fit[family](fm, k)
        return out

    @cached_property
    def tfidf(self) -> TfidfModel:
        corpus = graph_corpus(self.vulns, self.issues, self.techniques)
        return fit_tfidf(corpus or [""])

    @cached_property
    def graph_config(self) -> GraphConfig:
        return GraphConfig(tfidf_dims=self.cfg.tfidf_dims, jaccard_threshold=self.cfg.jaccard_threshold)

    @cached_property
    def graph(self):
        return build_graph(self.vulns, self.issues, self.techniques, self.clusters, self.tfidf, self.graph_config)

    @cached_property
    def targets(self) -> dict:
        return {v.cve_id: training_target(v) for v in self.vulns}

    @cached_property
    def trained(self):
        return fit_and_evaluate(self.graph, self.targets, self.cfg.sevnet)

    @cached_property
    def predictions(self) -> dict:
        pred = forward(self.trained[0], self.graph)
        return {c: pred[c] for c in self.graph.ids_of_kind(NodeKind.CVE)}


# --- output helpers --------------------------------------------------------------------

def _ensure(path):
    os.makedirs(path, exist_ok=True)
    return path


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_json(path, data):
    _write_text(path, json.dumps(data, indent=1, sort_keys=True) + "\n")


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x) -> str:
    return repr(float(x))


# --- commands --------------------------------------------------------------------------

def cmd_ingest(p: Pipeline, out: str) -> None:
    d = _ensure(os.path.join(out, "ingest"))
    with open(os.path.join(d, "vulns.json"), "wb") as fh:
        fh.write(dump_nvd_feed(p.vulns))
    lines = []
    for i in p.issues:
        lines.append(json.dumps({
            "repo": i.repo, "issue_id": i.issue_id, "title": i.title, "body": i.body,
            "timestamp": i.timestamp, "extracted_cves": list(i.extracted_cves),
        }, sort_keys=True))
    _write_text(os.path.join(d, "issues.jsonl"), "".join(line + "\n" for line in lines))
    _write_json(os.path.join(d, "techniques.json"), [asdict(t) for t in p.techniques])
    errors = [str(e) for e in p.vulns.errors] + [str(e) for e in p.issues.errors]
    _write_text(os.path.join(d, "errors.txt"), "".join(e + "\n" for e in errors))
    log.info("ingested %d CVEs, %d issues, %d techniques", len(p.vulns), len(p.issues), len(p.techniques))


def cmd_build(p: Pipeline, out: str) -> None:
    d = os.path.join(out, "graph")
    p.graph.save(d)
    _write_json(os.path.join(d, "tfidf.json"), p.tfidf.to_dict())
    counts = p.graph.edge_counts()
    rows = []
    for kind in EdgeKind:
        rows.append([kind.value, counts.get((kind, False), 0), counts.get((kind, True), 0)])
    _write_csv(os.path.join(d, "edge_counts.csv"), ["edge_kind", "forward", "reverse"], rows)


def cmd_score(p: Pipeline, out: str) -> None:
    rows = []
    for v in p.vulns:
        s = score_record(v)
        if s is None:
            rows.append([v.cve_id, "", "", "", "", "", "", _fmt(p.targets[v.cve_id])])
            continue
        rows.append([
            v.cve_id, _fmt(s.base), _fmt(s.impact), _fmt(s.exploitability), _fmt(s.composite),
            s.severity.value, s.priority.value, _fmt(p.targets[v.cve_id]),
        ])
    _ensure(out)
    _write_csv(
        os.path.join(out, "scores.csv"),
        ["cve_id", "base", "impact", "exploitability", "composite", "severity", "priority", "target"],
        rows,
    )


def cmd_cluster(p: Pipeline, out: str) -> None:
    d = _ensure(os.path.join(out, "clusters"))
    for family, model in p.clusters.items():
        _write_json(os.path.join(d, f"{family}.json"), model.to_dict())


def cmd_train(p: Pipeline, out: str) -> None:
    model, metrics, held = p.trained
    d = _ensure(os.path.join(out, "model"))
    save_checkpoint(model, os.path.join(d, "sevnet.ckpt"))
    _write_json(os.path.join(d, "tfidf.json"), p.tfidf.to_dict())
    _write_csv(os.path.join(d, "loss_trace.csv"), ["epoch", "loss"], [[i, _fmt(x)] for i, x in enumerate(model.loss_trace)])
    _write_json(os.path.join(d, "metrics.json"), {
        "spearman_rho": metrics.spearman_rho,
        "kendall_tau": metrics.kendall_tau,
        "prec_at_k": metrics.prec_at_k,
        "held_out": sorted(held),
    })


def cmd_predict(p: Pipeline, out: str) -> None:
    _ensure(out)
    write_predictions(p.predictions, os.path.join(out, "predictions.csv"))


def _ols_points(p: Pipeline) -> list:
    g = p.graph
    points = []
    for cpe in g.ids_of_kind(NodeKind.CPE):
        cves = g.in_neighbors(cpe, (EdgeKind.AFFECTS, False))
        issues = {i for c in cves for i in g.in_neighbors(c, (EdgeKind.REPORTED_IN, True))}
        points.append((len(cves), len(issues)))
    return points


def cmd_report(p: Pipeline, out: str) -> None:
    cfg = p.cfg
    d = _ensure(os.path.join(out, "report"))
    write_predictions(p.predictions, os.path.join(d, "predictions.csv"))

    # Pareto concentration of CVEs over CPEs, then the CVE-vs-issue regression
    g = p.graph
    counts = {c: len(g.in_neighbors(c, (EdgeKind.AFFECTS, False))) for c in g.ids_of_kind(NodeKind.CPE)}
    lines = ["cpe,count,cumulative_share"]
    if counts:
        res = analytics.pareto(counts, cfg.pareto_threshold)
        lines += [f"{c},{n},{_fmt(s)}" for c, n, s in res.curve]
        lines.append(f"# prefix_size={res.prefix_size} of {len(counts)} prefix_share={_fmt(res.prefix_share)}")
    _write_text(os.path.join(d, "pareto.csv"), "\n".join(lines) + "\n")
    try:
        fit = analytics.ols_fit(_ols_points(p))
        _write_text(os.path.join(d, "regression.txt"), f"slope={_fmt(fit.slope)} intercept={_fmt(fit.intercept)} r={_fmt(fit.r)}\n")
    except ThreatGraphError as exc:
        _write_text(os.path.join(d, "regression.txt"), f"degenerate: {exc}\n")

    # deployment-normalised frequencies, proxy weights and leave-one-out
    freq = analytics.load_frequency_table(_read_input(cfg, "frequency_table"))
    table = analytics.risk_table({r.model_family: r.f for r in freq}, {r.model_family: r.w for r in freq})
    _write_csv(os.path.join(d, "freq_table.csv"), ["model_family", "f", "w", "f_hat", "f_hat_rounded"],
               [[r.model_family, r.f, _fmt(r.w), _fmt(r.f_hat), r.f_hat_rounded] for r in table])
    proxies = analytics.load_deployment_proxies(_read_input(cfg, "deployment_proxies"))
    weights = analytics.deployment_weights(proxies)
    _write_csv(os.path.join(d, "deployment_weights.csv"), ["model_family", "w"],
               [[m, _fmt(w)] for m, w in sorted(weights.items())])
    f_counts = {r.model_family: r.f for r in freq if r.model_family in weights}
    if len(f_counts) >= cfg.loo_k:
        loo_rows = [p_ for p_ in proxies if p_.model_family in f_counts]
        loo = analytics.loo_sensitivity(loo_rows, f_counts, cfg.loo_k)
        _write_csv(os.path.join(d, "loo.csv"), ["omitted_proxy", "max_shift", "topk_shift"],
                   [[k, a, b] for k, (a, b) in loo.items()])

    cvs = analytics.cvs_rank(analytics.load_cvs_inputs(_read_input(cfg, "cvs_inputs")), cfg.cvs_weights)
    _write_csv(os.path.join(d, "cvs_ranking.csv"), ["rank", "model", "prompt_asr", "backdoor_asr", "training_risk", "cvs"],
               [[i + 1, r.model, _fmt(r.prompt_asr), _fmt(r.backdoor_asr), _fmt(r.training_risk), _fmt(r.cvs)]
                for i, r in enumerate(cvs)])

    # correlation-matrix summaries
    scenarios = taxonomy.load_scenarios(_read_input(cfg, "scenarios"))
    matrix = taxonomy.load_tactic_phase(_read_input(cfg, "tactic_phase"))
    ccm = ["[prominent_tactics]"]
    ccm += [f"{t}\t{n}" for t, n in taxonomy.prominent_tactics(scenarios)]
    ccm.append("[entry_points]")
    ccm += [f"{t}\t{n}" for t, n in taxonomy.entry_points(scenarios)]
    ccm.append("[ttp_sequences]")
    ccm += [f"{taxonomy.format_sequence(s)}\t{n}" for s, n in taxonomy.ttp_sequences(scenarios, 1)]
    ccm.append("[tactic_phase]")
    ccm += [f"{t}\t{', '.join(taxonomy.phases_for_tactic(matrix, t))}" for t in matrix.tactics]
    _write_text(os.path.join(d, "ccm_summary.txt"), "\n".join(ccm) + "\n")

    studies = clustering.load_asr_studies(_read_input(cfg, "asr_studies"))
    _write_csv(os.path.join(d, "asr_studies.csv"), ["attack_type", "target_model", "asr_percent", "asr_text"],
               [[s.attack_type, s.target_model, "" if s.asr_percent is None else _fmt(s.asr_percent), s.asr_text]
                for s in studies])

    model = p.trained[0]
    rows = []
    for target in top_k(p.predictions, min(cfg.evidence_targets, len(p.predictions))):
        for ev in evidence_paths(model, g, target, 3, cfg.evidence_top_n):
            rows.append([target, ev.describe(), f"{ev.contribution:.2f}"])
    _write_csv(os.path.join(d, "evidence_paths.csv"), ["target", "path", "contribution"], rows)


# --- watch mode --------------------------------------------------------------------------

class AlertQueue(str, enum.Enum):
    HIGH = "HIGH"
    MEDIUM = "MEDIUM"
    WATCH = "WATCH"


def route(s_hat: float, high: float = 0.8, medium: float = 0.5) -> AlertQueue:
    if s_hat > high:
        return AlertQueue.HIGH
    if s_hat > medium:
        return AlertQueue.MEDIUM
    return AlertQueue.WATCH


@dataclass(frozen=True)
class Alert:
    cve_id: str
    s_hat: float
    queue: AlertQueue
    emitted_at: float

    def to_json(self) -> str:
        return json.dumps({"cve_id": self.cve_id, "s_hat": self.s_hat, "queue": self.queue.value, "emitted_at": self.emitted_at})


def formula_scorer(record: VulnRecord) -> float:
    """Composite risk / 10 from feed sub-scores; absent fields count as 0."""
    s = score_record(record)
    return training_target(record) if s is None else min(1.0, s.composite / 10.0)


def model_scorer(checkpoint: str, tfidf_path: str) -> Callable[[VulnRecord], float]:
    """Score a record by running the checkpointed model on its one-hop CPE subgraph."""
    model = load_checkpoint(checkpoint)
    with open(tfidf_path, encoding="utf-8") as fh:
        tfidf = TfidfModel.from_dict(json.load(fh))
    dims = model.input_dims - len(NodeKind)
    if dims < 1:
        raise ConfigError("checkpoint input dims are too small for this build")
    gcfg = GraphConfig(tfidf_dims=dims)

    def score(record: VulnRecord) -> float:
        g = build_graph([record], [], [], None, tfidf, gcfg)
        return forward(model, g)[record.cve_id]

    return score


def read_alert_log(path) -> list:
    if not os.path.exists(path):
        return []
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                out.append(Alert(obj["cve_id"], float(obj["s_hat"]), AlertQueue(obj["queue"]), float(obj["emitted_at"])))
    return out


class Watcher:
    """Poll a drop directory for feed files and append one alert per new CVE.

    A poller thread hands file paths to a scorer thread through a bounded
    queue. The seen-CVE set is rebuilt from the alert log at start-up, so a
    restart never re-alerts a CVE that already made it to the log.
    """

    def __init__(self, drop_dir, alert_log, scorer=formula_scorer, clock=time.time,
                 poll_interval=2.0, queue_size=16, high=0.8, medium=0.5):
        self.drop_dir = drop_dir
        self.alert_log = alert_log
        self.scorer = scorer
        self.clock = clock
        self.poll_interval = poll_interval
        self.high, self.medium = high, medium
        self.handoff: queue.Queue = queue.Queue(maxsize=queue_size)
        self.seen = {a.cve_id for a in read_alert_log(alert_log)}
        self.files_seen: dict = {}
        self.emitted: list = []
        self._stop = threading.Event()

    def stop(self):
        self._stop.set()

    def poll_once(self) -> list:
        """Paths of new or changed feed files, in sorted name order."""
        if not os.path.isdir(self.drop_dir):
            raise FileNotFoundError(f"drop directory {self.drop_dir} does not exist")
        fresh = []
        for name in sorted(os.listdir(self.drop_dir)):
            if not name.endswith(".json"):
                continue
            path = os.path.join(self.drop_dir, name)
            st = os.stat(path)
            stamp = (st.st_size, st.st_mtime_ns)
            if self.files_seen.get(name) != stamp:
                self.files_seen[name] = stamp
                fresh.append(path)
        return fresh

    def process_file(self, path) -> list:
        with open(path, "rb") as fh:
            records = parse_nvd_feed(fh.read())
        for err in records.errors:
            log.warning("%s: %s", path, err)
        alerts = []
        for rec in records:
            if rec.cve_id in self.seen:
                continue
            s_hat = float(self.scorer(rec))
            alert = Alert(rec.cve_id, s_hat, route(s_hat, self.high, self.medium), float(self.clock()))
            with open(self.alert_log, "a", encoding="utf-8", newline="\n") as fh:
                fh.write(alert.to_json() + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self.seen.add(rec.cve_id)
            alerts.append(alert)
            log.info("alert %s %s s_hat=%.3f", alert.cve_id, alert.queue.value, s_hat)
        self.emitted.extend(alerts)
        return alerts

    def _poller(self, once: bool, max_polls: Optional[int]):
        polls = 0
        try:
            while not self._stop.is_set():
                for path in self.poll_once():
                    self.handoff.put(path)
                polls += 1
                if once or (max_polls is not None and polls >= max_polls):
                    break
                self._stop.wait(self.poll_interval)
        finally:
            self.handoff.put(None)

    def _scorer(self, errors: list):
        while True:
            path = self.handoff.get()
            if path is None:
                return
            try:
                self.process_file(path)
            except Exception as exc:  # surfaced by run()
                errors.append(exc)
                self._stop.set()
                # drain so the poller never blocks on a full queue
                while self.handoff.get() is not None:
                    pass
                return

    def run(self, once: bool = False, max_polls: Optional[int] = None) -> list:
        os.makedirs(os.path.dirname(os.path.abspath(self.alert_log)), exist_ok=True)
        errors: list = []
        scorer = threading.Thread(target=self._scorer, args=(errors,), name="threatgraph-scorer")
        scorer.start()
        try:
            self._poller(once, max_polls)
        except KeyboardInterrupt:
            self._stop.set()
        except Exception as exc:
            # the poller's finally already queued the sentinel, so the scorer will exit
            errors.append(exc)
        scorer.join()
        if errors:
            raise errors[0]
        return self.emitted


def cmd_watch(p: Pipeline, out: str, args) -> None:
    wcfg = p.cfg.watch
    drop_dir = args.drop_dir or wcfg.drop_dir
    if drop_dir is None:
        raise ConfigError("watch needs a drop directory (--drop-dir or watch.drop_dir)")
    alert_log = args.alert_log or wcfg.alert_log or os.path.join(out, "alerts.jsonl")
    scorer = formula_scorer
    if wcfg.checkpoint:
        if not wcfg.tfidf:
            raise ConfigError("watch.checkpoint needs watch.tfidf alongside it")
        scorer = model_scorer(wcfg.checkpoint, wcfg.tfidf)
    watcher = Watcher(drop_dir, alert_log, scorer, time.time, wcfg.poll_interval, wcfg.queue_size,
                      wcfg.high_threshold, wcfg.medium_threshold)
    alerts = watcher.run(once=args.once, max_polls=args.max_polls)
    log.info("watch emitted %d alerts", len(alerts))


PIPELINE_COMMANDS = {
    "ingest": cmd_ingest,
    "build": cmd_build,
    "score": cmd_score,
    "cluster": cmd_cluster,
    "train": cmd_train,
    "predict": cmd_predict,
    "report": cmd_report,
}


def cmd_run(p: Pipeline, out: str) -> None:
    for fn in PIPELINE_COMMANDS.values():
        fn(p, out)


# --- entry point ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON pipeline config; unset inputs use the shipped fixtures")
    common.add_argument("--seed", type=int, help="override the clustering and model seeds")
    common.add_argument("--out", default="threatgraph-out", help="output directory (default: %(default)s)")

    parser = argparse.ArgumentParser(prog="threatgraph", description="Threat-graph risk pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "ingest": "parse feeds, issues and techniques into canonical records",
        "build": "build the heterogeneous threat graph",
        "score": "CVSS-derived scores and buckets per CVE",
        "cluster": "ASR, stealth and cost clusterings",
        "train": "train the severity model and save a checkpoint",
        "predict": "write per-CVE predicted severity",
        "report": "analytics, CCM summaries, predictions and evidence paths",
        "run": "every pipeline command in order",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    watch = sub.add_parser("watch", parents=[common], help="poll a drop directory and route new CVEs to queues")
    watch.add_argument("--drop-dir", help="directory polled for NVD-format feed files")
    watch.add_argument("--alert-log", help="append-only JSON-lines alert log")
    watch.add_argument("--once", action="store_true", help="poll once, process, exit")
    watch.add_argument("--max-polls", type=int, help="stop after this many polls")
    return parser


def _setup_logging():
    level = os.environ.get("THREATGRAPH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        pipeline = Pipeline(cfg)
        if args.command == "watch":
            cmd_watch(pipeline, args.out, args)
        elif args.command == "run":
            cmd_run(pipeline, args.out)
        else:
            PIPELINE_COMMANDS[args.command](pipeline, args.out)
    except ThreatGraphError as exc:
        return _fail(exc.code, exc)
    except OSError as exc:
        return _fail("IO", exc)
    except (ValueError, KeyError) as exc:
        return _fail("SCHEMA", exc)
    return 0


def _fail(code: str, exc: Exception) -> int:
    message = " ".join(str(exc).split()) or type(exc).__name__
    print(f"threatgraph: error[{code}]: {message}", file=sys.stderr)
    return EXIT_CODES[code]


if __name__ == "__main__":
    sys.exit(main())
