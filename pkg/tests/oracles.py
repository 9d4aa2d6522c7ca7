"""Independent re-implementations used as test oracles.

Nothing here imports the code under test beyond plain record types, so a
shared mistake cannot make both sides agree.
"""

import math
import re
from collections import Counter
from itertools import permutations

import numpy as np


def _tokens(text):
    return [t for t in re.findall(r"[a-z0-9]+", text.lower()) if len(t) >= 2]


def tfidf_vectors(corpus, docs):
    """Full-vocabulary L2-normalised tf*idf vectors keyed by term."""
    n = len(corpus)
    df = Counter()
    for d in corpus:
        df.update(set(_tokens(d)))
    out = []
    for doc in docs:
        w = {t: c * (math.log(n / (1 + df[t])) + 1) for t, c in Counter(_tokens(doc)).items() if t in df}
        norm = math.sqrt(sum(x * x for x in w.values()))
        out.append({t: x / norm for t, x in w.items()} if norm else {})
    return out


def jaccard(u, v):
    keys = set(u) | set(v)
    num = sum(min(u.get(k, 0.0), v.get(k, 0.0)) for k in keys)
    den = sum(max(u.get(k, 0.0), v.get(k, 0.0)) for k in keys)
    return num / den if den else 0.0


def brute_force_edges(vulns, issues, techniques, assignments, threshold=0.15):
    """Edge multiset as (src, kind, dst, is_reverse) tuples by direct rule application.

    ``assignments`` maps a family prefix (``asr``/``stealth``/``cost``) to
    {cve_id: cluster index}.
    """
    corpus = [v.description for v in vulns]
    corpus += [f"{i.title}\n{i.body}" for i in issues]
    corpus += [f"{t.name}. {t.description}" for t in techniques]
    # one document per distinct CPE (fixtures use explicit versions, no underscores)
    corpus += [f"{c.vendor} {c.product} {c.version}" for c in {c for v in vulns for c in v.cpes}]
    edges = []
    for v in vulns:
        for c in v.cpes:
            edges.append((v.cve_id, "AFFECTS", f"cpe:{c.vendor}:{c.product}:{c.version}"))
        for i in issues:
            text = f"{i.title}\n{i.body}".upper()
            if re.search(re.escape(v.cve_id) + r"(?!\d)", text):
                edges.append((v.cve_id, "REPORTED_IN", f"issue:{i.repo}#{i.issue_id}"))
    for i in issues:
        text = f"{i.title}\n{i.body}"
        for t in techniques:
            tid = t.technique_id
            prefixes = ("https://atlas.mitre.org/techniques/", "https://attack.mitre.org/techniques/")
            urls = [p + tid for p in prefixes] + [p + tid.replace(".", "/") for p in prefixes]
            if re.search(re.escape(tid) + r"(?![A-Za-z0-9])", text) or any(u in text for u in urls):
                edges.append((f"issue:{i.repo}#{i.issue_id}", "REFERENCES", f"tech:{tid}"))
    cve_vecs = tfidf_vectors(corpus, [v.description for v in vulns])
    tech_vecs = tfidf_vectors(corpus, [f"{t.name}. {t.description}" for t in techniques])
    for v, cv in zip(vulns, cve_vecs):
        for t, tv in zip(techniques, tech_vecs):
            if jaccard(cv, tv) > threshold:
                edges.append((v.cve_id, "SHARES_VECTOR", f"tech:{t.technique_id}"))
    kinds = {"asr": "MEMBER_OF", "stealth": "STEALTH_SIM", "cost": "COST_SIM"}
    for prefix, assign in assignments.items():
        for cve, idx in assign.items():
            edges.append((cve, kinds[prefix], f"{prefix}:{idx:03d}"))
    out = Counter()
    for s, k, d in edges:
        out[(s, k, d, False)] += 1
        out[(d, k, s, True)] += 1
    return out


def spearman_by_hand(a, b):
    """Pearson correlation of average ranks."""
    def ranks(xs):
        order = sorted(range(len(xs)), key=lambda i: xs[i])
        r = [0.0] * len(xs)
        i = 0
        while i < len(order):
            j = i
            while j + 1 < len(order) and xs[order[j + 1]] == xs[order[i]]:
                j += 1
            for m in range(i, j + 1):
                r[order[m]] = (i + j) / 2 + 1
            i = j + 1
        return np.array(r)
    ra, rb = ranks(a), ranks(b)
    ra, rb = ra - ra.mean(), rb - rb.mean()
    return float(ra @ rb / math.sqrt((ra @ ra) * (rb @ rb)))


def kendall_tau_b_by_hand(a, b):
    n = len(a)
    conc = disc = ties_a = ties_b = 0
    for i in range(n):
        for j in range(i + 1, n):
            da, db = a[i] - a[j], b[i] - b[j]
            if da == 0 and db == 0:
                continue
            if da == 0:
                ties_a += 1
            elif db == 0:
                ties_b += 1
            elif da * db > 0:
                conc += 1
            else:
                disc += 1
    return (conc - disc) / math.sqrt((conc + disc + ties_a) * (conc + disc + ties_b))


def simple_chains(edges, target, max_len):
    """Every simple directed chain of 1..max_len edges ending at ``target``.

    ``edges`` is a list of (src, dst, key) triples; a chain is a tuple of keys
    ordered from the far end to the target.
    """
    found = set()
    for length in range(1, max_len + 1):
        for combo in permutations(range(len(edges)), length):
            chain = [edges[i] for i in combo]
            if chain[-1][1] != target:
                continue
            if any(chain[m][1] != chain[m + 1][0] for m in range(length - 1)):
                continue
            visited = [chain[0][0]] + [e[1] for e in chain]
            if len(set(visited)) != len(visited):
                continue
            found.add(tuple(e[2] for e in chain))
    return found
