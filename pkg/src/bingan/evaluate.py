"""Retrieval and matching evaluation protocols.

Retrieval: mean average precision over the top-k Hamming neighbors, with
AP@k = sum(Prec(i) * rel(i)) / min(R, k) and self-match exclusion when the
query set is the database. Matching: false-positive rate at the smallest
integer distance threshold reaching the target true-positive rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DataError
from .quantize import hamming_distances


@dataclass
class RetrievalReport:
    map_at_k: float
    k: int
    per_query_ap: list
    code_bits: int

    def rows(self):
        return [("map_at_k", self.map_at_k), ("k", self.k),
                ("n_queries", len(self.per_query_ap)), ("code_bits", self.code_bits)]


@dataclass
class MatchingReport:
    fpr_at_95: float
    threshold: int
    tpr_target: float
    roc_points: list = field(default_factory=list)  # (threshold, fpr, tpr)

    def rows(self):
        return [("fpr_at_tpr", self.fpr_at_95), ("threshold", self.threshold),
                ("tpr_target", self.tpr_target)]


def average_precision(query_label, ranked_db_labels, k, n_relevant_in_db):
    """AP over a top-k ranking; 0 when the database holds no relevant item."""
    if k <= 0:
        raise ContractError(f"k must be positive, got {k}")
    if n_relevant_in_db == 0:
        return 0.0
    ranked = np.asarray(ranked_db_labels)[:k]
    rel = (ranked == query_label).astype(np.float64)
    hits = np.cumsum(rel)
    precision = hits / np.arange(1, len(ranked) + 1)
    return float((precision * rel).sum() / min(n_relevant_in_db, k))


def map_retrieval(queries, query_labels, db, db_labels, k=1000, n_threads=1):
    """Mean AP of top-k Hamming neighbors per query.

    When `queries is db` (same object or identical codes+labels), each
    query's own entry is excluded from its ranking. Per-query APs are
    independent; `n_threads > 1` evaluates them on a thread pool.
    """
    if queries.n_bits != db.n_bits:
        raise DataError("query/db code length mismatch")
    query_labels = np.asarray(query_labels)
    db_labels = np.asarray(db_labels)
    if query_labels.shape[0] != queries.n_rows or db_labels.shape[0] != db.n_rows:
        raise DataError("label count does not match code count")
    self_mode = queries is db or (
        queries.n_rows == db.n_rows
        and np.array_equal(queries.words, db.words)
        and np.array_equal(query_labels, db_labels)
    )

    def query_ap(qi):
        d = hamming_distances(queries.row(qi), db)
        if self_mode:
            keep = np.arange(db.n_rows) != qi
            order = np.argsort(d[keep], kind="stable")
            labels = db_labels[keep][order]
            n_rel = int((db_labels[keep] == query_labels[qi]).sum())
        else:
            order = np.argsort(d, kind="stable")
            labels = db_labels[order]
            n_rel = int((db_labels == query_labels[qi]).sum())
        return average_precision(query_labels[qi], labels, k, n_rel)

    if n_threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            aps = list(pool.map(query_ap, range(queries.n_rows)))
    else:
        aps = [query_ap(qi) for qi in range(queries.n_rows)]
    return RetrievalReport(float(np.mean(aps)) if aps else 0.0, k, aps, queries.n_bits)


def fpr_at_tpr(dist_matched, dist_nonmatched, tpr_target=0.95):
    """Smallest integer threshold reaching the target TPR, and its FPR."""
    dm = np.asarray(dist_matched, dtype=np.int64)
    dn = np.asarray(dist_nonmatched, dtype=np.int64)
    if dm.size == 0 or dn.size == 0:
        raise ContractError("matched and non-matched distance lists must be nonempty")
    if not 0 < tpr_target <= 1:
        raise ContractError(f"tpr_target must be in (0, 1], got {tpr_target}")
    hi = int(max(dm.max(), dn.max()))
    roc = []
    threshold = hi
    found = False
    for t in range(0, hi + 1):
        tpr = float((dm <= t).mean())
        fpr = float((dn <= t).mean())
        roc.append((t, fpr, tpr))
        if not found and tpr >= tpr_target:
            threshold = t
            found = True
    fpr = float((dn <= threshold).mean())
    return MatchingReport(fpr, threshold, tpr_target, roc)


def pair_distances(disc, pairs, gamma=None, batch=256):
    """Per-pair Hamming distances between descriptor codes of a and b."""
    from .quantize import BitMatrix, sign_vec
    from .train import extract_features

    fa, fb = pairs.float_pairs()
    ca = BitMatrix.pack(sign_vec(extract_features(disc, fa, batch=batch)))
    cb = BitMatrix.pack(sign_vec(extract_features(disc, fb, batch=batch)))
    bits_a = ca.unpack().astype(np.int64)
    bits_b = cb.unpack().astype(np.int64)
    dots = (bits_a * bits_b).sum(axis=1)
    return (ca.n_bits - dots) // 2


def evaluate_matching(disc, pairs, tpr_target=0.95):
    d = pair_distances(disc, pairs)
    m = np.asarray(pairs.match)
    return fpr_at_tpr(d[m], d[~m], tpr_target=tpr_target)


ABLATION_GRID = ((0.0, 0.0), (0.0, 0.01), (0.05, 0.0), (0.05, 0.01))


def run_ablation(dataset, base_cfg, eval_pairs=None, tpr_target=0.95, progress=None):
    """Train the four-lambda grid on identical seeds/data; report FPR@95 each.

    Returns a list of dicts: {lambda_dmr, lambda_bre, report}.
    """
    from dataclasses import replace

    from .train import train

    if eval_pairs is None:
        eval_pairs = dataset
    results = []
    for lam_dmr, lam_bre in ABLATION_GRID:
        reg = replace(base_cfg.reg, lambda_dmr=lam_dmr, lambda_bre=lam_bre)
        cfg = replace(base_cfg, reg=reg)
        log = []
        ckpt = train(cfg, dataset, log=log, progress=progress)
        _, disc, _, _ = ckpt.restore()
        report = evaluate_matching(disc, eval_pairs, tpr_target=tpr_target)
        results.append({
            "lambda_dmr": lam_dmr,
            "lambda_bre": lam_bre,
            "report": report,
            "log": log,
        })
    return results
