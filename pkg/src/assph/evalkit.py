"""Hamming-space retrieval evaluation: ranking, MAP, and curve protocols.

Distances between +-1 code rows are D = (K - <b_q, b_d>) / 2, an integer
in [0, K].  Rankings sort by ascending distance with ties broken by
ascending database index, so every metric here is exactly reproducible.

Average precision truncated at a cutoff divides by the number of relevant
items inside the cutoff window; queries with no relevant item in the
window score 0 and still count toward the mean.  The precision-recall
curve is parameterized by Hamming radius (K + 1 thresholds), averaged
over queries that have at least one relevant item, deduplicated on equal
recall, and reported without the recall == 0 and recall == 1 endpoints.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError


def _check_codes(codes: np.ndarray, name: str) -> np.ndarray:
    codes = np.asarray(codes)
    if codes.ndim != 2 or codes.shape[0] < 1:
        raise DataError(f"{name}: expected a non-empty 2-d code matrix")
    if not np.isin(codes, (-1, 1)).all():
        raise DataError(f"{name}: code entries must be -1 or +1")
    return codes.astype(np.int8)


def hamming(code_a: np.ndarray, code_b: np.ndarray) -> int:
    """Number of disagreeing bits between two +-1 code vectors."""
    a = np.asarray(code_a).ravel()
    b = np.asarray(code_b).ravel()
    if a.shape != b.shape:
        raise DataError(f"hamming: length mismatch {a.shape} vs {b.shape}")
    return int((len(a) - int(a @ b)) // 2)


def hamming_matrix(query_codes: np.ndarray, db_codes: np.ndarray) -> np.ndarray:
    """Integer distance matrix, queries by database rows."""
    q = _check_codes(query_codes, "query codes")
    d = _check_codes(db_codes, "db codes")
    if q.shape[1] != d.shape[1]:
        raise DataError(f"code length mismatch: {q.shape[1]} vs {d.shape[1]}")
    k = q.shape[1]
    # float32 matmul of +-1 rows is exact: |dot| <= K << 2**24
    dots = q.astype(np.float32) @ d.astype(np.float32).T
    return ((k - dots) / 2).astype(np.int64)


@dataclass
class RankedRetrieval:
    """One query's database ordering and the distances along it."""

    query_index: int
    ordering: np.ndarray
    distances: np.ndarray


def rank(query_codes: np.ndarray, db_codes: np.ndarray) -> list[RankedRetrieval]:
    """Rank the database for every query.

    Ascending distance, ties by ascending database index (stable argsort
    on the integer distances).
    """
    dist = hamming_matrix(query_codes, db_codes)
    out = []
    for qi in range(dist.shape[0]):
        order = np.argsort(dist[qi], kind="stable")
        out.append(RankedRetrieval(query_index=qi, ordering=order,
                                   distances=dist[qi][order]))
    return out


def average_precision(relevance_flags: np.ndarray, cutoff: int | None = None) -> float:
    """AP of one ranked flag list, truncated at cutoff when given.

    Denominator is the number of relevant items inside the truncated
    list; an empty relevant set yields 0.
    """
    flags = np.asarray(relevance_flags).ravel()
    if not np.isin(flags, (0, 1)).all():
        raise DataError("average_precision: flags must be 0/1")
    if cutoff is not None:
        if cutoff < 1:
            raise ConfigError(f"average_precision: cutoff must be >= 1, got {cutoff}")
        flags = flags[:cutoff]
    n_rel = int(flags.sum())
    if n_rel == 0:
        return 0.0
    cum = np.cumsum(flags)
    precision_at = cum / np.arange(1, len(flags) + 1)
    return float(precision_at[flags == 1].sum() / n_rel)


def relevance_matrix(query_labels: np.ndarray, db_labels: np.ndarray) -> np.ndarray:
    """rel[q, d] = 1 iff the query and database item share any label."""
    q = np.asarray(query_labels, dtype=np.float32)
    d = np.asarray(db_labels, dtype=np.float32)
    if q.ndim != 2 or d.ndim != 2 or q.shape[1] != d.shape[1]:
        raise DataError(
            f"relevance_matrix: label shapes {q.shape} and {d.shape} incompatible"
        )
    return ((q @ d.T) > 0).astype(np.int8)


def map_eval(query_codes: np.ndarray, db_codes: np.ndarray,
             query_labels: np.ndarray, db_labels: np.ndarray,
             cutoff: int | None = None) -> float:
    """Mean AP over all queries (zero-relevant queries count as 0)."""
    rel = relevance_matrix(query_labels, db_labels)
    rankings = rank(query_codes, db_codes)
    if rel.shape != (len(rankings), db_codes.shape[0]):
        raise DataError("map_eval: label rows mismatch code rows")
    aps = [average_precision(rel[r.query_index][r.ordering], cutoff)
           for r in rankings]
    return float(np.mean(aps))


def curves(rankings: list[RankedRetrieval], relevance: np.ndarray,
           k_grid: list[int]) -> tuple[list[tuple[float, float]],
                                       list[tuple[int, float]]]:
    """Precision-recall and top-k precision curves.

    Returns (pr_points, topk_points).  pr_points are (recall, precision)
    pairs per Hamming radius, averaged over queries with at least one
    relevant item, with duplicate recalls collapsed (first kept) and the
    recall 0/1 endpoints dropped.  topk_points are (k, mean precision@k)
    over all queries.
    """
    if not rankings:
        raise DataError("curves: no rankings given")
    k_grid = list(k_grid)
    if any(k < 1 for k in k_grid) or sorted(k_grid) != k_grid:
        raise ConfigError(f"curves: k_grid must be ascending positive ints, got {k_grid}")
    relevance = np.asarray(relevance)
    n_db = relevance.shape[1]
    rel_sorted = np.stack([relevance[r.query_index][r.ordering] for r in rankings])
    dist_sorted = np.stack([r.distances for r in rankings])
    cum_rel = np.cumsum(rel_sorted, axis=1)

    topk_points = []
    for k in k_grid:
        kk = min(k, n_db)
        topk_points.append((k, float(np.mean(cum_rel[:, kk - 1] / k))))

    totals = rel_sorted.sum(axis=1)
    eligible = totals > 0
    if not np.any(eligible):
        return [], topk_points
    max_radius = int(dist_sorted.max())
    raw_points = []
    for radius in range(max_radius + 1):
        # per query: how many of the leading ranked entries fall within radius
        n_ret = (dist_sorted <= radius).sum(axis=1)
        n_rel_ret = np.where(n_ret > 0, cum_rel[np.arange(len(rankings)),
                                                np.maximum(n_ret - 1, 0)], 0)
        prec = n_rel_ret / np.maximum(n_ret, 1)  # zero retrieved -> precision 0
        rec = n_rel_ret / np.maximum(totals, 1)
        raw_points.append((float(rec[eligible].mean()),
                           float(prec[eligible].mean())))
    pr_points = []
    seen = set()
    for rec, prec in raw_points:
        if rec in seen:
            continue
        seen.add(rec)
        if 0.0 < rec < 1.0:
            pr_points.append((rec, prec))
    return pr_points, topk_points


@dataclass
class EvalReport:
    """One retrieval direction's metric bundle, JSON-serializable."""

    direction: str
    code_length: int
    map_all: float
    map_at: dict = field(default_factory=dict)
    pr_curve: list = field(default_factory=list)
    topk_curve: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "direction": self.direction,
            "code_length": self.code_length,
            "map_all": self.map_all,
            "map_at": {str(k): v for k, v in self.map_at.items()},
            "pr_curve": [[r, p] for r, p in self.pr_curve],
            "topk_curve": [[int(k), p] for k, p in self.topk_curve],
        }

    def save_json(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    def save_curves_csv(self, pr_path: str, topk_path: str) -> None:
        with open(pr_path, "w") as fh:
            fh.write("recall,precision\n")
            for rec, prec in self.pr_curve:
                fh.write(f"{rec:.10g},{prec:.10g}\n")
        with open(topk_path, "w") as fh:
            fh.write("k,precision\n")
            for k, prec in self.topk_curve:
                fh.write(f"{k},{prec:.10g}\n")


def evaluate_direction(direction: str, query_codes: np.ndarray,
                       db_codes: np.ndarray, query_labels: np.ndarray,
                       db_labels: np.ndarray, map_cutoffs: list[int] = (50,),
                       k_grid: list[int] | None = None) -> EvalReport:
    """Full metric bundle for one direction (e.g. image query, text db)."""
    rel = relevance_matrix(query_labels, db_labels)
    rankings = rank(query_codes, db_codes)
    aps_all = [average_precision(rel[r.query_index][r.ordering]) for r in rankings]
    map_at = {}
    for cutoff in map_cutoffs:
        aps = [average_precision(rel[r.query_index][r.ordering], cutoff)
               for r in rankings]
        map_at[int(cutoff)] = float(np.mean(aps))
    if k_grid is None:
        n_db = db_codes.shape[0]
        k_grid = sorted({min(k, n_db) for k in (1, 5, 10, 25, 50, 100, 250,
                                                500, 1000) if k <= n_db} | {n_db})
    pr_curve, topk_curve = curves(rankings, rel, k_grid)
    return EvalReport(
        direction=direction,
        code_length=int(query_codes.shape[1]),
        map_all=float(np.mean(aps_all)),
        map_at=map_at,
        pr_curve=pr_curve,
        topk_curve=topk_curve,
    )


def load_report(path: str) -> EvalReport:
    with open(path) as fh:
        raw = json.load(fh)
    return EvalReport(
        direction=raw["direction"],
        code_length=int(raw["code_length"]),
        map_all=float(raw["map_all"]),
        map_at={int(k): float(v) for k, v in raw["map_at"].items()},
        pr_curve=[(float(r), float(p)) for r, p in raw["pr_curve"]],
        topk_curve=[(int(k), float(p)) for k, p in raw["topk_curve"]],
    )
