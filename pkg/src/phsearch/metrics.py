"""Category-balanced retrieval metrics.

A retrieved image is correct for a (query, object) pair when it contains at
least one object of the prompted object's category.  Per pair, P@k is the
fraction of correct images in the top k and AP@k the mean of P@k' over the
correct ranks k' (0 when there are none).  Per category c, contributions are
averaged per query with weight 1/n_c (n_c = number of category-c objects in
that query image) and then over the query images containing c; MP@k and
MAP@k are unweighted means over the categories present.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import BadParam, EmptyEvaluationError, UnknownImageError
from .manifest import DatasetManifest
from .retrieval import RetrievalResult


@dataclass
class QueryOutcome:
    query_id: str
    object_index: int
    category: str
    bits: np.ndarray  # correctness of rank 1..len(bits)


def score_retrieval(
    result: RetrievalResult, target_category: str, manifest: DatasetManifest
) -> QueryOutcome:
    """Correctness bits for a ranked result against the database manifest."""
    bits = np.zeros(len(result.ranked), dtype=np.int8)
    for i, item in enumerate(result.ranked):
        if item.image_id not in manifest:
            raise UnknownImageError(f"retrieved id {item.image_id!r} not in manifest")
        bits[i] = 1 if target_category in manifest.categories_of(item.image_id) else 0
    return QueryOutcome(query_id="", object_index=-1, category=target_category, bits=bits)


def precision_at(outcome: QueryOutcome, k: int) -> float:
    if k < 1 or k > outcome.bits.shape[0]:
        raise BadParam(f"k must be in [1, {outcome.bits.shape[0]}], got {k}")
    return float(outcome.bits[:k].sum()) / k


def average_precision_at(outcome: QueryOutcome, k: int) -> float:
    """Mean of P@k' over correct ranks k' <= k; 0 when nothing is correct."""
    if k < 1 or k > outcome.bits.shape[0]:
        raise BadParam(f"k must be in [1, {outcome.bits.shape[0]}], got {k}")
    correct = np.flatnonzero(outcome.bits[:k]) + 1
    if correct.size == 0:
        return 0.0
    return float(np.mean([precision_at(outcome, int(r)) for r in correct]))


@dataclass
class ObjectResult:
    """Per-(query, object) metric values ready for aggregation."""

    query_id: str
    object_index: int
    category: str
    p_at_k: float
    ap_at_k: float

    @classmethod
    def from_outcome(
        cls, outcome: QueryOutcome, k: int, query_id: str, object_index: int
    ) -> "ObjectResult":
        return cls(
            query_id=query_id,
            object_index=object_index,
            category=outcome.category,
            p_at_k=precision_at(outcome, k),
            ap_at_k=average_precision_at(outcome, k),
        )


@dataclass
class EvalReport:
    k: int
    per_category: dict  # category -> {"p_at_k", "ap_at_k", "n_queries"}
    mp_at_k: float
    map_at_k: float

    def to_json(self) -> str:
        payload = {
            "k": self.k,
            "mp_at_k": self.mp_at_k,
            "map_at_k": self.map_at_k,
            "per_category": self.per_category,
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["category", "p_at_k", "ap_at_k", "n_queries"])
        for cat in sorted(self.per_category):
            row = self.per_category[cat]
            writer.writerow([cat, repr(row["p_at_k"]), repr(row["ap_at_k"]), row["n_queries"]])
        writer.writerow(["__aggregate__", repr(self.mp_at_k), repr(self.map_at_k), ""])
        return buf.getvalue()


def aggregate(
    results: list[ObjectResult], query_manifest: DatasetManifest, k: int
) -> EvalReport:
    """Category-balanced aggregation with per-query 1/n_c weighting.

    Categories with no contributing query are omitted from the means rather
    than counted as zero.
    """
    if not results:
        raise EmptyEvaluationError("no per-object results to aggregate")
    by_category: dict[str, dict[str, list[ObjectResult]]] = {}
    for r in results:
        by_category.setdefault(r.category, {}).setdefault(r.query_id, []).append(r)

    per_category = {}
    for cat in sorted(by_category):
        queries = by_category[cat]
        p_total = 0.0
        ap_total = 0.0
        for qid, items in queries.items():
            n_c = query_manifest.category_count(qid, cat)
            if n_c == 0:
                raise UnknownImageError(
                    f"query {qid!r} has no {cat!r} objects in the manifest"
                )
            p_total += sum(r.p_at_k for r in items) / n_c
            ap_total += sum(r.ap_at_k for r in items) / n_c
        n_q = len(queries)
        per_category[cat] = {
            "p_at_k": p_total / n_q,
            "ap_at_k": ap_total / n_q,
            "n_queries": n_q,
        }

    cats = sorted(per_category)
    mp = float(np.mean([per_category[c]["p_at_k"] for c in cats]))
    map_ = float(np.mean([per_category[c]["ap_at_k"] for c in cats]))
    return EvalReport(k=k, per_category=per_category, mp_at_k=mp, map_at_k=map_)
