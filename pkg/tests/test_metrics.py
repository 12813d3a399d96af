import numpy as np
import pytest

from phsearch.errors import BadParam, EmptyEvaluationError, UnknownImageError
from phsearch.manifest import DatasetManifest, ImageEntry, ObjectAnnotation
from phsearch.metrics import (
    ObjectResult,
    QueryOutcome,
    aggregate,
    average_precision_at,
    precision_at,
    score_retrieval,
)
from phsearch.prompts import Box
from phsearch.retrieval import RankedItem, RetrievalResult

from .oracles import naive_eval


def outcome(bits, category="cat-a"):
    return QueryOutcome(
        query_id="q", object_index=0, category=category,
        bits=np.array(bits, dtype=np.int8),
    )


def db_manifest(categories_by_id):
    entries = []
    for image_id, cats in categories_by_id.items():
        objects = [
            ObjectAnnotation(category=c, box=Box(0, 0, 3, 3)) for c in cats
        ]
        entries.append(ImageEntry(image_id=image_id, h=8, w=8, objects=objects))
    return DatasetManifest(images=entries)


def query_manifest(objects_by_id):
    entries = []
    for image_id, cats in objects_by_id.items():
        objects = [ObjectAnnotation(category=c, box=Box(0, 0, 3, 3)) for c in cats]
        entries.append(ImageEntry(image_id=image_id, h=8, w=8, objects=objects))
    return DatasetManifest(images=entries)


def ranked(ids):
    return RetrievalResult(
        ranked=[RankedItem(i, 1.0 - 0.01 * n, n + 1) for n, i in enumerate(ids)],
        mode="cbir",
    )


class TestScoreRetrieval:
    manifest = db_manifest(
        {"a": ["cat-a"], "b": ["cat-b"], "c": ["cat-a", "cat-b"]}
    )

    def test_all_correct(self):
        out = score_retrieval(ranked(["a", "c"]), "cat-a", self.manifest)
        assert out.bits.tolist() == [1, 1]

    def test_none_correct(self):
        out = score_retrieval(ranked(["b", "b"]), "cat-a", self.manifest)
        assert out.bits.tolist() == [0, 0]

    def test_mixed_hand_case(self):
        out = score_retrieval(ranked(["a", "b", "c"]), "cat-a", self.manifest)
        assert out.bits.tolist() == [1, 0, 1]

    def test_unknown_image(self):
        with pytest.raises(UnknownImageError):
            score_retrieval(ranked(["zzz"]), "cat-a", self.manifest)


class TestPrecision:
    def test_hand_case(self):
        assert precision_at(outcome([1, 0, 1]), 3) == pytest.approx(2 / 3, abs=0)

    def test_all_ones(self):
        assert precision_at(outcome([1, 1, 1, 1]), 4) == 1.0

    def test_all_zeros(self):
        assert precision_at(outcome([0, 0, 0]), 3) == 0.0

    def test_bad_k(self):
        with pytest.raises(BadParam):
            precision_at(outcome([1, 0]), 3)
        with pytest.raises(BadParam):
            precision_at(outcome([1, 0]), 0)


class TestAveragePrecision:
    def test_hand_case(self):
        # correct at ranks 1 and 3: (1/1 + 2/3) / 2 = 5/6
        assert average_precision_at(outcome([1, 0, 1]), 3) == pytest.approx(5 / 6, abs=1e-15)

    def test_all_ones(self):
        assert average_precision_at(outcome([1, 1, 1]), 3) == 1.0

    def test_all_zeros_is_zero_by_convention(self):
        assert average_precision_at(outcome([0, 0, 0]), 3) == 0.0

    def test_precision_monotone_under_bit_upgrade(self, rng):
        for _ in range(50):
            bits = (rng.uniform(size=8) > 0.5).astype(np.int8)
            zeros = np.flatnonzero(bits == 0)
            if zeros.size == 0:
                continue
            improved = bits.copy()
            improved[rng.choice(zeros)] = 1
            assert precision_at(outcome(improved), 8) >= precision_at(outcome(bits), 8)

    def test_ap_is_mean_over_correct_ranks_not_monotone(self):
        # this AP variant averages P@k' over the correct ranks only, so a
        # late extra hit can lower it; locks in the definition
        assert average_precision_at(outcome([1, 0, 0]), 3) == 1.0
        assert average_precision_at(outcome([1, 0, 1]), 3) == pytest.approx(5 / 6)


class TestAggregate:
    def test_single_query_single_object(self):
        qm = query_manifest({"q1": ["cat-a"]})
        results = [ObjectResult("q1", 0, "cat-a", 0.75, 0.9)]
        report = aggregate(results, qm, 5)
        assert report.mp_at_k == 0.75
        assert report.map_at_k == 0.9
        assert report.per_category["cat-a"]["n_queries"] == 1

    def test_two_objects_same_category_weighting(self):
        qm = query_manifest({"q1": ["cat-a", "cat-a"]})
        results = [
            ObjectResult("q1", 0, "cat-a", 1.0, 1.0),
            ObjectResult("q1", 1, "cat-a", 0.5, 0.5),
        ]
        report = aggregate(results, qm, 5)
        assert report.per_category["cat-a"]["p_at_k"] == pytest.approx(0.75, abs=0)

    def test_duplicate_annotation_weighting_identity(self):
        # identical outcomes for both objects of a duplicated annotation:
        # the per-query 1/n_c weight halves each contribution
        single = aggregate(
            [ObjectResult("q1", 0, "cat-a", 0.8, 0.7)],
            query_manifest({"q1": ["cat-a"]}),
            5,
        )
        doubled = aggregate(
            [
                ObjectResult("q1", 0, "cat-a", 0.8, 0.7),
                ObjectResult("q1", 1, "cat-a", 0.8, 0.7),
            ],
            query_manifest({"q1": ["cat-a", "cat-a"]}),
            5,
        )
        assert doubled.per_category["cat-a"]["p_at_k"] == pytest.approx(
            single.per_category["cat-a"]["p_at_k"], abs=1e-15
        )

    def test_category_rename_leaves_means(self):
        qm = query_manifest({"q1": ["cat-a", "cat-b"], "q2": ["cat-b"]})
        results = [
            ObjectResult("q1", 0, "cat-a", 1.0, 1.0),
            ObjectResult("q1", 1, "cat-b", 0.5, 0.4),
            ObjectResult("q2", 0, "cat-b", 0.25, 0.2),
        ]
        renamed_qm = query_manifest({"q1": ["zz-x", "aa-y"], "q2": ["aa-y"]})
        renamed = [
            ObjectResult("q1", 0, "zz-x", 1.0, 1.0),
            ObjectResult("q1", 1, "aa-y", 0.5, 0.4),
            ObjectResult("q2", 0, "aa-y", 0.25, 0.2),
        ]
        a = aggregate(results, qm, 5)
        b = aggregate(renamed, renamed_qm, 5)
        assert a.mp_at_k == b.mp_at_k
        assert a.map_at_k == b.map_at_k

    def test_empty_results(self):
        with pytest.raises(EmptyEvaluationError):
            aggregate([], query_manifest({"q1": ["cat-a"]}), 5)

    def test_matches_brute_force_oracle_on_fixture(self):
        # 20 query images over 3 categories with varied object multiplicity
        gen = np.random.default_rng(23)
        cats = ["cat-a", "cat-b", "cat-c"]
        objects_by_id = {}
        rows = []
        results = []
        k = 10
        for qi in range(20):
            qid = f"q{qi:02d}"
            count = int(gen.integers(1, 4))
            qcats = [cats[int(gen.integers(0, 3))] for _ in range(count)]
            objects_by_id[qid] = qcats
            for oi, cat in enumerate(qcats):
                bits = (gen.uniform(size=k) > 0.5).astype(np.int8)
                rows.append((qid, oi, cat, bits.tolist()))
                out = QueryOutcome(qid, oi, cat, bits)
                results.append(ObjectResult.from_outcome(out, k, qid, oi))
        qm = query_manifest(objects_by_id)
        report = aggregate(results, qm, k)
        mp, map_, per_cat = naive_eval(rows, objects_by_id, k)
        assert abs(report.mp_at_k - mp) <= 1e-12
        assert abs(report.map_at_k - map_) <= 1e-12
        for cat, (p, ap) in per_cat.items():
            assert abs(report.per_category[cat]["p_at_k"] - p) <= 1e-12
            assert abs(report.per_category[cat]["ap_at_k"] - ap) <= 1e-12

    def test_report_serialization(self):
        qm = query_manifest({"q1": ["cat-a"]})
        report = aggregate([ObjectResult("q1", 0, "cat-a", 1.0, 1.0)], qm, 3)
        assert '"mp_at_k"' in report.to_json()
        assert "__aggregate__" in report.to_csv()
