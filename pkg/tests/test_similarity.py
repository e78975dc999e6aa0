import math

import numpy as np
import pytest

from cnnsizer import (ClassGrouping, EmbeddingSet, InputError,
                      InsufficientDataError, UndefinedCorrelationError,
                      apply_grouping, cosine, inter_class, intra_class,
                      pearson, similarity_report)
from cnnsizer.synthetic import make_cluster_set

from conftest import build_set
from oracles import naive_inter, naive_intra, naive_report

SQ2 = math.sqrt(0.5)


class TestCosine:
    def test_identical(self):
        assert cosine((1, 0), (1, 0)) == pytest.approx(1.0, abs=1e-9)

    def test_orthogonal(self):
        assert cosine((1, 0), (0, 1)) == pytest.approx(0.0, abs=1e-12)

    def test_hand_computed(self):
        # dot=1, norms 1 and sqrt(2)
        assert cosine((1, 0), (1, 1)) == pytest.approx(0.707107, abs=1e-6)

    def test_symmetric(self):
        a, b = (0.3, -0.4, 1.2), (2.0, 0.5, -0.1)
        assert cosine(a, b) == cosine(b, a)

    def test_self_is_one(self):
        v = (0.123, 4.56, -7.8, 0.9)
        assert abs(cosine(v, v) - 1.0) < 1e-9

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            cosine((1, 0), (1, 0, 0))

    def test_zero_vector(self):
        with pytest.raises(InputError):
            cosine((0, 0), (1, 0))


class TestEmbeddingSet:
    def test_zero_vector_rejected_at_ingestion(self):
        with pytest.raises(InputError, match="zero-norm"):
            EmbeddingSet.build(2, [("a", "x", (1, 0)), ("b", "x", (0, 0))])

    def test_duplicate_instance_id_rejected(self):
        with pytest.raises(InputError, match="duplicate"):
            EmbeddingSet.build(2, [("a", "x", (1, 0)), ("a", "y", (0, 1))])

    def test_wrong_length_rejected(self):
        with pytest.raises(InputError):
            EmbeddingSet.build(3, [("a", "x", (1, 0))])


class TestIntraClass:
    def test_identical_pair(self):
        emb = build_set({"x": [(1, 0), (1, 0)]})
        st = intra_class(emb, "x")
        assert st.s1 == pytest.approx(1.0, abs=1e-12)
        assert st.sigma2 == pytest.approx(0.0, abs=1e-12)
        assert st.pair_count == 1

    def test_three_vectors_brute_forced(self):
        # pairs: cos=0, 0.7071, 0.7071 -> mean 0.4714, pop var 0.1111
        emb = build_set({"x": [(1, 0), (0, 1), (SQ2, SQ2)]})
        st = intra_class(emb, "x")
        assert st.pair_count == 3
        assert st.s1 == pytest.approx(0.4714, abs=1e-4)
        assert st.sigma2 == pytest.approx(0.1111, abs=1e-4)

    def test_matches_oracle_for_50_random_unit_vectors(self):
        rng = np.random.default_rng(11)
        vecs = rng.normal(size=(50, 8))
        vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
        emb = build_set({"x": vecs})
        st = intra_class(emb, "x")
        mean, var, count = naive_intra(vecs)
        assert st.s1 == pytest.approx(mean, abs=1e-9)
        assert st.sigma2 == pytest.approx(var, abs=1e-9)
        assert st.pair_count == count == 50 * 49 // 2

    def test_insufficient_instances_names_class(self):
        emb = build_set({"lonely": [(1, 0)], "other": [(0, 1), (1, 1)]})
        with pytest.raises(InsufficientDataError, match="lonely"):
            intra_class(emb, "lonely")


class TestInterClass:
    def test_identical_singletons(self):
        emb = build_set({"a": [(1, 0)], "b": [(1, 0)]})
        assert inter_class(emb, "a", "b") == pytest.approx(1.0, abs=1e-12)

    def test_hand_computed(self):
        emb = build_set({"a": [(1, 0)], "b": [(0, 1), (SQ2, SQ2)]})
        assert inter_class(emb, "a", "b") == pytest.approx(0.353553, abs=1e-6)

    def test_matches_oracle_30x40(self):
        rng = np.random.default_rng(12)
        va = rng.normal(size=(30, 16))
        vb = rng.normal(size=(40, 16))
        emb = build_set({"a": va, "b": vb})
        assert inter_class(emb, "a", "b") == pytest.approx(naive_inter(va, vb), abs=1e-9)

    def test_symmetry_exact(self):
        rng = np.random.default_rng(13)
        emb = build_set({"a": rng.normal(size=(7, 5)), "b": rng.normal(size=(9, 5))})
        assert inter_class(emb, "a", "b") == inter_class(emb, "b", "a")

    def test_same_class_rejected(self):
        emb = build_set({"a": [(1, 0), (0, 1)], "b": [(1, 1)]})
        with pytest.raises(InputError):
            inter_class(emb, "a", "a")

    def test_unknown_class(self):
        emb = build_set({"a": [(1, 0), (0, 1)], "b": [(1, 1)]})
        with pytest.raises(InputError, match="nope"):
            inter_class(emb, "a", "nope")


class TestSimilarityReport:
    def test_known_pairwise_values(self):
        # Three unit vectors with gram entries 0.1 / 0.2 / 0.6 via Cholesky.
        gram = np.array([[1.0, 0.1, 0.2], [0.1, 1.0, 0.6], [0.2, 0.6, 1.0]])
        rows = np.linalg.cholesky(gram)
        emb = build_set({"a": [rows[0]], "b": [rows[1]], "c": [rows[2]]})
        rep = similarity_report(emb)
        assert rep.s2_max == pytest.approx(0.6, abs=1e-9)
        assert rep.s2_mean == pytest.approx(0.3, abs=1e-9)
        assert rep.delta_s2 == pytest.approx(1.0, abs=1e-9)
        assert rep.argmax_pair == ("b", "c")

    def test_two_identical_singletons(self):
        emb = build_set({"a": [(1, 0)], "b": [(1, 0)]})
        rep = similarity_report(emb)
        assert rep.s2_max == pytest.approx(1.0, abs=1e-12)
        assert rep.s2_mean == pytest.approx(1.0, abs=1e-12)
        assert rep.delta_s2 == pytest.approx(0.0, abs=1e-12)

    def test_separated_clusters_have_smaller_worst_case(self):
        tight = make_cluster_set(3, 20, 8, separation=4.0, seed=5)
        loose = make_cluster_set(3, 20, 8, separation=0.5, seed=5)
        assert similarity_report(tight).s2_max < similarity_report(loose).s2_max

    def test_diagonal_is_nan_not_one(self):
        emb = build_set({"a": [(1, 0), (0.9, 0.2)], "b": [(0, 1), (0.2, 0.9)]})
        rep = similarity_report(emb)
        assert math.isnan(rep.s2_matrix[0][0]) and math.isnan(rep.s2_matrix[1][1])

    def test_matrix_symmetry(self):
        emb = make_cluster_set(4, 10, 8, separation=1.0, seed=6)
        rep = similarity_report(emb)
        assert np.array_equal(rep.s2_matrix, rep.s2_matrix.T, equal_nan=True)

    def test_fewer_than_two_classes_rejected(self):
        emb = build_set({"a": [(1, 0), (0, 1)]})
        with pytest.raises(InputError):
            similarity_report(emb)

    def test_singleton_class_flagged_not_fatal(self):
        emb = build_set({"a": [(1, 0), (0.9, 0.1)], "b": [(0, 1)]})
        rep = similarity_report(emb)
        assert [st.class_id for st in rep.per_class] == ["a"]
        assert any("'b'" in w for w in rep.warnings)

    def test_negative_mean_leaves_delta_undefined(self):
        emb = build_set({"a": [(1.0, 0.0)], "b": [(-1.0, 0.01)]})
        rep = similarity_report(emb)
        assert rep.delta_s2 is None
        assert rep.s2_max < 0

    def test_permutation_invariance(self):
        rng = np.random.default_rng(7)
        vecs = rng.normal(size=(30, 6))
        labels = [f"c{i % 3}" for i in range(30)]
        records = [(f"i{i}", labels[i], vecs[i]) for i in range(30)]
        base = EmbeddingSet.build(6, records)
        perm = rng.permutation(30)
        shuffled = EmbeddingSet.build(6, [records[i] for i in perm])
        r1, r2 = similarity_report(base), similarity_report(shuffled)
        assert r1.s2_max == pytest.approx(r2.s2_max, abs=1e-12)
        assert r1.s2_mean == pytest.approx(r2.s2_mean, abs=1e-12)
        assert r1.delta_s2 == pytest.approx(r2.delta_s2, abs=1e-12)
        for st1 in r1.per_class:
            st2 = r2.stats_for(st1.class_id)
            assert st1.s1 == pytest.approx(st2.s1, abs=1e-12)
            assert st1.sigma2 == pytest.approx(st2.sigma2, abs=1e-12)

    def test_scale_invariance(self):
        emb = make_cluster_set(3, 8, 8, separation=1.5, seed=8)
        scaled = EmbeddingSet.build(
            8, [(rid, cid, vec * 37.5) for rid, cid, vec in emb.records()])
        r1, r2 = similarity_report(emb), similarity_report(scaled)
        assert r1.s2_max == pytest.approx(r2.s2_max, abs=1e-12)
        assert r1.s2_mean == pytest.approx(r2.s2_mean, abs=1e-12)

    def test_bounds(self):
        for seed in range(5):
            emb = make_cluster_set(4, 12, 10, separation=float(seed), seed=seed)
            rep = similarity_report(emb)
            off = rep.s2_matrix[~np.isnan(rep.s2_matrix)]
            assert np.all(off >= -1 - 1e-12) and np.all(off <= 1 + 1e-12)
            assert -1 - 1e-12 <= rep.s2_max <= 1 + 1e-12
            for st in rep.per_class:
                assert -1 - 1e-12 <= st.s1 <= 1 + 1e-12
                assert 0 <= st.sigma2 <= 4
            if rep.s2_mean > 0:
                assert rep.delta_s2 >= 0

    def test_matches_oracle(self):
        rng = np.random.default_rng(42)
        from oracles import random_embedding_set_arrays
        d, class_vectors = random_embedding_set_arrays(rng, max_n=120, max_d=24)
        emb = build_set(class_vectors, dimension=d)
        rep = similarity_report(emb)
        s2, s2_max, s2_mean, delta, argmax = naive_report(class_vectors)
        assert rep.s2_max == pytest.approx(s2_max, abs=1e-9)
        assert rep.s2_mean == pytest.approx(s2_mean, abs=1e-9)
        assert rep.delta_s2 == pytest.approx(delta, abs=1e-9)
        for (cm, cn), v in s2.items():
            assert rep.s2(cm, cn) == pytest.approx(v, abs=1e-9)


class TestGroupingApplication:
    def test_merge_relabels_and_drop_removes(self):
        emb = build_set({"a": [(1, 0), (0.9, 0.1)], "b": [(0, 1), (0.1, 0.9)],
                         "c": [(1, 1), (0.9, 1.1)]})
        with pytest.raises(InputError):
            # only one grouped class would remain; rejected at construction
            ClassGrouping("merge-ab", {"a": "ab", "b": "ab", "c": None})
        g2 = ClassGrouping("merge-ab-keep-c", {"a": "ab", "b": "ab", "c": "c"})
        grouped = apply_grouping(emb, g2)
        assert grouped.classes == ("ab", "c")
        assert grouped.class_counts() == {"ab": 4, "c": 2}
        assert grouped.grouping_name == "merge-ab-keep-c"

    def test_grouping_must_cover_all_classes(self):
        emb = build_set({"a": [(1, 0), (0, 1)], "b": [(1, 1), (1, 2)]})
        with pytest.raises(InputError, match="does not mention"):
            apply_grouping(emb, ClassGrouping("partial", {"a": "x", "zzz": "y"}))

    def test_unknown_class_rejected(self):
        emb = build_set({"a": [(1, 0), (0, 1)], "b": [(1, 1), (1, 2)]})
        g = ClassGrouping("extra", {"a": "a", "b": "b", "ghost": "g"})
        with pytest.raises(InputError, match="unknown"):
            apply_grouping(emb, g)


class TestPearson:
    def test_exact_linear(self):
        assert pearson((1, 2, 3), (2, 4, 6)) == 1.0

    def test_exact_antilinear(self):
        assert pearson((1, 2, 3), (3, 2, 1)) == -1.0

    def test_hand_computed(self):
        # cov_sum 4, ssq 5 and 5 -> 4/5
        assert pearson((1, 2, 3, 4), (1, 3, 2, 4)) == 0.8

    def test_zero_variance(self):
        with pytest.raises(UndefinedCorrelationError):
            pearson((1, 1, 1), (1, 2, 3))

    def test_length_mismatch(self):
        with pytest.raises(InputError):
            pearson((1, 2), (1, 2, 3))
