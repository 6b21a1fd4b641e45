"""Heterogeneity metric tests against a brute-force entropy oracle.

The oracle below recomputes every quantity with explicit loops over the
joint probability table and shares no code with the library.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedsim.metrics import (
    EmptyDistributionError,
    FederationMetrics,
    InteractionMatrix,
    LabelMismatchError,
    dht_from_matrix,
    entropy,
    federation_metrics,
    mutual_information,
)


def oracle_triplet(counts: list[list[int]]) -> tuple[float, float, float]:
    """Brute-force (ci, ai, sc) from the joint table, loops only."""
    n = sum(sum(row) for row in counts)
    assert n > 0
    rows = len(counts)
    cols = len(counts[0])

    def h(probs):
        total = 0.0
        for p in probs:
            if p > 0:
                total -= p * math.log(p)
        return total

    p_y = [sum(counts[y][a] for a in range(cols)) / n for y in range(rows)]
    p_a = [sum(counts[y][a] for y in range(rows)) / n for a in range(cols)]
    p_ya = [counts[y][a] / n for y in range(rows) for a in range(cols)]

    hy, ha, hya = h(p_y), h(p_a), h(p_ya)
    ci = 1.0 if rows == 1 else 1.0 - hy / math.log(rows)
    ai = 1.0 if cols == 1 else 1.0 - ha / math.log(cols)
    mi = hy + ha - hya
    sc = 0.0 if hy + ha == 0 else 2.0 * mi / (hy + ha)
    return ci, ai, sc


matrix_strategy = st.integers(min_value=1, max_value=5).flatmap(
    lambda r: st.integers(min_value=1, max_value=5).flatmap(
        lambda c: st.lists(
            st.lists(st.integers(min_value=0, max_value=100), min_size=c, max_size=c),
            min_size=r,
            max_size=r,
        )
    )
).filter(lambda rows: sum(sum(r) for r in rows) > 0)


class TestEntropy:
    def test_uniform_binary(self):
        assert entropy([50, 50]) == pytest.approx(math.log(2), abs=1e-12)

    def test_degenerate(self):
        assert entropy([100, 0]) == 0.0

    def test_three_quarters(self):
        # oracle: -(0.75 ln 0.75 + 0.25 ln 0.25)
        assert entropy([150, 50]) == pytest.approx(0.562335, abs=1e-6)

    def test_all_zero_raises(self):
        with pytest.raises(EmptyDistributionError, match="empty distribution"):
            entropy([0, 0, 0])

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            entropy([3, -1])


class TestMutualInformation:
    def test_independent(self):
        m = InteractionMatrix.from_counts([[50, 50], [50, 50]])
        assert mutual_information(m) == pytest.approx(0.0, abs=1e-12)

    def test_deterministic(self):
        m = InteractionMatrix.from_counts([[100, 0], [0, 100]])
        assert mutual_information(m) == pytest.approx(math.log(2), abs=1e-12)

    def test_ninety_ten(self):
        # oracle: H(Y)+H(A)-H(Y,A) summed over the 4 cells by hand
        m = InteractionMatrix.from_counts([[90, 10], [10, 90]])
        assert mutual_information(m) == pytest.approx(0.368064, abs=1e-6)

    @given(matrix_strategy)
    def test_non_negative(self, rows):
        m = InteractionMatrix.from_counts(rows)
        assert mutual_information(m) >= -1e-12


class TestDhtFromMatrix:
    @pytest.mark.parametrize(
        "counts, expected",
        [
            ([[50, 50], [50, 50]], (0.0, 0.0, 0.0)),
            ([[100, 0], [0, 100]], (0.0, 0.0, 1.0)),
            ([[90, 10], [10, 90]], (0.0, 0.0, 0.531004)),
            ([[150, 50], [0, 0]], (1.0, 0.188722, 0.0)),
        ],
    )
    def test_worked_examples(self, counts, expected):
        t = dht_from_matrix(InteractionMatrix.from_counts(counts))
        assert t.ci == pytest.approx(expected[0], abs=1e-5)
        assert t.ai == pytest.approx(expected[1], abs=1e-5)
        assert t.sc == pytest.approx(expected[2], abs=1e-5)

    def test_single_class_single_attribute_conventions(self):
        t = dht_from_matrix(InteractionMatrix.from_counts([[7]]))
        assert (t.ci, t.ai, t.sc) == (1.0, 1.0, 0.0)

    def test_empty_matrix_raises(self):
        with pytest.raises(EmptyDistributionError):
            dht_from_matrix(InteractionMatrix.from_counts([[0, 0], [0, 0]]))

    @given(matrix_strategy)
    @settings(max_examples=300)
    def test_matches_oracle(self, rows):
        t = dht_from_matrix(InteractionMatrix.from_counts(rows))
        ci, ai, sc = oracle_triplet(rows)
        assert t.ci == pytest.approx(ci, abs=1e-9)
        assert t.ai == pytest.approx(ai, abs=1e-9)
        assert t.sc == pytest.approx(sc, abs=1e-9)

    @given(matrix_strategy)
    @settings(max_examples=200)
    def test_range(self, rows):
        t = dht_from_matrix(InteractionMatrix.from_counts(rows))
        for v in (t.ci, t.ai, t.sc):
            assert -1e-12 <= v <= 1 + 1e-12

    @given(matrix_strategy, st.integers(min_value=2, max_value=9))
    def test_scale_invariance(self, rows, factor):
        base = dht_from_matrix(InteractionMatrix.from_counts(rows))
        scaled = dht_from_matrix(
            InteractionMatrix.from_counts([[factor * v for v in row] for row in rows])
        )
        assert np.allclose(base.as_array(), scaled.as_array(), atol=1e-9)

    @given(matrix_strategy, st.randoms(use_true_random=False))
    def test_permutation_invariance(self, rows, rnd):
        base = dht_from_matrix(InteractionMatrix.from_counts(rows))
        shuffled_rows = list(rows)
        rnd.shuffle(shuffled_rows)
        cols = list(zip(*shuffled_rows))
        rnd.shuffle(cols)
        permuted = [list(r) for r in zip(*cols)]
        perm = dht_from_matrix(InteractionMatrix.from_counts(permuted))
        assert np.allclose(base.as_array(), perm.as_array(), atol=1e-12)


class TestFederationMetrics:
    def test_two_balanced_clients(self):
        m = InteractionMatrix.from_counts([[50, 50], [50, 50]])
        fm = federation_metrics([m, m])
        assert all(abs(v) < 1e-12 for v in fm.to_dict().values())

    def test_disjoint_single_cell_clients(self):
        # summed matrix [[100,0],[0,100]]; each client single class and
        # single attribute, so per-client conventions kick in
        m1 = InteractionMatrix.from_counts([[100, 0], [0, 0]])
        m2 = InteractionMatrix.from_counts([[0, 0], [0, 100]])
        fm = federation_metrics([m1, m2])
        assert fm.gci == pytest.approx(0.0, abs=1e-12)
        assert fm.gsc == pytest.approx(1.0, abs=1e-12)
        assert fm.cci == pytest.approx(1.0)
        assert fm.cai == pytest.approx(1.0)
        assert fm.csc == pytest.approx(0.0)

    @given(matrix_strategy, st.integers(min_value=1, max_value=5))
    def test_identical_clients_collapse(self, rows, k):
        m = InteractionMatrix.from_counts(rows)
        fm = federation_metrics([m] * k)
        t = dht_from_matrix(m)
        assert fm.gci == pytest.approx(t.ci, abs=1e-12)
        assert fm.cci == pytest.approx(t.ci, abs=1e-12)
        assert fm.gsc == pytest.approx(t.sc, abs=1e-12)
        assert fm.csc == pytest.approx(t.sc, abs=1e-12)

    @given(st.lists(matrix_strategy.map(lambda r: np.asarray(r)), min_size=1, max_size=4))
    def test_global_equals_dht_of_sum(self, arrays):
        shape = arrays[0].shape
        mats = [InteractionMatrix.from_counts(np.resize(a, shape)) for a in arrays]
        fm = federation_metrics(mats)
        total = InteractionMatrix.from_counts(sum(m.counts for m in mats))
        t = dht_from_matrix(total)
        assert (fm.gci, fm.gai, fm.gsc) == (t.ci, t.ai, t.sc)

    def test_label_mismatch(self):
        m1 = InteractionMatrix.from_counts([[1, 2], [3, 4]])
        m2 = InteractionMatrix.from_counts([[1, 2, 3], [4, 5, 6]])
        with pytest.raises(LabelMismatchError):
            federation_metrics([m1, m2])


class TestSerialization:
    def test_round_trip(self):
        m = InteractionMatrix.from_counts([[90, 10], [10, 90]])
        again = InteractionMatrix.from_json(m.to_json())
        assert np.array_equal(again.counts, m.counts)
        assert again.class_labels == m.class_labels
        assert again.attribute_labels == m.attribute_labels

    def test_json_shape(self):
        m = InteractionMatrix.from_counts([[1, 2], [3, 4]])
        import json

        obj = json.loads(m.to_json())
        assert obj == {"classes": [0, 1], "attributes": [0, 1], "counts": [[1, 2], [3, 4]]}

    def test_metrics_dict_keys(self):
        fm = FederationMetrics(0, 0, 0, 0, 0, 0)
        assert set(fm.to_dict()) == {"gci", "cci", "gai", "cai", "gsc", "csc"}
