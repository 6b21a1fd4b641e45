from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedsim.estimation import DhtMatrix
from fedsim.metrics import InteractionMatrix
from fedsim.selection import (
    ContractError,
    FedDiverseSelector,
    FedPnsSelector,
    HcsfedSelector,
    PowDSelector,
    RoundContext,
    RoundFeedback,
    RoundRobinSelector,
    STRATEGIES,
    UniformSelector,
    _project_simplex,
    feddiverse_select,
    make_selector,
    variance_min_weights,
)


def ctx(seed=0, round_index=1, client_loss=None):
    return RoundContext(
        round_index=round_index, rng=np.random.default_rng(seed), client_loss=client_loss
    )


# exact zeros are an interesting case; subnormals are excluded because
# scaling them underflows to zero and genuinely changes the distribution
triplet_value = st.one_of(st.just(0.0), st.floats(min_value=1e-9, max_value=1.0))
dht_strategy = st.integers(min_value=4, max_value=12).flatmap(
    lambda k: st.lists(
        st.lists(triplet_value, min_size=3, max_size=3),
        min_size=k,
        max_size=k,
    )
).map(lambda rows: DhtMatrix(np.array(rows)))


class TestFedDiverse:
    def test_pure_axis_example(self):
        dht = DhtMatrix(np.array([[0, 0, 1], [1, 0, 0], [0, 1, 0]], dtype=float))
        picks, _ = feddiverse_select(dht, 3, np.random.default_rng(0))
        assert picks == [0, 1, 2]

    def test_step1_probabilities_follow_sc(self):
        dht = DhtMatrix(np.array([[0, 0, 0.2], [0, 0, 0.3], [0, 0, 0.5]]))
        rng = np.random.default_rng(123)
        counts = np.zeros(3)
        n = 4000
        for _ in range(n):
            picks, _ = feddiverse_select(dht, 1, rng)
            counts[picks[0]] += 1
        assert np.allclose(counts / n, [0.2, 0.3, 0.5], atol=0.03)

    def test_full_selection_is_permutation(self):
        rng = np.random.default_rng(5)
        dht = DhtMatrix(rng.uniform(size=(9, 3)))
        picks, _ = feddiverse_select(dht, 9, np.random.default_rng(1))
        assert sorted(picks) == list(range(9))

    @given(dht_strategy, st.sampled_from([0.25, 0.5, 0.01]), st.integers(0, 100))
    @settings(max_examples=100, deadline=None)
    def test_scale_invariance(self, dht, factor, seed):
        # shrinking factors keep scaled values inside [0, 1]
        m = min(6, dht.n_clients)
        base, _ = feddiverse_select(dht, m, np.random.default_rng(seed))
        picks, _ = feddiverse_select(
            DhtMatrix(dht.values * factor), m, np.random.default_rng(seed)
        )
        assert picks == base

    def test_zero_priority_dimension_uniform_fallback(self):
        dht = DhtMatrix(np.array([[0.5, 0.1, 0.0], [0.2, 0.7, 0.0], [0.1, 0.1, 0.0]]))
        picks, _ = feddiverse_select(dht, 1, np.random.default_rng(3))
        assert picks[0] in {0, 1, 2}

    def test_parallel_triplets_fall_back_in_step3(self):
        dht = DhtMatrix(np.tile(np.array([[0.2, 0.3, 0.5]]), (4, 1)))
        picks, _ = feddiverse_select(dht, 3, np.random.default_rng(4))
        assert len(set(picks)) == 3

    def test_rotation_offset_advances_per_block(self):
        rng = np.random.default_rng(6)
        dht = DhtMatrix(rng.uniform(size=(12, 3)))
        _, offset = feddiverse_select(dht, 6, np.random.default_rng(0))
        assert offset == 2
        _, offset = feddiverse_select(dht, 7, np.random.default_rng(0))
        assert offset == 2  # partial block does not rotate

    def test_selector_requires_dht(self):
        sel = FedDiverseSelector(5)
        with pytest.raises(ContractError):
            sel.select(2, ctx())


class TestRoundRobin:
    def test_counter_semantics(self):
        sel = RoundRobinSelector(4)
        assert sel.select(2, ctx()) == [0, 1]
        assert sel.select(2, ctx()) == [2, 3]
        assert sel.select(2, ctx()) == [0, 1]

    def test_fairness_bound(self):
        sel = RoundRobinSelector(5)
        rounds = -(-5 // 2)  # ceil(K/m)
        for _ in range(rounds):
            sel.select(2, ctx())
        spread = sel.times_selected.max() - sel.times_selected.min()
        assert spread <= 1


class TestPowD:
    def test_picks_highest_loss(self):
        losses = {0: 0.1, 1: 0.9, 2: 0.5}
        sel = PowDSelector(3, pool_size=3)
        picks = sel.select(1, ctx(client_loss=lambda k: losses[k]))
        assert picks == [1]

    def test_ascending_flag_inverts(self):
        losses = {0: 0.1, 1: 0.9, 2: 0.5}
        sel = PowDSelector(3, ascending=True, pool_size=3)
        assert sel.select(1, ctx(client_loss=lambda k: losses[k])) == [0]

    def test_missing_context(self):
        with pytest.raises(ContractError, match="client_loss"):
            PowDSelector(3).select(1, ctx())

    def test_default_pool_size(self):
        assert PowDSelector(24).candidate_pool_size(9) == 18
        assert PowDSelector(10).candidate_pool_size(9) == 10


class TestFedPns:
    def test_opposing_client_gets_flagged(self):
        sel = FedPnsSelector(3)
        agg = np.array([1.0, 2.0])
        sel.observe(
            RoundFeedback(
                round_index=1,
                selected=[0, 1],
                client_updates={0: -agg, 1: agg},
                aggregate_update=agg,
            )
        )
        assert sel.weights[0] == 0.5
        assert sel.weights[1] == 1.0

    def test_weight_floor(self):
        sel = FedPnsSelector(2)
        agg = np.ones(2)
        for _ in range(10):
            sel.observe(
                RoundFeedback(1, [0], client_updates={0: -agg}, aggregate_update=agg)
            )
        assert sel.weights[0] == pytest.approx(0.05)

    def test_flagged_selected_less_often(self):
        sel = FedPnsSelector(4)
        sel.weights = np.array([0.05, 1.0, 1.0, 1.0])
        counts = np.zeros(4)
        rng = np.random.default_rng(0)
        for _ in range(2000):
            k = sel.select(1, RoundContext(1, rng))[0]
            counts[k] += 1
        assert counts[0] < counts[1:].min() / 3


class TestHcsfed:
    def make_clustered_feedback(self, sel, spread=10.0):
        rng = np.random.default_rng(7)
        updates = {}
        for k in range(sel.n_clients):
            center = np.zeros(64)
            center[k % 3] = spread * (1 + k % 3)
            updates[k] = center + 0.01 * rng.normal(size=64)
        return RoundFeedback(1, [], all_client_updates=updates)

    def test_uniform_before_clustering(self):
        sel = HcsfedSelector(9, seed=1)
        picks = sel.select(3, ctx(seed=2))
        assert len(set(picks)) == 3

    def test_clusters_then_stratifies(self):
        sel = HcsfedSelector(9, seed=1)
        sel.observe(self.make_clustered_feedback(sel))
        assert sel.clusters is not None
        assert len(np.unique(sel.clusters)) == 3
        picks = sel.select(6, ctx(seed=3))
        assert len(set(picks)) == 6
        chosen_clusters = sel.clusters[picks]
        counts = np.bincount(chosen_clusters, minlength=3)
        assert (counts == 2).all()  # 3 equal clusters, 6 slots

    def test_compressed_dim_floor(self):
        sel = HcsfedSelector(5)
        assert sel.compressed_dim(210) == 8
        assert sel.compressed_dim(2_230_000) == 22


class TestVarianceMinWeights:
    def test_disjoint_single_cells(self):
        mats = [
            InteractionMatrix.from_counts([[100, 0], [0, 0]]),
            InteractionMatrix.from_counts([[0, 0], [0, 100]]),
        ]
        w = variance_min_weights(mats)
        assert np.allclose(w, [0.5, 0.5], atol=1e-9)

    def test_single_client(self):
        w = variance_min_weights([InteractionMatrix.from_counts([[10, 5], [5, 10]])])
        assert np.allclose(w, [1.0])

    def test_mirrored_pair_zero_variance(self):
        mats = [
            InteractionMatrix.from_counts([[80, 20], [20, 80]]),
            InteractionMatrix.from_counts([[20, 80], [80, 20]]),
        ]
        w = variance_min_weights(mats)
        assert np.allclose(w, [0.5, 0.5], atol=1e-6)
        s = 0.5 * mats[0].counts + 0.5 * mats[1].counts
        assert np.allclose(s, s.mean())

        # brute-force oracle over the 1-D simplex grid
        grid = np.linspace(0, 1, 101)
        def var(a):
            s = a * mats[0].counts + (1 - a) * mats[1].counts
            return ((s - s.mean()) ** 2).mean()
        best = grid[np.argmin([var(a) for a in grid])]
        assert best == pytest.approx(0.5, abs=0.01)

    def test_on_simplex_and_no_worse_than_uniform(self):
        rng = np.random.default_rng(11)
        mats = [
            InteractionMatrix.from_counts(rng.integers(0, 50, size=(3, 2)) + 1)
            for _ in range(6)
        ]
        w = variance_min_weights(mats)
        assert (w >= -1e-12).all()
        assert w.sum() == pytest.approx(1.0, abs=1e-9)
        cells = np.array([m.counts.ravel() for m in mats], dtype=float)
        def var(weights):
            s = weights @ cells
            return ((s - s.mean()) ** 2).mean()
        assert var(w) <= var(np.full(6, 1 / 6)) + 1e-9

    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=8))
    def test_simplex_projection(self, v):
        p = _project_simplex(np.array(v))
        assert (p >= 0).all()
        assert p.sum() == pytest.approx(1.0, abs=1e-9)

    def test_oscillating_instance_warns_but_stays_bounded(self):
        # asymmetric counts make the fixed-step projected descent bounce;
        # the contract is a warning plus the best iterate seen, which can
        # never be worse than the uniform starting point
        mats = [
            InteractionMatrix.from_counts([[200, 0], [0, 0]]),
            InteractionMatrix.from_counts([[0, 0], [0, 100]]),
        ]
        with pytest.warns(RuntimeWarning, match="did not converge"):
            w = variance_min_weights(mats)
        cells = np.array([m.counts.ravel() for m in mats], dtype=float)

        def var(weights):
            s = weights @ cells
            return ((s - s.mean()) ** 2).mean()

        assert var(w) <= var(np.array([0.5, 0.5])) + 1e-9


class TestAllStrategies:
    @pytest.mark.parametrize("strategy", [s for s in STRATEGIES])
    def test_count_uniqueness_determinism(self, strategy):
        k, m = 10, 4
        kwargs = {}
        if strategy == "feddiverse":
            kwargs["dht"] = DhtMatrix(np.random.default_rng(1).uniform(size=(k, 3)))
        if strategy == "variance_oracle":
            kwargs["weights"] = np.full(k, 0.1)
        results = []
        for _ in range(2):
            sel = make_selector(strategy, k, seed=5, **kwargs)
            loss = (lambda j: float(j)) if strategy == "pow_d" else None
            picks = sel.select(m, ctx(seed=9, client_loss=loss))
            assert len(picks) == m
            assert len(set(picks)) == m
            results.append(picks)
        assert results[0] == results[1]

    def test_unknown_strategy(self):
        with pytest.raises(ValueError, match="unknown strategy"):
            make_selector("magic", 5)

    def test_m_larger_than_k(self):
        with pytest.raises(ContractError):
            UniformSelector(3).select(4, ctx())

    def test_variance_oracle_needs_weights(self):
        with pytest.raises(ContractError):
            make_selector("variance_oracle", 5)
