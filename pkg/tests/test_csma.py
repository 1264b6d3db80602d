import math

import numpy as np
import pytest
from scipy.special import comb

from wsn_tradeoff.accuracy import classifier_groups, pooled_samples
from wsn_tradeoff.csma import (
    BackoffConfig,
    EnergyBudget,
    analyze,
    chain3_closed_forms,
    common_lifetime,
    expected_active,
    indep_closed_forms,
    lifetimes,
    mean_training_samples,
    stationary_distribution,
    throughput,
    training_samples,
)
from wsn_tradeoff.topology import ActivityState, Graph, enumerate_states

LOG_GRID = np.logspace(-2, 2, 20)


def states_of(graph):
    return enumerate_states(graph)


class TestStationary:
    def test_single_node(self):
        pi, z = stationary_distribution(states_of(Graph.empty(1)), BackoffConfig((1.0,)))
        np.testing.assert_allclose(pi, [0.5, 0.5])
        assert z == 2.0

    def test_chain_preset(self):
        pi, z = stationary_distribution(states_of(Graph.path(3)), BackoffConfig.chain3(1.0))
        assert z == 6.0
        np.testing.assert_allclose(pi, np.array([1, 1, 2, 1, 1]) / 6, rtol=1e-15)

    def test_two_edgeless(self):
        pi, _ = stationary_distribution(states_of(Graph.empty(2)), BackoffConfig.uniform(2, 1.0))
        np.testing.assert_allclose(pi, 0.25)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            stationary_distribution([], BackoffConfig((1.0,)))

    def test_rates_validated(self):
        for bad in (0.0, -1.0, math.inf, math.nan):
            with pytest.raises(ValueError):
                BackoffConfig((1.0, bad))

    @pytest.mark.parametrize("seed", range(10))
    def test_detailed_balance(self, seed):
        rng = np.random.default_rng(seed)
        n = 7
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        g = Graph(n, frozenset(p for p in pairs if rng.random() < 0.3))
        rates = rng.uniform(0.1, 5.0, size=n)
        states = states_of(g)
        pi, _ = stationary_distribution(states, BackoffConfig(rates))
        index = {s.mask: k for k, s in enumerate(states)}
        for s in states:
            for i in range(n):
                up = s.mask | (1 << i)
                if up != s.mask and up in index:
                    assert pi[index[s.mask]] * rates[i] == pytest.approx(pi[index[up]], rel=1e-13)
        assert pi.sum() == pytest.approx(1.0, abs=1e-12)

    def test_relabeling_invariance(self):
        # a 4-cycle's states map onto themselves under rotation
        cyc = Graph(4, frozenset({(0, 1), (1, 2), (2, 3), (0, 3)}))
        states = states_of(cyc)
        pi, _ = stationary_distribution(states, BackoffConfig.uniform(4, 1.7))
        by_mask = dict(zip((s.mask for s in states), pi))
        for s in states:
            rot = ActivityState.from_active([(i + 1) % 4 for i in s.active], 4)
            assert by_mask[rot.mask] == pytest.approx(by_mask[s.mask], rel=1e-14)


class TestThroughputAndLifetime:
    def test_edgeless_half(self):
        st = states_of(Graph.empty(5))
        pi, _ = stationary_distribution(st, BackoffConfig.uniform(5, 1.0))
        np.testing.assert_allclose(throughput(pi, st), 0.5, rtol=1e-14)

    def test_chain_third(self):
        st = states_of(Graph.path(3))
        pi, _ = stationary_distribution(st, BackoffConfig.chain3(1.0))
        np.testing.assert_allclose(throughput(pi, st), 1 / 3, rtol=1e-14)

    def test_vanishing_rate(self):
        st = states_of(Graph.empty(3))
        pi, _ = stationary_distribution(st, BackoffConfig.uniform(3, 1e-9))
        assert np.all(throughput(pi, st) < 1e-8)

    def test_lifetimes(self):
        t, u = lifetimes(np.array([0.5, 0.5]), EnergyBudget(100, 0.2))
        np.testing.assert_allclose(t, 200)
        np.testing.assert_allclose(u, 160)

    def test_full_training_leaves_nothing(self):
        _, u = lifetimes(np.array([0.3, 0.7]), EnergyBudget(100, 1.0))
        np.testing.assert_array_equal(u, 0)

    def test_zero_throughput_is_infinite(self):
        t, u = lifetimes(np.array([0.0, 0.5]), EnergyBudget(10, 0.5))
        assert math.isinf(t[0]) and math.isinf(u[0])
        assert t[1] == 20

    def test_high_rate_limit(self):
        st = states_of(Graph.empty(8))
        pi, _ = stationary_distribution(st, BackoffConfig.uniform(8, 1e6))
        _, u = lifetimes(throughput(pi, st), EnergyBudget(100, 0.2))
        np.testing.assert_allclose(u, 80, rtol=1e-3)

    def test_budget_validation(self):
        with pytest.raises(ValueError):
            EnergyBudget(100, 1.5)
        with pytest.raises(ValueError):
            EnergyBudget(0, 0.5)

    def test_theta_increases_in_own_rate(self):
        g = Graph(4, frozenset({(0, 1), (1, 2), (2, 3)}))
        st = states_of(g)
        base = np.array([0.7, 1.3, 0.4, 2.0])
        prev = -1.0
        for r in np.logspace(-2, 2, 40):
            rates = base.copy()
            rates[1] = r
            pi, _ = stationary_distribution(st, BackoffConfig(rates))
            th = throughput(pi, st)[1]
            assert th > prev
            prev = th


class TestTrainingSamples:
    def test_pooled_count_k3(self):
        st = states_of(Graph.empty(8))
        an = analyze(st, BackoffConfig.uniform(8, 1.0), EnergyBudget(100, 0.2))
        pooled = pooled_samples(an.samples, classifier_groups(st, "active_count"))
        k3 = next(i for i, s in enumerate(st) if s.active_count == 3)
        assert pooled[k3] == pytest.approx(20 * 56 / 128, rel=1e-13)
        assert an.samples.sum() == pytest.approx(0.2 * 200, rel=1e-12)

    def test_chain_preset_counts(self):
        st = states_of(Graph.path(3))
        an = analyze(st, BackoffConfig.chain3(1.0), EnergyBudget(10, 0.4))
        np.testing.assert_allclose(an.samples, [2, 2, 4, 2, 2], rtol=1e-13)

    def test_no_training(self):
        np.testing.assert_array_equal(training_samples([0.2, 0.8], 50.0, 0.0), 0)

    def test_unequal_lifetimes_policy(self):
        t = np.array([10.0, 12.0])
        assert common_lifetime(t) == 10.0
        with pytest.raises(ValueError):
            common_lifetime(t, "per-node")
        assert common_lifetime(np.array([5.0, 5.0]), "per-node") == 5.0

    def test_unequal_throughput_uses_first_death(self):
        st = states_of(Graph.path(3))
        an = analyze(st, BackoffConfig.uniform(3, 1.0), EnergyBudget(10, 0.5))
        assert an.common_lifetime == pytest.approx(an.lifetime.min())
        with pytest.raises(ValueError):
            analyze(st, BackoffConfig.uniform(3, 1.0), EnergyBudget(10, 0.5), "per-node")


class TestAverages:
    def test_expected_active_edgeless(self):
        st = states_of(Graph.empty(8))
        for nu in (0.1, 1.0, 7.0):
            pi, _ = stationary_distribution(st, BackoffConfig.uniform(8, nu))
            assert expected_active(pi, st) == pytest.approx(8 * nu / (nu + 1), rel=1e-13)

    def test_expected_active_chain(self):
        st = states_of(Graph.path(3))
        pi, _ = stationary_distribution(st, BackoffConfig.chain3(1.0))
        assert expected_active(pi, st) == pytest.approx(1.0)

    def test_mean_samples_limits(self):
        cf_hi = indep_closed_forms(8, 1e6, EnergyBudget(100, 0.2))
        assert mean_training_samples(cf_hi.pi_k, cf_hi.m_k) == pytest.approx(20, rel=1e-3)
        cf_lo = indep_closed_forms(8, 1e-4, EnergyBudget(100, 0.2))
        m_bar = mean_training_samples(cf_lo.pi_k, cf_lo.m_k)
        assert m_bar == pytest.approx(20 / 1e-4, rel=0.01)
        assert mean_training_samples([1.0], [42.0]) == 42.0


class TestClosedForms:
    def test_indep_values(self):
        cf = indep_closed_forms(8, 1.0, EnergyBudget(100, 0.2))
        np.testing.assert_allclose(cf.pi_k, comb(8, np.arange(9)) / 256, rtol=1e-15)
        assert cf.theta == 0.5
        assert cf.pi_k.sum() == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("n", range(1, 11))
    def test_engine_matches_indep(self, n):
        st = states_of(Graph.empty(n))
        k = np.array([s.active_count for s in st])
        groups = classifier_groups(st, "active_count")
        for nu in LOG_GRID:
            budget = EnergyBudget(100, 0.2)
            an = analyze(st, BackoffConfig.uniform(n, nu), budget)
            cf = indep_closed_forms(n, nu, budget)
            pi_k = np.bincount(k, weights=an.pi, minlength=n + 1)
            np.testing.assert_allclose(pi_k, cf.pi_k, rtol=1e-12)
            np.testing.assert_allclose(an.throughput, cf.theta, rtol=1e-12)
            np.testing.assert_allclose(an.op_lifetime, cf.U, rtol=1e-12)
            m_k = np.bincount(groups, weights=an.samples, minlength=n + 1)
            np.testing.assert_allclose(m_k, cf.m_k, rtol=1e-12)

    def test_chain_values(self):
        cf = chain3_closed_forms(1.0, EnergyBudget(10, 0.4))
        assert cf.z == 6 and cf.theta == pytest.approx(1 / 3)
        assert cf.m[2] == pytest.approx(4.0)

    @pytest.mark.parametrize("eta", LOG_GRID)
    def test_engine_matches_chain(self, eta):
        st = states_of(Graph.path(3))
        budget = EnergyBudget(10, 0.4)
        an = analyze(st, BackoffConfig.chain3(eta), budget, "per-node")
        cf = chain3_closed_forms(eta, budget)
        assert an.z == pytest.approx(cf.z, rel=1e-12)
        np.testing.assert_allclose(an.pi, cf.pi, rtol=1e-12)
        np.testing.assert_allclose(an.throughput, cf.theta, rtol=1e-12)
        np.testing.assert_allclose(an.op_lifetime, cf.U, rtol=1e-12)
        np.testing.assert_allclose(an.samples, cf.m, rtol=1e-12)
