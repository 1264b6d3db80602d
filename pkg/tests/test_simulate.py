import csv

import numpy as np
import pytest

from conftest import iid_model
from wsn_tradeoff.accuracy import norm_cdf, raudys_accuracy
from wsn_tradeoff.csma import BackoffConfig, EnergyBudget, analyze, stationary_distribution
from wsn_tradeoff.gmrf import mahalanobis_sq
from wsn_tradeoff.simulate import (
    DegenerateTrainingError,
    TrainedClassifier,
    conditional_accuracy,
    empirical_generalization_accuracy,
    end_to_end_sim,
    sample_measurements,
    simulate_ctmc,
    train_fda,
)
from wsn_tradeoff.topology import ActivityState, Graph, enumerate_states

PHI_1 = 0.8413447460685429485852325456320379224779


def tv(p, q):
    return 0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum()


class TestCtmc:
    def test_single_node(self):
        traj = simulate_ctmc(Graph.empty(1), BackoffConfig((1.0,)), events=10**6, seed=3)
        occ = traj.occupancy(enumerate_states(Graph.empty(1)))
        np.testing.assert_allclose(occ, 0.5, atol=0.005)

    def test_chain_preset(self):
        g = Graph.path(3)
        traj = simulate_ctmc(g, BackoffConfig.chain3(1.0), events=10**6, seed=4)
        occ = traj.occupancy(enumerate_states(g))
        assert tv(occ, np.array([1, 1, 2, 1, 1]) / 6) < 0.01

    def test_edgeless_node_activity(self):
        traj = simulate_ctmc(Graph.empty(8), BackoffConfig.uniform(8, 1.0), events=10**6, seed=5)
        occ = traj.occupancy_by_mask()
        frac = np.zeros(8)
        for mask, p in occ.items():
            frac += p * ((mask >> np.arange(8)) & 1)
        np.testing.assert_allclose(frac, 0.5, atol=0.01)

    def test_conflicts_never_violated(self):
        g = Graph(5, frozenset({(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)}))
        traj = simulate_ctmc(g, BackoffConfig.uniform(5, 3.0), events=20000, seed=6)
        allowed = {s.mask for s in enumerate_states(g)}
        assert set(np.unique(traj.masks).tolist()) <= allowed

    def test_reproducible(self):
        a = simulate_ctmc(Graph.path(3), BackoffConfig.chain3(0.7), events=5000, seed=11)
        b = simulate_ctmc(Graph.path(3), BackoffConfig.chain3(0.7), events=5000, seed=11)
        np.testing.assert_array_equal(a.times, b.times)
        np.testing.assert_array_equal(a.masks, b.masks)

    def test_convergence_with_more_events(self):
        g = Graph.path(3)
        b = BackoffConfig.chain3(1.0)
        pi, _ = stationary_distribution(enumerate_states(g), b)
        short = np.mean([tv(simulate_ctmc(g, b, events=10**4, seed=s).occupancy(enumerate_states(g)), pi) for s in range(5)])
        long = np.mean([tv(simulate_ctmc(g, b, events=10**6, seed=s).occupancy(enumerate_states(g)), pi) for s in range(5)])
        assert long < short

    def test_estimators_agree(self):
        g = Graph.path(3)
        traj = simulate_ctmc(g, BackoffConfig.chain3(2.0), events=10**5, seed=2)
        st = enumerate_states(g)
        assert tv(traj.occupancy(st), traj.occupancy(st, estimator="holding")) < 0.01

    def test_time_horizon(self):
        traj = simulate_ctmc(Graph.empty(2), BackoffConfig.uniform(2, 1.0), horizon=50.0, seed=1)
        assert traj.end == 50.0
        assert traj.times[-1] < 50.0
        assert traj.state_at([0.0])[0] == 0

    def test_horizon_validation(self):
        with pytest.raises(ValueError):
            simulate_ctmc(Graph.empty(2), BackoffConfig.uniform(2, 1.0), events=0)
        with pytest.raises(ValueError):
            simulate_ctmc(Graph.empty(2), BackoffConfig.uniform(2, 1.0))

    def test_dump_csv(self, tmp_path):
        traj = simulate_ctmc(Graph.path(3), BackoffConfig.chain3(1.0), events=50, seed=0)
        path = tmp_path / "traj.csv"
        traj.dump_csv(path)
        rows = list(csv.DictReader(path.open()))
        assert list(rows[0]) == ["t", "event_type", "node", "state_bits"]
        assert len(rows) == 51
        assert rows[0]["event_type"] == "start" and rows[0]["state_bits"] == "000"
        for prev, cur in zip(rows, rows[1:]):
            i = int(cur["node"]) - 1
            assert prev["state_bits"][i] != cur["state_bits"][i]
            assert cur["event_type"] == ("activate" if cur["state_bits"][i] == "1" else "deactivate")


class TestSampling:
    def test_empty(self):
        data = sample_measurements(iid_model(3), ActivityState(7, 3), 0, seed=0)
        assert data.X.shape == (0, 3)

    def test_iid_means(self):
        k = 4
        data = sample_measurements(iid_model(k), ActivityState((1 << k) - 1, k), 10**5, seed=1)
        for label in (0, 1):
            rows = data.X[data.y == label]
            np.testing.assert_allclose(rows.mean(axis=0), label, atol=3 / np.sqrt(len(rows)))

    def test_chain_correlation(self, chain_model):
        data = sample_measurements(chain_model, ActivityState.from_bits([1, 0, 1]), 10**5, seed=2)
        centered = data.X - data.y[:, None]
        assert np.corrcoef(centered.T)[0, 1] == pytest.approx(1 / 16, abs=0.01)

    def test_reproducible(self, chain_model):
        a = sample_measurements(chain_model, ActivityState(7, 3), 100, seed=9)
        b = sample_measurements(chain_model, ActivityState(7, 3), 100, seed=9)
        np.testing.assert_array_equal(a.X, b.X)


class TestFda:
    def test_symmetric_boundary(self):
        X = np.array([[0.0], [0.01], [-0.01], [1.0], [1.01], [0.99]])
        y = np.array([0, 0, 0, 1, 1, 1])
        clf = train_fda(X, y)
        assert clf.offset == pytest.approx(-clf.w[0] / 2)
        assert -clf.offset / clf.w[0] == pytest.approx(0.5)

    def test_single_class(self):
        with pytest.raises(DegenerateTrainingError):
            train_fda(np.ones((5, 2)), np.zeros(5))

    def test_singular_scatter(self):
        with pytest.raises(DegenerateTrainingError):
            train_fda(np.array([[0.0, 0.0], [1.0, 1.0]]), np.array([0, 1]))

    def test_consistency(self):
        k = 4
        model = iid_model(k)
        state = ActivityState((1 << k) - 1, k)
        data = sample_measurements(model, state, 200_000, seed=3)
        assert conditional_accuracy(train_fda(data.X, data.y), model, state) == pytest.approx(PHI_1, abs=0.005)


class TestConditionalAccuracy:
    def test_true_parameters_recover_bayes(self, chain_model):
        for mask in range(1, 8):
            state = ActivityState(mask, 3)
            cov = chain_model.marginal_cov(state)
            w = np.linalg.solve(cov, np.ones(state.active_count))
            clf = TrainedClassifier(w, -0.5 * w.sum())
            d2 = mahalanobis_sq(chain_model, state)
            assert conditional_accuracy(clf, chain_model, state) == pytest.approx(norm_cdf(np.sqrt(d2) / 2), abs=1e-12)

    def test_uninformative_direction(self):
        model = iid_model(2)
        clf = TrainedClassifier(np.array([1.0, -1.0]), 0.0)
        assert conditional_accuracy(clf, model, ActivityState(3, 2)) == pytest.approx(0.5)

    def test_zero_weights(self):
        clf = TrainedClassifier(np.zeros(2), 0.3)
        assert conditional_accuracy(clf, iid_model(2), ActivityState(3, 2)) == 0.5

    def test_trained_classifiers_beat_chance_on_average(self):
        model = iid_model(2, sigma_sq=1.0)
        state = ActivityState(3, 2)
        accs = []
        for s in range(200):
            data = sample_measurements(model, state, 10, seed=s)
            try:
                accs.append(conditional_accuracy(train_fda(data.X, data.y), model, state))
            except DegenerateTrainingError:
                accs.append(0.5)
        accs = np.array(accs)
        assert np.all((accs >= 0) & (accs <= 1))
        assert accs.mean() > 0.5

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            conditional_accuracy(TrainedClassifier(np.ones(3), 0.0), iid_model(2), ActivityState(3, 2))


class TestEmpiricalAccuracy:
    def test_against_approximation(self):
        model = iid_model(4)
        state = ActivityState(15, 4)
        mean, se = empirical_generalization_accuracy(model, state, 20, 2000, seed=0)
        assert abs(mean - raudys_accuracy(4.0, 4, 20)) < 0.02
        assert 0 < se < 0.01

    def test_at_clamp(self):
        mean, _ = empirical_generalization_accuracy(iid_model(4), ActivityState(15, 4), 4, 1000, seed=1)
        assert mean == pytest.approx(0.5, abs=0.02)

    def test_large_sample(self):
        mean, _ = empirical_generalization_accuracy(iid_model(4), ActivityState(15, 4), 10**4, 50, seed=2)
        assert mean == pytest.approx(PHI_1, abs=0.005)

    def test_deterministic(self):
        a = empirical_generalization_accuracy(iid_model(2), ActivityState(3, 2), 10, 100, seed=5)
        b = empirical_generalization_accuracy(iid_model(2), ActivityState(3, 2), 10, 100, seed=5)
        assert a == b


class TestEndToEnd:
    def run(self, sc, alpha, seed=0, rate=1.0, **kw):
        budget = EnergyBudget(sc.l, alpha)
        lifetime = analyze(sc.states, sc.rate_map(rate), budget).common_lifetime
        return end_to_end_sim(sc.conflict, sc.model, sc.rate_map(rate), budget, lifetime, seed=seed, grouping=sc.grouping, **kw)

    def test_no_training(self, indep8):
        outs = [self.run(indep8, 0.0, seed=s) for s in range(30)]
        assert all(o.total_accuracy == 0.5 for o in outs)
        tx = np.mean([o.realized_transmissions for o in outs])
        assert tx == pytest.approx(indep8.l, rel=0.05)

    def test_accounting(self, chain3):
        out = self.run(chain3, 0.4, seed=3)
        assert out.training_epochs + out.operational_epochs == 30
        assert sum(out.realized_m.values()) == out.training_epochs
        assert sum(out.occupancy.values()) == pytest.approx(1.0)

    def test_battery_limited(self, indep8):
        for s in range(20):
            out = self.run(indep8, 0.2, seed=s, battery_limited=True)
            assert out.realized_transmissions.max() <= indep8.l

    def test_bit_identical(self, chain3):
        a, b = self.run(chain3, 0.4, seed=42), self.run(chain3, 0.4, seed=42)
        assert a.realized_m == b.realized_m
        assert a.empirical_accuracy == b.empirical_accuracy
        np.testing.assert_array_equal(a.realized_transmissions, b.realized_transmissions)
        assert a.total_accuracy == b.total_accuracy

    def test_untrained_states_score_half(self, indep8):
        out = self.run(indep8, 0.2, seed=1)
        for mask, acc in out.empirical_accuracy.items():
            k = bin(mask).count("1")
            pooled = sum(c for m, c in out.realized_m.items() if bin(m).count("1") == k)
            if pooled <= k:
                assert acc == 0.5
