"""Oracle checks shared by the ``validate`` command and the acceptance suite."""

from __future__ import annotations

import numpy as np

from wsn_tradeoff.accuracy import chain3_accuracy_closed_form, indep_accuracy_closed_form, raudys_accuracy
from wsn_tradeoff.csma import EnergyBudget, analyze, stationary_distribution
from wsn_tradeoff.gmrf import IIDDecay, build_model, mahalanobis_sq
from wsn_tradeoff.scenarios import Scenario, chain3_scenario, indep_scenario, line_layout
from wsn_tradeoff.simulate import empirical_generalization_accuracy, end_to_end_sim, simulate_ctmc
from wsn_tradeoff.topology import ActivityState, build_nn_graph

OCCUPANCY_TV_TOL = 0.01
RAUDYS_TOL = 0.02
E2E_TOL = {"indep": 0.03, "chain3": 0.04}
E2E_REPLICATIONS = {"indep": 200, "chain3": 500}
E2E_POINT = {"indep": (1.0, 0.2), "chain3": (1.0, 0.4)}


def occupancy_tv(scenario: Scenario, rate: float, events: int, seed) -> dict[str, float]:
    """Total-variation distance between simulated occupancy and the product form, per estimator."""
    backoff = scenario.rate_map(rate)
    traj = simulate_ctmc(scenario.conflict, backoff, events=events, seed=seed)
    pi, _ = stationary_distribution(scenario.states, backoff)
    out = {}
    for est in ("holding", "time"):
        occ = traj.occupancy(scenario.states, estimator=est)
        out[est] = 0.5 * float(np.abs(occ - pi).sum() + (1.0 - occ.sum()))
    return out


def raudys_gap(delta_sq: float, n_active: int, m: int, trials: int, seed) -> tuple[float, float, float]:
    """``(empirical, approximation, |gap|)`` for i.i.d. readings with the given separation."""
    layout = line_layout(n_active)
    model = build_model(layout, build_nn_graph(layout), n_active / delta_sq, IIDDecay())
    state = ActivityState((1 << n_active) - 1, n_active)
    emp, _ = empirical_generalization_accuracy(model, state, m, trials, seed)
    approx = float(raudys_accuracy(mahalanobis_sq(model, state), n_active, m))
    return emp, approx, abs(emp - approx)


def analytic_accuracy(scenario: Scenario, rate: float, alpha: float) -> float:
    if scenario.name == "indep":
        return indep_accuracy_closed_form(scenario.n, rate, alpha, scenario.l, scenario.model.noise_var)
    g = scenario.model.edge_corr
    return chain3_accuracy_closed_form(rate, alpha, scenario.l, scenario.model.noise_var, g[(0, 1)], g[(1, 2)])


def end_to_end_accuracies(scenario: Scenario, rate: float, alpha: float, replications: int, seed) -> np.ndarray:
    budget = EnergyBudget(scenario.l, alpha)
    backoff = scenario.rate_map(rate)
    lifetime = analyze(scenario.states, backoff, budget).common_lifetime
    return np.array(
        [
            end_to_end_sim(
                scenario.conflict, scenario.model, backoff, budget, lifetime,
                seed=[*np.atleast_1d(seed), r], grouping=scenario.grouping,
            ).total_accuracy
            for r in range(replications)
        ]
    )


def run_checks(seed: int = 0, events: int = 1_000_000, trials: int = 10_000, replications: int | None = None) -> dict:
    scenarios = {"indep": indep_scenario(), "chain3": chain3_scenario()}
    checks = []

    def add(name, observed, tol, **detail):
        checks.append({"name": name, "observed": float(observed), "tolerance": tol,
                       "passed": bool(observed <= tol), **detail})

    for i, name in enumerate(("chain3", "indep")):
        tv = occupancy_tv(scenarios[name], 1.0, events, [seed, 1, i])
        add(f"occupancy_{name}", tv["holding"], OCCUPANCY_TV_TOL, events=events, time_weighted_tv=tv["time"])

    emp, approx, gap = raudys_gap(4.0, 4, 20, trials, [seed, 2])
    add("raudys_vs_fda", gap, RAUDYS_TOL, empirical=emp, approximation=approx, trials=trials)

    for i, name in enumerate(("indep", "chain3")):
        rate, alpha = E2E_POINT[name]
        reps = replications or E2E_REPLICATIONS[name]
        accs = end_to_end_accuracies(scenarios[name], rate, alpha, reps, [seed, 3, i])
        ref = analytic_accuracy(scenarios[name], rate, alpha)
        add(f"end_to_end_{name}", abs(accs.mean() - ref), E2E_TOL[name],
            simulated=float(accs.mean()), analytic=ref, replications=reps)

    return {"seed": seed, "passed": all(c["passed"] for c in checks), "checks": checks}
