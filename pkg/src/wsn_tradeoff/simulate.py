"""Stochastic oracle: event-driven CSMA simulation and actually-trained FDA classifiers.

Nothing here touches the product-form formulas. The activity process is
driven directly by its transition rates (activation at the back-off rate when
unblocked, deactivation at rate 1), and classifiers are fit on sampled data.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

from wsn_tradeoff.accuracy import norm_cdf
from wsn_tradeoff.csma import BackoffConfig, EnergyBudget
from wsn_tradeoff.gmrf import MeasurementModel
from wsn_tradeoff.topology import ActivityState, Graph

CHUNK = 1 << 16


class DegenerateTrainingError(ValueError):
    """Training data cannot produce an FDA rule (a class is missing or scatter is singular)."""


@njit(cache=True)
def _advance(nbr, rates, mask, t, t_stop, u_time, u_pick, out_t, out_mask, out_node):
    n = rates.size
    used = 0
    for e in range(u_time.size):
        if t >= t_stop:
            break
        total = 0.0
        for i in range(n):
            if (mask >> i) & 1:
                total += 1.0
            elif not (nbr[i] & mask):
                total += rates[i]
        t += -math.log(u_time[e]) / total
        target = u_pick[e] * total
        acc = 0.0
        node = n - 1
        for i in range(n):
            if (mask >> i) & 1:
                acc += 1.0
            elif not (nbr[i] & mask):
                acc += rates[i]
            else:
                continue
            if target < acc:
                node = i
                break
        mask ^= 1 << node
        out_t[e] = t
        out_mask[e] = mask
        out_node[e] = node
        used += 1
    return used, mask, t


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Piecewise-constant path: ``masks[j]`` holds on ``[times[j], times[j+1])``.

    ``times[0]`` is the start; ``nodes[j]`` is the node that toggled at
    ``times[j]`` (``-1`` for the start marker). The path ends at ``end``.
    """

    n: int
    times: np.ndarray
    masks: np.ndarray
    nodes: np.ndarray
    end: float
    rates: np.ndarray
    nbr: np.ndarray
    seed: object = None

    @property
    def event_count(self) -> int:
        return len(self.times) - 1

    def exit_rates(self, masks: np.ndarray) -> np.ndarray:
        bits = (masks[:, None] >> np.arange(self.n)) & 1
        blocked = (masks[:, None] & self.nbr[None, :]) != 0
        return np.where(bits == 1, 1.0, np.where(blocked, 0.0, self.rates[None, :])).sum(axis=1)

    def occupancy_by_mask(
        self, start: float = 0.0, stop: float | None = None, estimator: str = "time"
    ) -> dict[int, float]:
        """Fraction of time spent in each visited state.

        ``time`` uses the sampled holding times inside ``[start, stop]``.
        ``holding`` replaces each completed sojourn by its mean ``1/R(state)``,
        which estimates the same long-run fractions with lower variance; it
        always uses the whole path.
        """
        if estimator == "holding":
            visits = self.masks[:-1]
            dur = 1.0 / self.exit_rates(visits)
            masks = visits
        elif estimator == "time":
            stop = self.end if stop is None else stop
            dur = np.diff(np.clip(np.append(self.times, self.end), start, stop))
            masks = self.masks
        else:
            raise ValueError(f"unknown estimator {estimator!r}")
        total = dur.sum()
        uniq, inv = np.unique(masks, return_inverse=True)
        sums = np.bincount(inv, weights=dur, minlength=uniq.size)
        return {int(m): float(v / total) for m, v in zip(uniq, sums)}

    def occupancy(self, states: Sequence[ActivityState], **kw) -> np.ndarray:
        occ = self.occupancy_by_mask(**kw)
        return np.array([occ.get(s.mask, 0.0) for s in states])

    def state_at(self, t) -> np.ndarray:
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") - 1
        return self.masks[idx]

    def dump_csv(self, path: str | Path) -> None:
        """Write ``t,event_type,node,state_bits`` rows; nodes are 1-based."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "event_type", "node", "state_bits"])
            for t, m, node in zip(self.times, self.masks, self.nodes):
                bits = "".join(str((int(m) >> i) & 1) for i in range(self.n))
                if node < 0:
                    w.writerow([f"{t:.12g}", "start", "", bits])
                else:
                    kind = "activate" if (int(m) >> int(node)) & 1 else "deactivate"
                    w.writerow([f"{t:.12g}", kind, int(node) + 1, bits])


def simulate_ctmc(
    conflict: Graph,
    backoff: BackoffConfig,
    events: int | None = None,
    horizon: float | None = None,
    seed=0,
    start_mask: int = 0,
    rng: np.random.Generator | None = None,
) -> Trajectory:
    """Run the activity process for a number of events or up to a time horizon."""
    if (events is None) == (horizon is None):
        raise ValueError("give exactly one of events or horizon")
    if (events is not None and events <= 0) or (horizon is not None and not horizon > 0):
        raise ValueError("horizon must be positive")
    n = conflict.node_count
    rates = backoff.as_array()
    if rates.size != n:
        raise ValueError(f"{rates.size} rates for {n} nodes")
    nbr = np.array(conflict.neighbor_masks(), dtype=np.int64)
    rng = np.random.default_rng(seed) if rng is None else rng

    t_stop = np.inf if horizon is None else float(horizon)
    remaining = np.iinfo(np.int64).max if events is None else int(events)
    times, masks, nodes = [np.zeros(1)], [np.array([start_mask], dtype=np.int64)], [np.array([-1], dtype=np.int64)]
    mask, t = int(start_mask), 0.0
    while remaining > 0 and t < t_stop:
        size = min(CHUNK, remaining)
        u_time = 1.0 - rng.random(size)  # (0, 1]
        u_pick = rng.random(size)
        out_t = np.empty(size)
        out_m = np.empty(size, dtype=np.int64)
        out_n = np.empty(size, dtype=np.int64)
        used, mask, t = _advance(nbr, rates, mask, t, t_stop, u_time, u_pick, out_t, out_m, out_n)
        times.append(out_t[:used])
        masks.append(out_m[:used])
        nodes.append(out_n[:used])
        remaining -= used
        if used < size:
            break
    times_a = np.concatenate(times)
    masks_a = np.concatenate(masks)
    nodes_a = np.concatenate(nodes)
    if horizon is not None:
        # the last jump overshoots the horizon; drop it and end exactly there
        keep = times_a < t_stop
        times_a, masks_a, nodes_a = times_a[keep], masks_a[keep], nodes_a[keep]
        end = t_stop
    else:
        end = float(times_a[-1])
    return Trajectory(n, times_a, masks_a, nodes_a, end, rates, nbr, seed)


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray


def sample_measurements(model: MeasurementModel, state: ActivityState, count: int, seed=0, rng=None) -> Dataset:
    """Labeled draws restricted to the active nodes (equal priors)."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    rng = np.random.default_rng(seed) if rng is None else rng
    k = state.active_count
    if count == 0 or k == 0:
        return Dataset(np.zeros((count, k)), rng.integers(0, 2, size=count) if count else np.zeros(0, dtype=np.int64))
    chol = np.linalg.cholesky(model.marginal_cov(state))
    y = rng.integers(0, 2, size=count)
    X = y[:, None] + rng.standard_normal((count, k)) @ chol.T
    return Dataset(X, y)


@dataclass(frozen=True)
class TrainedClassifier:
    """Linear rule: predict 1 when ``w @ x + offset > 0``."""

    w: np.ndarray
    offset: float

    def predict(self, X) -> np.ndarray:
        return (np.asarray(X) @ self.w + self.offset > 0).astype(int)


def train_fda(X, y) -> TrainedClassifier:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    x0, x1 = X[y == 0], X[y == 1]
    if len(x0) == 0 or len(x1) == 0:
        raise DegenerateTrainingError("both classes are needed to train")
    mu0, mu1 = x0.mean(axis=0), x1.mean(axis=0)
    c0, c1 = x0 - mu0, x1 - mu1
    # per-class maximum-likelihood covariances
    scatter = c0.T @ c0 / len(x0) + c1.T @ c1 / len(x1)
    k = X.shape[1]
    if k == 0 or np.linalg.matrix_rank(scatter) < k:
        raise DegenerateTrainingError("pooled class covariance is singular")
    w = np.linalg.solve(scatter, mu1 - mu0)
    if not np.all(np.isfinite(w)):
        raise DegenerateTrainingError("non-finite discriminant")
    return TrainedClassifier(w, float(-0.5 * w @ (mu0 + mu1)))


def conditional_accuracy(clf: TrainedClassifier, model: MeasurementModel, state: ActivityState) -> float:
    """Exact accuracy of a fixed linear rule under the true class Gaussians."""
    if clf.w.size != state.active_count:
        raise ValueError("classifier dimension does not match the state")
    var = float(clf.w @ model.marginal_cov(state) @ clf.w)
    if not var > 0:
        return 0.5
    s = math.sqrt(var)
    m1 = float(clf.w.sum()) + clf.offset
    m0 = clf.offset
    return 0.5 * norm_cdf(m1 / s) + 0.5 * norm_cdf(-m0 / s)


def _trial_accuracy(model, state, m, chol, rng) -> float:
    k = state.active_count
    y = rng.integers(0, 2, size=m)
    X = y[:, None] + rng.standard_normal((m, k)) @ chol.T
    try:
        clf = train_fda(X, y)
    except DegenerateTrainingError:
        return 0.5
    return conditional_accuracy(clf, model, state)


def empirical_generalization_accuracy(
    model: MeasurementModel, state: ActivityState, m: int, trials: int, seed=0
) -> tuple[float, float]:
    """Mean and standard error of the trained-FDA accuracy over independent trials."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if state.active_count == 0:
        return 0.5, 0.0
    chol = np.linalg.cholesky(model.marginal_cov(state))
    accs = np.array(
        [_trial_accuracy(model, state, int(m), chol, np.random.default_rng([seed, t])) for t in range(trials)]
    )
    se = float(accs.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return float(accs.mean()), se


@dataclass(eq=False)
class SimOutcome:
    occupancy: dict
    realized_m: dict
    realized_transmissions: np.ndarray
    empirical_accuracy: dict
    total_accuracy: float
    training_epochs: int
    operational_epochs: int
    seed: object
    classifiers: dict = field(default_factory=dict, repr=False)


def end_to_end_sim(
    conflict: Graph,
    model: MeasurementModel,
    backoff: BackoffConfig,
    budget: EnergyBudget,
    lifetime: float,
    seed=0,
    grouping: str = "state",
    burn_in: float = 20.0,
    battery_limited: bool = False,
) -> SimOutcome:
    """Training stage then operational stage on one simulated activity path.

    One measurement epoch happens at every integer time; every active node
    measures and transmits once per epoch. Epochs in ``(0, alpha*lifetime]``
    collect labeled samples, binned by classifier group; the remaining epochs
    up to ``lifetime`` are classified by the trained per-group rules and
    scored with their exact conditional accuracy. With ``battery_limited``
    the run halts once any node has spent ``l`` transmissions.
    """
    if grouping not in ("state", "active_count"):
        raise ValueError(f"unknown grouping {grouping!r}")
    rng = np.random.default_rng(seed)
    n = conflict.node_count
    horizon = burn_in + lifetime
    traj = simulate_ctmc(conflict, backoff, horizon=horizon + 1e-9, rng=rng)

    epochs = np.arange(1, int(math.floor(lifetime + 1e-9)) + 1, dtype=float)
    epoch_masks = traj.state_at(burn_in + epochs)
    bits = (epoch_masks[:, None] >> np.arange(n)) & 1
    used = np.cumsum(bits, axis=0)
    if battery_limited:
        dead = np.nonzero(np.any(used >= budget.l, axis=1))[0]
        if dead.size:
            stop = dead[0] + 1
            epochs, epoch_masks, bits, used = epochs[:stop], epoch_masks[:stop], bits[:stop], used[:stop]
    transmissions = bits.sum(axis=0)

    train_sel = epochs <= budget.alpha * lifetime + 1e-9
    train_masks, op_masks = epoch_masks[train_sel], epoch_masks[~train_sel]

    def group_of(mask: int):
        return mask if grouping == "state" else bin(mask).count("1")

    realized_m: dict[int, int] = {}
    for mk in train_masks:
        realized_m[int(mk)] = realized_m.get(int(mk), 0) + 1

    pools: dict = {}
    for mk in sorted(realized_m):
        st = ActivityState(mk, n)
        data = sample_measurements(model, st, realized_m[mk], rng=rng)
        xs, ys = pools.setdefault(group_of(mk), ([], []))
        xs.append(data.X)
        ys.append(data.y)

    classifiers: dict = {}
    for g, (xs, ys) in pools.items():
        X, y = np.vstack(xs), np.concatenate(ys)
        if X.shape[1] == 0 or len(y) <= X.shape[1]:
            continue
        try:
            classifiers[g] = train_fda(X, y)
        except DegenerateTrainingError:
            pass

    per_state: dict[int, float] = {}
    for mk in np.unique(op_masks):
        mk = int(mk)
        clf = classifiers.get(group_of(mk))
        per_state[mk] = 0.5 if clf is None else conditional_accuracy(clf, model, ActivityState(mk, n))
    total = float(np.mean([per_state[int(mk)] for mk in op_masks])) if op_masks.size else float("nan")

    return SimOutcome(
        occupancy=traj.occupancy_by_mask(start=burn_in, stop=horizon),
        realized_m=realized_m,
        realized_transmissions=transmissions,
        empirical_accuracy=per_state,
        total_accuracy=total,
        training_epochs=int(train_masks.size),
        operational_epochs=int(op_masks.size),
        seed=seed,
        classifiers=classifiers,
    )
