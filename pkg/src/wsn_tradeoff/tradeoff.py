"""Rate sweeps, the lifetime-accuracy frontier, infinite-rate limits, and constrained optimization."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from wsn_tradeoff.accuracy import bayes_accuracy, pooled_samples, raudys_accuracy, state_weighted_accuracy
from wsn_tradeoff.csma import EnergyBudget, analyze, common_lifetime, expected_active, lifetimes
from wsn_tradeoff.scenarios import Scenario
from wsn_tradeoff.topology import state_matrix

DEFAULT_RATE_GRID = np.logspace(-2, 2, 200)
DEFAULT_ALPHA_GRID = np.round(np.linspace(0.01, 0.90, 90), 10)
DEFAULT_RATE_CAP = 1e4
BISECT_ITERS = 60
GOLDEN_ITERS = 40
UNBOUNDED = math.inf


@dataclass(frozen=True, eq=False)
class SweepRow:
    rate: float
    alpha: float
    U: float
    k_bar: float
    m_bar: float
    A: float
    A_bayes: float
    per_state_A: np.ndarray
    m_per_state: np.ndarray


@dataclass(frozen=True)
class OptimumReport:
    beta: float
    alpha_star: float
    rate_star: float  # math.inf marks the unbounded outcome
    U_star: float
    feasible: bool

    @property
    def unbounded(self) -> bool:
        return self.feasible and math.isinf(self.rate_star)


@dataclass(frozen=True, eq=False)
class LimitPoint:
    U: float
    A: float
    A_bayes: float
    pi: np.ndarray
    m: np.ndarray


def evaluate(scenario: Scenario, rate: float, alpha: float) -> SweepRow:
    """One sweep row through the general state-space path."""
    budget = EnergyBudget(scenario.l, alpha)
    an = analyze(scenario.states, scenario.rate_map(rate), budget, scenario.lifetime_policy)
    acc = state_weighted_accuracy(an, scenario.model, scenario.grouping, delta_sq=scenario.delta_sq)
    return SweepRow(
        rate=float(rate),
        alpha=float(alpha),
        U=(1.0 - alpha) * an.common_lifetime,
        k_bar=expected_active(an.pi, an.states),
        m_bar=float(np.dot(an.pi, acc.m_effective)),
        A=acc.total,
        A_bayes=acc.bayes_total,
        per_state_A=acc.per_state,
        m_per_state=acc.m_effective,
    )


def sweep(scenario: Scenario, rate_grid: Iterable[float], alpha: float) -> list[SweepRow]:
    rates = np.asarray(list(rate_grid), dtype=float)
    if np.any(rates <= 0) or np.any(np.diff(rates) < 0):
        raise ValueError("rate grid must be positive and sorted")
    return [evaluate(scenario, r, alpha) for r in rates]


def group_values(scenario: Scenario, per_state: np.ndarray) -> np.ndarray:
    """Collapse a per-state array to one value per classifier group."""
    out = np.full(scenario.groups.max() + 1, np.nan)
    out[scenario.groups] = per_state
    return out


class _Evaluator:
    """Vectorized accuracy over alpha at a fixed rate.

    At fixed rate the sample counts scale linearly in alpha, so each rate needs
    one stationary solve.
    """

    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self.k = np.array([s.active_count for s in scenario.states], dtype=float)
        self._slice = lru_cache(maxsize=4096)(self._compute_slice)

    def _compute_slice(self, rate: float):
        an = analyze(self.sc.states, self.sc.rate_map(rate), EnergyBudget(self.sc.l, 0.0), self.sc.lifetime_policy)
        base = an.common_lifetime * pooled_samples(an.pi, self.sc.groups)
        return an.pi, an.common_lifetime, base

    def accuracy(self, rate: float, alphas) -> np.ndarray:
        pi, _, base = self._slice(float(rate))
        alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
        per = raudys_accuracy(self.sc.delta_sq[None, :], self.k[None, :], alphas[:, None] * base[None, :])
        return np.atleast_2d(per) @ pi

    def lifetime(self, rate: float, alphas) -> np.ndarray:
        _, t, _ = self._slice(float(rate))
        return (1.0 - np.asarray(alphas, dtype=float)) * t


def frontier(scenario: Scenario, rate_grid, alpha_list) -> dict:
    """Parametric (U, A) curves per alpha, a Bayes reference, and envelope flags.

    Returns a dict with ``curves`` (alpha -> list of (rate, U, A, A_bayes)),
    ``bayes`` (list of (rate, U, A_bayes) with no training) and ``envelope``
    (set of (alpha, rate) points not dominated in both U and A).
    """
    rates = np.asarray(list(rate_grid), dtype=float)
    alphas = [float(a) for a in alpha_list]
    if any(not 0.0 < a < 1.0 for a in alphas):
        raise ValueError("frontier alphas must lie in (0, 1)")
    curves = {}
    for a in alphas:
        curves[a] = [(r.rate, r.U, r.A, r.A_bayes) for r in sweep(scenario, rates, a)]
    bayes = []
    for r in rates:
        row = evaluate(scenario, r, 0.0)
        bayes.append((row.rate, row.U, row.A_bayes))
    points = [(a, rate, U, A) for a, rows in curves.items() for rate, U, A, _ in rows]
    return {"curves": curves, "bayes": bayes, "envelope": upper_right_envelope(points)}


def upper_right_envelope(points: Sequence[tuple]) -> set:
    """Keys ``(alpha, rate)`` of points not weakly dominated in (U, A) by another point."""
    pts = sorted(points, key=lambda p: (-p[2], -p[3]))
    keep = set()
    best_a = -math.inf
    for a, rate, U, A in pts:
        if A > best_a:
            keep.add((a, rate))
            best_a = A
    return keep


def limit_distribution(scenario: Scenario) -> np.ndarray:
    """Stationary law as the rate knob tends to infinity.

    Mass concentrates on states maximizing the summed growth degree of their
    active rates, in proportion to the product of leading coefficients.
    """
    bits = state_matrix(scenario.states).astype(float)
    coef = np.array([c for c, _ in scenario.rate_asymptotics], dtype=float)
    deg = np.array([d for _, d in scenario.rate_asymptotics], dtype=float)
    power = bits @ deg
    top = power == power.max()
    w = np.where(top, np.prod(np.where(bits > 0, coef, 1.0), axis=1), 0.0)
    return w / w.sum()


def limit_at_infinite_rate(scenario: Scenario, alpha: float) -> LimitPoint:
    pi = limit_distribution(scenario)
    theta = state_matrix(scenario.states).T.astype(float) @ pi
    t, _ = lifetimes(theta, EnergyBudget(scenario.l, alpha))
    t_common = common_lifetime(t, scenario.lifetime_policy)
    m = pooled_samples(alpha * t_common * pi, scenario.groups)
    k = np.array([s.active_count for s in scenario.states])
    per = raudys_accuracy(scenario.delta_sq, k, m)
    return LimitPoint(
        U=(1.0 - alpha) * t_common,
        A=float(np.dot(pi, per)),
        A_bayes=bayes_accuracy(pi, scenario.delta_sq),
        pi=pi,
        m=m,
    )


class Optimizer:
    """Maximize operational lifetime subject to ``A >= beta``.

    Grid search over ``alpha_grid x (rate_grid + rate_cap)``, then one local
    pass: the minimal feasible alpha at the incumbent rate by bisection (A is
    nondecreasing in alpha), and a golden-section search in log-rate between
    the incumbent's grid neighbors. The infinite-rate limit is a separate
    candidate; the rate is reported as unbounded when the limit is feasible and
    either the incumbent sits at the cap or the limit has larger lifetime.
    The accuracy grid is computed once and shared across targets.
    """

    def __init__(self, scenario: Scenario, alpha_grid=None, rate_grid=None, rate_cap: float = DEFAULT_RATE_CAP):
        self.sc = scenario
        self.alphas = np.asarray(DEFAULT_ALPHA_GRID if alpha_grid is None else alpha_grid, dtype=float)
        grid = np.asarray(DEFAULT_RATE_GRID if rate_grid is None else rate_grid, dtype=float)
        if self.alphas.size == 0 or grid.size == 0:
            raise ValueError("grids must be non-empty")
        if not math.isfinite(rate_cap) or rate_cap <= 0:
            raise ValueError("rate_cap must be positive and finite")
        grid = np.unique(grid[grid <= rate_cap])
        self.rate_cap = float(rate_cap)
        self.rates = np.append(grid, rate_cap) if grid.size == 0 or grid[-1] < rate_cap else grid
        self.ev = _Evaluator(scenario)
        self.A = np.vstack([self.ev.accuracy(r, self.alphas) for r in self.rates])
        self.U = np.vstack([self.ev.lifetime(r, self.alphas) for r in self.rates])
        self.A_limit = np.array([limit_at_infinite_rate(scenario, a).A for a in self.alphas])

    def _min_alpha(self, acc, beta, lo_idx_hint=None):
        """Smallest alpha in [alphas[0], alphas[-1]] with acc(alpha) >= beta, or None."""
        a_lo, a_hi = float(self.alphas[0]), float(self.alphas[-1])
        if acc(a_hi) < beta:
            return None
        if acc(a_lo) >= beta:
            return a_lo
        for _ in range(BISECT_ITERS):
            mid = 0.5 * (a_lo + a_hi)
            if acc(mid) >= beta:
                a_hi = mid
            else:
                a_lo = mid
        return a_hi

    def _best_at_rate(self, rate, beta):
        a = self._min_alpha(lambda x: float(self.ev.accuracy(rate, x)[0]), beta)
        if a is None:
            return -math.inf, None
        return float(self.ev.lifetime(rate, a)), a

    def _limit(self, beta):
        lim = lambda a: limit_at_infinite_rate(self.sc, a).A
        a = self._min_alpha(lim, beta)
        if a is None:
            return None
        return a, limit_at_infinite_rate(self.sc, a).U

    def solve(self, beta: float) -> OptimumReport:
        feas = self.A >= beta
        inc = None
        if feas.any():
            U = np.where(feas, self.U, -np.inf)
            j, i = np.unravel_index(np.argmax(U), U.shape)
            inc = (float(self.U[j, i]), float(self.alphas[i]), float(self.rates[j]), int(j))

        if inc is not None:
            u_best, a_best, r_best, j = inc
            u_ref, a_ref = self._best_at_rate(r_best, beta)
            if a_ref is not None and u_ref > u_best:
                u_best, a_best = u_ref, a_ref
            lo = self.rates[max(j - 1, 0)]
            hi = self.rates[min(j + 1, len(self.rates) - 1)]
            if hi > lo:
                r_g, (u_g, a_g) = self._golden(math.log(lo), math.log(hi), beta)
                if a_g is not None and u_g > u_best:
                    u_best, a_best, r_best = u_g, a_g, r_g
            inc = (u_best, a_best, r_best)

        lim = self._limit(beta)
        if lim is not None and (inc is None or inc[2] >= self.rate_cap or lim[1] > inc[0]):
            return OptimumReport(beta, lim[0], UNBOUNDED, lim[1], True)
        if inc is None:
            return OptimumReport(beta, math.nan, math.nan, math.nan, False)
        return OptimumReport(beta, inc[1], inc[2], inc[0], True)

    def _golden(self, x_lo, x_hi, beta):
        f = lambda x: self._best_at_rate(math.exp(x), beta)
        phi = (math.sqrt(5) - 1) / 2
        c = x_hi - phi * (x_hi - x_lo)
        d = x_lo + phi * (x_hi - x_lo)
        fc, fd = f(c), f(d)
        for _ in range(GOLDEN_ITERS):
            if fc[0] >= fd[0]:
                x_hi, d, fd = d, c, fc
                c = x_hi - phi * (x_hi - x_lo)
                fc = f(c)
            else:
                x_lo, c, fc = c, d, fd
                d = x_lo + phi * (x_hi - x_lo)
                fd = f(d)
        return (math.exp(c), fc) if fc[0] >= fd[0] else (math.exp(d), fd)


def optimize(scenario: Scenario, beta: float, alpha_grid=None, rate_grid=None, rate_cap=DEFAULT_RATE_CAP) -> OptimumReport:
    return Optimizer(scenario, alpha_grid, rate_grid, rate_cap).solve(beta)


def threshold_scan(scenario: Scenario, beta_grid, alpha_grid=None, rate_grid=None, rate_cap=DEFAULT_RATE_CAP):
    betas = [float(b) for b in beta_grid]
    opt = Optimizer(scenario, alpha_grid, rate_grid, rate_cap)
    return [opt.solve(b) for b in betas], opt


def transition_beta(opt: Optimizer, reports: Sequence[OptimumReport], resolution: float = 1e-3) -> float | None:
    """Accuracy target at which the optimal rate first becomes unbounded.

    The first bounded-to-unbounded switch in ``reports`` brackets the
    transition, which is then bisected to ``resolution``.
    """
    for prev, cur in zip(reports, reports[1:]):
        if prev.feasible and not prev.unbounded and cur.unbounded:
            lo, hi = prev.beta, cur.beta
            while hi - lo > resolution:
                mid = 0.5 * (lo + hi)
                if opt.solve(mid).unbounded:
                    hi = mid
                else:
                    lo = mid
            return 0.5 * (lo + hi)
    return None
