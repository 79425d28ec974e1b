"""Incentive and convergence analysis on top of recorded runs.

best_response grid-searches one client's constant (scale, noise) deviation
with paired seeds while everyone else stays truthful.  The bound
evaluators turn instance constants into the closed-form certificates:
the incentive gap sqrt(2) L G epsilon / N, the per-client payment ceiling,
and the convergence rate under the inverse-time schedule.  The two
empirical checks resample recorded checkpoints and compare against the
aggregate-variance and gradient-norm inequalities the certificates rest
on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import (AnalysisError, ConfigurationError, DivergenceError,
                     ScheduleError, StatisticsError)
from .objectives import ClientObjective, global_gradient
from .payments import PaymentSchedule, total_payment
from .protocol import ProtocolConfig, RewardSpec, RunTrace, run, utility
from .rng import ANALYSIS, substream
from .strategies import HistoryView, StrategyPlan, make_message

__all__ = [
    "GridPoint",
    "BestResponseResult",
    "BoundReport",
    "best_response",
    "bic_gap_bound",
    "payment_bound",
    "convergence_bound",
    "aggregate_variance_check",
    "gradient_norm_check",
    "gradient_norm_curve",
    "replication_seeds",
]

MIN_REPLICATIONS = 30


@dataclass(frozen=True)
class GridPoint:
    """Mean utility of the deviating client at one (scale, noise) choice."""

    scale: float
    noise: float
    mean_utility: float
    stderr: float
    diverged: bool
    n_replications: int


@dataclass
class BestResponseResult:
    grid: list[GridPoint]
    best_scale: float
    best_noise: float
    best_utility: float
    truthful_utility: float
    gain: float
    gain_stderr: float
    n_replications: int


@dataclass(frozen=True)
class BoundReport:
    """Outcome of checking one closed-form bound against data.

    slack = theoretical - empirical; satisfied allows the stated
    statistical tolerance on top of the theoretical value.
    """

    name: str
    theoretical: float
    empirical: float
    satisfied: bool
    slack: float
    tolerance: float


def replication_seeds(seed: int, count: int) -> list[int]:
    """Derived per-replication run seeds; index r is stable under count."""
    return [int(np.random.SeedSequence(seed, spawn_key=(ANALYSIS, r))
                .generate_state(1, np.uint64)[0]) for r in range(count)]


def best_response(config: ProtocolConfig, clients: Sequence[ClientObjective],
                  payment_schedule: PaymentSchedule | None, reward: RewardSpec,
                  deviant: int, scale_grid: Sequence[float],
                  noise_grid: Sequence[float], replications: int,
                  base_plans: Sequence[StrategyPlan] | None = None) -> BestResponseResult:
    """Grid search the deviant's constant (a, b) reporting strategy.

    Every grid point is evaluated on the same replication seeds (common
    random numbers), so utility differences between points are paired.
    The grids must contain the truthful point a = 1, b = 0, which serves
    as the baseline for the reported gain.  Runs that diverge mark their
    grid point instead of failing the search.
    """
    scale_grid = [float(a) for a in scale_grid]
    noise_grid = [float(b) for b in noise_grid]
    if not any(a == 1.0 for a in scale_grid) or not any(b == 0.0 for b in noise_grid):
        raise ConfigurationError("grids must contain the truthful point (1.0, 0.0)")
    if replications < 1:
        raise ConfigurationError("need at least one replication")
    if not 0 <= deviant < config.n_clients:
        raise ConfigurationError(f"deviant index {deviant} out of range")
    if base_plans is None:
        base_plans = [StrategyPlan.truthful() for _ in range(config.n_clients)]
    seeds = replication_seeds(config.seed, replications)

    samples: dict[tuple[float, float], np.ndarray] = {}
    points: list[GridPoint] = []
    for a in scale_grid:
        for b in noise_grid:
            plans = list(base_plans)
            plans[deviant] = StrategyPlan.pure(a, b)
            utilities = np.empty(replications)
            diverged = False
            for r, run_seed in enumerate(seeds):
                try:
                    trace = run(replace(config, seed=run_seed), clients, plans,
                                payment_schedule)
                except DivergenceError:
                    diverged = True
                    break
                utilities[r] = utility(trace, deviant, reward)
            if diverged:
                points.append(GridPoint(a, b, math.nan, math.nan, True, replications))
                continue
            samples[(a, b)] = utilities
            stderr = (float(utilities.std(ddof=1)) / math.sqrt(replications)
                      if replications > 1 else 0.0)
            points.append(GridPoint(a, b, float(utilities.mean()), stderr,
                                    False, replications))

    if (1.0, 0.0) not in samples:
        raise AnalysisError("the truthful grid point diverged; nothing to compare")
    truthful = samples[(1.0, 0.0)]
    best = max((p for p in points if not p.diverged), key=lambda p: p.mean_utility)
    diffs = samples[(best.scale, best.noise)] - truthful
    gain_stderr = (float(diffs.std(ddof=1)) / math.sqrt(replications)
                   if replications > 1 else 0.0)
    return BestResponseResult(
        grid=points, best_scale=best.scale, best_noise=best.noise,
        best_utility=best.mean_utility, truthful_utility=float(truthful.mean()),
        gain=float(diffs.mean()), gain_stderr=gain_stderr,
        n_replications=replications)


def _require_calibrated(schedule: PaymentSchedule) -> None:
    if schedule.kind != "calibrated" or schedule.G is None:
        raise ScheduleError(
            "this certificate needs a calibrated payment schedule "
            "(constant-C schedules carry no growth constants)")


def bic_gap_bound(schedule: PaymentSchedule, L: float | None = None,
                  n_clients: int | None = None,
                  epsilon: float | None = None) -> float:
    """Incentive gap certificate sqrt(2) L G epsilon / N.

    No deviation in the allowed action space improves expected utility by
    more than this over epsilon-truthful reporting.  Arguments default to
    the values the schedule was built with.
    """
    _require_calibrated(schedule)
    L = schedule.L if L is None else L
    n = schedule.n_clients if n_clients is None else n_clients
    eps = schedule.epsilon if epsilon is None else epsilon
    return math.sqrt(2.0) * L * schedule.G * eps / n


def payment_bound(schedule: PaymentSchedule, epsilon: float, sigma: float,
                  zeta: float, rho: float,
                  grad_norm_curve: Sequence[float]) -> float:
    """Ceiling on one client's total payment over a run.

    grad_norm_curve[t-1] must be ||grad F_i(theta_t)|| along the realized
    trajectory, one entry per step.
    """
    _require_calibrated(schedule)
    curve = np.asarray(grad_norm_curve, dtype=float)
    if curve.shape != (schedule.horizon,):
        raise AnalysisError(
            f"gradient-norm curve has shape {curve.shape}, schedule spans "
            f"{schedule.horizon} steps")
    l_over_n = schedule.L / schedule.n_clients
    head = math.sqrt(2.0) * l_over_n * schedule.G * \
        (2.0 * epsilon ** 2 + 2.0 * epsilon * sigma + 2.0 * zeta ** 2 + rho ** 2)
    tail = math.sqrt(8.0) * l_over_n * epsilon * \
        float(np.dot(schedule.discounted_gammas, curve))
    return head + tail


def convergence_bound(m: float, H: float, n_clients: int, M: float, M_V: float,
                      zeta: float, epsilon: float, initial_gap: float,
                      horizon: int, eta: float | None = None) -> float:
    """Expected optimality gap after ``horizon`` steps of the inverse-time
    schedule with epsilon-truthful clients:

        max( 16 H (2 eps^2 + M + M_V zeta^2) / (3 N m^2 (eta + T)),
             (eta + 1) (F(theta_1) - F*) / (eta + T) ).
    """
    if m <= 0 or H <= 0 or n_clients < 1 or horizon < 1:
        raise ConfigurationError("need m > 0, H > 0, n_clients >= 1, horizon >= 1")
    if eta is None:
        eta = 4.0 * H * (2.0 * M_V + n_clients) / (m * n_clients)
    noise_term = 16.0 * H * (2.0 * epsilon ** 2 + M + M_V * zeta ** 2) / \
        (3.0 * n_clients * m ** 2 * (eta + horizon))
    burn_in = (eta + 1.0) * initial_gap / (eta + horizon)
    return max(noise_term, burn_in)


def _history_at(trace: RunTrace, client: int, step: int) -> HistoryView:
    """Frozen-prefix history for replaying strategies at a checkpoint."""
    return HistoryView(
        thetas=[trace.thetas[k] for k in range(step)],
        gradients=[trace.gradients[k][client] for k in range(step - 1)],
        messages=[trace.messages[k][client] for k in range(step - 1)])


def _worst_report(name: str, rows: list[tuple[float, float, float]]) -> BoundReport:
    """Combine per-probe (theoretical, empirical, tolerance) rows into one
    report anchored at the probe with the least headroom."""
    worst = min(rows, key=lambda r: r[0] + r[2] - r[1])
    theoretical, empirical, tolerance = worst
    return BoundReport(name=name, theoretical=theoretical, empirical=empirical,
                       satisfied=all(e <= t + tol for t, e, tol in rows),
                       slack=theoretical - empirical, tolerance=tolerance)


def aggregate_variance_check(clients: Sequence[ClientObjective],
                             plans: Sequence[StrategyPlan], trace: RunTrace,
                             probe_steps: Sequence[int], replications: int,
                             epsilon: float, M: float, M_V: float, zeta: float,
                             seed: int) -> BoundReport:
    """Empirically test the aggregate-message variance bound

        Var[mean_i m_t^i] <= 2 (2 eps^2 + M + 2 M_V zeta^2) / N
                             + (2 M_V / N) ||grad F(theta_t)||^2

    at frozen checkpoints of a recorded run: the model sequence is not
    re-stepped, only gradients and messages are resampled, so the
    variance is conditional on the trajectory as the bound requires.
    """
    if replications < MIN_REPLICATIONS:
        raise StatisticsError(
            f"variance estimation needs at least {MIN_REPLICATIONS} replications, "
            f"got {replications}")
    n = len(clients)
    horizon = trace.horizon
    rows = []
    for step in probe_steps:
        if not 1 <= step <= horizon:
            raise ConfigurationError(f"probe step {step} outside run horizon {horizon}")
        theta = trace.thetas[step - 1]
        aggregates = np.empty((replications, trace.thetas.shape[1]))
        for r in range(replications):
            payloads = []
            for i in range(n):
                g = clients[i].sample_gradient(
                    theta, substream(seed, ANALYSIS, r, i, step, 0))
                msg = make_message(plans[i], g, step, _history_at(trace, i, step),
                                   substream(seed, ANALYSIS, r, i, step, 1))
                payloads.append(msg.payload)
            aggregates[r] = np.mean(payloads, axis=0)
        centered = aggregates - aggregates.mean(axis=0)
        sq_norms = np.einsum("rd,rd->r", centered, centered)
        empirical = float(sq_norms.mean())
        tolerance = 3.0 * float(sq_norms.std(ddof=1)) / math.sqrt(replications)
        grad_sq = float(np.linalg.norm(global_gradient(clients, theta)) ** 2)
        theoretical = 2.0 * (2.0 * epsilon ** 2 + M + 2.0 * M_V * zeta ** 2) / n \
            + (2.0 * M_V / n) * grad_sq
        rows.append((theoretical, empirical, tolerance))
    return _worst_report("aggregate_variance", rows)


def gradient_norm_check(client: ClientObjective, probe_thetas: Sequence[np.ndarray],
                        replications: int, seed: int) -> BoundReport:
    """Empirically test E||g(theta)|| <= ||grad F(theta)|| + sigma at each
    probe point."""
    if replications < MIN_REPLICATIONS:
        raise StatisticsError(
            f"norm estimation needs at least {MIN_REPLICATIONS} replications, "
            f"got {replications}")
    if len(probe_thetas) == 0:
        raise ConfigurationError("need at least one probe point")
    rows = []
    for k, theta in enumerate(probe_thetas):
        theta = np.asarray(theta, dtype=float)
        norms = np.array([
            float(np.linalg.norm(client.sample_gradient(
                theta, substream(seed, ANALYSIS, k, r))))
            for r in range(replications)])
        theoretical = float(np.linalg.norm(client.exact_gradient(theta))) \
            + client.noise_sigma
        tolerance = 3.0 * float(norms.std(ddof=1)) / math.sqrt(replications)
        rows.append((theoretical, float(norms.mean()), tolerance))
    return _worst_report("gradient_norm", rows)


def gradient_norm_curve(trace: RunTrace, client: ClientObjective) -> np.ndarray:
    """||grad F_i(theta_t)|| for t = 1..T along a recorded trajectory."""
    return np.array([
        float(np.linalg.norm(client.exact_gradient(trace.thetas[t])))
        for t in range(trace.horizon)])
