"""Experiment drivers behind the command line.

Each experiment kind turns a validated config into one or more CSV
files plus a manifest, all committed atomically by the output set.
Results depend only on the config (including its seed), never on wall
clock, host, or worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ..analysis import (BoundReport, aggregate_variance_check, bic_gap_bound,
                        convergence_bound, gradient_norm_check,
                        gradient_norm_curve, payment_bound, replication_seeds)
from ..errors import ConfigurationError, DivergenceError
from ..meanest import (mc_mse, mc_mse_fixed, mc_scale_grid, nash_equilibrium,
                       optimal_scale, penalty_of_anarchy, truthful_mse,
                       weighted_mse)
from ..objectives import (global_minimizer, global_value, heterogeneity,
                          noise_moment_bounds)
from ..payments import build_schedule, total_payment
from ..protocol import RewardSpec, reward_value, run, utility
from ..strategies import StrategyPlan
from .config import ExperimentConfig
from .outputs import OutputSet

__all__ = ["run_experiment"]


def run_experiment(config: ExperimentConfig, out_dir: str,
                   seed: int | None = None, jobs: int = 1) -> list[str]:
    """Run one experiment, returning the list of committed file names.

    ``seed`` overrides the config's seed; ``jobs`` parallelizes sweep
    grid points (output bytes do not depend on it).
    """
    if seed is not None:
        config = ExperimentConfig(data={**config.data, "seed": int(seed)})
    if jobs < 1:
        raise ConfigurationError(f"jobs must be >= 1, got {jobs}")
    outputs = OutputSet(out_dir)
    try:
        extra = _DRIVERS[config.kind](config, outputs, jobs)
        outputs.write_manifest(config, extra)
        return outputs.commit()
    except BaseException:
        outputs.quarantine()
        raise


# ------------------------------------------------------------------ run

def _drive_run(config: ExperimentConfig, outputs: OutputSet, jobs: int) -> dict:
    clients = config.build_clients()
    plans = config.build_plans()
    schedule = config.build_payment_schedule()
    reward = config.build_reward()
    trace = run(config.build_protocol(), clients, plans, schedule)

    n = trace.n_clients
    paid = trace.payments is not None
    header = ["step", "theta_norm"] + [f"loss_{i}" for i in range(n)]
    if paid:
        header += [f"payment_{i}" for i in range(n)]
    header.append("gamma")
    if paid:
        header.append("c_t")
    rows = []
    for t in range(1, trace.horizon + 2):
        row = [t, float(np.linalg.norm(trace.thetas[t - 1]))]
        row += [float(v) for v in trace.losses[t - 1]]
        last = t == trace.horizon + 1
        if paid:
            row += [None] * n if last else [float(v) for v in trace.payments[t - 1]]
        row.append(None if last else float(trace.gammas[t - 1]))
        if paid:
            row.append(None if last else float(trace.payment_constants[t - 1]))
        rows.append(row)
    outputs.write_csv("trace.csv", header, rows)

    util_rows = []
    for i in range(n):
        r = reward_value(trace.losses_final, i, reward)
        p = total_payment(trace, i) if paid else None
        util_rows.append([i, r, p, r - p if paid else r])
    outputs.write_csv("utilities.csv",
                      ["client", "reward", "total_payment", "utility"], util_rows)
    return {"final_global_loss": float(trace.global_loss_curve[-1])}


# ---------------------------------------------------------------- sweep

def _sweep_point(data: dict, c_value: float, a: float, b: float) -> tuple:
    """One grid point: deviant plays (a, b) against constant C payments.

    Top level so process pools can ship it to workers; everything is
    rebuilt from the canonical config dict inside.
    """
    config = ExperimentConfig(data=data)
    sweep = config.data["sweep"]
    deviant = sweep["deviant"]
    clients = config.build_clients()
    base = config.build_plans()
    reward = config.build_reward()
    horizon = config.data["protocol"]["horizon"]
    schedule = build_schedule("constant", config.build_rate(), horizon, c=c_value)
    plans = list(base)
    plans[deviant] = StrategyPlan.pure(a, b)

    utilities = []
    for run_seed in replication_seeds(config.seed, sweep["replications"]):
        try:
            trace = run(config.build_protocol(seed=run_seed), clients, plans,
                        schedule)
        except DivergenceError:
            return (c_value, a, b, deviant, math.nan, math.nan, len(utilities))
        utilities.append(utility(trace, deviant, reward))
    mean = float(np.mean(utilities))
    stderr = (float(np.std(utilities, ddof=1)) / math.sqrt(len(utilities))
              if len(utilities) > 1 else 0.0)
    return (c_value, a, b, deviant, mean, stderr, len(utilities))


def _drive_sweep(config: ExperimentConfig, outputs: OutputSet, jobs: int) -> dict:
    sweep = config.data["sweep"]
    points = [(config.data, c, a, b)
              for c in sweep["c_values"]
              for b in sweep["b_values"]
              for a in sweep["a_values"]]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_point, *zip(*points)))
    else:
        rows = [_sweep_point(*point) for point in points]
    outputs.write_csv("sweep.csv",
                      ["C", "a", "b", "client", "mean_utility", "stderr",
                       "n_replications"], rows)
    return {"grid_points": len(rows)}


# --------------------------------------------------------------- bounds

def _least_slack(name: str, rows: list[tuple[float, float, float]]) -> BoundReport:
    worst = min(rows, key=lambda r: r[0] + r[2] - r[1])
    return BoundReport(name=name, theoretical=worst[0], empirical=worst[1],
                       satisfied=all(e <= t + tol for t, e, tol in rows),
                       slack=worst[0] - worst[1], tolerance=worst[2])


def _drive_bounds(config: ExperimentConfig, outputs: OutputSet, jobs: int) -> dict:
    clients = config.build_clients()
    plans = config.build_plans()
    schedule = config.build_payment_schedule()
    bounds = config.data["bounds"]
    probe_steps = bounds["probe_steps"]
    epsilon = bounds["epsilon"]

    reference = run(config.build_protocol(), clients, plans, schedule)
    probes = [reference.thetas[s - 1] for s in probe_steps]
    probes += [np.asarray(c.objective.center, dtype=float) for c in clients]
    het = heterogeneity(clients, probes)
    M, M_V = noise_moment_bounds(clients)

    n = len(clients)
    check_seeds = replication_seeds(config.seed, n + 1)
    reports: list[tuple[str, int | None, BoundReport]] = []
    reports.append(("aggregate_variance", None, aggregate_variance_check(
        clients, plans, reference, probe_steps, bounds["replications"], epsilon,
        M, M_V, het.zeta, check_seeds[0])))
    for i in range(n):
        reports.append(("gradient_norm", i, gradient_norm_check(
            clients[i], probes, bounds["replications"], check_seeds[i + 1])))

    lr = config.data["protocol"]["learning_rate"]
    want_convergence = lr["kind"] == "inverse_time"
    want_payment = schedule is not None and schedule.kind == "calibrated"
    if want_convergence or want_payment:
        traces = [run(config.build_protocol(seed=s), clients, plans, schedule)
                  for s in replication_seeds(config.seed, bounds["seeds"])]

    if want_convergence:
        try:
            theta_star = global_minimizer(clients)
        except ConfigurationError:
            theta_star = None  # probed objectives have no exact reference value
        if theta_star is not None:
            f_star = global_value(clients, theta_star)
            initial_gap = global_value(
                clients, np.asarray(config.data["protocol"]["theta_init"],
                                    dtype=float)) - f_star
            gaps = np.array([global_value(clients, tr.thetas[-1]) - f_star
                             for tr in traces])
            tolerance = 2.0 * float(gaps.std(ddof=1)) / math.sqrt(len(gaps))
            theoretical = convergence_bound(
                m=lr["m"], H=lr["H"], n_clients=n, M=M, M_V=lr["M_V"],
                zeta=het.zeta, epsilon=epsilon, initial_gap=initial_gap,
                horizon=config.data["protocol"]["horizon"])
            empirical = float(gaps.mean())
            reports.append(("convergence", None, BoundReport(
                name="convergence", theoretical=theoretical, empirical=empirical,
                satisfied=empirical <= theoretical + tolerance,
                slack=theoretical - empirical, tolerance=tolerance)))

    if want_payment:
        sigma = math.sqrt(M)
        for i in range(n):
            rows = []
            for tr in traces:
                theoretical = payment_bound(schedule, epsilon, sigma, het.zeta,
                                            het.rho, gradient_norm_curve(tr, clients[i]))
                rows.append((theoretical, abs(total_payment(tr, i)), 0.0))
            reports.append(("payment_total", i, _least_slack("payment_total", rows)))

    header = ["bound", "client", "theoretical", "empirical", "satisfied",
              "slack", "tolerance"]
    rows = [[name, client, rep.theoretical, rep.empirical, rep.satisfied,
             rep.slack, rep.tolerance] for name, client, rep in reports]
    outputs.write_csv("bounds.csv", header, rows)
    extra = {"all_satisfied": all(rep.satisfied for _, _, rep in reports)}
    if want_payment:
        extra["bic_gap_bound"] = bic_gap_bound(schedule)
    return extra


# -------------------------------------------------------------- meanest

def _drive_meanest(config: ExperimentConfig, outputs: OutputSet, jobs: int) -> dict:
    spec = config.build_mean_game()
    section = config.data["meanest"]
    client = section["client"]
    draws = section["draws"]
    seed = config.seed
    rows: list[list] = []

    if section["variant"] == "fixed":
        n = spec.n_clients
        ones = np.ones(n)
        est, se = mc_mse_fixed(spec, ones, client, draws, seed)
        rows.append(["truthful_mse", client, truthful_mse(spec, client), est, se])
        opt = optimal_scale(spec, client)
        scaled = ones.copy()
        scaled[client] = opt.c_star
        est, se = mc_mse_fixed(spec, scaled, client, draws, seed)
        rows.append(["deviation_mse", client, opt.mse, est, se])
        grid = section["c_grid"]
        cs = np.arange(grid["start"], grid["stop"] + 0.5 * grid["step"],
                       grid["step"])
        mses, errs = mc_scale_grid(spec, client, cs, draws, seed)
        k = int(np.argmin(mses))
        rows.append(["optimal_scale", client, opt.c_star, float(cs[k]),
                     float(errs[k])])
        rows.append(["profitable", client, opt.profitable, None, None])
    else:
        scales, errors = nash_equilibrium(spec)
        ones = np.ones(spec.n_clients)
        for j in range(spec.n_clients):
            rows.append(["nash_scale", j, float(scales[j]), None, None])
        for j in range(spec.n_clients):
            mc = mc_mse(spec, scales, j, draws, seed) if j == client else (None, None)
            rows.append(["nash_error", j, float(errors[j]), mc[0], mc[1]])
        for j in range(spec.n_clients):
            mc = mc_mse(spec, ones, j, draws, seed) if j == client else (None, None)
            rows.append(["truthful_error", j, weighted_mse(spec, ones, j),
                         mc[0], mc[1]])
        report = penalty_of_anarchy(spec)
        rows.append(["eq_error_limit", None, report.eq_error_limit, None, None])
        rows.append(["truthful_error_limit", None, report.truthful_error_limit,
                     None, None])
        rows.append(["anarchy_ratio", None, report.ratio, None, None])
        rows.append(["high_heterogeneity", None, report.high_heterogeneity,
                     None, None])
        rows.append(["penalized", None, report.penalized, None, None])

    outputs.write_csv("meanest.csv",
                      ["quantity", "client", "value", "mc_estimate", "mc_stderr"],
                      rows)
    return {"variant": section["variant"]}


_DRIVERS = {"run": _drive_run, "sweep": _drive_sweep, "bounds": _drive_bounds,
            "meanest": _drive_meanest}
