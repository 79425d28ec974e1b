"""End-to-end acceptance checks, one test per shipped guarantee.

Each test pins the tolerances the package promises: deterministic
fixed points of the motivating instance, exact budget balance, the
mean-estimation closed forms against Monte Carlo, equilibrium
certificates, the convergence/payment/incentive bounds on a desk-scale
instance, the qualitative sweep shape, and the empirical moment checks.
"""

import math

import numpy as np
import pytest

from conftest import EXAMPLE_SPECS
from fedgame import ClientObjective, QuadraticObjective
from fedgame.analysis import (aggregate_variance_check, best_response,
                              bic_gap_bound, convergence_bound,
                              gradient_norm_check, gradient_norm_curve,
                              payment_bound, replication_seeds)
from fedgame.meanest import (MeanGameSpec, foc_residuals, mc_mse_fixed,
                             mc_scale_grid, nash_equilibrium, optimal_scale,
                             truthful_mse, weighted_mse)
from fedgame.objectives import (ToyNonConvexObjective, conservative_constants,
                                global_minimizer, global_value, heterogeneity,
                                resolve_domain_radii)
from fedgame.payments import build_schedule, total_payment
from fedgame.protocol import (LearningRateSchedule, ProtocolConfig, RewardSpec,
                              run)
from fedgame.strategies import HistoryView, StrategyPlan


def example_instance(sigma=0.0):
    """The four heterogeneous scalar quadratics."""
    return resolve_domain_radii(
        [ClientObjective(objective=QuadraticObjective([c], [[a]], off),
                         noise_sigma=sigma, domain_radius=None)
         for c, a, off in EXAMPLE_SPECS])


def desk_instance(sigma=0.05):
    """Four two-dimensional quadratics with eigenvalues in [1, 3]."""
    specs = [([0.0, 0.0], [[1.0, 0.0], [0.0, 2.0]]),
             ([1.0, 0.5], [[2.0, 0.0], [0.0, 3.0]]),
             ([-0.5, 1.0], [[1.5, 0.0], [0.0, 2.5]]),
             ([0.5, -0.5], [[2.0, 0.0], [0.0, 2.0]])]
    return resolve_domain_radii(
        [ClientObjective(objective=QuadraticObjective(c, a),
                         noise_sigma=sigma, domain_radius=None)
         for c, a in specs])


def desk_setup():
    """Instance constants and schedule shared by the bound criteria."""
    clients = desk_instance()
    consts = conservative_constants(clients)
    rate = LearningRateSchedule.inverse_time(m=consts.m, H=consts.H,
                                             n_clients=4)
    theta_star = global_minimizer(clients)
    f_star = global_value(clients, theta_star)
    return clients, consts, rate, f_star


def desk_heterogeneity(clients, reference_trace):
    probes = [reference_trace.thetas[k]
              for k in range(0, reference_trace.horizon + 1, 10)]
    probes += [np.asarray(c.objective.center) for c in clients]
    return heterogeneity(clients, probes)


def test_criterion_1_motivating_example_fixed_points():
    clients = example_instance(sigma=0.0)
    config = ProtocolConfig(n_clients=4, horizon=500,
                            rate=LearningRateSchedule.constant(0.1),
                            theta_init=(0.0,), seed=1)
    truthful = run(config, clients, [StrategyPlan.truthful()] * 4)
    assert truthful.thetas[-1][0] == pytest.approx(1.25, abs=1e-6)

    amplified = run(config, clients,
                    [StrategyPlan.pure(3.0)] + [StrategyPlan.truthful()] * 3)
    assert amplified.thetas[-1][0] == pytest.approx(0.9375, abs=1e-6)

    # the amplifying client gains, the farthest client loses
    f1 = clients[0].evaluate
    f3 = clients[2].evaluate
    assert f1(amplified.thetas[-1]) < f1(truthful.thetas[-1])
    assert f3(amplified.thetas[-1]) > f3(truthful.thetas[-1])


def test_criterion_2_budget_balance_random_configs():
    rng = np.random.default_rng(20260814)

    def random_plan():
        kind = rng.integers(0, 5)
        if kind == 0:
            return StrategyPlan.truthful()
        if kind == 1:
            a = float(rng.uniform(1.0, 3.0)) * (1 if rng.random() < 0.8 else -1)
            return StrategyPlan.pure(a, float(rng.uniform(0.0, 0.5)))
        if kind == 2:
            lo = float(rng.uniform(1.0, 2.0))
            return StrategyPlan.mixed((lo, lo + float(rng.uniform(0.0, 1.0))),
                                      (0.0, float(rng.uniform(0.0, 0.5))))
        if kind == 3:
            return StrategyPlan.directional(float(rng.uniform(1.0, 2.0)),
                                            float(rng.uniform(-1.0, 1.0)),
                                            float(rng.uniform(0.0, 0.3)))
        gain = float(rng.uniform(0.0, 0.2))

        def drift(view: HistoryView, gain=gain):
            if len(view.thetas) < 2:
                return 1.0, 0.0
            step = float(np.linalg.norm(view.thetas[-1] - view.thetas[-2]))
            return min(3.0, 1.0 + gain * step), 0.0

        return StrategyPlan.history(drift)

    for k in range(100):
        n = int(rng.integers(2, 9))
        horizon = int(rng.integers(1, 101))
        dim = int(rng.integers(1, 4))
        clients = [
            ClientObjective(
                objective=QuadraticObjective(
                    rng.uniform(-2.0, 2.0, dim),
                    np.diag(rng.uniform(0.5, 3.0, dim)),
                    float(rng.uniform(0.0, 1.0))),
                noise_sigma=float(rng.uniform(0.0, 0.3)), domain_radius=10.0)
            for _ in range(n)]
        schedule = build_schedule("constant", [0.02] * horizon, horizon,
                                  c=float(rng.uniform(0.1, 2.0)))
        config = ProtocolConfig(n_clients=n, horizon=horizon,
                                rate=LearningRateSchedule.constant(0.02),
                                theta_init=(0.0,) * dim, seed=1000 + k)
        trace = run(config, clients, [random_plan() for _ in range(n)],
                    payment_schedule=schedule)
        imbalance = np.abs(trace.payments.sum(axis=1))
        scale = 1.0 + np.abs(trace.payments).sum(axis=1)
        assert np.all(imbalance <= 1e-9 * scale), f"config {k}"


def test_criterion_3_mean_estimation_closed_forms_vs_monte_carlo():
    spec = MeanGameSpec.fixed(mus=(1.0, -1.0), sigma=1.0)
    draws = 1_000_000

    est, err = mc_mse_fixed(spec, [1.0, 1.0], 0, draws=draws, seed=314)
    assert abs(est - truthful_mse(spec, 0)) <= 3 * err
    assert truthful_mse(spec, 0) == pytest.approx(1.5, abs=1e-15)

    best = optimal_scale(spec, 0)
    assert best.c_star == pytest.approx(1.5, abs=1e-15)
    assert best.mse == pytest.approx(1.375, abs=1e-15)
    est, err = mc_mse_fixed(spec, [best.c_star, 1.0], 0, draws=draws, seed=314)
    assert abs(est - best.mse) <= 3 * err

    grid = np.arange(1.0, 3.0 + 0.005, 0.01)
    mses, _ = mc_scale_grid(spec, 0, grid, draws=draws, seed=314)
    assert abs(grid[int(np.argmin(mses))] - best.c_star) <= 1e-2


def test_criterion_4_nash_equilibrium_certificates():
    rng = np.random.default_rng(77)
    for _ in range(10):
        n = int(rng.integers(2, 7))
        sigmas = rng.uniform(0.5, 2.0, n)
        n_samples = int(rng.integers(1, 9))
        tau = float(rng.uniform(0.5, 4.0))
        tau0 = float(rng.uniform(0.5, 4.0))
        spec = MeanGameSpec.bayesian(sigmas, n_samples, tau, tau0)
        scales, errors = nash_equilibrium(spec)

        # first-order conditions to relative precision
        target = n / tau + n / tau0
        assert np.max(np.abs(foc_residuals(spec, scales))) <= 1e-9 * target

        # no unilateral grid deviation improves the closed-form error
        for i in range(n):
            own_grid = scales[i] + np.linspace(-0.5, 0.5, 201)
            best_seen = math.inf
            weights = scales.copy()
            for c in own_grid:
                weights[i] = c
                best_seen = min(best_seen, weighted_mse(spec, weights, i))
            floor = errors[i] - 1e-12 * max(1.0, abs(errors[i]))
            assert best_seen >= floor

        # the precise-population limit pools reports with Bayes weights
        limit = MeanGameSpec.bayesian(sigmas, n_samples, 1e9, tau0)
        limit_scales, _ = nash_equilibrium(limit)
        taus = limit.taus
        bayes = n * taus / (tau0 + float(taus.sum()))
        assert np.allclose(limit_scales, bayes, rtol=1e-6)


def test_criterion_5_convergence_bound_on_desk_instance():
    clients, consts, rate, f_star = desk_setup()
    horizon, epsilon = 200, 0.1
    theta_init = (0.0, 0.0)
    # epsilon-truthful: two clients add noise at the budget b = epsilon
    plans = [StrategyPlan.pure(1.0, epsilon), StrategyPlan.pure(1.0, epsilon),
             StrategyPlan.truthful(), StrategyPlan.truthful()]

    reference = run(ProtocolConfig(n_clients=4, horizon=horizon, rate=rate,
                                   theta_init=theta_init, seed=0),
                    clients, plans)
    het = desk_heterogeneity(clients, reference)
    M = max(c.noise_sigma ** 2 for c in clients)
    initial_gap = global_value(clients, np.zeros(2)) - f_star
    bound = convergence_bound(m=consts.m, H=consts.H, n_clients=4, M=M,
                              M_V=0.0, zeta=het.zeta, epsilon=epsilon,
                              initial_gap=initial_gap, horizon=horizon)

    gaps = []
    for seed in replication_seeds(424242, 50):
        trace = run(ProtocolConfig(n_clients=4, horizon=horizon, rate=rate,
                                   theta_init=theta_init, seed=seed),
                    clients, plans)
        gaps.append(global_value(clients, trace.thetas[-1]) - f_star)
    gaps = np.array(gaps)
    stderr = gaps.std(ddof=1) / math.sqrt(len(gaps))
    assert gaps.mean() + 2 * stderr <= bound


def test_criterion_6_payment_bound_on_desk_instance():
    clients, consts, rate, f_star = desk_setup()
    horizon, epsilon = 200, 0.2
    schedule = build_schedule("calibrated", rate, horizon, m=consts.m,
                              H=consts.H, L=consts.L, n_clients=4,
                              epsilon=epsilon)
    plans = [StrategyPlan.truthful()] * 4
    reference = run(ProtocolConfig(n_clients=4, horizon=horizon, rate=rate,
                                   theta_init=(0.0, 0.0), seed=0),
                    clients, plans)
    het = desk_heterogeneity(clients, reference)
    sigma = max(c.noise_sigma for c in clients)

    for seed in replication_seeds(777, 20):
        trace = run(ProtocolConfig(n_clients=4, horizon=horizon, rate=rate,
                                   theta_init=(0.0, 0.0), seed=seed),
                    clients, plans, payment_schedule=schedule)
        for i, client in enumerate(clients):
            ceiling = payment_bound(schedule, epsilon=epsilon, sigma=sigma,
                                    zeta=het.zeta, rho=het.rho,
                                    grad_norm_curve=gradient_norm_curve(
                                        trace, client))
            assert abs(total_payment(trace, i)) <= ceiling


def test_criterion_7_incentive_gap_certification():
    clients = example_instance(sigma=0.05)
    consts = conservative_constants(clients)
    horizon = 20
    rate = LearningRateSchedule.constant(0.1)
    schedule = build_schedule("calibrated", rate, horizon, m=consts.m,
                              H=consts.H, L=consts.L, n_clients=4, epsilon=0.2)
    config = ProtocolConfig(n_clients=4, horizon=horizon, rate=rate,
                            theta_init=(0.0,), seed=20260814)

    priced = best_response(config, clients, schedule, RewardSpec(), deviant=0,
                           scale_grid=[1.0 + 0.25 * k for k in range(9)],
                           noise_grid=[0.0, 0.1, 0.2, 0.4], replications=50)
    allowance = bic_gap_bound(schedule)
    assert priced.gain <= allowance + 3 * priced.gain_stderr
    assert abs(priced.best_scale - 1.0) <= 0.25

    # with payments off the same grid finds a significantly profitable lie
    free = best_response(config, clients, None, RewardSpec(), deviant=0,
                         scale_grid=[1.0, 2.0, 3.0], noise_grid=[0.0],
                         replications=50)
    assert free.gain > 0.0
    assert free.gain >= 3 * free.gain_stderr


def sweep_best_scales(clients, gamma, horizon, c_levels, seed,
                      aggregation="mean", local_steps=1):
    """Deviant utility curves over the scale grid at each payment level."""
    config = ProtocolConfig(n_clients=len(clients), horizon=horizon,
                            rate=LearningRateSchedule.constant(gamma),
                            theta_init=(0.0,) * clients[0].dimension,
                            seed=seed, aggregation=aggregation,
                            local_steps=local_steps)
    results = {}
    for c in c_levels:
        schedule = build_schedule("constant", config.rate, horizon, c=c)
        res = best_response(config, clients, schedule, RewardSpec(),
                            deviant=0, scale_grid=[1.0, 1.5, 2.0, 2.5, 3.0],
                            noise_grid=[0.0], replications=10)
        curve = [p.mean_utility for p in sorted(res.grid, key=lambda p: p.scale)]
        results[c] = (curve, res.best_scale)
    return results


def test_criterion_8_sweep_shape_across_instances_and_protocols():
    quad = example_instance(sigma=0.05)
    toy = resolve_domain_radii([
        ClientObjective(objective=ToyNonConvexObjective.synthetic(
            2, 32, 32, shift, sample_seed), noise_sigma=0.05,
            domain_radius=None)
        for shift, sample_seed in ((0.0, 1), (0.6, 2), (-0.6, 3))])

    for clients, gamma in ((quad, 0.1), (toy, 0.05)):
        curves = sweep_best_scales(clients, gamma, 30, [0.0, 0.5, 2.0], 99)
        unpriced, _ = curves[0.0]
        # free scaling pays off somewhere above a = 1
        assert any(unpriced[k + 1] >= unpriced[k]
                   for k in range(1, len(unpriced) - 1))
        assert max(unpriced[1:]) >= unpriced[0]
        # at the largest payment level honesty is the best scale
        _, best_at_top = curves[2.0]
        assert best_at_top == 1.0

    median = sweep_best_scales(quad, 0.1, 30, [2.0], 99,
                               aggregation="coordinate_median")
    assert median[2.0][1] == 1.0
    fedavg = sweep_best_scales(quad, 0.1, 30, [2.0], 99, local_steps=4)
    assert fedavg[2.0][1] == 1.0


def test_criterion_9_variance_and_gradient_norm_checks():
    rng = np.random.default_rng(4242)
    for k in range(10):
        n = int(rng.integers(2, 7))
        dim = int(rng.integers(1, 4))
        clients = [
            ClientObjective(
                objective=QuadraticObjective(
                    rng.uniform(-1.5, 1.5, dim),
                    np.diag(rng.uniform(0.5, 3.0, dim))),
                noise_sigma=float(rng.uniform(0.05, 0.5)), domain_radius=8.0)
            for _ in range(n)]
        plans = [StrategyPlan.truthful()] * n
        trace = run(ProtocolConfig(n_clients=n, horizon=10,
                                   rate=LearningRateSchedule.constant(0.05),
                                   theta_init=(0.0,) * dim, seed=500 + k),
                    clients, plans)

        M = max(c.noise_sigma ** 2 for c in clients)
        variance = aggregate_variance_check(clients, plans, trace,
                                            probe_steps=[1, 10],
                                            replications=60, epsilon=0.0,
                                            M=M, M_V=0.0, zeta=0.0,
                                            seed=900 + k)
        assert variance.satisfied, f"instance {k}"

        client = clients[int(rng.integers(0, n))]
        probes = [rng.uniform(-2.0, 2.0, dim) for _ in range(3)]
        norms = gradient_norm_check(client, probes, replications=1000,
                                    seed=1900 + k)
        assert norms.satisfied, f"instance {k}"
