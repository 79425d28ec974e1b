"""Simulator and analysis toolkit for strategic gradient reporting in
federated learning: a budget-balanced payment rule on reported gradient
norms, best-response search certifying approximate truthfulness, closed
form convergence/payment/variance certificates, and a one-shot
mean-estimation game solved analytically and by Monte Carlo.
"""

from .errors import (AnalysisError, ConfigurationError, DivergenceError,
                     FedGameError, ScheduleError, StatisticsError)
from .objectives import (ClientObjective, HeterogeneityProfile,
                         ObjectiveConstants, QuadraticObjective,
                         ScalarPolyObjective, ToyNonConvexObjective,
                         conservative_constants, default_domain_radius,
                         global_gradient, global_minimizer, global_value,
                         heterogeneity, noise_moment_bounds,
                         resolve_domain_radii)
from .strategies import (HistoryView, Message, StrategyPlan,
                         is_approximately_truthful, make_message)
from .payments import PaymentSchedule, build_schedule, step_payments, total_payment
from .protocol import (LearningRateSchedule, ProtocolConfig, RewardSpec,
                       RunTrace, run, utility)
from .analysis import (BestResponseResult, BoundReport, GridPoint,
                       aggregate_variance_check, best_response, bic_gap_bound,
                       convergence_bound, gradient_norm_check,
                       gradient_norm_curve, payment_bound, replication_seeds)
from .meanest import (AnarchyReport, MeanGameSpec, ScaleDeviation,
                      deviation_mse, foc_residuals, mc_mse, mc_mse_fixed,
                      mc_scale_grid, nash_equilibrium, optimal_scale,
                      penalty_of_anarchy, posterior, truthful_mse,
                      weighted_mse)

__version__ = "0.1.0"
