"""The federated learning loop with strategic clients.

Each step t: every client draws a stochastic gradient at the current
model (or runs several local steps and reports the pseudo-gradient
(theta_t - theta_local) / gamma_t), passes it through its strategy, and
the server applies the mean (or coordinate-wise median) of the reported
messages:

    theta_{t+1} = theta_t - gamma_t * aggregate(messages).

Randomness is split per (purpose, client, step) so reruns are exactly
reproducible and paired-seed comparisons share noise draws; see rng.py.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import payments as payments_mod
from .errors import AnalysisError, ConfigurationError, DivergenceError
from .objectives import ClientObjective
from .rng import GRADIENT, STRATEGY, substream
from .strategies import HistoryView, Message, StrategyPlan, make_message

__all__ = [
    "LearningRateSchedule",
    "ProtocolConfig",
    "RunTrace",
    "RewardSpec",
    "run",
    "utility",
]


@dataclass(frozen=True)
class LearningRateSchedule:
    """Step sizes gamma_t, t = 1..T.

    "constant" uses gamma0 at every step.  "inverse_time" uses
    gamma_t = 4 / (m (eta + t)) with eta = 4 H (2 M_V + N) / (m N),
    the schedule under which the convergence certificate applies.
    """

    kind: str
    gamma0: float = 0.0
    m: float = 0.0
    H: float = 0.0
    M_V: float = 0.0
    n_clients: int = 0

    @staticmethod
    def constant(gamma: float) -> "LearningRateSchedule":
        if gamma <= 0:
            raise ConfigurationError("constant learning rate must be positive")
        return LearningRateSchedule(kind="constant", gamma0=float(gamma))

    @staticmethod
    def inverse_time(m: float, H: float, n_clients: int,
                     M_V: float = 0.0) -> "LearningRateSchedule":
        if m <= 0 or H <= 0:
            raise ConfigurationError("inverse_time schedule needs m > 0 and H > 0")
        if n_clients < 1:
            raise ConfigurationError("inverse_time schedule needs n_clients >= 1")
        if M_V < 0:
            raise ConfigurationError("M_V must be non-negative")
        return LearningRateSchedule(kind="inverse_time", m=float(m), H=float(H),
                                    M_V=float(M_V), n_clients=int(n_clients))

    @property
    def eta(self) -> float:
        if self.kind != "inverse_time":
            raise ConfigurationError("eta is defined for inverse_time schedules only")
        n = self.n_clients
        return 4.0 * self.H * (2.0 * self.M_V + n) / (self.m * n)

    def gamma(self, step: int) -> float:
        """Step size at 1-based step."""
        if step < 1:
            raise ConfigurationError(f"steps are 1-based, got {step}")
        if self.kind == "constant":
            return self.gamma0
        return 4.0 / (self.m * (self.eta + step))


@dataclass(frozen=True)
class ProtocolConfig:
    n_clients: int
    horizon: int
    rate: LearningRateSchedule
    theta_init: tuple[float, ...]
    aggregation: str = "mean"
    local_steps: int = 1
    seed: int = 0
    strategy_seed: int | None = None  # defaults to seed
    divergence_factor: float = 1e6

    def __post_init__(self):
        if self.n_clients < 1:
            raise ConfigurationError("need at least one client")
        if self.horizon < 1:
            raise ConfigurationError("horizon must be at least 1")
        if self.aggregation not in ("mean", "coordinate_median"):
            raise ConfigurationError(
                f"unknown aggregation {self.aggregation!r}")
        if self.local_steps < 1:
            raise ConfigurationError("local_steps must be at least 1")
        init = np.asarray(self.theta_init, dtype=float)
        if init.ndim != 1 or init.size == 0 or not np.all(np.isfinite(init)):
            raise ConfigurationError("theta_init must be a finite vector")
        object.__setattr__(self, "theta_init", tuple(float(x) for x in init))

    @property
    def dimension(self) -> int:
        return len(self.theta_init)


@dataclass
class RunTrace:
    """Everything a run recorded.

    thetas has T+1 rows (theta_1 .. theta_{T+1}); gradients holds the raw
    per-client gradient samples the strategies acted on (pseudo-gradients
    when local_steps > 1); messages the strategies' outputs; payments and
    payment_constants are None when no payment rule was active.
    losses[k, i] = F_i(thetas[k]) for k = 0..T; losses_final uses the
    held-out evaluation where one exists.
    """

    thetas: np.ndarray
    gradients: np.ndarray
    messages: list
    gammas: np.ndarray
    losses: np.ndarray
    losses_final: np.ndarray
    global_loss_curve: np.ndarray
    payments: np.ndarray | None = None
    payment_constants: np.ndarray | None = None

    @property
    def horizon(self) -> int:
        return len(self.gammas)

    @property
    def n_clients(self) -> int:
        return self.losses_final.shape[0]


def _aggregate(payloads: np.ndarray, how: str) -> np.ndarray:
    if how == "mean":
        return payloads.mean(axis=0)
    return np.median(payloads, axis=0)


def run(config: ProtocolConfig, clients: Sequence[ClientObjective],
        plans: Sequence[StrategyPlan],
        payment_schedule: payments_mod.PaymentSchedule | None = None) -> RunTrace:
    """Run the protocol for config.horizon steps and record everything."""
    n, horizon = config.n_clients, config.horizon
    if len(clients) != n:
        raise ConfigurationError(f"expected {n} clients, got {len(clients)}")
    if len(plans) != n:
        raise ConfigurationError(f"expected {n} strategy plans, got {len(plans)}")
    dims = {c.dimension for c in clients}
    if dims != {config.dimension}:
        raise ConfigurationError(
            f"client dimensions {sorted(dims)} do not match model dimension "
            f"{config.dimension}")
    if payment_schedule is not None:
        if n < 2:
            raise ConfigurationError("payments need at least two clients")
        if payment_schedule.horizon != horizon:
            raise ConfigurationError(
                f"payment schedule covers {payment_schedule.horizon} steps, "
                f"run needs {horizon}")
    strategy_seed = config.seed if config.strategy_seed is None else config.strategy_seed

    theta = np.array(config.theta_init, dtype=float)
    init_norm = float(np.linalg.norm(theta))
    thetas = [theta]
    gradients = np.empty((horizon, n, config.dimension))
    messages: list[list[Message]] = []
    gammas = np.empty(horizon)
    pay_rows = np.empty((horizon, n)) if payment_schedule is not None else None
    # per-client views for history-dependent plans
    own_gradients: list[list[np.ndarray]] = [[] for _ in range(n)]
    own_messages: list[list[Message]] = [[] for _ in range(n)]

    for t in range(1, horizon + 1):
        gamma = config.rate.gamma(t)
        gammas[t - 1] = gamma
        step_messages: list[Message] = []
        for i in range(n):
            grad_rng = substream(config.seed, GRADIENT, i, t)
            if config.local_steps == 1:
                g = clients[i].sample_gradient(theta, grad_rng)
            else:
                local = theta.copy()
                for _ in range(config.local_steps):
                    local = local - gamma * clients[i].sample_gradient(local, grad_rng)
                g = (theta - local) / gamma
            gradients[t - 1, i] = g
            history = HistoryView(thetas=list(thetas),
                                  gradients=list(own_gradients[i]),
                                  messages=list(own_messages[i]))
            msg = make_message(plans[i], g, t, history,
                               substream(strategy_seed, STRATEGY, i, t))
            step_messages.append(msg)
            own_gradients[i].append(g)
            own_messages[i].append(msg)
        messages.append(step_messages)
        if payment_schedule is not None:
            pay_rows[t - 1] = payments_mod.step_payments(
                step_messages, payment_schedule.constant_at(t))
        payloads = np.stack([m.payload for m in step_messages])
        theta = theta - gamma * _aggregate(payloads, config.aggregation)
        if not np.all(np.isfinite(theta)) or \
                float(np.linalg.norm(theta)) > config.divergence_factor * (1.0 + init_norm):
            raise DivergenceError(t)
        thetas.append(theta)

    theta_grid = np.stack(thetas)
    losses = np.array([[c.evaluate(th) for c in clients] for th in theta_grid])
    losses_final = np.array([c.test_evaluate(theta_grid[-1]) for c in clients])
    return RunTrace(
        thetas=theta_grid,
        gradients=gradients,
        messages=messages,
        gammas=gammas,
        losses=losses,
        losses_final=losses_final,
        global_loss_curve=losses.mean(axis=1),
        payments=pay_rows,
        payment_constants=(None if payment_schedule is None
                           else payment_schedule.constants.copy()),
    )


@dataclass(frozen=True)
class RewardSpec:
    """How a client scores the final model.

    "neg_loss":      R_i = -F_i
    "logistic":      R_i = 1 / (1 + exp(-1 / F_i)), extended to 1 at F_i = 0
    "group_average": R_i = -mean_{j in group} F_j
    "competitive":   R_i = -alpha F_i + beta / (N - 1) * sum_{j != i} F_j
    """

    kind: str = "neg_loss"
    group: tuple[int, ...] = field(default=())
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.kind not in ("neg_loss", "logistic", "group_average", "competitive"):
            raise ConfigurationError(f"unknown reward kind {self.kind!r}")
        if self.kind == "group_average" and len(self.group) == 0:
            raise ConfigurationError("group_average rewards need a non-empty group")


def _logistic_reward(loss: float) -> float:
    if loss == 0.0:
        return 1.0
    try:
        return 1.0 / (1.0 + math.exp(-1.0 / loss))
    except OverflowError:
        return 0.0


def reward_value(losses_final: np.ndarray, client: int, spec: RewardSpec) -> float:
    """R_i(theta_final) from the recorded final losses."""
    n = losses_final.shape[0]
    if not 0 <= client < n:
        raise ConfigurationError(f"client index {client} out of range for {n} clients")
    if spec.kind == "neg_loss":
        return -float(losses_final[client])
    if spec.kind == "logistic":
        return _logistic_reward(float(losses_final[client]))
    if spec.kind == "group_average":
        for j in spec.group:
            if not 0 <= j < n:
                raise ConfigurationError(f"group member {j} out of range")
        return -float(np.mean([losses_final[j] for j in spec.group]))
    if n < 2:
        raise ConfigurationError("competitive rewards need at least two clients")
    others = [float(losses_final[j]) for j in range(n) if j != client]
    return -spec.alpha * float(losses_final[client]) \
        + spec.beta * float(np.mean(others))


def utility(trace: RunTrace, client: int, spec: RewardSpec) -> float:
    """U_i = R_i(theta_final) - total payments (zero without a payment rule)."""
    value = reward_value(trace.losses_final, client, spec)
    if trace.payments is not None:
        value -= payments_mod.total_payment(trace, client)
    return value
