"""Budget-balanced payments on reported gradient norms.

At step t each client pays

    p_t^i = C_t * ( ||m_t^i||^2 - mean_{j != i} ||m_t^j||^2 ),

which sums to zero across clients by construction.  The constant C_t
either is held fixed ("constant" schedule) or follows the calibrated
rule

    c_l   = 2 (1 - 2 gamma_l m + gamma_l^2 H^2),
    Cal_t = prod_{l=t+1}^T c_l          (empty product = 1),
    C_t   = sqrt(2 Cal_t) gamma_t L / (N epsilon),

whose suffix products grow geometrically backwards in time; they are
also accumulated in log space so C_t stays accurate when the raw
product overflows.  G = sum_t gamma_t sqrt(Cal_t) is kept for the
incentive-gap and payment certificates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AnalysisError, ConfigurationError, ScheduleError

__all__ = ["PaymentSchedule", "build_schedule", "step_payments", "total_payment"]


@dataclass
class PaymentSchedule:
    """Per-step payment constants plus, for calibrated schedules, the
    ingredients they were built from (needed by the bound evaluators)."""

    kind: str
    constants: np.ndarray
    gammas: np.ndarray
    factors: np.ndarray | None = None
    suffix_products: np.ndarray | None = None
    log_suffix: np.ndarray | None = None
    discounted_gammas: np.ndarray | None = None  # gamma_t sqrt(Cal_t)
    G: float | None = None
    m: float | None = None
    H: float | None = None
    L: float | None = None
    n_clients: int | None = None
    epsilon: float | None = None

    @property
    def horizon(self) -> int:
        return len(self.constants)

    def constant_at(self, step: int) -> float:
        """C_t for the 1-based step t."""
        if not 1 <= step <= self.horizon:
            raise ConfigurationError(
                f"step {step} outside schedule horizon {self.horizon}")
        return float(self.constants[step - 1])


def _gamma_values(rate, horizon: int) -> np.ndarray:
    if hasattr(rate, "gamma"):
        return np.array([rate.gamma(t) for t in range(1, horizon + 1)], dtype=float)
    gammas = np.asarray(rate, dtype=float)
    if gammas.shape != (horizon,):
        raise ConfigurationError(
            f"need {horizon} step sizes, got shape {gammas.shape}")
    return gammas


def build_schedule(kind: str, rate, horizon: int, *, c: float | None = None,
                   m: float | None = None, H: float | None = None,
                   L: float | None = None, n_clients: int | None = None,
                   epsilon: float | None = None) -> PaymentSchedule:
    """Build a payment schedule of the given kind over ``horizon`` steps.

    ``rate`` is a learning-rate schedule (anything with ``.gamma(t)``) or
    an explicit array of step sizes.  Constant schedules need ``c``;
    calibrated schedules need the instance constants m, H, L, the client
    count and the truthfulness target epsilon.
    """
    if horizon < 1:
        raise ConfigurationError("horizon must be at least 1")
    gammas = _gamma_values(rate, horizon)
    if kind == "constant":
        if c is None:
            raise ConfigurationError("constant schedules need the value c")
        if c < 0:
            raise ConfigurationError("payment constant must be non-negative")
        return PaymentSchedule(kind="constant", constants=np.full(horizon, float(c)),
                               gammas=gammas)
    if kind != "calibrated":
        raise ConfigurationError(f"unknown payment schedule kind {kind!r}")
    missing = [name for name, v in
               (("m", m), ("H", H), ("L", L), ("n_clients", n_clients),
                ("epsilon", epsilon)) if v is None]
    if missing:
        raise ConfigurationError(f"calibrated schedules need {', '.join(missing)}")
    if epsilon <= 0:
        raise ScheduleError(f"epsilon must be positive, got {epsilon}")
    if m <= 0 or H <= 0 or L <= 0 or n_clients < 1:
        raise ScheduleError(
            f"calibrated schedule needs m, H, L > 0 and n_clients >= 1, "
            f"got m={m}, H={H}, L={L}, n_clients={n_clients}")
    factors = 2.0 * (1.0 - 2.0 * gammas * m + gammas ** 2 * H ** 2)
    bad = np.nonzero(factors <= 0.0)[0]
    if bad.size:
        t = int(bad[0]) + 1
        raise ScheduleError(
            f"contraction factor c_{t} = {factors[t - 1]:.6g} is not positive "
            f"(gamma_{t} = {gammas[t - 1]:.6g}); choose a smaller learning rate")
    # raw suffix products keep the recursion Cal_{t-1} = c_t Cal_t exact in
    # floating point; the log form stays finite when these overflow
    suffix = np.empty(horizon)
    suffix[-1] = 1.0
    for t in range(horizon - 1, 0, -1):
        suffix[t - 1] = factors[t] * suffix[t]
    log_suffix = np.zeros(horizon)
    if horizon > 1:
        log_suffix[:-1] = np.cumsum(np.log(factors[:0:-1]))[::-1]
    sqrt_suffix = np.exp(0.5 * log_suffix)
    constants = math.sqrt(2.0) * sqrt_suffix * gammas * L / (n_clients * epsilon)
    discounted = gammas * sqrt_suffix
    return PaymentSchedule(
        kind="calibrated", constants=constants, gammas=gammas, factors=factors,
        suffix_products=suffix, log_suffix=log_suffix, discounted_gammas=discounted,
        G=float(math.fsum(discounted)), m=float(m), H=float(H), L=float(L),
        n_clients=int(n_clients), epsilon=float(epsilon))


def step_payments(messages: Sequence, constant: float) -> np.ndarray:
    """Payments for one step given the clients' messages and C_t.

    Accepts Message objects or raw payload arrays; payments depend on the
    payloads only through their squared norms.
    """
    payloads = [getattr(msg, "payload", msg) for msg in messages]
    n = len(payloads)
    if n < 2:
        raise ConfigurationError("payments need at least two clients")
    norms = np.array([float(np.dot(p, p)) for p in payloads])
    total = norms.sum()
    return constant * (norms - (total - norms) / (n - 1))


def total_payment(trace, client: int) -> float:
    """Sum of a client's per-step payments over a recorded run."""
    if trace.payments is None:
        raise AnalysisError("run was recorded without a payment rule")
    return float(math.fsum(trace.payments[:, client]))
