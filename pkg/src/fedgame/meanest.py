"""One-shot mean-estimation game, analytic and Monte Carlo.

Two variants share :class:`MeanGameSpec`:

* "fixed": client means mu_j are known constants and every report has
  the same sampling noise sigma.  Client i cares about the squared
  distance of the plain average of reports to its own mean, and may
  scale its report by c >= 1.
* "bayesian": means are latent, mu ~ N(0, 1/tau0), mu_j ~ N(mu, 1/tau),
  and client j averages n samples of variance sigma_j^2, so the report
  precision is tau_j = n / sigma_j^2 and its heterogeneity-adjusted
  weight is rho_j = tau tau_j / (tau + tau_j).  Clients scale their
  reports; the simultaneous first-order conditions give the Nash
  equilibrium in closed form.

Every closed form here has a Monte Carlo twin (mc_*) so each can audit
the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, StatisticsError
from .rng import SAMPLES, substream

__all__ = [
    "MeanGameSpec",
    "ScaleDeviation",
    "AnarchyReport",
    "truthful_mse",
    "deviation_mse",
    "optimal_scale",
    "mc_mse_fixed",
    "mc_scale_grid",
    "posterior",
    "weighted_mse",
    "nash_equilibrium",
    "foc_residuals",
    "mc_mse",
    "penalty_of_anarchy",
    "MIN_DRAWS",
]

MIN_DRAWS = 30


@dataclass(frozen=True)
class MeanGameSpec:
    """Parameters of the one-shot game; use the ``fixed``/``bayesian``
    constructors rather than filling fields by hand."""

    variant: str
    mus: tuple[float, ...] | None = None
    sigma: float | None = None
    sigmas: tuple[float, ...] | None = None
    n_samples: int | None = None
    tau: float | None = None
    tau0: float | None = None

    @staticmethod
    def fixed(mus: Sequence[float], sigma: float) -> "MeanGameSpec":
        mus = tuple(float(m) for m in mus)
        if len(mus) < 2:
            raise ConfigurationError("the game needs at least two clients")
        if sigma <= 0:
            raise ConfigurationError("sigma must be positive")
        return MeanGameSpec(variant="fixed", mus=mus, sigma=float(sigma))

    @staticmethod
    def bayesian(sigmas: Sequence[float], n_samples: int, tau: float,
                 tau0: float) -> "MeanGameSpec":
        sigmas = tuple(float(s) for s in sigmas)
        if len(sigmas) < 2:
            raise ConfigurationError("the game needs at least two clients")
        if any(s <= 0 for s in sigmas):
            raise ConfigurationError("client sigmas must be positive")
        if n_samples < 1:
            raise ConfigurationError("n_samples must be at least 1")
        if tau <= 0 or tau0 <= 0:
            raise ConfigurationError("tau and tau0 must be positive")
        return MeanGameSpec(variant="bayesian", sigmas=sigmas,
                            n_samples=int(n_samples), tau=float(tau),
                            tau0=float(tau0))

    @property
    def n_clients(self) -> int:
        return len(self.mus if self.variant == "fixed" else self.sigmas)

    # Bayesian precisions ----------------------------------------------
    @property
    def taus(self) -> np.ndarray:
        """Report precisions tau_j = n / sigma_j^2."""
        self._need("bayesian")
        return self.n_samples / np.asarray(self.sigmas, dtype=float) ** 2

    @property
    def rhos(self) -> np.ndarray:
        """Adjusted weights rho_j = tau tau_j / (tau + tau_j)."""
        taus = self.taus
        return self.tau * taus / (self.tau + taus)

    def _need(self, variant: str) -> None:
        if self.variant != variant:
            raise ConfigurationError(
                f"this operation needs the {variant!r} variant, spec is "
                f"{self.variant!r}")

    def _check_client(self, client: int) -> None:
        if not 0 <= client < self.n_clients:
            raise ConfigurationError(
                f"client {client} out of range for {self.n_clients} clients")


@dataclass(frozen=True)
class ScaleDeviation:
    """Best unilateral scaling in the fixed game.  When the unconstrained
    optimum falls below the action floor c = 1, ``profitable`` is False
    and the truthful values are returned."""

    c_star: float
    mse: float
    profitable: bool


# ----------------------------------------------------------------- fixed

def truthful_mse(spec: MeanGameSpec, client: int) -> float:
    """(mu_bar - mu_i)^2 + sigma^2 / N when everyone reports honestly."""
    spec._need("fixed")
    spec._check_client(client)
    n = spec.n_clients
    gap = float(np.mean(spec.mus)) - spec.mus[client]
    return gap * gap + spec.sigma ** 2 / n


def deviation_mse(spec: MeanGameSpec, client: int, c: float) -> float:
    """Client's MSE when it scales its own report by c and others are
    truthful:

        truthful + ((c - 1) / N^2) (c (mu_i^2 + sigma^2)
                    - 2 mu_i (mu_i - mu_bar) N - mu_i^2 + sigma^2).
    """
    spec._need("fixed")
    spec._check_client(client)
    n = spec.n_clients
    mu_bar = float(np.mean(spec.mus))
    mu_i = spec.mus[client]
    s2 = spec.sigma ** 2
    extra = (c - 1.0) / n ** 2 * (c * (mu_i ** 2 + s2)
                                  - 2.0 * mu_i * (mu_i - mu_bar) * n
                                  - mu_i ** 2 + s2)
    return truthful_mse(spec, client) + extra


def optimal_scale(spec: MeanGameSpec, client: int) -> ScaleDeviation:
    """Unconstrained optimum c* = (mu_i^2 + mu_i (mu_i - mu_bar) N) /
    (mu_i^2 + sigma^2); profitable (c* > 1) exactly when
    mu_i (mu_i - mu_bar) > sigma^2 / N."""
    spec._need("fixed")
    spec._check_client(client)
    n = spec.n_clients
    mu_bar = float(np.mean(spec.mus))
    mu_i = spec.mus[client]
    s2 = spec.sigma ** 2
    c_star = (mu_i ** 2 + mu_i * (mu_i - mu_bar) * n) / (mu_i ** 2 + s2)
    if c_star <= 1.0:
        return ScaleDeviation(c_star=1.0, mse=truthful_mse(spec, client),
                              profitable=False)
    drop = (s2 / n - mu_i * (mu_i - mu_bar)) ** 2 / (mu_i ** 2 + s2)
    return ScaleDeviation(c_star=c_star, mse=truthful_mse(spec, client) - drop,
                          profitable=True)


def _check_draws(draws: int) -> None:
    if draws < MIN_DRAWS:
        raise StatisticsError(
            f"need at least {MIN_DRAWS} draws for a standard error, got {draws}")


def mc_mse_fixed(spec: MeanGameSpec, weights: Sequence[float], client: int,
                 draws: int, seed: int) -> tuple[float, float]:
    """Monte Carlo twin of the fixed-variant closed forms: reports
    x_j ~ N(mu_j, sigma^2), estimate is (1/N) sum_j w_j x_j.  Returns
    (mse, stderr)."""
    spec._need("fixed")
    spec._check_client(client)
    _check_draws(draws)
    weights = np.asarray(weights, dtype=float)
    n = spec.n_clients
    if weights.shape != (n,):
        raise ConfigurationError(f"need {n} weights, got shape {weights.shape}")
    rng = substream(seed, SAMPLES, 0)
    x = np.asarray(spec.mus) + spec.sigma * rng.standard_normal((draws, n))
    sq = ((x @ weights) / n - spec.mus[client]) ** 2
    return float(sq.mean()), float(sq.std(ddof=1)) / math.sqrt(draws)


def mc_scale_grid(spec: MeanGameSpec, client: int, c_values: Sequence[float],
                  draws: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """MSE estimates over a grid of own-report scales, sharing one set of
    draws across the grid so the argmin is not washed out by independent
    noise.  Returns (mses, stderrs) aligned with c_values."""
    spec._need("fixed")
    spec._check_client(client)
    _check_draws(draws)
    rng = substream(seed, SAMPLES, 0)
    n = spec.n_clients
    x = np.asarray(spec.mus) + spec.sigma * rng.standard_normal((draws, n))
    others = (x.sum(axis=1) - x[:, client]) / n
    own = x[:, client] / n
    mses = np.empty(len(c_values))
    errs = np.empty(len(c_values))
    for k, c in enumerate(c_values):
        sq = (others + float(c) * own - spec.mus[client]) ** 2
        mses[k] = sq.mean()
        errs[k] = sq.std(ddof=1) / math.sqrt(draws)
    return mses, errs


# -------------------------------------------------------------- bayesian

def posterior(spec: MeanGameSpec, client: int,
              xbars: Sequence[float]) -> tuple[float, float]:
    """Client i's posterior over its own mean given everyone's reports.

    With rho_j the adjusted weights and
    beta_i = tau / (sum_{j != i} rho_j + tau + tau0):

        precision = tau_i + beta_i (sum_{j != i} rho_j + tau0)
        mean = (tau_i xbar_i + beta_i sum_{j != i} rho_j xbar_j) / precision

    Returns (mean, variance).
    """
    spec._need("bayesian")
    spec._check_client(client)
    xbars = np.asarray(xbars, dtype=float)
    if xbars.shape != (spec.n_clients,):
        raise ConfigurationError(
            f"need {spec.n_clients} reports, got shape {xbars.shape}")
    taus, rhos = spec.taus, spec.rhos
    rho_rest = float(rhos.sum() - rhos[client])
    beta = spec.tau / (rho_rest + spec.tau + spec.tau0)
    precision = taus[client] + beta * (rho_rest + spec.tau0)
    weighted_rest = float(rhos @ xbars) - rhos[client] * xbars[client]
    mean = (taus[client] * xbars[client] + beta * weighted_rest) / precision
    return float(mean), float(1.0 / precision)


def weighted_mse(spec: MeanGameSpec, weights: Sequence[float], client: int) -> float:
    """Closed-form E[(mean_j c_j xbar_j / N - mu_i)^2] under the
    hierarchical model, for arbitrary weights:

        sum_j c_j^2 / (N^2 rho_j) + (sum_j c_j)^2 / (N^2 tau0)
        - 2 c_i / (N tau) - 2 sum_j c_j / (N tau0) + 1/tau + 1/tau0.
    """
    spec._need("bayesian")
    spec._check_client(client)
    c = np.asarray(weights, dtype=float)
    n = spec.n_clients
    if c.shape != (n,):
        raise ConfigurationError(f"need {n} weights, got shape {c.shape}")
    rhos = spec.rhos
    total = float(c.sum())
    return float((c ** 2 / rhos).sum()) / n ** 2 + total ** 2 / (n ** 2 * spec.tau0) \
        - 2.0 * float(c[client]) / (n * spec.tau) - 2.0 * total / (n * spec.tau0) \
        + 1.0 / spec.tau + 1.0 / spec.tau0


def nash_equilibrium(spec: MeanGameSpec) -> tuple[np.ndarray, np.ndarray]:
    """Equilibrium scales and the (positive) equilibrium errors:

        c_i = N rho_i (1/tau + 1/tau0) / (1 + sum_j rho_j / tau0)
        err_i = (1/tau + 1/tau0) (sum_j rho_j - 2 rho_i + tau)
                / (tau (1 + sum_j rho_j / tau0)).
    """
    spec._need("bayesian")
    n = spec.n_clients
    rhos = spec.rhos
    rho_sum = float(rhos.sum())
    rate = 1.0 / spec.tau + 1.0 / spec.tau0
    denom = 1.0 + rho_sum / spec.tau0
    scales = n * rhos * rate / denom
    errors = rate * (rho_sum - 2.0 * rhos + spec.tau) / (spec.tau * denom)
    return scales, errors


def foc_residuals(spec: MeanGameSpec, weights: Sequence[float]) -> np.ndarray:
    """First-order-condition residuals c_i / rho_i + sum_j c_j / tau0
    - N/tau - N/tau0; all zero exactly at the equilibrium."""
    spec._need("bayesian")
    c = np.asarray(weights, dtype=float)
    n = spec.n_clients
    target = n / spec.tau + n / spec.tau0
    return c / spec.rhos + c.sum() / spec.tau0 - target


def mc_mse(spec: MeanGameSpec, weights: Sequence[float], client: int,
           draws: int, seed: int) -> tuple[float, float]:
    """Monte Carlo twin of :func:`weighted_mse`: samples the full
    hierarchy mu -> mu_j -> xbar_j.  Returns (mse, stderr)."""
    spec._need("bayesian")
    spec._check_client(client)
    _check_draws(draws)
    weights = np.asarray(weights, dtype=float)
    n = spec.n_clients
    if weights.shape != (n,):
        raise ConfigurationError(f"need {n} weights, got shape {weights.shape}")
    rng = substream(seed, SAMPLES, 1)
    mu = rng.standard_normal(draws) / math.sqrt(spec.tau0)
    mu_j = mu[:, None] + rng.standard_normal((draws, n)) / math.sqrt(spec.tau)
    xbar = mu_j + rng.standard_normal((draws, n)) / np.sqrt(spec.taus)
    sq = ((xbar @ weights) / n - mu_j[:, client]) ** 2
    return float(sq.mean()), float(sq.std(ddof=1)) / math.sqrt(draws)


@dataclass(frozen=True)
class AnarchyReport:
    """Equilibrium versus truthful estimation error.

    The *_limit fields are the many-client limits 1/tau + tau0/tau^2 and
    1/tau (sampling noise averages out of the truthful error); ratio is
    their quotient 1 + tau0/tau, the asymptotic price of equilibrium
    play.  The finite-N arrays hold per-client closed-form errors, and
    ``high_heterogeneity`` records whether tau^2 + tau_j tau < tau_j tau0
    for every j, the regime where equilibrium play is strictly worse.
    """

    eq_error_limit: float
    truthful_error_limit: float
    ratio: float
    eq_errors: np.ndarray
    truthful_errors: np.ndarray
    high_heterogeneity: bool
    penalized: bool


def penalty_of_anarchy(spec: MeanGameSpec) -> AnarchyReport:
    """Compare equilibrium and truthful errors, finite-N and in the limit."""
    spec._need("bayesian")
    n = spec.n_clients
    _, eq_errors = nash_equilibrium(spec)
    ones = np.ones(n)
    truthful_errors = np.array([weighted_mse(spec, ones, i) for i in range(n)])
    eq_limit = 1.0 / spec.tau + spec.tau0 / spec.tau ** 2
    truthful_limit = 1.0 / spec.tau
    taus = spec.taus
    condition = bool(np.all(spec.tau ** 2 + taus * spec.tau < taus * spec.tau0))
    return AnarchyReport(
        eq_error_limit=eq_limit,
        truthful_error_limit=truthful_limit,
        ratio=eq_limit / truthful_limit,
        eq_errors=eq_errors,
        truthful_errors=truthful_errors,
        high_heterogeneity=condition,
        penalized=bool(eq_errors.mean() > truthful_errors.mean()),
    )
