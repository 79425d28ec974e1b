"""Client objectives for the federated simulator.

Three objective families are supported: quadratics in any dimension,
scalar polynomials, and a small two-layer tanh network on a fixed
synthetic batch (the only non-convex family, used in harness sweeps).
A :class:`ClientObjective` bundles an objective with its gradient-noise
level and the radius of the ball on which curvature and gradient-norm
constants are certified.

Stochastic gradients are exact gradients plus isotropic Gaussian noise
scaled so that E||e||^2 = sigma^2 exactly, independent of dimension.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .errors import ConfigurationError
from .rng import ANALYSIS, SAMPLES, substream

__all__ = [
    "QuadraticObjective",
    "ScalarPolyObjective",
    "ToyNonConvexObjective",
    "ClientObjective",
    "ObjectiveConstants",
    "HeterogeneityProfile",
    "heterogeneity",
    "noise_moment_bounds",
    "conservative_constants",
    "default_domain_radius",
    "resolve_domain_radii",
    "global_value",
    "global_gradient",
    "global_minimizer",
]


@dataclass(frozen=True)
class ObjectiveConstants:
    """Curvature and gradient-norm constants certified on a ball.

    ``m`` lower-bounds and ``H`` upper-bounds the Hessian spectrum,
    ``L`` upper-bounds the gradient norm on the ball, ``sigma`` is the
    root-mean-square gradient noise.  ``approximate`` marks constants
    that were probed numerically rather than derived in closed form.
    """

    m: float
    H: float
    L: float
    sigma: float
    approximate: bool = False


@dataclass(frozen=True)
class HeterogeneityProfile:
    """Dissimilarity constants: ``zeta`` bounds the gradient-norm gap
    |  ||grad F_i||^2 - ||grad F||^2  | <= zeta^2 over the probe set and
    ``rho`` bounds the pairwise noise-power gap |sigma_i^2 - sigma_j^2|."""

    zeta: float
    rho: float


class QuadraticObjective:
    """F(theta) = 0.5 (theta - center)^T A (theta - center) + offset."""

    def __init__(self, center: Sequence[float], curvature: Sequence[Sequence[float]],
                 offset: float = 0.0):
        self.center = np.asarray(center, dtype=float)
        self.curvature = np.asarray(curvature, dtype=float)
        self.offset = float(offset)
        if self.center.ndim != 1:
            raise ConfigurationError("quadratic center must be a vector")
        d = self.center.shape[0]
        if self.curvature.shape != (d, d):
            raise ConfigurationError(
                f"curvature must be {d}x{d} to match the center, got {self.curvature.shape}")
        if not np.allclose(self.curvature, self.curvature.T, atol=1e-12):
            raise ConfigurationError("curvature matrix must be symmetric")
        if float(np.linalg.eigvalsh(self.curvature)[0]) <= 0.0:
            raise ConfigurationError("curvature matrix must be positive definite")

    @property
    def dimension(self) -> int:
        return self.center.shape[0]

    def value(self, theta: np.ndarray) -> float:
        diff = theta - self.center
        return 0.5 * float(diff @ self.curvature @ diff) + self.offset

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        return self.curvature @ (theta - self.center)

    def constants(self, radius: float, sigma: float) -> ObjectiveConstants:
        eigs = np.linalg.eigvalsh(self.curvature)
        m, h = float(eigs[0]), float(eigs[-1])
        # sup of ||A (theta - center)|| over the radius-R ball is lmax * R
        return ObjectiveConstants(m=m, H=max(abs(m), abs(h)), L=abs(h) * radius,
                                  sigma=sigma)


def _interval_extrema(poly: Polynomial, lo: float, hi: float) -> tuple[float, float]:
    """Exact min and max of a polynomial over [lo, hi] via critical points."""
    candidates = [lo, hi]
    deriv = poly.deriv()
    if deriv.degree() >= 1:
        for root in deriv.roots():
            if abs(root.imag) < 1e-12 and lo <= root.real <= hi:
                candidates.append(float(root.real))
    values = [float(poly(x)) for x in candidates]
    return min(values), max(values)


class ScalarPolyObjective:
    """One-dimensional polynomial objective F(x) = sum_k coeffs[k] x^k."""

    def __init__(self, coeffs: Sequence[float], center: float | None = None):
        self.coeffs = tuple(float(c) for c in coeffs)
        if len(self.coeffs) == 0:
            raise ConfigurationError("polynomial needs at least one coefficient")
        self._poly = Polynomial(self.coeffs)
        self._deriv = self._poly.deriv() if self._poly.degree() >= 1 else Polynomial([0.0])
        if center is None:
            center = self._default_center()
        self.center = np.array([float(center)])

    def _default_center(self) -> float:
        """Reference point for the certified ball: the best real critical
        point, falling back to zero when there is none."""
        if self._deriv.degree() < 1:
            return 0.0
        best_x, best_v = 0.0, float(self._poly(0.0))
        for root in self._deriv.roots():
            if abs(root.imag) < 1e-12:
                v = float(self._poly(root.real))
                if v < best_v:
                    best_x, best_v = float(root.real), v
        return best_x

    @property
    def dimension(self) -> int:
        return 1

    def value(self, theta: np.ndarray) -> float:
        return float(self._poly(float(theta[0])))

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        return np.array([float(self._deriv(float(theta[0])))])

    def constants(self, radius: float, sigma: float) -> ObjectiveConstants:
        lo, hi = float(self.center[0]) - radius, float(self.center[0]) + radius
        second = self._deriv.deriv() if self._deriv.degree() >= 1 else Polynomial([0.0])
        m, m_hi = _interval_extrema(second, lo, hi)
        d1_lo, d1_hi = _interval_extrema(self._deriv, lo, hi)
        return ObjectiveConstants(m=m, H=max(abs(m), abs(m_hi)),
                                  L=max(abs(d1_lo), abs(d1_hi)), sigma=sigma)


class ToyNonConvexObjective:
    """Mean squared error of a two-layer tanh network on a frozen batch.

    net(x) = sum_k v_k tanh(w_k x + c_k); parameters are packed as
    [w, c, v].  A held-out batch drawn from the same synthetic rule is
    kept for test-time evaluation.
    """

    def __init__(self, hidden: int, train_x: np.ndarray, train_y: np.ndarray,
                 test_x: np.ndarray, test_y: np.ndarray):
        if hidden < 1:
            raise ConfigurationError("hidden width must be at least 1")
        self.hidden = int(hidden)
        self.train_x = np.asarray(train_x, dtype=float)
        self.train_y = np.asarray(train_y, dtype=float)
        self.test_x = np.asarray(test_x, dtype=float)
        self.test_y = np.asarray(test_y, dtype=float)
        self.center = np.zeros(3 * self.hidden)

    @classmethod
    def synthetic(cls, hidden: int, n_train: int, n_test: int,
                  target_shift: float = 0.0, sample_seed: int = 0) -> "ToyNonConvexObjective":
        """Build an instance on sin-wave data shifted by ``target_shift``
        (the shift is what makes clients heterogeneous)."""
        rng_train = substream(sample_seed, SAMPLES, 0)
        rng_test = substream(sample_seed, SAMPLES, 1)
        tx = rng_train.uniform(-2.0, 2.0, n_train)
        vx = rng_test.uniform(-2.0, 2.0, n_test)
        f = lambda x: np.sin(1.5 * x) + target_shift
        return cls(hidden, tx, f(tx), vx, f(vx))

    @property
    def dimension(self) -> int:
        return 3 * self.hidden

    def _unpack(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        h = self.hidden
        return theta[:h], theta[h:2 * h], theta[2 * h:]

    def _forward(self, theta: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        w, c, v = self._unpack(theta)
        act = np.tanh(np.outer(w, x) + c[:, None])
        return v @ act, act

    def value(self, theta: np.ndarray) -> float:
        out, _ = self._forward(theta, self.train_x)
        return float(np.mean((out - self.train_y) ** 2))

    def test_value(self, theta: np.ndarray) -> float:
        out, _ = self._forward(theta, self.test_x)
        return float(np.mean((out - self.test_y) ** 2))

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        w, c, v = self._unpack(theta)
        x, y = self.train_x, self.train_y
        out, act = self._forward(theta, x)
        r = 2.0 * (out - y) / x.shape[0]
        d_act = (1.0 - act ** 2) * v[:, None] * r[None, :]
        return np.concatenate([d_act @ x, d_act.sum(axis=1), act @ r])

    def constants(self, radius: float, sigma: float) -> ObjectiveConstants:
        """Probed estimates on the radius ball around the origin; always
        flagged approximate since nothing here is certified."""
        rng = substream(0, ANALYSIS, 17)
        d = self.dimension
        n_probe = 64
        z = rng.standard_normal((n_probe, d))
        pts = z / np.linalg.norm(z, axis=1, keepdims=True)
        pts *= radius * rng.uniform(0.0, 1.0, n_probe)[:, None] ** (1.0 / d)
        grads = np.stack([self.gradient(p) for p in pts])
        vals = np.array([self.value(p) for p in pts])
        l_hat = float(np.max(np.linalg.norm(grads, axis=1)))
        m_hat, h_hat = math.inf, 0.0
        for i in range(0, n_probe - 1, 2):
            dx = pts[i + 1] - pts[i]
            gap = float(np.linalg.norm(dx))
            if gap < 1e-9:
                continue
            h_hat = max(h_hat, float(np.linalg.norm(grads[i + 1] - grads[i])) / gap)
            bregman = vals[i + 1] - vals[i] - float(grads[i] @ dx)
            m_hat = min(m_hat, 2.0 * bregman / gap ** 2)
        return ObjectiveConstants(m=m_hat, H=h_hat, L=l_hat, sigma=sigma,
                                  approximate=True)


@dataclass
class ClientObjective:
    """An objective plus its gradient-noise level and certified radius.

    ``domain_radius`` may start as None; resolve it with
    :func:`resolve_domain_radii` before asking for constants.
    """

    objective: QuadraticObjective | ScalarPolyObjective | ToyNonConvexObjective
    noise_sigma: float = 0.0
    domain_radius: float | None = None

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be non-negative")
        if self.domain_radius is not None and self.domain_radius <= 0:
            raise ConfigurationError("domain_radius must be positive")

    @property
    def dimension(self) -> int:
        return self.objective.dimension

    def evaluate(self, theta: np.ndarray) -> float:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dimension,):
            raise ConfigurationError(
                f"model has shape {theta.shape}, objective expects ({self.dimension},)")
        return self.objective.value(theta)

    def test_evaluate(self, theta: np.ndarray) -> float:
        """Loss used for reward bookkeeping: held-out batch for the toy
        network, the objective itself otherwise."""
        if isinstance(self.objective, ToyNonConvexObjective):
            return self.objective.test_value(np.asarray(theta, dtype=float))
        return self.evaluate(theta)

    def exact_gradient(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dimension,):
            raise ConfigurationError(
                f"model has shape {theta.shape}, objective expects ({self.dimension},)")
        return self.objective.gradient(theta)

    def sample_gradient(self, theta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Unbiased gradient sample: exact gradient plus isotropic Gaussian
        noise with E||e||^2 = sigma^2 (per-coordinate std sigma/sqrt(d))."""
        g = self.exact_gradient(theta)
        if self.noise_sigma == 0.0:
            return g
        d = self.dimension
        return g + rng.standard_normal(d) * (self.noise_sigma / math.sqrt(d))

    def constants(self) -> ObjectiveConstants:
        if self.domain_radius is None:
            raise ConfigurationError(
                "domain_radius is unresolved; call resolve_domain_radii first")
        return self.objective.constants(self.domain_radius, self.noise_sigma)


def default_domain_radius(clients: Sequence[ClientObjective]) -> float:
    """Default certified radius: twice the largest distance from any
    objective's center to the ensemble average of centers, plus one."""
    centers = [np.asarray(c.objective.center, dtype=float) for c in clients]
    ref = np.mean(centers, axis=0)
    return 2.0 * max(float(np.linalg.norm(c - ref)) for c in centers) + 1.0


def resolve_domain_radii(clients: Sequence[ClientObjective]) -> list[ClientObjective]:
    """Fill every unset ``domain_radius`` with the ensemble default."""
    if not clients:
        raise ConfigurationError("need at least one client")
    dims = {c.dimension for c in clients}
    if len(dims) != 1:
        raise ConfigurationError(f"clients disagree on dimension: {sorted(dims)}")
    if all(c.domain_radius is not None for c in clients):
        return list(clients)
    radius = default_domain_radius(clients)
    return [c if c.domain_radius is not None
            else dataclasses.replace(c, domain_radius=radius) for c in clients]


def noise_moment_bounds(clients: Sequence[ClientObjective]) -> tuple[float, float]:
    """(M, M_V) with E||e_i||^2 <= M + M_V ||grad F_i||^2.  The noise
    model is state-independent, so M is the worst sigma^2 and M_V = 0."""
    return max(c.noise_sigma ** 2 for c in clients), 0.0


def conservative_constants(clients: Sequence[ClientObjective],
                           allow_approximate: bool = False) -> ObjectiveConstants:
    """Ensemble constants usable in the worst case: smallest m, largest
    H and L, largest sigma.  Probed (approximate) constants are refused
    unless explicitly allowed, since the certificates they feed would be
    silently invalid."""
    per_client = [c.constants() for c in clients]
    approx = any(k.approximate for k in per_client)
    if approx and not allow_approximate:
        raise ConfigurationError(
            "constants are probed estimates for a non-convex objective; "
            "pass allow_approximate=True to use them anyway")
    return ObjectiveConstants(
        m=min(k.m for k in per_client),
        H=max(k.H for k in per_client),
        L=max(k.L for k in per_client),
        sigma=max(k.sigma for k in per_client),
        approximate=approx,
    )


def global_value(clients: Sequence[ClientObjective], theta: np.ndarray) -> float:
    """F(theta) = average of the client objectives."""
    return float(np.mean([c.evaluate(theta) for c in clients]))


def global_gradient(clients: Sequence[ClientObjective], theta: np.ndarray) -> np.ndarray:
    return np.mean([c.exact_gradient(theta) for c in clients], axis=0)


def heterogeneity(clients: Sequence[ClientObjective],
                  probe_thetas: Sequence[np.ndarray]) -> HeterogeneityProfile:
    """Measure zeta and rho over a finite probe set.

    zeta^2 is the largest observed |  ||grad F_i||^2 - ||grad F||^2  |,
    rho^2 the largest pairwise |sigma_i^2 - sigma_j^2|.  The estimate is
    exact on the probe set only; choose probes that cover the region the
    run will visit.
    """
    if len(probe_thetas) == 0:
        raise ConfigurationError("need at least one probe point")
    zeta_sq = 0.0
    for theta in probe_thetas:
        grads = [c.exact_gradient(np.asarray(theta, dtype=float)) for c in clients]
        global_sq = float(np.linalg.norm(np.mean(grads, axis=0)) ** 2)
        for g in grads:
            zeta_sq = max(zeta_sq, abs(float(g @ g) - global_sq))
    sigmas_sq = [c.noise_sigma ** 2 for c in clients]
    rho_sq = max(abs(a - b) for a in sigmas_sq for b in sigmas_sq)
    return HeterogeneityProfile(zeta=math.sqrt(zeta_sq), rho=math.sqrt(rho_sq))


def global_minimizer(clients: Sequence[ClientObjective]) -> np.ndarray:
    """Exact minimizer of the average objective for analytic families.

    All-quadratic ensembles solve a linear system; scalar polynomial
    ensembles (any mix of polynomials and 1-d quadratics) minimize the
    averaged polynomial over its real critical points.
    """
    objs = [c.objective for c in clients]
    if all(isinstance(o, QuadraticObjective) for o in objs):
        a_sum = np.sum([o.curvature for o in objs], axis=0)
        b_sum = np.sum([o.curvature @ o.center for o in objs], axis=0)
        return np.linalg.solve(a_sum, b_sum)
    if all(isinstance(o, (ScalarPolyObjective, QuadraticObjective)) for o in objs) \
            and all(o.dimension == 1 for o in objs):
        total = Polynomial([0.0])
        for o in objs:
            if isinstance(o, ScalarPolyObjective):
                total = total + Polynomial(o.coeffs)
            else:
                a, c, off = float(o.curvature[0, 0]), float(o.center[0]), o.offset
                total = total + Polynomial([0.5 * a * c * c + off, -a * c, 0.5 * a])
        deriv = total.deriv()
        best_x, best_v = None, math.inf
        for root in deriv.roots():
            if abs(root.imag) < 1e-9:
                v = float(total(root.real))
                if v < best_v:
                    best_x, best_v = float(root.real), v
        if best_x is None:
            raise ConfigurationError("average polynomial has no real critical point")
        return np.array([best_x])
    raise ConfigurationError("closed-form minimizer needs analytic objectives")
