"""Client reporting strategies.

A strategy turns the locally computed gradient sample g into the message
actually sent: m = a * g + b * xi with |a| >= 1, b >= 0 and xi isotropic
unit-power noise (E||xi||^2 = 1).  Truthful reporting is a = 1, b = 0.
The directional variant instead rotates the gradient in a fixed plane
while keeping ||m|| = a ||g||, subject to <m, g> >= ||g||^2 (angles that
would violate this are clipped and flagged).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import AnalysisError, ConfigurationError

__all__ = [
    "StrategyPlan",
    "Message",
    "HistoryView",
    "make_message",
    "is_approximately_truthful",
]

KINDS = ("truthful", "pure", "mixed", "history", "directional")

ScheduleLike = "float | Sequence[float]"


@dataclass
class Message:
    """What a client sent at one step: the payload plus the realized
    scale/noise magnitudes (recorded for audits and payment analysis)."""

    payload: np.ndarray
    scale: float
    noise: float
    clipped: bool = False


@dataclass
class HistoryView:
    """What a history-dependent rule may condition on at step t: models
    theta_1..theta_t, plus this client's own past gradient samples and
    messages (steps 1..t-1).  Rules must be pure functions of this view;
    in particular they never see the current step's gradient."""

    thetas: list
    gradients: list
    messages: list


def _check_scale(value: float, where: str) -> float:
    value = float(value)
    if abs(value) < 1.0 - 1e-12:
        raise ConfigurationError(f"{where}: |scale| must be >= 1, got {value}")
    return value


def _check_noise(value: float, where: str) -> float:
    value = float(value)
    if value < 0.0:
        raise ConfigurationError(f"{where}: noise magnitude must be >= 0, got {value}")
    return value


@dataclass
class StrategyPlan:
    """One client's reporting rule.

    kind "truthful":    a = 1, b = 0 at every step.
    kind "pure":        deterministic schedules for a_t (scale) and b_t (noise);
                        scalars mean the same value at every step.
    kind "mixed":       a_t ~ Uniform(scale_range), b_t ~ Uniform(noise_range),
                        drawn fresh each step, independent of everything else.
    kind "history":     (a_t, b_t) = callback(HistoryView).
    kind "directional": rotate the gradient by angle_t in the plane spanned by
                        it and the first canonical axis, rescaled to a_t ||g||.
    """

    kind: str = "truthful"
    scale: float | Sequence[float] = 1.0
    noise: float | Sequence[float] = 0.0
    angle: float | Sequence[float] = 0.0
    scale_range: tuple[float, float] = (1.0, 1.0)
    noise_range: tuple[float, float] = (0.0, 0.0)
    callback: Callable[[HistoryView], tuple[float, float]] | None = field(
        default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown strategy kind {self.kind!r}")
        for name, sched, check in (("scale", self.scale, _check_scale),
                                   ("noise", self.noise, _check_noise)):
            values = [sched] if np.isscalar(sched) else list(sched)
            for v in values:
                check(v, f"{self.kind} {name} schedule")
        if self.kind == "mixed":
            lo, hi = self.scale_range
            if not (1.0 <= lo <= hi):
                raise ConfigurationError(
                    f"mixed scale_range must satisfy 1 <= lo <= hi, got {self.scale_range}")
            nlo, nhi = self.noise_range
            if not (0.0 <= nlo <= nhi):
                raise ConfigurationError(
                    f"mixed noise_range must satisfy 0 <= lo <= hi, got {self.noise_range}")
        if self.kind == "history" and self.callback is None:
            raise ConfigurationError("history plans need a callback")
        if self.kind == "directional":
            values = [self.scale] if np.isscalar(self.scale) else list(self.scale)
            if any(v < 1.0 for v in values):
                raise ConfigurationError("directional plans need scale >= 1")

    @staticmethod
    def truthful() -> "StrategyPlan":
        return StrategyPlan(kind="truthful")

    @staticmethod
    def pure(scale, noise=0.0) -> "StrategyPlan":
        return StrategyPlan(kind="pure", scale=scale, noise=noise)

    @staticmethod
    def mixed(scale_range, noise_range=(0.0, 0.0)) -> "StrategyPlan":
        return StrategyPlan(kind="mixed", scale_range=tuple(scale_range),
                            noise_range=tuple(noise_range))

    @staticmethod
    def history(callback) -> "StrategyPlan":
        return StrategyPlan(kind="history", callback=callback)

    @staticmethod
    def directional(scale, angle, noise=0.0) -> "StrategyPlan":
        return StrategyPlan(kind="directional", scale=scale, angle=angle, noise=noise)


def _at(sched, step: int, horizon_hint: str) -> float:
    """Value of a scalar-or-sequence schedule at 1-based step."""
    if np.isscalar(sched):
        return float(sched)
    seq = sched
    if step - 1 >= len(seq):
        raise ConfigurationError(
            f"{horizon_hint} schedule has {len(seq)} entries, needed step {step}")
    return float(seq[step - 1])


def _unit_noise(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Isotropic Gaussian direction with E||xi||^2 = 1."""
    return rng.standard_normal(dim) / math.sqrt(dim)


def _rotated(gradient: np.ndarray, a: float, angle: float) -> tuple[np.ndarray, bool]:
    """Rotate-and-scale keeping <h, g> >= ||g||^2.

    Writes h = ||g|| (s u + q v) with u the gradient direction, v a unit
    vector orthogonal to it, and s^2 + q^2 = a^2.  The feasibility floor
    is s >= 1; requested angles that would cross it are clipped.
    """
    g_norm = float(np.linalg.norm(gradient))
    if g_norm == 0.0:
        return np.zeros_like(gradient), False
    d = gradient.shape[0]
    u = gradient / g_norm
    s_req = a * math.cos(angle)
    if d == 1:
        # no off-axis direction exists; anything but angle = 0 collapses
        return a * gradient, angle != 0.0
    axis = np.zeros(d)
    axis[0] = 1.0
    if abs(float(u @ axis)) > 1.0 - 1e-9:
        axis = np.zeros(d)
        axis[1] = 1.0
    v = axis - float(axis @ u) * u
    v /= np.linalg.norm(v)
    s = max(s_req, 1.0)
    clipped = s_req < 1.0
    q = math.copysign(math.sqrt(max(a * a - s * s, 0.0)), math.sin(angle))
    return g_norm * (s * u + q * v), clipped


def make_message(plan: StrategyPlan, gradient: np.ndarray, step: int,
                 history: HistoryView | None,
                 rng: np.random.Generator) -> Message:
    """Apply a plan to the step-t gradient sample and record what was done.

    ``rng`` is the client's strategy substream for this step; it is the
    only source of randomness (mixed draws and the noise direction xi).
    """
    gradient = np.asarray(gradient, dtype=float)
    d = gradient.shape[0]
    if plan.kind == "truthful":
        return Message(payload=gradient.copy(), scale=1.0, noise=0.0)
    if plan.kind == "directional":
        a = _at(plan.scale, step, "directional scale")
        b = _check_noise(_at(plan.noise, step, "directional noise"), "directional")
        angle = _at(plan.angle, step, "directional angle")
        h, clipped = _rotated(gradient, a, angle)
        payload = h if b == 0.0 else h + b * _unit_noise(d, rng)
        return Message(payload=payload, scale=a, noise=b, clipped=clipped)
    if plan.kind == "pure":
        a = _at(plan.scale, step, "pure scale")
        b = _at(plan.noise, step, "pure noise")
    elif plan.kind == "mixed":
        a = rng.uniform(*plan.scale_range)
        b = rng.uniform(*plan.noise_range)
    elif plan.kind == "history":
        if history is None:
            raise AnalysisError("history plan invoked without a history view")
        a, b = plan.callback(history)
        a = _check_scale(a, "history callback")
        b = _check_noise(b, "history callback")
    else:  # pragma: no cover - guarded in __post_init__
        raise ConfigurationError(f"unknown strategy kind {plan.kind!r}")
    payload = a * gradient
    if b != 0.0:
        payload = payload + b * _unit_noise(d, rng)
    return Message(payload=payload, scale=float(a), noise=float(b))


def is_approximately_truthful(plan: StrategyPlan, traces, client: int,
                              epsilon: float,
                              mean_sq_gradient: Sequence[float] | None = None) -> bool:
    """Check the epsilon-truthfulness certificate on recorded runs.

    Requires, at every step t, E||(a_t - 1) g||^2 <= epsilon^2 and
    b_t <= epsilon.  With ``mean_sq_gradient`` (per-step E||g||^2) given
    and a deterministic-scale plan the first condition is evaluated in
    closed form; otherwise it is estimated from the recorded samples,
    averaging across however many traces are supplied.
    """
    if epsilon < 0:
        raise ConfigurationError("epsilon must be non-negative")
    if hasattr(traces, "messages"):
        traces = [traces]
    else:
        traces = list(traces)
    if not traces:
        raise AnalysisError("no runs supplied")
    horizon = len(traces[0].messages)
    if horizon == 0:
        raise AnalysisError("run has no recorded steps")
    eps_sq = epsilon * epsilon
    exact_scales = plan.kind in ("truthful", "pure", "directional") \
        and mean_sq_gradient is not None
    for t in range(1, horizon + 1):
        deviations = []
        for trace in traces:
            msg = trace.messages[t - 1][client]
            if msg.noise > epsilon:
                return False
            g = trace.gradients[t - 1][client]
            deviations.append((msg.scale - 1.0) ** 2 * float(g @ g))
        if exact_scales:
            a = 1.0 if plan.kind == "truthful" else _at(plan.scale, t, "scale")
            if (a - 1.0) ** 2 * float(mean_sq_gradient[t - 1]) > eps_sq:
                return False
        elif float(np.mean(deviations)) > eps_sq:
            return False
    return True
