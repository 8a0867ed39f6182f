"""Online estimators: EMA Laplace/EPD tracking, forgetting-factor least squares,
curvature-based steps and the online parabola model."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import DegenerateCurvatureError, DegenerateFitError, NotWarmedUpError


# --- EMA estimation of (mu, b**kappa) -----------------------------------------

@dataclass(frozen=True)
class EmaState:
    mu: float
    theta: float
    nu: float = 0.95
    eta: float = 0.95
    kappa: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.nu <= 1.0 and 0.0 <= self.eta <= 1.0):
            raise ValueError("learning rates must lie in [0, 1]")
        if self.theta < 0 or self.kappa <= 0:
            raise ValueError("theta must be nonnegative and kappa positive")

    @property
    def b(self) -> float:
        return self.theta if self.kappa == 1.0 else math.pow(self.theta, 1.0 / self.kappa)


def ema_init(x0: float, nu: float = 0.95, eta: float = 0.95, kappa: float = 1.0) -> EmaState:
    """Start from the first observation with the default normalized scale 0.1."""
    return EmaState(mu=x0, theta=0.1**kappa, nu=nu, eta=eta, kappa=kappa)


def ema_update(s: EmaState, x: float) -> EmaState:
    dev = abs(x - s.mu)
    if s.kappa != 1.0:
        dev = math.pow(dev, s.kappa)
    return replace(
        s,
        mu=s.nu * s.mu + (1.0 - s.nu) * x,
        theta=s.eta * s.theta + (1.0 - s.eta) * dev,
    )


# --- weighted / recursive least squares ------------------------------------------

def weighted_linreg(M, x, w) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    Mw = M * w[:, None]
    try:
        return np.linalg.solve(Mw.T @ M, Mw.T @ x)
    except np.linalg.LinAlgError as exc:
        raise DegenerateFitError("weighted normal matrix is singular") from exc


@dataclass(frozen=True)
class RegState:
    y: np.ndarray
    Mhat: np.ndarray
    eta: float
    t: int = 0
    warmup: int = 0


def reg_init(d: int, eta: float, warmup: int | None = None) -> RegState:
    if not 0.0 < eta <= 1.0:
        raise ValueError("forgetting factor must lie in (0, 1]")
    return RegState(np.zeros(d), np.zeros((d, d)), eta, 0, d if warmup is None else max(warmup, d))


def reg_update(s: RegState, row, x: float) -> RegState:
    row = np.asarray(row, dtype=np.float64)
    return replace(
        s,
        y=s.eta * (s.y + x * row),
        Mhat=s.eta * (s.Mhat + np.outer(row, row)),
        t=s.t + 1,
    )


def reg_params(s: RegState) -> np.ndarray:
    if s.t < s.warmup:
        raise NotWarmedUpError(f"not warmed up: {s.t} of {s.warmup} updates")
    try:
        return np.linalg.solve(s.Mhat, s.y)
    except np.linalg.LinAlgError as exc:
        raise NotWarmedUpError("not warmed up: accumulated matrix is singular") from exc


@dataclass(frozen=True)
class InvRegState:
    """Recursive least squares carrying the inverse of the accumulated matrix."""

    y: np.ndarray
    Minv: np.ndarray
    eta: float
    t: int = 0

    @property
    def beta(self) -> np.ndarray:
        return self.Minv @ self.y


def invreg_from(s: RegState) -> InvRegState:
    """Hand a warmed-up state over to the inverse-carrying recurrence."""
    if s.t < s.warmup:
        raise NotWarmedUpError(f"not warmed up: {s.t} of {s.warmup} updates")
    return InvRegState(s.y.copy(), np.linalg.inv(s.Mhat), s.eta, s.t)


def reg_update_invfree(s: InvRegState, row, x: float, exact: bool = False) -> InvRegState:
    """Update ``Mhat^-1`` without inverting.

    The default is the first-order expansion ``(1 + z)^-1 ~ 1 - z`` and is only
    accurate for rows that are small relative to ``Mhat``. ``exact=True`` uses
    the Sherman-Morrison rank-1 identity instead.
    """
    v = np.asarray(row, dtype=np.float64)
    Pv = s.Minv @ v
    if exact:
        new = s.Minv - np.outer(Pv, Pv) / (1.0 + v @ Pv)
    else:
        new = s.Minv - np.outer(Pv, Pv)
    return InvRegState(
        y=s.eta * (s.y + x * v),
        Minv=new / s.eta,
        eta=s.eta,
        t=s.t + 1,
    )


# --- second-order online steps ------------------------------------------------------

def newton_step(grad: float, hess: float, theta_star: float) -> float:
    if abs(hess) < 1e-12:
        raise DegenerateCurvatureError("degenerate curvature")
    return theta_star - grad / hess


def gradient_step(theta: float, grad: float, lr: float) -> float:
    """Plain first-order step, kept as a baseline."""
    return theta - lr * grad


Pointwise = Callable[[float, float], tuple[float, float, float]]


@dataclass(frozen=True)
class CriterionStats:
    """Value, gradient and curvature of the forgetting criterion at a fixed point."""

    value: float = 0.0
    grad: float = 0.0
    hess: float = 0.0


def criterion_accumulate(stats: CriterionStats, x: float, theta: float, eta: float, loss: Pointwise) -> CriterionStats:
    f, df, d2f = loss(x, theta)
    return CriterionStats(eta * stats.value + f, eta * stats.grad + df, eta * stats.hess + d2f)


def squared_loss(x: float, theta: float) -> tuple[float, float, float]:
    d = x - theta
    return 0.5 * d * d, -d, 1.0


def laplace_nll(b: float, delta: float = 1e-2) -> Pointwise:
    """Negative log Laplace density in the location, with ``|.|`` smoothed as
    ``sqrt(d^2 + delta^2)`` so the curvature exists."""

    def loss(x: float, theta: float) -> tuple[float, float, float]:
        d = theta - x
        s = math.sqrt(d * d + delta * delta)
        return math.log(2 * b) + s / b, d / (s * b), delta * delta / (s * s * s * b)

    return loss


class AnchoredNewton:
    """Per-coordinate Newton tracking with two derivative anchors.

    Parameters come from the older anchor; every ``period`` steps the younger
    anchor takes over and a fresh one starts at the current estimate.
    ``max_step`` optionally bounds the distance of the estimate from its
    anchor, which keeps losses with little curvature away from their minimum
    (such as the Laplace one) from overshooting.
    """

    def __init__(self, theta0: float, eta: float, loss: Pointwise, period: int = 64, max_step: float | None = None):
        self.eta = eta
        self.loss = loss
        self.period = period
        self.max_step = max_step
        self.theta = theta0
        self._old = (theta0, CriterionStats())
        self._new = (theta0, CriterionStats())
        self._steps = 0

    def update(self, x: float) -> float:
        (a_old, s_old), (a_new, s_new) = self._old, self._new
        s_old = criterion_accumulate(s_old, x, a_old, self.eta, self.loss)
        s_new = criterion_accumulate(s_new, x, a_new, self.eta, self.loss)
        self._old, self._new = (a_old, s_old), (a_new, s_new)
        if abs(s_old.hess) >= 1e-12:
            theta = newton_step(s_old.grad, s_old.hess, a_old)
            if self.max_step is not None:
                theta = min(max(theta, a_old - self.max_step), a_old + self.max_step)
            self.theta = theta
        self._steps += 1
        if self._steps % self.period == 0:
            self._old = self._new
            self._new = (self.theta, CriterionStats())
        return self.theta


# --- online parabola model --------------------------------------------------------------

@dataclass(frozen=True)
class ParabolaState:
    """Bias-corrected exponential moving averages of theta, g, g*theta, theta^2."""

    avg_theta: float = 0.0
    avg_g: float = 0.0
    avg_gtheta: float = 0.0
    avg_theta2: float = 0.0
    eta: float = 0.95
    alpha: float = 0.3
    eps: float = 1e-3
    weight: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.eta < 1.0:
            raise ValueError("eta must lie in (0, 1)")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    @property
    def variance(self) -> float:
        return self.avg_theta2 - self.avg_theta * self.avg_theta

    @property
    def curvature(self) -> float:
        """Fitted parabola curvature (covariance of theta and g over theta variance)."""
        return (self.avg_gtheta - self.avg_g * self.avg_theta) / self.variance

    def minimum(self) -> float:
        lam = self.curvature
        rate = 1.0 / self.eps if lam == 0.0 else abs(1.0 / lam)
        rate = min(max(rate, self.eps), 1.0 / self.eps)
        return self.avg_theta - rate * self.avg_g


def parabola_update(s: ParabolaState, theta: float, g: float) -> tuple[ParabolaState, float]:
    w = s.eta * s.weight + 1.0
    k = 1.0 / w
    s = replace(
        s,
        avg_theta=s.avg_theta + (theta - s.avg_theta) * k,
        avg_g=s.avg_g + (g - s.avg_g) * k,
        avg_gtheta=s.avg_gtheta + (g * theta - s.avg_gtheta) * k,
        avg_theta2=s.avg_theta2 + (theta * theta - s.avg_theta2) * k,
        weight=w,
    )
    var = s.variance
    if not var > 1e-15 * max(1.0, s.avg_theta2):
        return s, theta
    p = s.minimum()
    return s, s.alpha * p + (1.0 - s.alpha) * theta
