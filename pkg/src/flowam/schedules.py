"""Affine interpolant schedules, derived drift coefficients, and diffusion noise schedules.

The interpolant is x_t = beta(t) * x0 + alpha(t) * x1 with alpha(0)=0,
alpha(1)=1, beta(0)=1, beta(1)=0.  From (alpha, beta) we derive

    kappa(t) = alpha'(t) / alpha(t)
    eta(t)   = beta(t) * (kappa(t) * beta(t) - beta'(t))

which convert between velocity / score / noise / clean-data parameterizations
and define the matched ODE/SDE sampler pair.  All schedule queries clamp t to
[T_FLOOR, 1] so the kappa singularity at t=0 never surfaces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .errors import DomainError, ShapeError, SingularityError

# Time clamp floor: samplers never need drift coefficients below this.
T_FLOOR = 1e-3


class ScheduleKind(Enum):
    LINEAR = "linear"
    CUSTOM = "custom"


@dataclass(frozen=True)
class InterpolantSchedule:
    kind: ScheduleKind
    alpha: Callable[[float], float]
    beta: Callable[[float], float]
    alpha_dot: Callable[[float], float]
    beta_dot: Callable[[float], float]


def linear_schedule() -> InterpolantSchedule:
    """alpha(t) = t, beta(t) = 1 - t."""
    return InterpolantSchedule(
        kind=ScheduleKind.LINEAR,
        alpha=lambda t: np.asarray(t, dtype=np.float64) + 0.0,
        beta=lambda t: 1.0 - np.asarray(t, dtype=np.float64),
        alpha_dot=lambda t: np.ones_like(np.asarray(t, dtype=np.float64)),
        beta_dot=lambda t: -np.ones_like(np.asarray(t, dtype=np.float64)),
    )


@dataclass(frozen=True)
class DriftCoefficients:
    kappa: float
    eta: float
    t: float


def clamp_time(t: float, floor: float = T_FLOOR) -> float:
    if t < 0.0 or t > 1.0:
        raise DomainError(f"time {t} outside [0, 1]")
    return max(t, floor)


def drift_coefficients(sched: InterpolantSchedule, t: float) -> DriftCoefficients:
    """kappa(t), eta(t) at the clamped time."""
    tc = clamp_time(t)
    a = float(sched.alpha(tc))
    if a == 0.0:
        raise SingularityError(f"alpha({tc}) = 0 after clamping")
    kappa = float(sched.alpha_dot(tc)) / a
    b = float(sched.beta(tc))
    eta = b * (kappa * b - float(sched.beta_dot(tc)))
    return DriftCoefficients(kappa=kappa, eta=eta, t=tc)


class Parameterization(Enum):
    VELOCITY = "velocity"
    SCORE = "score"
    NOISE = "noise"
    CLEAN_DATA = "clean_data"


def to_velocity(
    param: Parameterization,
    value: np.ndarray,
    x: np.ndarray,
    t: float,
    sched: InterpolantSchedule,
) -> np.ndarray:
    """Convert a model prediction of the given parameterization to a velocity."""
    value = np.asarray(value, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if value.shape != x.shape:
        raise ShapeError(f"value shape {value.shape} != x shape {x.shape}")
    if param is Parameterization.VELOCITY:
        return value
    tc = clamp_time(t)
    if param is Parameterization.CLEAN_DATA:
        b = sched.beta(tc)
        if b == 0.0:
            raise SingularityError(f"beta({tc}) = 0 in clean-data conversion")
        ratio = sched.beta_dot(tc) / b
        return ratio * x - (ratio * sched.alpha(tc) - sched.alpha_dot(tc)) * value
    coeffs = drift_coefficients(sched, tc)
    if param is Parameterization.SCORE:
        return coeffs.kappa * x + coeffs.eta * value
    if param is Parameterization.NOISE:
        b = sched.beta(tc)
        return coeffs.kappa * x - (coeffs.kappa * b - sched.beta_dot(tc)) * value
    raise DomainError(f"unknown parameterization {param}")


def score_from_velocity(
    v: np.ndarray, x: np.ndarray, t: float, sched: InterpolantSchedule
) -> np.ndarray:
    """Inverse of the score conversion: s = (v - kappa x) / eta."""
    coeffs = drift_coefficients(sched, t)
    if coeffs.eta == 0.0:
        raise SingularityError(f"eta({coeffs.t}) = 0; score undefined")
    return (np.asarray(v, dtype=np.float64) - coeffs.kappa * np.asarray(x)) / coeffs.eta


class NoiseKind(Enum):
    MEMORYLESS = "memoryless"
    SIN_SQ = "sin2"
    ONE_MINUS_T = "one_minus_t"
    SIGMA_T = "sigma_t"
    ZERO = "zero"
    CUSTOM = "custom"


@dataclass(frozen=True)
class NoiseSchedule:
    kind: NoiseKind
    fn: Callable[[float], float] | None = None


def sigma(ns: NoiseSchedule, t: float, sched: InterpolantSchedule) -> float:
    """Diffusion coefficient sigma(t) >= 0."""
    if t < 0.0 or t > 1.0:
        raise DomainError(f"time {t} outside [0, 1]")
    if ns.kind is NoiseKind.ZERO:
        return 0.0
    if ns.kind is NoiseKind.MEMORYLESS:
        eta = drift_coefficients(sched, t).eta
        return math.sqrt(max(2.0 * eta, 0.0))
    if ns.kind is NoiseKind.SIN_SQ:
        return math.sin(math.pi * t) ** 2
    if ns.kind is NoiseKind.ONE_MINUS_T:
        return 1.0 - t
    if ns.kind is NoiseKind.SIGMA_T:
        # beta(t) itself used as the noise level.
        return float(sched.beta(t))
    if ns.kind is NoiseKind.CUSTOM:
        if ns.fn is None:
            raise DomainError("custom noise schedule needs fn")
        return float(ns.fn(t))
    raise DomainError(f"unknown noise kind {ns.kind}")


SCHEDULES = {"linear": linear_schedule()}
NOISE_SCHEDULES = {
    "memoryless": NoiseSchedule(NoiseKind.MEMORYLESS),
    "sin2": NoiseSchedule(NoiseKind.SIN_SQ),
    "one_minus_t": NoiseSchedule(NoiseKind.ONE_MINUS_T),
    "sigma_t": NoiseSchedule(NoiseKind.SIGMA_T),
    "zero": NoiseSchedule(NoiseKind.ZERO),
}
