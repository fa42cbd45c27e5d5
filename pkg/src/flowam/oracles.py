"""Closed-form references used as ground truth by the tests and the CLI.

A linear Gaussian flow (noise N(mu, sigma^2) to standard normal data) admits
exact expressions for its velocity field, its lean adjoint, the time at
which the optimal control peaks, and the normalized control-intensity
profile R_p(t).  Two toy diffusion families (variance-exploding and
variance-preserving) admit exact time components c*(t) of their optimal
controls together with closed-form argmax times.  These never touch the
numeric stack; they exist to be compared against it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class GaussianFlowSpec:
    """Linear flow from X_0 ~ N(mu, sigma^2) to X_1 ~ N(0, 1), independent."""

    mu: float = 0.0
    sigma: float = 1.0

    def m(self, t):
        """Marginal mean (1 - t) mu."""
        return (1.0 - np.asarray(t, dtype=np.float64)) * self.mu

    def d(self, t):
        """Marginal variance (1 - t)^2 sigma^2 + t^2; positive on [0, 1]."""
        t = np.asarray(t, dtype=np.float64)
        return (1.0 - t) ** 2 * self.sigma**2 + t**2


def rf_velocity(spec: GaussianFlowSpec, x, t):
    """Exact conditional-mean velocity A(t) x + B(t) of the Gaussian flow."""
    t = np.asarray(t, dtype=np.float64)
    a = (t - (1.0 - t) * spec.sigma**2) / spec.d(t)
    b = -spec.mu - a * spec.m(t)
    return a * np.asarray(x, dtype=np.float64) + b


def rf_adjoint(spec: GaussianFlowSpec, a1, t):
    """Exact lean adjoint a(t) = a(1) / sqrt(D(t)) along the Gaussian flow."""
    return np.asarray(a1, dtype=np.float64) / np.sqrt(spec.d(t))


def rf_peak_time(spec: GaussianFlowSpec) -> float:
    """Time of maximal optimal-control intensity, sigma^2 / (1 + sigma^2)."""
    if spec.sigma <= 0.0:
        raise DomainError(f"sigma must be > 0, got {spec.sigma}")
    s2 = spec.sigma**2
    return s2 / (1.0 + s2)


def rf_relative_strength(spec: GaussianFlowSpec, p: float, t):
    """Normalized control intensity R_p(t); equals 1 at the peak time."""
    if p <= 1.0:
        raise DomainError(f"p must be > 1, got {p}")
    s2 = spec.sigma**2
    ratio = s2 / (spec.d(t) * (1.0 + s2))
    return ratio ** (1.0 / (2.0 * p - 2.0))


class ToyKind(enum.Enum):
    VE = "ve"
    VP = "vp"


@dataclass(frozen=True)
class ToyDiffusionSpec:
    kind: ToyKind
    T: float
    eta: float

    def __post_init__(self):
        if self.T <= 0.0:
            raise DomainError(f"horizon must be > 0, got {self.T}")


def toy_control_component(spec: ToyDiffusionSpec, t):
    """Time component c*(t) of the optimal control for the toy dynamics.

    c*(t) = sigma(t) * |a(t)| with sigma = eta sqrt(2 (T - t)) and the
    closed-form adjoint decay of the respective linear dynamics.
    """
    tau = spec.T - np.asarray(t, dtype=np.float64)
    root = spec.eta * np.sqrt(2.0 * tau)
    if spec.kind is ToyKind.VE:
        return root * (1.0 + tau**2) ** (-(1.0 + spec.eta**2) / 2.0)
    return root * np.exp(-0.5 * spec.eta**2 * tau**2)


def toy_control_argmax(spec: ToyDiffusionSpec) -> float:
    """Closed-form argmax time of c*(t)."""
    if spec.kind is ToyKind.VE:
        return spec.T - 1.0 / np.sqrt(1.0 + 2.0 * spec.eta**2)
    return spec.T - 1.0 / (np.sqrt(2.0) * spec.eta)


def bimodal_score(mu: float, t, x):
    """Score of the symmetric bimodal marginal at time t.

    The marginal is the equal mixture of N(+-mu, 1) smoothed by the flow:
    s(t, x) = (-x + mu tanh(mu x / (1 + t^2))) / (1 + t^2).
    """
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    denom = 1.0 + t**2
    return (-x + mu * np.tanh(mu * x / denom)) / denom


def tilted_gaussian(c: float, m: float):
    """Mean and variance of N(0,1) tilted by exp(-c (x - m)^2 / 2).

    Completing the square gives mean c m / (1 + c), variance 1 / (1 + c).
    """
    if c <= -1.0:
        raise DomainError(f"tilt curvature must exceed -1, got {c}")
    return c * m / (1.0 + c), 1.0 / (1.0 + c)


# ---------------------------------------------------------------------------
# Analytic fields usable wherever a network field is expected (forward +
# input_vjp), so the adjoint recursion can be cross-checked exactly.
# ---------------------------------------------------------------------------


class GaussianFlowField:
    """rf_velocity wrapped with the field interface (dim 1)."""

    state_dim = 1

    def __init__(self, spec: GaussianFlowSpec):
        self.spec = spec

    def forward(self, x, t, cond=None):
        return rf_velocity(self.spec, x, t)

    def input_vjp(self, x, t, cond, w):
        # dv/dx = A(t), a scalar
        t = float(t)
        a = (t - (1.0 - t) * self.spec.sigma**2) / self.spec.d(t)
        return a * np.asarray(w, dtype=np.float64)


class LinearVelocityField:
    """v(x, t) = x @ A^T + b with a constant Jacobian, any dimension."""

    def __init__(self, matrix, bias=None):
        self.matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
        self.state_dim = self.matrix.shape[0]
        self.bias = (
            np.zeros(self.state_dim)
            if bias is None
            else np.asarray(bias, dtype=np.float64)
        )

    def forward(self, x, t, cond=None):
        return np.asarray(x, dtype=np.float64) @ self.matrix.T + self.bias

    def input_vjp(self, x, t, cond, w):
        return np.asarray(w, dtype=np.float64) @ self.matrix
