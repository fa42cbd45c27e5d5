"""Control regularization, adjoint-to-control targets, and matching losses.

The penalty is f(r) = r^p / (p * lambda) with p > 1, lambda > 0.  Its
first-order stationarity condition inverts to the closed-form target

    u*(a) = -lambda^{1/(p-1)} ||a||^{(2-p)/(p-1)} a,

which the deterministic matching loss regresses the implicit control
v_theta - v_base onto.  The stochastic (quadratic-penalty) loss matches
(sigma^2 + 2 eta) / (2 sigma eta) * (v_theta - v_base) against -sigma u*(a).
DRaFT / ReFL baselines backpropagate the terminal reward through the last
sampler steps instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adjoint import AdjointTrace
from .dynamics import Trajectory, sde_step_coeffs
from .errors import ConfigError, ShapeError, SingularityError
from .nnet import VelocityField, accumulate_grads, zero_grads_like
from .schedules import InterpolantSchedule, NoiseSchedule


@dataclass(frozen=True)
class RegularizerSpec:
    p: float = 2.0
    lam: float = 1.0
    eps_adjoint: float = 1e-12

    def __post_init__(self):
        if self.p <= 1.0:
            raise ConfigError(f"regularizer order p must be > 1, got {self.p}")
        if self.lam <= 0.0:
            raise ConfigError(f"regularizer weight must be > 0, got {self.lam}")

    def fprime(self, r):
        """f'(r) = r^{p-1} / lambda."""
        return np.asarray(r, dtype=np.float64) ** (self.p - 1.0) / self.lam


def control_from_adjoint(reg: RegularizerSpec, a: np.ndarray) -> np.ndarray:
    """Closed-form optimal control target; zero below the adjoint threshold.

    Batched over leading axes; the last axis is the state dimension.
    """
    a = np.asarray(a, dtype=np.float64)
    norm = np.linalg.norm(a, axis=-1, keepdims=True)
    safe = np.maximum(norm, reg.eps_adjoint)
    factor = reg.lam ** (1.0 / (reg.p - 1.0)) * safe ** (
        (2.0 - reg.p) / (reg.p - 1.0)
    )
    u = -factor * a
    return np.where(norm < reg.eps_adjoint, 0.0, u)


def check_pmp_optimality(reg: RegularizerSpec, a, u) -> float:
    """Stationarity residual || f'(||u||) u/||u|| + a ||; zero at the optimum."""
    a = np.asarray(a, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if a.shape != u.shape:
        raise ShapeError(f"adjoint shape {a.shape} != control shape {u.shape}")
    un = np.linalg.norm(u)
    if un == 0.0:
        return float(np.linalg.norm(a))
    grad_f = reg.fprime(un) * u / un
    return float(np.linalg.norm(grad_f + a))


def stochastic_coefficient(
    sched: InterpolantSchedule, ns: NoiseSchedule, t: float
) -> float:
    """(sigma^2 + 2 eta) / (2 sigma eta) at the clipped time."""
    corr, _, sig = sde_step_coeffs(sched, ns, t)
    if sig == 0.0:
        raise SingularityError(f"sigma({t}) = 0 on the matching window")
    # corr = sigma^2 / (2 eta) so the coefficient is (corr + 1) / sigma
    return (corr + 1.0) / sig


# ---------------------------------------------------------------------------
# Matching losses.  The batch variants consume stacked states
# (N+1, m, dim) plus the adjoint window (T, m, dim) and pair the adjoint at
# grid time t_k with the velocities consumed at the step start t_{k-1};
# they return (loss, param_grads) with the mean taken over window x batch.
# ---------------------------------------------------------------------------


def _window_indices(times, window):
    n = times.shape[0] - 1
    t_count = window.shape[0]
    start = n - t_count + 1  # grid index of window[0]
    return [start + i for i in range(t_count)]


def am_det_loss_and_grad(
    v_theta: VelocityField,
    v_base: VelocityField,
    times: np.ndarray,
    states: np.ndarray,
    window: np.ndarray,
    adjoints: np.ndarray,
    reg: RegularizerSpec,
    cond=None,
    want_grad: bool = True,
):
    m = states.shape[1]
    t_count = adjoints.shape[0]
    grads = zero_grads_like(v_theta) if want_grad else None
    total = 0.0
    denom = float(t_count * m)
    for i, k in enumerate(_window_indices(times, window)):
        x = states[k - 1]
        t = times[k - 1]
        target = control_from_adjoint(reg, adjoints[i])
        vb = v_base.forward(x, t, cond)
        if want_grad:
            vt, tape = v_theta.forward_tape(x, t, cond)
        else:
            vt = v_theta.forward(x, t, cond)
        resid = (vt - vb) - target
        total += float(np.sum(resid * resid))
        if want_grad:
            g, _ = tape.backward(2.0 * resid / denom)
            accumulate_grads(grads, g)
    return total / denom, grads


def am_sde_loss_and_grad(
    v_theta: VelocityField,
    v_base: VelocityField,
    sched: InterpolantSchedule,
    ns: NoiseSchedule,
    times: np.ndarray,
    states: np.ndarray,
    window: np.ndarray,
    adjoints: np.ndarray,
    reg: RegularizerSpec,
    cond=None,
    want_grad: bool = True,
):
    if reg.p != 2.0:
        raise ConfigError("stochastic adjoint matching supports p = 2 only")
    m = states.shape[1]
    t_count = adjoints.shape[0]
    grads = zero_grads_like(v_theta) if want_grad else None
    total = 0.0
    denom = float(t_count * m)
    for i, k in enumerate(_window_indices(times, window)):
        x = states[k - 1]
        t = times[k - 1]
        coef = stochastic_coefficient(sched, ns, t)
        _, _, sig = sde_step_coeffs(sched, ns, t)
        target = sig * control_from_adjoint(reg, adjoints[i])  # = -sig*lam*a
        vb = v_base.forward(x, t, cond)
        if want_grad:
            vt, tape = v_theta.forward_tape(x, t, cond)
        else:
            vt = v_theta.forward(x, t, cond)
        resid = coef * (vt - vb) - target
        total += float(np.sum(resid * resid))
        if want_grad:
            g, _ = tape.backward(2.0 * coef * resid / denom)
            accumulate_grads(grads, g)
    return total / denom, grads


def am_loss_deterministic(
    v_theta: VelocityField,
    v_base: VelocityField,
    traj: Trajectory,
    trace: AdjointTrace,
    reg: RegularizerSpec,
) -> float:
    loss, _ = am_det_loss_and_grad(
        v_theta, v_base, traj.times, traj.states[:, None, :],
        trace.window, trace.adjoints[:, None, :], reg,
        cond=traj.cond, want_grad=False,
    )
    return loss


def am_loss_stochastic(
    v_theta: VelocityField,
    v_base: VelocityField,
    sched: InterpolantSchedule,
    ns: NoiseSchedule,
    traj: Trajectory,
    trace: AdjointTrace,
    reg: RegularizerSpec,
) -> float:
    loss, _ = am_sde_loss_and_grad(
        v_theta, v_base, sched, ns, traj.times, traj.states[:, None, :],
        trace.window, trace.adjoints[:, None, :], reg,
        cond=traj.cond, want_grad=False,
    )
    return loss


# ---------------------------------------------------------------------------
# Direct reward-backpropagation baselines.
# ---------------------------------------------------------------------------


def draft_loss_and_grad(
    v_theta: VelocityField,
    times: np.ndarray,
    states: np.ndarray,
    reward,
    k: int,
    cond=None,
    want_grad: bool = True,
):
    """Reward backprop through the last k Euler steps.

    ``states`` is the detached (N+1, m, dim) trajectory batch sampled from
    the current model; the last k steps are re-run differentiably from the
    prefix state.  Loss is -mean reward(X_1).
    """
    n = times.shape[0] - 1
    if not 1 <= k <= n:
        raise ShapeError(f"k {k} not in [1, {n}]")
    m = states.shape[1]
    h = times[1] - times[0]
    x = states[n - k].copy()
    tapes = []
    for j in range(n - k, n):
        if want_grad:
            v, tape = v_theta.forward_tape(x, times[j], cond)
            tapes.append(tape)
        else:
            v = v_theta.forward(x, times[j], cond)
        x = x + h * v
    loss = -float(np.mean([reward.value(x[i]) for i in range(m)]))
    if not want_grad:
        return loss, None, x
    grads = zero_grads_like(v_theta)
    w = -np.stack([reward.grad(x[i]) for i in range(m)]) / m
    for tape in reversed(tapes):
        g, input_grad = tape.backward(h * w)
        accumulate_grads(grads, g)
        w = w + input_grad
    return loss, grads, x


def refl_loss_and_grad(
    v_theta: VelocityField,
    times: np.ndarray,
    states: np.ndarray,
    reward,
    k_window: int,
    rng: np.random.Generator,
    cond=None,
    want_grad: bool = True,
):
    """Reward at a one-step extrapolated terminal state.

    One step index is drawn uniformly from the last ``k_window`` steps; the
    terminal state is extrapolated as X_1 = X_t + (1 - t) v_theta(X_t, t)
    and only that single evaluation carries gradient.
    """
    n = times.shape[0] - 1
    if not 1 <= k_window <= n:
        raise ShapeError(f"k_window {k_window} not in [1, {n}]")
    m = states.shape[1]
    j = n - k_window + int(rng.integers(k_window))
    t = times[j]
    x = states[j]
    if want_grad:
        v, tape = v_theta.forward_tape(x, t, cond)
    else:
        v = v_theta.forward(x, t, cond)
    x1 = x + (1.0 - t) * v
    loss = -float(np.mean([reward.value(x1[i]) for i in range(m)]))
    if not want_grad:
        return loss, None, x1
    w = -np.stack([reward.grad(x1[i]) for i in range(m)]) / m
    grads, _ = tape.backward((1.0 - t) * w)
    return loss, grads, x1


def draft_loss(v_theta, traj: Trajectory, reward, k: int) -> float:
    loss, _, _ = draft_loss_and_grad(
        v_theta, traj.times, traj.states[:, None, :], reward, k,
        cond=traj.cond, want_grad=False,
    )
    return loss


def refl_loss(
    v_theta, traj: Trajectory, reward, k_window: int, rng: np.random.Generator
) -> float:
    loss, _, _ = refl_loss_and_grad(
        v_theta, traj.times, traj.states[:, None, :], reward, k_window, rng,
        cond=traj.cond, want_grad=False,
    )
    return loss
