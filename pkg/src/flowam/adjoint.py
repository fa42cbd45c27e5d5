"""Backward integration of the lean adjoint over a truncated terminal window.

The recursion is first-order Euler on the same uniform grid as the forward
pass, using vector-Jacobian products against the frozen base field only:

    a_{t-h} = a_t + h * a_t^T dv_base/dx (X_t, t)

with terminal condition a_1 = grad of the terminal cost at X_1.  The SDE
variant differentiates the corrected drift v + c (v - kappa x) with
c = sigma^2 / (2 eta), i.e. scales the VJP by (1 + c) and subtracts
c kappa a.  Traces are plain arrays: nothing downstream differentiates
through them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import Trajectory, sde_step_coeffs
from .errors import NonFiniteError, ShapeError
from .schedules import InterpolantSchedule, NoiseSchedule

BLOWUP_NORM = 1e12


@dataclass
class AdjointTrace:
    window: np.ndarray  # (T,) grid times, ascending, window[-1] == 1
    adjoints: np.ndarray  # (T, dim); adjoints[-1] == terminal_grad
    terminal_grad: np.ndarray


def _vjp(base, x, t, cond, w, sched, ns):
    out = base.input_vjp(x, t, cond, w)
    if ns is None:
        return out
    corr, kappa, _ = sde_step_coeffs(sched, ns, t)
    return (1.0 + corr) * out - corr * kappa * w


def lean_adjoint_batch(
    base,
    times: np.ndarray,
    states: np.ndarray,
    terminal_grads: np.ndarray,
    n_truncate: int,
    cond=None,
    sched: Optional[InterpolantSchedule] = None,
    ns: Optional[NoiseSchedule] = None,
):
    """Backward Euler adjoint for a stacked batch.

    states: (N+1, m, dim); terminal_grads: (m, dim).  Returns
    (window_times (T,), adjoints (T, m, dim)) with window_times ascending.
    """
    n = times.shape[0] - 1
    if not 1 <= n_truncate <= n:
        raise ShapeError(f"n_truncate {n_truncate} not in [1, {n}]")
    tg = np.atleast_2d(np.asarray(terminal_grads, dtype=np.float64))
    if tg.shape != states.shape[1:]:
        raise ShapeError(f"terminal grads {tg.shape} != states {states.shape[1:]}")
    if not np.all(np.isfinite(tg)):
        raise NonFiniteError("non-finite terminal gradient")
    h = times[1] - times[0]
    adjoints = np.empty((n_truncate,) + tg.shape)
    adjoints[-1] = tg
    a = tg
    for j in range(1, n_truncate):
        # differentiate at the step start, the point the forward step
        # evaluated the drift at, so the trace is the exact pathwise
        # gradient of the discrete flow map
        k = n - j
        a = a + h * _vjp(base, states[k], times[k], cond, a, sched, ns)
        if np.max(np.abs(a)) > BLOWUP_NORM:
            raise NonFiniteError(f"adjoint blow-up at grid index {k - 1}")
        adjoints[n_truncate - 1 - j] = a
    return times[n - n_truncate + 1 :], adjoints


def lean_adjoint(
    base, traj: Trajectory, terminal_grad, n_truncate: int
) -> AdjointTrace:
    """Truncated lean adjoint along one trajectory (deterministic dynamics)."""
    tg = np.asarray(terminal_grad, dtype=np.float64)
    window, adj = lean_adjoint_batch(
        base, traj.times, traj.states[:, None, :], tg[None, :], n_truncate,
        cond=traj.cond,
    )
    return AdjointTrace(window=window, adjoints=adj[:, 0, :], terminal_grad=tg)


def lean_adjoint_sde(
    base,
    sched: InterpolantSchedule,
    ns: NoiseSchedule,
    traj: Trajectory,
    terminal_grad,
    n_truncate: int,
) -> AdjointTrace:
    """Lean adjoint against the noise-corrected drift of the SDE sampler."""
    tg = np.asarray(terminal_grad, dtype=np.float64)
    window, adj = lean_adjoint_batch(
        base, traj.times, traj.states[:, None, :], tg[None, :], n_truncate,
        cond=traj.cond, sched=sched, ns=ns,
    )
    return AdjointTrace(window=window, adjoints=adj[:, 0, :], terminal_grad=tg)


def integrate_from(field, x, times, start_index: int, cond=None) -> np.ndarray:
    """Euler-integrate the ODE from grid index start_index to t=1."""
    x = np.asarray(x, dtype=np.float64).copy()
    h = times[1] - times[0]
    for k in range(start_index, times.shape[0] - 1):
        v = field.forward(x, times[k], cond) if hasattr(field, "forward") else field(
            x, times[k], cond
        )
        x = x + h * v
    return x


def verify_adjoint_fd(base, traj: Trajectory, reward, t_index: int, fd_step=1e-4):
    """Check the lean adjoint against perturb-and-reintegrate finite differences.

    The trajectory must come from the base field itself (zero control); then
    the lean adjoint at t_index should equal the pathwise gradient of the
    terminal cost g(X_1) = -reward(X_1) w.r.t. X_{t_index}.
    Returns (adjoint, fd_gradient, max_rel_err).
    """
    n = traj.n_steps
    if not 1 <= t_index <= n:
        raise ShapeError(f"t_index {t_index} not in [1, {n}]")
    terminal_grad = -np.asarray(reward.grad(traj.states[-1]), dtype=np.float64)
    n_truncate = n - t_index + 1
    trace = lean_adjoint(base, traj, terminal_grad, n_truncate)
    # adjoint entry at grid time t_index
    idx = t_index - (n - n_truncate + 1)
    adjoint = trace.adjoints[idx]

    x = traj.states[t_index]
    dim = x.shape[-1]
    fd = np.empty(dim)
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = fd_step
        g_plus = -float(reward.value(integrate_from(base, x + e, traj.times, t_index,
                                                    traj.cond)))
        g_minus = -float(reward.value(integrate_from(base, x - e, traj.times, t_index,
                                                     traj.cond)))
        fd[j] = (g_plus - g_minus) / (2.0 * fd_step)
    scale = max(np.linalg.norm(fd), 1e-12)
    max_rel_err = float(np.max(np.abs(adjoint - fd)) / scale)
    return adjoint, fd, max_rel_err
