"""Pretraining and fine-tuning loops with Adam, warmup, and clipping.

Pretraining regresses the network onto the interpolant slope
beta'(t) X_0 + alpha'(t) X_1 at random times.  Fine-tuning runs the
sample / backward-adjoint / loss / update cycle against a frozen copy of
the base field; trajectory states and adjoints are plain detached arrays,
so no gradient ever flows into simulation.

Metrics rows are deterministic given (config, seed); per-phase wall-clock
durations are tracked separately so metrics files stay byte-reproducible.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .adjoint import lean_adjoint_batch
from .checkpoint import Checkpoint
from .control import (
    RegularizerSpec,
    am_det_loss_and_grad,
    am_sde_loss_and_grad,
    draft_loss_and_grad,
    refl_loss_and_grad,
)
from .dynamics import sample_batch, sample_seed
from .errors import ConfigError, NonFiniteError
from .nnet import NetConfig, VelocityField, grads_flat
from .schedules import NOISE_SCHEDULES, SCHEDULES, InterpolantSchedule, NoiseSchedule

METHODS = ("ode-am", "sde-am", "draft", "refl")

METRICS_COLUMNS = ("iter", "loss", "reward_mean", "reward_std")
TIMING_COLUMNS = ("iter", "phase_sim_ms", "phase_adj_ms", "phase_upd_ms")


@dataclass(frozen=True)
class TrainConfig:
    method: str = "ode-am"
    n_steps: int = 50
    n_truncate: int = 10
    batch: int = 64
    iterations: int = 300
    lr: float = 1e-4
    warmup: int = 10
    grad_clip: float = 1.0
    reg_p: float = 2.0
    reg_lam: float = 1.0
    noise: str = "memoryless"
    schedule: str = "linear"
    seed: int = 0
    k_window: int = 1
    eval_every: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method}")
        if not 1 <= self.n_truncate <= self.n_steps:
            raise ConfigError(
                f"n_truncate must be in [1, n_steps], got {self.n_truncate}"
            )
        if self.lr <= 0.0:
            raise ConfigError(f"learning rate must be > 0, got {self.lr}")
        if self.batch < 1:
            raise ConfigError(f"batch must be >= 1, got {self.batch}")

    @property
    def regularizer(self) -> RegularizerSpec:
        return RegularizerSpec(p=self.reg_p, lam=self.reg_lam)


@dataclass
class OptimizerState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8

    @classmethod
    def init(cls, n_params: int) -> "OptimizerState":
        return cls(m=np.zeros(n_params), v=np.zeros(n_params))


def warmup_lr(lr: float, warmup: int, iteration: int) -> float:
    """Linear ramp over the first `warmup` iterations, constant afterwards."""
    if warmup <= 0:
        return lr
    return lr * min(1.0, (iteration + 1) / warmup)


def optimizer_step(
    opt: OptimizerState,
    params: np.ndarray,
    grads: np.ndarray,
    clip: float,
    lr: float,
) -> np.ndarray:
    """Global-norm clip followed by a bias-corrected Adam update."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != params.shape:
        raise ConfigError(f"grad shape {grads.shape} != param shape {params.shape}")
    if not np.all(np.isfinite(grads)):
        raise NonFiniteError("non-finite gradient")
    norm = float(np.linalg.norm(grads))
    if clip > 0.0 and norm > clip:
        grads = grads * (clip / norm)
    opt.step += 1
    opt.m = opt.beta1 * opt.m + (1.0 - opt.beta1) * grads
    opt.v = opt.beta2 * opt.v + (1.0 - opt.beta2) * grads * grads
    mhat = opt.m / (1.0 - opt.beta1**opt.step)
    vhat = opt.v / (1.0 - opt.beta2**opt.step)
    out = params - lr * mhat / (np.sqrt(vhat) + opt.eps)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("non-finite parameters after update")
    return out


def _iteration_seed(base_seed: int, iteration: int) -> int:
    return int(np.random.SeedSequence([base_seed, iteration]).generate_state(1)[0])


def pretrain(
    cfg: TrainConfig,
    dist,
    net_cfg: NetConfig,
    sched: InterpolantSchedule = None,
):
    """Flow-matching pretraining; returns (Checkpoint, metrics rows).

    Each iteration draws (X_0 ~ N(0, I), X_1 ~ data, t ~ U[0, 1]) and
    regresses v(xbar_t, t) onto beta'(t) X_0 + alpha'(t) X_1.
    """
    sched = sched if sched is not None else SCHEDULES[cfg.schedule]
    vf = VelocityField.init(net_cfg, seed=cfg.seed)
    opt = OptimizerState.init(vf.n_params)
    params = vf.params_flat()
    rows = []
    for it in range(cfg.iterations):
        rng = sample_seed(cfg.seed, it)
        x0 = rng.standard_normal((cfg.batch, net_cfg.state_dim))
        x1 = dist.sample(cfg.batch, rng)
        t = rng.uniform(0.0, 1.0, size=cfg.batch)
        a = sched.alpha(t)[:, None]
        b = sched.beta(t)[:, None]
        xbar = b * x0 + a * x1
        target = sched.beta_dot(t)[:, None] * x0 + sched.alpha_dot(t)[:, None] * x1
        try:
            out, tape = vf.forward_tape(xbar, t)
            resid = out - target
            loss = float(np.mean(np.sum(resid * resid, axis=1)))
            grads, _ = tape.backward(2.0 * resid / cfg.batch)
            params = optimizer_step(
                opt, params, grads_flat(grads), cfg.grad_clip,
                warmup_lr(cfg.lr, cfg.warmup, it),
            )
            vf.set_params_flat(params)
        except NonFiniteError as e:
            raise NonFiniteError(f"pretraining aborted at iteration {it}: {e}") from e
        rows.append({"iter": it, "loss": loss, "reward_mean": 0.0, "reward_std": 0.0})
    return Checkpoint(vf=vf, seed=cfg.seed, iteration=cfg.iterations), rows


def finetune(cfg: TrainConfig, base_ckpt: Checkpoint, reward):
    """Reward fine-tuning from a frozen base field.

    Returns (Checkpoint, metrics rows, timing rows).  The sampler follows
    the method: the stochastic matcher simulates the noise-corrected SDE,
    everything else the deterministic flow.
    """
    sched = SCHEDULES[cfg.schedule]
    ns = NOISE_SCHEDULES[cfg.noise]
    if cfg.method == "sde-am" and cfg.reg_p != 2.0:
        raise ConfigError("sde-am requires p = 2")
    base = base_ckpt.vf
    vf = base.copy()
    opt = OptimizerState.init(vf.n_params)
    params = vf.params_flat()
    reg = cfg.regularizer
    stochastic = cfg.method == "sde-am"
    rows, timings = [], []
    for it in range(cfg.iterations):
        it_seed = _iteration_seed(cfg.seed, it)
        t0 = time.perf_counter()
        trajs = sample_batch(
            vf, cfg.n_steps, cfg.batch, it_seed,
            sched=sched if stochastic else None,
            ns=ns if stochastic else None,
            workers=cfg.workers,
        )
        times = trajs[0].times
        states = np.stack([tr.states for tr in trajs], axis=1)  # (N+1, m, dim)
        x1 = states[-1]
        rewards = np.array([reward.value(x1[i]) for i in range(cfg.batch)])
        t1 = time.perf_counter()

        if cfg.method in ("ode-am", "sde-am"):
            terminal_grads = -np.stack([reward.grad(x1[i]) for i in range(cfg.batch)])
            window, adjoints = lean_adjoint_batch(
                base, times, states, terminal_grads, cfg.n_truncate,
                sched=sched if stochastic else None,
                ns=ns if stochastic else None,
            )
        t2 = time.perf_counter()

        try:
            if cfg.method == "ode-am":
                loss, grads = am_det_loss_and_grad(
                    vf, base, times, states, window, adjoints, reg
                )
            elif cfg.method == "sde-am":
                loss, grads = am_sde_loss_and_grad(
                    vf, base, sched, ns, times, states, window, adjoints, reg
                )
            elif cfg.method == "draft":
                loss, grads, _ = draft_loss_and_grad(
                    vf, times, states, reward, cfg.k_window
                )
            else:
                rng = sample_seed(it_seed, cfg.batch)  # off the sample streams
                loss, grads, _ = refl_loss_and_grad(
                    vf, times, states, reward, cfg.k_window, rng
                )
            params = optimizer_step(
                opt, params, grads_flat(grads), cfg.grad_clip,
                warmup_lr(cfg.lr, cfg.warmup, it),
            )
            vf.set_params_flat(params)
        except NonFiniteError as e:
            raise NonFiniteError(f"fine-tuning aborted at iteration {it}: {e}") from e
        t3 = time.perf_counter()

        rows.append(
            {
                "iter": it,
                "loss": loss,
                "reward_mean": float(np.mean(rewards)),
                "reward_std": float(np.std(rewards)),
            }
        )
        timings.append(
            {
                "iter": it,
                "phase_sim_ms": (t1 - t0) * 1e3,
                "phase_adj_ms": (t2 - t1) * 1e3,
                "phase_upd_ms": (t3 - t2) * 1e3,
            }
        )
    return Checkpoint(vf=vf, seed=cfg.seed, iteration=cfg.iterations), rows, timings


def write_csv(rows, columns, path: str) -> None:
    """Plain CSV with shortest round-trip float formatting (deterministic)."""
    import os
    import tempfile

    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(",".join(columns) + "\n")
            for row in rows:
                f.write(
                    ",".join(
                        repr(row[c]) if isinstance(row[c], float) else str(row[c])
                        for c in columns
                    )
                    + "\n"
                )
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
