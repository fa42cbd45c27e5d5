import numpy as np
import pytest

from flowam.checkpoint import Checkpoint
from flowam.errors import ConfigError, NonFiniteError
from flowam.nnet import NetConfig, VelocityField
from flowam.oracles import GaussianFlowSpec, rf_velocity
from flowam.tasks import ConstantReward, Gaussian1D, QuadraticWell
from flowam.train import (
    OptimizerState,
    TrainConfig,
    finetune,
    optimizer_step,
    pretrain,
    warmup_lr,
    write_csv,
)


def small_cfg(**kw):
    defaults = dict(
        method="ode-am", n_steps=10, n_truncate=5, batch=16,
        iterations=5, lr=1e-3, warmup=2, grad_clip=1.0, seed=0,
    )
    defaults.update(kw)
    return TrainConfig(**defaults)


# -- config validation ---------------------------------------------------------


def test_train_config_validation():
    with pytest.raises(ConfigError):
        small_cfg(method="nope")
    with pytest.raises(ConfigError):
        small_cfg(n_truncate=11)
    with pytest.raises(ConfigError):
        small_cfg(n_truncate=0)
    with pytest.raises(ConfigError):
        small_cfg(lr=0.0)
    with pytest.raises(ConfigError):
        small_cfg(batch=0)


# -- optimizer -----------------------------------------------------------------


def test_zero_grads_leave_params_unchanged():
    opt = OptimizerState.init(4)
    params = np.array([1.0, -2.0, 0.5, 3.0])
    out = optimizer_step(opt, params, np.zeros(4), clip=1.0, lr=0.1)
    np.testing.assert_array_equal(out, params)


def test_adam_first_step_hand_value():
    opt = OptimizerState.init(1)
    params = np.array([0.0])
    out = optimizer_step(opt, params, np.array([1.0]), clip=0.0, lr=0.1)
    # bias-corrected first step: -lr * g / (|g| + eps)
    assert out[0] == pytest.approx(-0.1 / (1.0 + opt.eps), rel=1e-12)


def test_global_norm_clipping():
    opt = OptimizerState.init(2)
    g = np.array([60.0, 80.0])  # norm 100
    optimizer_step(opt, np.zeros(2), g, clip=1.0, lr=0.1)
    # after clipping, the accumulated first moment reflects unit-norm grads
    assert np.linalg.norm(opt.m / (1.0 - opt.beta1)) == pytest.approx(1.0)


def test_optimizer_rejects_nonfinite():
    opt = OptimizerState.init(1)
    with pytest.raises(NonFiniteError):
        optimizer_step(opt, np.zeros(1), np.array([np.nan]), clip=1.0, lr=0.1)


def test_warmup_schedule():
    assert warmup_lr(1.0, 4, 0) == pytest.approx(0.25)
    assert warmup_lr(1.0, 4, 3) == pytest.approx(1.0)
    assert warmup_lr(1.0, 4, 100) == 1.0
    assert warmup_lr(1.0, 0, 0) == 1.0


# -- pretraining ----------------------------------------------------------------


def test_zero_iterations_returns_initialization():
    cfg = small_cfg(iterations=0)
    net = NetConfig(state_dim=1, hidden=(8,))
    ckpt, rows = pretrain(cfg, Gaussian1D(0.0, 1.0), net)
    init = VelocityField.init(net, seed=cfg.seed)
    np.testing.assert_array_equal(ckpt.vf.params_flat(), init.params_flat())
    assert rows == []


def test_pretrain_is_reproducible():
    cfg = small_cfg(iterations=20)
    net = NetConfig(state_dim=1, hidden=(8,))
    a, rows_a = pretrain(cfg, Gaussian1D(0.0, 1.0), net)
    b, rows_b = pretrain(cfg, Gaussian1D(0.0, 1.0), net)
    np.testing.assert_array_equal(a.vf.params_flat(), b.vf.params_flat())
    assert rows_a == rows_b


def test_pretrain_loss_decreases_moving_average():
    net = NetConfig(state_dim=1, hidden=(16, 16))
    curves = []
    for seed in (0, 1, 2):
        cfg = small_cfg(iterations=400, batch=64, lr=1e-3, warmup=20, seed=seed,
                        grad_clip=10.0)
        _, rows = pretrain(cfg, Gaussian1D(0.0, 1.0), net)
        curves.append([r["loss"] for r in rows])
    mean_curve = np.mean(curves, axis=0)
    smoothed = np.convolve(mean_curve, np.ones(50) / 50, mode="valid")
    assert smoothed[-1] < smoothed[0]
    # mostly non-increasing: allow small upward wiggles only
    assert np.all(np.diff(smoothed) < 0.05 * smoothed[0])


def test_pretrained_field_matches_gaussian_closed_form(base1d_ckpt):
    # standard-normal data: the exact velocity is the linear Gaussian-flow field
    spec = GaussianFlowSpec(mu=0.0, sigma=1.0)
    errs = []
    for t in np.linspace(0.1, 0.9, 9):
        xs = np.linspace(-2.0, 2.0, 21)
        pred = base1d_ckpt.vf.forward(xs[:, None], t)[:, 0]
        errs.append(pred - rf_velocity(spec, xs, t))
    rms = float(np.sqrt(np.mean(np.concatenate(errs) ** 2)))
    assert rms < 0.05


# -- fine-tuning -----------------------------------------------------------------


def make_base(seed=0, dim=1):
    net = NetConfig(state_dim=dim, hidden=(12, 12))
    return Checkpoint(vf=VelocityField.init(net, seed=seed), seed=seed, iteration=0)


def test_constant_reward_leaves_parameters_unchanged():
    # zero adjoint -> zero target -> zero residual gradient at initialization
    base = make_base()
    cfg = small_cfg(iterations=4)
    ckpt, rows, _ = finetune(cfg, base, ConstantReward(5.0))
    np.testing.assert_array_equal(ckpt.vf.params_flat(), base.vf.params_flat())
    assert all(r["loss"] == 0.0 for r in rows)


def test_finetune_metrics_reproducible():
    base = make_base(seed=2)
    reward = QuadraticWell(center=np.array([1.0]), curvature=1.0)
    cfg = small_cfg(iterations=6, method="ode-am")
    _, rows_a, _ = finetune(cfg, base, reward)
    _, rows_b, _ = finetune(cfg, base, reward)
    assert rows_a == rows_b


def test_truncation_prefix_same_first_iteration_trajectories():
    # runs differing only in T sample identical trajectories; only the loss
    # window differs, so first-iteration reward statistics agree exactly
    base = make_base(seed=3)
    reward = QuadraticWell(center=np.array([1.0]), curvature=1.0)
    _, rows_t1, _ = finetune(small_cfg(iterations=1, n_truncate=1), base, reward)
    _, rows_t5, _ = finetune(small_cfg(iterations=1, n_truncate=5), base, reward)
    assert rows_t1[0]["reward_mean"] == rows_t5[0]["reward_mean"]
    assert rows_t1[0]["reward_std"] == rows_t5[0]["reward_std"]
    assert rows_t1[0]["loss"] != rows_t5[0]["loss"]


def test_stop_gradient_discipline():
    # perturbing the detached buffers (states/adjoints) changes the gradient
    # input data, but the gradient computation itself never reaches back into
    # simulation: finetune with an ODE method uses no rng besides sampling, so
    # two identical calls yield identical parameter updates
    base = make_base(seed=5)
    reward = QuadraticWell(center=np.array([0.5]), curvature=2.0)
    cfg = small_cfg(iterations=3, method="sde-am", reg_p=2.0, noise="memoryless")
    a, _, _ = finetune(cfg, base, reward)
    b, _, _ = finetune(cfg, base, reward)
    np.testing.assert_array_equal(a.vf.params_flat(), b.vf.params_flat())


def test_sde_am_requires_quadratic():
    base = make_base()
    with pytest.raises(ConfigError):
        finetune(
            small_cfg(method="sde-am", reg_p=4.0), base, ConstantReward()
        )


def test_all_methods_run_one_iteration():
    base = make_base(seed=7)
    reward = QuadraticWell(center=np.array([1.0]), curvature=1.0)
    for method in ("ode-am", "sde-am", "draft", "refl"):
        cfg = small_cfg(iterations=2, method=method, k_window=3)
        ckpt, rows, timings = finetune(cfg, base, reward)
        assert len(rows) == 2 and len(timings) == 2
        assert np.all(np.isfinite(ckpt.vf.params_flat()))


def test_write_csv_deterministic(tmp_path):
    rows = [{"iter": 0, "loss": 0.1234567890123}, {"iter": 1, "loss": 2.0}]
    p1, p2 = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    write_csv(rows, ("iter", "loss"), p1)
    write_csv(rows, ("iter", "loss"), p2)
    assert open(p1, "rb").read() == open(p2, "rb").read()
    text = open(p1).read()
    assert text.splitlines()[0] == "iter,loss"
    assert "0.1234567890123" in text
