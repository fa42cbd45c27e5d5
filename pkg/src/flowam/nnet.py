"""Minimal feed-forward velocity network with hand-rolled reverse-mode diff.

The network maps (state, time, condition label) to a velocity of the same
dimension as the state.  Two derivative primitives are exposed:

* ``input_vjp`` -- w^T (dv/dx), the contraction the lean adjoint recursion
  consumes at every backward step;
* ``GradientTape.backward`` -- cotangent propagation to parameter gradients
  for loss minimization.

Everything is float64 numpy.  No general-purpose autodiff: the architecture
is a fixed MLP over [state, sinusoidal time features, one-hot condition].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NonFiniteError, ShapeError

_ACTIVATIONS = ("silu", "tanh", "identity")


def _silu(z):
    s = 1.0 / (1.0 + np.exp(-z))
    return z * s


def _silu_prime(z):
    s = 1.0 / (1.0 + np.exp(-z))
    return s * (1.0 + z * (1.0 - s))


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "silu":
        return _silu(z)
    if name == "tanh":
        return np.tanh(z)
    return z


def _act_prime(name: str, z: np.ndarray) -> np.ndarray:
    if name == "silu":
        return _silu_prime(z)
    if name == "tanh":
        return 1.0 - np.tanh(z) ** 2
    return np.ones_like(z)


@dataclass(frozen=True)
class NetConfig:
    state_dim: int
    hidden: tuple = (64, 64, 64)
    activation: str = "silu"
    time_features: int = 8
    n_cond: int = 0

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")

    @property
    def input_dim(self) -> int:
        return self.state_dim + self.time_features + self.n_cond

    def to_dict(self) -> dict:
        return {
            "state_dim": self.state_dim,
            "hidden": list(self.hidden),
            "activation": self.activation,
            "time_features": self.time_features,
            "n_cond": self.n_cond,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        return cls(
            state_dim=int(d["state_dim"]),
            hidden=tuple(int(h) for h in d["hidden"]),
            activation=str(d["activation"]),
            time_features=int(d["time_features"]),
            n_cond=int(d["n_cond"]),
        )


def time_embedding(t: np.ndarray, n_features: int) -> np.ndarray:
    """Sinusoidal features: sin/cos pairs at frequencies pi * 2^k."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    feats = np.empty((t.shape[0], n_features), dtype=np.float64)
    for j in range(n_features):
        freq = np.pi * (2.0 ** (j // 2))
        if j % 2 == 0:
            feats[:, j] = np.sin(freq * t)
        else:
            feats[:, j] = np.cos(freq * t)
    return feats


class GradientTape:
    """Recorded activations for one forward pass; backward() may run once."""

    def __init__(self, vf: "VelocityField", layer_inputs, preacts):
        self._vf = vf
        self._layer_inputs = layer_inputs  # input to each linear layer, (n, in_l)
        self._preacts = preacts  # pre-activation of each hidden layer
        self._used = False

    def backward(self, cotangent: np.ndarray):
        """Propagate an output cotangent; returns (param_grads, input_grad).

        ``param_grads`` is a list of (dW, db) summed over the batch in
        ascending sample order; ``input_grad`` is w^T dv/dx per sample,
        restricted to the state slice of the input.
        """
        if self._used:
            raise RuntimeError("GradientTape.backward called twice")
        self._used = True
        vf = self._vf
        g = np.atleast_2d(np.asarray(cotangent, dtype=np.float64))
        if g.shape[1] != vf.cfg.state_dim:
            raise ShapeError(
                f"cotangent dim {g.shape[1]} != state_dim {vf.cfg.state_dim}"
            )
        grads = [None] * len(vf.weights)
        for l in range(len(vf.weights) - 1, -1, -1):
            h = self._layer_inputs[l]
            grads[l] = (g.T @ h, g.sum(axis=0))
            g = g @ vf.weights[l]
            if l > 0:
                g = g * _act_prime(vf.cfg.activation, self._preacts[l - 1])
        input_grad = g[:, : vf.cfg.state_dim]
        return grads, input_grad


class VelocityField:
    """MLP velocity field v(x, t, cond) with weights in float64."""

    def __init__(self, cfg: NetConfig, weights, biases):
        self.cfg = cfg
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.assert_finite()

    @classmethod
    def init(cls, cfg: NetConfig, seed: int = 0) -> "VelocityField":
        rng = np.random.default_rng(seed)
        dims = [cfg.input_dim, *cfg.hidden, cfg.state_dim]
        weights, biases = [], []
        for din, dout in zip(dims[:-1], dims[1:]):
            weights.append(rng.normal(0.0, np.sqrt(1.0 / din), size=(dout, din)))
            biases.append(np.zeros(dout))
        return cls(cfg, weights, biases)

    # -- parameter plumbing ------------------------------------------------

    def copy(self) -> "VelocityField":
        return VelocityField(
            self.cfg, [w.copy() for w in self.weights], [b.copy() for b in self.biases]
        )

    def params_flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def set_params_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params,):
            raise ShapeError(f"expected {self.n_params} params, got {flat.shape}")
        if not np.all(np.isfinite(flat)):
            raise NonFiniteError("non-finite parameter values")
        off = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = flat[off : off + w.size].reshape(w.shape)
            off += w.size
            self.biases[i] = flat[off : off + b.size].reshape(b.shape)
            off += b.size

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def assert_finite(self) -> None:
        for w, b in zip(self.weights, self.biases):
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NonFiniteError("non-finite network parameters")

    # -- forward / derivatives ----------------------------------------------

    def _features(self, x, t, cond):
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        x2 = np.atleast_2d(x)
        if x2.shape[1] != self.cfg.state_dim:
            raise ShapeError(
                f"state dim {x2.shape[1]} != configured {self.cfg.state_dim}"
            )
        n = x2.shape[0]
        parts = [x2]
        if self.cfg.time_features > 0:
            tt = np.broadcast_to(
                np.atleast_1d(np.asarray(t, dtype=np.float64)), (n,)
            )
            parts.append(time_embedding(tt, self.cfg.time_features))
        if self.cfg.n_cond > 0:
            onehot = np.zeros((n, self.cfg.n_cond))
            if cond is not None:
                idx = np.broadcast_to(np.atleast_1d(np.asarray(cond, dtype=int)), (n,))
                onehot[np.arange(n), idx] = 1.0
            parts.append(onehot)
        return np.concatenate(parts, axis=1), squeeze

    def _run(self, feats):
        layer_inputs, preacts = [], []
        h = feats
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            layer_inputs.append(h)
            z = h @ w.T + b
            if l < last:
                preacts.append(z)
                h = _act(self.cfg.activation, z)
            else:
                h = z
        return h, layer_inputs, preacts

    def forward(self, x, t, cond=None) -> np.ndarray:
        feats, squeeze = self._features(x, t, cond)
        out, _, _ = self._run(feats)
        return out[0] if squeeze else out

    def forward_tape(self, x, t, cond=None):
        feats, squeeze = self._features(x, t, cond)
        out, layer_inputs, preacts = self._run(feats)
        tape = GradientTape(self, layer_inputs, preacts)
        return (out[0] if squeeze else out), tape

    def input_vjp(self, x, t, cond, w) -> np.ndarray:
        """w^T (dv/dx) at (x, t, cond); batched over leading axis."""
        w = np.asarray(w, dtype=np.float64)
        squeeze = w.ndim == 1
        _, tape = self.forward_tape(x, t, cond)
        _, input_grad = tape.backward(np.atleast_2d(w))
        return input_grad[0] if squeeze else input_grad


def param_grad(
    vf: VelocityField,
    x,
    t,
    cond,
    loss_fn: Callable[[np.ndarray], tuple],
):
    """Gradient of a scalar loss of one forward batch w.r.t. parameters.

    ``loss_fn`` maps the (n, state_dim) batch output to
    ``(scalar_loss, dloss_doutput)``.  Returns (loss, grads) where grads
    matches the (W, b) layer structure.
    """
    out, tape = vf.forward_tape(x, t, cond)
    loss, dout = loss_fn(np.atleast_2d(out))
    if not np.isfinite(loss):
        raise NonFiniteError(f"loss is not finite: {loss}")
    grads, _ = tape.backward(dout)
    for dw, db in grads:
        if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
            raise NonFiniteError("non-finite gradient entries")
    return float(loss), grads


def grads_flat(grads) -> np.ndarray:
    parts = []
    for dw, db in grads:
        parts.append(dw.ravel())
        parts.append(db.ravel())
    return np.concatenate(parts)


def zero_grads_like(vf: VelocityField):
    return [
        (np.zeros_like(w), np.zeros_like(b))
        for w, b in zip(vf.weights, vf.biases)
    ]


def accumulate_grads(total, grads, scale: float = 1.0):
    for (tw, tb), (dw, db) in zip(total, grads):
        tw += scale * dw
        tb += scale * db
    return total
