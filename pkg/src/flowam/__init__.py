"""Flow-matching pretraining and adjoint-based reward fine-tuning, desk scale.

Numpy-only research library: small MLP velocity fields trained by flow
matching on synthetic distributions, then fine-tuned against differentiable
rewards via truncated adjoint matching (deterministic and stochastic) with
polynomial control regularization, cross-checked against closed-form
control-theory references.
"""

from .config import TOOL_VERSION

__version__ = TOOL_VERSION
