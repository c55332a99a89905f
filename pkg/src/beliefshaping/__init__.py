"""Belief-space opponent shaping for hidden-role games.

Library layout:

- params / nets / gradcheck: flat parameter storage, hand-derived MLP
  gradients, finite-difference oracles.
- beliefs: differentiable softmax-Bayes updates, chain Jacobians, and the
  exact reverse sweep used for shaping gradients.
- policy / critic / proxy: role-conditioned policy, belief critic, and the
  canonical/estimated observation proxies.
- envs: the five-player hidden-role deduction game and the toroidal coin game.
- rollout / shaping / bbm / training: on-policy collection, the k-step
  shaping correction, the Bayes-factor intrinsic-reward baseline, and PPO.
- bounds: empirical verification of the Lipschitz/error/Jacobian bounds.
- experiment / cli: configs, seeded sweeps, metrics, and the command line.
"""

__version__ = "0.1.0"

from .beliefs import (
    BeliefChainTape,
    chain_backward,
    chain_jacobian_closed,
    chain_jacobian_naive,
    operator_norm_1to1,
    softmax_bayes_step,
    softmax_jacobian,
    unroll_chain,
)
from .nets import Adam, MlpSpec, init_mlp, mlp_backward, mlp_forward, register_mlp
from .gradcheck import finite_diff_grad, finite_diff_grad_array, max_rel_error
from .params import ParamVector, load_checkpoint, save_checkpoint

__all__ = [
    "Adam",
    "BeliefChainTape",
    "MlpSpec",
    "ParamVector",
    "chain_backward",
    "chain_jacobian_closed",
    "chain_jacobian_naive",
    "finite_diff_grad",
    "finite_diff_grad_array",
    "init_mlp",
    "load_checkpoint",
    "max_rel_error",
    "mlp_backward",
    "mlp_forward",
    "operator_norm_1to1",
    "register_mlp",
    "save_checkpoint",
    "softmax_bayes_step",
    "softmax_jacobian",
    "unroll_chain",
]
