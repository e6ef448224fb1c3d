"""Soft actor-critic online trainer for the heterogeneous bridge.

The critic bootstraps through next actions drawn from the composite policy
(so the frozen offline policy keeps contributing proposals), and the actor
trains on a gradient-stopped pseudo-target built from the critic's action
gradient. The entropy coefficient is auto-tuned toward a target entropy of
minus the action dimensionality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numcore
from .bridge import PolicySet, composite_act_batch
from .distributions import (
    LOG_2PI,
    LOG_STD_MAX,
    LOG_STD_MIN,
    GaussianActor,
    squash_mean,
    squash_mean_grad,
)
from .numcore import AdamState, MlpGrads, MlpParams
from .replay import Batch


@dataclass
class SacHyper:
    discount: float = 0.99
    target_entropy: float = -1.0  # conventionally -act_dim

    def __post_init__(self):
        if not 0.0 < self.discount < 1.0:
            raise ValueError(f"discount must lie in (0, 1), got {self.discount}")


@dataclass
class SacNets:
    q1: MlpParams
    q2: MlpParams
    q1_target: MlpParams
    q2_target: MlpParams
    actor: GaussianActor
    log_ent_coef: np.ndarray  # one trainable scalar, stored as shape (1,)

    @classmethod
    def init(
        cls,
        obs_dim: int,
        act_dim: int,
        hidden: list[int],
        action_low: np.ndarray,
        action_high: np.ndarray,
        rng: np.random.Generator,
    ) -> "SacNets":
        critic_sizes = [obs_dim + act_dim] + list(hidden) + [1]
        q1 = MlpParams.init(critic_sizes, rng)
        q2 = MlpParams.init(critic_sizes, rng)
        actor = GaussianActor.init(obs_dim, act_dim, hidden, action_low, action_high, rng)
        return cls(q1, q2, q1.copy(), q2.copy(), actor, np.zeros(1))

    @property
    def ent_coef(self) -> float:
        return float(np.exp(self.log_ent_coef[0]))


@dataclass
class SacOptStates:
    q1: AdamState
    q2: AdamState
    actor_net: AdamState
    actor_log_std: AdamState
    ent_coef: AdamState

    @classmethod
    def for_nets(cls, nets: SacNets) -> "SacOptStates":
        return cls(
            AdamState.for_params(nets.q1),
            AdamState.for_params(nets.q2),
            AdamState.for_params(nets.actor.net),
            AdamState.for_size(nets.actor.log_std.size),
            AdamState.for_size(1),
        )


# ---------------------------------------------------------------------------
# Critic loss
# ---------------------------------------------------------------------------


def sac_critic_targets(
    nets: SacNets,
    batch: Batch,
    gamma: float,
    policy_set: PolicySet,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """TD targets with composite next actions.

    Next actions come from the composite policy (selection by the live
    critics); their value is the min of the target critics, minus the
    entropy bonus for actions the trainable policy produced. Frozen-member
    actions carry no entropy term. Returns (targets, next_actions, sources).
    """
    next_actions, chosen, _ = composite_act_batch(
        policy_set, (nets.q1, nets.q2), batch.next_obs, rng, explore=True
    )
    sa_next = np.concatenate([batch.next_obs, next_actions], axis=1)
    next_q = np.minimum(
        numcore.mlp_value(nets.q1_target, sa_next)[:, 0],
        numcore.mlp_value(nets.q2_target, sa_next)[:, 0],
    )
    trainable = np.array([not m.frozen for m in policy_set.members])
    entropy_mask = trainable[chosen].astype(np.float64)
    log_probs = nets.actor.log_prob_batch(batch.next_obs, next_actions)
    next_value = next_q - nets.ent_coef * entropy_mask * log_probs
    targets = batch.rewards + gamma * (1.0 - batch.dones) * next_value
    return targets, next_actions, chosen


def sac_critic_objective(
    q1: MlpParams, q2: MlpParams, batch: Batch, targets: np.ndarray
) -> tuple[float, MlpGrads, MlpGrads]:
    """Mean squared error of both critics against fixed targets."""
    sa = np.concatenate([batch.obs, batch.actions], axis=1)
    q1_out, tape1 = numcore.mlp_forward(q1, sa)
    q2_out, tape2 = numcore.mlp_forward(q2, sa)
    d1 = q1_out[:, 0] - targets
    d2 = q2_out[:, 0] - targets
    n = len(batch)
    loss = float((d1 * d1 + d2 * d2).mean())
    g1 = numcore.mlp_backward(q1, tape1, (2.0 * d1 / n)[:, None])
    g2 = numcore.mlp_backward(q2, tape2, (2.0 * d2 / n)[:, None])
    return loss, g1, g2


def sac_critic_loss(
    nets: SacNets,
    batch: Batch,
    gamma: float,
    policy_set: PolicySet,
    rng: np.random.Generator,
) -> tuple[float, MlpGrads, MlpGrads, np.ndarray]:
    targets, _, _ = sac_critic_targets(nets, batch, gamma, policy_set, rng)
    loss, g1, g2 = sac_critic_objective(nets.q1, nets.q2, batch, targets)
    return loss, g1, g2, targets


# ---------------------------------------------------------------------------
# Actor loss (pseudo-target form)
# ---------------------------------------------------------------------------


def critic_action_gradient(
    q1: MlpParams, q2: MlpParams, obs: np.ndarray, actions: np.ndarray
) -> np.ndarray:
    """Per-row d min(q1, q2)(s, a) / d a."""
    sa = np.concatenate([obs, actions], axis=1)
    ones = np.ones((obs.shape[0], 1))
    q1_out, tape1 = numcore.mlp_forward(q1, sa)
    q2_out, tape2 = numcore.mlp_forward(q2, sa)
    _, in_grad1 = numcore.mlp_backward(q1, tape1, ones, with_input_grad=True)
    _, in_grad2 = numcore.mlp_backward(q2, tape2, ones, with_input_grad=True)
    take_first = (q1_out[:, 0] <= q2_out[:, 0])[:, None]
    act_dim = actions.shape[1]
    return np.where(take_first, in_grad1[:, -act_dim:], in_grad2[:, -act_dim:])


def pex_actor_objective(
    actor: GaussianActor,
    obs: np.ndarray,
    pseudo_targets: np.ndarray,
    noise: np.ndarray,
    ent_coef: float,
) -> tuple[float, MlpGrads, np.ndarray]:
    """mean ||t - a0||^2 + ent_coef * mean log pi(a0|s) with a0 = mean +
    std * noise (reparametrized, unclipped) and t, noise held constant.

    Returns (loss, net grads, log_std grad). With the noise substituted, the
    log-density reduces to -0.5*noise^2 - log_std - 0.5*log(2*pi), so the
    entropy term's gradient touches only log_std.
    """
    n = obs.shape[0]
    raw, tape = numcore.mlp_forward(actor.net, obs)
    means = squash_mean(raw, actor.action_low, actor.action_high)
    std = np.exp(actor.log_std)
    a0 = means + std * noise
    diff = pseudo_targets - a0
    log_probs = (-0.5 * noise * noise - actor.log_std - 0.5 * LOG_2PI).sum(axis=1)
    loss = float((diff * diff).sum(axis=1).mean() + ent_coef * log_probs.mean())

    da0 = -2.0 * diff / n
    raw_grad = da0 * squash_mean_grad(raw, actor.action_low, actor.action_high)
    net_grads = numcore.mlp_backward(actor.net, tape, raw_grad)
    log_std_grad = (da0 * noise).sum(axis=0) * std - ent_coef
    return loss, net_grads, log_std_grad


def pex_actor_loss(
    nets: SacNets,
    batch: Batch,
    policy_set: PolicySet,
    rng: np.random.Generator,
    actor: GaussianActor | None = None,
) -> tuple[float, MlpGrads, np.ndarray, np.ndarray]:
    """Pseudo-target actor loss.

    Draw a from the composite policy, form t = stop(d min(q1,q2)/da + a),
    and pull the actor's reparametrized sample a0 toward t, plus the entropy
    term. Only the given actor receives gradients. Returns
    (loss, net grads, log_std grad, log probs of a0).
    """
    actor = actor or nets.actor
    composite_actions, _, _ = composite_act_batch(
        policy_set, (nets.q1, nets.q2), batch.obs, rng, explore=True
    )
    dq_da = critic_action_gradient(nets.q1, nets.q2, batch.obs, composite_actions)
    pseudo_targets = dq_da + composite_actions
    noise = rng.standard_normal(composite_actions.shape)
    loss, net_grads, log_std_grad = pex_actor_objective(
        actor, batch.obs, pseudo_targets, noise, nets.ent_coef
    )
    log_probs = (-0.5 * noise * noise - actor.log_std - 0.5 * LOG_2PI).sum(axis=1)
    return loss, net_grads, log_std_grad, log_probs


# ---------------------------------------------------------------------------
# Entropy temperature tuning
# ---------------------------------------------------------------------------


def entropy_tune(
    log_ent_coef: np.ndarray,
    batch_log_probs: np.ndarray,
    target_entropy: float,
    state: AdamState,
    lr: float,
) -> float:
    """One Adam step on loss = -log_ent_coef * mean(stop(log pi) + target).

    Policy entropy below target (log probs too high) pushes the coefficient
    up; above target pushes it down.
    """
    mean_excess = float(np.mean(batch_log_probs) + target_entropy)
    loss = -float(log_ent_coef[0]) * mean_excess
    grad = np.array([-mean_excess])
    numcore.adam_step_flat(log_ent_coef, grad, state, lr, where="log_ent_coef")
    return loss


# ---------------------------------------------------------------------------
# Full update step
# ---------------------------------------------------------------------------


def sac_actor_step(
    nets: SacNets,
    batch: Batch,
    policy_set: PolicySet,
    actor: GaussianActor,
    net_state: AdamState,
    log_std_state: AdamState,
    lr: float,
    rng: np.random.Generator,
) -> tuple[float, np.ndarray]:
    """One pseudo-target Adam step on an actor; log_std projected into range."""
    loss, net_grads, log_std_grad, log_probs = pex_actor_loss(
        nets, batch, policy_set, rng, actor
    )
    numcore.adam_step(actor.net, net_grads, net_state, lr)
    numcore.adam_step_flat(actor.log_std, log_std_grad, log_std_state, lr, where="log_std")
    np.clip(actor.log_std, LOG_STD_MIN, LOG_STD_MAX, out=actor.log_std)
    return loss, log_probs


def sac_update(
    nets: SacNets,
    hyper: SacHyper,
    batch: Batch,
    opt: SacOptStates,
    policy_set: PolicySet,
    lr: float,
    target_speed: float,
    rng: np.random.Generator,
) -> dict[str, float]:
    """Critic step, actor step, entropy tune, target blend, in that order."""
    losses: dict[str, float] = {}
    loss, g1, g2, _ = sac_critic_loss(nets, batch, hyper.discount, policy_set, rng)
    numcore.adam_step(nets.q1, g1, opt.q1, lr)
    numcore.adam_step(nets.q2, g2, opt.q2, lr)
    losses["q"] = loss

    actor_loss, log_probs = sac_actor_step(
        nets, batch, policy_set, nets.actor, opt.actor_net, opt.actor_log_std, lr, rng
    )
    losses["actor"] = actor_loss
    losses["ent"] = entropy_tune(
        nets.log_ent_coef, log_probs, hyper.target_entropy, opt.ent_coef, lr
    )

    numcore.soft_update(nets.q1_target, nets.q1, target_speed)
    numcore.soft_update(nets.q2_target, nets.q2, target_speed)
    return losses
