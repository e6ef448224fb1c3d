"""Implicit Q-learning: expectile value regression, TD critic fitting, and
advantage-weighted actor extraction.

The same update step serves offline pre-training and online fine-tuning;
online runs simply feed it mixed offline/online batches and train the
expansion policy instead of the offline one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numcore
from .distributions import (
    LOG_STD_MAX,
    LOG_STD_MIN,
    GaussianActor,
    weighted_log_prob_loss,
)
from .numcore import AdamState, MlpGrads, MlpParams
from .replay import Batch


@dataclass
class IqlHyper:
    """Loss hyperparameters. ``inv_temperature`` multiplies advantages inside
    the exponential weight (and also scales value softmax selection
    elsewhere); ``weight_clip`` caps the exponential."""

    expectile: float = 0.9
    inv_temperature: float = 10.0
    weight_clip: float = 100.0
    discount: float = 0.99

    def __post_init__(self):
        if not 0.0 < self.expectile < 1.0:
            raise ValueError(f"expectile must lie in (0, 1), got {self.expectile}")
        if self.inv_temperature <= 0.0:
            raise ValueError("inverse temperature must be positive")
        if self.weight_clip <= 0.0:
            raise ValueError("weight clip must be positive")
        if not 0.0 < self.discount < 1.0:
            raise ValueError(f"discount must lie in (0, 1), got {self.discount}")


@dataclass
class IqlNets:
    """Double critics with slow targets, a state-value net, and the actor
    currently being trained."""

    q1: MlpParams
    q2: MlpParams
    q1_target: MlpParams
    q2_target: MlpParams
    v: MlpParams
    actor: GaussianActor

    @classmethod
    def init(
        cls,
        obs_dim: int,
        act_dim: int,
        hidden: list[int],
        action_low: np.ndarray,
        action_high: np.ndarray,
        rng: np.random.Generator,
    ) -> "IqlNets":
        critic_sizes = [obs_dim + act_dim] + list(hidden) + [1]
        q1 = MlpParams.init(critic_sizes, rng)
        q2 = MlpParams.init(critic_sizes, rng)
        v = MlpParams.init([obs_dim] + list(hidden) + [1], rng)
        actor = GaussianActor.init(obs_dim, act_dim, hidden, action_low, action_high, rng)
        return cls(q1, q2, q1.copy(), q2.copy(), v, actor)


@dataclass
class IqlOptStates:
    v: AdamState
    q1: AdamState
    q2: AdamState
    actor_net: AdamState
    actor_log_std: AdamState

    @classmethod
    def for_nets(cls, nets: IqlNets) -> "IqlOptStates":
        return cls(
            AdamState.for_params(nets.v),
            AdamState.for_params(nets.q1),
            AdamState.for_params(nets.q2),
            AdamState.for_params(nets.actor.net),
            AdamState.for_size(nets.actor.log_std.size),
        )


@dataclass
class UpdateFlags:
    """Which parts of one update step actually move."""

    train_v: bool = True
    train_critics: bool = True
    train_actor: bool = True


def critic_input(obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
    return np.concatenate([obs, actions], axis=1)


def min_critic_value(q1: MlpParams, q2: MlpParams, sa: np.ndarray) -> np.ndarray:
    return np.minimum(numcore.mlp_value(q1, sa)[:, 0], numcore.mlp_value(q2, sa)[:, 0])


def expectile_loss(u, tau: float):
    """|tau - 1(u < 0)| * u^2: tau*u^2 for u >= 0, (1-tau)*u^2 otherwise."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"expectile must lie in (0, 1), got {tau}")
    u = np.asarray(u, dtype=np.float64)
    weight = np.where(u < 0.0, 1.0 - tau, tau)
    out = weight * u * u
    return float(out) if out.ndim == 0 else out


def v_loss(nets: IqlNets, batch: Batch, hyper: IqlHyper) -> tuple[float, MlpGrads]:
    """Expectile regression of V toward the min of the target critics.

    Only V receives gradients; the target critics are constants here.
    """
    sa = critic_input(batch.obs, batch.actions)
    q_bar = min_critic_value(nets.q1_target, nets.q2_target, sa)
    values, tape = numcore.mlp_forward(nets.v, batch.obs)
    u = q_bar - values[:, 0]
    weight = np.where(u < 0.0, 1.0 - hyper.expectile, hyper.expectile)
    n = len(batch)
    loss = float((weight * u * u).mean())
    output_grad = (-2.0 * weight * u / n)[:, None]
    return loss, numcore.mlp_backward(nets.v, tape, output_grad)


def q_loss(nets: IqlNets, batch: Batch, hyper: IqlHyper) -> tuple[float, MlpGrads, MlpGrads]:
    """Squared TD error of both critics against r + discount * V(s').

    V contributes a constant target; terminal transitions drop the bootstrap
    (time-limit truncations keep it).
    """
    next_v = numcore.mlp_value(nets.v, batch.next_obs)[:, 0]
    target = batch.rewards + hyper.discount * (1.0 - batch.dones) * next_v
    sa = critic_input(batch.obs, batch.actions)
    q1_out, tape1 = numcore.mlp_forward(nets.q1, sa)
    q2_out, tape2 = numcore.mlp_forward(nets.q2, sa)
    d1 = q1_out[:, 0] - target
    d2 = q2_out[:, 0] - target
    n = len(batch)
    loss = float((d1 * d1 + d2 * d2).mean())
    g1 = numcore.mlp_backward(nets.q1, tape1, (2.0 * d1 / n)[:, None])
    g2 = numcore.mlp_backward(nets.q2, tape2, (2.0 * d2 / n)[:, None])
    return loss, g1, g2


def awr_weights(nets: IqlNets, batch: Batch, hyper: IqlHyper) -> np.ndarray:
    """exp(advantage * inv_temperature) capped at weight_clip, advantage =
    min(q1, q2)(s, a) - V(s). Pure value computation, no gradients."""
    sa = critic_input(batch.obs, batch.actions)
    advantage = min_critic_value(nets.q1, nets.q2, sa) - numcore.mlp_value(nets.v, batch.obs)[:, 0]
    scaled = np.minimum(advantage * hyper.inv_temperature, np.log(hyper.weight_clip))
    return np.exp(scaled)


def awr_policy_loss(
    nets: IqlNets, batch: Batch, hyper: IqlHyper, actor: GaussianActor
) -> tuple[float, MlpGrads, np.ndarray, np.ndarray]:
    """Advantage-weighted log-likelihood of the batch actions under ``actor``.

    Returns (loss, net grads, log_std grad, weights). The weights are
    gradient-stopped; critics and V never receive gradients here.
    """
    weights = awr_weights(nets, batch, hyper)
    loss, net_grads, log_std_grad = weighted_log_prob_loss(
        actor, batch.obs, batch.actions, weights
    )
    return loss, net_grads, log_std_grad, weights


def actor_step(
    nets: IqlNets,
    batch: Batch,
    hyper: IqlHyper,
    actor: GaussianActor,
    net_state: AdamState,
    log_std_state: AdamState,
    lr: float,
) -> float:
    """One AWR Adam step on an actor; log_std is projected back into its range."""
    loss, net_grads, log_std_grad, _ = awr_policy_loss(nets, batch, hyper, actor)
    numcore.adam_step(actor.net, net_grads, net_state, lr)
    numcore.adam_step_flat(actor.log_std, log_std_grad, log_std_state, lr, where="log_std")
    np.clip(actor.log_std, LOG_STD_MIN, LOG_STD_MAX, out=actor.log_std)
    return loss


def iql_update(
    nets: IqlNets,
    hyper: IqlHyper,
    batch: Batch,
    opt: IqlOptStates,
    lr: float,
    target_speed: float,
    flags: UpdateFlags | None = None,
) -> dict[str, float]:
    """One full update: V step, critic step, actor step, target blend.

    All three losses are evaluated on the same pre-step parameter snapshot
    (sharing forward passes), then the Adam steps and target blends apply.
    The loss values returned equal the standalone v_loss / q_loss /
    awr_policy_loss on that snapshot. Frozen parts (per ``flags``) are left
    bit-identical.
    """
    flags = flags or UpdateFlags()
    losses: dict[str, float] = {}
    n = len(batch)
    sa = critic_input(batch.obs, batch.actions)

    v_grads = q1_grads = q2_grads = actor_grads = None
    if flags.train_v or flags.train_actor:
        v_out, v_tape = numcore.mlp_forward(nets.v, batch.obs)
        v_s = v_out[:, 0]
    if flags.train_critics or flags.train_actor:
        q1_out, q1_tape = numcore.mlp_forward(nets.q1, sa)
        q2_out, q2_tape = numcore.mlp_forward(nets.q2, sa)

    if flags.train_v:
        u = min_critic_value(nets.q1_target, nets.q2_target, sa) - v_s
        weight = np.where(u < 0.0, 1.0 - hyper.expectile, hyper.expectile)
        losses["v"] = float((weight * u * u).mean())
        v_grads = numcore.mlp_backward(nets.v, v_tape, (-2.0 * weight * u / n)[:, None])

    if flags.train_critics:
        next_v = numcore.mlp_value(nets.v, batch.next_obs)[:, 0]
        target = batch.rewards + hyper.discount * (1.0 - batch.dones) * next_v
        d1 = q1_out[:, 0] - target
        d2 = q2_out[:, 0] - target
        losses["q"] = float((d1 * d1 + d2 * d2).mean())
        q1_grads = numcore.mlp_backward(nets.q1, q1_tape, (2.0 * d1 / n)[:, None])
        q2_grads = numcore.mlp_backward(nets.q2, q2_tape, (2.0 * d2 / n)[:, None])

    if flags.train_actor:
        advantage = np.minimum(q1_out[:, 0], q2_out[:, 0]) - v_s
        scaled = np.minimum(advantage * hyper.inv_temperature, np.log(hyper.weight_clip))
        weights = np.exp(scaled)
        loss, actor_grads, log_std_grad = weighted_log_prob_loss(
            nets.actor, batch.obs, batch.actions, weights
        )
        losses["actor"] = loss

    if v_grads is not None:
        numcore.adam_step(nets.v, v_grads, opt.v, lr)
    if q1_grads is not None:
        numcore.adam_step(nets.q1, q1_grads, opt.q1, lr)
        numcore.adam_step(nets.q2, q2_grads, opt.q2, lr)
    if actor_grads is not None:
        numcore.adam_step(nets.actor.net, actor_grads, opt.actor_net, lr)
        numcore.adam_step_flat(
            nets.actor.log_std, log_std_grad, opt.actor_log_std, lr, where="log_std"
        )
        np.clip(nets.actor.log_std, LOG_STD_MIN, LOG_STD_MAX, out=nets.actor.log_std)
    if flags.train_critics:
        numcore.soft_update(nets.q1_target, nets.q1, target_speed)
        numcore.soft_update(nets.q2_target, nets.q2, target_speed)
    return losses
