"""Offline-to-online bridging strategies.

The core scheme is policy expansion (PEX): freeze the offline policy, add a
fresh trainable one, and pick between their action proposals per state with
a value-softmax. Also here: the Direct/Scratch/Buffer transfer variants,
the behavior-transfer (BT) and jump-start (JSRL) exploration baselines,
reward-free behavior cloning, and selection-usage summaries.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import numcore
from .distributions import (
    GaussianActor,
    categorical_sample,
    softmax_temperature,
    weighted_log_prob_loss,
    zeta_sample,
)
from .errors import ConfigError, NumericsError
from .numcore import MlpGrads, MlpParams
from .replay import Batch


# ---------------------------------------------------------------------------
# Policy sets and value-softmax action selection
# ---------------------------------------------------------------------------


@dataclass
class PolicyMember:
    actor: GaussianActor
    frozen: bool
    name: str


@dataclass
class PolicySet:
    """Ordered candidate policies (offline first) plus the selection
    temperature. In PEX mode exactly one member is trainable."""

    members: list[PolicyMember]
    temperature: float

    def __post_init__(self):
        if not self.members:
            raise ConfigError("policy set must have at least one member")
        if self.temperature <= 0.0:
            raise ConfigError("selection temperature must be positive")

    def trainable(self) -> list[PolicyMember]:
        return [m for m in self.members if not m.frozen]


@dataclass
class SelectionLogEntry:
    """Which member acted at one environment step, and with what odds."""

    env_step: int
    chosen_index: int
    probabilities: np.ndarray


def propose_actions_batch(
    policy_set: PolicySet,
    obs: np.ndarray,
    rng: np.random.Generator,
    explore: bool,
) -> np.ndarray:
    """Candidate actions from every member, shape (K, batch, act_dim).

    Frozen members always propose their greedy mean; trainable members
    sample while exploring and go greedy in eval mode.
    """
    proposals = []
    for member in policy_set.members:
        if member.frozen or not explore:
            proposals.append(member.actor.mean_batch(obs))
        else:
            proposals.append(member.actor.sample_batch(obs, rng))
    return np.stack(proposals)


def composite_act_batch(
    policy_set: PolicySet,
    critics: tuple[MlpParams, MlpParams],
    obs: np.ndarray,
    rng: np.random.Generator,
    explore: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized composite-policy actions for a batch of states.

    Returns (actions (n, act_dim), chosen indices (n,), probabilities (n, K)).
    Candidate values use the min of the critic pair; exploring draws from
    the temperature softmax, eval takes the argmax (lowest index on ties).
    """
    q1, q2 = critics
    proposals = propose_actions_batch(policy_set, obs, rng, explore)
    k, n, _ = proposals.shape
    q_values = np.empty((k, n))
    for i in range(k):
        sa = np.concatenate([obs, proposals[i]], axis=1)
        q_values[i] = np.minimum(
            numcore.mlp_value(q1, sa)[:, 0], numcore.mlp_value(q2, sa)[:, 0]
        )
    if not np.isfinite(q_values).all():
        raise NumericsError("non-finite critic values during action selection")
    scaled = q_values / policy_set.temperature
    scaled -= scaled.max(axis=0)
    probs = np.exp(scaled)
    probs /= probs.sum(axis=0)
    if explore:
        u = rng.random(n)
        chosen = (np.cumsum(probs, axis=0).T < u[:, None]).sum(axis=1)
        chosen = np.minimum(chosen, k - 1)
    else:
        chosen = probs.argmax(axis=0)
    actions = proposals[chosen, np.arange(n)]
    return actions, chosen, probs.T


def pex_act(
    policy_set: PolicySet,
    critics: tuple[MlpParams, MlpParams],
    obs: np.ndarray,
    rng: np.random.Generator,
    explore: bool = True,
    env_step: int = 0,
) -> tuple[np.ndarray, SelectionLogEntry]:
    """Composite action for one state, with the selection log entry."""
    actions, chosen, probs = composite_act_batch(
        policy_set, critics, np.asarray(obs, dtype=np.float64)[None], rng, explore
    )
    entry = SelectionLogEntry(env_step, int(chosen[0]), probs[0])
    return actions[0], entry


class CompositePolicy:
    """Adapter exposing a policy set + critics through the plain act() API."""

    def __init__(self, policy_set: PolicySet, critics: tuple[MlpParams, MlpParams]):
        self.policy_set = policy_set
        self.critics = critics

    def act(self, obs, rng: np.random.Generator, explore: bool = False) -> np.ndarray:
        action, _ = pex_act(self.policy_set, self.critics, obs, rng, explore)
        return action


# ---------------------------------------------------------------------------
# Exploration baselines: behavior transfer and jump-start
# ---------------------------------------------------------------------------


@dataclass
class BtState:
    """Persistence bookkeeping for behavior transfer."""

    remaining: int = 0
    last_choice: int = 1  # 0 offline, 1 online; diagnostics only


def bt_act(
    offline_policy: GaussianActor,
    online_policy: GaussianActor,
    persist_state: BtState,
    rng: np.random.Generator,
    epsilon: float,
    zeta_a: float,
    obs: np.ndarray,
) -> np.ndarray:
    """Behavior-transfer action selection.

    Mid-unroll the offline policy keeps acting. Otherwise, with probability
    ``epsilon`` a Zeta(zeta_a) persistence length n starts a new offline
    unroll (this step plus n-1 more); else the online policy acts.
    """
    if persist_state.remaining > 0:
        persist_state.remaining -= 1
        persist_state.last_choice = 0
        return offline_policy.act(obs, rng, explore=False)
    if rng.random() < epsilon:
        n = zeta_sample(zeta_a, rng)
        persist_state.remaining = n - 1
        persist_state.last_choice = 0
        return offline_policy.act(obs, rng, explore=False)
    persist_state.last_choice = 1
    return online_policy.act(obs, rng, explore=True)


def jsrl_guide_horizon(training_progress: float, max_guide_steps: int) -> int:
    """Linear anneal of the guided prefix, max_guide_steps down to 0."""
    return int(round((1.0 - training_progress) * max_guide_steps))


def jsrl_act(
    offline_policy: GaussianActor,
    online_policy: GaussianActor,
    episode_step: int,
    training_progress: float,
    max_guide_steps: int,
    rng: np.random.Generator,
    obs: np.ndarray,
) -> np.ndarray:
    """Offline policy inside the annealed guide horizon, online after it."""
    if episode_step < jsrl_guide_horizon(training_progress, max_guide_steps):
        return offline_policy.act(obs, rng, explore=False)
    return online_policy.act(obs, rng, explore=True)


# ---------------------------------------------------------------------------
# Reward-free behavior cloning
# ---------------------------------------------------------------------------


def bc_loss(actor: GaussianActor, batch: Batch) -> tuple[float, MlpGrads, np.ndarray]:
    """Plain negative log-likelihood of batch actions: AWR with all weights 1."""
    weights = np.ones(len(batch))
    return weighted_log_prob_loss(actor, batch.obs, batch.actions, weights)


# ---------------------------------------------------------------------------
# Usage summaries
# ---------------------------------------------------------------------------


def usage_summary(log: list[SelectionLogEntry], bucket: int) -> np.ndarray:
    """Per-bucket fraction of steps where the offline member (index 0) acted.

    Consecutive entries are grouped ``bucket`` at a time; the final partial
    bucket is kept.
    """
    if bucket < 1:
        raise ValueError(f"bucket size must be >= 1, got {bucket}")
    choices = np.array([entry.chosen_index == 0 for entry in log], dtype=np.float64)
    return np.array(
        [choices[i : i + bucket].mean() for i in range(0, len(choices), bucket)]
    )


# ---------------------------------------------------------------------------
# Strategy configuration
# ---------------------------------------------------------------------------


class StrategyKind(enum.Enum):
    SCRATCH = "scratch"
    BUFFER = "buffer"
    DIRECT = "direct"
    PEX = "pex"
    BT = "bt"
    JSRL = "jsrl"
    BC_OFFLINE = "bc-offline"


# Per-strategy defaults for (use_offline_buffer, transfer_critic,
# transfer_policy, freeze_offline_policy).
_STRATEGY_DEFAULTS: dict[StrategyKind, tuple[bool, bool, bool, bool]] = {
    StrategyKind.SCRATCH: (False, False, False, False),
    StrategyKind.BUFFER: (True, False, False, False),
    StrategyKind.DIRECT: (True, True, True, False),
    StrategyKind.PEX: (True, True, True, True),
    StrategyKind.BT: (True, False, True, True),
    StrategyKind.JSRL: (True, False, True, True),
    StrategyKind.BC_OFFLINE: (False, False, True, True),
}


@dataclass
class BridgeStrategy:
    """How the offline artifacts wire into online training.

    Flags left as None resolve to the strategy's defaults; explicit values
    are validated against the combinations that make sense.
    """

    kind: StrategyKind = StrategyKind.PEX
    zeta_a: float = 2.0
    bt_epsilon: float = 0.1
    jsrl_max_guide_steps: int | None = None  # None: the env episode limit
    use_offline_buffer: bool | None = None
    transfer_critic: bool | None = None
    transfer_policy: bool | None = None
    freeze_offline_policy: bool | None = None

    def resolved(self) -> "BridgeStrategy":
        defaults = _STRATEGY_DEFAULTS[self.kind]
        out = BridgeStrategy(
            kind=self.kind,
            zeta_a=self.zeta_a,
            bt_epsilon=self.bt_epsilon,
            jsrl_max_guide_steps=self.jsrl_max_guide_steps,
            use_offline_buffer=_pick(self.use_offline_buffer, defaults[0]),
            transfer_critic=_pick(self.transfer_critic, defaults[1]),
            transfer_policy=_pick(self.transfer_policy, defaults[2]),
            freeze_offline_policy=_pick(self.freeze_offline_policy, defaults[3]),
        )
        out.validate()
        return out

    def validate(self) -> None:
        kind = self.kind
        if kind in (StrategyKind.PEX, StrategyKind.BC_OFFLINE) and not self.transfer_policy:
            raise ConfigError(f"{kind.value} requires transfer_policy=true")
        if kind in (StrategyKind.SCRATCH, StrategyKind.BUFFER):
            if self.transfer_policy:
                raise ConfigError(f"{kind.value} trains a fresh policy; transfer_policy must be false")
            if self.freeze_offline_policy:
                raise ConfigError(f"{kind.value} has no offline policy to freeze")
        if kind is StrategyKind.SCRATCH and (self.use_offline_buffer or self.transfer_critic):
            raise ConfigError("scratch uses neither the offline buffer nor transferred critics")
        if kind is StrategyKind.DIRECT and self.freeze_offline_policy:
            raise ConfigError("direct fine-tunes the transferred policy; freezing it leaves nothing to train")
        if kind in (StrategyKind.BT, StrategyKind.JSRL):
            if not self.transfer_policy:
                raise ConfigError(f"{kind.value} needs the offline policy as its guide")
            if not self.freeze_offline_policy:
                raise ConfigError(f"{kind.value} keeps its guide policy frozen")
        if kind is StrategyKind.BT:
            if not 0.0 <= self.bt_epsilon <= 1.0:
                raise ConfigError(f"bt_epsilon must lie in [0, 1], got {self.bt_epsilon}")
            if self.zeta_a <= 1.0:
                raise ConfigError(f"zeta_a must exceed 1, got {self.zeta_a}")
        if kind is StrategyKind.JSRL and self.jsrl_max_guide_steps is not None:
            if self.jsrl_max_guide_steps < 1:
                raise ConfigError("jsrl_max_guide_steps must be >= 1")

    @property
    def uses_policy_set(self) -> bool:
        return self.kind in (StrategyKind.PEX, StrategyKind.BC_OFFLINE)


def _pick(value: bool | None, default: bool) -> bool:
    return default if value is None else bool(value)
