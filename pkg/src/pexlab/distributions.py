"""Action distributions and samplers.

Continuous policies use a non-squashed diagonal Gaussian whose mean is
squashed into the action range and whose per-dimension standard deviation
is a state-independent trainable parameter. Policy selection uses a
temperature softmax over candidate values, and the behavior-transfer
baseline draws persistence lengths from a Zeta distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import zeta as riemann_zeta

from .errors import ShapeError
from . import numcore
from .numcore import MlpGrads, MlpParams

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0

ZETA_TABLE_MAX = 10_000

LOG_2PI = float(np.log(2.0 * np.pi))


# ---------------------------------------------------------------------------
# Range-squashed diagonal Gaussian
# ---------------------------------------------------------------------------


def squash_mean(raw_mean: np.ndarray, low: np.ndarray, high: np.ndarray) -> np.ndarray:
    """Map unbounded network output into (low, high): low + (high-low)*(tanh+1)/2.

    The tanh is nudged into the open interval so the result stays strictly
    inside the bounds even where float64 tanh saturates to exactly +-1.
    """
    low = np.asarray(low, dtype=np.float64)
    high = np.asarray(high, dtype=np.float64)
    if not np.all(low < high):
        raise ValueError(f"action bounds must satisfy low < high, got {low}, {high}")
    t = np.clip(np.tanh(raw_mean), -1.0 + 1e-12, 1.0 - 1e-12)
    return low + (high - low) * (t + 1.0) / 2.0


def squash_mean_grad(
    raw_mean: np.ndarray, low: np.ndarray, high: np.ndarray
) -> np.ndarray:
    """d squash_mean / d raw_mean, elementwise."""
    t = np.tanh(raw_mean)
    return (np.asarray(high) - np.asarray(low)) / 2.0 * (1.0 - t * t)


@dataclass
class GaussianPolicyHead:
    """One state's action distribution: squashed mean + state-independent std.

    ``log_std`` is clipped into [LOG_STD_MIN, LOG_STD_MAX] on construction;
    optimizer steps elsewhere project the trainable parameter into the same
    range, so the clip here never bends gradients.
    """

    raw_mean: np.ndarray
    log_std: np.ndarray
    action_low: np.ndarray
    action_high: np.ndarray

    def __post_init__(self):
        self.raw_mean = np.asarray(self.raw_mean, dtype=np.float64)
        self.log_std = np.clip(
            np.asarray(self.log_std, dtype=np.float64), LOG_STD_MIN, LOG_STD_MAX
        )
        self.action_low = np.asarray(self.action_low, dtype=np.float64)
        self.action_high = np.asarray(self.action_high, dtype=np.float64)
        if not np.all(self.action_low < self.action_high):
            raise ValueError("action bounds must satisfy low < high")

    @property
    def mean(self) -> np.ndarray:
        return squash_mean(self.raw_mean, self.action_low, self.action_high)

    @property
    def std(self) -> np.ndarray:
        return np.exp(self.log_std)


def gaussian_log_prob(head: GaussianPolicyHead, action: np.ndarray) -> float:
    """Diagonal Gaussian log-density at ``action`` (no squash Jacobian term)."""
    action = np.asarray(action, dtype=np.float64)
    if action.shape[-1] != head.raw_mean.shape[-1]:
        raise ShapeError(
            f"action dim {action.shape[-1]} != head dim {head.raw_mean.shape[-1]}"
        )
    z = (action - head.mean) / head.std
    per_dim = -0.5 * z * z - head.log_std - 0.5 * LOG_2PI
    total = per_dim.sum(axis=-1)
    return float(total) if total.ndim == 0 else total


def gaussian_sample(
    head: GaussianPolicyHead, rng: np.random.Generator
) -> np.ndarray:
    """Draw mean + std*N(0,1), clipped into the action range."""
    noise = rng.standard_normal(head.raw_mean.shape[-1])
    return np.clip(head.mean + head.std * noise, head.action_low, head.action_high)


def greedy(head: GaussianPolicyHead) -> np.ndarray:
    """The squashed mean, exactly."""
    return head.mean


@dataclass
class GaussianActor:
    """A policy: an MLP producing raw means plus a trainable log-std vector."""

    net: MlpParams
    log_std: np.ndarray
    action_low: np.ndarray
    action_high: np.ndarray

    @classmethod
    def init(
        cls,
        obs_dim: int,
        act_dim: int,
        hidden: list[int],
        low: np.ndarray,
        high: np.ndarray,
        rng: np.random.Generator,
    ) -> "GaussianActor":
        net = MlpParams.init([obs_dim] + list(hidden) + [act_dim], rng)
        return cls(
            net,
            np.zeros(act_dim, dtype=np.float64),
            np.asarray(low, dtype=np.float64),
            np.asarray(high, dtype=np.float64),
        )

    def copy(self) -> "GaussianActor":
        return GaussianActor(
            self.net.copy(), self.log_std.copy(), self.action_low, self.action_high
        )

    def head_for(self, obs: np.ndarray) -> GaussianPolicyHead:
        raw = numcore.mlp_value(self.net, np.asarray(obs, dtype=np.float64)[None])[0]
        return GaussianPolicyHead(raw, self.log_std, self.action_low, self.action_high)

    def act(self, obs: np.ndarray, rng: np.random.Generator, explore: bool) -> np.ndarray:
        head = self.head_for(obs)
        return gaussian_sample(head, rng) if explore else greedy(head)

    def mean_batch(self, obs: np.ndarray) -> np.ndarray:
        raw = numcore.mlp_value(self.net, obs)
        return squash_mean(raw, self.action_low, self.action_high)

    def sample_batch(
        self, obs: np.ndarray, rng: np.random.Generator
    ) -> np.ndarray:
        means = self.mean_batch(obs)
        noise = rng.standard_normal(means.shape)
        draws = means + np.exp(self.log_std) * noise
        return np.clip(draws, self.action_low, self.action_high)

    def log_prob_batch(self, obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
        means = self.mean_batch(obs)
        std = np.exp(self.log_std)
        z = (actions - means) / std
        return (-0.5 * z * z - self.log_std - 0.5 * LOG_2PI).sum(axis=1)


def weighted_log_prob_loss(
    actor: GaussianActor,
    obs: np.ndarray,
    actions: np.ndarray,
    weights: np.ndarray,
) -> tuple[float, MlpGrads, np.ndarray]:
    """loss = -mean(weights * log pi(a|s)) with gradients for net and log_std.

    Weights are treated as constants; this is the shared core of behavior
    cloning (weights 1) and advantage-weighted regression.
    """
    obs = np.asarray(obs, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    n = obs.shape[0]
    raw, tape = numcore.mlp_forward(actor.net, obs)
    means = squash_mean(raw, actor.action_low, actor.action_high)
    std = np.exp(actor.log_std)
    z = (actions - means) / std
    log_probs = (-0.5 * z * z - actor.log_std - 0.5 * LOG_2PI).sum(axis=1)
    loss = float(-(weights * log_probs).mean())

    # d(-logp)/d(mean) = -(a - mean)/std^2; chain through the squash.
    dmean = -(actions - means) / (std * std)
    raw_grad = (weights[:, None] / n) * dmean * squash_mean_grad(
        raw, actor.action_low, actor.action_high
    )
    net_grads = numcore.mlp_backward(actor.net, tape, raw_grad)
    # d(-logp)/d(log_std) = -(z^2 - 1), per dimension.
    log_std_grad = -((weights[:, None] / n) * (z * z - 1.0)).sum(axis=0)
    return loss, net_grads, log_std_grad


# ---------------------------------------------------------------------------
# Softmax selection over candidate values
# ---------------------------------------------------------------------------


@dataclass
class SelectionDistribution:
    """Categorical distribution over K candidates from a temperature softmax."""

    probabilities: np.ndarray
    temperature: float
    q_values: np.ndarray


def softmax_temperature(q_values: np.ndarray, alpha: float) -> SelectionDistribution:
    """probabilities[i] = exp(q[i]/alpha) / sum_j exp(q[j]/alpha), max-subtracted."""
    if alpha <= 0.0:
        raise ValueError(f"temperature must be positive, got {alpha}")
    q = np.asarray(q_values, dtype=np.float64)
    if q.size == 0 or not np.isfinite(q).all():
        raise ValueError(f"q values must be a nonempty finite vector, got {q}")
    scaled = q / alpha
    scaled = scaled - scaled.max()
    exp = np.exp(scaled)
    return SelectionDistribution(exp / exp.sum(), float(alpha), q)


def categorical_sample(dist: SelectionDistribution, rng: np.random.Generator) -> int:
    """Draw an index with the distribution's probabilities."""
    u = rng.random()
    cumulative = np.cumsum(dist.probabilities)
    idx = int(np.searchsorted(cumulative, u, side="right"))
    return min(idx, dist.probabilities.size - 1)


# ---------------------------------------------------------------------------
# Zeta sampler (persistence lengths for the behavior-transfer baseline)
# ---------------------------------------------------------------------------

_zeta_cdf_cache: dict[float, np.ndarray] = {}


def _zeta_cdf(a: float) -> np.ndarray:
    """Truncated inverse-CDF table: P(n) = n^-a / zeta(a) for n < table max,
    with the remaining tail mass assigned to the truncation point."""
    cdf = _zeta_cdf_cache.get(a)
    if cdf is None:
        n = np.arange(1, ZETA_TABLE_MAX + 1, dtype=np.float64)
        pmf = n ** (-a) / riemann_zeta(a)
        pmf[-1] += 1.0 - pmf.sum()
        cdf = np.cumsum(pmf)
        cdf[-1] = 1.0
        _zeta_cdf_cache[a] = cdf
    return cdf


def zeta_sample(a: float, rng: np.random.Generator) -> int:
    """Draw n >= 1 with P(n) proportional to n^-a. Requires a > 1."""
    if a <= 1.0:
        raise ValueError(f"zeta parameter must exceed 1, got {a}")
    cdf = _zeta_cdf(float(a))
    idx = int(np.searchsorted(cdf, rng.random(), side="right"))
    return min(idx, ZETA_TABLE_MAX - 1) + 1
