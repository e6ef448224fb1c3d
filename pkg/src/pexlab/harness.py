"""Experiment orchestration: run configuration, the offline and online
training phases, periodic evaluation, reproducible logging, and CSV/figure
emission.

Reproducibility contract: each phase draws every random number from one
``numpy.random.default_rng(seed)`` stream in a fixed order (network init,
then per env step: action selection, env reset jitter, batch sampling,
and evaluation episodes at eval points). Identical config implies a
bit-identical run log.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import bridge, iql, numcore, plotting, replay, sac
from .bridge import (
    BridgeStrategy,
    BtState,
    CompositePolicy,
    PolicyMember,
    PolicySet,
    SelectionLogEntry,
    StrategyKind,
)
from .distributions import LOG_STD_MAX, LOG_STD_MIN, GaussianActor
from .envs import is_sparse, make_env, make_spec, normalized_score
from .errors import ConfigError, DataError
from .numcore import MlpParams
from .replay import OfflineDataset, ReplayBuffer

SPARSE_EXPECTILE, DENSE_EXPECTILE = 0.9, 0.7
SPARSE_INV_TEMPERATURE, DENSE_INV_TEMPERATURE = 10.0, 3.0


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    """Every knob of a run. ``expectile`` and ``inv_temperature`` default per
    task family (0.9/10 sparse maze, 0.7/3 dense reach)."""

    env_id: str = "pointmaze-umaze"
    dataset: str | None = None
    strategy: BridgeStrategy = field(default_factory=BridgeStrategy)
    offline_algo: str = "iql"  # iql | bc
    online_algo: str = "iql"  # iql | sac
    offline_steps: int = 50_000
    online_steps: int = 100_000
    discount: float = 0.99
    expectile: float | None = None
    inv_temperature: float | None = None
    weight_clip: float = 100.0
    buffer_capacity: int = 1_000_000
    batch_size: int = 256
    hidden: list[int] = field(default_factory=lambda: [64, 64])
    lr: float = 3e-4
    target_update_speed: float = 5e-3
    initial_collection_steps: int = 5000
    updates_per_env_step: int = 1
    eval_interval: int = 2000
    eval_episodes: int = 10
    seed: int = 0

    def resolved(self) -> "RunConfig":
        """Fill per-task defaults, resolve strategy flags, and validate."""
        cfg = RunConfig(**{**asdict_config(self), "strategy": self.strategy})
        spec = make_spec(cfg.env_id)  # raises ConfigError on unknown ids
        sparse = is_sparse(cfg.env_id)
        if cfg.expectile is None:
            cfg.expectile = SPARSE_EXPECTILE if sparse else DENSE_EXPECTILE
        if cfg.inv_temperature is None:
            cfg.inv_temperature = SPARSE_INV_TEMPERATURE if sparse else DENSE_INV_TEMPERATURE
        cfg.strategy = cfg.strategy.resolved()
        if cfg.strategy.kind is StrategyKind.JSRL and cfg.strategy.jsrl_max_guide_steps is None:
            cfg.strategy.jsrl_max_guide_steps = spec.max_episode_steps

        if cfg.offline_algo not in ("iql", "bc"):
            raise ConfigError(f"offline_algo must be iql or bc, got {cfg.offline_algo!r}")
        if cfg.online_algo not in ("iql", "sac"):
            raise ConfigError(f"online_algo must be iql or sac, got {cfg.online_algo!r}")
        if cfg.offline_algo == "bc" and cfg.strategy.transfer_critic:
            raise ConfigError("behavior cloning trains no critics; transfer_critic must be false")
        if cfg.offline_steps < 0 or cfg.online_steps < 0:
            raise ConfigError("step counts must be nonnegative")
        if cfg.batch_size < 2 or cfg.batch_size % 2 != 0:
            raise ConfigError("batch_size must be an even integer >= 2")
        if cfg.eval_interval < 1 or cfg.eval_episodes < 1:
            raise ConfigError("eval_interval and eval_episodes must be >= 1")
        if cfg.updates_per_env_step < 0:
            raise ConfigError("updates_per_env_step must be >= 0")
        if not 0.0 < cfg.discount < 1.0:
            raise ConfigError("discount must lie in (0, 1)")
        if cfg.weight_clip <= 0.0 or cfg.lr <= 0.0:
            raise ConfigError("weight_clip and lr must be positive")
        if not 0.0 < cfg.target_update_speed <= 1.0:
            raise ConfigError("target_update_speed must lie in (0, 1]")
        if cfg.initial_collection_steps < 0:
            raise ConfigError("initial_collection_steps must be >= 0")
        if any(h < 1 for h in cfg.hidden) or not cfg.hidden:
            raise ConfigError("hidden sizes must be positive")
        return cfg

    def iql_hyper(self) -> iql.IqlHyper:
        return iql.IqlHyper(
            expectile=self.expectile,
            inv_temperature=self.inv_temperature,
            weight_clip=self.weight_clip,
            discount=self.discount,
        )

    def selection_temperature(self) -> float:
        # One temperature serves both the exponential advantage weight and
        # the value softmax that arbitrates the policy set.
        return 1.0 / self.inv_temperature

    def to_dict(self) -> dict:
        out = asdict_config(self)
        strategy = asdict(self.strategy)
        strategy["kind"] = self.strategy.kind.value
        out["strategy"] = strategy
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        strategy = data.pop("strategy", {})
        if isinstance(strategy, dict):
            strategy = dict(strategy)
            kind = strategy.pop("kind", "pex")
            try:
                strategy = BridgeStrategy(kind=StrategyKind(kind), **strategy)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad strategy block: {exc}") from exc
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(strategy=strategy, **data)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()


def asdict_config(cfg: RunConfig) -> dict:
    """Field dict without recursing into the strategy dataclass."""
    out = {}
    for name in RunConfig.__dataclass_fields__:
        value = getattr(cfg, name)
        out[name] = list(value) if isinstance(value, list) else value
    out.pop("strategy")
    return out


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``key=value`` / ``strategy.key=value`` pairs onto a config dict.
    Values parse as JSON when possible, otherwise stay strings."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        target = data
        parts = key.split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise ConfigError(f"override {key!r} descends into a non-object")
        target[parts[-1]] = value
    return data


# ---------------------------------------------------------------------------
# Run logs
# ---------------------------------------------------------------------------


@dataclass
class EvalRecord:
    env_step: int
    mean_return: float
    normalized_score: float
    episode_returns: list[float]


@dataclass
class RunLog:
    env_id: str
    strategy_kind: str
    seed: int
    config_hash: str
    eval_records: list[EvalRecord] = field(default_factory=list)
    selection: list[SelectionLogEntry] = field(default_factory=list)
    wall_clock: float = 0.0

    def final_score(self) -> float:
        return self.eval_records[-1].normalized_score

    def to_dict(self) -> dict:
        return {
            "env_id": self.env_id,
            "strategy_kind": self.strategy_kind,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "eval_records": [
                {
                    "env_step": r.env_step,
                    "mean_return": r.mean_return,
                    "normalized_score": r.normalized_score,
                    "episode_returns": list(r.episode_returns),
                }
                for r in self.eval_records
            ],
            "selection": [
                [e.env_step, e.chosen_index] + [float(p) for p in e.probabilities]
                for e in self.selection
            ],
            "wall_clock": self.wall_clock,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunLog":
        log = cls(
            env_id=data["env_id"],
            strategy_kind=data["strategy_kind"],
            seed=data["seed"],
            config_hash=data["config_hash"],
            wall_clock=data.get("wall_clock", 0.0),
        )
        for r in data["eval_records"]:
            log.eval_records.append(
                EvalRecord(
                    r["env_step"], r["mean_return"], r["normalized_score"],
                    list(r["episode_returns"]),
                )
            )
        for row in data["selection"]:
            log.selection.append(
                SelectionLogEntry(int(row[0]), int(row[1]), np.array(row[2:]))
            )
        return log

    def canonical_bytes(self) -> bytes:
        """Deterministic serialization: everything except wall-clock time."""
        data = self.to_dict()
        data.pop("wall_clock")
        return json.dumps(data, sort_keys=True).encode()

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "RunLog":
        return cls.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def evaluate(policy, env, episodes: int, rng: np.random.Generator) -> tuple[float, list[float]]:
    """Mean undiscounted return of eval-mode (greedy/argmax) episodes."""
    if episodes < 1:
        raise ConfigError("episodes must be >= 1")
    returns = []
    for _ in range(episodes):
        obs = env.reset(rng)
        total = 0.0
        while True:
            t = env.step(policy.act(obs, rng, explore=False))
            total += t.reward
            obs = t.next_obs
            if t.done or t.truncated:
                break
        returns.append(total)
    return float(np.mean(returns)), returns


# ---------------------------------------------------------------------------
# Checkpoint assembly
# ---------------------------------------------------------------------------


def _vector_as_params(vec: np.ndarray) -> MlpParams:
    """Store a bare vector in checkpoint form: a [1, n] layer, bias = vec."""
    p = MlpParams.zeros([1, vec.size])
    p.biases[0][...] = vec
    return p


def _params_as_vector(p: MlpParams) -> np.ndarray:
    return p.biases[0].copy()


def checkpoint_networks(nets: iql.IqlNets, offline_algo: str) -> dict[str, MlpParams]:
    out = {
        "actor": nets.actor.net,
        "actor_log_std": _vector_as_params(nets.actor.log_std),
    }
    if offline_algo == "iql":
        out.update(
            q1=nets.q1, q2=nets.q2, q1_target=nets.q1_target,
            q2_target=nets.q2_target, v=nets.v,
        )
    return out


def save_run_checkpoint(path, nets: iql.IqlNets, config: RunConfig) -> None:
    numcore.save_checkpoint(path, checkpoint_networks(nets, config.offline_algo))
    meta = {
        "config_hash": config.config_hash(),
        "env_id": config.env_id,
        "offline_algo": config.offline_algo,
    }
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2))


def load_run_checkpoint(path) -> dict[str, MlpParams]:
    return numcore.load_checkpoint(path)


def checkpoint_actor(networks: dict[str, MlpParams], spec) -> GaussianActor:
    if "actor" not in networks or "actor_log_std" not in networks:
        raise DataError("checkpoint is missing the actor networks")
    return GaussianActor(
        networks["actor"].copy(),
        _params_as_vector(networks["actor_log_std"]),
        spec.action_low,
        spec.action_high,
    )


# ---------------------------------------------------------------------------
# Offline phase
# ---------------------------------------------------------------------------


@dataclass
class OfflineResult:
    nets: iql.IqlNets
    log: RunLog
    config: RunConfig


def load_matching_dataset(config: RunConfig) -> OfflineDataset:
    if config.dataset is None:
        raise ConfigError("this configuration needs a dataset path")
    ds = replay.load_dataset(config.dataset)
    spec = make_spec(config.env_id)
    if ds.env_id != config.env_id:
        raise DataError(f"dataset is for {ds.env_id!r}, config wants {config.env_id!r}")
    if ds.obs_dim != spec.obs_dim or ds.act_dim != spec.act_dim:
        raise DataError(
            f"dataset dims ({ds.obs_dim}, {ds.act_dim}) do not match env "
            f"({spec.obs_dim}, {spec.act_dim})"
        )
    return ds


def init_iql_nets(config: RunConfig, rng: np.random.Generator) -> iql.IqlNets:
    spec = make_spec(config.env_id)
    return iql.IqlNets.init(
        spec.obs_dim, spec.act_dim, config.hidden, spec.action_low, spec.action_high, rng
    )


def run_offline_phase(config: RunConfig) -> OfflineResult:
    """Train on the offline dataset only; log periodic greedy evaluations.

    The step axis of the log counts gradient steps (there are no env steps
    in this phase).
    """
    cfg = config.resolved()
    dataset = load_matching_dataset(cfg)
    started = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    nets = init_iql_nets(cfg, rng)
    opt = iql.IqlOptStates.for_nets(nets)
    hyper = cfg.iql_hyper()
    eval_env = make_env(cfg.env_id)
    spec = eval_env.spec

    log = RunLog(cfg.env_id, "offline-" + cfg.offline_algo, cfg.seed, cfg.config_hash())

    def record(step: int) -> None:
        mean, returns = evaluate(nets.actor, eval_env, cfg.eval_episodes, rng)
        log.eval_records.append(
            EvalRecord(step, mean, normalized_score(spec, mean), returns)
        )

    record(0)
    for step in range(1, cfg.offline_steps + 1):
        batch = dataset.sample(cfg.batch_size, rng)
        if cfg.offline_algo == "iql":
            iql.iql_update(nets, hyper, batch, opt, cfg.lr, cfg.target_update_speed)
        else:
            _, net_grads, log_std_grad = bridge.bc_loss(nets.actor, batch)
            numcore.adam_step(nets.actor.net, net_grads, opt.actor_net, cfg.lr)
            numcore.adam_step_flat(
                nets.actor.log_std, log_std_grad, opt.actor_log_std, cfg.lr, where="log_std"
            )
            np.clip(nets.actor.log_std, LOG_STD_MIN, LOG_STD_MAX, out=nets.actor.log_std)
        if step % cfg.eval_interval == 0:
            record(step)
    if cfg.offline_steps % cfg.eval_interval != 0:
        record(cfg.offline_steps)
    log.wall_clock = time.perf_counter() - started
    return OfflineResult(nets, log, cfg)


# ---------------------------------------------------------------------------
# Online phase
# ---------------------------------------------------------------------------


@dataclass
class OnlineResult:
    log: RunLog
    nets: object  # IqlNets or SacNets
    policy_set: PolicySet | None
    offline_actor: GaussianActor | None
    offline_actor_start: bytes | None  # freeze-invariant witness


def _actor_bytes(actor: GaussianActor) -> bytes:
    return actor.net.flat.tobytes() + actor.log_std.tobytes()


def _wire_online(cfg: RunConfig, checkpoint: dict[str, MlpParams] | None, rng):
    """Build online nets per the bridge strategy, applying transfers."""
    spec = make_spec(cfg.env_id)
    strategy = cfg.strategy
    needs_ckpt = strategy.transfer_policy or strategy.transfer_critic
    if needs_ckpt and checkpoint is None:
        raise DataError(f"strategy {strategy.kind.value} needs an offline checkpoint")

    if cfg.online_algo == "iql":
        nets = init_iql_nets(cfg, rng)
    else:
        nets = sac.SacNets.init(
            spec.obs_dim, spec.act_dim, cfg.hidden, spec.action_low, spec.action_high, rng
        )

    def need(name: str) -> MlpParams:
        if name not in checkpoint:
            raise DataError(f"checkpoint is missing network {name!r}")
        return checkpoint[name]

    if strategy.transfer_critic:
        for name in ("q1", "q2", "q1_target", "q2_target"):
            src = need(name)
            dst = getattr(nets, name)
            if src.layer_sizes != dst.layer_sizes:
                raise DataError(
                    f"checkpoint {name} sizes {src.layer_sizes} != config {dst.layer_sizes}"
                )
            dst.flat[...] = src.flat
        if cfg.online_algo == "iql":
            src = need("v")
            if src.layer_sizes != nets.v.layer_sizes:
                raise DataError("checkpoint v sizes do not match the config")
            nets.v.flat[...] = src.flat

    offline_actor = None
    if strategy.transfer_policy:
        offline_actor = checkpoint_actor(checkpoint, spec)
        if offline_actor.net.layer_sizes != nets.actor.net.layer_sizes:
            raise DataError("checkpoint actor sizes do not match the config")

    policy_set = None
    if strategy.uses_policy_set:
        policy_set = PolicySet(
            [
                PolicyMember(offline_actor, strategy.freeze_offline_policy, "offline"),
                PolicyMember(nets.actor, False, "online"),
            ],
            cfg.selection_temperature(),
        )
    elif strategy.kind is StrategyKind.DIRECT:
        nets.actor.net.flat[...] = offline_actor.net.flat
        nets.actor.log_std[...] = offline_actor.log_std
        offline_actor = None  # fully handed over to online training

    return nets, policy_set, offline_actor


def run_online_phase(
    config: RunConfig, checkpoint: dict[str, MlpParams] | None
) -> OnlineResult:
    """Interleave environment interaction and gradient updates.

    The first ``initial_collection_steps`` env steps only fill the buffer;
    after that each env step triggers ``updates_per_env_step`` updates.
    Evaluation runs every ``eval_interval`` env steps on a separate env
    instance, never touching training state.
    """
    cfg = config.resolved()
    strategy = cfg.strategy
    started = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    nets, policy_set, offline_actor = _wire_online(cfg, checkpoint, rng)
    offline_start = _actor_bytes(offline_actor) if offline_actor is not None else None

    env = make_env(cfg.env_id)
    eval_env = make_env(cfg.env_id)
    spec = env.spec
    offline_ds = load_matching_dataset(cfg) if strategy.use_offline_buffer else None
    buffer = ReplayBuffer(cfg.buffer_capacity, spec.obs_dim, spec.act_dim)

    if cfg.online_algo == "iql":
        opt = iql.IqlOptStates.for_nets(nets)
        hyper = cfg.iql_hyper()
    else:
        opt = sac.SacOptStates.for_nets(nets)
        hyper = sac.SacHyper(discount=cfg.discount, target_entropy=-float(spec.act_dim))
    offline_opt = None
    if policy_set is not None and not strategy.freeze_offline_policy:
        offline_opt = (
            numcore.AdamState.for_params(offline_actor.net),
            numcore.AdamState.for_size(offline_actor.log_std.size),
        )

    sac_set = policy_set
    if cfg.online_algo == "sac" and sac_set is None:
        sac_set = PolicySet(
            [PolicyMember(nets.actor, False, "online")], cfg.selection_temperature()
        )

    if policy_set is not None:
        eval_policy = CompositePolicy(policy_set, (nets.q1, nets.q2))
    else:
        eval_policy = nets.actor

    log = RunLog(cfg.env_id, strategy.kind.value, cfg.seed, cfg.config_hash())

    def record(step: int) -> None:
        mean, returns = evaluate(eval_policy, eval_env, cfg.eval_episodes, rng)
        log.eval_records.append(
            EvalRecord(step, mean, normalized_score(spec, mean), returns)
        )

    bt_state = BtState()
    episode_step = 0
    obs = env.reset(rng)
    record(0)

    for t in range(1, cfg.online_steps + 1):
        # --- action selection -------------------------------------------
        if policy_set is not None:
            action, entry = bridge.pex_act(
                policy_set, (nets.q1, nets.q2), obs, rng, explore=True, env_step=t
            )
            log.selection.append(entry)
        elif strategy.kind is StrategyKind.BT:
            action = bridge.bt_act(
                offline_actor, nets.actor, bt_state, rng,
                strategy.bt_epsilon, strategy.zeta_a, obs,
            )
            chosen = bt_state.last_choice
            log.selection.append(
                SelectionLogEntry(t, chosen, np.array([1.0 - chosen, float(chosen)]))
            )
        elif strategy.kind is StrategyKind.JSRL:
            progress = (t - 1) / cfg.online_steps
            action = bridge.jsrl_act(
                offline_actor, nets.actor, episode_step, progress,
                strategy.jsrl_max_guide_steps, rng, obs,
            )
            chosen = 0 if episode_step < bridge.jsrl_guide_horizon(
                progress, strategy.jsrl_max_guide_steps
            ) else 1
            log.selection.append(
                SelectionLogEntry(t, chosen, np.array([1.0 - chosen, float(chosen)]))
            )
        else:
            action = nets.actor.act(obs, rng, explore=True)

        # --- env step ----------------------------------------------------
        transition = env.step(action)
        buffer.push(transition)
        episode_step += 1
        if transition.done or transition.truncated:
            obs = env.reset(rng)
            episode_step = 0
        else:
            obs = transition.next_obs

        # --- gradient updates ---------------------------------------------
        if t > cfg.initial_collection_steps:
            for _ in range(cfg.updates_per_env_step):
                if offline_ds is not None:
                    batch = replay.sample_mixed(buffer, offline_ds, cfg.batch_size, rng)
                else:
                    batch = buffer.sample(cfg.batch_size, rng)
                if cfg.online_algo == "iql":
                    iql.iql_update(nets, hyper, batch, opt, cfg.lr, cfg.target_update_speed)
                    if offline_opt is not None:
                        iql.actor_step(
                            nets, batch, hyper, offline_actor,
                            offline_opt[0], offline_opt[1], cfg.lr,
                        )
                else:
                    sac.sac_update(
                        nets, hyper, batch, opt, sac_set,
                        cfg.lr, cfg.target_update_speed, rng,
                    )
                    if offline_opt is not None:
                        sac.sac_actor_step(
                            nets, batch, sac_set, offline_actor,
                            offline_opt[0], offline_opt[1], cfg.lr, rng,
                        )

        if t % cfg.eval_interval == 0:
            record(t)

    if cfg.online_steps % cfg.eval_interval != 0 and cfg.online_steps > 0:
        record(cfg.online_steps)
    log.wall_clock = time.perf_counter() - started
    return OnlineResult(log, nets, policy_set, offline_actor, offline_start)


# ---------------------------------------------------------------------------
# Output emission
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def run_file_stem(log: RunLog) -> str:
    return f"{log.env_id}_{log.strategy_kind}_seed{log.seed}"


def emit_outputs(logs: list[RunLog], out_dir, usage_bucket: int = 1000) -> list[Path]:
    """Write per-run score CSVs, the cross-run aggregate CSV, selection and
    usage CSVs, and SVG figures. Returns the written paths."""
    if not logs:
        raise ConfigError("emit_outputs needs at least one run log")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig_dir = out_dir / "figures"
    fig_dir.mkdir(exist_ok=True)
    written: list[Path] = []

    for log in logs:
        stem = run_file_stem(log)
        path = out_dir / f"run_{stem}.csv"
        with open(path, "w") as fh:
            fh.write("env_step,normalized_score\n")
            for r in log.eval_records:
                fh.write(f"{r.env_step},{_fmt(r.normalized_score)}\n")
        written.append(path)

        if log.selection:
            sel_path = out_dir / f"selection_{stem}.csv"
            with open(sel_path, "w") as fh:
                fh.write("env_step,chosen_index,p0,p1\n")
                for e in log.selection:
                    probs = list(e.probabilities) + [0.0, 0.0]
                    fh.write(
                        f"{e.env_step},{e.chosen_index},{_fmt(probs[0])},{_fmt(probs[1])}\n"
                    )
            written.append(sel_path)

            usage = bridge.usage_summary(log.selection, usage_bucket)
            usage_path = out_dir / f"usage_{stem}.csv"
            with open(usage_path, "w") as fh:
                fh.write("bucket_start,offline_fraction\n")
                for i, frac in enumerate(usage):
                    fh.write(f"{log.selection[i * usage_bucket].env_step},{_fmt(frac)}\n")
            written.append(usage_path)

    agg_path = out_dir / "aggregate.csv"
    aggregates = aggregate_scores(logs)
    with open(agg_path, "w") as fh:
        fh.write("strategy,env_step,mean,std\n")
        for strategy_kind, rows in aggregates.items():
            for step, mean, std in rows:
                fh.write(f"{strategy_kind},{step},{_fmt(mean)},{_fmt(std)}\n")
    written.append(agg_path)

    written.extend(plotting.render_all(logs, aggregates, fig_dir, usage_bucket))
    return written


def aggregate_scores(logs: list[RunLog]) -> dict[str, list[tuple[int, float, float]]]:
    """Per strategy: average scores across tasks first (within a seed), then
    mean and std across seeds, at each shared eval step."""
    out: dict[str, list[tuple[int, float, float]]] = {}
    by_strategy: dict[str, list[RunLog]] = {}
    for log in logs:
        by_strategy.setdefault(log.strategy_kind, []).append(log)
    for strategy_kind, group in by_strategy.items():
        steps = sorted(
            set.intersection(*({r.env_step for r in g.eval_records} for g in group))
        )
        per_seed: dict[int, dict[int, list[float]]] = {}
        for g in group:
            scores = {r.env_step: r.normalized_score for r in g.eval_records}
            for step in steps:
                per_seed.setdefault(g.seed, {}).setdefault(step, []).append(scores[step])
        rows = []
        for step in steps:
            seed_means = [float(np.mean(v[step])) for v in per_seed.values()]
            rows.append((step, float(np.mean(seed_means)), float(np.std(seed_means))))
        out[strategy_kind] = rows
    return out
