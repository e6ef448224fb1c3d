"""Transition storage: online ring buffer, immutable offline dataset,
mixed sampling, and the on-disk dataset format.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .envs import BehaviorGrade, Transition
from .errors import (
    BadMagicError,
    ChecksumError,
    DataError,
    ShapeError,
    TruncatedFileError,
    VersionError,
)

DATASET_MAGIC = b"PEXD"
DATASET_VERSION = 1


@dataclass
class Batch:
    """Column-major batch of transitions. ``source`` tags each row when the
    batch was drawn from multiple stores (0 offline, 1 online)."""

    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    dones: np.ndarray
    truncated: np.ndarray
    source: np.ndarray | None = None

    def __len__(self) -> int:
        return self.obs.shape[0]


def _gather(columns, idx, source_tag: int | None) -> Batch:
    obs, actions, rewards, next_obs, dones, truncated = columns
    source = None
    if source_tag is not None:
        source = np.full(len(idx), source_tag, dtype=np.int8)
    return Batch(
        obs[idx], actions[idx], rewards[idx], next_obs[idx],
        dones[idx], truncated[idx], source,
    )


class ReplayBuffer:
    """Fixed-capacity ring buffer; overwrites oldest entries once full."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros((capacity, act_dim))
        self.rewards = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.dones = np.zeros(capacity)
        self.truncated = np.zeros(capacity)
        self.size = 0
        self.write_cursor = 0

    def __len__(self) -> int:
        return self.size

    def push(self, t: Transition) -> None:
        if np.shape(t.obs) != self.obs.shape[1:] or np.shape(t.action) != self.actions.shape[1:]:
            raise ShapeError(
                f"transition dims obs{np.shape(t.obs)}/act{np.shape(t.action)} do not "
                f"match buffer ({self.obs.shape[1]}, {self.actions.shape[1]})"
            )
        i = self.write_cursor
        self.obs[i] = t.obs
        self.actions[i] = t.action
        self.rewards[i] = t.reward
        self.next_obs[i] = t.next_obs
        self.dones[i] = float(t.done)
        self.truncated[i] = float(t.truncated)
        self.write_cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _columns(self):
        return (self.obs, self.actions, self.rewards, self.next_obs, self.dones, self.truncated)

    def sample(self, n: int, rng: np.random.Generator, source_tag: int | None = None) -> Batch:
        if self.size == 0:
            raise DataError("cannot sample from an empty replay buffer")
        idx = rng.integers(0, self.size, size=n)
        return _gather(self._columns(), idx, source_tag)


class OfflineDataset:
    """Immutable transition store loaded once and never mutated afterwards."""

    def __init__(
        self,
        obs: np.ndarray,
        actions: np.ndarray,
        rewards: np.ndarray,
        next_obs: np.ndarray,
        dones: np.ndarray,
        truncated: np.ndarray,
        env_id: str,
        grade: BehaviorGrade,
        generator_seed: int,
    ):
        self.obs = np.ascontiguousarray(obs, dtype=np.float64)
        self.actions = np.ascontiguousarray(actions, dtype=np.float64)
        self.rewards = np.ascontiguousarray(rewards, dtype=np.float64)
        self.next_obs = np.ascontiguousarray(next_obs, dtype=np.float64)
        self.dones = np.ascontiguousarray(dones, dtype=np.float64)
        self.truncated = np.ascontiguousarray(truncated, dtype=np.float64)
        self.env_id = env_id
        self.grade = grade
        self.generator_seed = generator_seed
        for arr in self._columns():
            arr.flags.writeable = False

    @classmethod
    def from_transitions(
        cls,
        transitions: list[Transition],
        env_id: str,
        grade: BehaviorGrade,
        generator_seed: int,
    ) -> "OfflineDataset":
        return cls(
            np.array([t.obs for t in transitions]),
            np.array([t.action for t in transitions]),
            np.array([t.reward for t in transitions]),
            np.array([t.next_obs for t in transitions]),
            np.array([float(t.done) for t in transitions]),
            np.array([float(t.truncated) for t in transitions]),
            env_id,
            grade,
            generator_seed,
        )

    def __len__(self) -> int:
        return self.obs.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.obs.shape[1]

    @property
    def act_dim(self) -> int:
        return self.actions.shape[1]

    def _columns(self):
        return (self.obs, self.actions, self.rewards, self.next_obs, self.dones, self.truncated)

    def checksum(self) -> int:
        crc = 0
        for arr in self._columns():
            crc = zlib.crc32(arr.tobytes(), crc)
        return crc

    def sample(self, n: int, rng: np.random.Generator, source_tag: int | None = None) -> Batch:
        if len(self) == 0:
            raise DataError("cannot sample from an empty dataset")
        idx = rng.integers(0, len(self), size=n)
        return _gather(self._columns(), idx, source_tag)

    def mean_episode_return(self) -> float:
        """Mean undiscounted return of the complete episodes in the dataset."""
        ends = np.flatnonzero((self.dones > 0) | (self.truncated > 0))
        if ends.size == 0:
            return float(self.rewards.sum())
        totals, start = [], 0
        for end in ends:
            totals.append(self.rewards[start : end + 1].sum())
            start = end + 1
        return float(np.mean(totals))


def sample_batch(source, n: int, rng: np.random.Generator) -> Batch:
    """Uniform-with-replacement draw from a buffer or dataset."""
    return source.sample(n, rng)


def sample_mixed(
    online: ReplayBuffer, offline: OfflineDataset, n: int, rng: np.random.Generator
) -> Batch:
    """Half offline, half online, shuffled. Falls back to all-offline while
    the online buffer is still empty (before the first interaction)."""
    if n % 2 != 0:
        raise ValueError(f"mixed batch size must be even, got {n}")
    if len(offline) == 0 and len(online) == 0:
        raise DataError("both transition sources are empty")
    if len(online) == 0:
        return offline.sample(n, rng, source_tag=0)
    half = n // 2
    off = offline.sample(half, rng, source_tag=0)
    on = online.sample(half, rng, source_tag=1)
    order = rng.permutation(n)
    return Batch(
        np.concatenate([off.obs, on.obs])[order],
        np.concatenate([off.actions, on.actions])[order],
        np.concatenate([off.rewards, on.rewards])[order],
        np.concatenate([off.next_obs, on.next_obs])[order],
        np.concatenate([off.dones, on.dones])[order],
        np.concatenate([off.truncated, on.truncated])[order],
        np.concatenate([off.source, on.source])[order],
    )


# ---------------------------------------------------------------------------
# On-disk format ("PEXD")
# ---------------------------------------------------------------------------
#
# magic "PEXD" | version u16 | payload | CRC32 u32 of the payload, where
# payload = env_id (u16 length + UTF-8) | grade u8 | seed u64 | obs_dim u32 |
# act_dim u32 | count u64 | count records of
# [obs f64*obs_dim, action f64*act_dim, reward f64, next_obs f64*obs_dim,
#  done u8, truncated u8]. All little-endian.


def _record_dtype(obs_dim: int, act_dim: int) -> np.dtype:
    return np.dtype(
        [
            ("obs", "<f8", (obs_dim,)),
            ("action", "<f8", (act_dim,)),
            ("reward", "<f8"),
            ("next_obs", "<f8", (obs_dim,)),
            ("done", "u1"),
            ("truncated", "u1"),
        ]
    )


def save_dataset(dataset: OfflineDataset, path) -> None:
    n = len(dataset)
    records = np.zeros(n, dtype=_record_dtype(dataset.obs_dim, dataset.act_dim))
    records["obs"] = dataset.obs
    records["action"] = dataset.actions
    records["reward"] = dataset.rewards
    records["next_obs"] = dataset.next_obs
    records["done"] = dataset.dones.astype(np.uint8)
    records["truncated"] = dataset.truncated.astype(np.uint8)

    encoded = dataset.env_id.encode("utf-8")
    payload = struct.pack("<H", len(encoded)) + encoded
    payload += struct.pack(
        "<BQIIQ",
        dataset.grade.value,
        dataset.generator_seed,
        dataset.obs_dim,
        dataset.act_dim,
        n,
    )
    payload += records.tobytes()
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<H", DATASET_VERSION))
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))


def load_dataset(path) -> OfflineDataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 6:
        raise TruncatedFileError(f"{path}: shorter than the fixed header")
    if blob[:4] != DATASET_MAGIC:
        raise BadMagicError(f"{path}: magic {blob[:4]!r} != {DATASET_MAGIC!r}")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != DATASET_VERSION:
        raise VersionError(f"{path}: version {version} unsupported")
    if len(blob) < 10:
        raise TruncatedFileError(f"{path}: missing checksum")
    payload = blob[6:-4]
    (stored_crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(payload) != stored_crc:
        raise ChecksumError(f"{path}: payload CRC mismatch")

    offset = 0
    if len(payload) < 2:
        raise TruncatedFileError(f"{path}: payload ended inside the env id")
    (name_len,) = struct.unpack_from("<H", payload, offset)
    offset += 2
    if len(payload) < offset + name_len + struct.calcsize("<BQIIQ"):
        raise TruncatedFileError(f"{path}: payload ended inside the header")
    env_id = payload[offset : offset + name_len].decode("utf-8")
    offset += name_len
    grade_value, seed, obs_dim, act_dim, count = struct.unpack_from("<BQIIQ", payload, offset)
    offset += struct.calcsize("<BQIIQ")
    try:
        grade = BehaviorGrade(grade_value)
    except ValueError as exc:
        raise DataError(f"{path}: unknown grade value {grade_value}") from exc

    dtype = _record_dtype(obs_dim, act_dim)
    if len(payload) - offset != count * dtype.itemsize:
        raise TruncatedFileError(
            f"{path}: expected {count} records ({count * dtype.itemsize} bytes), "
            f"found {len(payload) - offset} bytes"
        )
    records = np.frombuffer(payload, dtype=dtype, count=count, offset=offset)
    return OfflineDataset(
        records["obs"].reshape(count, obs_dim),
        records["action"].reshape(count, act_dim),
        records["reward"].copy(),
        records["next_obs"].reshape(count, obs_dim),
        records["done"].astype(np.float64),
        records["truncated"].astype(np.float64),
        env_id,
        grade,
        int(seed),
    )
