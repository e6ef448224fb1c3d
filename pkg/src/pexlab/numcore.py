"""Dense-network numerical engine.

Hand-rolled forward/backward passes for small ReLU MLPs, a bias-corrected
Adam optimizer, Polyak target blending, a finite-difference gradient
checker, and the versioned binary checkpoint format.

Everything is float64. Parameters live in one contiguous flat vector with
per-layer matrix/vector views into it, so whole-network updates (Adam,
target blending) are single vectorized ops. That layout is also exactly
the on-disk payload order of the checkpoint format.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagicError,
    ChecksumError,
    NumericsError,
    ShapeError,
    TruncatedFileError,
    VersionError,
)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

CHECKPOINT_MAGIC = b"PEXC"
CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------


def _flat_size(layer_sizes: list[int]) -> int:
    return sum(
        layer_sizes[i + 1] * layer_sizes[i] + layer_sizes[i + 1]
        for i in range(len(layer_sizes) - 1)
    )


def _carve_views(
    layer_sizes: list[int], flat: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Slice the flat vector into per-layer (out, in) weight and (out,) bias views."""
    weights, biases, offset = [], [], 0
    for i in range(len(layer_sizes) - 1):
        n_in, n_out = layer_sizes[i], layer_sizes[i + 1]
        weights.append(flat[offset : offset + n_out * n_in].reshape(n_out, n_in))
        offset += n_out * n_in
        biases.append(flat[offset : offset + n_out])
        offset += n_out
    return weights, biases


@dataclass
class MlpParams:
    """Weights and biases of a dense ReLU network (linear output layer).

    weights[i] has shape (layer_sizes[i+1], layer_sizes[i]); biases[i] has
    length layer_sizes[i+1]. Both are views into ``flat``; mutate either side
    and the other follows.
    """

    layer_sizes: list[int]
    flat: np.ndarray
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def zeros(cls, layer_sizes: list[int]) -> "MlpParams":
        if len(layer_sizes) < 2 or any(n <= 0 for n in layer_sizes):
            raise ShapeError(f"need >= 2 positive layer sizes, got {layer_sizes}")
        flat = np.zeros(_flat_size(layer_sizes), dtype=np.float64)
        w, b = _carve_views(layer_sizes, flat)
        return cls(list(layer_sizes), flat, w, b)

    @classmethod
    def init(cls, layer_sizes: list[int], rng: np.random.Generator) -> "MlpParams":
        """Seeded uniform init in +-1/sqrt(fan_in) for weights and biases."""
        params = cls.zeros(layer_sizes)
        for w, b in zip(params.weights, params.biases):
            bound = 1.0 / np.sqrt(w.shape[1])
            w[...] = rng.uniform(-bound, bound, size=w.shape)
            b[...] = rng.uniform(-bound, bound, size=b.shape)
        return params

    @classmethod
    def from_arrays(
        cls, weights: list[np.ndarray], biases: list[np.ndarray]
    ) -> "MlpParams":
        sizes = [weights[0].shape[1]] + [w.shape[0] for w in weights]
        params = cls.zeros(sizes)
        for dst, src in zip(params.weights, weights):
            if dst.shape != np.shape(src):
                raise ShapeError(f"weight shape {np.shape(src)} != {dst.shape}")
            dst[...] = src
        for dst, src in zip(params.biases, biases):
            if dst.shape != np.shape(src):
                raise ShapeError(f"bias shape {np.shape(src)} != {dst.shape}")
            dst[...] = src
        return params

    def copy(self) -> "MlpParams":
        out = MlpParams.zeros(self.layer_sizes)
        out.flat[...] = self.flat
        return out

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]


# Gradients share the flat-plus-views layout of the parameters they mirror.
MlpGrads = MlpParams


@dataclass
class ActivationTape:
    """Per-layer records from one forward pass, enough for exact backprop."""

    inputs: np.ndarray  # (batch, layer_sizes[0])
    pre_activations: list[np.ndarray]  # z_i = a_{i-1} W_i^T + b_i, (batch, out_i)
    post_activations: list[np.ndarray]  # relu(z_i) for hidden, z_L for the output


@dataclass
class AdamState:
    """First/second moment accumulators for one flat parameter vector.

    ``scratch`` is a same-size work buffer that keeps the update free of
    temporaries; it carries no state between steps.
    """

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    scratch: np.ndarray | None = None

    @classmethod
    def for_size(cls, n: int) -> "AdamState":
        return cls(np.zeros(n, dtype=np.float64), np.zeros(n, dtype=np.float64))

    @classmethod
    def for_params(cls, params: MlpParams) -> "AdamState":
        return cls.for_size(params.flat.size)


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


def mlp_forward(
    params: MlpParams, inputs: np.ndarray
) -> tuple[np.ndarray, ActivationTape]:
    """Run the network on a (batch, in_dim) array.

    Hidden layers are ReLU, the output layer is linear. Returns the
    (batch, out_dim) output and the tape needed by mlp_backward.
    """
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise ShapeError(
            f"input shape {x.shape} incompatible with input dim {params.in_dim}"
        )
    last = len(params.weights) - 1
    a = x
    pre, post = [], []
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        pre.append(z)
        a = z if i == last else np.maximum(z, 0.0)
        post.append(a)
    return a, ActivationTape(x, pre, post)


def mlp_value(params: MlpParams, inputs: np.ndarray) -> np.ndarray:
    """Tapeless forward pass for inference-only callers."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise ShapeError(
            f"input shape {x.shape} incompatible with input dim {params.in_dim}"
        )
    last = len(params.weights) - 1
    a = x
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        a = z if i == last else np.maximum(z, 0.0)
    return a


def mlp_backward(
    params: MlpParams,
    tape: ActivationTape,
    output_grad: np.ndarray,
    with_input_grad: bool = False,
) -> MlpGrads | tuple[MlpGrads, np.ndarray]:
    """Exact reverse-mode gradients of sum(output * output_grad).

    Returns gradients shaped like the parameters; with ``with_input_grad``
    also returns d/d(inputs), which critics use for action gradients.
    """
    if len(tape.pre_activations) != len(params.weights):
        raise ShapeError(
            f"tape has {len(tape.pre_activations)} layers, params have "
            f"{len(params.weights)}"
        )
    for z, w in zip(tape.pre_activations, params.weights):
        if z.shape[1] != w.shape[0]:
            raise ShapeError(f"tape layer width {z.shape[1]} != {w.shape[0]}")
    delta = np.asarray(output_grad, dtype=np.float64)
    if delta.shape != tape.post_activations[-1].shape:
        raise ShapeError(
            f"output_grad shape {delta.shape} != output shape "
            f"{tape.post_activations[-1].shape}"
        )
    grads = MlpParams.zeros(params.layer_sizes)
    for i in range(len(params.weights) - 1, -1, -1):
        layer_in = tape.inputs if i == 0 else tape.post_activations[i - 1]
        grads.weights[i][...] = delta.T @ layer_in
        grads.biases[i][...] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i]) * (
                tape.pre_activations[i - 1] > 0.0
            )
        elif with_input_grad:
            return grads, delta @ params.weights[0]
    return grads


# ---------------------------------------------------------------------------
# Optimizer and target blending
# ---------------------------------------------------------------------------


def adam_step_flat(
    values: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    lr: float,
    where: str = "parameter",
) -> None:
    """Bias-corrected Adam update on a flat vector, in place."""
    if values.shape != grad.shape or values.shape != state.first_moment.shape:
        raise ShapeError(
            f"{where}: shapes {values.shape}/{grad.shape}/"
            f"{state.first_moment.shape} disagree"
        )
    if not np.isfinite(grad).all():
        raise NumericsError(f"non-finite gradient entries in {where}")
    state.step_count += 1
    t = state.step_count
    m, v = state.first_moment, state.second_moment
    if state.scratch is None:
        state.scratch = np.empty_like(m)
    s = state.scratch
    m *= ADAM_BETA1
    np.multiply(grad, 1.0 - ADAM_BETA1, out=s)
    m += s
    v *= ADAM_BETA2
    np.multiply(grad, grad, out=s)
    s *= 1.0 - ADAM_BETA2
    v += s
    # values -= lr * m_hat / (sqrt(v_hat) + eps), with the bias corrections
    # folded into scalars.
    np.sqrt(v, out=s)
    s /= np.sqrt(1.0 - ADAM_BETA2**t)
    s += ADAM_EPS
    np.divide(m, s, out=s)
    s *= lr / (1.0 - ADAM_BETA1**t)
    values -= s


def adam_step(params: MlpParams, grads: MlpGrads, state: AdamState, lr: float) -> None:
    """One Adam step on a network, in place. Rejects non-finite gradients."""
    if params.layer_sizes != grads.layer_sizes:
        raise ShapeError(
            f"params {params.layer_sizes} vs grads {grads.layer_sizes}"
        )
    if lr < 0.0:
        raise ValueError(f"learning rate must be nonnegative, got {lr}")
    if not np.isfinite(grads.flat).all():
        for i, (gw, gb) in enumerate(zip(grads.weights, grads.biases)):
            if not (np.isfinite(gw).all() and np.isfinite(gb).all()):
                raise NumericsError(f"non-finite gradient entries in layer {i}")
    adam_step_flat(params.flat, grads.flat, state, lr)


def soft_update(target: MlpParams, online: MlpParams, speed: float) -> None:
    """target <- (1 - speed) * target + speed * online, entrywise, in place."""
    if target.layer_sizes != online.layer_sizes:
        raise ShapeError(
            f"target {target.layer_sizes} vs online {online.layer_sizes}"
        )
    if not 0.0 < speed <= 1.0:
        raise ValueError(f"update speed must be in (0, 1], got {speed}")
    target.flat *= 1.0 - speed
    target.flat += speed * online.flat


# ---------------------------------------------------------------------------
# Finite-difference gradient checking
# ---------------------------------------------------------------------------


def grad_check(loss_fn, params: MlpParams, step: float = 1e-5) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``loss_fn(params) -> (scalar, MlpGrads)`` must be deterministic; only the
    first call's gradients are used, the rest evaluate the perturbed loss.
    Non-finite comparisons come back as inf.
    """
    _, grads = loss_fn(params)
    analytic = grads.flat.copy()
    flat = params.flat
    worst = 0.0
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        loss_plus, _ = loss_fn(params)
        flat[i] = original - step
        loss_minus, _ = loss_fn(params)
        flat[i] = original
        numeric = (loss_plus - loss_minus) / (2.0 * step)
        if not (np.isfinite(numeric) and np.isfinite(analytic[i])):
            return float("inf")
        err = abs(analytic[i] - numeric) / max(1.0, abs(analytic[i]), abs(numeric))
        worst = max(worst, err)
    return worst


def fd_grad_vector(loss_fn, values: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of ``loss_fn(values) -> scalar`` over a vector."""
    out = np.zeros_like(values)
    for i in range(values.size):
        original = values[i]
        values[i] = original + step
        loss_plus = loss_fn(values)
        values[i] = original - step
        loss_minus = loss_fn(values)
        values[i] = original
        out[i] = (loss_plus - loss_minus) / (2.0 * step)
    return out


# ---------------------------------------------------------------------------
# Checkpoint format ("PEXC")
# ---------------------------------------------------------------------------
#
# magic "PEXC" | version u16 | network count u16 | per network:
#   name length u16, UTF-8 name, layer count u16, layer sizes u32...,
#   per layer: weight f64 row-major then bias f64
# | CRC32 u32 of everything after the version field.
# All integers and floats little-endian.


def save_checkpoint(path, networks: dict[str, MlpParams]) -> None:
    body = bytearray()
    body += struct.pack("<H", len(networks))
    for name, params in networks.items():
        encoded = name.encode("utf-8")
        body += struct.pack("<H", len(encoded))
        body += encoded
        body += struct.pack("<H", len(params.layer_sizes))
        body += struct.pack(f"<{len(params.layer_sizes)}I", *params.layer_sizes)
        body += params.flat.astype("<f8").tobytes()
    blob = CHECKPOINT_MAGIC + struct.pack("<H", CHECKPOINT_VERSION) + bytes(body)
    blob += struct.pack("<I", zlib.crc32(bytes(body)))
    with open(path, "wb") as fh:
        fh.write(blob)


def load_checkpoint(path) -> dict[str, MlpParams]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 6:
        raise TruncatedFileError(f"{path}: shorter than the fixed header")
    if blob[:4] != CHECKPOINT_MAGIC:
        raise BadMagicError(f"{path}: magic {blob[:4]!r} != {CHECKPOINT_MAGIC!r}")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise VersionError(f"{path}: version {version} unsupported")
    if len(blob) < 10:
        raise TruncatedFileError(f"{path}: missing checksum")
    body, (stored_crc,) = blob[6:-4], struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(body) != stored_crc:
        raise ChecksumError(f"{path}: payload CRC mismatch")

    networks: dict[str, MlpParams] = {}
    offset = 0

    def take(fmt: str):
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(body):
            raise TruncatedFileError(f"{path}: payload ended inside a field")
        values = struct.unpack_from(fmt, body, offset)
        offset += size
        return values

    (count,) = take("<H")
    for _ in range(count):
        (name_len,) = take("<H")
        if offset + name_len > len(body):
            raise TruncatedFileError(f"{path}: payload ended inside a name")
        name = body[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (n_layers,) = take("<H")
        sizes = list(take(f"<{n_layers}I"))
        params = MlpParams.zeros(sizes)
        n_floats = params.flat.size
        if offset + 8 * n_floats > len(body):
            raise TruncatedFileError(f"{path}: payload ended inside network {name}")
        params.flat[...] = np.frombuffer(body, dtype="<f8", count=n_floats, offset=offset)
        offset += 8 * n_floats
        networks[name] = params
    if offset != len(body):
        raise TruncatedFileError(f"{path}: {len(body) - offset} trailing bytes")
    return networks
