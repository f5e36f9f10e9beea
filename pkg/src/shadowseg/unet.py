"""Residual U-net with Swish activations and a two-channel ReLU head.

Layout for ``depth`` levels and ``base`` channels::

    enc{l}   residual block -> base * 2**l channels, then 2x2 max pool
    mid      residual block -> base * 2**depth channels
    up{l}    nearest 2x upsample + 3x3 conv down to base * 2**l channels,
    dec{l}   concat with enc{l} output, residual block
    head     1x1 conv to 2 channels + ReLU  (0: binary, 1: centroid)

A residual block is ``swish(conv3(swish(conv3(x))) + shortcut(x))`` where the
shortcut is the identity, or a 1x1 conv when the channel count changes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError, ConfigError, DimensionError
from .tensor import (
    GradTape,
    Tensor,
    activation,
    add,
    channel,
    concat_channels,
    conv2d,
    maxpool2,
    upsample2,
)

MAGIC = b"STCK"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class UNetConfig:
    depth: int = 3
    base_channels: int = 16
    in_channels: int = 1
    out_channels: int = 2

    def validate(self) -> "UNetConfig":
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if self.base_channels < 1:
            raise ConfigError(f"base_channels must be >= 1, got {self.base_channels}")
        if self.in_channels != 1 or self.out_channels != 2:
            raise ConfigError("the network maps 1 input channel to 2 output channels")
        return self


DESK = UNetConfig(depth=3, base_channels=8)
REFERENCE = UNetConfig(depth=3, base_channels=16)


def _block_shapes(prefix: str, cin: int, cout: int) -> list[tuple[str, tuple[int, ...]]]:
    shapes = [
        (f"{prefix}.conv1.w", (cout, cin, 3, 3)),
        (f"{prefix}.conv1.b", (cout,)),
        (f"{prefix}.conv2.w", (cout, cout, 3, 3)),
        (f"{prefix}.conv2.b", (cout,)),
    ]
    if cin != cout:
        shapes += [(f"{prefix}.skip.w", (cout, cin, 1, 1)), (f"{prefix}.skip.b", (cout,))]
    return shapes


def param_shapes(cfg: UNetConfig) -> dict[str, tuple[int, ...]]:
    """Parameter names and shapes in their canonical (deterministic) order."""
    cfg.validate()
    base = cfg.base_channels
    shapes: list[tuple[str, tuple[int, ...]]] = []
    cin = cfg.in_channels
    for lvl in range(cfg.depth):
        cout = base * 2**lvl
        shapes += _block_shapes(f"enc{lvl}", cin, cout)
        cin = cout
    shapes += _block_shapes("mid", cin, base * 2**cfg.depth)
    cin = base * 2**cfg.depth
    for lvl in reversed(range(cfg.depth)):
        cout = base * 2**lvl
        shapes += [(f"up{lvl}.w", (cout, cin, 3, 3)), (f"up{lvl}.b", (cout,))]
        shapes += _block_shapes(f"dec{lvl}", 2 * cout, cout)
        cin = cout
    shapes += [("head.w", (cfg.out_channels, cin, 1, 1)), ("head.b", (cfg.out_channels,))]
    return dict(shapes)


def init_params(cfg: UNetConfig, seed: int = 0, dtype=np.float32, head_bias: float = 0.0,
                head_gain: float = 1.0) -> dict[str, Tensor]:
    """He-normal kernels and zero biases, deterministic in ``seed``.

    ``head_bias`` and ``head_gain`` adjust only the 1x1 output layer.  With
    the defaults the ReLU head starts with whole channels below zero for many
    seeds and never recovers under the clamped BCE; training therefore uses a
    positive bias and a damped kernel there (see ``TRAIN_HEAD_INIT``).
    """
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".b"):
            data = np.full(shape, head_bias if name == "head.b" else 0.0, dtype=dtype)
        else:
            fan_in = shape[1] * shape[2] * shape[3]
            gain = head_gain if name == "head.w" else 1.0
            data = (rng.standard_normal(shape) * (gain * np.sqrt(2.0 / fan_in))).astype(dtype)
        params[name] = Tensor(data, requires_grad=True, name=name)
    return params


# Output-layer initialization used when training from scratch.
TRAIN_HEAD_INIT = {"head_bias": 0.5, "head_gain": 0.1}


def config_of(params: dict[str, Tensor]) -> UNetConfig:
    depth = sum(1 for k in params if k.startswith("enc") and k.endswith(".conv1.w"))
    if depth == 0 or "enc0.conv1.w" not in params:
        raise ConfigError("parameter set does not describe a U-net")
    return UNetConfig(depth=depth, base_channels=params["enc0.conv1.w"].shape[0])


def _conv(params, name, x):
    return conv2d(x, params[f"{name}.w"], params[f"{name}.b"])


def _residual(params, prefix, x):
    h = activation(_conv(params, f"{prefix}.conv1", x), "swish")
    h = _conv(params, f"{prefix}.conv2", h)
    short = _conv(params, f"{prefix}.skip", x) if f"{prefix}.skip.w" in params else x
    return activation(add(h, short), "swish")


def apply(params: dict[str, Tensor], x: Tensor) -> Tensor:
    """Run the network on ``[1,H,W]`` or ``[N,1,H,W]`` input; returns ``[.., 2, H, W]``.

    Operations are recorded on any active :class:`GradTape`.
    """
    depth = config_of(params).depth
    h, w = x.shape[-2:]
    if h % 2**depth or w % 2**depth:
        raise DimensionError(f"input {h}x{w} not divisible by 2**depth = {2**depth}")
    skips = []
    for lvl in range(depth):
        x = _residual(params, f"enc{lvl}", x)
        skips.append(x)
        x = maxpool2(x)
    x = _residual(params, "mid", x)
    for lvl in reversed(range(depth)):
        x = _conv(params, f"up{lvl}", upsample2(x))
        x = concat_channels(skips[lvl], x)
        x = _residual(params, f"dec{lvl}", x)
    return activation(_conv(params, "head", x), "relu")


def _as_input(image, dtype) -> Tensor:
    arr = np.asarray(image, dtype=dtype)
    if arr.ndim == 2:
        arr = arr[None]
    elif arr.ndim == 3:
        arr = arr[:, None]
    else:
        raise DimensionError(f"expected an [H,W] image or an [N,H,W] stack, got {arr.shape}")
    return Tensor(arr)


def forward(params: dict[str, Tensor], image) -> tuple[Tensor, Tensor, GradTape]:
    """Binary and centroid channels for a 2-D image, with the tape that recorded them."""
    dtype = next(iter(params.values())).dtype
    tape = GradTape()
    with tape:
        out = apply(params, _as_input(image, dtype))
        binary = channel(out, 0)
        centroid = channel(out, 1)
    return binary, centroid, tape


def predict(params: dict[str, Tensor], image) -> tuple[np.ndarray, np.ndarray]:
    """Inference only: ``(binary, centroid)`` arrays for an image or an image stack."""
    dtype = next(iter(params.values())).dtype
    # Detached copies keep inference off the tape and skip gradient bookkeeping.
    frozen = {k: Tensor(v.data) for k, v in params.items()}
    out = apply(frozen, _as_input(image, dtype)).data
    ch = out.ndim - 3
    return np.take(out, 0, axis=ch), np.take(out, 1, axis=ch)


# -- checkpoints ------------------------------------------------------------


def save_checkpoint(params: dict[str, Tensor], cfg: UNetConfig, path) -> None:
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(params))]
    for name, t in params.items():
        raw = name.encode("utf-8")
        dims = t.shape
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack(f"<B{len(dims)}I", len(dims), *dims))
        chunks.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    chunks.append(struct.pack("<II", cfg.depth, cfg.base_channels))
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> tuple[dict[str, Tensor], UNetConfig]:
    buf = Path(path).read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"{path}: truncated checkpoint")
        out = buf[pos : pos + n]
        pos += n
        return out

    if take(4) != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint")
    version, count = struct.unpack("<II", take(8))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(take(4 * size), dtype="<f4").astype(np.float32).reshape(dims)
        arrays[name] = data
    depth, base = struct.unpack("<II", take(8))
    if pos != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - pos} trailing bytes")
    try:
        cfg = UNetConfig(depth=depth, base_channels=base).validate()
    except ConfigError as exc:
        raise CheckpointError(f"{path}: {exc}") from None
    expected = param_shapes(cfg)
    if list(expected) != list(arrays):
        raise CheckpointError(f"{path}: parameter names do not match a depth-{depth} U-net")
    for name, shape in expected.items():
        if arrays[name].shape != shape:
            raise CheckpointError(
                f"{path}: {name} has shape {arrays[name].shape}, expected {shape}"
            )
    params = {k: Tensor(v, requires_grad=True, name=k) for k, v in arrays.items()}
    return params, cfg
