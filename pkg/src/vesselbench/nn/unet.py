"""U-Net assembly: config, parameter init, forward/backward, checkpoints.

Architecture (per level, same-padding everywhere, spatial dims preserved):

    encoder   x depth : [conv-relu, conv-relu, maxpool/2]
    bottleneck        : [conv-relu, conv-relu]
    decoder   x depth : [upsample x2, conv (no relu), concat skip,
                         conv-relu, conv-relu]
    head              : 1x1 conv + sigmoid -> 1 channel

Channels double per level from ``base_channels``. The decoder upsamples
with nearest-neighbour followed by a convolution (no transposed conv,
no checkerboard artifacts). Weights use He fan-in init from the
counter-based RNG; biases start at zero.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict

import numpy as np

from ..errors import ConfigError, FormatError, ShapeError
from ..rng import CounterRng
from .tensor import Tensor
from . import functional as F


@dataclass(frozen=True)
class UNetConfig:
    ndim: int
    in_shape: tuple[int, ...]
    depth: int = 2
    base_channels: int = 10
    growth: int = 2
    kernel: int = 3

    def __post_init__(self):
        if self.ndim not in (2, 3):
            raise ConfigError(f"ndim must be 2 or 3, got {self.ndim}")
        if len(self.in_shape) != self.ndim:
            raise ConfigError(f"in_shape {self.in_shape} does not match ndim {self.ndim}")
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")
        if self.kernel % 2 == 0:
            raise ConfigError("kernel must be odd")
        div = 2 ** self.depth
        if any(s % div for s in self.in_shape):
            raise ConfigError(
                f"input dims {self.in_shape} must be divisible by 2**depth = {div}"
            )

    def channels(self, level: int) -> int:
        return self.base_channels * self.growth ** level


@dataclass(frozen=True)
class LayerDef:
    name: str
    c_in: int
    c_out: int
    kernel: int  # 1 for the head conv


def layer_plan(cfg: UNetConfig) -> list[LayerDef]:
    """Ordered conv layers; pool/upsample/concat carry no parameters."""
    plan = []
    c_prev = 1
    for lvl in range(cfg.depth):
        c = cfg.channels(lvl)
        plan.append(LayerDef(f"enc{lvl}.conv1", c_prev, c, cfg.kernel))
        plan.append(LayerDef(f"enc{lvl}.conv2", c, c, cfg.kernel))
        c_prev = c
    c_b = cfg.channels(cfg.depth)
    plan.append(LayerDef("bottleneck.conv1", c_prev, c_b, cfg.kernel))
    plan.append(LayerDef("bottleneck.conv2", c_b, c_b, cfg.kernel))
    c_prev = c_b
    for lvl in reversed(range(cfg.depth)):
        c = cfg.channels(lvl)
        plan.append(LayerDef(f"dec{lvl}.upconv", c_prev, c, cfg.kernel))
        plan.append(LayerDef(f"dec{lvl}.conv1", 2 * c, c, cfg.kernel))
        plan.append(LayerDef(f"dec{lvl}.conv2", c, c, cfg.kernel))
        c_prev = c
    plan.append(LayerDef("head.conv", c_prev, 1, 1))
    return plan


def count_params(cfg: UNetConfig) -> int:
    """Closed-form trainable parameter count."""
    total = 0
    for layer in layer_plan(cfg):
        total += layer.c_out * layer.c_in * layer.kernel ** cfg.ndim + layer.c_out
    return total


class UNetParams:
    """Ordered weight/bias tensors matching a config's layer plan."""

    def __init__(self, tensors: list[Tensor], rng_seed: int):
        self.tensors = tensors
        self.rng_seed = rng_seed

    def __iter__(self):
        return iter(self.tensors)

    def __len__(self):
        return len(self.tensors)

    def n_params(self) -> int:
        return sum(t.size for t in self.tensors)

    def copy(self) -> "UNetParams":
        return UNetParams([t.copy() for t in self.tensors], self.rng_seed)

    def zero_grad(self):
        for t in self.tensors:
            t.zero_grad()


def build_unet(cfg: UNetConfig, rng_seed: int, dtype=np.float32) -> UNetParams:
    """He fan-in initialized parameters, reproducible from the seed."""
    rng = CounterRng(rng_seed)
    tensors = []
    for idx, layer in enumerate(layer_plan(cfg)):
        kshape = (layer.c_out, layer.c_in) + (layer.kernel,) * cfg.ndim
        fan_in = layer.c_in * layer.kernel ** cfg.ndim
        scale = np.sqrt(2.0 / fan_in)
        w = rng.derive("layer", idx).normal(int(np.prod(kshape))).reshape(kshape)
        tensors.append(Tensor((w * scale).astype(dtype), name=f"{layer.name}.w"))
        tensors.append(Tensor(np.zeros(layer.c_out, dtype=dtype), name=f"{layer.name}.b"))
    return UNetParams(tensors, rng_seed)


class UNet:
    """Forward/backward through the fixed topology.

    Single-writer: one forward stores the caches consumed by the next
    backward. Inference with frozen params on independent inputs is safe
    in parallel only with separate UNet instances.
    """

    def __init__(self, cfg: UNetConfig, params: UNetParams):
        expect = 2 * len(layer_plan(cfg))
        if len(params) != expect:
            raise ConfigError(
                f"parameter list has {len(params)} tensors, config needs {expect}"
            )
        self.cfg = cfg
        self.params = params
        self._tape = None

    def _layer(self, i: int) -> tuple[Tensor, Tensor]:
        return self.params.tensors[2 * i], self.params.tensors[2 * i + 1]

    def forward(self, x: np.ndarray) -> np.ndarray:
        """x: (B, 1, *in_shape) -> probabilities of the same shape."""
        cfg = self.cfg
        if x.ndim != cfg.ndim + 2 or x.shape[1] != 1:
            raise ShapeError(f"expected (B, 1, *spatial) input, got {x.shape}")
        if tuple(x.shape[2:]) != tuple(cfg.in_shape):
            div = 2 ** cfg.depth
            if any(s % div for s in x.shape[2:]):
                raise ShapeError(
                    f"spatial dims {x.shape[2:]} not divisible by 2**depth={div}"
                )
        tape = []
        li = 0
        h = x
        skips = []
        for _ in range(cfg.depth):
            h, li = self._conv_relu(h, li, tape)
            h, li = self._conv_relu(h, li, tape)
            skips.append(h)
            h, cache = F.maxpool_forward(h)
            tape.append(("pool", cache))
        h, li = self._conv_relu(h, li, tape)
        h, li = self._conv_relu(h, li, tape)
        for lvl in reversed(range(cfg.depth)):
            h, cache = F.upsample_forward(h)
            tape.append(("up", cache))
            w, b = self._layer(li)
            h, cache = F.conv_forward(h, w.data, b.data)
            tape.append(("conv", li, cache))
            li += 1
            h, cache = F.concat_forward(h, skips[lvl])
            tape.append(("concat", cache))
            h, li = self._conv_relu(h, li, tape)
            h, li = self._conv_relu(h, li, tape)
        w, b = self._layer(li)
        h, cache = F.conv_forward(h, w.data, b.data)
        tape.append(("conv", li, cache))
        y, cache = F.sigmoid_forward(h)
        tape.append(("sigmoid", cache))
        self._tape = tape
        return y

    def _conv_relu(self, h, li, tape):
        w, b = self._layer(li)
        h, cache = F.conv_forward(h, w.data, b.data)
        tape.append(("conv", li, cache))
        h, cache = F.relu_forward(h)
        tape.append(("relu", cache))
        return h, li + 1

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Forward pass that discards the backward tape (inference)."""
        y = self.forward(x)
        self._tape = None
        return y

    def backward(self, grad_y: np.ndarray) -> None:
        """Accumulate parameter gradients for the last forward pass."""
        if self._tape is None:
            raise ShapeError("backward called before forward")
        grads: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        g = grad_y
        pending_concat: list[np.ndarray] = []
        for entry in reversed(self._tape):
            kind = entry[0]
            if kind == "sigmoid":
                g = F.sigmoid_backward(g, entry[1])
            elif kind == "relu":
                g = F.relu_backward(g, entry[1])
            elif kind == "conv":
                _, li, cache = entry
                g, gw, gb = F.conv_backward(g, cache)
                grads[li] = (gw, gb)
            elif kind == "concat":
                g, g_skip = F.concat_backward(g, entry[1])
                pending_concat.append(g_skip)
            elif kind == "up":
                g = F.upsample_backward(g, entry[1])
            elif kind == "pool":
                g = F.maxpool_backward(g, entry[1])
                # add the skip-connection gradient entering above this pool
                g = g + pending_concat.pop()
        for li, (gw, gb) in grads.items():
            w, b = self._layer(li)
            if w.grad is None:
                w.set_grad(gw)
                b.set_grad(gb)
            else:
                w.grad += gw
                b.grad += gb
        self._tape = None


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

_MAGIC = b"VBCK"
_VERSION = 1


def save_checkpoint(path, cfg: UNetConfig, params: UNetParams) -> None:
    """Versioned binary: magic, version, config JSON, raw parameter payloads
    in layer order. Round-trips bit-exactly."""
    meta = asdict(cfg)
    meta["in_shape"] = list(cfg.in_shape)
    header = json.dumps(
        {
            "config": meta,
            "rng_seed": params.rng_seed,
            "dtype": str(params.tensors[0].data.dtype) if len(params) else "float32",
        }
    ).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", _VERSION, len(header)))
        f.write(header)
        for t in params.tensors:
            f.write(np.ascontiguousarray(t.data).tobytes())


def load_checkpoint(path) -> tuple[UNetConfig, UNetParams]:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != _MAGIC:
        raise FormatError(f"magic: expected {_MAGIC!r}")
    version, hlen = struct.unpack_from("<II", raw, 4)
    if version != _VERSION:
        raise FormatError(f"version: unsupported checkpoint version {version}")
    meta = json.loads(raw[12:12 + hlen].decode("utf-8"))
    cfg_raw = dict(meta["config"])
    cfg_raw["in_shape"] = tuple(cfg_raw["in_shape"])
    cfg = UNetConfig(**cfg_raw)
    dtype = np.dtype(meta["dtype"])
    offset = 12 + hlen
    tensors = []
    for layer in layer_plan(cfg):
        kshape = (layer.c_out, layer.c_in) + (layer.kernel,) * cfg.ndim
        for shape, suffix in ((kshape, "w"), ((layer.c_out,), "b")):
            n = int(np.prod(shape))
            nbytes = n * dtype.itemsize
            if offset + nbytes > len(raw):
                raise FormatError("payload: checkpoint truncated")
            arr = np.frombuffer(raw, dtype=dtype, count=n, offset=offset).reshape(shape)
            tensors.append(Tensor(arr.copy(), name=f"{layer.name}.{suffix}"))
            offset += nbytes
    if offset != len(raw):
        raise FormatError("payload: trailing bytes in checkpoint")
    return cfg, UNetParams(tensors, meta["rng_seed"])
