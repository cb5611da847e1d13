"""Layer specs and builders for the generator and discriminator.

The discriminator exposes two feature taps: a low-dimensional layer f(x)
(K units, the descriptor) and a high-dimensional layer h(x) (M units,
M > K) whose signed codes steer the regularizers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .tensor import Tensor

EPS_NORM = 1e-5


@dataclass
class LayerSpec:
    kind: str
    units: int = 0          # output channels / units for parameterized kinds
    stride: int = 1
    pad: int = 1
    slope: float = 0.2
    shape: tuple = ()       # target shape for reshape (without batch dim)

    def param_shapes(self, in_shape):
        """Parameter shapes given the incoming per-example shape."""
        if self.kind == "conv3x3":
            c = in_shape[0]
            return {"w": (self.units, c, 3, 3), "b": (self.units, 1, 1)}
        if self.kind == "nin1x1":
            c = in_shape[0]
            return {"w": (self.units, c, 1, 1), "b": (self.units, 1, 1)}
        if self.kind == "dense":
            return {"w": (in_shape[0], self.units), "b": (self.units,)}
        if self.kind == "batch_stats_norm":
            c = in_shape[0]
            return {"gain": (c,), "bias": (c,)}
        return {}

    def out_shape(self, in_shape):
        """Per-example output shape; raises if the layers do not compose."""
        k = self.kind
        if k in ("conv3x3", "nin1x1"):
            if len(in_shape) != 3:
                raise DimensionError(f"{k} needs CHW input, got {in_shape}")
            c, h, w = in_shape
            ksz = 3 if k == "conv3x3" else 1
            pad = self.pad if k == "conv3x3" else 0
            if (h + 2 * pad - ksz) % self.stride or (w + 2 * pad - ksz) % self.stride:
                raise DimensionError(f"{k}: non-integral output from {in_shape}")
            ho = (h + 2 * pad - ksz) // self.stride + 1
            wo = (w + 2 * pad - ksz) // self.stride + 1
            if ho < 1 or wo < 1:
                raise DimensionError(f"{k}: kernel does not fit {in_shape}")
            return (self.units, ho, wo)
        if k == "dense":
            if len(in_shape) != 1:
                raise DimensionError(f"dense needs flat input, got {in_shape}")
            return (self.units,)
        if k == "avg_pool_global":
            if len(in_shape) != 3:
                raise DimensionError(f"avg_pool_global needs CHW, got {in_shape}")
            return (in_shape[0],)
        if k == "reshape":
            if int(np.prod(in_shape)) != int(np.prod(self.shape)):
                raise DimensionError(f"reshape {in_shape} -> {self.shape}")
            return tuple(self.shape)
        if k == "upsample2x":
            c, h, w = in_shape
            return (c, 2 * h, 2 * w)
        if k in ("leaky_relu", "tanh", "sigmoid", "batch_stats_norm"):
            return tuple(in_shape)
        raise ConfigError(f"unknown layer kind {k!r}")


class Network:
    """Ordered layer stack with a parameter store and two feature taps."""

    def __init__(self, specs, input_shape, tap_f, tap_h, seed=0, dtype=np.float64):
        self.specs = list(specs)
        self.input_shape = tuple(input_shape)
        self.tap_f = tap_f
        self.tap_h = tap_h
        self.dtype = dtype
        self.layer_shapes = self._compose_shapes()
        self.params = self._init_params(seed)
        if tap_f is not None and tap_h is not None:
            k = int(np.prod(self.layer_shapes[tap_f + 1]))
            m = int(np.prod(self.layer_shapes[tap_h + 1]))
            if m <= k:
                raise ConfigError(f"tap dims must satisfy M > K, got M={m}, K={k}")
            self.k_dim = k
            self.m_dim = m

    def _compose_shapes(self):
        shapes = [self.input_shape]
        cur = self.input_shape
        for spec in self.specs:
            cur = spec.out_shape(cur)
            shapes.append(cur)
        return shapes

    def _init_params(self, seed):
        if not isinstance(seed, np.random.SeedSequence):
            seed = np.random.SeedSequence(seed)
        rng = np.random.default_rng(seed)
        params = []
        for i, spec in enumerate(self.specs):
            shapes = spec.param_shapes(self.layer_shapes[i])
            layer = {}
            for name, shp in shapes.items():
                if name in ("b", "bias"):
                    data = np.zeros(shp, dtype=self.dtype)
                elif name == "gain":
                    data = np.ones(shp, dtype=self.dtype)
                else:
                    # fan-in-scaled Gaussian keeps activation variance roughly
                    # constant through the stack (weight shapes are either
                    # (out, in) dense or (out, in, kh, kw) conv)
                    fan_in = int(np.prod(shp[1:]))
                    std = np.sqrt(2.0 / fan_in)
                    data = (std * rng.standard_normal(shp)).astype(self.dtype)
                layer[name] = Tensor(data, requires_grad=True, dtype=self.dtype)
            params.append(layer)
        return params

    def parameters(self):
        """Stable (name, tensor) pairs, e.g. ('L03.w', Tensor)."""
        out = []
        for i, layer in enumerate(self.params):
            for name in sorted(layer):
                out.append((f"L{i:02d}.{name}", layer[name]))
        return out

    def _apply(self, spec, p, x):
        k = spec.kind
        if k == "conv3x3":
            return T.conv2d(x, p["w"], stride=spec.stride, pad=spec.pad) + p["b"]
        if k == "nin1x1":
            return T.conv2d(x, p["w"], stride=1, pad=0) + p["b"]
        if k == "dense":
            return T.matmul(x, p["w"]) + p["b"]
        if k == "leaky_relu":
            return T.leaky_relu(x, slope=spec.slope)
        if k == "tanh":
            return T.tanh(x)
        if k == "sigmoid":
            return T.sigmoid(x)
        if k == "avg_pool_global":
            return T.avg_pool_global(x)
        if k == "reshape":
            return T.reshape(x, (x.shape[0],) + tuple(spec.shape))
        if k == "upsample2x":
            return T.upsample2x(x)
        if k == "batch_stats_norm":
            axes = (0, 2, 3) if len(x.shape) == 4 else (0,)
            mu = T.mean(x, axis=axes, keepdims=True)
            var = T.mean(T.square(x - mu), axis=axes, keepdims=True)
            xn = (x - mu) / T.sqrt(var + EPS_NORM)
            shape = (1, -1, 1, 1) if len(x.shape) == 4 else (1, -1)
            gain = T.reshape(p["gain"], shape)
            bias = T.reshape(p["bias"], shape)
            return xn * gain + bias
        raise ConfigError(f"unknown layer kind {k!r}")

    def forward(self, batch):
        """One pass returning (logit, f, h); taps share the computation."""
        batch = T.as_tensor(batch)
        if tuple(batch.shape[1:]) != self.input_shape:
            raise DimensionError(
                f"input shape {tuple(batch.shape[1:])} != expected {self.input_shape}"
            )
        x = batch
        f = h = None
        for i, (spec, p) in enumerate(zip(self.specs, self.params)):
            x = self._apply(spec, p, x)
            if i == self.tap_f:
                f = _flatten(x)
            if i == self.tap_h:
                h = _flatten(x)
        return x, f, h

    def __call__(self, batch):
        return self.forward(batch)


def _flatten(x):
    n = x.shape[0]
    return x if len(x.shape) == 2 else T.reshape(x, (n, int(np.prod(x.shape[1:]))))


def _conv_stack(channels, strides, pads, slope=0.2):
    specs = []
    for ch, st, pd in zip(channels, strides, pads):
        specs.append(LayerSpec("conv3x3", units=ch, stride=st, pad=pd))
        specs.append(LayerSpec("leaky_relu", slope=slope))
    return specs


def _downsample_plan(h):
    """(stride, pad) for the two reducing convs, plus the final spatial size.

    Output sizes must compose exactly ((H+2p-3) divisible by the stride), so
    reduction uses stride 3 with a computed pad; 3x3 stride 2 can never
    divide evenly from an even input. 32x32 uses a wider second pad so the
    last conv stage sits at 6x6.
    """
    if h == 32:
        return (3, 2), (3, 3), 6  # 32 -> 12 -> 6
    plan = []
    cur = h
    for _ in range(2):
        for p in (0, 1, 2):
            if (cur + 2 * p - 3) % 3 == 0 and (cur + 2 * p - 3) // 3 + 1 >= 2:
                plan.append((3, p))
                cur = (cur + 2 * p - 3) // 3 + 1
                break
        else:
            raise ConfigError(f"no exact conv reduction plan for input size {h}")
    return plan[0], plan[1], cur


def build_discriminator(task, code_bits=32, profile="paper", in_hw=None,
                        in_channels=None, seed=0, dtype=np.float64):
    """Discriminator for retrieval (color images) or matching (patches).

    `profile="desk"` keeps the topology but divides channel counts by 4 and
    defaults to 16x16 inputs so the full loss mechanics run in seconds.
    """
    if task not in ("retrieval", "matching"):
        raise ConfigError(f"unknown discriminator task {task!r}")
    if profile not in ("paper", "desk"):
        raise ConfigError(f"unknown scale profile {profile!r}")
    div = 4 if profile == "desk" else 1
    if in_hw is None:
        in_hw = 16 if profile == "desk" else 32
    if in_hw < 8:
        raise ConfigError(f"input size {in_hw} too small (need >= 8)")
    (s3, p3), (s6, p6), _ = _downsample_plan(in_hw)

    if task == "matching":
        if in_channels is None:
            in_channels = 1
        # 7 convs; the final conv widens so the reshaped tap gives 9216
        # units at 32x32 input (6x6 spatial x 256 channels).
        channels = [96 // div] * 3 + [128 // div] * 3 + [256 // div]
        strides = [1, 1, s3, 1, 1, s6, 1]
        pads = [1, 1, p3, 1, 1, p6, 1]
        specs = _conv_stack(channels, strides, pads)
        tap_h = len(specs) - 1  # activation after last conv
        specs += [
            LayerSpec("nin1x1", units=256 // div),
            LayerSpec("leaky_relu"),
            LayerSpec("avg_pool_global"),
        ]
        tap_f = len(specs) - 1  # average-pooled wide NiN output
        specs += [
            LayerSpec("dense", units=128 // div),
            LayerSpec("leaky_relu"),
            LayerSpec("dense", units=1),
        ]
    else:
        if profile == "paper" and code_bits not in (16, 32, 64):
            raise ConfigError(f"retrieval code_bits must be 16/32/64, got {code_bits}")
        if code_bits < 1:
            raise ConfigError(f"code_bits must be positive, got {code_bits}")
        if in_channels is None:
            in_channels = 3
        channels = [96 // div] * 3 + [192 // div] * 4
        strides = [1, 1, s3, 1, 1, s6, 1]
        pads = [1, 1, p3, 1, 1, p6, 1]
        specs = _conv_stack(channels, strides, pads)
        specs += [
            LayerSpec("nin1x1", units=192 // div),
            LayerSpec("leaky_relu"),
            LayerSpec("nin1x1", units=192 // div),
            LayerSpec("leaky_relu"),
            LayerSpec("avg_pool_global"),
        ]
        tap_h = len(specs) - 1  # average-pooled last NiN
        specs += [LayerSpec("dense", units=code_bits)]
        tap_f = len(specs) - 1  # fully-connected code layer
        specs += [
            LayerSpec("leaky_relu"),
            LayerSpec("dense", units=1),
        ]
    return Network(specs, (in_channels, in_hw, in_hw), tap_f, tap_h,
                   seed=seed, dtype=dtype)


def build_generator(z_dim, out_shape, base_channels=64, seed=0, dtype=np.float64):
    """Upsampling generator: dense to 4x4, double resolution per block, tanh."""
    if z_dim < 1:
        raise ConfigError(f"z_dim must be >= 1, got {z_dim}")
    c_out, h, w = out_shape
    if h != w:
        raise ConfigError(f"generator output must be square, got {out_shape}")
    size, n_blocks = 4, 0
    while size < h:
        size *= 2
        n_blocks += 1
    if size != h:
        raise ConfigError(f"output size {h} not reachable by doubling from 4")

    ch = base_channels
    specs = [
        LayerSpec("dense", units=ch * 4 * 4),
        LayerSpec("reshape", shape=(ch, 4, 4)),
        LayerSpec("batch_stats_norm"),
        LayerSpec("leaky_relu"),
    ]
    for i in range(n_blocks):
        nxt = max(ch // 2, 8)
        specs += [
            LayerSpec("upsample2x"),
            LayerSpec("conv3x3", units=nxt, stride=1, pad=1),
            LayerSpec("batch_stats_norm"),
            LayerSpec("leaky_relu"),
        ]
        ch = nxt
    specs += [
        LayerSpec("conv3x3", units=c_out, stride=1, pad=1),
        LayerSpec("tanh"),
    ]
    return Network(specs, (z_dim,), None, None, seed=seed, dtype=dtype)
