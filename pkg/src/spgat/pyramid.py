"""Five-stream spectral feature pyramid.

One stream per dilation rate (atrous conv -> batch norm -> LeakyReLU) plus a
global spectral-pooling stream (pool -> 1x1x1 conv -> batch norm -> ReLU ->
repeat). Every stream then passes through two bottleneck residual blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import ConfigError, ShapeError
from .ops import BatchNormState
from .tensor import Tensor


@dataclass(frozen=True)
class PyramidConfig:
    dilation_rates: tuple[int, ...] = (1, 12, 24, 36)
    branch_channels: int = 24
    bottleneck_mids: tuple[int, int] = (16, 32)
    expansion: int = 2
    kernel: int = 3
    pooling: bool = True
    leaky_slope: float = 0.2
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1

    def __post_init__(self):
        rates = tuple(int(r) for r in self.dilation_rates)
        object.__setattr__(self, "dilation_rates", rates)
        object.__setattr__(self, "bottleneck_mids", tuple(int(m) for m in self.bottleneck_mids))
        if not rates or rates[0] != 1:
            raise ConfigError(f"dilation_rates must start at 1, got {list(rates)}")
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise ConfigError(f"dilation_rates must be strictly increasing, got {list(rates)}")
        if self.branch_channels < 1 or self.expansion < 1 or min(self.bottleneck_mids) < 1:
            raise ConfigError("branch_channels, bottleneck_mids and expansion must be positive")
        if len(self.bottleneck_mids) != 2:
            raise ConfigError("bottleneck_mids must hold exactly two widths")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigError(f"kernel must be a positive odd integer, got {self.kernel}")
        if not 0.0 <= self.leaky_slope < 1.0:
            raise ConfigError(f"leaky_slope must lie in [0, 1), got {self.leaky_slope}")

    @classmethod
    def paper(cls, **overrides) -> "PyramidConfig":
        """Widths as published: bottleneck mids (64, 128), expansion 4."""
        return cls(**{"bottleneck_mids": (64, 128), "expansion": 4, **overrides})

    @property
    def out_channels(self) -> int:
        return self.bottleneck_mids[-1] * self.expansion

    @property
    def num_streams(self) -> int:
        return len(self.dilation_rates) + int(self.pooling)

    def stream_names(self) -> list[str]:
        names = [f"rate{r}" for r in self.dilation_rates]
        return names + (["pool"] if self.pooling else [])


@dataclass
class PyramidOutput:
    streams: list[Tensor]
    names: list[str] = field(default_factory=list)


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = np.sqrt(6.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def _zeros(n: int) -> Tensor:
    return Tensor(np.zeros(n), requires_grad=True)


def _ones(n: int) -> Tensor:
    return Tensor(np.ones(n), requires_grad=True)


def init_bottleneck(rng, prefix: str, cin: int, mid: int, expansion: int, kernel: int,
                    params: dict) -> int:
    cout = mid * expansion
    params[f"{prefix}.reduce.w"] = uniform_init(rng, (mid, cin), cin)
    params[f"{prefix}.reduce.b"] = _zeros(mid)
    params[f"{prefix}.conv.w"] = uniform_init(rng, (mid, mid, kernel), mid * kernel)
    params[f"{prefix}.conv.b"] = _zeros(mid)
    params[f"{prefix}.expand.w"] = uniform_init(rng, (cout, mid), mid)
    params[f"{prefix}.expand.b"] = _zeros(cout)
    if cin != cout:
        params[f"{prefix}.proj.w"] = uniform_init(rng, (cout, cin), cin)
        params[f"{prefix}.proj.b"] = _zeros(cout)
    return cout


def init_pyramid(config: PyramidConfig, rng: np.random.Generator,
                 params: dict | None = None, state: dict | None = None):
    params = {} if params is None else params
    state = {} if state is None else state
    cb, k = config.branch_channels, config.kernel
    for name in config.stream_names():
        p = f"pyr.{name}"
        if name == "pool":
            params[f"{p}.conv.w"] = uniform_init(rng, (cb, 1), 1)
        else:
            params[f"{p}.conv.w"] = uniform_init(rng, (cb, 1, k), k)
        params[f"{p}.conv.b"] = _zeros(cb)
        params[f"{p}.bn.gamma"] = _ones(cb)
        params[f"{p}.bn.beta"] = _zeros(cb)
        state[f"{p}.bn"] = BatchNormState.fresh(cb)
        cin = cb
        for i, mid in enumerate(config.bottleneck_mids):
            cin = init_bottleneck(rng, f"{p}.block{i + 1}", cin, mid, config.expansion, k, params)
    return params, state


def bottleneck(x: Tensor, params: dict, prefix: str, slope: float) -> Tensor:
    """Reduce -> spectral conv -> expand, plus a (projected) skip; activation after the sum."""
    r = ops.leaky_relu(ops.conv_pointwise(x, params[f"{prefix}.reduce.w"],
                                          params[f"{prefix}.reduce.b"]), slope)
    r = ops.leaky_relu(ops.atrous_conv_spectral(r, params[f"{prefix}.conv.w"],
                                                params[f"{prefix}.conv.b"], 1), slope)
    r = ops.conv_pointwise(r, params[f"{prefix}.expand.w"], params[f"{prefix}.expand.b"])
    if f"{prefix}.proj.w" in params:
        skip = ops.conv_pointwise(x, params[f"{prefix}.proj.w"], params[f"{prefix}.proj.b"])
    else:
        skip = x
    return ops.leaky_relu(ops.add(r, skip), slope)


def _bottlenecks(x, params, prefix, config):
    for i in range(len(config.bottleneck_mids)):
        x = bottleneck(x, params, f"{prefix}.block{i + 1}", config.leaky_slope)
    return x


def _check_input(x: Tensor):
    if x.ndim != 5 or x.shape[1] != 1:
        raise ShapeError(f"pyramid input must be [B,1,S,H,W], got {x.shape}")


def branch_forward(x: Tensor, rate: int, params: dict, state: dict, config: PyramidConfig,
                   training: bool) -> Tensor:
    _check_input(x)
    p = f"pyr.rate{rate}"
    y = ops.atrous_conv_spectral(x, params[f"{p}.conv.w"], params[f"{p}.conv.b"], rate)
    y = ops.batch_norm(y, params[f"{p}.bn.gamma"], params[f"{p}.bn.beta"], state[f"{p}.bn"],
                       training, config.bn_eps, config.bn_momentum)
    y = ops.leaky_relu(y, config.leaky_slope)
    return _bottlenecks(y, params, p, config)


def pool_head(x: Tensor, params: dict, state: dict, config: PyramidConfig,
              training: bool) -> Tensor:
    """The pooling stream up to (not including) the spectral repeat: [B,Cb,1,H,W]."""
    _check_input(x)
    p = "pyr.pool"
    y = ops.adaptive_avg_pool_spectral(x)
    y = ops.conv_pointwise(y, params[f"{p}.conv.w"], params[f"{p}.conv.b"])
    y = ops.batch_norm(y, params[f"{p}.bn.gamma"], params[f"{p}.bn.beta"], state[f"{p}.bn"],
                       training, config.bn_eps, config.bn_momentum)
    return ops.relu(y)


def spectral_pool_forward(x: Tensor, params: dict, state: dict, config: PyramidConfig,
                          training: bool) -> Tensor:
    y = pool_head(x, params, state, config, training)
    y = ops.repeat_spectral(y, x.shape[2])
    return _bottlenecks(y, params, "pyr.pool", config)


def pyramid_forward(x: Tensor, config: PyramidConfig, params: dict, state: dict,
                    training: bool) -> PyramidOutput:
    """All streams, ordered finest rate first and the pooled stream last."""
    streams = [branch_forward(x, r, params, state, config, training)
               for r in config.dilation_rates]
    if config.pooling:
        streams.append(spectral_pool_forward(x, params, state, config, training))
    return PyramidOutput(streams, config.stream_names())
