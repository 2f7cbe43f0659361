# core/network.py
"""
Recurrent Super-Resolution Cell
-------------------------------
Unified per-frame cell with four components:

    SISR      compact back-projection network on the current LR frame
    MISR      residual blocks over [LR frame, hidden state, folded previous SR]
    Residual  residual blocks over (MISR features - SISR features)
    Recon     single 3x3 conv on (Residual output + SISR features), plus the
              bicubic upsample of the LR frame when ``bicubic_skip`` is set

The topology is fully described by ``layer_table(config)``; parameter
initialization and the complexity counter both walk that table.
"""

import json
import logging
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from core.autodiff import (
    Tensor,
    add,
    concat_channels,
    conv2d,
    conv2d_transposed,
    prelu,
    space_to_depth,
    sub,
)
from core.errors import ConfigError, ShapeError
from core.metrics import bicubic_resize

logger = logging.getLogger("core.network")

PRELU_INIT = 0.25

# init gains: layers that close a residual path, and recon
RESIDUAL_BRANCH_GAIN = 0.1
RECON_GAIN = 0.01

# (kernel, stride, padding) of the projection/upsampling layers per scale
PROJECTION_GEOMETRY = {2: (6, 2, 2), 4: (8, 4, 2)}


@dataclass(frozen=True)
class NetworkConfig:
    """Hyperparameters that fully determine the network topology."""

    scale: int = 4
    misr_channels: int = 32
    misr_blocks: int = 4
    residual_channels: int = 32
    residual_blocks: int = 4
    sisr_feat0: int = 64
    sisr_feat: int = 18
    sisr_stages: int = 2
    fusion_channels: int = 32
    bicubic_skip: int = 1

    def __post_init__(self):
        if self.scale not in PROJECTION_GEOMETRY:
            raise ConfigError("scale must be 2 or 4", ["scale"])
        if self.bicubic_skip not in (0, 1):
            raise ConfigError("bicubic_skip must be 0 or 1", ["bicubic_skip"])
        bad = [f.name for f in fields(self)
               if f.name not in ("scale", "bicubic_skip") and int(getattr(self, f.name)) < 1]
        if bad:
            raise ConfigError("widths and counts must be >= 1", bad)

    @property
    def projection(self) -> Tuple[int, int, int]:
        return PROJECTION_GEOMETRY[self.scale]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError("Unknown network config keys", unknown)
        return cls(**{k: int(v) for k, v in data.items()})

    @classmethod
    def from_json(cls, text: str) -> "NetworkConfig":
        return cls.from_dict(json.loads(text))


# -----------------------------------------------------------
# Topology
# -----------------------------------------------------------
@dataclass(frozen=True)
class LayerSpec:
    """One parameterized layer. ``resolution`` is the input resolution (lr/hr)."""

    name: str
    kind: str  # "conv" | "deconv"
    cin: int
    cout: int
    kernel: int
    stride: int
    padding: int
    prelu: bool
    resolution: str

    def output_size(self, size: int) -> int:
        if self.kind == "conv":
            return (size + 2 * self.padding - self.kernel) // self.stride + 1
        return (size - 1) * self.stride - 2 * self.padding + self.kernel


@dataclass(frozen=True)
class ElementwiseSpec:
    """Parameter-free point-wise op, listed for FLOP accounting."""

    name: str
    kind: str  # "add" | "sub"
    channels: int
    resolution: str


def _conv(name, cin, cout, k, res, act=True, stride=1, padding=None) -> LayerSpec:
    return LayerSpec(name, "conv", cin, cout, k, stride, k // 2 if padding is None else padding, act, res)


@lru_cache(maxsize=None)
def layer_table(config: NetworkConfig) -> Tuple[LayerSpec, ...]:
    """Every parameterized layer in execution order."""
    k, s, p = config.projection
    f = config.sisr_feat
    layers: List[LayerSpec] = [
        _conv("sisr.feat0", 1, config.sisr_feat0, 3, "lr"),
        _conv("sisr.feat1", config.sisr_feat0, f, 1, "lr"),
    ]
    for stage in range(1, config.sisr_stages + 1):
        up = f"sisr.up{stage}"
        layers += [
            LayerSpec(f"{up}.deconv1", "deconv", f, f, k, s, p, True, "lr"),
            LayerSpec(f"{up}.conv", "conv", f, f, k, s, p, True, "hr"),
            LayerSpec(f"{up}.deconv2", "deconv", f, f, k, s, p, True, "lr"),
        ]
        if stage < config.sisr_stages:
            down = f"sisr.down{stage}"
            layers += [
                LayerSpec(f"{down}.conv1", "conv", f, f, k, s, p, True, "hr"),
                LayerSpec(f"{down}.deconv", "deconv", f, f, k, s, p, True, "lr"),
                LayerSpec(f"{down}.conv2", "conv", f, f, k, s, p, True, "hr"),
            ]
    layers.append(_conv("sisr.out", config.sisr_stages * f, config.fusion_channels, 1, "hr"))

    m = config.misr_channels
    layers.append(_conv("misr.head", 1 + m + config.scale ** 2, m, 3, "lr"))
    for block in range(1, config.misr_blocks + 1):
        layers += [
            _conv(f"misr.block{block}.conv1", m, m, 3, "lr"),
            _conv(f"misr.block{block}.conv2", m, m, 3, "lr", act=False),
        ]
    layers.append(LayerSpec("misr.upsample", "deconv", m, config.fusion_channels, k, s, p, True, "lr"))

    r = config.residual_channels
    layers.append(_conv("residual.head", config.fusion_channels, r, 3, "hr"))
    for block in range(1, config.residual_blocks + 1):
        layers += [
            _conv(f"residual.block{block}.conv1", r, r, 3, "hr"),
            _conv(f"residual.block{block}.conv2", r, r, 3, "hr", act=False),
        ]
    layers.append(_conv("residual.tail", r, config.fusion_channels, 3, "hr"))
    layers.append(_conv("recon", config.fusion_channels, 1, 3, "hr", act=False))
    return tuple(layers)


@lru_cache(maxsize=None)
def _layers_by_name(config: NetworkConfig) -> Dict[str, LayerSpec]:
    return {spec.name: spec for spec in layer_table(config)}


def elementwise_table(config: NetworkConfig) -> Tuple[ElementwiseSpec, ...]:
    """Point-wise adds/subs executed by one cell step."""
    f = config.sisr_feat
    ops: List[ElementwiseSpec] = []
    for stage in range(1, config.sisr_stages + 1):
        ops += [ElementwiseSpec(f"sisr.up{stage}.residual", "sub", f, "lr"),
                ElementwiseSpec(f"sisr.up{stage}.sum", "add", f, "hr")]
        if stage < config.sisr_stages:
            ops += [ElementwiseSpec(f"sisr.down{stage}.residual", "sub", f, "hr"),
                    ElementwiseSpec(f"sisr.down{stage}.sum", "add", f, "lr")]
    for block in range(1, config.misr_blocks + 1):
        ops.append(ElementwiseSpec(f"misr.block{block}.skip", "add", config.misr_channels, "lr"))
    ops.append(ElementwiseSpec("fusion.sub", "sub", config.fusion_channels, "hr"))
    for block in range(1, config.residual_blocks + 1):
        ops.append(ElementwiseSpec(f"residual.block{block}.skip", "add", config.residual_channels, "hr"))
    ops.append(ElementwiseSpec("fusion.add", "add", config.fusion_channels, "hr"))
    if config.bicubic_skip:
        ops.append(ElementwiseSpec("recon.skip", "add", 1, "hr"))
    return tuple(ops)


def parameter_shapes(config: NetworkConfig) -> Dict[str, Tuple[int, ...]]:
    """Name -> shape for every parameter tensor, in layer order."""
    shapes: Dict[str, Tuple[int, ...]] = {}
    for spec in layer_table(config):
        if spec.kind == "conv":
            shapes[f"{spec.name}.weight"] = (spec.cout, spec.cin, spec.kernel, spec.kernel)
        else:
            shapes[f"{spec.name}.weight"] = (spec.cin, spec.cout, spec.kernel, spec.kernel)
        shapes[f"{spec.name}.bias"] = (spec.cout,)
        if spec.prelu:
            shapes[f"{spec.name}.prelu"] = (1,)
    return shapes


# -----------------------------------------------------------
# Parameters & state
# -----------------------------------------------------------
class Parameters(dict):
    """Named parameter tensors (layer path -> Tensor) bound to their config."""

    def __init__(self, config: NetworkConfig, tensors: Optional[Iterable] = None):
        super().__init__(tensors or ())
        self.config = config

    def num_elements(self) -> int:
        return sum(t.size for t in self.values())

    def astype(self, dtype) -> "Parameters":
        return Parameters(self.config, ((name, Tensor(t.data.astype(dtype), requires_grad=True, name=name))
                                        for name, t in self.items()))

    def copy(self) -> "Parameters":
        return Parameters(self.config, ((name, Tensor(t.data.copy(), requires_grad=True, name=name))
                                        for name, t in self.items()))

    def gradients(self, grads: Dict[int, np.ndarray]) -> Dict[str, np.ndarray]:
        """Gradients by name; parameters the loss never reached get zeros."""
        return {name: grads[id(t)] if id(t) in grads else np.zeros_like(t.data)
                for name, t in self.items()}


@dataclass
class CellState:
    """Recurrent carry: LR-resolution hidden maps and the previous SR frame."""

    hidden: Tensor
    prev_sr: Tensor


def _fan_in(spec: LayerSpec) -> float:
    if spec.kind == "conv":
        return spec.cin * spec.kernel * spec.kernel
    return spec.cin * spec.kernel * spec.kernel / float(spec.stride * spec.stride)


def _init_gain(spec: LayerSpec) -> float:
    if spec.name == "recon":
        return RECON_GAIN
    if spec.name == "residual.tail" or (".block" in spec.name and spec.name.endswith(".conv2")):
        return RESIDUAL_BRANCH_GAIN
    return 1.0


def init_network(config: NetworkConfig, seed: int, dtype=np.float32) -> Parameters:
    """
    Deterministic from-scratch initialization.

    Weights ~ U(-b, b) with b = gain * sqrt(6 / ((1 + 0.25^2) * fan_in)); deconv
    fan-in counts the taps that reach one output pixel. The gain is 1 except on
    layers closing a residual path (second conv of each block, residual.tail:
    0.1) and recon (0.01). Biases are zero and PReLU slopes 0.25.
    """
    rng = np.random.default_rng(seed)
    shapes = parameter_shapes(config)
    params = Parameters(config)
    for spec in layer_table(config):
        bound = _init_gain(spec) * np.sqrt(6.0 / ((1.0 + PRELU_INIT ** 2) * _fan_in(spec)))
        w_name = f"{spec.name}.weight"
        params[w_name] = Tensor(rng.uniform(-bound, bound, shapes[w_name]).astype(dtype),
                                requires_grad=True, name=w_name)
        b_name = f"{spec.name}.bias"
        params[b_name] = Tensor(np.zeros(shapes[b_name], dtype=dtype), requires_grad=True, name=b_name)
        if spec.prelu:
            a_name = f"{spec.name}.prelu"
            params[a_name] = Tensor(np.full((1,), PRELU_INIT, dtype=dtype), requires_grad=True, name=a_name)
    logger.debug(f"Initialized {len(params)} tensors ({params.num_elements()} elements), seed={seed}")
    return params


def init_state(config: NetworkConfig, lr_frame: Tensor) -> CellState:
    """Zero hidden maps and a bicubic upsample of the first LR frame."""
    b, _, h, w = lr_frame.shape
    hidden = Tensor(np.zeros((b, config.misr_channels, h, w), dtype=lr_frame.dtype))
    prev_sr = bicubic_resize(lr_frame, config.scale, "up")
    return CellState(hidden=hidden, prev_sr=prev_sr)


# -----------------------------------------------------------
# Components
# -----------------------------------------------------------
def apply_layer(params: Parameters, name: str, x: Tensor) -> Tensor:
    """Run one table layer (conv or transposed conv, optional PReLU)."""
    spec = _layers_by_name(params.config)[name]
    weight = params[f"{name}.weight"]
    bias = params[f"{name}.bias"]
    if spec.kind == "conv":
        y = conv2d(x, weight, bias, stride=spec.stride, padding=spec.padding)
    else:
        y = conv2d_transposed(x, weight, bias, stride=spec.stride, padding=spec.padding)
    if spec.prelu:
        y = prelu(y, params[f"{name}.prelu"])
    return y


def up_projection(params: Parameters, prefix: str, low: Tensor) -> Tensor:
    h0 = apply_layer(params, f"{prefix}.deconv1", low)
    l0 = apply_layer(params, f"{prefix}.conv", h0)
    h1 = apply_layer(params, f"{prefix}.deconv2", sub(l0, low))
    return add(h1, h0)


def down_projection(params: Parameters, prefix: str, high: Tensor) -> Tensor:
    l0 = apply_layer(params, f"{prefix}.conv1", high)
    h0 = apply_layer(params, f"{prefix}.deconv", l0)
    l1 = apply_layer(params, f"{prefix}.conv2", sub(h0, high))
    return add(l1, l0)


def residual_block(params: Parameters, prefix: str, x: Tensor) -> Tensor:
    y = apply_layer(params, f"{prefix}.conv1", x)
    y = apply_layer(params, f"{prefix}.conv2", y)
    return add(y, x)


def sisr_forward(params: Parameters, lr_frame: Tensor) -> Tensor:
    """
    Compact back-projection SR branch.

    Returns one HR feature map [B, fusion_channels, h*s, w*s]; the cell
    consumes it twice (fusion subtraction and final addition).
    """
    config = params.config
    x = apply_layer(params, "sisr.feat0", lr_frame)
    low = apply_layer(params, "sisr.feat1", x)
    highs: List[Tensor] = []
    for stage in range(1, config.sisr_stages + 1):
        high = up_projection(params, f"sisr.up{stage}", low)
        highs.append(high)
        if stage < config.sisr_stages:
            low = down_projection(params, f"sisr.down{stage}", high)
    return apply_layer(params, "sisr.out", concat_channels(highs))


def _check_state(config: NetworkConfig, lr_frame: Tensor, state: CellState):
    b, _, h, w = lr_frame.shape
    if state.hidden.shape != (b, config.misr_channels, h, w):
        raise ShapeError("hidden state does not match LR frame", state.hidden.shape, lr_frame.shape)
    if state.prev_sr.shape != (b, 1, h * config.scale, w * config.scale):
        raise ShapeError("previous SR frame does not match LR frame", state.prev_sr.shape, lr_frame.shape)


def misr_forward(params: Parameters, lr_frame: Tensor, state: CellState) -> Tuple[Tensor, Tensor]:
    """
    Multi-frame branch.

    Returns:
        (misr_features [B, fusion, h*s, w*s], new_hidden [B, misr_channels, h, w])
    """
    config = params.config
    _check_state(config, lr_frame, state)
    folded = space_to_depth(state.prev_sr, config.scale)
    x = apply_layer(params, "misr.head", concat_channels([lr_frame, state.hidden, folded]))
    for block in range(1, config.misr_blocks + 1):
        x = residual_block(params, f"misr.block{block}", x)
    return apply_layer(params, "misr.upsample", x), x


def residual_forward(params: Parameters, diff: Tensor) -> Tensor:
    config = params.config
    x = apply_layer(params, "residual.head", diff)
    for block in range(1, config.residual_blocks + 1):
        x = residual_block(params, f"residual.block{block}", x)
    return apply_layer(params, "residual.tail", x)


def cell_forward(params: Parameters, lr_frame: Tensor, state: CellState) -> Tuple[Tensor, CellState]:
    """One time-step: returns the SR frame and the next state."""
    sisr = sisr_forward(params, lr_frame)
    misr, new_hidden = misr_forward(params, lr_frame, state)
    fused = add(residual_forward(params, sub(misr, sisr)), sisr)
    sr_frame = apply_layer(params, "recon", fused)
    if params.config.bicubic_skip:
        sr_frame = add(sr_frame, bicubic_resize(lr_frame, params.config.scale, "up"))
    return sr_frame, CellState(hidden=new_hidden, prev_sr=sr_frame)


def unroll(params: Parameters, lr_sequence: Sequence[Tensor],
           config: Optional[NetworkConfig] = None) -> List[Tensor]:
    """
    Run the cell over a sequence; gradients flow through every step.

    Args:
        params: Network parameters
        lr_sequence: LR frames [B, 1, h, w], all of the same shape
        config: Optional config; must match ``params.config`` when given

    Returns:
        One SR frame per input frame
    """
    if config is not None and config != params.config:
        raise ConfigError("unroll config differs from parameter config")
    if not lr_sequence:
        raise ShapeError("unroll needs at least one frame")
    ref = lr_sequence[0].shape
    for frame in lr_sequence:
        if frame.shape != ref:
            raise ShapeError("all frames in a sequence must share one shape", ref, frame.shape)

    state = init_state(params.config, lr_sequence[0])
    outputs: List[Tensor] = []
    for frame in lr_sequence:
        sr, state = cell_forward(params, frame, state)
        outputs.append(sr)
    return outputs
