"""Attention-guided HDR merging network and its ablation variants.

Three 6-channel inputs (LDR + HDR-domain pairs for under/reference/over
exposures) pass through one shared conv encoder.  The two non-reference
feature maps are gated by attention masks computed against the reference
features, the three maps are stacked, and a chain of dilated residual
dense blocks merges them.  A global skip from the reference features lets
the merger learn only the correction, and a sigmoid head keeps the output
radiance inside (0,1).

Every structural switch of the network (attention, dilation, dense
connections, global residual, block depth) is a ``NetConfig`` field so the
reduced variants used for comparisons are configurations, not forks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .hdr import ExposureImage, GammaParams, HdrImage, build_input
from .tensor import (
    ConvSpec,
    Tensor,
    add,
    concat_channels,
    conv2d,
    no_grad,
    pointwise_mul,
    relu,
    sigmoid,
)

__all__ = [
    "NetConfig",
    "ConvParams",
    "AttentionParams",
    "DrdbParams",
    "RbParams",
    "NetworkParams",
    "xavier_init",
    "build_variant",
    "variant_config",
    "VARIANT_NAMES",
    "encode",
    "attention_forward",
    "attend",
    "stack_features",
    "drdb_forward",
    "rb_forward",
    "merge_forward",
    "ahdr_forward",
    "predict",
    "parameter_count",
]


@dataclass(frozen=True)
class NetConfig:
    """Structural description of a merge network variant."""

    base_channels: int = 64
    growth_rate: int = 32
    num_drdb: int = 3
    drdb_conv_layers: int = 6  # last one is the 1x1 compression
    dilation: int = 2
    use_attention: bool = True
    use_dilation: bool = True
    use_dense_connections: bool = True
    use_global_residual: bool = True
    rb_depth_multiplier: int = 1

    def __post_init__(self):
        if self.base_channels <= 0:
            raise ValueError(f"base_channels must be positive, got {self.base_channels}")
        if self.growth_rate <= 0:
            raise ValueError(f"growth_rate must be positive, got {self.growth_rate}")
        if self.num_drdb < 1:
            raise ValueError(f"need at least one merge block, got {self.num_drdb}")
        if self.drdb_conv_layers < 2:
            raise ValueError(
                f"a block needs at least one dense layer plus compression, got {self.drdb_conv_layers}"
            )
        if self.dilation < 1:
            raise ValueError(f"dilation must be >= 1, got {self.dilation}")
        if self.rb_depth_multiplier < 1:
            raise ValueError(f"rb_depth_multiplier must be >= 1, got {self.rb_depth_multiplier}")
        if self.rb_depth_multiplier > 1 and self.use_dense_connections:
            raise ValueError(
                "rb_depth_multiplier > 1 only applies to plain residual blocks "
                "(use_dense_connections=False)"
            )

    @property
    def effective_dilation(self) -> int:
        return self.dilation if self.use_dilation else 1

    @property
    def num_blocks(self) -> int:
        return self.num_drdb * self.rb_depth_multiplier


# Named ablations: which structural switches each variant keeps.
_VARIANT_FLAGS = {
    "ahdr": {},
    "drdb": {"use_attention": False},
    "a-rdb": {"use_dilation": False},
    "rdb": {"use_attention": False, "use_dilation": False},
    "rb": {"use_attention": False, "use_dilation": False, "use_dense_connections": False},
    "deep-rb": {
        "use_attention": False,
        "use_dilation": False,
        "use_dense_connections": False,
        "rb_depth_multiplier": 2,
    },
    "no-grl": {"use_global_residual": False},
}

VARIANT_NAMES = tuple(_VARIANT_FLAGS)


def variant_config(name: str, **overrides) -> NetConfig:
    """Config for a named variant; overrides adjust sizes (channels, blocks...)."""
    try:
        flags = _VARIANT_FLAGS[name]
    except KeyError:
        raise ValueError(f"unknown variant '{name}', expected one of {VARIANT_NAMES}") from None
    return replace(NetConfig(**overrides), **flags)


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------


@dataclass
class ConvParams:
    """Weights and bias for one convolution layer."""

    spec: ConvSpec
    weight: Tensor
    bias: Tensor

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, self.spec)


@dataclass
class AttentionParams:
    conv1: ConvParams  # 2C -> C, 3x3
    conv2: ConvParams  # C -> C, 3x3


@dataclass
class DrdbParams:
    dense: list[ConvParams]  # layer j: (C + j*growth) -> growth, 3x3 dilated
    compress: ConvParams  # 1x1, (C + len(dense)*growth) -> C


@dataclass
class RbParams:
    conv1: ConvParams  # C -> C, 3x3
    conv2: ConvParams  # C -> C, 3x3


@dataclass
class NetworkParams:
    config: NetConfig
    encoder: ConvParams  # shared, 6 -> C
    attention_low: AttentionParams | None
    attention_high: AttentionParams | None
    merge_head: ConvParams  # 3C -> C
    drdbs: list  # DrdbParams or RbParams, per config
    fuse: ConvParams  # num_blocks*C -> C
    tail1: ConvParams  # C -> C
    tail2: ConvParams  # C -> 3

    def named_tensors(self) -> dict[str, Tensor]:
        """Stable name -> tensor map (creation order; drives init and checkpoints)."""
        out: dict[str, Tensor] = {}

        def put(prefix: str, conv: ConvParams):
            out[f"{prefix}.weight"] = conv.weight
            out[f"{prefix}.bias"] = conv.bias

        put("encoder", self.encoder)
        for label, att in (("attention_low", self.attention_low), ("attention_high", self.attention_high)):
            if att is not None:
                put(f"{label}.conv1", att.conv1)
                put(f"{label}.conv2", att.conv2)
        put("merge_head", self.merge_head)
        for i, block in enumerate(self.drdbs):
            if isinstance(block, DrdbParams):
                for j, layer in enumerate(block.dense):
                    put(f"block{i}.dense{j}", layer)
                put(f"block{i}.compress", block.compress)
            else:
                put(f"block{i}.conv1", block.conv1)
                put(f"block{i}.conv2", block.conv2)
        put("fuse", self.fuse)
        put("tail1", self.tail1)
        put("tail2", self.tail2)
        return out


def parameter_count(params: NetworkParams) -> int:
    return sum(t.data.size for t in params.named_tensors().values())


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------


def xavier_init(rng: np.random.Generator, spec: ConvSpec, dtype=np.float32) -> ConvParams:
    """Uniform Xavier/Glorot weights (fan counts include the kernel area), zero bias."""
    k2 = spec.kernel_size * spec.kernel_size
    fan_in = spec.in_channels * k2
    fan_out = spec.out_channels * k2
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    w = rng.uniform(-bound, bound, size=spec.weight_shape).astype(dtype)
    b = np.zeros((1, spec.out_channels, 1, 1), dtype=dtype)
    return ConvParams(spec, Tensor(w, requires_grad=True), Tensor(b, requires_grad=True))


def build_variant(cfg: NetConfig, seed: int, dtype=np.float32) -> NetworkParams:
    """Freshly initialized parameters for the given structure; same seed, same bits."""
    rng = np.random.default_rng(seed)
    c = cfg.base_channels

    def conv(cin, cout, k=3, dil=1):
        return xavier_init(rng, ConvSpec(cin, cout, k, dilation=dil), dtype)

    def attention():
        return AttentionParams(conv1=conv(2 * c, c), conv2=conv(c, c))

    encoder = conv(6, c)
    att_low = attention() if cfg.use_attention else None
    att_high = attention() if cfg.use_attention else None
    merge_head = conv(3 * c, c)

    blocks: list = []
    for _ in range(cfg.num_blocks):
        if cfg.use_dense_connections:
            dense = [
                conv(c + j * cfg.growth_rate, cfg.growth_rate, dil=cfg.effective_dilation)
                for j in range(cfg.drdb_conv_layers - 1)
            ]
            compress = conv(c + len(dense) * cfg.growth_rate, c, k=1)
            blocks.append(DrdbParams(dense=dense, compress=compress))
        else:
            blocks.append(RbParams(conv1=conv(c, c), conv2=conv(c, c)))

    fuse = conv(cfg.num_blocks * c, c)
    return NetworkParams(
        config=cfg,
        encoder=encoder,
        attention_low=att_low,
        attention_high=att_high,
        merge_head=merge_head,
        drdbs=blocks,
        fuse=fuse,
        tail1=conv(c, c),
        tail2=conv(c, 3),
    )


# ---------------------------------------------------------------------------
# Forward passes
# ---------------------------------------------------------------------------


def encode(x: Tensor, p: ConvParams) -> Tensor:
    """Shared feature extractor: ReLU(conv(x)) applied identically to each frame."""
    return relu(p(x))


def attention_forward(z_i: Tensor, z_r: Tensor, p: AttentionParams) -> Tensor:
    """Soft mask in (0,1) telling how much of z_i to trust, judged against z_r."""
    return sigmoid(p.conv2(relu(p.conv1(concat_channels([z_i, z_r])))))


def attend(z_i: Tensor, a_i: Tensor) -> Tensor:
    return pointwise_mul(z_i, a_i)


def stack_features(z1p: Tensor, z2: Tensor, z3p: Tensor) -> Tensor:
    return concat_channels([z1p, z2, z3p])


def drdb_forward(f_in: Tensor, p: DrdbParams, cfg: NetConfig) -> Tensor:
    """Densely connected dilated convs, 1x1 compression, residual skip."""
    feats = [f_in]
    for layer in p.dense:
        stacked = feats[0] if len(feats) == 1 else concat_channels(feats)
        feats.append(relu(layer(stacked)))
    compressed = p.compress(concat_channels(feats))
    return add(compressed, f_in)


def rb_forward(f_in: Tensor, p: RbParams) -> Tensor:
    """Plain residual block: x + conv2(relu(conv1(x)))."""
    return add(p.conv2(relu(p.conv1(f_in))), f_in)


def merge_forward(z_s: Tensor, z_r: Tensor, params: NetworkParams, cfg: NetConfig) -> Tensor:
    """Stacked features -> radiance estimate (see module docstring for the chain)."""
    f = relu(params.merge_head(z_s))
    block_outs = []
    for block in params.drdbs:
        f = drdb_forward(f, block, cfg) if isinstance(block, DrdbParams) else rb_forward(f, block)
        block_outs.append(f)
    fused = relu(params.fuse(concat_channels(block_outs)))
    if cfg.use_global_residual:
        fused = add(fused, z_r)
    return sigmoid(params.tail2(relu(params.tail1(fused))))


def ahdr_forward(
    x1: Tensor, x2: Tensor, x3: Tensor, params: NetworkParams, cfg: NetConfig
) -> HdrImage:
    """Full model: the middle input x2 is the reference exposure."""
    z1 = encode(x1, params.encoder)
    z_r = encode(x2, params.encoder)
    z3 = encode(x3, params.encoder)
    if cfg.use_attention:
        z1 = attend(z1, attention_forward(z1, z_r, params.attention_low))
        z3 = attend(z3, attention_forward(z3, z_r, params.attention_high))
    z_s = stack_features(z1, z_r, z3)
    return HdrImage(merge_forward(z_s, z_r, params, cfg))


def predict(
    ldrs: Sequence[ExposureImage], params: NetworkParams, g: GammaParams = GammaParams()
) -> HdrImage:
    """Gradient-free inference on an exposure triplet sorted by exposure time."""
    if len(ldrs) != 3:
        raise ValueError(f"expected 3 exposures, got {len(ldrs)}")
    with no_grad():
        x1, x2, x3 = (build_input(img, g) for img in ldrs)
        return ahdr_forward(x1, x2, x3, params, params.config)
