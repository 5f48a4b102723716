"""Mappings between LDR, linear HDR, and tonemapped domains.

A bracketed exposure with bias ``b`` (in stops) has relative exposure
time ``t = 2**b``, normalized so the middle/reference frame has t = 1.
Gamma-expanding an LDR frame and dividing by its exposure time moves it
into the shared linear-radiance domain where frames are comparable:

    H = I ** gamma / t

Losses and quality scores are computed after mu-law range compression,

    T(h) = log(1 + mu*h) / log(1 + mu)

which spends most of its output range on the shadows, mimicking how a
tonemapped result is actually viewed.  The compression is built from
tape-recorded tensor ops, so it can sit between the network output and
the training loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .tensor import Tensor, concat_channels, log, offset, pow_scalar, scale

__all__ = [
    "GammaParams",
    "TonemapParams",
    "ExposureImage",
    "HdrImage",
    "ldr_to_hdr_domain",
    "build_input",
    "mu_law_tonemap",
]


@dataclass(frozen=True)
class GammaParams:
    """Gamma-expansion exponent for the LDR -> linear mapping."""

    gamma: float = 2.2

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise ValueError(f"gamma must be > 1, got {self.gamma}")


@dataclass(frozen=True)
class TonemapParams:
    """Mu-law compression strength."""

    mu: float = 5000.0

    def __post_init__(self):
        if not self.mu > 0.0:
            raise ValueError(f"mu must be positive, got {self.mu}")


@dataclass(frozen=True)
class ExposureImage:
    """An LDR frame together with its relative exposure time.

    ``t`` and ``bias`` are stored redundantly; they must satisfy
    t = 2**bias exactly, with the reference frame at bias 0 (t = 1).
    """

    ldr: Tensor
    t: float
    bias: int = field(default=0)

    def __post_init__(self):
        if self.ldr.shape[1] != 3:
            raise ValueError(f"expected 3-channel LDR image, got {self.ldr.shape[1]} channels")
        if self.t <= 0:
            raise ValueError(f"exposure time must be positive, got {self.t}")
        if self.t != 2.0 ** self.bias:
            raise ValueError(f"t={self.t} does not equal 2**bias with bias={self.bias}")
        lo, hi = float(self.ldr.data.min()), float(self.ldr.data.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"LDR values must lie in [0,1], found range [{lo}, {hi}]")

    @staticmethod
    def from_bias(ldr: Tensor, bias: int) -> "ExposureImage":
        return ExposureImage(ldr=ldr, t=2.0 ** bias, bias=bias)


@dataclass(frozen=True)
class HdrImage:
    """Linear-domain radiance.  Ground-truth instances stay within [0,1]."""

    radiance: Tensor

    def __post_init__(self):
        if self.radiance.shape[1] != 3:
            raise ValueError(
                f"expected 3-channel radiance, got {self.radiance.shape[1]} channels"
            )
        if float(self.radiance.data.min()) < 0.0:
            raise ValueError("radiance must be non-negative")

    @staticmethod
    def ground_truth(radiance: Tensor) -> "HdrImage":
        if float(radiance.data.max()) > 1.0:
            raise ValueError("ground-truth radiance must lie in [0,1]")
        return HdrImage(radiance)


def ldr_to_hdr_domain(img: ExposureImage, g: GammaParams = GammaParams()) -> Tensor:
    """Gamma-expand and exposure-normalize: I**gamma / t.

    Output is non-negative and may exceed 1 for short exposures (t < 1).
    """
    return scale(pow_scalar(img.ldr, g.gamma), 1.0 / img.t)


def build_input(img: ExposureImage, g: GammaParams = GammaParams()) -> Tensor:
    """6-channel network input: the LDR frame stacked on its HDR-domain image."""
    return concat_channels([img.ldr, ldr_to_hdr_domain(img, g)])


def mu_law_tonemap(h: Tensor, p: TonemapParams = TonemapParams()) -> Tensor:
    """Range-compress linear values with mu-law: log(1 + mu*h) / log(1 + mu).

    Maps [0,1] -> [0,1], strictly monotone, T(0) = 0 and T(1) = 1 by
    construction.  Callers are responsible for clamping inputs into [0,1]
    first; values above 1 would land outside the compressed range and
    negative values are outside the log's domain.
    """
    return scale(log(offset(scale(h, p.mu), 1.0)), 1.0 / math.log1p(p.mu))
