"""Procedural bracketed-exposure training data.

Each scene is a smooth radiance background (oriented gradients plus a few
low-frequency sinusoids) with simple anti-aliased shapes composited on
top.  Three radiance frames are generated with every object translated by
its per-frame displacement — frame 2 is the reference and doubles as the
ground truth — and each frame is then pushed through a forward camera
model (exposure, gamma compression, optional sensor noise, quantization)
at a different exposure bias.

The moving shapes create exactly the misalignment/ghosting regions an
exposure merger has to handle, bright objects saturate the long exposure,
and the additive noise toggle reproduces the shadow noise that plagues
short exposures.  Geometry is analytic, so tests can locate every one of
these regions exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hdr import ExposureImage, GammaParams, HdrImage
from .tensor import Tensor

__all__ = [
    "BackgroundSpec",
    "ObjectSpec",
    "SceneSpec",
    "SampleTriplet",
    "gen_scene",
    "render_ldr",
    "make_sample",
    "random_scene",
    "DEFAULT_BIASES",
]

DEFAULT_BIASES = (-2, 0, 2)

_SHAPES = ("disk", "rectangle")


@dataclass(frozen=True)
class BackgroundSpec:
    """Smooth radiance field: oriented gradients + low-frequency sinusoids,
    affinely mapped into [amplitude[0], amplitude[1]]."""

    amplitude: tuple[float, float] = (0.05, 0.35)
    num_gradients: int = 2
    num_sinusoids: int = 3

    def __post_init__(self):
        lo, hi = self.amplitude
        if not (0.0 <= lo < hi <= 1.0):
            raise ValueError(f"amplitude range must satisfy 0 <= lo < hi <= 1, got {self.amplitude}")


@dataclass(frozen=True)
class ObjectSpec:
    """One rigid shape; moves by `displacement` pixels between consecutive frames."""

    shape: str  # "disk" | "rectangle"
    radiance: tuple[float, float, float]
    position: tuple[float, float]  # (row, col) center at the reference frame
    size: tuple[float, float]  # disk: (radius, radius); rectangle: (half_h, half_w)
    displacement: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.shape not in _SHAPES:
            raise ValueError(f"shape must be one of {_SHAPES}, got '{self.shape}'")
        if not all(0.0 <= r <= 1.0 for r in self.radiance):
            raise ValueError(f"radiance channels must lie in [0,1], got {self.radiance}")
        if min(self.size) <= 0:
            raise ValueError(f"size must be positive, got {self.size}")


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    seed: int
    background: BackgroundSpec = field(default_factory=BackgroundSpec)
    objects: tuple[ObjectSpec, ...] = ()

    def __post_init__(self):
        if self.width < 4 or self.height < 4:
            raise ValueError(f"canvas too small: {self.width}x{self.height}")
        for obj in self.objects:
            r, c = obj.position
            # reference-frame geometry must fit the canvas
            if not (
                obj.size[0] <= r <= self.height - 1 - obj.size[0]
                and obj.size[1] <= c <= self.width - 1 - obj.size[1]
            ):
                raise ValueError(
                    f"object at {obj.position} with size {obj.size} exceeds "
                    f"{self.height}x{self.width} canvas in the reference frame"
                )


@dataclass(frozen=True)
class SampleTriplet:
    """Three exposures sorted by exposure time plus the reference-aligned truth."""

    ldrs: tuple[ExposureImage, ExposureImage, ExposureImage]
    gt: HdrImage
    meta: SceneSpec | None = None

    def __post_init__(self):
        if len(self.ldrs) != 3:
            raise ValueError(f"expected exactly 3 exposures, got {len(self.ldrs)}")
        ts = [img.t for img in self.ldrs]
        if not (ts[0] < ts[1] < ts[2]):
            raise ValueError(f"exposures must be sorted ascending, got t={ts}")
        if self.gt.radiance.shape != self.ldrs[0].ldr.shape:
            raise ValueError(
                f"ground truth shape {self.gt.radiance.shape} does not match "
                f"LDR shape {self.ldrs[0].ldr.shape}"
            )

    @property
    def reference(self) -> ExposureImage:
        return self.ldrs[1]

    @property
    def biases(self) -> tuple[int, int, int]:
        return tuple(img.bias for img in self.ldrs)


# ---------------------------------------------------------------------------
# Scene rasterization
# ---------------------------------------------------------------------------


def _background_field(spec: SceneSpec) -> np.ndarray:
    """Per-channel smooth field in [lo, hi], deterministic from the scene seed."""
    bg = spec.background
    rng = np.random.default_rng([spec.seed, 0])
    yy, xx = np.mgrid[0 : spec.height, 0 : spec.width].astype(np.float64)
    yy /= max(spec.height - 1, 1)
    xx /= max(spec.width - 1, 1)

    field3 = np.zeros((3, spec.height, spec.width))
    for ch in range(3):
        acc = np.zeros((spec.height, spec.width))
        for _ in range(bg.num_gradients):
            theta = rng.uniform(0, 2 * math.pi)
            acc += rng.uniform(0.3, 1.0) * (math.cos(theta) * xx + math.sin(theta) * yy)
        for _ in range(bg.num_sinusoids):
            fy, fx = rng.uniform(0.5, 3.0, size=2)  # cycles per canvas
            phase = rng.uniform(0, 2 * math.pi)
            acc += rng.uniform(0.2, 0.8) * np.sin(2 * math.pi * (fx * xx + fy * yy) + phase)
        span = acc.max() - acc.min()
        if span < 1e-12:
            acc[...] = 0.5
        else:
            acc = (acc - acc.min()) / span
        lo, hi = bg.amplitude
        field3[ch] = lo + acc * (hi - lo)
    return field3


def _coverage(obj: ObjectSpec, center: tuple[float, float], h: int, w: int) -> np.ndarray:
    """Anti-aliased coverage in [0,1] with a ~1px linear edge ramp.

    The ramp is symmetric about the true boundary, so the intensity
    centroid of an uncropped shape equals its center exactly.
    """
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cy, cx = center
    if obj.shape == "disk":
        dist = np.hypot(yy - cy, xx - cx)
        return np.clip(obj.size[0] + 0.5 - dist, 0.0, 1.0)
    cov_y = np.clip(obj.size[0] + 0.5 - np.abs(yy - cy), 0.0, 1.0)
    cov_x = np.clip(obj.size[1] + 0.5 - np.abs(xx - cx), 0.0, 1.0)
    return cov_y * cov_x


def gen_scene(spec: SceneSpec) -> tuple[HdrImage, HdrImage, HdrImage]:
    """Three radiance frames; frame f puts each object at position + (f-2)*displacement."""
    bg = _background_field(spec)
    frames = []
    for f in (1, 2, 3):
        canvas = bg.copy()
        for obj in spec.objects:
            cy = obj.position[0] + (f - 2) * obj.displacement[0]
            cx = obj.position[1] + (f - 2) * obj.displacement[1]
            alpha = _coverage(obj, (cy, cx), spec.height, spec.width)
            for ch in range(3):
                canvas[ch] = canvas[ch] * (1.0 - alpha) + obj.radiance[ch] * alpha
        arr = np.clip(canvas, 0.0, 1.0).astype(np.float32)[None]
        frames.append(HdrImage.ground_truth(Tensor(arr)))
    return tuple(frames)


# ---------------------------------------------------------------------------
# Forward camera model
# ---------------------------------------------------------------------------


def render_ldr(
    h: HdrImage,
    bias: int,
    g: GammaParams = GammaParams(),
    quantize_bits: int = 8,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
) -> ExposureImage:
    """Capture a radiance frame at the given exposure bias.

    I = round(clip((h * 2**bias) ** (1/gamma), 0, 1) * (2**b - 1)) / (2**b - 1)

    Radiance above 2**-bias saturates.  `quantize_bits=0` disables
    quantization; `noise_sigma` adds clipped Gaussian sensor noise before
    quantization (most visible in the shadows of short exposures).
    """
    t = 2.0 ** bias
    x = np.clip(np.power(h.radiance.data * t, 1.0 / g.gamma), 0.0, 1.0)
    if noise_sigma > 0.0:
        if rng is None:
            raise ValueError("noise_sigma > 0 requires an rng")
        x = np.clip(x + noise_sigma * rng.standard_normal(x.shape), 0.0, 1.0)
    if quantize_bits:
        levels = 2 ** quantize_bits - 1
        x = np.round(x * levels) / levels
    return ExposureImage.from_bias(Tensor(x.astype(np.float32)), bias)


def make_sample(
    spec: SceneSpec,
    biases: tuple[int, int, int] = DEFAULT_BIASES,
    g: GammaParams = GammaParams(),
    quantize_bits: int = 8,
    noise_sigma: float = 0.0,
) -> SampleTriplet:
    """Render one scene into a training triplet (noise RNG derives from the scene seed)."""
    frames = gen_scene(spec)
    ldrs = []
    for i, (frame, bias) in enumerate(zip(frames, biases)):
        rng = np.random.default_rng([spec.seed, 1 + i]) if noise_sigma > 0.0 else None
        ldrs.append(
            render_ldr(frame, bias, g, quantize_bits=quantize_bits, noise_sigma=noise_sigma, rng=rng)
        )
    return SampleTriplet(ldrs=tuple(ldrs), gt=frames[1], meta=spec)


# ---------------------------------------------------------------------------
# Random scene sampling
# ---------------------------------------------------------------------------


def random_scene(
    seed: int,
    width: int = 64,
    height: int = 64,
    num_objects: tuple[int, int] = (2, 4),
    min_motion: float = 3.0,
    force_saturation: bool = True,
) -> SceneSpec:
    """Draw a scene guaranteeing one fast-moving object and (optionally) one
    bright enough to saturate the +2-stop exposure."""
    rng = np.random.default_rng([seed, 9])
    n = int(rng.integers(num_objects[0], num_objects[1] + 1))
    max_size = min(width, height) / 4.0
    saturate_idx = 1 if n > 1 else 0
    objects = []
    for i in range(n):
        size_a = rng.uniform(3.0, max_size)
        size_b = size_a if i % 2 == 0 else rng.uniform(3.0, max_size)
        shape = _SHAPES[int(rng.integers(0, 2))]
        size = (size_a, size_a) if shape == "disk" else (size_a, size_b)
        pos = (
            rng.uniform(size[0], height - 1 - size[0]),
            rng.uniform(size[1], width - 1 - size[1]),
        )
        radiance = tuple(rng.uniform(0.05, 1.0, 3))
        if i == 0:  # guaranteed misalignment region
            angle = rng.uniform(0, 2 * math.pi)
            mag = rng.uniform(min_motion, min_motion + 3.0)
            disp = (mag * math.sin(angle), mag * math.cos(angle))
        else:
            angle = rng.uniform(0, 2 * math.pi)
            mag = rng.uniform(0.0, 2.0)
            disp = (mag * math.sin(angle), mag * math.cos(angle))
        if i == saturate_idx and force_saturation:  # guaranteed saturation in the long exposure
            radiance = tuple(rng.uniform(0.6, 1.0, 3))
        objects.append(
            ObjectSpec(shape=shape, radiance=radiance, position=pos, size=size, displacement=disp)
        )
    lo = rng.uniform(0.02, 0.08)
    hi = rng.uniform(0.25, 0.45)
    background = BackgroundSpec(amplitude=(lo, hi))
    return SceneSpec(width=width, height=height, seed=seed, background=background, objects=tuple(objects))
