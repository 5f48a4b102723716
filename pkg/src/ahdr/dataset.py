"""On-disk dataset layout: a manifest plus one subdirectory per sample.

Layout::

    out_dir/
        manifest              JSON: ids, per-sample seeds, biases, render params
        sample_0000/
            ldr_0.ppm         short exposure   (8- or 16-bit P6)
            ldr_1.ppm         reference exposure
            ldr_2.ppm         long exposure
            gt.pfm            reference-aligned radiance (float32 color PFM)
            exposures.txt     one exposure bias per line, frame order

Generation is deterministic: sample ``i`` draws its scene from a seed
derived from ``(base_seed, i)``, so regenerating with the same arguments
reproduces every file byte for byte.  The manifest is written last, after
all samples have landed, so an interrupted run never leaves a directory
that passes ``load_dataset``.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .hdr import GammaParams, ExposureImage, HdrImage
from .imgio import CodecError, atomic_write_bytes, read_pfm, read_ppm, write_pfm, write_ppm
from .synth import DEFAULT_BIASES, SampleTriplet, make_sample, random_scene

__all__ = [
    "DatasetError",
    "MANIFEST_NAME",
    "generate_dataset",
    "load_dataset",
    "load_sample",
    "read_manifest",
    "save_sample",
    "sample_seed",
]

MANIFEST_NAME = "manifest"
_FORMAT = "hdr-triplet-dataset"
_VERSION = 1
_LDR_NAMES = ("ldr_0.ppm", "ldr_1.ppm", "ldr_2.ppm")
_GT_NAME = "gt.pfm"
_EXPOSURES_NAME = "exposures.txt"


class DatasetError(ValueError):
    """Missing, malformed, or internally inconsistent dataset files."""


def sample_seed(base_seed: int, index: int) -> int:
    """Stable per-sample scene seed derived from (base seed, sample index)."""
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1)[0])


def save_sample(sample_dir, sample: SampleTriplet, bits: int = 8) -> None:
    """Write one triplet into ``sample_dir`` (created if needed)."""
    if bits not in (8, 16):
        raise ValueError(f"LDR bit depth must be 8 or 16, got {bits}")
    os.makedirs(sample_dir, exist_ok=True)
    maxval = 255 if bits == 8 else 65535
    for name, exposure in zip(_LDR_NAMES, sample.ldrs):
        write_ppm(os.path.join(sample_dir, name), exposure.ldr, maxval=maxval)
    write_pfm(os.path.join(sample_dir, _GT_NAME), sample.gt.radiance)
    lines = "".join(f"{bias}\n" for bias in sample.biases)
    atomic_write_bytes(os.path.join(sample_dir, _EXPOSURES_NAME), lines.encode("ascii"))


def _read_biases(path) -> list[int]:
    try:
        with open(path, "r", encoding="ascii") as f:
            raw = [line.strip() for line in f if line.strip()]
    except OSError as exc:
        raise DatasetError(f"{path}: cannot read exposure metadata ({exc})") from exc
    if len(raw) != 3:
        raise DatasetError(f"{path}: expected 3 exposure biases, found {len(raw)}")
    try:
        return [int(tok) for tok in raw]
    except ValueError as exc:
        raise DatasetError(f"{path}: malformed exposure bias: {exc}") from exc


def load_sample(sample_dir) -> SampleTriplet:
    """Read one sample subdirectory back into a triplet."""
    biases = _read_biases(os.path.join(sample_dir, _EXPOSURES_NAME))
    ldrs = []
    try:
        for name, bias in zip(_LDR_NAMES, biases):
            ldrs.append(ExposureImage.from_bias(read_ppm(os.path.join(sample_dir, name)), bias))
        gt = HdrImage.ground_truth(read_pfm(os.path.join(sample_dir, _GT_NAME)))
    except (CodecError, OSError) as exc:
        raise DatasetError(f"{sample_dir}: cannot load sample ({exc})") from exc
    try:
        return SampleTriplet(ldrs=tuple(ldrs), gt=gt, meta=None)
    except ValueError as exc:
        raise DatasetError(f"{sample_dir}: inconsistent sample ({exc})") from exc


def generate_dataset(
    out_dir,
    count: int,
    base_seed: int,
    width: int = 64,
    height: int = 64,
    biases: tuple[int, int, int] = DEFAULT_BIASES,
    quantize_bits: int = 8,
    noise_sigma: float = 0.0,
    min_motion: float = 3.0,
    num_objects: tuple[int, int] = (2, 4),
    force_saturation: bool = True,
    g: GammaParams = GammaParams(),
) -> list[str]:
    """Render ``count`` random scenes into ``out_dir`` and return sample ids."""
    if count < 1:
        raise ValueError(f"count must be positive, got {count}")
    if quantize_bits not in (8, 16):
        # the LDR files store quantized samples, so unquantized captures
        # cannot round-trip losslessly
        raise ValueError(
            f"dataset LDRs must be quantized to 8 or 16 bits, got quantize_bits={quantize_bits}"
        )
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for i in range(count):
        seed = sample_seed(base_seed, i)
        spec = random_scene(
            seed,
            width=width,
            height=height,
            num_objects=num_objects,
            min_motion=min_motion,
            force_saturation=force_saturation,
        )
        sample = make_sample(
            spec, biases=biases, g=g, quantize_bits=quantize_bits, noise_sigma=noise_sigma
        )
        sid = f"sample_{i:04d}"
        save_sample(os.path.join(out_dir, sid), sample, bits=quantize_bits)
        entries.append({"id": sid, "seed": seed, "biases": list(biases)})
    manifest = {
        "format": _FORMAT,
        "version": _VERSION,
        "count": count,
        "base_seed": base_seed,
        "width": width,
        "height": height,
        "biases": list(biases),
        "quantize_bits": quantize_bits,
        "noise_sigma": noise_sigma,
        "min_motion": min_motion,
        "gamma": g.gamma,
        "samples": entries,
    }
    payload = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    atomic_write_bytes(os.path.join(out_dir, MANIFEST_NAME), payload.encode("ascii"))
    return [e["id"] for e in entries]


def read_manifest(dataset_dir) -> dict:
    path = os.path.join(dataset_dir, MANIFEST_NAME)
    if not os.path.exists(path):
        raise DatasetError(f"{dataset_dir}: missing '{MANIFEST_NAME}' file")
    try:
        with open(path, "r", encoding="ascii") as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"{path}: malformed manifest ({exc})") from exc
    if not isinstance(manifest, dict) or manifest.get("format") != _FORMAT:
        raise DatasetError(f"{path}: not a {_FORMAT} manifest")
    if manifest.get("version") != _VERSION:
        raise DatasetError(
            f"{path}: unsupported manifest version {manifest.get('version')!r}"
        )
    for key in ("count", "samples", "biases"):
        if key not in manifest:
            raise DatasetError(f"{path}: manifest missing key {key!r}")
    if len(manifest["samples"]) != manifest["count"]:
        raise DatasetError(
            f"{path}: manifest lists {len(manifest['samples'])} samples "
            f"but count is {manifest['count']}"
        )
    return manifest


def load_dataset(dataset_dir) -> list[SampleTriplet]:
    """Load every sample named by the manifest, in manifest order."""
    manifest = read_manifest(dataset_dir)
    samples = []
    for entry in manifest["samples"]:
        sid = entry["id"]
        sample = load_sample(os.path.join(dataset_dir, sid))
        if list(sample.biases) != list(entry["biases"]):
            raise DatasetError(
                f"{dataset_dir}/{sid}: exposure biases {list(sample.biases)} disagree "
                f"with manifest {entry['biases']}"
            )
        samples.append(sample)
    return samples
