"""Evaluation: PSNR in linear and mu-law domains, a classical merge baseline,
and tabular reports.

PSNR-L scores the linear radiance directly; PSNR-mu scores after mu-law
compression, which weights shadow fidelity the way the tonemapped result
is viewed (the same domain the training loss lives in).

``baseline_merge`` is the no-learning comparison floor: exposure-normalize
each LDR, then average with triangle weights peaked at mid-intensity, so
each pixel trusts whichever exposures are neither clipped nor starved.
It has no motion handling at all — misaligned content ghosts — which is
exactly the failure mode a learned merger must beat.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hdr import GammaParams, HdrImage, TonemapParams, ldr_to_hdr_domain, mu_law_tonemap
from .synth import SampleTriplet
from .tensor import Tensor, no_grad

__all__ = ["psnr", "psnr_mu", "psnr_linear", "baseline_merge", "EvalReport", "evaluate"]

_WEIGHT_FLOOR = 1e-3  # keeps fully clipped/starved pixels from zero total weight


def psnr(a: Tensor, b: Tensor, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE) in dB; identical inputs give +inf."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a.data.astype(np.float64) - b.data.astype(np.float64)
    mse = float(np.mean(np.square(diff)))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _clamped_tonemap(img: HdrImage, tm: TonemapParams) -> Tensor:
    with no_grad():
        return mu_law_tonemap(Tensor(np.clip(img.radiance.data, 0.0, 1.0)), tm)


def psnr_mu(pred: HdrImage, gt: HdrImage, tm: TonemapParams = TonemapParams()) -> float:
    """PSNR between mu-law-tonemapped images (both clamped into [0,1] first)."""
    return psnr(_clamped_tonemap(pred, tm), _clamped_tonemap(gt, tm))


def psnr_linear(pred: HdrImage, gt: HdrImage) -> float:
    return psnr(pred.radiance, gt.radiance)


def baseline_merge(triplet: SampleTriplet, g: GammaParams = GammaParams()) -> HdrImage:
    """Triangle-weighted average of the exposure-normalized LDRs, clamped to [0,1].

    Weight w(I) = max(1 - |2I - 1|, floor) per pixel and channel: mid-tones
    count fully, clipped highlights and noisy shadows barely at all.
    """
    num = None
    den = None
    with no_grad():
        for img in triplet.ldrs:
            h = ldr_to_hdr_domain(img, g).data.astype(np.float64)
            w = np.maximum(1.0 - np.abs(2.0 * img.ldr.data.astype(np.float64) - 1.0), _WEIGHT_FLOOR)
            num = w * h if num is None else num + w * h
            den = w if den is None else den + w
    merged = np.clip(num / den, 0.0, 1.0).astype(np.float32)
    return HdrImage(Tensor(merged))


@dataclass
class EvalReport:
    """Per-sample and aggregate PSNRs for one evaluation run."""

    sample_ids: list[str]
    psnr_mu_values: list[float]
    psnr_l_values: list[float]
    fingerprint: str = ""

    @property
    def mean_psnr_mu(self) -> float:
        return float(np.mean(self.psnr_mu_values))

    @property
    def mean_psnr_l(self) -> float:
        return float(np.mean(self.psnr_l_values))

    def to_text(self) -> str:
        """One aligned row per sample plus a mean row."""
        lines = []
        if self.fingerprint:
            lines.append(f"# {self.fingerprint}")
        lines.append(f"{'sample':<24}{'psnr_mu':>12}{'psnr_l':>12}")
        for sid, pm, pl in zip(self.sample_ids, self.psnr_mu_values, self.psnr_l_values):
            lines.append(f"{sid:<24}{pm:>12.4f}{pl:>12.4f}")
        lines.append(f"{'mean':<24}{self.mean_psnr_mu:>12.4f}{self.mean_psnr_l:>12.4f}")
        return "\n".join(lines) + "\n"


def evaluate(
    items: list[tuple[str, HdrImage, HdrImage]],
    tm: TonemapParams = TonemapParams(),
    fingerprint: str = "",
) -> EvalReport:
    """Score (sample_id, prediction, ground_truth) triples."""
    if not items:
        raise ValueError("nothing to evaluate")
    report = EvalReport(sample_ids=[], psnr_mu_values=[], psnr_l_values=[], fingerprint=fingerprint)
    for sid, pred, gt in items:
        report.sample_ids.append(sid)
        report.psnr_mu_values.append(psnr_mu(pred, gt, tm))
        report.psnr_l_values.append(psnr_linear(pred, gt))
    return report
