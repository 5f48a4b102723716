"""Walk through the three value domains the pipeline moves between.

LDR (what a camera stores), linear HDR (where frames are merged), and
the mu-law tonemapped domain (where losses and quality scores live).
The key invariant: gamma-expanding an LDR frame and dividing by its
exposure time lands every bracket on the *same* radiance scale.
"""

import numpy as np

from ahdr.hdr import (
    ExposureImage,
    GammaParams,
    TonemapParams,
    build_input,
    ldr_to_hdr_domain,
    mu_law_tonemap,
)
from ahdr.tensor import Tensor


def flat(value):
    """A 1x1 image holding a single gray level, for tabulating curves."""
    return Tensor(np.full((1, 3, 1, 1), value, dtype=np.float64))


def main():
    g = GammaParams()  # gamma = 2.2

    # One scene radiance, photographed at three exposure biases.  Each
    # capture is clip((h * 2**bias) ** (1/gamma)) -- the inverse of the
    # ldr_to_hdr_domain mapping, so recovery should be exact wherever
    # the capture did not clip.
    h_true = 0.18  # mid-gray radiance
    print(f"scene radiance h = {h_true}")
    for bias in (-2, 0, 2):
        t = 2.0 ** bias
        ldr_value = min((h_true * t) ** (1.0 / g.gamma), 1.0)
        img = ExposureImage.from_bias(flat(ldr_value), bias)
        recovered = ldr_to_hdr_domain(img, g).data[0, 0, 0, 0]
        print(
            f"  bias {bias:+d}: stored LDR {ldr_value:.4f} -> "
            f"recovered radiance {recovered:.6f}"
        )

    # A bright radiance saturates the long exposure: information is lost
    # there, which is exactly why a merge needs the short frame.
    h_bright = 0.9
    print(f"\nscene radiance h = {h_bright} (saturates at +2 stops)")
    for bias in (-2, 0, 2):
        t = 2.0 ** bias
        ldr_value = min((h_bright * t) ** (1.0 / g.gamma), 1.0)
        img = ExposureImage.from_bias(flat(ldr_value), bias)
        recovered = ldr_to_hdr_domain(img, g).data[0, 0, 0, 0]
        clipped = " (clipped)" if ldr_value >= 1.0 else ""
        print(
            f"  bias {bias:+d}: stored LDR {ldr_value:.4f} -> "
            f"recovered radiance {recovered:.6f}{clipped}"
        )

    # The network consumes both representations stacked channel-wise:
    # the LDR values localize noise/saturation, the HDR values carry
    # comparable brightness.
    img = ExposureImage.from_bias(flat(0.5), 2)
    x = build_input(img, g)
    print(f"\nnetwork input is {x.shape[1]}-channel: LDR {x.data[0, 0, 0, 0]:.4f}, "
          f"HDR {x.data[0, 3, 0, 0]:.6f}")

    # Mu-law compression: most of the output range is spent on shadows,
    # matching how a display-tonemapped result distributes error.
    tm = TonemapParams()  # mu = 5000
    print(f"\nmu-law curve (mu = {tm.mu:g}):")
    for v in (0.0, 0.001, 0.01, 0.1, 0.5, 1.0):
        tv = mu_law_tonemap(flat(v), tm).data[0, 0, 0, 0]
        print(f"  T({v:<5g}) = {tv:.6f}")


if __name__ == "__main__":
    main()
