"""Build each merge-network variant and look at what the switches change.

The full model gates the side exposures with attention masks and merges
with dilated dense blocks.  Each named variant removes one ingredient
(attention, dilation, dense connections, the global residual) so their
contribution can be measured.  This script compares parameter counts,
runs a forward pass, and inspects the attention masks on a scene with
known motion and saturation.
"""

import numpy as np

from ahdr.hdr import build_input
from ahdr.model import (
    VARIANT_NAMES,
    attention_forward,
    build_variant,
    encode,
    parameter_count,
    predict,
    variant_config,
)
from ahdr.synth import make_sample, random_scene
from ahdr.tensor import no_grad


def main():
    print("variant      params(full)   params(mini)  notes")
    small = dict(base_channels=16, growth_rate=8, num_drdb=3)
    for name in VARIANT_NAMES:
        full = parameter_count(build_variant(variant_config(name), seed=0))
        mini = parameter_count(build_variant(variant_config(name, **small), seed=0))
        cfg = variant_config(name)
        notes = []
        if not cfg.use_attention:
            notes.append("no attention")
        if not cfg.use_dilation:
            notes.append("no dilation")
        if not cfg.use_dense_connections:
            notes.append("plain residual blocks")
        if not cfg.use_global_residual:
            notes.append("no global skip")
        print(f"{name:<12} {full:>12,} {mini:>14,}  {', '.join(notes) or 'full model'}")

    # Forward pass at miniature size on a synthetic triplet.
    sample = make_sample(random_scene(seed=3))
    params = build_variant(variant_config("ahdr", **small), seed=0)
    out = predict(sample.ldrs, params)
    print(f"\nahdr-mini forward: input {sample.reference.ldr.shape} -> "
          f"radiance {out.radiance.shape}, "
          f"range [{out.radiance.data.min():.4f}, {out.radiance.data.max():.4f}]")

    # Attention masks: one per side exposure, one value per feature
    # channel per pixel, squeezed through a sigmoid so every entry is a
    # soft keep/suppress weight in (0,1).  (The untrained masks here
    # show the mechanics; training is what makes them track ghosting.)
    with no_grad():
        z_low = encode(build_input(sample.ldrs[0]), params.encoder)
        z_ref = encode(build_input(sample.reference), params.encoder)
        z_high = encode(build_input(sample.ldrs[2]), params.encoder)
        a_low = attention_forward(z_low, z_ref, params.attention_low)
        a_high = attention_forward(z_high, z_ref, params.attention_high)
    for label, mask in (("short-exposure", a_low), ("long-exposure", a_high)):
        d = mask.data
        print(f"{label} mask: shape {d.shape}, "
              f"mean {d.mean():.3f}, range ({d.min():.3f}, {d.max():.3f})")

    # Variants without attention simply have no mask parameters.
    bare = build_variant(variant_config("rdb", **small), seed=0)
    print(f"rdb variant attention parameters: {bare.attention_low} / {bare.attention_high}")
    same_shape = predict(sample.ldrs, bare).radiance.shape == out.radiance.shape
    print(f"all variants share the same input/output contract: {same_shape}")


if __name__ == "__main__":
    main()
