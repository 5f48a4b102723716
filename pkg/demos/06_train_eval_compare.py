"""Train a small network briefly and compare it against classical merges.

Two reference points frame the result: "passthrough" (gamma-expand the
reference exposure and call it done -- noisy shadows, clipped lights,
but no ghosts) and the triangle-weighted exposure merge (sharper in
range, but motion leaks in as ghosting).  Even a short training run on
a miniature network should clear both on scenes with guaranteed motion
and saturation.  Takes a few minutes on one core; the accuracy tests in
the test suite run the same comparison at full length.
"""

import time

import numpy as np

from ahdr.hdr import HdrImage, ldr_to_hdr_domain
from ahdr.metrics import baseline_merge, psnr_mu
from ahdr.model import predict, variant_config
from ahdr.synth import make_sample, random_scene
from ahdr.tensor import Tensor
from ahdr.train import TrainConfig, train

TRAIN_SCENES = 24
HELD_OUT_SCENES = 8
NOISE_SIGMA = 0.05


def build_set(first_seed, count):
    return [
        make_sample(random_scene(first_seed + i), noise_sigma=NOISE_SIGMA)
        for i in range(count)
    ]


def mean_score(held_out, merge_fn):
    return float(np.mean([psnr_mu(merge_fn(s), s.gt) for s in held_out]))


def main():
    train_set = build_set(5000, TRAIN_SCENES)
    held_out = build_set(6000, HELD_OUT_SCENES)
    print(f"{TRAIN_SCENES} training scenes, {HELD_OUT_SCENES} held out")

    def passthrough(sample):
        h = ldr_to_hdr_domain(sample.reference).data
        return HdrImage(Tensor(np.clip(h, 0.0, 1.0)))

    scores = {
        "reference exposure only": mean_score(held_out, passthrough),
        "triangle-weighted merge": mean_score(held_out, baseline_merge),
    }

    net_cfg = variant_config("ahdr", base_channels=16, growth_rate=8, num_drdb=3)
    train_cfg = TrainConfig(
        batch_size=4,
        learning_rate=1e-4,
        patch_size=32,
        loss_kind="l2",
        max_iterations=600,
        seed=0,
    )
    start = time.monotonic()
    state, records = train(train_set, net_cfg, train_cfg, record_every=150)
    print(f"trained {records[-1].iteration} iterations in "
          f"{time.monotonic() - start:.0f}s, "
          f"loss {records[0].loss:.5f} -> {records[-1].loss:.5f}")

    scores["trained merge network"] = mean_score(
        held_out, lambda s: predict(s.ldrs, state.params)
    )

    print("\nheld-out quality (tonemapped PSNR, higher is better):")
    for label, value in scores.items():
        print(f"  {label:<26} {value:6.2f} dB")
    margin = scores["trained merge network"] - max(
        v for k, v in scores.items() if k != "trained merge network"
    )
    print(f"\nnetwork leads the best classical merge by {margin:+.2f} dB")


if __name__ == "__main__":
    main()
