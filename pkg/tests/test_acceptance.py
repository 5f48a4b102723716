"""Acceptance gate: one test per shipped guarantee, at its stated tolerance.

Run with ``pytest -v tests/test_acceptance.py`` -- the verbose listing
gives one pass/fail line per criterion, and each test also prints its
measured numbers.  The benchmark criteria (5 and 6) share one module-
scoped ablation matrix: three architecture variants, three seeds each,
2000 iterations per run on synthetic data, roughly twenty minutes total
on one CPU core.  All training here is bitwise deterministic, so these
results are exactly reproducible run to run.
"""

import time

import numpy as np
import pytest

from ahdr.gradcheck import all_passed, run_suites
from ahdr.hdr import (
    ExposureImage,
    GammaParams,
    HdrImage,
    build_input,
    ldr_to_hdr_domain,
    mu_law_tonemap,
)
from ahdr.imgio import read_pfm, read_ppm, write_pfm, write_ppm
from ahdr.metrics import baseline_merge, psnr_mu
from ahdr.model import (
    NetConfig,
    ahdr_forward,
    attention_forward,
    build_variant,
    encode,
    predict,
    variant_config,
)
from ahdr.synth import make_sample, random_scene
from ahdr.tensor import Tensor, no_grad
from ahdr.train import TrainConfig, train

# --------------------------------------------------------------------------
# Shared benchmark protocol (criteria 5 and 6)
# --------------------------------------------------------------------------

NOISE_SIGMA = 0.05
MINIATURE = dict(base_channels=16, growth_rate=8, num_drdb=3)
BENCH_SEEDS = (0, 1, 2)


def bench_train_config(seed: int) -> TrainConfig:
    return TrainConfig(
        batch_size=4, learning_rate=1e-4, patch_size=32, max_iterations=2000, seed=seed
    )


@pytest.fixture(scope="module")
def benchmark_data():
    train_set = [make_sample(random_scene(1000 + i), noise_sigma=NOISE_SIGMA) for i in range(64)]
    held_set = [make_sample(random_scene(2000 + i), noise_sigma=NOISE_SIGMA) for i in range(16)]
    return train_set, held_set


def mean_psnr_mu(params, held) -> float:
    return float(np.mean([psnr_mu(predict(s.ldrs, params), s.gt) for s in held]))


@pytest.fixture(scope="module")
def ablation_scores(benchmark_data):
    """{variant: {seed: held-out mean PSNR-mu}} plus per-run wall times."""
    train_set, held_set = benchmark_data
    scores, times = {}, {}
    for variant in ("ahdr", "drdb", "rdb"):
        net_cfg = variant_config(variant, **MINIATURE)
        scores[variant], times[variant] = {}, {}
        for seed in BENCH_SEEDS:
            t0 = time.monotonic()
            state, _ = train(train_set, net_cfg, bench_train_config(seed))
            scores[variant][seed] = mean_psnr_mu(state.params, held_set)
            times[variant][seed] = time.monotonic() - t0
    return scores, times


# --------------------------------------------------------------------------
# 1. Gradient correctness
# --------------------------------------------------------------------------


def test_criterion_1_gradient_correctness():
    t0 = time.monotonic()
    ops = (
        run_suites("conv")
        + run_suites("elementwise")
        + run_suites("structural")
        + run_suites("losses")
    )
    end_to_end = run_suites("end-to-end")
    elapsed = time.monotonic() - t0

    worst_op = max(r.max_error for r in ops)
    worst_e2e = max(r.max_error for r in end_to_end)
    assert all(r.tolerance == 1e-4 for r in ops)
    assert all(r.tolerance == 1e-3 for r in end_to_end)
    assert all_passed(ops), f"op gradient mismatch, worst {worst_op:.3e}"
    assert all_passed(end_to_end), f"end-to-end gradient mismatch, worst {worst_e2e:.3e}"
    assert elapsed < 120.0, f"gradient checks took {elapsed:.0f}s, budget is 2 min"
    print(
        f"CRITERION 1 PASS: {len(ops)} op checks worst {worst_op:.2e} < 1e-4, "
        f"{len(end_to_end)} end-to-end checks worst {worst_e2e:.2e} < 1e-3, {elapsed:.1f}s"
    )


# --------------------------------------------------------------------------
# 2. Exact formula values
# --------------------------------------------------------------------------


def as_t64(v: float) -> Tensor:
    return Tensor(np.full((1, 3, 2, 2), v, dtype=np.float64))


def test_criterion_2_exact_formula_values():
    t_zero = mu_law_tonemap(as_t64(0.0)).data.flat[0]
    t_one = mu_law_tonemap(as_t64(1.0)).data.flat[0]
    t_half = mu_law_tonemap(as_t64(0.5)).data.flat[0]
    assert t_zero == 0.0
    assert abs(t_one - 1.0) < 1e-12
    assert abs(t_half - 0.91864) < 1e-4

    img = ExposureImage(ldr=as_t64(0.5), t=4.0, bias=2)
    mapped = ldr_to_hdr_domain(img, GammaParams(gamma=2.2)).data.flat[0]
    assert abs(mapped - 0.05441) < 1e-5
    print(
        f"CRITERION 2 PASS: T(0)={t_zero}, T(1)={t_one:.12f}, T(0.5)={t_half:.6f} "
        f"(+/-1e-4 of 0.91864), 0.5^2.2/4={mapped:.6f} (+/-1e-5 of 0.05441)"
    )


# --------------------------------------------------------------------------
# 3. Structural identities
# --------------------------------------------------------------------------


def zeroed(params):
    for t in params.named_tensors().values():
        t.data = np.zeros_like(t.data)
    return params


def test_criterion_3_structural_identities():
    rng = np.random.default_rng(77)

    # zero-weight dilated dense block is an exact identity
    from ahdr.model import drdb_forward

    cfg = NetConfig(base_channels=4, growth_rate=4, drdb_conv_layers=3, num_drdb=1)
    params = zeroed(build_variant(cfg, seed=0))
    x = Tensor(rng.uniform(-1, 1, (1, 4, 9, 9)).astype(np.float32))
    np.testing.assert_array_equal(drdb_forward(x, params.drdbs[0], cfg).data, x.data)

    # zero-weight full network with the global skip maps everything to 0.5
    xs = [Tensor(rng.uniform(0, 1, (1, 6, 8, 8)).astype(np.float32)) for _ in range(3)]
    out = ahdr_forward(*xs, params, cfg)
    np.testing.assert_array_equal(out.radiance.data, np.full((1, 3, 8, 8), 0.5, np.float32))

    # attention maps live strictly inside (0,1)
    live = build_variant(cfg, seed=3)
    z1 = encode(xs[0], live.encoder)
    z_r = encode(xs[1], live.encoder)
    att = attention_forward(z1, z_r, live.attention_low)
    assert np.all(att.data > 0.0) and np.all(att.data < 1.0)

    # spatial dimensions preserved, odd sizes included
    sizes = [(8, 8), (17, 17), (64, 64), (256, 256), (17, 64), (8, 256)]
    for h, w in sizes:
        probe = [Tensor(rng.uniform(0, 1, (1, 6, h, w)).astype(np.float32)) for _ in range(3)]
        with no_grad():
            got = ahdr_forward(*probe, live, cfg)
        assert got.radiance.shape == (1, 3, h, w), (h, w)
    print(
        "CRITERION 3 PASS: zero-weight block identity exact, zero-weight net == 0.5, "
        f"attention in (0,1), dims preserved for {sizes}"
    )


# --------------------------------------------------------------------------
# 4. Single-sample overfit
# --------------------------------------------------------------------------


def test_criterion_4_single_sample_overfit():
    t0 = time.monotonic()
    net_cfg = NetConfig(**MINIATURE)
    train_cfg = TrainConfig(
        batch_size=1, learning_rate=1e-4, patch_size=32, max_iterations=500, seed=0
    )
    data = [make_sample(random_scene(42, width=32, height=32))]
    state, records = train(data, net_cfg, train_cfg, record_every=1)
    elapsed = time.monotonic() - t0

    first = records[0]
    final = records[-1]
    assert first.iteration == 1 and final.iteration == 500
    assert final.loss < 0.20 * first.loss, (
        f"final loss {final.loss:.6f} not under 20% of iteration-1 loss {first.loss:.6f}"
    )
    assert elapsed < 600.0, f"overfit run took {elapsed:.0f}s, budget is 10 min"
    print(
        f"CRITERION 4 PASS: loss {first.loss:.5f} -> {final.loss:.5f} "
        f"({100 * final.loss / first.loss:.1f}% of iteration 1) in {elapsed:.0f}s"
    )


# --------------------------------------------------------------------------
# 5. Learned fusion beats reference passthrough and the classical merge
# --------------------------------------------------------------------------


def test_criterion_5_beats_passthrough_and_baseline(benchmark_data, ablation_scores):
    train_set, held_set = benchmark_data
    scores, times = ablation_scores
    net_score = scores["ahdr"][0]
    run_time = times["ahdr"][0]

    with no_grad():
        passthrough = float(
            np.mean(
                [
                    psnr_mu(HdrImage(ldr_to_hdr_domain(s.reference)), s.gt)
                    for s in held_set
                ]
            )
        )
        baseline = float(np.mean([psnr_mu(baseline_merge(s), s.gt) for s in held_set]))

    assert net_score >= passthrough + 1.0, (
        f"net {net_score:.3f} dB does not beat passthrough {passthrough:.3f} dB by 1 dB"
    )
    assert net_score >= baseline + 1.0, (
        f"net {net_score:.3f} dB does not beat triangle merge {baseline:.3f} dB by 1 dB"
    )
    assert run_time < 3600.0, f"training took {run_time:.0f}s, budget is 1 hour"
    print(
        f"CRITERION 5 PASS: net {net_score:.3f} dB vs passthrough {passthrough:.3f} "
        f"(+{net_score - passthrough:.2f}) and triangle merge {baseline:.3f} "
        f"(+{net_score - baseline:.2f}), trained in {run_time:.0f}s"
    )


# --------------------------------------------------------------------------
# 6. Ablation ordering
# --------------------------------------------------------------------------


def test_criterion_6_ablation_ordering(ablation_scores):
    scores, _ = ablation_scores
    medians = {
        variant: float(np.median([scores[variant][s] for s in BENCH_SEEDS]))
        for variant in scores
    }
    assert medians["ahdr"] >= medians["drdb"], (
        f"attention ablation inverted: {medians['ahdr']:.3f} < {medians['drdb']:.3f}"
    )
    assert medians["ahdr"] >= medians["rdb"], (
        f"dilation+attention ablation inverted: {medians['ahdr']:.3f} < {medians['rdb']:.3f}"
    )
    per_seed = {v: [round(scores[v][s], 3) for s in BENCH_SEEDS] for v in scores}
    print(
        f"CRITERION 6 PASS: medians full {medians['ahdr']:.3f} >= no-attention "
        f"{medians['drdb']:.3f} and >= plain-dense {medians['rdb']:.3f}; per-seed {per_seed}"
    )


# --------------------------------------------------------------------------
# 7. Determinism and persistence
# --------------------------------------------------------------------------


def test_criterion_7_determinism_and_persistence(tmp_path):
    from ahdr.checkpoint import load_checkpoint, save_checkpoint
    from ahdr.cli import cli_dispatch
    from ahdr.dataset import generate_dataset

    net_cfg = NetConfig(base_channels=8, growth_rate=4, drdb_conv_layers=3, num_drdb=1)
    train_cfg = TrainConfig(
        batch_size=2, learning_rate=1e-4, patch_size=16, max_iterations=100, seed=11
    )
    data = [make_sample(random_scene(300 + i, width=16, height=16)) for i in range(4)]

    runs = []
    for _ in range(2):
        state, records = train(data, net_cfg, train_cfg)
        runs.append((state, records[-1].loss))
    a, b = runs[0][0].params.named_tensors(), runs[1][0].params.named_tensors()
    for name in a:
        np.testing.assert_array_equal(a[name].data, b[name].data, err_msg=name)
    assert runs[0][1] == runs[1][1]

    ckpt1 = tmp_path / "a.ckpt"
    ckpt2 = tmp_path / "b.ckpt"
    save_checkpoint(ckpt1, runs[0][0], train_cfg)
    loaded, loaded_cfg = load_checkpoint(ckpt1)
    for name in a:
        np.testing.assert_array_equal(loaded.params.named_tensors()[name].data, a[name].data)
        np.testing.assert_array_equal(loaded.adam.m[name], runs[0][0].adam.m[name])
        np.testing.assert_array_equal(loaded.adam.v[name], runs[0][0].adam.v[name])
    save_checkpoint(ckpt2, loaded, loaded_cfg)
    assert ckpt1.read_bytes() == ckpt2.read_bytes()

    generate_dataset(tmp_path / "ds", count=1, base_seed=9, width=16, height=16)
    sd = tmp_path / "ds" / "sample_0000"
    outs = []
    for name in ("o1.pfm", "o2.pfm"):
        code = cli_dispatch(
            ["infer", "--ckpt", str(ckpt1), "--low", str(sd / "ldr_0.ppm"),
             "--mid", str(sd / "ldr_1.ppm"), "--high", str(sd / "ldr_2.ppm"),
             "--out", str(tmp_path / name)]
        )
        assert code == 0
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]
    print(
        "CRITERION 7 PASS: 100-iteration same-seed runs bit-identical, checkpoint "
        "round-trip bitwise (file bytes equal), infer reruns byte-identical"
    )


# --------------------------------------------------------------------------
# 8. Codec round-trips
# --------------------------------------------------------------------------


def test_criterion_8_codec_round_trips(tmp_path):
    rng = np.random.default_rng(2024)

    for i in range(100):
        h = int(rng.integers(1, 24)) | (1 if i % 2 else 0)  # odd dims half the time
        w = int(rng.integers(1, 24)) | (1 if i % 3 == 0 else 0)
        maxval = 255 if i % 2 == 0 else 65535
        grid = rng.integers(0, maxval + 1, size=(1, 3, h, w)).astype(np.float32)
        grid.flat[0] = 0.0  # extreme values present in every image
        grid.flat[-1] = maxval
        img = Tensor(grid / np.float32(maxval))
        path = tmp_path / f"p{i}.ppm"
        write_ppm(path, img, maxval=maxval)
        np.testing.assert_array_equal(read_ppm(path).data, img.data, err_msg=f"ppm {i}")

    for i in range(100):
        h = int(rng.integers(1, 24)) | (1 if i % 2 else 0)
        w = int(rng.integers(1, 24)) | (1 if i % 3 == 0 else 0)
        arr = rng.random((1, 3, h, w)).astype(np.float32)
        arr.flat[0] = 0.0
        arr.flat[-1] = 1.0
        path = tmp_path / f"f{i}.pfm"
        write_pfm(path, Tensor(arr))
        np.testing.assert_array_equal(read_pfm(path).data, arr, err_msg=f"pfm {i}")
    print(
        "CRITERION 8 PASS: 100 PPM and 100 PFM write-read round trips bit-identical, "
        "odd dimensions and {0,1} extremes included"
    )
