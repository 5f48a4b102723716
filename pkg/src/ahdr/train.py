"""Loss functions, Adam, patch sampling/augmentation, and the training loop.

Training minimizes the distance between mu-law-tonemapped prediction and
ground truth (l1 by default, l2 selectable); optimizing in the compressed
domain weights shadow errors the way a viewer of the tonemapped result
would.

Reproducibility contract: all randomness of iteration ``i`` comes from a
generator seeded with ``[seed, i]``, so a run resumed from a checkpoint at
any iteration replays exactly the batches, crops, and flips of an unbroken
run and produces bit-identical parameters.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .hdr import ExposureImage, GammaParams, HdrImage, TonemapParams, build_input, mu_law_tonemap
from .model import NetConfig, NetworkParams, build_variant, ahdr_forward
from .synth import SampleTriplet
from .tensor import Tensor, absolute, backward, clamp, no_grad, pow_scalar, sub, tensor_mean

__all__ = [
    "TrainConfig",
    "AdamState",
    "TrainRecord",
    "TrainState",
    "NonFiniteLossError",
    "NonFiniteGradientError",
    "loss_l1",
    "loss_l2",
    "adam_step",
    "zero_grads",
    "sample_patch",
    "augment",
    "dihedral_transform",
    "init_train_state",
    "assemble_batch",
    "train",
]

LOSS_KINDS = ("l1", "l2")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 8
    learning_rate: float = 1e-5
    patch_size: int = 256
    loss_kind: str = "l1"
    max_iterations: int = 1000
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if self.patch_size < 1:
            raise ValueError(f"patch_size must be positive, got {self.patch_size}")
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"loss_kind must be one of {LOSS_KINDS}, got '{self.loss_kind}'")
        if self.max_iterations < 0:
            raise ValueError(f"max_iterations must be non-negative, got {self.max_iterations}")
        if not (0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0):
            raise ValueError("adam betas must lie in [0, 1)")
        if self.adam_eps <= 0:
            raise ValueError(f"adam_eps must be positive, got {self.adam_eps}")


class NonFiniteLossError(RuntimeError):
    def __init__(self, iteration: int, value: float):
        self.iteration = iteration
        super().__init__(f"loss became non-finite ({value}) at iteration {iteration}")


class NonFiniteGradientError(RuntimeError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"non-finite gradient in parameter '{name}'")


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def _tonemapped_pair(pred: HdrImage, gt: HdrImage, tm: TonemapParams):
    # clamp both into the tonemap's domain; the sigmoid head already keeps
    # predictions inside (0,1), so this only guards the contract
    tp = mu_law_tonemap(clamp(pred.radiance, 0.0, 1.0), tm)
    tg = mu_law_tonemap(clamp(gt.radiance, 0.0, 1.0), tm)
    return tp, tg


def loss_l1(pred: HdrImage, gt: HdrImage, tm: TonemapParams = TonemapParams()) -> Tensor:
    """Mean |T(pred) - T(gt)|; mean reduction keeps the value patch-size invariant."""
    tp, tg = _tonemapped_pair(pred, gt, tm)
    return tensor_mean(absolute(sub(tp, tg)))


def loss_l2(pred: HdrImage, gt: HdrImage, tm: TonemapParams = TonemapParams()) -> Tensor:
    """Mean (T(pred) - T(gt))^2."""
    tp, tg = _tonemapped_pair(pred, gt, tm)
    return tensor_mean(pow_scalar(sub(tp, tg), 2.0))


_LOSS_FNS = {"l1": loss_l1, "l2": loss_l2}


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment estimates per named parameter plus the step count."""

    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @staticmethod
    def init(named: dict[str, Tensor]) -> "AdamState":
        return AdamState(
            step=0,
            m={n: np.zeros_like(t.data) for n, t in named.items()},
            v={n: np.zeros_like(t.data) for n, t in named.items()},
        )


def adam_step(named: dict[str, Tensor], state: AdamState, cfg: TrainConfig) -> None:
    """One bias-corrected Adam update, in place.  Missing grads count as zero."""
    state.step += 1
    t = state.step
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    for name, p in named.items():
        g = p.grad
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(name)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p.data -= (cfg.learning_rate / corr1) * m / (np.sqrt(v / corr2) + cfg.adam_eps)


def zero_grads(named: dict[str, Tensor]) -> None:
    for p in named.values():
        p.grad = None


# ---------------------------------------------------------------------------
# Patch sampling and augmentation
# ---------------------------------------------------------------------------


def _rebuild(sample: SampleTriplet, arrays: list[np.ndarray], gt: np.ndarray) -> SampleTriplet:
    ldrs = tuple(
        ExposureImage.from_bias(Tensor(a), img.bias) for a, img in zip(arrays, sample.ldrs)
    )
    return SampleTriplet(ldrs=ldrs, gt=HdrImage.ground_truth(Tensor(gt)), meta=sample.meta)


def sample_patch(sample: SampleTriplet, size: int, rng: np.random.Generator) -> SampleTriplet:
    """Crop the same random size x size window from all three LDRs and the GT."""
    _, _, h, w = sample.gt.radiance.shape
    if size > h or size > w:
        raise ValueError(f"patch size {size} exceeds image size {h}x{w}")
    top = int(rng.integers(0, h - size + 1))
    left = int(rng.integers(0, w - size + 1))
    window = np.s_[:, :, top : top + size, left : left + size]
    return _rebuild(
        sample,
        [img.ldr.data[window].copy() for img in sample.ldrs],
        sample.gt.radiance.data[window].copy(),
    )


def dihedral_transform(arr: np.ndarray, k: int) -> np.ndarray:
    """The k-th of the 8 axis-aligned flips/rotations (k in 0..7; 0 = identity)."""
    if not 0 <= k <= 7:
        raise ValueError(f"dihedral index must be in 0..7, got {k}")
    if k >= 4:
        arr = arr[..., ::-1]
    return np.ascontiguousarray(np.rot90(arr, k % 4, axes=(-2, -1)))


def augment(sample: SampleTriplet, rng: np.random.Generator) -> SampleTriplet:
    """Apply one random dihedral transform, the same one to every image."""
    _, _, h, w = sample.gt.radiance.shape
    if h != w:
        raise ValueError(f"augmentation needs square patches, got {h}x{w}")
    k = int(rng.integers(0, 8))
    return _rebuild(
        sample,
        [dihedral_transform(img.ldr.data, k) for img in sample.ldrs],
        dihedral_transform(sample.gt.radiance.data, k),
    )


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass
class TrainRecord:
    iteration: int
    loss: float
    wall_time: float
    eval_psnrs: dict | None = None


@dataclass
class TrainState:
    params: NetworkParams
    adam: AdamState
    iteration: int = 0


def init_train_state(net_cfg: NetConfig, train_cfg: TrainConfig) -> TrainState:
    params = build_variant(net_cfg, seed=train_cfg.seed)
    return TrainState(params=params, adam=AdamState.init(params.named_tensors()), iteration=0)


def assemble_batch(
    dataset: list[SampleTriplet],
    train_cfg: TrainConfig,
    iteration: int,
    g: GammaParams = GammaParams(),
):
    """Batch for one iteration: sample with replacement, crop, augment, stack.

    Deterministic in (seed, iteration) alone.  Returns (x1, x2, x3, gt)
    tensors of shape (B, 6|3, p, p).
    """
    rng = np.random.default_rng([train_cfg.seed, iteration])
    frames: list[list[np.ndarray]] = [[], [], []]
    gts = []
    for _ in range(train_cfg.batch_size):
        s = dataset[int(rng.integers(0, len(dataset)))]
        _, _, h, w = s.gt.radiance.shape
        if (h, w) != (train_cfg.patch_size, train_cfg.patch_size):
            s = sample_patch(s, train_cfg.patch_size, rng)
        s = augment(s, rng)
        with no_grad():
            for i in range(3):
                frames[i].append(build_input(s.ldrs[i], g).data)
        gts.append(s.gt.radiance.data)
    xs = [Tensor(np.concatenate(f, axis=0)) for f in frames]
    return xs[0], xs[1], xs[2], Tensor(np.concatenate(gts, axis=0))


def train(
    dataset: list[SampleTriplet],
    net_cfg: NetConfig,
    train_cfg: TrainConfig,
    state: TrainState | None = None,
    tm: TonemapParams = TonemapParams(),
    g: GammaParams = GammaParams(),
    record_every: int = 10,
    log_file=None,
    checkpoint_every: int = 0,
    checkpoint_hook=None,
    eval_every: int = 0,
    eval_hook=None,
) -> tuple[TrainState, list[TrainRecord]]:
    """Run (or resume) the optimization loop up to max_iterations.

    ``log_file`` receives one JSON line per record.  ``checkpoint_hook(state)``
    fires every ``checkpoint_every`` iterations and at the end;
    ``eval_hook(state) -> dict`` attaches evaluation scores to records.
    A non-finite loss aborts before the optimizer step, so the parameters
    (and any checkpoint already written) stay at the last good iteration.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    if state is None:
        state = init_train_state(net_cfg, train_cfg)
    named = state.params.named_tensors()
    loss_fn = _LOSS_FNS[train_cfg.loss_kind]
    records: list[TrainRecord] = []
    start = time.monotonic()

    def emit(record: TrainRecord):
        records.append(record)
        if log_file is not None:
            payload = {"iteration": record.iteration, "loss": record.loss, "timestamp": time.time()}
            if record.eval_psnrs:
                payload["eval"] = record.eval_psnrs
            log_file.write(json.dumps(payload) + "\n")
            log_file.flush()

    while state.iteration < train_cfg.max_iterations:
        it = state.iteration
        x1, x2, x3, gt = assemble_batch(dataset, train_cfg, it, g)
        pred = ahdr_forward(x1, x2, x3, state.params, net_cfg)
        loss = loss_fn(pred, HdrImage(gt), tm)
        value = loss.item()
        if not np.isfinite(value):
            raise NonFiniteLossError(it, value)
        backward(loss)
        adam_step(named, state.adam, train_cfg)
        zero_grads(named)
        state.iteration = it + 1

        is_last = state.iteration == train_cfg.max_iterations
        if record_every and (state.iteration % record_every == 0 or is_last):
            scores = None
            if eval_hook is not None and eval_every and (
                state.iteration % eval_every == 0 or is_last
            ):
                scores = eval_hook(state)
            emit(TrainRecord(state.iteration, value, time.monotonic() - start, scores))
        if checkpoint_hook is not None and (
            is_last or (checkpoint_every and state.iteration % checkpoint_every == 0)
        ):
            checkpoint_hook(state)
    return state, records
