"""Attention-guided multi-exposure HDR fusion on a self-contained autodiff core.

The package is organized as a pipeline; each module is importable on its
own, and the most commonly used names are re-exported here:

- ``tensor``: rank-4 arrays with reverse-mode autodiff and the op set
  the network is built from.
- ``hdr``: mappings between LDR, linear-radiance, and mu-law tonemapped
  domains.
- ``model``: the merge network, its ablation variants, and ``predict``.
- ``synth``: procedural scene generator and forward camera model.
- ``dataset``: on-disk triplet datasets with a manifest.
- ``train``: tonemapped losses, Adam, and the training loop.
- ``metrics``: PSNR scores, the classical merge baseline, evaluation
  reports.
- ``imgio``: PPM and PFM codecs.
- ``checkpoint``: single-file training-state container.
- ``gradcheck``: finite-difference verification suites.
- ``cli``: the ``ahdr`` command-line entry point.
"""

from .checkpoint import infer_params, load_checkpoint, save_checkpoint
from .dataset import generate_dataset, load_dataset, load_sample, read_manifest, save_sample
from .hdr import (
    ExposureImage,
    GammaParams,
    HdrImage,
    TonemapParams,
    build_input,
    ldr_to_hdr_domain,
    mu_law_tonemap,
)
from .imgio import read_pfm, read_ppm, write_pfm, write_ppm
from .metrics import EvalReport, baseline_merge, evaluate, psnr, psnr_linear, psnr_mu
from .model import (
    VARIANT_NAMES,
    NetConfig,
    NetworkParams,
    ahdr_forward,
    build_variant,
    parameter_count,
    predict,
    variant_config,
)
from .synth import DEFAULT_BIASES, SampleTriplet, SceneSpec, gen_scene, make_sample, random_scene
from .tensor import ConvSpec, Tensor, backward, conv2d, finite_diff_check, no_grad
from .train import (
    AdamState,
    TrainConfig,
    TrainRecord,
    TrainState,
    init_train_state,
    loss_l1,
    loss_l2,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # tensor core
    "Tensor",
    "ConvSpec",
    "conv2d",
    "backward",
    "no_grad",
    "finite_diff_check",
    # domains
    "GammaParams",
    "TonemapParams",
    "ExposureImage",
    "HdrImage",
    "ldr_to_hdr_domain",
    "build_input",
    "mu_law_tonemap",
    # model
    "NetConfig",
    "NetworkParams",
    "VARIANT_NAMES",
    "variant_config",
    "build_variant",
    "ahdr_forward",
    "predict",
    "parameter_count",
    # synthetic data
    "DEFAULT_BIASES",
    "SceneSpec",
    "SampleTriplet",
    "gen_scene",
    "make_sample",
    "random_scene",
    # datasets on disk
    "generate_dataset",
    "save_sample",
    "load_sample",
    "load_dataset",
    "read_manifest",
    # training
    "TrainConfig",
    "TrainState",
    "TrainRecord",
    "AdamState",
    "init_train_state",
    "train",
    "loss_l1",
    "loss_l2",
    # evaluation
    "psnr",
    "psnr_mu",
    "psnr_linear",
    "baseline_merge",
    "evaluate",
    "EvalReport",
    # image files
    "read_ppm",
    "write_ppm",
    "read_pfm",
    "write_pfm",
    # checkpoints
    "save_checkpoint",
    "load_checkpoint",
    "infer_params",
]
