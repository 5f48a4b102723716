"""Command-line surface: gen-data, train, infer, eval, tonemap, gradcheck.

Exit codes: 0 success, 1 usage error, 2 data error (unreadable or
inconsistent files), 3 numeric failure (non-finite loss or a failed
gradient check).  Every failure prints a single ``error: ...`` line to
stderr so scripts can grep for it.  Output files are written atomically
and only after all inputs have been read and validated, so an invocation
that fails leaves no partial artifacts behind.
"""

from __future__ import annotations

import argparse
import io
import os
import sys

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .dataset import DatasetError, generate_dataset, load_dataset
from .gradcheck import SUITE_NAMES, all_passed, format_results, run_suites
from .hdr import ExposureImage, GammaParams, TonemapParams, build_input, mu_law_tonemap
from .imgio import CodecError, atomic_write_bytes, read_pfm, read_ppm, write_pfm, write_ppm
from .metrics import evaluate
from .model import (
    VARIANT_NAMES,
    attention_forward,
    encode,
    predict,
    variant_config,
)
from .tensor import clamp, no_grad
from .train import (
    NonFiniteGradientError,
    NonFiniteLossError,
    TrainConfig,
    train,
)

__all__ = ["CliError", "cli_dispatch", "console_main"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class CliError(Exception):
    """Failure with a designated exit code; message goes to stderr."""

    def __init__(self, exit_code: int, message: str):
        self.exit_code = exit_code
        super().__init__(message)


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; the contract here is 1
    def error(self, message):
        raise CliError(EXIT_USAGE, message)


def _parse_biases(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise CliError(EXIT_USAGE, f"expected 3 comma-separated exposure biases, got {text!r}")
    try:
        biases = tuple(int(p) for p in parts)
    except ValueError:
        raise CliError(EXIT_USAGE, f"exposure biases must be integers, got {text!r}") from None
    if not biases[0] < biases[1] < biases[2]:
        raise CliError(EXIT_USAGE, f"exposure biases must be strictly ascending, got {biases}")
    return biases


def _merge_flag_values(argv: list[str], flags=("--biases",)) -> list[str]:
    """Rewrite ``--biases -2,0,2`` as ``--biases=-2,0,2``.

    argparse would otherwise read the leading ``-`` of the value as an
    unknown option, and the documented invocation uses the spaced form.
    """
    merged, i = [], 0
    while i < len(argv):
        if argv[i] in flags and i + 1 < len(argv):
            merged.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
        else:
            merged.append(argv[i])
            i += 1
    return merged


def _build_parser() -> _Parser:
    parser = _Parser(prog="ahdr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("gen-data", parents=[], help="render a synthetic exposure-triplet dataset")
    p.add_argument("--count", type=int, required=True, help="number of samples")
    p.add_argument("--seed", type=int, required=True, help="base seed; sample i derives from (seed, i)")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--biases", default="-2,0,2", help="comma-separated exposure stops")
    p.add_argument("--size", type=int, default=64, help="square image side in pixels")
    p.add_argument("--noise-sigma", type=float, default=0.0, help="capture noise std-dev before quantization")
    p.add_argument("--bits", type=int, choices=(8, 16), default=8, help="LDR quantization depth")
    p.add_argument("--min-motion", type=float, default=3.0, help="guaranteed object displacement in px")

    p = sub.add_parser("train", help="optimize a merging network on a dataset directory")
    p.add_argument("--data", required=True, help="dataset directory (from gen-data)")
    p.add_argument("--out", required=True, help="checkpoint file to write")
    p.add_argument("--variant", choices=VARIANT_NAMES, default="ahdr", help="network architecture variant")
    p.add_argument("--iters", type=int, required=True, help="total optimization iterations")
    p.add_argument("--patch", type=int, required=True, help="square crop size for training batches")
    p.add_argument("--batch", type=int, required=True, help="samples per batch")
    p.add_argument("--lr", type=float, required=True, help="Adam learning rate")
    p.add_argument("--loss", choices=("l1", "l2"), default="l1", help="tonemapped loss")
    p.add_argument("--seed", type=int, required=True, help="init/sampling seed")
    p.add_argument("--base-channels", type=int, default=64, help="encoder/feature width")
    p.add_argument("--growth-rate", type=int, default=32, help="dense-block growth rate")
    p.add_argument("--blocks", type=int, default=3, help="number of merging blocks")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--log", help="JSONL loss-log file (appended)")
    p.add_argument("--record-every", type=int, default=10, help="loss-record cadence")

    p = sub.add_parser("infer", help="fuse one exposure triplet into an HDR image")
    p.add_argument("--ckpt", required=True, help="trained checkpoint")
    p.add_argument("--low", required=True, help="short-exposure PPM")
    p.add_argument("--mid", required=True, help="reference-exposure PPM")
    p.add_argument("--high", required=True, help="long-exposure PPM")
    p.add_argument("--biases", default="-2,0,2", help="comma-separated exposure stops")
    p.add_argument("--out", required=True, help="output radiance PFM")
    p.add_argument("--tonemapped", help="also write a tonemapped 8-bit PPM preview")
    p.add_argument("--dump-attention", metavar="DIR", help="write raw attention maps as .npy files")

    p = sub.add_parser("eval", help="score a checkpoint against a dataset")
    p.add_argument("--ckpt", required=True, help="trained checkpoint")
    p.add_argument("--data", required=True, help="dataset directory with ground truth")
    p.add_argument("--report", required=True, help="text report file to write")

    p = sub.add_parser("tonemap", help="compress an HDR PFM into a display PPM")
    p.add_argument("--in", dest="input", required=True, help="input radiance PFM")
    p.add_argument("--mu", type=float, default=5000.0, help="tonemap compression strength")
    p.add_argument("--out", required=True, help="output PPM")
    p.add_argument("--bits", type=int, choices=(8, 16), default=8, help="output depth")

    p = sub.add_parser("gradcheck", help="verify gradients against finite differences")
    p.add_argument("--ops", choices=SUITE_NAMES, default="all", help="which suite to run")
    return parser


# ---------------------------------------------------------------------------
# Subcommand bodies
# ---------------------------------------------------------------------------


def _cmd_gen_data(args) -> int:
    if args.count < 1:
        raise CliError(EXIT_USAGE, f"--count must be positive, got {args.count}")
    if args.size < 12:
        raise CliError(EXIT_USAGE, f"--size must be at least 12 px, got {args.size}")
    biases = _parse_biases(args.biases)
    ids = generate_dataset(
        args.out,
        count=args.count,
        base_seed=args.seed,
        width=args.size,
        height=args.size,
        biases=biases,
        quantize_bits=args.bits,
        noise_sigma=args.noise_sigma,
        min_motion=args.min_motion,
    )
    print(f"wrote {len(ids)} samples to {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    dataset = load_dataset(args.data)
    net_cfg = variant_config(
        args.variant,
        base_channels=args.base_channels,
        growth_rate=args.growth_rate,
        num_drdb=args.blocks,
    )
    train_cfg = TrainConfig(
        batch_size=args.batch,
        learning_rate=args.lr,
        patch_size=args.patch,
        loss_kind=args.loss,
        max_iterations=args.iters,
        seed=args.seed,
    )
    state = None
    if args.resume:
        state, resumed_cfg = load_checkpoint(args.resume)
        if state.params.config != net_cfg:
            raise CliError(
                EXIT_DATA,
                f"{args.resume}: checkpoint architecture {state.params.config} does not "
                f"match the requested flags; drop the size/variant flags or retrain",
            )
        if state.iteration >= train_cfg.max_iterations:
            raise CliError(
                EXIT_USAGE,
                f"--iters {args.iters} not beyond resumed iteration {state.iteration}",
            )
        del resumed_cfg  # sampling schedule is keyed off iteration + new seed/config

    log_handle = open(args.log, "a", encoding="ascii") if args.log else None
    try:
        state, records = train(
            dataset,
            net_cfg,
            train_cfg,
            state=state,
            record_every=args.record_every,
            log_file=log_handle,
        )
    finally:
        if log_handle is not None:
            log_handle.close()
    save_checkpoint(args.out, state, train_cfg)
    final = records[-1].loss if records else float("nan")
    print(f"trained to iteration {state.iteration}, final loss {final:.6f}, saved {args.out}")
    return EXIT_OK


def _load_exposure(path, bias: int) -> ExposureImage:
    return ExposureImage.from_bias(read_ppm(path), bias)


def _cmd_infer(args) -> int:
    biases = _parse_biases(args.biases)
    state, _ = load_checkpoint(args.ckpt)
    ldrs = tuple(
        _load_exposure(path, bias)
        for path, bias in zip((args.low, args.mid, args.high), biases)
    )
    shapes = {img.ldr.shape for img in ldrs}
    if len(shapes) != 1:
        raise CliError(
            EXIT_DATA, f"exposure dimensions disagree: {sorted(s[2:] for s in shapes)}"
        )
    if args.dump_attention and not state.params.config.use_attention:
        raise CliError(
            EXIT_DATA,
            f"{args.ckpt}: variant has no attention stage, nothing to dump",
        )
    fused = predict(ldrs, state.params)
    write_pfm(args.out, fused.radiance)
    if args.tonemapped:
        with no_grad():
            preview = mu_law_tonemap(fused.radiance, TonemapParams())
        write_ppm(args.tonemapped, preview)
    if args.dump_attention:
        _dump_attention(args.dump_attention, ldrs, state.params)
    print(f"wrote {args.out}")
    return EXIT_OK


def _dump_attention(out_dir, ldrs, params) -> None:
    g = GammaParams()
    os.makedirs(out_dir, exist_ok=True)
    with no_grad():
        x1, x2, x3 = (build_input(img, g) for img in ldrs)
        z1, z_r, z3 = (encode(x, params.encoder) for x in (x1, x2, x3))
        maps = {
            "attention_low": attention_forward(z1, z_r, params.attention_low),
            "attention_high": attention_forward(z3, z_r, params.attention_high),
        }
    for name, tensor in maps.items():
        buf = io.BytesIO()
        np.save(buf, tensor.data[0])
        atomic_write_bytes(os.path.join(out_dir, f"{name}.npy"), buf.getvalue())


def _cmd_eval(args) -> int:
    state, _ = load_checkpoint(args.ckpt)
    dataset = load_dataset(args.data)
    items = []
    for i, sample in enumerate(dataset):
        pred = predict(sample.ldrs, state.params)
        items.append((f"sample_{i:04d}", pred, sample.gt))
    report = evaluate(
        items, fingerprint=f"{os.path.basename(args.ckpt)}@iter{state.iteration}"
    )
    atomic_write_bytes(args.report, report.to_text().encode("ascii"))
    print(
        f"evaluated {len(items)} samples: "
        f"mean tonemapped-domain psnr {report.mean_psnr_mu:.4f} dB, "
        f"linear {report.mean_psnr_l:.4f} dB -> {args.report}"
    )
    return EXIT_OK


def _cmd_tonemap(args) -> int:
    if args.mu <= 0:
        raise CliError(EXIT_USAGE, f"--mu must be positive, got {args.mu}")
    radiance = read_pfm(args.input)
    with no_grad():
        mapped = mu_law_tonemap(clamp(radiance, 0.0, 1.0), TonemapParams(mu=args.mu))
    write_ppm(args.out, mapped, maxval=255 if args.bits == 8 else 65535)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    results = run_suites(args.ops)
    print(format_results(results))
    if not all_passed(results):
        raise CliError(EXIT_NUMERIC, "gradient check failed, see report above")
    return EXIT_OK


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "infer": _cmd_infer,
    "eval": _cmd_eval,
    "tonemap": _cmd_tonemap,
    "gradcheck": _cmd_gradcheck,
}


def cli_dispatch(argv: list[str]) -> int:
    """Parse argv and run one subcommand, mapping failures to exit codes."""
    parser = _build_parser()
    try:
        args = parser.parse_args(_merge_flag_values(list(argv)))
        if args.command is None:
            raise CliError(EXIT_USAGE, "missing subcommand (see --help)")
        return _COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (CodecError, DatasetError, CheckpointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteLossError, NonFiniteGradientError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # config/shape validation raised below the CLI layer
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def console_main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    console_main()
