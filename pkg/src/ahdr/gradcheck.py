"""Systematic finite-difference verification of every differentiable op.

Each suite builds small double-precision problems, runs
:func:`ahdr.tensor.finite_diff_check` (central differences, one element at
a time), and reports the worst relative disagreement.  The op suites must
stay under 1e-4; the end-to-end suite pushes a miniature but fully wired
network (attention, one dilated dense block, global residual, tonemapped
loss) and checks the gradient with respect to every named parameter and
every input, at 1e-3.

Inputs are placed away from the kinks of relu/clamp/absolute so the
numeric oracle probes a region where the true derivative exists.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hdr import HdrImage, TonemapParams, mu_law_tonemap
from .model import ahdr_forward, build_variant, variant_config
from .tensor import (
    ConvSpec,
    Tensor,
    absolute,
    add,
    channel_slice,
    clamp,
    concat_channels,
    conv2d,
    finite_diff_check,
    log,
    offset,
    pointwise_mul,
    pow_scalar,
    relu,
    scale,
    sigmoid,
    sub,
    tensor_mean,
    tensor_sum,
)
from .train import loss_l1, loss_l2

__all__ = ["CheckResult", "SUITE_NAMES", "run_suites", "format_results", "all_passed"]

OP_TOL = 1e-4
END_TO_END_TOL = 1e-3
_EPS = 1e-5


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one finite-difference comparison."""

    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance


def _rand(rng, shape, lo=0.0, hi=1.0):
    return Tensor(rng.uniform(lo, hi, shape).astype(np.float64))


def _suite_conv() -> list[CheckResult]:
    rng = np.random.default_rng(101)
    results = []
    for k, d in ((1, 1), (3, 1), (3, 2), (5, 1), (5, 2)):
        spec = ConvSpec(in_channels=3, out_channels=4, kernel_size=k, dilation=d)
        x = _rand(rng, (2, 3, 5, 5), -1.0, 1.0)
        w = Tensor(rng.standard_normal((4, 3, k, k)) * 0.5)
        b = Tensor(rng.standard_normal((1, 4, 1, 1)) * 0.1)

        def wrt_x(t, w=w, b=b, spec=spec):
            return tensor_sum(sigmoid(conv2d(t, w, b, spec)))

        def wrt_w(t, x=x, b=b, spec=spec):
            return tensor_sum(sigmoid(conv2d(x, t, b, spec)))

        def wrt_b(t, x=x, w=w, spec=spec):
            return tensor_sum(sigmoid(conv2d(x, w, t, spec)))

        tag = f"conv/k{k}_d{d}"
        results.append(CheckResult(f"{tag}/input", finite_diff_check(wrt_x, x, _EPS), OP_TOL))
        results.append(CheckResult(f"{tag}/weight", finite_diff_check(wrt_w, w, _EPS), OP_TOL))
        results.append(CheckResult(f"{tag}/bias", finite_diff_check(wrt_b, b, _EPS), OP_TOL))
    return results


def _suite_elementwise() -> list[CheckResult]:
    rng = np.random.default_rng(202)
    other = _rand(rng, (2, 3, 5, 5), 0.3, 0.9)
    cases = {
        # inputs shifted away from each op's non-differentiable points
        "relu": (lambda t: tensor_sum(relu(t)), _rand(rng, (2, 3, 5, 5), 0.1, 1.0)),
        "sigmoid": (lambda t: tensor_sum(sigmoid(t)), _rand(rng, (2, 3, 5, 5), -3.0, 3.0)),
        "log": (lambda t: tensor_sum(log(t)), _rand(rng, (2, 3, 5, 5), 0.2, 2.0)),
        "clamp": (
            lambda t: tensor_sum(clamp(t, 0.0, 1.0)),
            _rand(rng, (2, 3, 5, 5), 0.1, 0.9),
        ),
        "absolute": (lambda t: tensor_sum(absolute(t)), _rand(rng, (2, 3, 5, 5), 0.2, 1.0)),
        "pow": (lambda t: tensor_sum(pow_scalar(t, 2.2)), _rand(rng, (2, 3, 5, 5), 0.1, 1.0)),
        "add": (lambda t: tensor_sum(add(t, other)), _rand(rng, (2, 3, 5, 5))),
        "sub": (lambda t: tensor_sum(sub(t, other)), _rand(rng, (2, 3, 5, 5))),
        "mul": (lambda t: tensor_sum(pointwise_mul(t, other)), _rand(rng, (2, 3, 5, 5))),
        "scale": (lambda t: tensor_sum(scale(t, 2.5)), _rand(rng, (2, 3, 5, 5))),
        "offset": (lambda t: tensor_sum(offset(t, 1.5)), _rand(rng, (2, 3, 5, 5))),
        "mean": (lambda t: tensor_mean(pointwise_mul(t, other)), _rand(rng, (2, 3, 5, 5))),
        "tonemap": (
            lambda t: tensor_sum(mu_law_tonemap(t, TonemapParams())),
            _rand(rng, (2, 3, 5, 5), 0.05, 0.95),
        ),
    }
    return [
        CheckResult(f"elementwise/{name}", finite_diff_check(f, x, _EPS), OP_TOL)
        for name, (f, x) in cases.items()
    ]


def _suite_structural() -> list[CheckResult]:
    rng = np.random.default_rng(303)
    a = _rand(rng, (2, 2, 5, 5))
    b = _rand(rng, (2, 3, 5, 5))
    weights = _rand(rng, (2, 5, 5, 5), -1.0, 1.0)
    slice_weights = _rand(rng, (2, 2, 5, 5), -1.0, 1.0)

    def concat_first(t):
        return tensor_sum(pointwise_mul(concat_channels([t, b]), weights))

    def concat_second(t):
        return tensor_sum(pointwise_mul(concat_channels([a, t]), weights))

    def slice_mid(t):
        return tensor_sum(pointwise_mul(channel_slice(t, 1, 3), slice_weights))

    return [
        CheckResult("structural/concat_first", finite_diff_check(concat_first, a, _EPS), OP_TOL),
        CheckResult("structural/concat_second", finite_diff_check(concat_second, b, _EPS), OP_TOL),
        CheckResult("structural/slice", finite_diff_check(slice_mid, b, _EPS), OP_TOL),
    ]


def _suite_losses() -> list[CheckResult]:
    rng = np.random.default_rng(404)
    # predictions kept > 0.05 away from the target so neither the l1 kink
    # nor the clamp corners sit inside the finite-difference bracket
    gt = HdrImage(_rand(rng, (2, 3, 5, 5), 0.1, 0.45))
    pred = _rand(rng, (2, 3, 5, 5), 0.5, 0.9)
    tm = TonemapParams()

    def l1(t):
        return loss_l1(HdrImage(t), gt, tm)

    def l2(t):
        return loss_l2(HdrImage(t), gt, tm)

    return [
        CheckResult("losses/l1_tonemapped", finite_diff_check(l1, pred, _EPS), OP_TOL),
        CheckResult("losses/l2_tonemapped", finite_diff_check(l2, pred, _EPS), OP_TOL),
    ]


def _suite_end_to_end() -> list[CheckResult]:
    cfg = variant_config(
        "ahdr", base_channels=8, growth_rate=8, drdb_conv_layers=3, num_drdb=1
    )
    params = build_variant(cfg, seed=17, dtype=np.float64)
    rng = np.random.default_rng(505)
    xs = [_rand(rng, (1, 6, 8, 8)) for _ in range(3)]
    gt = HdrImage(_rand(rng, (1, 3, 8, 8), 0.05, 0.95))
    tm = TonemapParams()

    def run_loss():
        out = ahdr_forward(xs[0], xs[1], xs[2], params, cfg)
        return loss_l2(out, gt, tm)

    results = []
    convs = _named_convs(params)
    for name, conv in convs.items():
        for attr in ("weight", "bias"):
            current = getattr(conv, attr)

            def f(t, conv=conv, attr=attr):
                saved = getattr(conv, attr)
                setattr(conv, attr, t)
                try:
                    return run_loss()
                finally:
                    setattr(conv, attr, saved)

            err = finite_diff_check(f, current, _EPS)
            results.append(CheckResult(f"end-to-end/{name}.{attr}", err, END_TO_END_TOL))
    for i, x in enumerate(xs):

        def f(t, i=i):
            probe = [t if j == i else xs[j] for j in range(3)]
            out = ahdr_forward(probe[0], probe[1], probe[2], params, cfg)
            return loss_l2(out, gt, tm)

        results.append(
            CheckResult(f"end-to-end/input{i}", finite_diff_check(f, x, _EPS), END_TO_END_TOL)
        )
    return results


def _named_convs(params) -> dict:
    """Flatten NetworkParams into {table-name-prefix: ConvParams}."""
    convs = {"encoder": params.encoder}
    for label, att in (("attention_low", params.attention_low), ("attention_high", params.attention_high)):
        if att is not None:
            convs[f"{label}.conv1"] = att.conv1
            convs[f"{label}.conv2"] = att.conv2
    convs["merge_head"] = params.merge_head
    for i, block in enumerate(params.drdbs):
        if hasattr(block, "dense"):
            for j, dense in enumerate(block.dense):
                convs[f"block{i}.dense{j}"] = dense
            convs[f"block{i}.compress"] = block.compress
        else:
            convs[f"block{i}.conv1"] = block.conv1
            convs[f"block{i}.conv2"] = block.conv2
    convs["fuse"] = params.fuse
    convs["tail1"] = params.tail1
    convs["tail2"] = params.tail2
    return convs


_SUITES = {
    "conv": _suite_conv,
    "elementwise": _suite_elementwise,
    "structural": _suite_structural,
    "losses": _suite_losses,
    "end-to-end": _suite_end_to_end,
}
SUITE_NAMES = ("all",) + tuple(_SUITES)


def run_suites(which: str = "all") -> list[CheckResult]:
    """Run one suite by name, or every suite for ``"all"``."""
    if which == "all":
        names = list(_SUITES)
    elif which in _SUITES:
        names = [which]
    else:
        raise ValueError(f"unknown suite {which!r}, expected one of {SUITE_NAMES}")
    results = []
    for name in names:
        results.extend(_SUITES[name]())
    return results


def all_passed(results: list[CheckResult]) -> bool:
    return all(r.passed for r in results)


def format_results(results: list[CheckResult]) -> str:
    lines = [
        f"{'PASS' if r.passed else 'FAIL'}  {r.name:<40s} {r.max_error:.3e} < {r.tolerance:.0e}"
        for r in results
    ]
    worst = max(results, key=lambda r: r.max_error / r.tolerance)
    verdict = "all gradients verified" if all_passed(results) else "GRADIENT MISMATCH"
    lines.append(f"{len(results)} checks, worst {worst.name} ({worst.max_error:.3e}): {verdict}")
    return "\n".join(lines)
