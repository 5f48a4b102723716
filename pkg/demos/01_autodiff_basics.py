"""Tour of the tensor core: building a graph, backprop, and verifying it.

Everything downstream (the merging network, the losses, training) is
composed from these few primitives, so this is the whole mental model:
rank-4 tensors, ops that record their parents, one backward() walk.
"""

import numpy as np

from ahdr.tensor import (
    ConvSpec,
    Tensor,
    backward,
    conv2d,
    finite_diff_check,
    pointwise_mul,
    relu,
    sigmoid,
    tensor_sum,
)


def main():
    rng = np.random.default_rng(0)

    # Tensors are always (batch, channels, height, width).
    x = Tensor(rng.uniform(-1, 1, (1, 3, 5, 5)), requires_grad=True)
    spec = ConvSpec(in_channels=3, out_channels=2, kernel_size=3, dilation=2)
    w = Tensor(rng.standard_normal(spec.weight_shape) * 0.3, requires_grad=True)
    b = Tensor(np.zeros((1, 2, 1, 1)), requires_grad=True)

    # A small graph: dilated conv -> relu -> gate -> scalar.
    features = relu(conv2d(x, w, b, spec))
    gate = sigmoid(features)
    loss = tensor_sum(pointwise_mul(features, gate))
    print(f"forward value: {loss.item():.6f}")

    # One call fills .grad on every tensor that asked for it.
    backward(loss)
    print(f"dloss/dx   shape {x.grad.shape}, mean |g| = {np.abs(x.grad).mean():.6f}")
    print(f"dloss/dw   shape {w.grad.shape}, mean |g| = {np.abs(w.grad).mean():.6f}")
    print(f"dloss/db   shape {b.grad.shape}, mean |g| = {np.abs(b.grad).mean():.6f}")

    # The graph is single-use: closures are freed during the walk.
    try:
        backward(loss)
    except RuntimeError as exc:
        print(f"second backward refused as expected: {exc}")

    # The same check the test suite leans on: central finite differences.
    def f(t):
        feats = relu(conv2d(t, w, b, spec))
        return tensor_sum(pointwise_mul(feats, sigmoid(feats)))

    err = finite_diff_check(f, x)
    print(f"finite-difference agreement: max relative error {err:.2e}")


if __name__ == "__main__":
    main()
