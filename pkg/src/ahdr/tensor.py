"""Dense NCHW tensors with reverse-mode automatic differentiation.

Every value in the pipeline (images, feature maps, losses) is a rank-4
tensor in (batch, channels, height, width) layout backed by a numpy
array.  Differentiable operations record themselves on the tensors they
produce; ``backward`` replays the resulting tape in reverse topological
order and accumulates gradients on every grad-enabled leaf.

Convolutions are stride-1 with zero padding sized so the spatial extent
never changes; that is the only convolution the model needs.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ConvSpec",
    "DimensionError",
    "no_grad",
    "conv2d",
    "relu",
    "sigmoid",
    "concat_channels",
    "channel_slice",
    "pointwise_mul",
    "add",
    "sub",
    "scale",
    "offset",
    "log",
    "clamp",
    "absolute",
    "pow_scalar",
    "tensor_sum",
    "tensor_mean",
    "backward",
    "finite_diff_check",
]

_FLOAT_DTYPES = (np.float32, np.float64)


class DimensionError(ValueError):
    """Shape mismatch between operands, naming the offending axis."""

    def __init__(self, axis: str, expected, actual, op: str = ""):
        self.axis = axis
        self.expected = expected
        self.actual = actual
        where = f" in {op}" if op else ""
        super().__init__(
            f"dimension mismatch{where} on axis '{axis}': expected {expected}, got {actual}"
        )


# Global switch: when False, ops do not record backward closures.
_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference / oracles)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A dense (batch, channels, height, width) array, optionally grad-tracked."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        if arr.ndim != 4:
            raise DimensionError("rank", 4, arr.ndim, "Tensor")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- constructors -------------------------------------------------

    @staticmethod
    def scalar(value, dtype=np.float32) -> "Tensor":
        return Tensor(np.full((1, 1, 1, 1), value, dtype=dtype))

    @staticmethod
    def zeros(shape, dtype=np.float32, requires_grad=False) -> "Tensor":
        return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)

    # -- inspection ---------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError("size", 1, self.data.size, "item")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    # -- operators ----------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return offset(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return offset(self, -float(other))

    def __rsub__(self, other):
        return offset(scale(self, -1.0), float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return pointwise_mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not supported")
        return scale(self, 1.0 / float(other))

    def __neg__(self):
        return scale(self, -1.0)

    def __pow__(self, p):
        return pow_scalar(self, float(p))

    def backward(self) -> None:
        backward(self)


class Tape:
    """Ordered record of the ops that produced a tensor.

    Built by depth-first traversal of the parent links, so every node
    appears after all of its inputs; the reverse walk therefore visits
    each node exactly once with its output gradient fully accumulated.
    """

    def __init__(self, root: Tensor):
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.nodes = order


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every grad-enabled tensor reachable from ``loss``.

    ``loss`` must be a scalar (single-element) tensor.  The backing tape is
    released afterwards; calling backward a second time on the same graph
    raises.
    """
    if loss.data.size != 1:
        raise DimensionError("size", 1, loss.data.size, "backward")
    tape = Tape(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        fn = node._backward
        if fn is None:
            if node._parents:
                raise RuntimeError("backward already called on this graph")
            continue
        fn(node.grad)
        node._backward = None  # free captured buffers; graph is single-use


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    t.grad = g if t.grad is None else t.grad + g


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    track = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=track)
    if track:
        out._parents = parents
        out._backward = backward_fn(out)
    return out


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    names = ("batch", "channels", "height", "width")
    for axis, (ea, eb) in enumerate(zip(a.shape, b.shape)):
        if ea != eb:
            raise DimensionError(names[axis], ea, eb, op)
    if a.dtype != b.dtype:
        raise DimensionError("dtype", a.dtype, b.dtype, op)


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvSpec:
    """Stride-1, size-preserving 2-D convolution geometry."""

    in_channels: int
    out_channels: int
    kernel_size: int
    dilation: int = 1
    stride: int = 1

    def __post_init__(self):
        if self.stride != 1:
            raise ValueError("only stride 1 is supported")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel size must be odd and positive, got {self.kernel_size}")
        if self.dilation < 1:
            raise ValueError(f"dilation must be >= 1, got {self.dilation}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be positive")

    @property
    def padding(self) -> int:
        # keeps output spatial size equal to input spatial size
        return self.dilation * (self.kernel_size - 1) // 2

    @property
    def weight_shape(self):
        return (self.out_channels, self.in_channels, self.kernel_size, self.kernel_size)


def _im2col(x_pad: np.ndarray, k: int, d: int, h: int, w: int) -> np.ndarray:
    """Patches of a padded NCHW array as a dense (B, C*k*k, h*w) matrix."""
    b, c = x_pad.shape[:2]
    sb, sc, sh, sw = x_pad.strides
    view = np.lib.stride_tricks.as_strided(
        x_pad,
        shape=(b, c, k, k, h, w),
        strides=(sb, sc, d * sh, d * sw, sh, sw),
        writeable=False,
    )
    return np.ascontiguousarray(view).reshape(b, c * k * k, h * w)


def _col2im(cols: np.ndarray, b: int, c: int, k: int, d: int, h: int, w: int) -> np.ndarray:
    """Scatter-add (B, C*k*k, h*w) columns back onto a padded NCHW array."""
    pad = d * (k - 1) // 2
    out = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    patches = cols.reshape(b, c, k, k, h, w)
    for i in range(k):
        for j in range(k):
            out[:, :, i * d : i * d + h, j * d : j * d + w] += patches[:, :, i, j]
    return out


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, spec: ConvSpec) -> Tensor:
    """Cross-correlation with zero padding; output spatial size equals input."""
    if weight.shape != spec.weight_shape:
        raise DimensionError("weight", spec.weight_shape, weight.shape, "conv2d")
    if x.shape[1] != spec.in_channels:
        raise DimensionError("channels", spec.in_channels, x.shape[1], "conv2d")
    if bias.data.size != spec.out_channels:
        raise DimensionError("bias", spec.out_channels, bias.data.size, "conv2d")
    if not (x.dtype == weight.dtype == bias.dtype):
        raise DimensionError("dtype", x.dtype, (weight.dtype, bias.dtype), "conv2d")

    b, c, h, w = x.shape
    k, d = spec.kernel_size, spec.dilation
    w_mat = weight.data.reshape(spec.out_channels, -1)

    if k == 1:
        cols = x.data.reshape(b, c, h * w)
    else:
        pad = spec.padding
        x_pad = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        cols = _im2col(x_pad, k, d, h, w)

    out = np.matmul(w_mat, cols).reshape(b, spec.out_channels, h, w)
    out += bias.data.reshape(1, spec.out_channels, 1, 1)

    def make_backward(_out):
        def bw(g):
            go = g.reshape(b, spec.out_channels, h * w)
            if bias.requires_grad:
                _accum(bias, go.sum(axis=(0, 2)).reshape(bias.shape))
            if weight.requires_grad:
                gw = np.einsum("bon,bkn->ok", go, cols)
                _accum(weight, gw.reshape(weight.shape))
            if x.requires_grad:
                gcols = np.matmul(w_mat.T, go)
                if k == 1:
                    _accum(x, gcols.reshape(x.shape))
                else:
                    gx_pad = _col2im(gcols, b, c, k, d, h, w)
                    pad = spec.padding
                    _accum(x, gx_pad[:, :, pad : pad + h, pad : pad + w])

        return bw

    return _result(out, (x, weight, bias), make_backward)


# ---------------------------------------------------------------------------
# Elementwise and structural ops
# ---------------------------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def make_backward(_out):
        mask = x.data > 0

        def bw(g):
            _accum(x, g * mask)

        return bw

    return _result(out, (x,), make_backward)


def sigmoid(x: Tensor) -> Tensor:
    # numerically stable split form
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ez = np.exp(d[~pos])
    out[~pos] = ez / (1.0 + ez)

    def make_backward(_out):
        def bw(g):
            _accum(x, g * out * (1.0 - out))

        return bw

    return _result(out, (x,), make_backward)


def concat_channels(parts: list[Tensor]) -> Tensor:
    parts = tuple(parts)  # snapshot: the backward closure must not see later mutation
    if not parts:
        raise ValueError("concat_channels needs at least one tensor")
    first = parts[0]
    for p in parts[1:]:
        for axis, name in ((0, "batch"), (2, "height"), (3, "width")):
            if p.shape[axis] != first.shape[axis]:
                raise DimensionError(name, first.shape[axis], p.shape[axis], "concat_channels")
        if p.dtype != first.dtype:
            raise DimensionError("dtype", first.dtype, p.dtype, "concat_channels")
    out = np.concatenate([p.data for p in parts], axis=1)

    def make_backward(_out):
        def bw(g):
            start = 0
            for p in parts:
                stop = start + p.shape[1]
                if p.requires_grad:
                    _accum(p, g[:, start:stop])
                start = stop

        return bw

    return _result(out, tuple(parts), make_backward)


def channel_slice(x: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= x.shape[1]):
        raise DimensionError("channels", f"slice within [0, {x.shape[1]}]", (start, stop), "channel_slice")
    out = x.data[:, start:stop].copy()

    def make_backward(_out):
        def bw(g):
            gx = np.zeros_like(x.data)
            gx[:, start:stop] = g
            _accum(x, gx)

        return bw

    return _result(out, (x,), make_backward)


def pointwise_mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "pointwise_mul")
    out = a.data * b.data

    def make_backward(_out):
        def bw(g):
            if a.requires_grad:
                _accum(a, g * b.data)
            if b.requires_grad:
                _accum(b, g * a.data)

        return bw

    return _result(out, (a, b), make_backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    out = a.data + b.data

    def make_backward(_out):
        def bw(g):
            _accum(a, g)
            _accum(b, g)

        return bw

    return _result(out, (a, b), make_backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")
    out = a.data - b.data

    def make_backward(_out):
        def bw(g):
            _accum(a, g)
            _accum(b, -g)

        return bw

    return _result(out, (a, b), make_backward)


def scale(x: Tensor, s: float) -> Tensor:
    out = x.data * x.dtype.type(s)

    def make_backward(_out):
        def bw(g):
            _accum(x, g * x.dtype.type(s))

        return bw

    return _result(out, (x,), make_backward)


def offset(x: Tensor, c: float) -> Tensor:
    out = x.data + x.dtype.type(c)

    def make_backward(_out):
        def bw(g):
            _accum(x, g)

        return bw

    return _result(out, (x,), make_backward)


def log(x: Tensor) -> Tensor:
    out = np.log(x.data)

    def make_backward(_out):
        def bw(g):
            _accum(x, g / x.data)

        return bw

    return _result(out, (x,), make_backward)


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    out = np.clip(x.data, lo, hi)

    def make_backward(_out):
        # subgradient 0 outside [lo, hi]
        mask = (x.data >= lo) & (x.data <= hi)

        def bw(g):
            _accum(x, g * mask)

        return bw

    return _result(out, (x,), make_backward)


def absolute(x: Tensor) -> Tensor:
    out = np.abs(x.data)

    def make_backward(_out):
        sign = np.sign(x.data)  # subgradient 0 at ties

        def bw(g):
            _accum(x, g * sign)

        return bw

    return _result(out, (x,), make_backward)


def pow_scalar(x: Tensor, p: float) -> Tensor:
    out = np.power(x.data, x.dtype.type(p))

    def make_backward(_out):
        def bw(g):
            _accum(x, g * p * np.power(x.data, x.dtype.type(p - 1.0)))

        return bw

    return _result(out, (x,), make_backward)


def tensor_sum(x: Tensor) -> Tensor:
    out = np.full((1, 1, 1, 1), x.data.sum(), dtype=x.dtype)

    def make_backward(_out):
        def bw(g):
            _accum(x, np.full_like(x.data, g.reshape(())))

        return bw

    return _result(out, (x,), make_backward)


def tensor_mean(x: Tensor) -> Tensor:
    out = np.full((1, 1, 1, 1), x.data.mean(), dtype=x.dtype)

    def make_backward(_out):
        inv_n = 1.0 / x.data.size

        def bw(g):
            _accum(x, np.full_like(x.data, g.reshape(()) * inv_n))

        return bw

    return _result(out, (x,), make_backward)


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


def finite_diff_check(f, x: Tensor, eps: float = 1e-5) -> float:
    """Max relative disagreement between backprop and central differences.

    ``f`` maps a tensor to a scalar tensor and must be deterministic.  The
    numeric gradient perturbs one element at a time and never touches the
    backward pass, so it is an independent oracle for it.
    """
    probe = Tensor(x.data.copy().astype(np.float64), requires_grad=True)
    loss = f(probe)
    backward(loss)
    analytic = np.zeros_like(probe.data) if probe.grad is None else probe.grad.copy()

    numeric = np.zeros_like(probe.data)
    flat = probe.data.reshape(-1)
    num_flat = numeric.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = f(Tensor(probe.data.copy())).item()
            flat[i] = orig - eps
            lo = f(Tensor(probe.data.copy())).item()
            flat[i] = orig
            num_flat[i] = (hi - lo) / (2.0 * eps)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
