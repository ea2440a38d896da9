"""Minimal deterministic differentiable tensor engine.

Dense rank-4 float64 tensors (batch, channels, height, width) with
tape-style reverse-mode differentiation. Supplies exactly the operations
the feature-enhance module, detection heads, and losses need: conv2d
(strided/dilated), bilinear 2x upsampling, elementwise product, channel
concat/split, relu, per-anchor softmax cross-entropy and smooth-L1, plus
the small amount of plumbing (sum, add, scale, crops, reshapes) required
to assemble those into scalar losses.

Convolution inner loops are shift-and-add over kernel offsets with the
channel contraction done by BLAS; at desk scale this is just a faster
spelling of the direct definition and stays bit-deterministic for a fixed
thread configuration.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "ConvParams",
    "GradCheckReport",
    "Tensor",
    "add",
    "backward",
    "concat_cells",
    "concat_channels",
    "conv2d",
    "corrupt_backward",
    "crop_spatial",
    "eltwise_mul",
    "finite_diff_check",
    "flatten_cells",
    "load_tensor",
    "relu",
    "reset_graph",
    "same_padding",
    "save_tensor",
    "scale",
    "smooth_l1",
    "softmax_cross_entropy",
    "split_channels",
    "tensor_sum",
    "weighted_sum",
    "xavier_conv",
    "zero_grad",
]


class Tensor:
    """Rank-4 (batch, channels, height, width) float64 array with a grad slot."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op", "_backward_done")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 4:
            raise ValueError(f"tensor must be rank 4 (b, c, h, w), got shape {arr.shape}")
        if arr.size and not np.isfinite(arr).all():
            raise ValueError("tensor values must be finite")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._op: str | None = None
        self._backward_done = False

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        op = f" op={self._op}" if self._op else ""
        return f"Tensor(shape={self.shape}{op})"


def _result(data: np.ndarray, parents: tuple[Tensor, ...], fn: Callable[[np.ndarray], None], op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    out._parents = parents if out.requires_grad else ()
    out._backward = fn if out.requires_grad else None
    out._op = op
    out._backward_done = False
    return out


# gradient corruption hook: scales the named op's contribution so that
# finite_diff_check has a guaranteed-failing negative control
_CORRUPT: dict = {"op": None, "factor": 1.0}


@contextmanager
def corrupt_backward(op: str = "eltwise_mul", factor: float = 1.5):
    """Deliberately mis-scale one op's backward inside the with-block."""
    prev = dict(_CORRUPT)
    _CORRUPT["op"] = op
    _CORRUPT["factor"] = factor
    try:
        yield
    finally:
        _CORRUPT.update(prev)


def _acc(parent: Tensor, g: np.ndarray, op: str) -> None:
    if _CORRUPT["op"] == op:
        g = g * _CORRUPT["factor"]
    if parent.grad is None:
        parent.grad = np.zeros_like(parent.data)
    parent.grad += g


# ---------------------------------------------------------------------------
# convolution


def same_padding(k: int, dilation: int = 1) -> int:
    """Padding that keeps spatial size at stride 1: dilation*(k-1)/2."""
    return dilation * (k - 1) // 2


@dataclass
class ConvParams:
    """Learnable conv kernel/bias plus stride, dilation, padding.

    kernel: Tensor (out_ch, in_ch, kh, kw); bias: Tensor (1, out_ch, 1, 1).
    """

    kernel: Tensor
    bias: Tensor
    stride: int = 1
    dilation: int = 1
    padding: int = 0

    def __post_init__(self):
        oc, ic, kh, kw = self.kernel.shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError(f"kernel sides must be odd, got {kh}x{kw}")
        if self.bias.shape != (1, oc, 1, 1):
            raise ValueError(f"bias shape must be (1, {oc}, 1, 1), got {self.bias.shape}")
        if self.stride <= 0 or self.dilation <= 0:
            raise ValueError(f"stride and dilation must be positive, got {self.stride}, {self.dilation}")
        if self.padding < 0:
            raise ValueError(f"padding must be non-negative, got {self.padding}")

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[0]

    @property
    def in_channels(self) -> int:
        return self.kernel.shape[1]


def conv2d(x: Tensor, p: ConvParams) -> Tensor:
    """2-D convolution (cross-correlation) with stride, dilation, zero padding.

    Output H' = (H + 2*pad - eff_kh)//stride + 1, eff_kh = (kh-1)*dilation + 1.
    """
    b, cin, h, w = x.shape
    oc, ic, kh, kw = p.kernel.shape
    if cin != ic:
        raise ValueError(f"conv2d channel mismatch: input has {cin}, kernel expects {ic}")
    eff_h = (kh - 1) * p.dilation + 1
    eff_w = (kw - 1) * p.dilation + 1
    if h + 2 * p.padding < eff_h or w + 2 * p.padding < eff_w:
        raise ValueError(
            f"conv2d input {h}x{w} too small for effective kernel {eff_h}x{eff_w} at padding {p.padding}"
        )
    ho = (h + 2 * p.padding - eff_h) // p.stride + 1
    wo = (w + 2 * p.padding - eff_w) // p.stride + 1

    pad = p.padding
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    k = p.kernel.data
    out = np.broadcast_to(p.bias.data, (b, oc, ho, wo)).copy()
    patches = []  # one strided view per kernel offset, reused in backward
    for ki in range(kh):
        for kj in range(kw):
            ys, xs = ki * p.dilation, kj * p.dilation
            patch = xp[:, :, ys: ys + (ho - 1) * p.stride + 1: p.stride,
                       xs: xs + (wo - 1) * p.stride + 1: p.stride]
            patches.append(patch)
            # (oc, ic) . (b, ic, ho, wo) -> (oc, b, ho, wo)
            out += np.tensordot(k[:, :, ki, kj], patch, axes=([1], [1])).transpose(1, 0, 2, 3)

    stride, dil = p.stride, p.dilation
    kernel_t, bias_t = p.kernel, p.bias

    def fn(g: np.ndarray) -> None:
        if bias_t.requires_grad:
            _acc(bias_t, g.sum(axis=(0, 2, 3)).reshape(1, oc, 1, 1), "conv2d")
        need_x = x.requires_grad
        need_k = kernel_t.requires_grad
        gxp = np.zeros((b, cin, h + 2 * pad, w + 2 * pad)) if need_x else None
        gk = np.zeros_like(k) if need_k else None
        for idx, (ki, kj) in enumerate((i, j) for i in range(kh) for j in range(kw)):
            patch = patches[idx]
            if need_k:
                # (b, oc, ho, wo) . (b, ic, ho, wo) -> (oc, ic)
                gk[:, :, ki, kj] = np.tensordot(g, patch, axes=([0, 2, 3], [0, 2, 3]))
            if need_x:
                ys, xs = ki * dil, kj * dil
                gxp[:, :, ys: ys + (ho - 1) * stride + 1: stride,
                    xs: xs + (wo - 1) * stride + 1: stride] += (
                    np.tensordot(k[:, :, ki, kj], g, axes=([0], [1])).transpose(1, 0, 2, 3)
                )
        if need_k:
            _acc(kernel_t, gk, "conv2d")
        if need_x:
            gx = gxp[:, :, pad: pad + h, pad: pad + w] if pad else gxp
            _acc(x, gx, "conv2d")

    return _result(out, (x, kernel_t, bias_t), fn, "conv2d")


def xavier_conv(c_in: int, c_out: int, k: int, rng: np.random.Generator,
                stride: int = 1, dilation: int = 1, padding: int = 0,
                gain: float = 1.0) -> ConvParams:
    """Fan-in-scaled uniform init, +-gain*sqrt(3 / fan_in); biases zero.

    gain 1 is the classic setting; relu-followed convs in deep stacks need
    sqrt(2) or activations shrink by ~2x per layer and the top levels
    starve.
    """
    fan_in = c_in * k * k
    bound = gain * math.sqrt(3.0 / fan_in)
    kernel = Tensor(rng.uniform(-bound, bound, size=(c_out, c_in, k, k)), requires_grad=True)
    bias = Tensor(np.zeros((1, c_out, 1, 1)), requires_grad=True)
    return ConvParams(kernel, bias, stride=stride, dilation=dilation, padding=padding)


# ---------------------------------------------------------------------------
# upsampling


def _interp_indices(n_in: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bilinear 2x source indices/weights, corner alignment off: src = o/2 - 1/4."""
    src = (np.arange(2 * n_in) + 0.5) / 2.0 - 0.5
    i0 = np.floor(src).astype(np.int64)
    frac = src - i0
    lo = np.clip(i0, 0, n_in - 1)
    hi = np.clip(i0 + 1, 0, n_in - 1)
    return lo, hi, frac


def _up_transpose_last(g: np.ndarray) -> np.ndarray:
    """Exact adjoint of the 1-D half of bilinear 2x along the last axis.

    Even output 2k reads (in[k-1]*0.25 + in[k]*0.75), odd output 2k+1 reads
    (in[k]*0.75 + in[k+1]*0.25), with edge clamping folding the out-of-range
    quarter back onto the boundary element.
    """
    ge = g[..., 0::2]
    go = g[..., 1::2]
    gx = 0.75 * (ge + go)
    gx[..., :-1] += 0.25 * ge[..., 1:]
    gx[..., 1:] += 0.25 * go[..., :-1]
    gx[..., 0] += 0.25 * ge[..., 0]
    gx[..., -1] += 0.25 * go[..., -1]
    return gx


def upsample2x(x: Tensor) -> Tensor:
    """Bilinear 2x upsampling, (b, c, h, w) -> (b, c, 2h, 2w)."""
    b, c, h, w = x.shape
    if h == 0 or w == 0:
        raise ValueError(f"upsample2x needs non-empty spatial dims, got {x.shape}")
    ylo, yhi, fy = _interp_indices(h)
    xlo, xhi, fx = _interp_indices(w)
    fy_col = fy[:, None]

    rows = x.data[:, :, ylo, :] * (1.0 - fy_col) + x.data[:, :, yhi, :] * fy_col
    out = rows[:, :, :, xlo] * (1.0 - fx) + rows[:, :, :, xhi] * fx

    def fn(g: np.ndarray) -> None:
        gcols = _up_transpose_last(g)                      # fold the x axis
        gx = _up_transpose_last(gcols.transpose(0, 1, 3, 2)).transpose(0, 1, 3, 2)
        _acc(x, gx, "upsample2x")

    return _result(out, (x,), fn, "upsample2x")


# ---------------------------------------------------------------------------
# pointwise and structural ops


def eltwise_mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"eltwise_mul shape mismatch: {a.shape} vs {b.shape}")

    def fn(g: np.ndarray) -> None:
        if a.requires_grad:
            _acc(a, g * b.data, "eltwise_mul")
        if b.requires_grad:
            _acc(b, g * a.data, "eltwise_mul")

    return _result(a.data * b.data, (a, b), fn, "eltwise_mul")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0  # subgradient 0 at exactly 0

    def fn(g: np.ndarray) -> None:
        _acc(x, g * mask, "relu")

    return _result(x.data * mask, (x,), fn, "relu")


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")

    def fn(g: np.ndarray) -> None:
        if a.requires_grad:
            _acc(a, g, "add")
        if b.requires_grad:
            _acc(b, g, "add")

    return _result(a.data + b.data, (a, b), fn, "add")


def scale(x: Tensor, alpha: float) -> Tensor:
    alpha = float(alpha)

    def fn(g: np.ndarray) -> None:
        _acc(x, g * alpha, "scale")

    return _result(x.data * alpha, (x,), fn, "scale")


def concat_channels(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ValueError("concat_channels needs at least one part")
    base = parts[0].shape
    for p in parts[1:]:
        if p.shape[0] != base[0] or p.shape[2:] != base[2:]:
            raise ValueError(f"concat_channels batch/spatial mismatch: {base} vs {p.shape}")
    sizes = [p.shape[1] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def fn(g: np.ndarray) -> None:
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                _acc(p, g[:, lo:hi], "concat_channels")

    return _result(np.concatenate([p.data for p in parts], axis=1), tuple(parts), fn, "concat_channels")


def split_channels(x: Tensor, sizes: Sequence[int]) -> list[Tensor]:
    """Split along the channel axis into parts of the given sizes."""
    if sum(sizes) != x.shape[1]:
        raise ValueError(f"split sizes {list(sizes)} do not sum to {x.shape[1]} channels")
    outs = []
    lo = 0
    for s in sizes:
        lo_c, hi_c = lo, lo + s

        def fn(g: np.ndarray, lo_c=lo_c, hi_c=hi_c) -> None:
            full = np.zeros_like(x.data)
            full[:, lo_c:hi_c] = g
            _acc(x, full, "split_channels")

        outs.append(_result(np.ascontiguousarray(x.data[:, lo_c:hi_c]), (x,), fn, "split_channels"))
        lo += s
    return outs


def concat_cells(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the height (cell) axis; used to stack per-level heads."""
    if not parts:
        raise ValueError("concat_cells needs at least one part")
    base = parts[0].shape
    for p in parts[1:]:
        if p.shape[0] != base[0] or p.shape[1] != base[1] or p.shape[3] != base[3]:
            raise ValueError(f"concat_cells shape mismatch: {base} vs {p.shape}")
    sizes = [p.shape[2] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def fn(g: np.ndarray) -> None:
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                _acc(p, g[:, :, lo:hi], "concat_cells")

    return _result(np.concatenate([p.data for p in parts], axis=2), tuple(parts), fn, "concat_cells")


def flatten_cells(x: Tensor) -> Tensor:
    """(b, c, h, w) -> (b, c, h*w, 1), row-major cell order."""
    b, c, h, w = x.shape

    def fn(g: np.ndarray) -> None:
        _acc(x, g.reshape(b, c, h, w), "flatten_cells")

    return _result(x.data.reshape(b, c, h * w, 1).copy(), (x,), fn, "flatten_cells")


def crop_spatial(x: Tensor, h: int, w: int) -> Tensor:
    """Top-left spatial crop to (h, w)."""
    b, c, xh, xw = x.shape
    if h > xh or w > xw or h <= 0 or w <= 0:
        raise ValueError(f"cannot crop {xh}x{xw} to {h}x{w}")

    def fn(g: np.ndarray) -> None:
        full = np.zeros_like(x.data)
        full[:, :, :h, :w] = g
        _acc(x, full, "crop_spatial")

    return _result(np.ascontiguousarray(x.data[:, :, :h, :w]), (x,), fn, "crop_spatial")


def tensor_sum(x: Tensor) -> Tensor:
    def fn(g: np.ndarray) -> None:
        _acc(x, np.full_like(x.data, g.reshape(())), "tensor_sum")

    return _result(x.data.sum().reshape(1, 1, 1, 1), (x,), fn, "tensor_sum")


def weighted_sum(x: Tensor, weights: np.ndarray) -> Tensor:
    """sum(x * weights) -> scalar; weights are a constant, not differentiated."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != x.data.shape:
        raise ValueError(f"weights shape {w.shape} must match tensor shape {x.shape}")

    def fn(g: np.ndarray) -> None:
        _acc(x, w * g.reshape(()), "weighted_sum")

    return _result((x.data * w).sum().reshape(1, 1, 1, 1), (x,), fn, "weighted_sum")


# ---------------------------------------------------------------------------
# loss kernels


def softmax_cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Per-anchor two-class softmax cross-entropy.

    logits: (b, 2, n, 1) holding a 2-vector per anchor; labels: n ints in
    {0, 1}. Returns (b, 1, n, 1) per-anchor losses, computed with
    max-subtraction for stability.
    """
    b, c, n, w = logits.shape
    if c != 2 or w != 1:
        raise ValueError(f"logits must be (b, 2, n, 1), got {logits.shape}")
    lab = np.asarray(labels, dtype=np.int64)
    if lab.shape != (n,):
        raise ValueError(f"labels must have length {n}, got shape {lab.shape}")
    if lab.size and (lab.min() < 0 or lab.max() > 1):
        raise ValueError("labels must lie in {0, 1}")

    z = logits.data[:, :, :, 0]                      # (b, 2, n)
    m = z.max(axis=1, keepdims=True)                 # (b, 1, n)
    ez = np.exp(z - m)
    lse = m[:, 0, :] + np.log(ez.sum(axis=1))        # (b, n)
    picked = np.take_along_axis(z, lab[None, None, :].repeat(b, axis=0), axis=1)[:, 0, :]
    loss = (lse - picked)[:, None, :, None]          # (b, 1, n, 1)

    def fn(g: np.ndarray) -> None:
        p = ez / ez.sum(axis=1, keepdims=True)       # softmax, (b, 2, n)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, lab[None, None, :].repeat(b, axis=0), 1.0, axis=1)
        _acc(logits, ((p - onehot) * g[:, :, :, 0])[:, :, :, None], "softmax_cross_entropy")

    return _result(loss, (logits,), fn, "softmax_cross_entropy")


def smooth_l1(pred: Tensor, target) -> Tensor:
    """Per-anchor smooth-L1 summed over the coordinate channel.

    pred: (b, 4, n, 1); target: array-like (n, 4) or (4,). Returns
    (b, 1, n, 1). With n = 1 this is the plain 4-vector-to-scalar form.
    """
    b, c, n, w = pred.shape
    if c != 4 or w != 1:
        raise ValueError(f"pred must be (b, 4, n, 1), got {pred.shape}")
    t = np.asarray(target, dtype=np.float64)
    if t.shape == (4,):
        t = t[None, :]
    if t.shape != (n, 4):
        raise ValueError(f"target must be (n, 4) = ({n}, 4), got {t.shape}")
    tt = t.T[None, :, :, None]                       # (1, 4, n, 1)
    d = pred.data - tt
    absd = np.abs(d)
    per_coord = np.where(absd < 1.0, 0.5 * d * d, absd - 0.5)
    loss = per_coord.sum(axis=1, keepdims=True)      # (b, 1, n, 1)

    def fn(g: np.ndarray) -> None:
        _acc(pred, np.clip(d, -1.0, 1.0) * g, "smooth_l1")

    return _result(loss, (pred,), fn, "smooth_l1")


# ---------------------------------------------------------------------------
# reverse-mode driver


def _topo(root: Tensor) -> list[Tensor]:
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
    return order


def backward(root: Tensor) -> None:
    """Reverse-mode accumulation from a scalar root into every participating
    tensor's grad. Grads add into whatever is already there, so separate
    graphs sharing leaves accumulate (zero_grad between steps). A second
    backward through the same root is rejected; reset_graph re-arms it.
    """
    if root.shape != (1, 1, 1, 1):
        raise ValueError(f"backward needs a scalar (1,1,1,1) root, got {root.shape}")
    if root._backward_done:
        raise RuntimeError("backward already ran on this root; call reset_graph(root) first")
    order = _topo(root)
    root.grad = np.ones((1, 1, 1, 1))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    root._backward_done = True


def reset_graph(root: Tensor) -> None:
    """Clear grads and the ran-once latch for every node reachable from root."""
    for node in _topo(root):
        node.grad = None
        node._backward_done = False


def zero_grad(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None


# ---------------------------------------------------------------------------
# finite differences


@dataclass(frozen=True)
class GradCheckReport:
    passed: bool
    max_rel_err: float
    n_coords: int
    tol: float
    worst_coord: tuple[int, int, int, int] | None = None
    message: str = ""

    def __str__(self) -> str:
        status = "pass" if self.passed else "FAIL"
        extra = f" ({self.message})" if self.message else ""
        return (
            f"gradcheck {status}: max_rel_err={self.max_rel_err:.3e} "
            f"over {self.n_coords} coords at tol={self.tol:.1e}{extra}"
        )


def finite_diff_check(
    fn: Callable[[Tensor], Tensor],
    point: Tensor,
    tol: float,
    rng: np.random.Generator | None = None,
    sample: int = 64,
) -> GradCheckReport:
    """Compare analytic gradients of a tensor-to-scalar fn against central
    differences on a random subsample of coordinates (all if few).

    Step per coordinate: 1e-5 * max(1, |x|). Relative error denominator:
    max(|analytic|, |numeric|, 1e-8).
    """
    if rng is None:
        rng = np.random.default_rng(0)
    point.requires_grad = True
    point.grad = None
    out = fn(point)
    val = out.item()
    if not math.isfinite(val):
        return GradCheckReport(False, math.inf, 0, tol, None, "non-finite function value")
    backward(out)
    analytic = point.grad.copy() if point.grad is not None else np.zeros_like(point.data)

    n = point.data.size
    if n <= sample:
        coords = np.arange(n)
    else:
        coords = rng.choice(n, size=sample, replace=False)
    flat = point.data.reshape(-1)
    a_flat = analytic.reshape(-1)

    max_rel = 0.0
    worst = None
    for idx in coords:
        orig = flat[idx]
        h = 1e-5 * max(1.0, abs(orig))
        flat[idx] = orig + h
        f_plus = fn(point).item()
        flat[idx] = orig - h
        f_minus = fn(point).item()
        flat[idx] = orig
        if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
            return GradCheckReport(False, math.inf, len(coords), tol, None, "non-finite probe value")
        numeric = (f_plus - f_minus) / (2.0 * h)
        a = a_flat[idx]
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        if rel > max_rel:
            max_rel = rel
            worst = tuple(int(v) for v in np.unravel_index(int(idx), point.data.shape))
    return GradCheckReport(max_rel <= tol, max_rel, len(coords), tol, worst)


# ---------------------------------------------------------------------------
# fixture file format


def save_tensor(path, t: Tensor) -> None:
    """Write `TENSOR b c h w` then all values at 17 significant digits."""
    b, c, h, w = t.shape
    with open(path, "w") as f:
        f.write(f"TENSOR {b} {c} {h} {w}\n")
        flat = t.data.reshape(-1)
        for i in range(0, flat.size, 8):
            f.write(" ".join(f"{v:.17g}" for v in flat[i: i + 8]) + "\n")


def load_tensor(path) -> Tensor:
    with open(path) as f:
        header = f.readline().split()
        if len(header) != 5 or header[0] != "TENSOR":
            raise ValueError(f"{path}: expected header 'TENSOR b c h w', got {header!r}")
        dims = tuple(int(v) for v in header[1:])
        body = f.read().split()
        values = np.array(body, dtype=np.float64) if body else np.zeros(0)
    expected = dims[0] * dims[1] * dims[2] * dims[3]
    if values.size != expected:
        raise ValueError(f"{path}: expected {expected} values, found {values.size}")
    return Tensor(values.reshape(dims))
