"""Feature enhance module.

Both inputs are projected to a common channel count C' by 1x1 convs (relu
after each), the upper map is bilinearly upsampled 2x and multiplied
elementwise into the current map, and the product is split into three
channel groups feeding dilated-conv branches of depth 1, 2 and 3 (3x3,
dilation 3, same padding, relu after each conv) whose outputs concatenate
back to C' channels at the input's spatial size.

The top pyramid level has no upper neighbor; there the product stage is
skipped and the branches read the projected current map directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (
    ConvParams,
    Tensor,
    concat_channels,
    conv2d,
    crop_spatial,
    eltwise_mul,
    relu,
    same_padding,
    split_channels,
    upsample2x,
    xavier_conv,
)

__all__ = [
    "FemParams",
    "fem_forward",
    "make_fem_params",
    "receptive_field",
    "verify_rf_empirically",
]

BRANCH_DEPTHS = (1, 2, 3)
DILATION = 3


@dataclass
class FemParams:
    norm_cur: ConvParams                      # 1x1, C_l -> C'
    norm_up: ConvParams | None                # 1x1, C_{l+1} -> C'; None at the top level
    branches: tuple[list[ConvParams], ...]    # branch k holds k stacked dilated 3x3 convs

    def __post_init__(self):
        c_prime = self.norm_cur.out_channels
        if c_prime % 3 != 0:
            raise ValueError(f"fem channel count must be divisible by 3, got {c_prime}")
        if self.norm_up is not None and self.norm_up.out_channels != c_prime:
            raise ValueError("norm_cur and norm_up must project to the same channel count")
        if len(self.branches) != len(BRANCH_DEPTHS):
            raise ValueError(f"expected {len(BRANCH_DEPTHS)} branches, got {len(self.branches)}")
        third = c_prime // 3
        for depth, branch in zip(BRANCH_DEPTHS, self.branches):
            if len(branch) != depth:
                raise ValueError(f"branch of depth {depth} holds {len(branch)} convs")
            for cp in branch:
                if cp.in_channels != third or cp.out_channels != third:
                    raise ValueError(
                        f"branch convs must map {third} -> {third} channels, got "
                        f"{cp.in_channels} -> {cp.out_channels}"
                    )
                kh = cp.kernel.shape[2]
                if cp.padding != same_padding(kh, cp.dilation):
                    raise ValueError("branch convs must use same-padding")

    @property
    def out_channels(self) -> int:
        return self.norm_cur.out_channels

    def tensors(self) -> list[tuple[str, Tensor]]:
        """(name, tensor) pairs for every learnable array, stable order."""
        named = [("norm_cur.kernel", self.norm_cur.kernel), ("norm_cur.bias", self.norm_cur.bias)]
        if self.norm_up is not None:
            named += [("norm_up.kernel", self.norm_up.kernel), ("norm_up.bias", self.norm_up.bias)]
        for bi, branch in enumerate(self.branches, start=1):
            for ci, cp in enumerate(branch):
                named.append((f"branch{bi}.conv{ci}.kernel", cp.kernel))
                named.append((f"branch{bi}.conv{ci}.bias", cp.bias))
        return named


def make_fem_params(
    c_cur: int,
    c_up: int | None,
    c_prime: int,
    rng: np.random.Generator,
    dilation: int = DILATION,
    gain: float = 1.0,
) -> FemParams:
    """Initialize a level's parameters; c_up None builds the top-level form."""
    if c_prime % 3 != 0:
        raise ValueError(f"fem channel count must be divisible by 3, got {c_prime}")
    third = c_prime // 3
    norm_cur = xavier_conv(c_cur, c_prime, 1, rng, gain=gain)
    norm_up = None if c_up is None else xavier_conv(c_up, c_prime, 1, rng, gain=gain)
    pad = same_padding(3, dilation)
    branches = tuple(
        [xavier_conv(third, third, 3, rng, dilation=dilation, padding=pad, gain=gain)
         for _ in range(depth)]
        for depth in BRANCH_DEPTHS
    )
    return FemParams(norm_cur, norm_up, branches)


def fem_forward(of_cur: Tensor, of_up: Tensor | None, params: FemParams) -> Tensor:
    """Enhance one level. Output spatial size equals of_cur's; channels C'.

    of_up must be the pyramid neighbor: exactly half of_cur's spatial dims,
    or their ceil-half when the sizes are odd (the upsampled map is then
    cropped top-left to fit).
    """
    h, w = of_cur.shape[2], of_cur.shape[3]
    cur = relu(conv2d(of_cur, params.norm_cur))
    if of_up is None:
        nc = cur
    else:
        if params.norm_up is None:
            raise ValueError("params built for the top level cannot take an upper map")
        uh, uw = of_up.shape[2], of_up.shape[3]
        if (uh, uw) not in {(h // 2, w // 2), (-(-h // 2), -(-w // 2))} or uh == 0 or uw == 0:
            raise ValueError(
                f"upper map {uh}x{uw} is not the half / ceil-half neighbor of {h}x{w}"
            )
        up = upsample2x(relu(conv2d(of_up, params.norm_up)))
        if up.shape[2] != h or up.shape[3] != w:
            up = crop_spatial(up, h, w)
        nc = eltwise_mul(cur, up)

    third = params.out_channels // 3
    parts = split_channels(nc, [third, third, third])
    outs = []
    for part, branch in zip(parts, params.branches):
        t = part
        for cp in branch:
            t = relu(conv2d(t, cp))
        outs.append(t)
    return concat_channels(outs)


def receptive_field(branch_depth: int, kernel: int = 3, dilation: int = DILATION) -> int:
    """RF of k stacked dilated convs at stride 1: 1 + k*(kernel-1)*dilation."""
    if branch_depth < 1:
        raise ValueError(f"branch depth must be >= 1, got {branch_depth}")
    return 1 + branch_depth * (kernel - 1) * dilation


def verify_rf_empirically(params: FemParams, branch: int) -> int:
    """Measure a branch's receptive field from its impulse response.

    Runs the top-level path (no product) on a centered unit impulse and
    returns the nonzero extent of the branch's output channels. Caller must
    set all weights positive (and biases zero) so nothing cancels.
    """
    if not 1 <= branch <= len(BRANCH_DEPTHS):
        raise ValueError(f"branch must be 1..{len(BRANCH_DEPTHS)}, got {branch}")
    depth = BRANCH_DEPTHS[branch - 1]
    kh = params.branches[branch - 1][0].kernel.shape[2]
    dil = params.branches[branch - 1][0].dilation
    expected = receptive_field(depth, kh, dil)
    size = 2 * expected + 5  # odd, so the impulse sits on an exact center cell
    c_in = params.norm_cur.in_channels
    data = np.zeros((1, c_in, size, size))
    data[:, :, size // 2, size // 2] = 1.0
    out = fem_forward(Tensor(data), None, params)

    third = params.out_channels // 3
    start = (branch - 1) * third
    response = np.abs(out.data[0, start: start + third]).max(axis=0)
    ys, xs = np.nonzero(response)
    if ys.size == 0:
        raise ValueError("impulse produced an all-zero response; weights must be positive")
    ext_y = int(ys.max() - ys.min() + 1)
    ext_x = int(xs.max() - xs.min() + 1)
    if ext_y != ext_x:
        raise ValueError(f"anisotropic impulse response {ext_y}x{ext_x}")
    return ext_y
