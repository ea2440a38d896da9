"""Training-time data pipeline.

Two sampling modes: anchor-based sampling crops around a randomly chosen
face so its scale lands exactly on one of the anchor scales, and an
SSD-style mode (photometric jitter, random min-IoU crop, horizontal flip).
The anchor branch fires with probability 0.4. A synthetic corpus generator
provides desk-scale stand-in data: solid bright rectangles of fixed 1:1.5
aspect on noise backgrounds, scales log-uniform.

All randomness flows through explicit generators; per-image streams are
derived by seeding with (seed, image_index) so parallel generation is
order-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterator, Sequence

import numpy as np

from .geometry import Box
from .tensor import Tensor

__all__ = [
    "AugConfig",
    "Sample",
    "anchor_based_sample",
    "augment",
    "iter_synth_corpus",
    "ssd_style_sample",
    "synth_corpus",
    "synth_sample",
]

ANCHOR_SCALES = (16.0, 32.0, 64.0, 128.0, 256.0, 512.0)
FACE_ASPECT = 1.5           # h / w
MIN_IOU_CHOICES = (0.1, 0.3, 0.5, 0.7, 0.9)
PHOTOMETRIC_JITTER = 0.125  # +-12.5% brightness and contrast
CROP_RETRIES = 50


@dataclass(frozen=True)
class Sample:
    """One training image (1, C, S, S) with its face boxes in image coords.

    fell_back marks outputs of anchor_based_sample that had to fall back to
    the SSD-style path because no valid crop existed.
    """

    image: Tensor
    faces: tuple[Box, ...]
    fell_back: bool = False

    def __post_init__(self):
        b, c, h, w = self.image.shape
        if b != 1 or h != w:
            raise ValueError(f"sample image must be (1, C, S, S), got {self.image.shape}")
        for f in self.faces:
            if f.x >= w or f.x2 <= 0 or f.y >= h or f.y2 <= 0:
                raise ValueError(f"face {f} does not intersect the {w}x{h} image")

    @property
    def size(self) -> int:
        return self.image.shape[2]


@dataclass(frozen=True)
class AugConfig:
    input_size: int = 640
    anchor_scale_set: tuple[float, ...] = ANCHOR_SCALES
    p_anchor_sampling: float = 0.4
    seed: int = 0
    unrestricted_target_scale: bool = False  # lift the +-1-step cap on s_t

    def __post_init__(self):
        if not 0.0 <= self.p_anchor_sampling <= 1.0:
            raise ValueError(f"p_anchor_sampling must lie in [0, 1], got {self.p_anchor_sampling}")
        s = self.anchor_scale_set
        if any(a >= b for a, b in zip(s, s[1:])):
            raise ValueError(f"anchor scale set must be strictly increasing, got {s}")


# ---------------------------------------------------------------------------
# resampling helpers


def _axis_gather(arr: np.ndarray, idx: np.ndarray, frac: np.ndarray,
                 pad: np.ndarray, axis: int) -> np.ndarray:
    """Linear interpolation along one spatial axis with out-of-range -> pad."""
    n = arr.shape[axis]

    def fetch(i: np.ndarray) -> np.ndarray:
        valid = (i >= 0) & (i < n)
        taken = np.take(arr, np.clip(i, 0, n - 1), axis=axis)
        shape = [1, 1, 1]
        shape[axis] = i.size
        mask = valid.reshape(shape)
        return np.where(mask, taken, pad.reshape(-1, 1, 1))

    shape = [1, 1, 1]
    shape[axis] = idx.size
    f = frac.reshape(shape)
    return fetch(idx) * (1.0 - f) + fetch(idx + 1) * f


def _crop_resize(img: np.ndarray, x0: float, y0: float, side: float,
                 out_size: int, pad: np.ndarray) -> np.ndarray:
    """Bilinear resample of the square window [x0, x0+side) to out_size.

    img: (C, H, W); window may extend beyond the image, those samples read
    the per-channel pad value.
    """
    step = side / out_size
    xs = x0 + (np.arange(out_size) + 0.5) * step - 0.5
    ys = y0 + (np.arange(out_size) + 0.5) * step - 0.5
    ix = np.floor(xs).astype(np.int64)
    iy = np.floor(ys).astype(np.int64)
    rows = _axis_gather(img, iy, ys - iy, pad, axis=1)
    return _axis_gather(rows, ix, xs - ix, pad, axis=2)


def _map_faces(faces: Sequence[Box], x0: float, y0: float, side: float,
               out_size: int, keep: Box | None = None) -> list[Box]:
    """Center-in-window retention, clip to the window, rescale to out_size.

    `keep` is retained unconditionally (the anchor-selected face, which the
    window fully contains by construction).
    """
    r = out_size / side
    out = []
    for f in faces:
        if f is not keep:
            cx, cy = f.cx, f.cy
            if not (x0 <= cx < x0 + side and y0 <= cy < y0 + side):
                continue
        x1 = max(f.x, x0)
        y1 = max(f.y, y0)
        x2 = min(f.x2, x0 + side)
        y2 = min(f.y2, y0 + side)
        out.append(Box((x1 - x0) * r, (y1 - y0) * r, (x2 - x1) * r, (y2 - y1) * r))
    return out


# ---------------------------------------------------------------------------
# sampling modes


def anchor_based_sample(src: Sample, cfg: AugConfig, rng: np.random.Generator) -> Sample:
    """Crop around one face so its output scale hits an anchor scale exactly.

    Picks a face uniformly, picks the target scale from the anchor set
    (capped at one step above the nearest scale unless configured
    otherwise), crops a square of side s_face * input_size / s_target
    placed uniformly among positions fully containing the face, pads
    out-of-image area with the channel mean, and resizes to input_size.
    """
    if not src.faces:
        raise ValueError("anchor_based_sample needs at least one face")
    face = src.faces[int(rng.integers(len(src.faces)))]
    s_f = face.scale

    scales = cfg.anchor_scale_set
    if cfg.unrestricted_target_scale:
        allowed = len(scales)
    else:
        logs = np.abs(np.log2(np.array(scales)) - math.log2(s_f))
        allowed = min(len(scales) - 1, int(logs.argmin()) + 1) + 1
    s_t = scales[int(rng.integers(allowed))]

    size = cfg.input_size
    side = s_f * size / s_t
    if side < max(face.w, face.h):
        # no square of this side can contain the face; take the SSD path
        return replace(ssd_style_sample(src, cfg, rng), fell_back=True)

    x0 = rng.uniform(face.x2 - side, face.x)
    y0 = rng.uniform(face.y2 - side, face.y)

    img = src.image.data[0]
    pad = img.mean(axis=(1, 2))
    out = _crop_resize(img, x0, y0, side, size, pad)
    faces = _map_faces(src.faces, x0, y0, side, size, keep=face)
    return Sample(Tensor(out[None]), tuple(faces))


def _photometric(img: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    j = PHOTOMETRIC_JITTER
    out = img + rng.uniform(-j, j)
    out = out * rng.uniform(1.0 - j, 1.0 + j)
    return np.clip(out, 0.0, 1.0)


def ssd_style_sample(src: Sample, cfg: AugConfig, rng: np.random.Generator) -> Sample:
    """Photometric jitter, then one of identity / min-IoU crop / free crop
    (uniform), then a coin-flip horizontal flip, resized to input_size.

    A min-IoU crop is accepted only if every face whose center lies inside
    keeps at least that fraction of its area; degenerate draws retry up to
    50 times before giving up to the identity branch.
    """
    size = cfg.input_size
    s = src.size
    img = _photometric(src.image.data[0], rng)
    pad = img.mean(axis=(1, 2))

    branch = int(rng.integers(3))  # 0 identity, 1 min-IoU crop, 2 free crop
    x0, y0, side = 0.0, 0.0, float(s)
    if branch in (1, 2):
        min_iou = MIN_IOU_CHOICES[int(rng.integers(len(MIN_IOU_CHOICES)))] if branch == 1 else None
        for _ in range(CROP_RETRIES):
            cand_side = rng.uniform(0.3, 1.0) * s
            cx0 = rng.uniform(0.0, s - cand_side)
            cy0 = rng.uniform(0.0, s - cand_side)
            if min_iou is None:
                x0, y0, side = cx0, cy0, cand_side
                break
            retained = _retained_area_fractions(src.faces, cx0, cy0, cand_side)
            if retained and all(v >= min_iou for v in retained):
                x0, y0, side = cx0, cy0, cand_side
                break

    out = _crop_resize(img, x0, y0, side, size, pad)
    faces = _map_faces(src.faces, x0, y0, side, size)

    if rng.random() < 0.5:
        out = out[:, :, ::-1].copy()
        faces = [Box(size - f.x - f.w, f.y, f.w, f.h) for f in faces]
    return Sample(Tensor(out[None]), tuple(faces))


def _retained_area_fractions(faces: Sequence[Box], x0: float, y0: float, side: float) -> list[float]:
    """Area fraction each center-retained face keeps inside the window."""
    out = []
    for f in faces:
        if not (x0 <= f.cx < x0 + side and y0 <= f.cy < y0 + side):
            continue
        ix = min(f.x2, x0 + side) - max(f.x, x0)
        iy = min(f.y2, y0 + side) - max(f.y, y0)
        out.append(max(ix, 0.0) * max(iy, 0.0) / f.area)
    return out


def augment(src: Sample, cfg: AugConfig, rng: np.random.Generator) -> Sample:
    """Dispatch: anchor-based sampling with probability p, else SSD-style."""
    take_anchor = rng.random() < cfg.p_anchor_sampling
    if take_anchor and src.faces:
        return anchor_based_sample(src, cfg, rng)
    return ssd_style_sample(src, cfg, rng)


# ---------------------------------------------------------------------------
# synthetic corpus


def synth_sample(
    index: int,
    seed: int = 0,
    input_size: int = 640,
    faces_per_image: range = range(1, 6),
    scale_range: tuple[float, float] = (8.0, 512.0),
    channels: int = 3,
) -> Sample:
    """Deterministic synthetic image: bright 1:1.5 rectangles on a noise
    background. Each face carries a fixed-range horizontal luminance ramp,
    so its gradient magnitude encodes its width; without that cue, patches
    inside large faces are locally indistinguishable from small faces and
    anchor classification has an irreducible error floor. Stream-addressable
    by index; placement avoids overlap on a best-effort basis (20 tries per
    face).
    """
    rng = np.random.default_rng([seed, index])
    s = input_size
    img = rng.uniform(0.0, 0.5, size=(channels, s, s))

    lo, hi = scale_range
    # the taller side must fit: scale * sqrt(1.5) <= s
    hi = min(hi, s / math.sqrt(FACE_ASPECT) * 0.999)
    lo = min(lo, hi * 0.9)
    n_faces = int(rng.integers(faces_per_image.start, faces_per_image.stop))
    faces: list[Box] = []
    for _ in range(n_faces):
        box = None
        for _ in range(20):
            scale = math.exp(rng.uniform(math.log(lo), math.log(hi)))
            w = scale / math.sqrt(FACE_ASPECT)
            h = scale * math.sqrt(FACE_ASPECT)
            x = rng.uniform(0.0, s - w)
            y = rng.uniform(0.0, s - h)
            box = Box(x, y, w, h)
            if all(_disjoint(box, f) for f in faces):
                break
        color = rng.uniform(0.8, 1.0, size=channels)
        xi, yi = int(round(box.x)), int(round(box.y))
        x2, y2 = int(round(box.x2)), int(round(box.y2))
        xi, yi = max(xi, 0), max(yi, 0)
        # ramp from color-0.25 at the left edge to color at the right; the
        # background tops out at 0.5, so every face pixel stays brighter
        ramp = 0.25 * (np.arange(xi, x2) - box.x) / box.w
        img[:, yi: y2, xi: x2] = (color[:, None, None] - 0.25) + ramp[None, None, :]
        faces.append(box)
    return Sample(Tensor(img[None]), tuple(faces))


def _disjoint(a: Box, b: Box) -> bool:
    return a.x2 <= b.x or b.x2 <= a.x or a.y2 <= b.y or b.y2 <= a.y


def iter_synth_corpus(
    n_images: int,
    seed: int = 0,
    input_size: int = 640,
    faces_per_image: range = range(1, 6),
    scale_range: tuple[float, float] = (8.0, 512.0),
    channels: int = 3,
) -> Iterator[Sample]:
    if n_images < 1:
        raise ValueError(f"need at least one image, got {n_images}")
    for i in range(n_images):
        yield synth_sample(i, seed, input_size, faces_per_image, scale_range, channels)


def synth_corpus(
    n_images: int,
    seed: int = 0,
    input_size: int = 640,
    faces_per_image: range = range(1, 6),
    scale_range: tuple[float, float] = (8.0, 512.0),
    channels: int = 3,
) -> list[Sample]:
    """Materialized corpus; use iter_synth_corpus for large n (an image at
    640 is ~5 MB, so 500 of them do not fit comfortably in memory)."""
    return list(iter_synth_corpus(n_images, seed, input_size, faces_per_image, scale_range, channels))
