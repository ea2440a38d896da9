"""Toy-scale dual-shot detector.

A from-scratch six-stage backbone (two 3x3 convs per stage, relu after
each; the first stage downsamples twice, later stages once) emits original
maps at strides 4..128. Each level's enhanced map comes from the feature
enhance module fed with the level above. Per level and per shot, single
3x3 head convs produce 2-class logits and 4 box deltas; the first shot
reads the original maps and matches half-size anchors, the second reads
the enhanced maps and matches the full anchors. Prediction uses the second
shot only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .anchors import AnchorGrid, LevelSpec, build_grid, make_level_specs
from .augment import Sample
from .fem import FemParams, fem_forward, make_fem_params
from .geometry import Box, BoxDelta, Detection, decode, nms, round_detection
from .loss import LossReport, ShotPredictions, pal_total, shot_loss
from .matching import match
from .tensor import (
    ConvParams,
    Tensor,
    add,
    backward,
    concat_cells,
    conv2d,
    flatten_cells,
    relu,
    scale,
    xavier_conv,
    zero_grad,
)

__all__ = [
    "FULL_SCALE_SCHEDULE",
    "NetConfig",
    "Network",
    "TrainConfig",
    "build",
    "compute_pal",
    "forward_dual",
    "load_checkpoint",
    "predict",
    "save_checkpoint",
    "train_step",
]

N_LEVELS = 6


@dataclass(frozen=True)
class NetConfig:
    input_size: int = 160
    in_channels: int = 3
    backbone_channels: tuple[int, ...] = (8, 16, 32, 32, 32, 32)
    fem_channels: int = 24
    head_kernel: int = 3
    seed: int = 0

    def __post_init__(self):
        if len(self.backbone_channels) != N_LEVELS:
            raise ValueError(f"need {N_LEVELS} backbone channel counts, got {len(self.backbone_channels)}")
        if self.input_size % 32 != 0:
            raise ValueError(f"input_size must be divisible by 32, got {self.input_size}")
        if self.fem_channels % 3 != 0:
            raise ValueError(f"fem_channels must be divisible by 3, got {self.fem_channels}")
        if self.head_kernel % 2 == 0:
            raise ValueError(f"head kernel must be odd, got {self.head_kernel}")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    lr_drops: tuple[int, ...] = ()   # steps at which lr divides by 10
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch: int = 8
    steps: int = 500
    beta: float = 1.0
    lam: float = 1.0
    neg_pos_ratio: float = 3.0
    eq2_literal_grouping: bool = False
    match_threshold: float = 0.4

    def __post_init__(self):
        for name in ("lr", "momentum", "weight_decay", "batch", "steps", "beta", "lam", "neg_pos_ratio"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    def lr_at(self, step: int) -> float:
        drops = sum(1 for d in self.lr_drops if step >= d)
        return self.lr * (0.1 ** drops)


# the reference full-scale schedule: 1e-3 for 40k steps, then two decade
# drops of 10k steps each, batch 16
FULL_SCALE_SCHEDULE = TrainConfig(lr=1e-3, lr_drops=(40000, 50000), batch=16, steps=60000)


@dataclass
class Network:
    cfg: NetConfig
    level_specs: list[LevelSpec]
    stages: list[tuple[ConvParams, ConvParams]]
    fems: list[FemParams]
    heads_first: list[tuple[ConvParams, ConvParams]]   # (cls, loc) per level
    heads_second: list[tuple[ConvParams, ConvParams]]
    first_grids: list[AnchorGrid]
    second_grids: list[AnchorGrid]
    first_boxes: list[Box] = field(default_factory=list)
    second_boxes: list[Box] = field(default_factory=list)
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def parameters(self) -> list[tuple[str, Tensor]]:
        """Stable-ordered (name, tensor) manifest of every learnable array."""
        out: list[tuple[str, Tensor]] = []
        for i, (a, b) in enumerate(self.stages, start=1):
            out += [(f"stage{i}.conv_a.kernel", a.kernel), (f"stage{i}.conv_a.bias", a.bias),
                    (f"stage{i}.conv_b.kernel", b.kernel), (f"stage{i}.conv_b.bias", b.bias)]
        for i, fp in enumerate(self.fems, start=1):
            out += [(f"fem{i}.{name}", t) for name, t in fp.tensors()]
        for shot, heads in (("first", self.heads_first), ("second", self.heads_second)):
            for i, (cls, loc) in enumerate(heads, start=1):
                out += [(f"head.{shot}{i}.cls.kernel", cls.kernel), (f"head.{shot}{i}.cls.bias", cls.bias),
                        (f"head.{shot}{i}.loc.kernel", loc.kernel), (f"head.{shot}{i}.loc.bias", loc.bias)]
        return out


def build(cfg: NetConfig) -> Network:
    """Construct and initialize the network deterministically from cfg.seed."""
    rng = np.random.default_rng(cfg.seed)
    specs = make_level_specs(cfg.input_size)
    ch = cfg.backbone_channels

    # every interior conv feeds a relu; without the sqrt(2) gain activations
    # shrink ~2x per layer and the deep levels starve to numerical dust
    g = math.sqrt(2.0)
    stages = []
    prev = cfg.in_channels
    for i, c in enumerate(ch):
        stride_b = 2 if i == 0 else 1  # stage 1 downsamples twice for stride 4
        conv_a = xavier_conv(prev, c, 3, rng, stride=2, padding=1, gain=g)
        conv_b = xavier_conv(c, c, 3, rng, stride=stride_b, padding=1, gain=g)
        stages.append((conv_a, conv_b))
        prev = c

    fems = []
    for i in range(N_LEVELS):
        c_up = ch[i + 1] if i + 1 < N_LEVELS else None
        fems.append(make_fem_params(ch[i], c_up, cfg.fem_channels, rng, gain=g))

    k = cfg.head_kernel
    pad = (k - 1) // 2
    heads_first = [
        (xavier_conv(ch[i], 2, k, rng, padding=pad), xavier_conv(ch[i], 4, k, rng, padding=pad))
        for i in range(N_LEVELS)
    ]
    heads_second = [
        (xavier_conv(cfg.fem_channels, 2, k, rng, padding=pad),
         xavier_conv(cfg.fem_channels, 4, k, rng, padding=pad))
        for i in range(N_LEVELS)
    ]

    first_grids = [build_grid(s, "first") for s in specs]
    second_grids = [build_grid(s, "second") for s in specs]
    net = Network(
        cfg=cfg,
        level_specs=specs,
        stages=stages,
        fems=fems,
        heads_first=heads_first,
        heads_second=heads_second,
        first_grids=first_grids,
        second_grids=second_grids,
    )
    net.first_boxes = [b for g in first_grids for b in g.boxes]
    net.second_boxes = [b for g in second_grids for b in g.boxes]
    return net


def _backbone(net: Network, image: Tensor) -> list[Tensor]:
    maps = []
    t = image
    for i, (conv_a, conv_b) in enumerate(net.stages):
        t = relu(conv2d(t, conv_a))
        t = relu(conv2d(t, conv_b))
        spec = net.level_specs[i]
        if t.shape[2:] != (spec.map_h, spec.map_w):
            raise ValueError(
                f"level {i + 1}: backbone produced {t.shape[2]}x{t.shape[3]}, "
                f"expected {spec.map_h}x{spec.map_w}"
            )
        maps.append(t)
    return maps


def _shot_heads(maps: list[Tensor], heads: list[tuple[ConvParams, ConvParams]],
                specs: list[LevelSpec], shot: str) -> ShotPredictions:
    logits_parts = []
    delta_parts = []
    for i, (m, (cls, loc)) in enumerate(zip(maps, heads)):
        z = conv2d(m, cls)
        d = conv2d(m, loc)
        spec = specs[i]
        if z.shape[2:] != (spec.map_h, spec.map_w):
            raise ValueError(
                f"level {i + 1}: head produced {z.shape[2]}x{z.shape[3]}, "
                f"expected {spec.map_h}x{spec.map_w}"
            )
        logits_parts.append(flatten_cells(z))
        delta_parts.append(flatten_cells(d))
    return ShotPredictions(concat_cells(logits_parts), concat_cells(delta_parts), shot)


def forward_dual(net: Network, image: Tensor) -> tuple[ShotPredictions, ShotPredictions]:
    """First-shot predictions from original maps, second-shot from enhanced."""
    b, c, h, w = image.shape
    s = net.cfg.input_size
    if (h, w) != (s, s) or c != net.cfg.in_channels or b != 1:
        raise ValueError(
            f"image must be (1, {net.cfg.in_channels}, {s}, {s}), got {image.shape}"
        )
    of = _backbone(net, image)
    ef = [
        fem_forward(of[i], of[i + 1] if i + 1 < N_LEVELS else None, net.fems[i])
        for i in range(N_LEVELS)
    ]
    first = _shot_heads(of, net.heads_first, net.level_specs, "first")
    second = _shot_heads(ef, net.heads_second, net.level_specs, "second")
    return first, second


def compute_pal(
    net: Network,
    sample: Sample,
    tcfg: TrainConfig,
    frozen_negatives: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[LossReport, LossReport, Tensor]:
    """Forward plus both shot losses for one sample; returns the reports and
    the combined graph scalar first + lam * second."""
    first_p, second_p = forward_dual(net, sample.image)
    faces = list(sample.faces)
    thr = tcfg.match_threshold
    m1 = match(net.first_boxes, faces, thr, force_best=True)
    m2 = match(net.second_boxes, faces, thr, force_best=True)
    sel1, sel2 = frozen_negatives if frozen_negatives is not None else (None, None)
    r1 = shot_loss(first_p, m1, net.first_boxes, faces, beta=tcfg.beta,
                   neg_pos_ratio=tcfg.neg_pos_ratio,
                   literal_grouping=tcfg.eq2_literal_grouping, selected_negatives=sel1)
    r2 = shot_loss(second_p, m2, net.second_boxes, faces, beta=tcfg.beta,
                   neg_pos_ratio=tcfg.neg_pos_ratio,
                   literal_grouping=tcfg.eq2_literal_grouping, selected_negatives=sel2)
    node = add(r1.node, scale(r2.node, tcfg.lam))
    return r1, r2, node


def train_step(
    net: Network,
    batch: list[Sample],
    tcfg: TrainConfig,
    rng: np.random.Generator | None = None,
    step: int = 0,
) -> LossReport:
    """One SGD step on a pre-augmented batch; returns the pre-update loss.

    The returned report aggregates both shots (first + lam * second),
    averaged over the batch. Update rule per parameter:
    v <- momentum*v - lr*(grad + weight_decay*theta); theta <- theta + v.
    The step itself is deterministic; rng is accepted for interface
    symmetry with the augmentation stage and is not consumed.
    """
    if not batch:
        raise ValueError("train_step needs a non-empty batch")
    params = net.parameters()
    zero_grad(t for _, t in params)

    inv_b = 1.0 / len(batch)
    conf = loc = total = 0.0
    n_pos = n_conf = 0
    for sample in batch:
        r1, r2, node = compute_pal(net, sample, tcfg)
        if not (math.isfinite(r1.total_shot) and math.isfinite(r2.total_shot)):
            raise RuntimeError(
                f"non-finite loss: first={r1.total_shot} second={r2.total_shot}"
            )
        pal = pal_total(r1, r2, tcfg.lam)
        backward(scale(node, inv_b))
        conf += (r1.conf + tcfg.lam * r2.conf) * inv_b
        loc += (r1.loc + tcfg.lam * r2.loc) * inv_b
        total += pal * inv_b
        n_pos += r1.n_pos + r2.n_pos
        n_conf += r1.n_conf + r2.n_conf

    lr = tcfg.lr_at(step)
    for name, t in params:
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        v = net.velocity.get(name)
        if v is None:
            v = np.zeros_like(t.data)
        v = tcfg.momentum * v - lr * (g + tcfg.weight_decay * t.data)
        net.velocity[name] = v
        t.data += v
    zero_grad(t for _, t in params)

    return LossReport(conf=conf, loc=loc, total_shot=total, n_pos=n_pos,
                      n_conf=n_conf, pal_total=total)


def predict(
    net: Network,
    image: Tensor,
    conf_thresh: float = 0.01,
    top_pre: int = 5000,
    nms_overlap: float = 0.3,
    top_post: int = 750,
) -> list[Detection]:
    """Second-shot detections: score-filter, keep top 5000, decode, NMS at
    0.3, keep top 750, round to integer pixels."""
    _, second = forward_dual(net, image)
    z = second.cls_logits.data[0, :, :, 0]            # (2, A)
    m = z.max(axis=0)
    ez = np.exp(z - m)
    scores = ez[1] / ez.sum(axis=0)                   # face-class softmax

    idx = np.flatnonzero(scores >= conf_thresh)
    if idx.size == 0:
        return []
    order = idx[np.lexsort((idx, -scores[idx]))][:top_pre]

    deltas = second.loc_deltas.data[0, :, :, 0]       # (4, A)
    dets = []
    for i in order:
        anchor = net.second_boxes[int(i)]
        d = BoxDelta(*(float(v) for v in deltas[:, i]))
        dets.append(Detection(decode(d, anchor), float(scores[i])))
    kept = nms(dets, nms_overlap)[:top_post]
    return [Detection(round_detection(d.box), d.score) for d in kept]


# ---------------------------------------------------------------------------
# checkpoints: <path>.manifest (text) + <path>.bin (raw little-endian f8)


def save_checkpoint(net: Network, path: str) -> None:
    cfg = net.cfg
    params = net.parameters()
    with open(path + ".manifest", "w") as f:
        f.write("checkpoint v1\n")
        f.write(f"config input_size {cfg.input_size}\n")
        f.write(f"config in_channels {cfg.in_channels}\n")
        f.write(f"config backbone_channels {','.join(str(c) for c in cfg.backbone_channels)}\n")
        f.write(f"config fem_channels {cfg.fem_channels}\n")
        f.write(f"config head_kernel {cfg.head_kernel}\n")
        f.write(f"config seed {cfg.seed}\n")
        offset = 0
        for name, t in params:
            b, c, h, w = t.shape
            f.write(f"tensor {name} {b} {c} {h} {w} {offset}\n")
            offset += t.data.size
    with open(path + ".bin", "wb") as f:
        for _, t in params:
            f.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_checkpoint(path: str) -> Network:
    cfg_kv: dict[str, str] = {}
    tensors: list[tuple[str, tuple[int, int, int, int], int]] = []
    with open(path + ".manifest") as f:
        head = f.readline().strip()
        if head != "checkpoint v1":
            raise ValueError(f"{path}.manifest: unknown header {head!r}")
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "config":
                cfg_kv[parts[1]] = parts[2]
            elif parts[0] == "tensor":
                name = parts[1]
                dims = tuple(int(v) for v in parts[2:6])
                tensors.append((name, dims, int(parts[6])))
            else:
                raise ValueError(f"{path}.manifest: unknown record {parts[0]!r}")
    cfg = NetConfig(
        input_size=int(cfg_kv["input_size"]),
        in_channels=int(cfg_kv["in_channels"]),
        backbone_channels=tuple(int(v) for v in cfg_kv["backbone_channels"].split(",")),
        fem_channels=int(cfg_kv["fem_channels"]),
        head_kernel=int(cfg_kv["head_kernel"]),
        seed=int(cfg_kv["seed"]),
    )
    net = build(cfg)
    payload = np.fromfile(path + ".bin", dtype="<f8")
    params = dict(net.parameters())
    expected = {name for name, _ in net.parameters()}
    seen = {name for name, _, _ in tensors}
    if expected != seen:
        raise ValueError(f"{path}.manifest parameter set does not match architecture")
    for name, dims, offset in tensors:
        t = params[name]
        if t.shape != dims:
            raise ValueError(f"{name}: checkpoint shape {dims} vs built {t.shape}")
        size = dims[0] * dims[1] * dims[2] * dims[3]
        if offset + size > payload.size:
            raise ValueError(f"{name}: payload truncated")
        t.data = payload[offset: offset + size].reshape(dims).astype(np.float64)
    return net
