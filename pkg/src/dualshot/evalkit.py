"""Annotation parsing, detection file io, and average precision.

Ground truth uses the WIDER-FACE text convention: a relative path line, a
face-count line, then one face per line as `x y w h blur expression
illumination invalid occlusion pose`. Faces with the invalid flag set or
with non-positive width/height are kept but marked ignore: they can never
be true positives, and detections overlapping them are discarded from the
false-positive count too. Detection files use the same framing with
`x y w h score` lines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .geometry import Box, Detection, iou

__all__ = [
    "Annotation",
    "AnnotationSet",
    "ImageAnnotations",
    "PRCurve",
    "average_precision",
    "parse_annotations",
    "parse_detections",
    "write_detections",
]


@dataclass(frozen=True)
class Annotation:
    """One ground-truth face; raw fields, since ignore entries may carry
    non-positive sizes that a Box cannot represent."""

    x: float
    y: float
    w: float
    h: float
    ignore: bool
    attrs: tuple[float, ...] = ()

    def box(self) -> Box:
        return Box(self.x, self.y, self.w, self.h)


@dataclass(frozen=True)
class ImageAnnotations:
    path: str
    faces: tuple[Annotation, ...]
    subset: str | None = None  # optional difficulty tag, extension field


@dataclass(frozen=True)
class AnnotationSet:
    images: tuple[ImageAnnotations, ...]

    @classmethod
    def from_boxes(cls, images: Iterable[tuple[str, Sequence[Box]]]) -> "AnnotationSet":
        return cls(tuple(
            ImageAnnotations(path, tuple(Annotation(b.x, b.y, b.w, b.h, ignore=False) for b in boxes))
            for path, boxes in images
        ))

    def n_faces(self, include_ignore: bool = True) -> int:
        return sum(
            1 for img in self.images for f in img.faces if include_ignore or not f.ignore
        )


def parse_annotations(text: str) -> AnnotationSet:
    """Parse ground truth; errors name the offending 1-based line."""
    lines = text.splitlines()
    images = []
    i = 0
    while i < len(lines):
        if lines[i].strip() == "":
            i += 1
            continue
        path_parts = lines[i].split()
        path = path_parts[0]
        subset = path_parts[1] if len(path_parts) > 1 else None
        if i + 1 >= len(lines):
            raise ValueError(f"line {i + 1}: path without a face count")
        try:
            n = int(lines[i + 1].strip())
        except ValueError:
            raise ValueError(f"line {i + 2}: face count must be an integer, got {lines[i + 1]!r}") from None
        if n < 0:
            raise ValueError(f"line {i + 2}: negative face count {n}")
        faces = []
        for j in range(n):
            ln = i + 2 + j
            if ln >= len(lines):
                raise ValueError(f"line {ln + 1}: expected {n} face lines, file ended after {j}")
            parts = lines[ln].split()
            if len(parts) < 4:
                raise ValueError(f"line {ln + 1}: face line needs at least x y w h, got {lines[ln]!r}")
            try:
                vals = [float(v) for v in parts]
            except ValueError:
                raise ValueError(f"line {ln + 1}: non-numeric field in {lines[ln]!r}") from None
            x, y, w, h = vals[:4]
            invalid = len(vals) >= 8 and vals[7] == 1
            faces.append(Annotation(x, y, w, h, ignore=invalid or w <= 0 or h <= 0,
                                    attrs=tuple(vals[4:])))
        images.append(ImageAnnotations(path, tuple(faces), subset))
        i += 2 + n
    return AnnotationSet(tuple(images))


def write_detections(per_image: Sequence[tuple[str, Sequence[Detection]]]) -> str:
    """Detection text: path line, count line, integer `x y w h` plus the
    score at 6 decimals. Boxes are expected pre-rounded to integers."""
    out = []
    for path, dets in per_image:
        out.append(path)
        out.append(str(len(dets)))
        for d in dets:
            b = d.box
            out.append(f"{int(b.x)} {int(b.y)} {int(b.w)} {int(b.h)} {d.score:.6f}")
    return "\n".join(out) + "\n" if out else ""


def parse_detections(text: str) -> list[tuple[str, list[Detection]]]:
    lines = text.splitlines()
    result = []
    i = 0
    while i < len(lines):
        if lines[i].strip() == "":
            i += 1
            continue
        path = lines[i].strip()
        if i + 1 >= len(lines):
            raise ValueError(f"line {i + 1}: path without a detection count")
        try:
            n = int(lines[i + 1].strip())
        except ValueError:
            raise ValueError(f"line {i + 2}: detection count must be an integer") from None
        dets = []
        for j in range(n):
            ln = i + 2 + j
            if ln >= len(lines):
                raise ValueError(f"line {ln + 1}: expected {n} detections, file ended after {j}")
            parts = lines[ln].split()
            if len(parts) != 5:
                raise ValueError(f"line {ln + 1}: expected `x y w h score`, got {lines[ln]!r}")
            x, y, w, h, score = (float(v) for v in parts)
            dets.append(Detection(Box(x, y, w, h), score))
        result.append((path, dets))
        i += 2 + n
    return result


@dataclass(frozen=True)
class PRCurve:
    points: tuple[tuple[float, float], ...]  # (recall, precision), rank order
    ap: float
    defined: bool = True  # False when there is no ground truth to recall


def average_precision(
    detections: Sequence[tuple[str, Sequence[Detection]]],
    gts: AnnotationSet,
    iou_thresh: float = 0.5,
    subset: str | None = None,
) -> PRCurve:
    """All-points AP with greedy matching.

    Detections are visited by descending score globally (ties by image
    order then input order). Each claims its best-IoU unmatched non-ignore
    face in the same image when that IoU clears the threshold; failing
    that, overlap with an ignore entry discards it, otherwise it is a
    false positive. With `subset`, only images tagged with it count.
    """
    if not 0.0 < iou_thresh < 1.0:
        raise ValueError(f"iou_thresh must lie in (0, 1), got {iou_thresh}")
    gt_by_path: dict[str, ImageAnnotations] = {}
    for img in gts.images:
        if subset is not None and img.subset != subset:
            continue
        gt_by_path[img.path] = img
    n_gt = sum(1 for img in gt_by_path.values() for f in img.faces if not f.ignore)

    flat = []
    for img_idx, (path, dets) in enumerate(detections):
        if subset is not None and path not in gt_by_path:
            continue
        for det_idx, d in enumerate(dets):
            flat.append((-d.score, img_idx, det_idx, path, d))
    flat.sort(key=lambda r: r[:3])

    if n_gt == 0:
        return PRCurve((), math.nan, defined=False)

    matched: dict[str, set[int]] = {}
    tp = fp = 0
    points = []
    for _, _, _, path, det in flat:
        img = gt_by_path.get(path)
        best_iou, best_idx = 0.0, None
        best_ignore = 0.0
        if img is not None:
            taken = matched.setdefault(path, set())
            for gi, face in enumerate(img.faces):
                if face.ignore:
                    if face.w > 0 and face.h > 0:
                        best_ignore = max(best_ignore, iou(det.box, face.box()))
                    continue
                if gi in taken:
                    continue
                v = iou(det.box, face.box())
                if v > best_iou:  # ties keep the earlier face
                    best_iou, best_idx = v, gi
        if best_idx is not None and best_iou >= iou_thresh:
            matched[path].add(best_idx)
            tp += 1
        elif best_ignore >= iou_thresh:
            continue  # discarded: neither tp nor fp
        else:
            fp += 1
        points.append((tp / n_gt, tp / (tp + fp)))

    # all-points interpolation: area under the running-max-from-the-right
    # precision envelope
    ap = 0.0
    prev_recall = 0.0
    env = 0.0
    best_after: list[float] = [0.0] * (len(points) + 1)
    for k in range(len(points) - 1, -1, -1):
        best_after[k] = max(points[k][1], best_after[k + 1])
    for k, (r, _) in enumerate(points):
        if r > prev_recall:
            env = best_after[k]
            ap += (r - prev_recall) * env
            prev_recall = r
    return PRCurve(tuple(points), ap)
