"""Command-line front end.

Subcommands: anchors, match-stats, augment-preview, gradcheck, train-toy,
predict, eval. Global flags (--seed, --config, --threads, --out-dir) attach
after the subcommand. Every command is deterministic under a fixed seed,
writes its outputs under --out-dir, and drops a run manifest with sha256
hashes beside them. Report commands write CSV as the authoritative artifact
and render a PNG of the same data next to it.

Exit codes: 0 success, 1 check failure, 2 input error, 3 numeric failure.

Heavy imports happen inside the command handlers so that --threads can pin
the BLAS thread count before numpy first loads.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys

from .config import Config, load_config

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_INPUT = 2
EXIT_NUMERIC = 3


class InputError(Exception):
    pass


class CheckFailure(Exception):
    pass


class NumericFailure(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dualshot",
        description="Dual-shot face detection pipeline: anchors, matching "
                    "statistics, augmentation previews, gradient checks, toy "
                    "training, prediction, and AP evaluation.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    common.add_argument("--config", default=None, help="key = value config file")
    common.add_argument("--threads", type=int, default=None,
                        help="cap BLAS threads (default: library default)")
    common.add_argument("--out-dir", default="out", help="output directory (default ./out)")

    pa = sub.add_parser("anchors", parents=[common], help="dump the dual-shot anchor grids as CSV")
    pa.add_argument("--input-size", type=int, default=None, help="input size, divisible by 128 (default 640)")

    pm = sub.add_parser("match-stats", parents=[common],
                        help="matched-anchor statistics over a corpus")
    src = pm.add_mutually_exclusive_group()
    src.add_argument("--synthetic", type=int, default=None, metavar="N",
                     help="use N synthetic images (default 500)")
    src.add_argument("--annotations", default=None,
                     help="read faces from an annotation file instead (no augmentation)")
    mode = pm.add_mutually_exclusive_group()
    mode.add_argument("--iam", action="store_true",
                      help="anchor-snapping augmentation, threshold 0.4 (default)")
    mode.add_argument("--traditional", action="store_true",
                      help="SSD-style augmentation only, threshold 0.35")
    pm.add_argument("--threshold", type=float, default=None,
                    help="override the matching IoU threshold")
    pm.add_argument("--input-size", type=int, default=None, help="default 640")
    pm.add_argument("--source-size", type=int, default=None,
                    help="synthetic source image size before augmentation "
                         "(default: same as --input-size)")
    pm.add_argument("--faces", type=int, default=5,
                    help="max faces per synthetic source image (default 5)")
    pm.add_argument("--channels", type=int, default=3,
                    help="synthetic image channels (default 3)")

    pv = sub.add_parser("augment-preview", parents=[common],
                        help="write augmented samples as PPM images plus box sidecars")
    pv.add_argument("--n", type=int, default=8, help="number of samples (default 8)")
    pv.add_argument("--mode", choices=("mixed", "iam", "ssd"), default="mixed")
    pv.add_argument("--input-size", type=int, default=None, help="default 640")

    pg = sub.add_parser("gradcheck", parents=[common],
                        help="finite-difference gradient checks")
    pg.add_argument("--target", choices=("fem", "loss", "net"), required=True)
    pg.add_argument("--tol", type=float, default=None,
                    help="relative tolerance (default 1e-4; 1e-3 for net)")
    pg.add_argument("--corrupt", action="store_true",
                    help="deliberately corrupt one op's backward (negative control)")

    pt = sub.add_parser("train-toy", parents=[common], help="overfit the toy net on synthetic images")
    pt.add_argument("--steps", type=int, default=None, help="SGD steps (default 500)")
    pt.add_argument("--images", type=int, default=8, help="corpus size (default 8)")
    pt.add_argument("--out", default=None, help="checkpoint base path (default <out-dir>/toy)")
    pt.add_argument("--log-every", type=int, default=50)

    pp = sub.add_parser("predict", parents=[common], help="run detection on a PPM/PGM image")
    pp.add_argument("--ckpt", required=True, help="checkpoint base path (as given to train-toy --out)")
    pp.add_argument("--image", required=True)
    pp.add_argument("--out", default=None, help="detections file (default <out-dir>/detections.txt)")
    pp.add_argument("--conf-thresh", type=float, default=0.01)

    pe = sub.add_parser("eval", parents=[common], help="average precision of detections vs annotations")
    pe.add_argument("--annotations", required=True)
    pe.add_argument("--detections", required=True)
    pe.add_argument("--iou", type=float, default=0.5)

    return p


def _read_text(path: str, what: str) -> str:
    try:
        with open(path) as f:
            return f.read()
    except OSError as e:
        raise InputError(f"cannot read {what} {path!r}: {e}") from None


def _write_csv(path: str, header: list[str], rows: list[list], tail: str | None = None) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        if tail is not None:
            f.write(tail + "\n")


def _manifest(args, command: str, cfg: Config, extra: dict[str, str], artifacts: list[str]):
    from .manifest import RunManifest, write_run_manifest

    snapshot = dict(cfg.values)
    snapshot.update(extra)
    if args.threads is not None:
        snapshot["threads"] = str(args.threads)
    m = RunManifest(command=command, seed=args.seed, config=snapshot)
    for a in artifacts:
        m.add_artifact(a)
    write_run_manifest(args.out_dir, m)


# ---------------------------------------------------------------------------


def cmd_anchors(args, cfg: Config) -> int:
    from . import figures
    from .anchors import build_grid, default_level_specs, total_anchor_count

    size = args.input_size or cfg.get_int("input_size", 640)
    try:
        specs = default_level_specs(size)
    except ValueError as e:
        raise InputError(str(e)) from None

    csv_path = os.path.join(args.out_dir, "anchors.csv")
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["level", "shot", "cell_i", "cell_j", "x", "y", "w", "h"])
        for spec in specs:
            for shot in ("first", "second"):
                grid = build_grid(spec, shot)
                for idx, b in enumerate(grid.boxes):
                    i, j = divmod(idx, spec.map_w)
                    w.writerow([spec.index, shot, i, j,
                                f"{b.x:.17g}", f"{b.y:.17g}", f"{b.w:.17g}", f"{b.h:.17g}"])

    labels = [f"L{s.index} (stride {s.stride})" for s in specs]
    counts = [s.count() for s in specs]
    png_path = os.path.join(args.out_dir, "anchors.png")
    figures.save_bars(png_path, labels, counts, "level", "anchors per shot",
                      f"Anchor counts at input {size}")

    per_shot = total_anchor_count(specs)
    print(f"levels: {', '.join(str(c) for c in counts)}")
    print(f"total per shot: {per_shot}  (both shots: {2 * per_shot})")
    _manifest(args, "anchors", cfg, {"input_size": str(size)}, [csv_path, png_path])
    return EXIT_OK


def cmd_match_stats(args, cfg: Config) -> int:
    import numpy as np

    from . import figures
    from .anchors import build_grid, make_level_specs
    from .augment import AugConfig, augment, ssd_style_sample, synth_sample
    from .matching import matched_count_stats, scale_histogram

    size = args.input_size or cfg.get_int("input_size", 640)
    traditional = bool(args.traditional)
    threshold = args.threshold
    if threshold is None:
        threshold = 0.35 if traditional else cfg.get_float("match_threshold", 0.4)

    if args.annotations is not None:
        from .evalkit import parse_annotations

        try:
            ann = parse_annotations(_read_text(args.annotations, "annotations"))
        except ValueError as e:
            raise InputError(str(e)) from None
        dataset = [[f.box() for f in img.faces if not f.ignore] for img in ann.images]
        n_images = len(dataset)
    else:
        n_images = args.synthetic if args.synthetic is not None else 500
        if n_images < 1:
            raise InputError(f"--synthetic must be >= 1, got {n_images}")
        src_size = args.source_size or size
        if src_size < 1 or args.faces < 1 or args.channels < 1:
            raise InputError("--source-size, --faces and --channels must be >= 1")
        aug_cfg = AugConfig(
            input_size=size,
            p_anchor_sampling=cfg.get_float("p_anchor_sampling", 0.4),
            seed=args.seed,
        )
        # traditional and IAM draws use distinct rng streams so either mode
        # can be rerun alone and still line up with a paired comparison
        stream = 2 if traditional else 1
        dataset = []
        for i in range(n_images):
            src = synth_sample(i, seed=args.seed, input_size=src_size,
                               faces_per_image=range(1, args.faces + 1),
                               channels=args.channels)
            rng = np.random.default_rng([args.seed, i, stream])
            out = ssd_style_sample(src, aug_cfg, rng) if traditional else augment(src, aug_cfg, rng)
            dataset.append(list(out.faces))

    try:
        specs = make_level_specs(size)
    except ValueError as e:
        raise InputError(str(e)) from None
    grids = []
    for spec in specs:
        grids.append(build_grid(spec, "first"))
        grids.append(build_grid(spec, "second"))
    stats = matched_count_stats(dataset, grids, threshold)
    shist = scale_histogram(dataset)

    edges = stats.bin_edges
    bin_labels = [f"{edges[k]:g}-{edges[k + 1]:g}" for k in range(len(edges) - 1)]
    rows = []
    for k, label in enumerate(bin_labels):
        mean = stats.mean_matched[k]
        rows.append([label, int(stats.face_counts[k]),
                     "nan" if math.isnan(mean) else f"{mean:.6f}"]
                    + [int(v) for v in stats.count_hist[k]])
    overall = stats.mean_matched_overall
    tail = f"mean_matched_overall={'nan' if overall is None else f'{overall:.6f}'}"
    stats_csv = os.path.join(args.out_dir, "match_stats.csv")
    _write_csv(stats_csv,
               ["scale_bin", "face_count", "mean_matched"] + [f"hist_{k}" for k in range(21)],
               rows, tail=tail)

    hist_csv = os.path.join(args.out_dir, "scale_histogram.csv")
    _write_csv(hist_csv, ["scale_center", "face_count"],
               [[f"{c:g}", int(n)] for c, n in zip(shist.centers, shist.counts)])

    stats_png = os.path.join(args.out_dir, "match_stats.png")
    means = [0.0 if math.isnan(v) else float(v) for v in stats.mean_matched]
    mode_name = "traditional" if traditional else "iam"
    figures.save_bars(stats_png, bin_labels, means, "face scale (px)",
                      "mean matched anchors",
                      f"Matched anchors ({mode_name}, IoU >= {threshold:g})")
    hist_png = os.path.join(args.out_dir, "scale_histogram.png")
    figures.save_bars(hist_png, [f"{c:g}" for c in shist.centers],
                      [int(n) for n in shist.counts], "face scale bin center (px)",
                      "faces", f"Face scale distribution ({mode_name})")

    print(tail)
    extra = {"mode": mode_name, "threshold": f"{threshold:g}",
             "images": str(n_images), "input_size": str(size)}
    if args.annotations is None:
        extra["source_size"] = str(src_size)
    _manifest(args, "match-stats", cfg, extra,
              [stats_csv, hist_csv, stats_png, hist_png])
    return EXIT_OK


def cmd_augment_preview(args, cfg: Config) -> int:
    import numpy as np

    from .augment import AugConfig, anchor_based_sample, augment, ssd_style_sample, synth_sample
    from .ppm import write_image

    size = args.input_size or cfg.get_int("input_size", 640)
    if args.n < 1:
        raise InputError(f"--n must be >= 1, got {args.n}")
    aug_cfg = AugConfig(
        input_size=size,
        p_anchor_sampling=cfg.get_float("p_anchor_sampling", 0.4),
        seed=args.seed,
    )
    artifacts = []
    for i in range(args.n):
        src = synth_sample(i, seed=args.seed, input_size=size)
        rng = np.random.default_rng([args.seed, i, 1])
        if args.mode == "iam":
            out = anchor_based_sample(src, aug_cfg, rng)
        elif args.mode == "ssd":
            out = ssd_style_sample(src, aug_cfg, rng)
        else:
            out = augment(src, aug_cfg, rng)
        img_path = os.path.join(args.out_dir, f"preview_{i:03d}.ppm")
        box_path = os.path.join(args.out_dir, f"preview_{i:03d}.txt")
        write_image(img_path, out.image)
        with open(box_path, "w") as f:
            for b in out.faces:
                f.write(f"{b.x:.6f} {b.y:.6f} {b.w:.6f} {b.h:.6f}\n")
        artifacts += [img_path, box_path]
    print(f"wrote {args.n} previews to {args.out_dir}")
    _manifest(args, "augment-preview", cfg,
              {"mode": args.mode, "n": str(args.n), "input_size": str(size)}, artifacts)
    return EXIT_OK


def _gradcheck_reports(args, cfg: Config):
    import numpy as np

    from .tensor import Tensor, finite_diff_check, tensor_sum

    seed = args.seed
    reports = []

    if args.target == "fem":
        from .fem import fem_forward, make_fem_params

        tol = args.tol or 1e-4
        rng = np.random.default_rng(seed)
        params = make_fem_params(5, 7, 6, rng)
        cur = Tensor(rng.normal(0.0, 1.0, (1, 5, 8, 8)))
        up = Tensor(rng.normal(0.0, 1.0, (1, 7, 4, 4)))

        def fn_cur(t):
            return tensor_sum(fem_forward(t, up, params))

        def fn_up(t):
            return tensor_sum(fem_forward(cur, t, params))

        def fn_kernel(_):
            return tensor_sum(fem_forward(cur, up, params))

        reports.append(("of_cur", finite_diff_check(fn_cur, cur, tol, np.random.default_rng(seed))))
        reports.append(("of_up", finite_diff_check(fn_up, up, tol, np.random.default_rng(seed))))
        reports.append(("branch3_kernel", finite_diff_check(
            fn_kernel, params.branches[2][1].kernel, tol, np.random.default_rng(seed))))

    elif args.target == "loss":
        from .anchors import LevelSpec, build_grid
        from .augment import synth_sample
        from .loss import ShotPredictions, shot_loss
        from .matching import match

        tol = args.tol or 1e-4
        rng = np.random.default_rng(seed)
        spec = LevelSpec(index=1, stride=8, map_h=6, map_w=6,
                         scale_second_shot=32.0, scale_first_shot=16.0)
        grid = build_grid(spec, "second")
        faces = [f for f in synth_sample(0, seed, input_size=48, scale_range=(16.0, 40.0)).faces]
        m = match(list(grid.boxes), faces, 0.4, force_best=True)
        logits = Tensor(rng.normal(0.0, 1.0, (1, 2, 36, 1)))
        deltas = Tensor(rng.normal(0.0, 0.5, (1, 4, 36, 1)))
        probe = shot_loss(ShotPredictions(logits, deltas, "second"), m, grid, faces)
        frozen = probe.selected_negatives

        def fn_logits(t):
            return shot_loss(ShotPredictions(t, deltas, "second"), m, grid, faces,
                             selected_negatives=frozen).node

        def fn_deltas(t):
            return shot_loss(ShotPredictions(logits, t, "second"), m, grid, faces,
                             selected_negatives=frozen).node

        reports.append(("cls_logits", finite_diff_check(fn_logits, logits, tol, np.random.default_rng(seed))))
        reports.append(("loc_deltas", finite_diff_check(fn_deltas, deltas, tol, np.random.default_rng(seed))))

    else:  # net
        from .augment import synth_sample
        from .net import NetConfig, TrainConfig, build, compute_pal

        tol = args.tol or 1e-3
        net_cfg = NetConfig(input_size=64, backbone_channels=(4, 6, 6, 6, 6, 6),
                            fem_channels=6, seed=seed)
        net = build(net_cfg)
        sample = synth_sample(0, seed, input_size=64,
                              faces_per_image=range(1, 3), scale_range=(14.0, 40.0))
        tcfg = TrainConfig()
        r1, r2, _ = compute_pal(net, sample, tcfg)
        frozen = (r1.selected_negatives, r2.selected_negatives)

        def fn(_):
            return compute_pal(net, sample, tcfg, frozen_negatives=frozen)[2]

        # levels 1..3 are the ones that receive positives and mined negatives
        # at this toy size; higher levels (and relu-dead branches) would give
        # a vacuous all-zero check
        points = [
            ("stage1_kernel", net.stages[0][0].kernel),
            ("fem1_branch3_kernel", net.fems[0].branches[2][0].kernel),
            ("second_head3_cls_kernel", net.heads_second[2][0].kernel),
        ]
        for name, t in points:
            reports.append((name, finite_diff_check(fn, t, tol, np.random.default_rng(seed))))
    return reports


def cmd_gradcheck(args, cfg: Config) -> int:
    from .tensor import corrupt_backward

    corrupt_op = {"fem": "eltwise_mul", "loss": "softmax_cross_entropy", "net": "conv2d"}[args.target]
    if args.corrupt:
        with corrupt_backward(corrupt_op, factor=1.5):
            reports = _gradcheck_reports(args, cfg)
    else:
        reports = _gradcheck_reports(args, cfg)

    lines = []
    all_pass = True
    for name, rep in reports:
        if rep.message:
            raise NumericFailure(f"{args.target}/{name}: {rep.message}")
        if rep.worst_coord is None and rep.n_coords > 0:
            raise CheckFailure(
                f"{args.target}/{name}: degenerate check, every sampled "
                f"gradient coordinate is exactly zero"
            )
        status = "pass" if rep.passed else "FAIL"
        lines.append(
            f"{args.target}/{name}: {status} max_rel_err={rep.max_rel_err:.3e} "
            f"tol={rep.tol:.1e} coords={rep.n_coords} worst={rep.worst_coord}"
        )
        all_pass = all_pass and rep.passed
    report_path = os.path.join(args.out_dir, "gradcheck.txt")
    with open(report_path, "w") as f:
        f.write("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    _manifest(args, "gradcheck", cfg,
              {"target": args.target, "corrupt": str(args.corrupt).lower()}, [report_path])
    if not all_pass:
        raise CheckFailure(f"gradient check failed for target {args.target}")
    return EXIT_OK


def _train_config(cfg: Config, steps: int | None, batch: int) -> "TrainConfig":
    from .net import TrainConfig

    return TrainConfig(
        lr=cfg.get_float("lr", 1e-2),
        lr_drops=cfg.get_ints("lr_drops", ()),
        momentum=cfg.get_float("momentum", 0.9),
        weight_decay=cfg.get_float("weight_decay", 5e-4),
        batch=batch,
        steps=steps if steps is not None else cfg.get_int("steps", 500),
        beta=cfg.get_float("beta", 1.0),
        lam=cfg.get_float("lambda", 1.0),
        neg_pos_ratio=cfg.get_float("neg_pos_ratio", 3.0),
        eq2_literal_grouping=cfg.get_bool("eq2_literal_grouping", False),
        match_threshold=cfg.get_float("match_threshold", 0.4),
    )


def _net_config(cfg: Config, seed: int) -> "NetConfig":
    from .net import NetConfig

    return NetConfig(
        input_size=cfg.get_int("input_size", 160),
        in_channels=cfg.get_int("in_channels", 3),
        backbone_channels=cfg.get_ints("backbone_channels", (8, 16, 32, 32, 32, 32)),
        fem_channels=cfg.get_int("fem_channels", 24),
        head_kernel=cfg.get_int("head_kernel", 3),
        seed=cfg.get_int("net_seed", seed),
    )


def cmd_train_toy(args, cfg: Config) -> int:
    from . import figures
    from .augment import synth_sample
    from .net import build, save_checkpoint, train_step
    from .ppm import write_image

    try:
        net_cfg = _net_config(cfg, args.seed)
        tcfg = _train_config(cfg, args.steps, batch=args.images)
    except ValueError as e:
        raise InputError(str(e)) from None
    if args.images < 1:
        raise InputError(f"--images must be >= 1, got {args.images}")

    size = net_cfg.input_size
    scale_hi = min(72.0, size * 0.45)
    samples = [
        synth_sample(i, seed=args.seed, input_size=size,
                     faces_per_image=range(1, 3), scale_range=(20.0, scale_hi))
        for i in range(args.images)
    ]

    # write the corpus beside the checkpoint so predict/eval can close the loop
    gt_lines = []
    artifacts = []
    for i, s in enumerate(samples):
        name = f"train_{i:03d}.ppm"
        img_path = os.path.join(args.out_dir, name)
        write_image(img_path, s.image)
        artifacts.append(img_path)
        gt_lines.append(name)
        gt_lines.append(str(len(s.faces)))
        for b in s.faces:
            gt_lines.append(f"{b.x:.2f} {b.y:.2f} {b.w:.2f} {b.h:.2f} 0 0 0 0 0 0")
    gt_path = os.path.join(args.out_dir, "train_gt.txt")
    with open(gt_path, "w") as f:
        f.write("\n".join(gt_lines) + "\n")
    artifacts.append(gt_path)

    net = build(net_cfg)
    history = []
    try:
        for step in range(tcfg.steps):
            report = train_step(net, samples, tcfg, step=step)
            history.append((step, report.pal_total, report.conf, report.loc))
            if step % max(args.log_every, 1) == 0 or step == tcfg.steps - 1:
                print(f"step {step:5d}  pal={report.pal_total:.6f}  "
                      f"conf={report.conf:.6f}  loc={report.loc:.6f}")
    except RuntimeError as e:
        raise NumericFailure(str(e)) from None

    ckpt = args.out or os.path.join(args.out_dir, "toy")
    save_checkpoint(net, ckpt)
    artifacts += [ckpt + ".manifest", ckpt + ".bin"]

    loss_csv = os.path.join(args.out_dir, "loss.csv")
    _write_csv(loss_csv, ["step", "pal_total", "conf", "loc"],
               [[s, f"{p:.9f}", f"{c:.9f}", f"{l:.9f}"] for s, p, c, l in history])
    loss_png = os.path.join(args.out_dir, "loss.png")
    figures.save_curve(loss_png, [h[0] for h in history], [h[1] for h in history],
                       "step", "combined loss", "Toy training loss", logy=True)
    artifacts += [loss_csv, loss_png]

    first, last = history[0][1], history[-1][1]
    print(f"initial pal={first:.6f}  final pal={last:.6f}  ratio={last / first:.4f}")
    _manifest(args, "train-toy", cfg,
              {"steps": str(tcfg.steps), "images": str(args.images),
               "input_size": str(size), "ckpt": os.path.basename(ckpt)}, artifacts)
    return EXIT_OK


def cmd_predict(args, cfg: Config) -> int:
    from .evalkit import write_detections
    from .net import load_checkpoint, predict
    from .ppm import read_image

    try:
        net = load_checkpoint(args.ckpt)
    except (OSError, ValueError, KeyError) as e:
        raise InputError(f"cannot load checkpoint {args.ckpt!r}: {e}") from None
    try:
        image = read_image(args.image)
    except (OSError, ValueError) as e:
        raise InputError(f"cannot read image {args.image!r}: {e}") from None
    s = net.cfg.input_size
    if image.shape != (1, net.cfg.in_channels, s, s):
        raise InputError(
            f"image shape {image.shape} does not match the checkpoint's "
            f"(1, {net.cfg.in_channels}, {s}, {s})"
        )

    dets = predict(net, image, conf_thresh=args.conf_thresh)
    out_path = args.out or os.path.join(args.out_dir, "detections.txt")
    with open(out_path, "w") as f:
        f.write(write_detections([(os.path.basename(args.image), dets)]))
    print(f"{len(dets)} detections -> {out_path}")
    _manifest(args, "predict", cfg,
              {"ckpt": args.ckpt, "image": os.path.basename(args.image),
               "conf_thresh": f"{args.conf_thresh:g}"}, [out_path])
    return EXIT_OK


def cmd_eval(args, cfg: Config) -> int:
    from . import figures
    from .evalkit import average_precision, parse_annotations, parse_detections

    try:
        gts = parse_annotations(_read_text(args.annotations, "annotations"))
        dets = parse_detections(_read_text(args.detections, "detections"))
    except ValueError as e:
        raise InputError(str(e)) from None
    if not 0.0 < args.iou < 1.0:
        raise InputError(f"--iou must lie in (0, 1), got {args.iou}")

    curve = average_precision(dets, gts, iou_thresh=args.iou)
    csv_path = os.path.join(args.out_dir, "pr_curve.csv")
    _write_csv(csv_path, ["recall", "precision"],
               [[f"{r:.9f}", f"{p:.9f}"] for r, p in curve.points])
    png_path = os.path.join(args.out_dir, "pr_curve.png")
    rs = [r for r, _ in curve.points] or [0.0]
    ps = [p for _, p in curve.points] or [0.0]
    figures.save_curve(png_path, rs, ps, "recall", "precision",
                       f"PR curve (IoU >= {args.iou:g})")

    if curve.defined:
        print(f"AP={curve.ap:.6f}")
    else:
        print("AP=nan (no ground truth)")
    _manifest(args, "eval", cfg, {"iou": f"{args.iou:g}"}, [csv_path, png_path])
    return EXIT_OK


DISPATCH = {
    "anchors": cmd_anchors,
    "match-stats": cmd_match_stats,
    "augment-preview": cmd_augment_preview,
    "gradcheck": cmd_gradcheck,
    "train-toy": cmd_train_toy,
    "predict": cmd_predict,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print(f"error: --threads must be >= 1, got {args.threads}", file=sys.stderr)
            return EXIT_INPUT
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        os.makedirs(args.out_dir, exist_ok=True)
        cfg = load_config(args.config) if args.config else Config()
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    try:
        return DISPATCH[args.command](args, cfg)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except CheckFailure as e:
        print(f"check failed: {e}", file=sys.stderr)
        return EXIT_CHECK
    except NumericFailure as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
