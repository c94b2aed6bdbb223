"""Command-line pipeline: deblur, synth, eval, field, rectify, bank.

All diagnostics go to stderr; files are the only data channel.  Every
command is deterministic given its inputs, flags, and seed.  Exit code 0
means all requested outputs were written.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import deconv, evaluation, imaging, imu, validation
from .blurfield import (
    CameraRig,
    estimate_blur_field,
    load_camera_json,
    rectify_keypoints,
    save_camera_json,
    save_field_csv,
)

BANK_DIR_ENV = "GYRODEBLUR_BANK_DIR"


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _load_rig_and_traj(camera_path, imu_path):
    rig = load_camera_json(camera_path)
    samples = imu.load_gyro_csv(imu_path)
    return rig, imu.integrate_gyro(samples)


def _acquire_bank(r_max: int, gamma: float, bank_path=None) -> deconv.KernelBank:
    """Explicit bank file, else the cache directory, else an in-memory build."""
    if bank_path is not None:
        bank = deconv.load_bank(bank_path)
        if bank.r_max < r_max:
            _say(
                f"warning: bank {bank_path} tops out at r={bank.r_max}, "
                f"field needs {r_max}; larger extents will clamp"
            )
        if bank.gamma != gamma:
            _say(f"warning: bank gamma {bank.gamma} overrides --gamma {gamma}")
        return bank
    cache_dir = os.environ.get(BANK_DIR_ENV)
    if cache_dir:
        path = Path(cache_dir) / f"bank_r{r_max}_g{gamma:g}.idbk"
        if path.exists():
            bank = deconv.load_bank(path)
            if bank.r_max >= r_max and bank.gamma == gamma:
                return bank
        bank = deconv.build_bank(r_max, gamma)
        path.parent.mkdir(parents=True, exist_ok=True)
        deconv.save_bank(bank, path)
        return bank
    return deconv.build_bank(r_max, gamma)


def _validated_field(img, rig, traj, args):
    field = estimate_blur_field(rig, traj, args.block_size, args.block_size)
    if args.validate != "off":
        cfg = validation.ValidationConfig(tau=args.tau, granularity=args.validate)
        field = validation.validate_field(img, field, cfg)
    return field


def cmd_deblur(args) -> int:
    t0 = time.perf_counter()
    img = imaging.load_image(args.input)
    rig, traj = _load_rig_and_traj(args.camera, args.imu)
    if img.shape != (rig.height, rig.width):
        raise ValueError(
            f"image is {img.shape[1]}x{img.shape[0]} but camera config says "
            f"{rig.width}x{rig.height}"
        )
    field = _validated_field(img, rig, traj, args)

    rounded = np.rint(field.extent_px[field.valid]) if np.any(field.valid) else np.array([])
    needed = int(rounded.max()) if rounded.size else 0
    if needed >= deconv.MIN_EXTENT:
        r_bank = min(needed, args.r_max) if args.r_max else needed
        bank = _acquire_bank(r_bank, args.gamma, args.bank)
        result = deconv.deblur_image(img, field, bank, threads=args.threads)
        out = result.image
        if result.clamped:
            _say(f"warning: {result.clamped_cells} cells clamped to bank r_max")
        deblurred = result.cells_deblurred
    else:
        out = img
        deblurred = 0

    imaging.save_image(args.out, out)
    if args.field_csv:
        save_field_csv(args.field_csv, field)
    n_valid = int(field.valid.sum())
    n_cells = field.valid.size
    _say(
        f"deblur: {deblurred}/{n_cells} cells deblurred, {n_valid} valid, "
        f"{n_cells - n_valid} invalid; mean extent "
        f"{float(field.extent_px.mean()):.1f} px; wall {time.perf_counter() - t0:.2f} s"
    )
    return 0


def cmd_synth(args) -> int:
    img = imaging.load_image(args.input)
    h, w = img.shape
    blurred = imaging.synth_blur(img, args.theta, args.r, seed=args.seed, snr_db=args.snr_db)
    imaging.save_image(args.out, blurred)

    # Global-shutter rig whose constant-rate rotation reproduces (theta, r)
    # at the principal point: rotating about the in-plane axis perpendicular
    # to the blur direction displaces the center pixel by f*tan(rate*t_e)
    # along (cos theta, sin theta) exactly.
    f = float(max(w, h))
    exposure_ns = 30_000_000
    rig = CameraRig(
        fx=f,
        fy=f,
        cx=w / 2.0,
        cy=h / 2.0,
        width=w,
        height=h,
        readout_ns=0,
        exposure_ns=exposure_ns,
        frame_ts_ns=0,
    )
    save_camera_json(args.camera_out, rig)

    rate = math.atan2(args.r, f) / (exposure_ns * 1e-9)
    rad = math.radians(args.theta)
    omega = np.array([-math.sin(rad), math.cos(rad), 0.0]) * rate
    step_ns = 10_000_000  # 100 Hz
    samples = [
        imu.GyroSample(t, omega.copy())
        for t in range(-step_ns, exposure_ns + 2 * step_ns, step_ns)
    ]
    imu.save_gyro_csv(args.imu_out, samples)
    _say(
        f"synth: theta={args.theta} r={args.r} "
        f"snr={'off' if args.snr_db is None else args.snr_db} rate={rate:.4f} rad/s"
    )
    return 0


def _truncate_by_response(kps, count):
    kps = sorted(kps, key=lambda k: (-k.response, k.y, k.x))
    if len(kps) < count:
        _say(f"warning: only {len(kps)} keypoints available, requested {count}")
        return kps
    return kps[:count]


def cmd_eval(args) -> int:
    ka = evaluation.load_keypoints_csv(args.kpa)
    kb = evaluation.load_keypoints_csv(args.kpb)
    H = evaluation.load_homography(args.homography)
    ka = _truncate_by_response(ka, args.count)
    kb = _truncate_by_response(kb, args.count)
    matches = evaluation.match_keypoints(ka, kb, H, args.overlap)
    rep = len(matches) / min(len(ka), len(kb))
    loc = evaluation.localization_error(ka, kb, H, args.overlap)

    path = Path(args.report)
    fresh = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if fresh:
            writer.writerow(["pair", "rep", "loc_err", "matches", "count"])
        writer.writerow(
            [
                args.pair,
                f"{rep:.6f}",
                "" if loc is None else f"{loc:.6f}",
                len(matches),
                min(len(ka), len(kb)),
            ]
        )
    if args.average:
        _append_average_row(path)
    _say(f"eval {args.pair}: rep={rep:.4f} loc_err={loc} matches={len(matches)}")
    return 0


def _append_average_row(path) -> None:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh)][1:]
    rows = [r for r in rows if r and r[0] != "avg"]
    if not rows:
        return
    reps = [float(r[1]) for r in rows]
    locs = [float(r[2]) for r in rows if r[2] != ""]
    matches = [int(r[3]) for r in rows]
    counts = [int(r[4]) for r in rows]
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "avg",
                f"{np.mean(reps):.6f}",
                f"{np.mean(locs):.6f}" if locs else "",
                f"{np.mean(matches):.1f}",
                f"{np.mean(counts):.1f}",
            ]
        )


def _draw_segment(canvas, x0, y0, x1, y1) -> None:
    h, w = canvas.shape
    n = max(2, int(2 * math.hypot(x1 - x0, y1 - y0)) + 1)
    for t in np.linspace(0.0, 1.0, n):
        x = int(round(x0 + t * (x1 - x0)))
        y = int(round(y0 + t * (y1 - y0)))
        if 0 <= x < w and 0 <= y < h:
            canvas[y, x] = 1.0


def cmd_field(args) -> int:
    rig, traj = _load_rig_and_traj(args.camera, args.imu)
    field = estimate_blur_field(rig, traj, args.block_size, args.block_size)
    save_field_csv(args.out_csv, field)
    if args.preview:
        canvas = np.zeros((rig.height, rig.width))
        for row in range(field.grid_rows):
            for col in range(field.grid_cols):
                cx, cy = field.block_center(row, col)
                r = field.extent_px[row, col]
                th = math.radians(field.theta_deg[row, col])
                dx, dy = 0.5 * r * math.cos(th), 0.5 * r * math.sin(th)
                _draw_segment(canvas, cx - dx, cy - dy, cx + dx, cy + dy)
        imaging.save_image(args.preview, canvas)
    _say(
        f"field: {field.grid_cols}x{field.grid_rows} cells, "
        f"extent {field.extent_px.min():.1f}..{field.extent_px.max():.1f} px"
    )
    return 0


def cmd_rectify(args) -> int:
    kps = evaluation.load_keypoints_csv(args.keypoints)
    rig, traj = _load_rig_and_traj(args.camera, args.imu)
    field = None
    if args.validate != "off":
        if not args.image:
            raise ValueError("--validate needs --image (or pass --validate off)")
        img = imaging.load_image(args.image)
        field = _validated_field(img, rig, traj, args)
    out = rectify_keypoints(rig, traj, kps, field)
    evaluation.save_keypoints_csv(args.out, out)
    moved = sum(1 for a, b in zip(kps, out) if (a.x, a.y) != (b.x, b.y))
    _say(f"rectify: {moved}/{len(kps)} keypoints moved")
    return 0


def cmd_bank(args) -> int:
    t0 = time.perf_counter()
    bank = deconv.build_bank(args.r_max, args.gamma)
    deconv.save_bank(bank, args.out)
    _say(
        f"bank: {len(bank)} kernels, max {bank.max_elements} sparse elements, "
        f"built in {time.perf_counter() - t0:.1f} s"
    )
    return 0


def _add_common_field_flags(p) -> None:
    p.add_argument("--block-size", type=int, default=64, help="square block size in px")
    p.add_argument("--tau", type=float, default=0.3, help="validation gradient threshold")
    p.add_argument(
        "--validate",
        choices=["block", "image", "off"],
        default="block",
        help="validation granularity",
    )


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="gyrodeblur",
        description="Gyroscope-driven motion deblurring and feature evaluation.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("deblur", help="deblur a frame from its IMU trace")
    p.add_argument("input", help="input image (PGM/PPM)")
    p.add_argument("--camera", required=True, help="camera config JSON")
    p.add_argument("--imu", required=True, help="IMU trace CSV")
    p.add_argument("--out", required=True, help="output PGM")
    p.add_argument("--field-csv", help="also write the blur field CSV")
    _add_common_field_flags(p)
    p.add_argument("--gamma", type=float, default=0.01, help="Wiener regularizer")
    p.add_argument("--r-max", type=int, help="cap bank extent (larger extents clamp)")
    p.add_argument("--bank", help="use this kernel bank cache file")
    p.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    p.set_defaults(func=cmd_deblur)

    p = sub.add_parser("synth", help="synthesize a blurred frame + IMU trace")
    p.add_argument("input", help="sharp input image")
    p.add_argument("--theta", type=float, required=True, help="blur angle, degrees")
    p.add_argument("--r", type=int, required=True, help="blur extent, px")
    p.add_argument("--snr-db", type=float, help="noise SNR in dB (omit: noise-free)")
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    p.add_argument("--out", required=True, help="blurred output PGM")
    p.add_argument("--imu-out", required=True, help="matching IMU trace CSV")
    p.add_argument("--camera-out", required=True, help="matching camera config JSON")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score repeatability of two keypoint sets")
    p.add_argument("--kpa", required=True, help="keypoints CSV, reference image")
    p.add_argument("--kpb", required=True, help="keypoints CSV, test image")
    p.add_argument("--homography", required=True, help="3x3 ground-truth homography file")
    p.add_argument("--count", type=int, default=500, help="fixed detection count")
    p.add_argument("--overlap", type=float, default=0.4, help="overlap criterion")
    p.add_argument("--pair", default="pair", help="row label in the report")
    p.add_argument("--report", required=True, help="report CSV (appended)")
    p.add_argument("--average", action="store_true", help="append an avg row")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("field", help="export the blur field of a trace")
    p.add_argument("--camera", required=True)
    p.add_argument("--imu", required=True)
    p.add_argument("--block-size", type=int, default=64)
    p.add_argument("--out-csv", required=True, help="field CSV output")
    p.add_argument("--preview", help="render the field as a PGM of blur segments")
    p.set_defaults(func=cmd_field)

    p = sub.add_parser("rectify", help="undo rolling-shutter skew on keypoints")
    p.add_argument("keypoints", help="keypoints CSV")
    p.add_argument("--camera", required=True)
    p.add_argument("--imu", required=True)
    p.add_argument("--out", required=True, help="rectified keypoints CSV")
    p.add_argument("--image", help="frame image, needed when validation is on")
    _add_common_field_flags(p)
    # no image is required by default, so validation defaults off here
    p.set_defaults(func=cmd_rectify, validate="off")

    p = sub.add_parser("bank", help="precompute a kernel bank cache")
    p.add_argument("--r-max", type=int, required=True)
    p.add_argument("--gamma", type=float, default=0.01)
    p.add_argument("--out", required=True, help="bank cache file")
    p.set_defaults(func=cmd_bank)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        _say(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
