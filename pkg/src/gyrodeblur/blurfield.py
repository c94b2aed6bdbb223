"""Camera geometry: rolling-shutter timing, exposure point mapping, and
the per-block blur field.

A purely rotational camera motion moves every image point along the
pixel homography K R_rel K^-1, where R_rel is the camera rotation
between two instants.  With a rolling shutter each row starts exposing
at its own time, so the relevant instants depend on the row coordinate.
The blur field samples the induced point displacement over the exposure
at the center of each block of the image grid and summarizes it as a
linear blur (angle, extent) per block.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .evaluation import Keypoint
from .imu import OrientationTrajectory

__all__ = [
    "CameraRig",
    "BlurVector",
    "BlurField",
    "load_camera_json",
    "save_camera_json",
    "row_start_time",
    "map_point_across_exposure",
    "blur_vector_from_displacement",
    "estimate_blur_field",
    "rectify_keypoints",
    "save_field_csv",
]

DEFAULT_BLOCK = 64
MIN_BLOCK = 8


def _check_signed_permutation(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    if M.shape != (3, 3):
        raise ValueError(f"gyro_to_camera must be 3x3, got {M.shape}")
    ok = (
        np.all(np.isin(M, (-1.0, 0.0, 1.0)))
        and np.all(np.abs(M).sum(axis=0) == 1)
        and np.all(np.abs(M).sum(axis=1) == 1)
    )
    if not ok:
        raise ValueError("gyro_to_camera must be a signed permutation matrix")
    return M


@dataclass
class CameraRig:
    """Pinhole intrinsics plus rolling-shutter timing for one frame.

    height doubles as the shutter row count: readout_ns spans rows 0..height.
    frame_ts_ns is the start of the first row's exposure.  gyro_to_camera
    rotates sensor-frame rate vectors into the camera frame and is
    restricted to a signed permutation so axis misconfiguration stays
    detectable.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    readout_ns: int = 0
    exposure_ns: int = 1
    frame_ts_ns: int = 0
    gyro_to_camera: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be at least 1")
        if self.exposure_ns <= 0:
            raise ValueError("exposure_ns must be positive")
        if self.readout_ns < 0:
            raise ValueError("readout_ns must be non-negative")
        if self.gyro_to_camera is None:
            self.gyro_to_camera = np.eye(3)
        self.gyro_to_camera = _check_signed_permutation(self.gyro_to_camera)

    @property
    def K(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def K_inv(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )

    def row_start_time(self, y: float) -> int:
        """Exposure start of row y in ns: frame_ts + readout * y / height."""
        if not 0 <= y <= self.height:
            raise ValueError(f"row {y} outside [0, {self.height}]")
        return self.frame_ts_ns + int(round(self.readout_ns * float(y) / self.height))

    def exposure_interval(self, y: float) -> tuple[int, int]:
        t1 = self.row_start_time(y)
        return t1, t1 + self.exposure_ns


def row_start_time(rig: CameraRig, y: float) -> int:
    return rig.row_start_time(y)


def load_camera_json(path) -> CameraRig:
    with open(path) as fh:
        cfg = json.load(fh)
    g2c = cfg.get("gyro_to_camera")
    return CameraRig(
        fx=float(cfg["fx"]),
        fy=float(cfg["fy"]),
        cx=float(cfg["cx"]),
        cy=float(cfg["cy"]),
        width=int(cfg["width"]),
        height=int(cfg["height"]),
        readout_ns=int(cfg["readout_ns"]),
        exposure_ns=int(cfg["exposure_ns"]),
        frame_ts_ns=int(cfg["frame_ts_ns"]),
        gyro_to_camera=None if g2c is None else np.asarray(g2c, dtype=np.float64).reshape(3, 3),
    )


def save_camera_json(path, rig: CameraRig) -> None:
    cfg = {
        "fx": rig.fx,
        "fy": rig.fy,
        "cx": rig.cx,
        "cy": rig.cy,
        "width": rig.width,
        "height": rig.height,
        "readout_ns": rig.readout_ns,
        "exposure_ns": rig.exposure_ns,
        "frame_ts_ns": rig.frame_ts_ns,
        "gyro_to_camera": [float(v) for v in rig.gyro_to_camera.reshape(-1)],
    }
    with open(path, "w") as fh:
        json.dump(cfg, fh, indent=2)
        fh.write("\n")


def pixel_homography(
    rig: CameraRig, traj: OrientationTrajectory, t_from_ns: int, t_to_ns: int
) -> np.ndarray:
    """Homography moving pixels from their t_from position to t_to.

    H = K C R(t_to) R(t_from)^T C^T K^-1 with C the gyro-to-camera
    permutation; R comes from the interpolated trajectory.
    """
    C = rig.gyro_to_camera
    r_from = traj.rotation_at(t_from_ns)
    r_to = traj.rotation_at(t_to_ns)
    return rig.K @ C @ r_to @ r_from.T @ C.T @ rig.K_inv


def _apply_homography(H: np.ndarray, x: float, y: float) -> np.ndarray:
    v = H @ np.array([x, y, 1.0])
    if abs(v[2]) < 1e-12:
        raise ValueError(f"point ({x}, {y}) maps to infinity")
    return v[:2] / v[2]


def map_point_across_exposure(
    rig: CameraRig, traj: OrientationTrajectory, p
) -> np.ndarray:
    """Where the scene content at pixel p at exposure start sits at exposure end.

    Start and end times come from p's row; both must lie inside the
    trajectory span.
    """
    x, y = float(p[0]), float(p[1])
    t1, t2 = rig.exposure_interval(y)
    return _apply_homography(pixel_homography(rig, traj, t1, t2), x, y)


@dataclass(frozen=True)
class BlurVector:
    """Linear blur: orientation in degrees [0, 180) and extent in pixels."""

    theta_deg: float
    extent_px: float


def blur_vector_from_displacement(p, p2) -> BlurVector:
    """Blur angle and extent of the displacement p -> p2.

    The angle is folded to [0, 180): a streak has an orientation but no
    forward direction.  Sub-nanometer displacements get angle 0.
    """
    dx = float(p2[0]) - float(p[0])
    dy = float(p2[1]) - float(p[1])
    if not (np.isfinite(dx) and np.isfinite(dy)):
        raise ValueError("non-finite displacement")
    r = float(np.hypot(dx, dy))
    if r < 1e-9:
        return BlurVector(0.0, r)
    theta = float(np.degrees(np.arctan2(dy, dx))) % 180.0
    if theta >= 180.0:  # a negative angle below resolution folds onto 180.0
        theta = 0.0
    return BlurVector(theta, r)


@dataclass
class BlurField:
    """Per-block blur vectors over an image grid.

    The grid covers the image completely; blocks in the last row/column
    shrink to fit.  theta_deg, extent_px and valid are (grid_rows,
    grid_cols) arrays.
    """

    width: int
    height: int
    block_w: int
    block_h: int
    theta_deg: np.ndarray
    extent_px: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        rows = -(-self.height // self.block_h)
        cols = -(-self.width // self.block_w)
        self.theta_deg = np.asarray(self.theta_deg, dtype=np.float64)
        self.extent_px = np.asarray(self.extent_px, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        for name, arr in (
            ("theta_deg", self.theta_deg),
            ("extent_px", self.extent_px),
            ("valid", self.valid),
        ):
            if arr.shape != (rows, cols):
                raise ValueError(f"{name} shape {arr.shape} != grid {(rows, cols)}")
        if np.any(self.extent_px < 0) or np.any(self.theta_deg < 0) or np.any(
            self.theta_deg >= 180.0
        ):
            raise ValueError("theta must lie in [0,180) and extents must be >= 0")

    @property
    def grid_rows(self) -> int:
        return self.theta_deg.shape[0]

    @property
    def grid_cols(self) -> int:
        return self.theta_deg.shape[1]

    def block_rect(self, row: int, col: int) -> tuple[int, int, int, int]:
        """Pixel bounds (y0, y1, x0, x1) of a grid cell, end-exclusive."""
        y0 = row * self.block_h
        x0 = col * self.block_w
        return y0, min(y0 + self.block_h, self.height), x0, min(x0 + self.block_w, self.width)

    def block_center(self, row: int, col: int) -> tuple[float, float]:
        y0, y1, x0, x1 = self.block_rect(row, col)
        return x0 + (x1 - x0 - 1) / 2.0, y0 + (y1 - y0 - 1) / 2.0

    def cell_index(self, x: float, y: float) -> tuple[int, int]:
        """Grid cell containing pixel (x, y); coordinates are clipped."""
        row = int(np.clip(y // self.block_h, 0, self.grid_rows - 1))
        col = int(np.clip(x // self.block_w, 0, self.grid_cols - 1))
        return row, col

    def with_validity(self, valid: np.ndarray) -> "BlurField":
        return replace(self, valid=np.array(valid, dtype=bool))

    @classmethod
    def uniform(
        cls,
        width: int,
        height: int,
        theta_deg: float,
        extent_px: float,
        block_w: int | None = None,
        block_h: int | None = None,
    ) -> "BlurField":
        """Field with the same blur vector in every cell (single cell if no
        block size is given); handy for uniform-blur processing."""
        bw = width if block_w is None else block_w
        bh = height if block_h is None else block_h
        rows = -(-height // bh)
        cols = -(-width // bw)
        return cls(
            width=width,
            height=height,
            block_w=bw,
            block_h=bh,
            theta_deg=np.full((rows, cols), float(theta_deg)),
            extent_px=np.full((rows, cols), float(extent_px)),
            valid=np.ones((rows, cols), dtype=bool),
        )


def estimate_blur_field(
    rig: CameraRig,
    traj: OrientationTrajectory,
    block_w: int = DEFAULT_BLOCK,
    block_h: int = DEFAULT_BLOCK,
) -> BlurField:
    """Blur vector at the center of every block of the image grid.

    Each cell evaluates the exposure-interval point mapping at its center
    pixel, so a row of cells shares one homography (start time depends
    only on the row coordinate).  All cells start out valid; validation
    is a separate pass.
    """
    if block_w < MIN_BLOCK or block_h < MIN_BLOCK:
        raise ValueError(f"block size must be at least {MIN_BLOCK} px")
    if not traj.covers(rig.frame_ts_ns, rig.frame_ts_ns + rig.readout_ns + rig.exposure_ns):
        raise ValueError("trajectory does not cover the frame capture interval")

    rows = -(-rig.height // block_h)
    cols = -(-rig.width // block_w)
    theta = np.zeros((rows, cols))
    extent = np.zeros((rows, cols))

    xs = np.array(
        [
            x0 + (min(x0 + block_w, rig.width) - x0 - 1) / 2.0
            for x0 in range(0, rig.width, block_w)
        ]
    )
    for row in range(rows):
        y0 = row * block_h
        yc = y0 + (min(y0 + block_h, rig.height) - y0 - 1) / 2.0
        t1, t2 = rig.exposure_interval(yc)
        H = pixel_homography(rig, traj, t1, t2)
        pts = np.vstack([xs, np.full_like(xs, yc), np.ones_like(xs)])
        q = H @ pts
        if np.any(np.abs(q[2]) < 1e-12):
            raise ValueError("block center maps to infinity")
        dx = q[0] / q[2] - xs
        dy = q[1] / q[2] - yc
        r = np.hypot(dx, dy)
        th = np.degrees(np.arctan2(dy, dx)) % 180.0
        th[(r < 1e-9) | (th >= 180.0)] = 0.0
        theta[row] = th
        extent[row] = r

    return BlurField(
        width=rig.width,
        height=rig.height,
        block_w=block_w,
        block_h=block_h,
        theta_deg=theta,
        extent_px=extent,
        valid=np.ones((rows, cols), dtype=bool),
    )


def rectify_keypoints(
    rig: CameraRig,
    traj: OrientationTrajectory,
    kps: list[Keypoint],
    field: BlurField | None = None,
) -> list[Keypoint]:
    """Remap keypoints to where they would sit at the first row's start time.

    Each keypoint moves through K R(t_f) R(t1(y))^T K^-1, undoing the
    rolling-shutter skew accumulated between its row's start and the
    frame timestamp.  Scale and response are untouched.  When a blur
    field is supplied, keypoints in invalid cells are returned unchanged
    (an untrusted motion estimate is not applied).
    """
    t_ref = rig.frame_ts_ns
    out = []
    for kp in kps:
        if field is not None:
            row, col = field.cell_index(kp.x, kp.y)
            if not field.valid[row, col]:
                out.append(kp)
                continue
        t1 = rig.row_start_time(kp.y)
        H = pixel_homography(rig, traj, t1, t_ref)
        x, y = _apply_homography(H, kp.x, kp.y)
        out.append(replace(kp, x=float(x), y=float(y)))
    return out


def save_field_csv(path, field: BlurField) -> None:
    """Write one line per cell: col,row,theta_deg,extent_px,valid."""
    with open(path, "w") as fh:
        fh.write("col,row,theta_deg,extent_px,valid\n")
        for row in range(field.grid_rows):
            for col in range(field.grid_cols):
                fh.write(
                    f"{col},{row},{field.theta_deg[row, col]:.6f},"
                    f"{field.extent_px[row, col]:.6f},{int(field.valid[row, col])}\n"
                )
