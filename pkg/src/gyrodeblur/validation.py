"""Gradient-based validation of per-block blur estimates.

Motion blur wipes out intensity gradients along the motion direction.
If a block still shows a strong gradient along the direction the gyro
predicts, the prediction and the image disagree (scene motion, wrong
axis mapping, or the frame was never blurred) and deblurring would do
more harm than good.  The test convolves each block with a Sobel kernel
rotated to the predicted direction and compares the maximum absolute
response against a threshold; failing blocks are marked invalid so the
pipeline copies them through untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from .blurfield import BlurField
from .deconv import MIN_EXTENT

__all__ = [
    "ValidationConfig",
    "rotated_sobel",
    "directional_gradient_max",
    "validate_field",
]

_SOBEL_X = np.array(
    [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]
)


@dataclass(frozen=True)
class ValidationConfig:
    """tau: response threshold on [0,1] intensities; granularity: 'block'
    judges each cell by its own pixels, 'image' gates every cell with one
    whole-image response at the median cell direction."""

    tau: float = 0.3
    granularity: str = "block"

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.granularity not in ("block", "image"):
            raise ValueError(f"unknown granularity {self.granularity!r}")


def rotated_sobel(theta_deg: float) -> np.ndarray:
    """3x3 Sobel-x kernel rotated so it differentiates along theta.

    Each tap is a bilinear sample of the upright kernel at the back-rotated
    offset, then the taps are rescaled so positive taps sum to +1 and
    negative taps to -1 (zero total: response is invariant to constant
    shifts of the image).
    """
    if not 0.0 <= theta_deg < 180.0:
        raise ValueError(f"theta {theta_deg} outside [0, 180)")
    rad = np.deg2rad(theta_deg)
    c, s = np.cos(rad), np.sin(rad)
    out = np.zeros((3, 3))
    for j in range(3):
        for i in range(3):
            # back-rotate the offset into the upright kernel's frame
            dx, dy = i - 1, j - 1
            u = c * dx + s * dy
            v = -s * dx + c * dy
            x0, y0 = int(np.floor(u)), int(np.floor(v))
            fx, fy = u - x0, v - y0
            for oy in (0, 1):
                for ox in (0, 1):
                    xx, yy = x0 + ox, y0 + oy
                    if -1 <= xx <= 1 and -1 <= yy <= 1:
                        w = (fx if ox else 1.0 - fx) * (fy if oy else 1.0 - fy)
                        out[j, i] += w * _SOBEL_X[yy + 1, xx + 1]
    pos = out[out > 0].sum()
    neg = -out[out < 0].sum()
    if pos > 0:
        out[out > 0] /= pos
    if neg > 0:
        out[out < 0] /= neg
    return out


def directional_gradient_max(block: np.ndarray, theta_deg: float) -> float:
    """Largest absolute rotated-Sobel response inside a block.

    Only fully-covered positions count (valid-mode convolution), so the
    block must be at least as large as the 3x3 kernel.
    """
    block = np.asarray(block, dtype=np.float64)
    if block.ndim != 2 or block.shape[0] < 3 or block.shape[1] < 3:
        raise ValueError(f"block {block.shape} smaller than the 3x3 kernel")
    resp = convolve2d(block, rotated_sobel(theta_deg), mode="valid")
    return float(np.max(np.abs(resp)))


def validate_field(
    img: np.ndarray, field: BlurField, cfg: ValidationConfig | None = None
) -> BlurField:
    """Return a copy of the field with untrustworthy cells marked invalid.

    Cells whose extent rounds below the minimum deblurrable extent are
    invalid outright (nothing to deblur).  Remaining cells are invalid
    when the directional gradient response exceeds tau: in 'block'
    granularity each cell is judged on its own block (blocks too small
    for the kernel fail safe), in 'image' granularity one whole-image
    response at the median direction of the judged cells gates them all.
    """
    if cfg is None:
        cfg = ValidationConfig()
    img = np.asarray(img, dtype=np.float64)
    if img.shape != (field.height, field.width):
        raise ValueError(
            f"image {img.shape} does not match field {(field.height, field.width)}"
        )

    valid = np.array(field.valid, dtype=bool)
    deblurrable = np.rint(field.extent_px) >= MIN_EXTENT
    valid &= deblurrable

    if cfg.granularity == "image":
        if np.any(valid):
            theta = float(np.median(field.theta_deg[valid]))
            if directional_gradient_max(img, theta) > cfg.tau:
                valid[:] = False
        return field.with_validity(valid)

    for row in range(field.grid_rows):
        for col in range(field.grid_cols):
            if not valid[row, col]:
                continue
            y0, y1, x0, x1 = field.block_rect(row, col)
            if y1 - y0 < 3 or x1 - x0 < 3:
                valid[row, col] = False
                continue
            g = directional_gradient_max(
                img[y0:y1, x0:x1], float(field.theta_deg[row, col]) % 180.0
            )
            if g > cfg.tau:
                valid[row, col] = False
    return field.with_validity(valid)
