"""Shared test utilities: procedural scenes, warps, and reference models.

Scenes are continuous functions of the image plane, so a homography-warped
view can be rendered by evaluating the same function at warped coordinates:
the warped image then corresponds to the original through the exact
homography, with no resampling blur and no undefined border regions.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm

__all__ = [
    "Scene",
    "make_scene",
    "corpus_seeds",
    "warp_render",
    "fine_step_reference",
    "quat_angle_between",
    "rotation_x",
    "rotation_z",
]


class Scene:
    """A deterministic synthetic scene: callable intensity field + raster."""

    def __init__(self, fn, size: int):
        self.fn = fn
        self.size = size
        yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
        self.image = fn(xx, yy)

    def __call__(self, x, y):
        return self.fn(x, y)


def make_scene(
    seed: int, size: int = 512, rects: int | None = None, blobs: int | None = None
) -> Scene:
    """Corner-rich natural-looking scene: 1/f-ish waves + crisp-edged
    rotated rectangles + Gaussian blobs, normalized to [0.05, 0.95].
    Rectangle and blob counts scale with area so block statistics stay
    comparable across sizes."""
    rng = np.random.Generator(np.random.Philox(seed))
    if rects is None:
        rects = int(round(30 * (size / 256.0) ** 2))
    if blobs is None:
        blobs = int(round(12 * (size / 256.0) ** 2))

    # coarse 1/f-ish waves plus a fine-texture band; natural images carry
    # energy at all scales and the fine band is what motion blur destroys.
    # Each band is rescaled to a fixed total standard deviation so wave
    # energy never drowns the rectangle edge contrast.
    n_coarse, n_fine = 50, 40
    freq = np.concatenate(
        [
            np.exp(rng.uniform(np.log(1.0 / size), np.log(0.05), n_coarse)),
            np.exp(rng.uniform(np.log(0.06), np.log(0.35), n_fine)),
        ]
    )
    n_waves = n_coarse + n_fine
    ang = rng.uniform(0, np.pi, n_waves)
    wf = np.column_stack([freq * np.cos(ang), freq * np.sin(ang)])
    wamp = np.concatenate(
        [
            1.0 / (1.0 + 60.0 * freq[:n_coarse]),
            rng.uniform(0.5, 1.2, n_fine),
        ]
    )
    for band, target_sd in ((slice(0, n_coarse), 0.16), (slice(n_coarse, None), 0.055)):
        sd = np.sqrt(np.sum(wamp[band] ** 2) / 2.0)
        wamp[band] *= target_sd / sd
    wph = rng.uniform(0, 2 * np.pi, n_waves)

    rc = rng.uniform(0.08 * size, 0.92 * size, (rects, 2))
    rhalf = rng.uniform(8.0, 0.07 * size, (rects, 2))
    rphi = rng.uniform(0, np.pi, rects)
    # fills sit well away from the mid-gray background of the waves
    rval = 0.5 + rng.choice([-1.0, 1.0], rects) * rng.uniform(0.28, 0.45, rects)
    redge = 0.35

    bc = rng.uniform(0.1 * size, 0.9 * size, (blobs, 2))
    bsig = rng.uniform(4.0, 20.0, blobs)
    bval = rng.uniform(-0.18, 0.18, blobs)

    def raw(x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        acc = np.full(np.broadcast(x, y).shape, 0.5)
        for k in range(n_waves):
            acc += wamp[k] * np.sin(2 * np.pi * (wf[k, 0] * x + wf[k, 1] * y) + wph[k])
        for k in range(blobs):
            d2 = (x - bc[k, 0]) ** 2 + (y - bc[k, 1]) ** 2
            acc += bval[k] * np.exp(-d2 / (2 * bsig[k] ** 2))
        for k in range(rects):
            c, s = np.cos(rphi[k]), np.sin(rphi[k])
            u = (x - rc[k, 0]) * c + (y - rc[k, 1]) * s
            v = -(x - rc[k, 0]) * s + (y - rc[k, 1]) * c
            su = np.clip((rhalf[k, 0] - np.abs(u)) / redge, 0.0, 1.0)
            sv = np.clip((rhalf[k, 1] - np.abs(v)) / redge, 0.0, 1.0)
            m = 0.9 * su * sv
            acc = acc * (1.0 - m) + rval[k] * m
        return acc

    # mild affine squeeze then clip: construction already targets [0, 1],
    # the percentiles (fixed at build time) just tame stray extremes
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    base = raw(xx, yy)
    lo, hi = np.percentile(base, [0.5, 99.5])
    span = max(hi - lo, 1e-9)

    def fn(x, y):
        return np.clip((raw(x, y) - lo) / span * 0.9 + 0.05, 0.0, 1.0)

    return Scene(fn, size)


def corpus_seeds(count: int = 8) -> list[int]:
    return list(range(101, 101 + count))


def warp_render(scene: Scene, H: np.ndarray, size: int | None = None) -> np.ndarray:
    """Render the scene as seen through homography H.

    A point p in the base image appears at H p in the rendered view, so
    the view samples the scene at H^-1 of each output pixel.
    """
    size = size or scene.size
    Hinv = np.linalg.inv(np.asarray(H, dtype=np.float64))
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    w = Hinv[2, 0] * xx + Hinv[2, 1] * yy + Hinv[2, 2]
    px = (Hinv[0, 0] * xx + Hinv[0, 1] * yy + Hinv[0, 2]) / w
    py = (Hinv[1, 0] * xx + Hinv[1, 1] * yy + Hinv[1, 2]) / w
    return scene(px, py)


def _skew(v):
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
    )


def fine_step_reference(omega_of_t, t0_s: float, t1_s: float, dt: float = 1e-5) -> np.ndarray:
    """Brute-force orientation oracle: tiny matrix-exponential steps.

    Integrates body-frame rates into the rotation matrix mapping the body
    frame at t1 back to the frame at t0, sampling the rate at each step's
    midpoint.  Independent of the package's quaternion machinery.
    """
    M = np.eye(3)
    t = t0_s
    while t < t1_s - 1e-15:
        h = min(dt, t1_s - t)
        M = M @ expm(_skew(np.asarray(omega_of_t(t + 0.5 * h), dtype=np.float64) * h))
        t += h
    return M


def quat_angle_between(q0: np.ndarray, q1: np.ndarray) -> float:
    """Geodesic angle (radians) between two unit quaternions, sign-folded."""
    d = abs(float(np.dot(q0, q1)))
    return 2.0 * np.arccos(min(d, 1.0))


def rotation_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
