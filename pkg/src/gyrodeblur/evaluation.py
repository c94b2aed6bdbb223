"""Detector-agnostic repeatability evaluation.

Keypoints from any detector are scored against a ground-truth homography
with the circle-overlap criterion: a detection in one image matches a
detection in the other when their scale circles, mapped into a common
frame, overlap by at least a minimum intersection-over-union.  The module
also provides the supporting machinery for building that ground truth
from sharp neighboring frames: RANSAC homography estimation and linear
keypoint-track interpolation.  A small Harris-style detector is included
so the scoring pipeline can be exercised without any external detector.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter, maximum_filter, sobel

__all__ = [
    "Keypoint",
    "load_keypoints_csv",
    "save_keypoints_csv",
    "normalize_homography",
    "load_homography",
    "save_homography",
    "circle_iou",
    "match_keypoints",
    "repeatability",
    "localization_error",
    "estimate_homography_ransac",
    "interpolate_tracks",
    "toy_detect",
]


@dataclass(frozen=True)
class Keypoint:
    """A scale detection: sub-pixel position, radius, detector response."""

    x: float
    y: float
    scale: float
    response: float = 0.0

    def __post_init__(self) -> None:
        vals = (self.x, self.y, self.scale, self.response)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError(f"non-finite keypoint fields {vals}")
        if self.scale <= 0:
            raise ValueError(f"keypoint scale must be positive, got {self.scale}")


def load_keypoints_csv(path) -> list[Keypoint]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["x", "y", "scale", "response"]:
            raise ValueError(f"{path}: expected header x,y,scale,response, got {header}")
        return [
            Keypoint(float(r[0]), float(r[1]), float(r[2]), float(r[3])) for r in reader if r
        ]


def save_keypoints_csv(path, kps: list[Keypoint]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "scale", "response"])
        for k in kps:
            writer.writerow([repr(float(k.x)), repr(float(k.y)), repr(float(k.scale)), repr(float(k.response))])


def normalize_homography(H: np.ndarray) -> np.ndarray:
    """Scale a 3x3 homography so its bottom-right entry is 1 when nonzero."""
    H = np.asarray(H, dtype=np.float64)
    if H.shape != (3, 3):
        raise ValueError(f"homography must be 3x3, got {H.shape}")
    if abs(H[2, 2]) > 1e-12:
        return H / H[2, 2]
    return H / np.linalg.norm(H)


def load_homography(path) -> np.ndarray:
    vals = np.loadtxt(path, dtype=np.float64).reshape(-1)
    if vals.size != 9:
        raise ValueError(f"{path}: expected 9 numbers, got {vals.size}")
    return normalize_homography(vals.reshape(3, 3))


def save_homography(path, H: np.ndarray) -> None:
    H = normalize_homography(H)
    with open(path, "w") as fh:
        for row in H:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def _project(H: np.ndarray, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Apply H to (n,2) points; returns (projected points, homogeneous w)."""
    pts = np.column_stack([xy, np.ones(len(xy))])
    q = pts @ H.T
    w = q[:, 2]
    if np.any(np.abs(w) < 1e-12):
        raise ValueError("projected point at infinity")
    return q[:, :2] / w[:, None], w


def circle_iou(c0: np.ndarray, r0, c1: np.ndarray, r1) -> np.ndarray:
    """Intersection-over-union of circles, vectorized over broadcast shapes.

    Uses the circular-segment (lens) area for partial overlap and the
    containment ratio when one circle lies inside the other.
    """
    c0 = np.asarray(c0, dtype=np.float64)
    c1 = np.asarray(c1, dtype=np.float64)
    r0 = np.asarray(r0, dtype=np.float64)
    r1 = np.asarray(r1, dtype=np.float64)
    d = np.hypot(c0[..., 0] - c1[..., 0], c0[..., 1] - c1[..., 1])

    a0 = np.pi * r0**2
    a1 = np.pi * r1**2
    with np.errstate(invalid="ignore", divide="ignore"):
        cos0 = np.clip((d**2 + r0**2 - r1**2) / (2 * d * r0), -1.0, 1.0)
        cos1 = np.clip((d**2 + r1**2 - r0**2) / (2 * d * r1), -1.0, 1.0)
        lens = (
            r0**2 * np.arccos(cos0)
            + r1**2 * np.arccos(cos1)
            - 0.5
            * np.sqrt(
                np.maximum(
                    (-d + r0 + r1) * (d + r0 - r1) * (d - r0 + r1) * (d + r0 + r1), 0.0
                )
            )
        )
    inter = np.where(d >= r0 + r1, 0.0, np.where(d <= np.abs(r0 - r1), np.minimum(a0, a1), lens))
    union = a0 + a1 - inter
    return inter / union


def _scale_factors(H: np.ndarray, xy: np.ndarray, w: np.ndarray) -> np.ndarray:
    # local area scale of a homography is det(H) / w^3; radius scales by its sqrt
    det = np.linalg.det(H)
    return np.sqrt(np.abs(det) / np.abs(w) ** 3)


def match_keypoints(
    kA: list[Keypoint], kB: list[Keypoint], H: np.ndarray, overlap_min: float
) -> list[tuple[int, int, float]]:
    """Greedy one-to-one matching of kA (projected through H) against kB.

    Candidate pairs with circle IoU >= overlap_min are taken best-first;
    ties resolve by (index in A, index in B).  Returns (iA, iB, iou)
    triples.
    """
    if not kA or not kB:
        raise ValueError("keypoint lists must be non-empty")
    if not 0.0 < overlap_min < 1.0:
        raise ValueError(f"overlap_min must be in (0,1), got {overlap_min}")
    H = np.asarray(H, dtype=np.float64)
    if abs(np.linalg.det(H)) < 1e-12:
        raise ValueError("singular homography")

    xyA = np.array([[k.x, k.y] for k in kA])
    rA = np.array([k.scale for k in kA])
    xyB = np.array([[k.x, k.y] for k in kB])
    rB = np.array([k.scale for k in kB])

    projA, wA = _project(H, xyA)
    rA_proj = rA * _scale_factors(H, xyA, wA)

    iou = circle_iou(projA[:, None, :], rA_proj[:, None], xyB[None, :, :], rB[None, :])
    ia, ib = np.nonzero(iou >= overlap_min)
    order = np.lexsort((ib, ia, -iou[ia, ib]))

    usedA = np.zeros(len(kA), dtype=bool)
    usedB = np.zeros(len(kB), dtype=bool)
    matches = []
    for k in order:
        i, j = int(ia[k]), int(ib[k])
        if not usedA[i] and not usedB[j]:
            usedA[i] = True
            usedB[j] = True
            matches.append((i, j, float(iou[i, j])))
    return matches


def repeatability(
    kA: list[Keypoint], kB: list[Keypoint], H: np.ndarray, overlap_min: float = 0.4
) -> float:
    """Fraction of possible matches realized: matches / min(|kA|, |kB|)."""
    matches = match_keypoints(kA, kB, H, overlap_min)
    return len(matches) / min(len(kA), len(kB))


def localization_error(
    kA: list[Keypoint], kB: list[Keypoint], H: np.ndarray, overlap_min: float = 0.4
) -> float | None:
    """Mean distance between matched pairs in A's frame; None if no matches.

    B-side keypoints are brought into A's frame through the inverse
    homography, so the error is measured in reference-image pixels.
    """
    matches = match_keypoints(kA, kB, H, overlap_min)
    if not matches:
        return None
    H = normalize_homography(H)
    Hinv = np.linalg.inv(H)
    xyA = np.array([[kA[i].x, kA[i].y] for i, _, _ in matches])
    xyB = np.array([[kB[j].x, kB[j].y] for _, j, _ in matches])
    back, _ = _project(Hinv, xyB)
    return float(np.mean(np.hypot(*(xyA - back).T)))


def _hartley_normalization(pts: np.ndarray) -> np.ndarray:
    """Similarity transform taking points to centroid 0, mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    dist = np.mean(np.hypot(*(pts - centroid).T))
    s = np.sqrt(2.0) / dist if dist > 1e-12 else 1.0
    return np.array(
        [[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]]
    )


def _dlt(ptsA: np.ndarray, ptsB: np.ndarray) -> np.ndarray:
    """Direct linear transform with Hartley normalization on both sides."""
    TA = _hartley_normalization(ptsA)
    TB = _hartley_normalization(ptsB)
    a, _ = _project(TA, ptsA)
    b, _ = _project(TB, ptsB)
    n = len(a)
    A = np.zeros((2 * n, 9))
    A[0::2, 0:2] = a
    A[0::2, 2] = 1.0
    A[0::2, 6:8] = -b[:, 0:1] * a
    A[0::2, 8] = -b[:, 0]
    A[1::2, 3:5] = a
    A[1::2, 5] = 1.0
    A[1::2, 6:8] = -b[:, 1:2] * a
    A[1::2, 8] = -b[:, 1]
    _, _, vt = np.linalg.svd(A)
    Hn = vt[-1].reshape(3, 3)
    return normalize_homography(np.linalg.inv(TB) @ Hn @ TA)


def _any_collinear(pts: np.ndarray, tol: float = 1e-8) -> bool:
    for skip in range(4):
        p = np.delete(pts, skip, axis=0)
        u, v = p[1] - p[0], p[2] - p[0]
        area = u[0] * v[1] - u[1] * v[0]
        span = np.max(np.abs(p - p[0]))
        if abs(area) <= tol * max(span, 1.0) ** 2:
            return True
    return False


def _symmetric_transfer_sq(
    H: np.ndarray, ptsA: np.ndarray, ptsB: np.ndarray
) -> np.ndarray:
    Hinv = np.linalg.inv(H)
    fwd, _ = _project(H, ptsA)
    bwd, _ = _project(Hinv, ptsB)
    return np.sum((fwd - ptsB) ** 2, axis=1) + np.sum((bwd - ptsA) ** 2, axis=1)


def estimate_homography_ransac(
    ptsA: np.ndarray,
    ptsB: np.ndarray,
    inlier_px: float = 2.0,
    seed: int = 0,
    iters: int = 500,
) -> np.ndarray:
    """RANSAC homography from point correspondences.

    Four-point DLT hypotheses on random minimal samples (collinear samples
    rejected and redrawn); inliers counted by symmetric transfer error,
    sqrt(d_fwd^2 + d_bwd^2) < inlier_px; the model with the most inliers
    (first found wins ties) is refit on its full inlier set.  The sampling
    sequence is a pure function of the seed.
    """
    ptsA = np.asarray(ptsA, dtype=np.float64).reshape(-1, 2)
    ptsB = np.asarray(ptsB, dtype=np.float64).reshape(-1, 2)
    if len(ptsA) != len(ptsB):
        raise ValueError("correspondence lists differ in length")
    n = len(ptsA)
    if n < 4:
        raise ValueError(f"need at least 4 correspondences, got {n}")

    rng = np.random.Generator(np.random.Philox(seed))
    thresh_sq = float(inlier_px) ** 2
    best_inliers: np.ndarray | None = None
    best_count = 0
    attempts = 0
    for _ in range(iters):
        while True:
            idx = rng.choice(n, size=4, replace=False)
            attempts += 1
            if not (_any_collinear(ptsA[idx]) or _any_collinear(ptsB[idx])):
                break
            if attempts > 100 * iters:
                raise ValueError("could not draw a non-degenerate 4-point sample")
        try:
            H = _dlt(ptsA[idx], ptsB[idx])
            err = _symmetric_transfer_sq(H, ptsA, ptsB)
        except (ValueError, np.linalg.LinAlgError):
            continue
        inliers = err < thresh_sq
        count = int(inliers.sum())
        if count > best_count:
            best_count = count
            best_inliers = inliers
    if best_inliers is None or best_count < 4:
        raise ValueError("RANSAC found no valid model")
    return _dlt(ptsA[best_inliers], ptsB[best_inliers])


def interpolate_tracks(
    kp_first: list[Keypoint], kp_last: list[Keypoint]
) -> list[Keypoint]:
    """Keypoints halfway along index-aligned tracks between two frames.

    Position is the arithmetic midpoint, scale the geometric mean of the
    endpoint scales, response the arithmetic mean.
    """
    if len(kp_first) != len(kp_last):
        raise ValueError(
            f"track lists differ in length: {len(kp_first)} vs {len(kp_last)}"
        )
    out = []
    for a, b in zip(kp_first, kp_last):
        out.append(
            Keypoint(
                x=0.5 * (a.x + b.x),
                y=0.5 * (a.y + b.y),
                scale=float(np.sqrt(a.scale * b.scale)),
                response=0.5 * (a.response + b.response),
            )
        )
    return out


_HARRIS_K = 0.04
_HARRIS_SIGMA = 1.5
_TOY_SCALE = 4.0
_BORDER = 3


def toy_detect(
    img: np.ndarray, max_count: int | None = 500, min_response: float = 0.0
) -> list[Keypoint]:
    """Harris-style corner detector used as test plumbing.

    Structure tensor from Sobel derivatives smoothed with a Gaussian
    window, response det - k trace^2, 3x3 non-max suppression, per-axis
    quadratic sub-pixel refinement, fixed detection radius.  Ordering by
    (response desc, y, x) is total, so fixed-count truncation is
    deterministic.  Not a contribution: stands in for an external
    detector so evaluation runs self-contained.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or min(img.shape) < 16:
        raise ValueError(f"need a 2D image at least 16x16, got {img.shape}")
    gx = sobel(img, axis=1, mode="nearest") / 8.0
    gy = sobel(img, axis=0, mode="nearest") / 8.0
    sxx = gaussian_filter(gx * gx, _HARRIS_SIGMA, mode="nearest")
    syy = gaussian_filter(gy * gy, _HARRIS_SIGMA, mode="nearest")
    sxy = gaussian_filter(gx * gy, _HARRIS_SIGMA, mode="nearest")
    resp = (sxx * syy - sxy * sxy) - _HARRIS_K * (sxx + syy) ** 2

    peak = (resp == maximum_filter(resp, size=3)) & (resp > min_response) & (resp > 0)
    peak[:_BORDER, :] = peak[-_BORDER:, :] = False
    peak[:, :_BORDER] = peak[:, -_BORDER:] = False
    ys, xs = np.nonzero(peak)

    def subpixel(v_minus, v0, v_plus):
        denom = v_minus - 2.0 * v0 + v_plus
        if abs(denom) < 1e-12:
            return 0.0
        return float(np.clip(0.5 * (v_minus - v_plus) / denom, -0.5, 0.5))

    kps = []
    for y, x in zip(ys.tolist(), xs.tolist()):
        dx = subpixel(resp[y, x - 1], resp[y, x], resp[y, x + 1])
        dy = subpixel(resp[y - 1, x], resp[y, x], resp[y + 1, x])
        kps.append(Keypoint(x + dx, y + dy, _TOY_SCALE, float(resp[y, x])))
    kps.sort(key=lambda k: (-k.response, k.y, k.x))
    if max_count is not None:
        kps = kps[:max_count]
    return kps
