"""Spatial Wiener deconvolution with a precomputed sparse kernel bank.

A 1D box kernel models linear motion blur of extent r.  Its regularized
inverse is obtained in closed form from the DFT over a support of 4r+1
samples (the regularizer gives the inverse compact support, so the 4x
padding is sufficient), then placed along a line at the blur angle to form
a sparse 2D kernel.  Kernels for every (whole-degree angle, whole-pixel
extent) pair are built offline into a bank; deblurring an image block is
then a direct sparse convolution that touches only nonzero elements.

The sparse engine is compiled with numba and parallelizes over blocks.
Blocks write disjoint output regions and accumulate in a fixed element
order, so output bits do not depend on the thread count.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from dataclasses import field as _dc_field

# Allow requesting more engine threads than visible cores (the thread cap is
# fixed at first numba import).
os.environ.setdefault("NUMBA_NUM_THREADS", str(max(4, os.cpu_count() or 1)))

import numba
import numpy as np
from numba import njit, prange

from .blurfield import BlurField

__all__ = [
    "MIN_EXTENT",
    "Psf1D",
    "InverseKernel",
    "KernelBank",
    "DeblurResult",
    "build_psf_1d",
    "wiener_inverse_1d",
    "rasterize_kernel_2d",
    "build_bank",
    "save_bank",
    "load_bank",
    "deblur_image",
    "BankFormatError",
]

# Extents below this round to an effectively-identity kernel; the bank
# starts here.
MIN_EXTENT = 2

_CULL_REL = 1e-6


class BankFormatError(ValueError):
    """Raised when a kernel-bank cache file is malformed or corrupt."""


@dataclass
class Psf1D:
    """1D motion-blur kernel: r equal taps centered in 4r+1 samples."""

    taps: np.ndarray

    def __post_init__(self) -> None:
        self.taps = np.asarray(self.taps, dtype=np.float64)
        if self.taps.ndim != 1 or self.taps.size % 2 != 1:
            raise ValueError("PSF taps must be a 1D odd-length array")
        if np.any(self.taps < 0) or abs(self.taps.sum() - 1.0) > 1e-9:
            raise ValueError("PSF taps must be non-negative and sum to 1")

    @property
    def center(self) -> int:
        return self.taps.size // 2


def _box_taps(r: int) -> np.ndarray:
    """r equal taps of 1/r in a zero-padded array of length 4r+1.

    The pad is split as evenly as possible; for even r the run sits half a
    pixel left of the array center.  Accepts r >= 1 so the degenerate
    identity kernel is available to blur synthesis.
    """
    length = 4 * r + 1
    taps = np.zeros(length)
    start = (length - r) // 2
    taps[start : start + r] = 1.0 / r
    return taps


def build_psf_1d(r: int) -> Psf1D:
    """Box PSF for an integer blur extent r >= 2."""
    if int(r) != r or r < MIN_EXTENT:
        raise ValueError(f"blur extent must be an integer >= {MIN_EXTENT}, got {r}")
    return Psf1D(_box_taps(int(r)))


def wiener_inverse_1d(psf: Psf1D | np.ndarray, gamma: float) -> np.ndarray:
    """Regularized inverse of a 1D PSF, anchored at the array center.

    Computes W(f) = H*(f) / (|H(f)|^2 + gamma) on the DFT grid of the
    padded taps and inverse-transforms.  The result is circularly shifted
    so that convolving with it (anchor at the center sample) undoes a
    convolution with the PSF (anchor at its center) up to the Wiener
    residual.  The DC sample of W fixes the weight sum at 1/(1 + gamma).
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    taps = psf.taps if isinstance(psf, Psf1D) else np.asarray(psf, dtype=np.float64)
    spectrum = np.fft.fft(taps)
    wiener = np.conj(spectrum) / (np.abs(spectrum) ** 2 + gamma)
    inv = np.fft.ifft(wiener)
    if np.max(np.abs(inv.imag)) > 1e-9:
        raise ValueError("inverse kernel has non-negligible imaginary residue")
    center = taps.size // 2
    return np.roll(inv.real, 2 * center)


@dataclass
class InverseKernel:
    """Sparse 2D kernel: nonzero (dx, dy, weight) offsets from the anchor."""

    dx: np.ndarray
    dy: np.ndarray
    weights: np.ndarray
    theta_deg: float
    extent_px: float | None = None
    gamma: float | None = None

    def __post_init__(self) -> None:
        self.dx = np.asarray(self.dx, dtype=np.int32)
        self.dy = np.asarray(self.dy, dtype=np.int32)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if not (self.dx.shape == self.dy.shape == self.weights.shape):
            raise ValueError("dx, dy, weights must have equal shapes")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("kernel weights must be finite")

    def __len__(self) -> int:
        return self.weights.size

    @property
    def weight_sum(self) -> float:
        return float(self.weights.sum())

    def dense(self) -> np.ndarray:
        """Dense 2D array of the kernel, for inspection and tests."""
        if len(self) == 0:
            return np.zeros((1, 1))
        x0, x1 = int(self.dx.min()), int(self.dx.max())
        y0, y1 = int(self.dy.min()), int(self.dy.max())
        out = np.zeros((y1 - y0 + 1, x1 - x0 + 1))
        np.add.at(out, (self.dy - y0, self.dx - x0), self.weights)
        return out


def _line_direction(theta_deg: float) -> tuple[float, float]:
    # exact axis directions keep 0/90 degree kernels bit-exact transposes
    if theta_deg == 0.0:
        return 1.0, 0.0
    if theta_deg == 90.0:
        return 0.0, 1.0
    rad = np.deg2rad(theta_deg)
    return float(np.cos(rad)), float(np.sin(rad))


def rasterize_kernel_2d(
    weights: np.ndarray,
    theta_deg: float,
    *,
    extent_px: float | None = None,
    gamma: float | None = None,
) -> InverseKernel:
    """Place 1D weights along a line at theta, splatting onto the grid.

    Each tap lands at signed distance (index - center) from the anchor
    along the line.  It is snapped to the nearest cell on the dominant
    axis and split between the two neighboring cells on the other axis
    with linear weights (1-f, f), so a tap touches at most two pixels and
    its weight sum is preserved.  Coincident cells are merged, elements
    below 1e-6 of the peak magnitude are dropped, and the survivors are
    rescaled so the total weight equals the 1D kernel's sum exactly (the
    cull must not perturb the DC gain).
    """
    if not 0.0 <= theta_deg < 180.0:
        raise ValueError(f"theta {theta_deg} outside [0, 180)")
    w = np.asarray(weights, dtype=np.float64)
    c = (w.size - 1) // 2
    s = np.arange(w.size) - c
    cdir, sdir = _line_direction(theta_deg)
    px = s * cdir
    py = s * sdir

    if abs(cdir) >= abs(sdir):
        snap = np.floor(px + 0.5).astype(np.int64)
        base = np.floor(py).astype(np.int64)
        frac = py - base
        dx = np.concatenate([snap, snap])
        dy = np.concatenate([base, base + 1])
    else:
        snap = np.floor(py + 0.5).astype(np.int64)
        base = np.floor(px).astype(np.int64)
        frac = px - base
        dy = np.concatenate([snap, snap])
        dx = np.concatenate([base, base + 1])
    wt = np.concatenate([w * (1.0 - frac), w * frac])

    # merge duplicate cells
    span = 2 * (int(np.max(np.abs(np.concatenate([dx, dy])))) + 1) + 1
    keys = (dy + span // 2) * span + (dx + span // 2)
    uniq, inverse = np.unique(keys, return_inverse=True)
    merged = np.bincount(inverse, weights=wt, minlength=uniq.size)
    mdy = uniq // span - span // 2
    mdx = uniq % span - span // 2

    keep = np.abs(merged) >= _CULL_REL * np.max(np.abs(merged))
    kept = merged[keep]
    target = float(w.sum())
    kept_sum = float(kept.sum())
    if abs(kept_sum) > 1e-12 and kept_sum != target:
        kept = kept * (target / kept_sum)
    return InverseKernel(
        dx=mdx[keep],
        dy=mdy[keep],
        weights=kept,
        theta_deg=float(theta_deg),
        extent_px=extent_px,
        gamma=gamma,
    )


@dataclass
class KernelBank:
    """Inverse kernels for every (theta 0..179 deg, extent 2..r_max px)."""

    r_max: int
    gamma: float
    kernels: dict = _dc_field(repr=False)

    def get(self, theta_deg: int, r: int) -> InverseKernel:
        return self.kernels[(int(theta_deg), int(r))]

    def __len__(self) -> int:
        return len(self.kernels)

    @property
    def max_elements(self) -> int:
        return max(len(k) for k in self.kernels.values())


def build_bank(r_max: int, gamma: float = 0.01) -> KernelBank:
    """Build the full offline kernel bank.  Deterministic per (r_max, gamma)."""
    if r_max < MIN_EXTENT:
        raise ValueError(f"r_max must be >= {MIN_EXTENT}")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    kernels = {}
    for r in range(MIN_EXTENT, r_max + 1):
        inv1d = wiener_inverse_1d(build_psf_1d(r), gamma)
        for theta in range(180):
            kernels[(theta, r)] = rasterize_kernel_2d(
                inv1d, float(theta), extent_px=float(r), gamma=gamma
            )
    return KernelBank(r_max=int(r_max), gamma=float(gamma), kernels=kernels)


_BANK_MAGIC = b"IDBK1"


def save_bank(bank: KernelBank, path) -> None:
    """Serialize a bank: magic, r_max u32, gamma f64, then per-kernel
    element count u32 and (dx i16, dy i16, weight f32) triplets in
    (theta, r) order, all little-endian."""
    elem_dtype = np.dtype([("dx", "<i2"), ("dy", "<i2"), ("w", "<f4")])
    with open(path, "wb") as fh:
        fh.write(_BANK_MAGIC)
        fh.write(struct.pack("<I", bank.r_max))
        fh.write(struct.pack("<d", bank.gamma))
        for theta in range(180):
            for r in range(MIN_EXTENT, bank.r_max + 1):
                k = bank.get(theta, r)
                fh.write(struct.pack("<I", len(k)))
                rec = np.empty(len(k), dtype=elem_dtype)
                rec["dx"] = k.dx
                rec["dy"] = k.dy
                rec["w"] = k.weights
                fh.write(rec.tobytes())


def load_bank(path) -> KernelBank:
    """Load a serialized bank, validating structure and the DC-gain
    invariant of every kernel (float32 storage widens the check to 1e-5)."""
    elem_dtype = np.dtype([("dx", "<i2"), ("dy", "<i2"), ("w", "<f4")])
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(_BANK_MAGIC) + 12 or blob[: len(_BANK_MAGIC)] != _BANK_MAGIC:
        raise BankFormatError(f"{path}: not a kernel bank file")
    off = len(_BANK_MAGIC)
    (r_max,) = struct.unpack_from("<I", blob, off)
    off += 4
    (gamma,) = struct.unpack_from("<d", blob, off)
    off += 8
    if r_max < MIN_EXTENT or not 0 < gamma < 1e6:
        raise BankFormatError(f"{path}: implausible header (r_max={r_max}, gamma={gamma})")
    dc = 1.0 / (1.0 + gamma)
    kernels = {}
    for theta in range(180):
        for r in range(MIN_EXTENT, r_max + 1):
            if off + 4 > len(blob):
                raise BankFormatError(f"{path}: truncated at kernel ({theta}, {r})")
            (count,) = struct.unpack_from("<I", blob, off)
            off += 4
            nbytes = count * elem_dtype.itemsize
            if count > 2 * (4 * r + 1) or off + nbytes > len(blob):
                raise BankFormatError(f"{path}: corrupt element list at ({theta}, {r})")
            rec = np.frombuffer(blob, dtype=elem_dtype, count=count, offset=off)
            off += nbytes
            k = InverseKernel(
                dx=rec["dx"].astype(np.int32),
                dy=rec["dy"].astype(np.int32),
                weights=rec["w"].astype(np.float64),
                theta_deg=float(theta),
                extent_px=float(r),
                gamma=gamma,
            )
            if abs(k.weight_sum - dc) > 1e-5:
                raise BankFormatError(f"{path}: DC gain check failed at ({theta}, {r})")
            kernels[(theta, r)] = k
    if off != len(blob):
        raise BankFormatError(f"{path}: {len(blob) - off} trailing bytes")
    return KernelBank(r_max=int(r_max), gamma=float(gamma), kernels=kernels)


@dataclass
class DeblurResult:
    """Deblurred image plus bookkeeping from the block sweep."""

    image: np.ndarray
    cells_deblurred: int
    cells_passthrough: int
    clamped_cells: int

    @property
    def clamped(self) -> bool:
        return self.clamped_cells > 0


@njit(parallel=True, cache=True)
def _sparse_deblur_cells(
    padded, out, rects, eptr, edx, edy, ew, pad
):  # pragma: no cover - compiled
    n = rects.shape[0]
    for i in prange(n):
        y0, y1, x0, x1 = rects[i, 0], rects[i, 1], rects[i, 2], rects[i, 3]
        for y in range(y0, y1):
            for x in range(x0, x1):
                out[y, x] = 0.0
        for e in range(eptr[i], eptr[i + 1]):
            w = ew[e]
            oy = pad - edy[e]
            ox = pad - edx[e]
            for y in range(y0, y1):
                src = padded[y + oy]
                dst = out[y]
                for x in range(x0, x1):
                    dst[x] += w * src[x + ox]


def deblur_image(
    img: np.ndarray,
    field: BlurField,
    bank: KernelBank,
    threads: int | None = None,
) -> DeblurResult:
    """Deblur an image block-wise with bank kernels chosen per cell.

    Each valid cell's (theta, extent) is rounded to the nearest bank index;
    extents above the bank maximum are clamped (counted in the result).
    Every output pixel of an active cell is the sparse convolution of the
    full source image with that cell's kernel; reads beyond the image edge
    replicate the border.  Invalid cells, and cells whose extent rounds
    below the bank minimum, are copied through.  Output is clamped to
    [0, 1].  Identical inputs produce bit-identical output for any thread
    count.
    """
    img = np.ascontiguousarray(img, dtype=np.float64)
    if img.shape != (field.height, field.width):
        raise ValueError(
            f"image {img.shape} does not match field {(field.height, field.width)}"
        )
    if len(bank.kernels) == 0:
        raise ValueError("empty kernel bank")

    rects = []
    kern_list = []
    clamped = 0
    passthrough = 0
    for row in range(field.grid_rows):
        for col in range(field.grid_cols):
            r_idx = int(np.rint(field.extent_px[row, col]))
            if not field.valid[row, col] or r_idx < MIN_EXTENT:
                passthrough += 1
                continue
            if r_idx > bank.r_max:
                r_idx = bank.r_max
                clamped += 1
            t_idx = int(np.rint(field.theta_deg[row, col])) % 180
            rects.append(field.block_rect(row, col))
            kern_list.append(bank.get(t_idx, r_idx))

    out = img.copy()
    if rects:
        pad = 0
        for k in kern_list:
            if len(k):
                pad = max(pad, int(np.max(np.abs(k.dx))), int(np.max(np.abs(k.dy))))
        padded = np.pad(img, pad, mode="edge")
        rect_arr = np.array(
            [(y0, y1, x0, x1) for (y0, y1, x0, x1) in rects], dtype=np.int64
        )
        eptr = np.zeros(len(kern_list) + 1, dtype=np.int64)
        eptr[1:] = np.cumsum([len(k) for k in kern_list])
        edx = np.concatenate([k.dx.astype(np.int64) for k in kern_list])
        edy = np.concatenate([k.dy.astype(np.int64) for k in kern_list])
        ew = np.concatenate([k.weights for k in kern_list])

        max_threads = numba.config.NUMBA_NUM_THREADS
        want = threads if threads is not None else (os.cpu_count() or 1)
        want = max(1, min(int(want), max_threads))
        prev = numba.get_num_threads()
        numba.set_num_threads(want)
        try:
            _sparse_deblur_cells(padded, out, rect_arr, eptr, edx, edy, ew, pad)
        finally:
            numba.set_num_threads(prev)
        np.clip(out, 0.0, 1.0, out=out)

    return DeblurResult(
        image=out,
        cells_deblurred=len(rects),
        cells_passthrough=passthrough,
        clamped_cells=clamped,
    )
