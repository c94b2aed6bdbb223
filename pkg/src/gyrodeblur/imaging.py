"""Grayscale image I/O, synthetic motion blur, and quality metrics.

Images are 2D float64 arrays of normalized intensities in [0, 1],
row-major, origin top-left.  File exchange uses binary PGM (P5) and, for
input only, binary PPM (P6) converted to luma.  Synthetic blur drives
the evaluation protocol: a linear box streak rendered through the same
rasterizer the deconvolution bank uses, plus seeded Gaussian noise at a
chosen signal-to-noise ratio.
"""

from __future__ import annotations

import math

import numpy as np

from .deconv import (
    InverseKernel,
    _box_taps,
    build_psf_1d,
    rasterize_kernel_2d,
    wiener_inverse_1d,
)

__all__ = [
    "load_image",
    "save_image",
    "motion_psf_2d",
    "convolve_sparse",
    "synth_blur",
    "psnr",
    "frequency_wiener_reference",
]

_LUMA = np.array([0.299, 0.587, 0.114])


def _read_pnm_tokens(blob: bytes, count: int):
    """First `count` whitespace-separated header tokens, honoring `#`
    comments; returns (tokens, offset just past the single whitespace
    byte that terminates the last token)."""
    tokens = []
    i = 0
    while len(tokens) < count:
        if i >= len(blob):
            raise ValueError("truncated header")
        ch = blob[i : i + 1]
        if ch == b"#":
            while i < len(blob) and blob[i : i + 1] not in (b"\n", b"\r"):
                i += 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < len(blob) and not blob[j : j + 1].isspace() and blob[j : j + 1] != b"#":
                j += 1
            tokens.append(blob[i:j])
            i = j
    if i >= len(blob) or not blob[i : i + 1].isspace():
        raise ValueError("header not terminated by whitespace")
    return tokens, i + 1


def load_image(path) -> np.ndarray:
    """Read a binary PGM (P5) or PPM (P6, converted to luma) as [0,1] floats."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:2] not in (b"P5", b"P6"):
        raise ValueError(f"{path}: unsupported magic {blob[:2]!r} (need P5 or P6)")
    tokens, off = _read_pnm_tokens(blob, 4)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"{path}: malformed magic token {magic!r}")
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise ValueError(f"{path}: malformed header") from exc
    if width < 1 or height < 1:
        raise ValueError(f"{path}: bad dimensions {width}x{height}")
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval} (need 255)")
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    data = np.frombuffer(blob, dtype=np.uint8, count=-1, offset=off)
    if data.size < need:
        raise ValueError(f"{path}: truncated payload ({data.size} of {need} bytes)")
    data = data[:need].astype(np.float64) / 255.0
    if channels == 1:
        return data.reshape(height, width)
    return data.reshape(height, width, 3) @ _LUMA


def save_image(path, img: np.ndarray) -> None:
    """Write a [0,1] float image as binary 8-bit PGM, round-to-nearest."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {img.shape}")
    q = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(q.tobytes())


def motion_psf_2d(theta_deg: float, r: int) -> InverseKernel:
    """Forward linear-blur kernel: a box streak of extent r at angle theta,
    rasterized exactly like the bank's inverse kernels.  r = 1 degenerates
    to the identity kernel."""
    if int(r) != r or r < 1:
        raise ValueError(f"blur extent must be an integer >= 1, got {r}")
    return rasterize_kernel_2d(_box_taps(int(r)), float(theta_deg) % 180.0)


def convolve_sparse(img: np.ndarray, kernel: InverseKernel) -> np.ndarray:
    """Dense output of a sparse-kernel convolution with edge replication."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    pad = 0
    if len(kernel):
        pad = int(max(np.max(np.abs(kernel.dx)), np.max(np.abs(kernel.dy))))
    padded = np.pad(img, pad, mode="edge")
    out = np.zeros_like(img)
    for dx, dy, wt in zip(kernel.dx, kernel.dy, kernel.weights):
        out += wt * padded[pad - dy : pad - dy + h, pad - dx : pad - dx + w]
    return out


def synth_blur(
    img: np.ndarray,
    theta_deg: float,
    r: int,
    seed: int = 0,
    snr_db: float | None = None,
) -> np.ndarray:
    """Synthetically motion-blur an image, optionally adding sensor noise.

    Blur is the spatial convolution with motion_psf_2d (edge-replicated
    borders).  When snr_db is given, zero-mean Gaussian noise is added at
    the stated blurred-signal-to-noise ratio: noise variance =
    var(blurred) / 10^(snr_db/10), the BSNR convention of the
    deconvolution literature (the flat DC level carries no signal).  The
    generator is counter-based, so the result is a pure function of
    (img, theta, r, seed, snr_db).  Output is clamped to [0, 1].
    """
    if snr_db is not None and not math.isfinite(snr_db):
        raise ValueError("snr_db must be finite (or None to disable noise)")
    out = convolve_sparse(img, motion_psf_2d(theta_deg, r))
    if snr_db is not None:
        signal_power = float(np.var(out))
        sigma = math.sqrt(signal_power / 10.0 ** (snr_db / 10.0))
        rng = np.random.Generator(np.random.Philox(seed))
        out = out + rng.normal(0.0, sigma, size=out.shape)
    return np.clip(out, 0.0, 1.0)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB on [0,1] images; inf when identical."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return -10.0 * math.log10(mse)


def frequency_wiener_reference(
    img: np.ndarray, theta_deg: float, r: int, gamma: float = 0.01
) -> np.ndarray:
    """Full-image DFT route of the Wiener deblur, the spatial engine's oracle.

    Builds the same regularized inverse kernel as the bank (padded 1D
    Wiener filter rasterized at theta), embeds it in an image-sized grid,
    and applies it by pointwise multiplication in the frequency domain.
    One transfer function, one DFT: no blocks, no sparse iteration.  The
    circular boundary conditions of the DFT produce the classic
    wrap-around ringing at image borders, which is exactly what the
    spatial engine's replicated borders avoid; away from the borders the
    two routes must agree.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    if int(r) != r or r < 1:
        raise ValueError(f"blur extent must be an integer >= 1, got {r}")
    if r == 1:
        inv1d = wiener_inverse_1d(_box_taps(1), gamma)
    else:
        inv1d = wiener_inverse_1d(build_psf_1d(int(r)), gamma)
    kernel = rasterize_kernel_2d(inv1d, float(theta_deg) % 180.0)
    filt = np.zeros((h, w))
    np.add.at(filt, (kernel.dy % h, kernel.dx % w), kernel.weights)
    out = np.fft.ifft2(np.fft.fft2(img) * np.fft.fft2(filt)).real
    return np.clip(out, 0.0, 1.0)
