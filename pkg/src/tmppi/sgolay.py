"""Savitzky-Golay smoothing with least-squares boundary handling.

Interior points are smoothed with the classic fixed convolution kernel; points
closer than half a window to either end are fitted on the truncated window
that actually exists (no padding, no mirroring) and the polynomial is
evaluated at the point itself.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


def _validate(window: int, order: int) -> None:
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be odd and positive, got {window}")
    if order < 0 or order >= window:
        raise ValueError(f"order must satisfy 0 <= order < window, got {order}")


@lru_cache(maxsize=None)
def savgol_kernel(window: int, order: int) -> np.ndarray:
    """Convolution coefficients for the interior (full-window) case.

    Row 0 of the pseudo-inverse of the Vandermonde matrix over offsets
    [-h, h]: the value at offset 0 of the least-squares polynomial.
    """
    _validate(window, order)
    half = window // 2
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    vander = np.vander(offsets, N=order + 1, increasing=True)
    kernel = np.linalg.pinv(vander)[0]
    kernel.setflags(write=False)
    return kernel


def savgol_smooth(seq: np.ndarray, window: int, order: int) -> np.ndarray:
    """Smooth a sequence of shape (H,) or (H, channels), each channel independently.

    Requires window <= 2*H - 1 so every truncated window still contains the
    point being smoothed plus at least as many neighbours as the interior
    kernel assumes on one side.
    """
    _validate(window, order)
    seq = np.asarray(seq, dtype=np.float64)
    squeeze = seq.ndim == 1
    y = seq[:, None] if squeeze else seq
    h = y.shape[0]
    if window > 2 * h - 1:
        raise ValueError(f"window {window} too long for sequence length {h}")

    half = window // 2
    out = np.empty_like(y)
    if h >= window:
        kernel = savgol_kernel(window, order)
        for c in range(y.shape[1]):
            out[half : h - half, c] = np.convolve(y[:, c], kernel[::-1], mode="valid")
    edge = [i for i in range(h) if i < half or i >= h - half]
    for i in edge:
        lo, hi = max(0, i - half), min(h, i + half + 1)
        offsets = np.arange(lo, hi, dtype=np.float64) - i
        # Truncated windows can hold fewer points than order+1; cap the degree.
        deg = min(order, len(offsets) - 1)
        vander = np.vander(offsets, N=deg + 1, increasing=True)
        coef, *_ = np.linalg.lstsq(vander, y[lo:hi], rcond=None)
        out[i] = coef[0]
    return out[:, 0] if squeeze else out
