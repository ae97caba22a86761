"""Per-pixel spectral features of a finger-slot ROI.

A pixel's spectral signature is its intensity in each of the four SWIR
bands, scaled to [0, 1] by the 16-bit maxval. Its normalized difference
vector holds the six pairwise contrasts ``(i_a - i_b) / (i_a + i_b)`` for
band pairs (1,2), (1,3), (1,4), (2,3), (2,4), (3,4). The CNN input is a
three-channel composite of differences against the 1550 nm band.
"""

from itertools import combinations

import numpy as np

from .data import MAXVAL, RoiStack

N_BANDS = 4
PAIRS = tuple(combinations(range(N_BANDS), 2))
N_DIFFS = len(PAIRS)


def signatures_of_roi(roi: RoiStack) -> np.ndarray:
    """Return the (H, W, 4) grid of normalized spectral signatures."""
    return np.moveaxis(np.asarray(roi.channels, dtype=np.float64), 0, -1) / MAXVAL


def normalized_differences(sig) -> np.ndarray:
    """Normalized difference vector(s) of one or many signatures.

    Works on any array whose last axis holds the four band intensities;
    the last axis of the result holds the six contrasts in ``PAIRS`` order.
    A pair whose intensities sum to zero (a dead pixel) yields 0.
    """
    sig = np.asarray(sig, dtype=np.float64)
    if sig.shape[-1] != N_BANDS:
        raise ValueError(f"expected {N_BANDS} intensities on the last axis, got {sig.shape[-1]}")
    a_idx = [a for a, _ in PAIRS]
    b_idx = [b for _, b in PAIRS]
    ia = sig[..., a_idx]
    ib = sig[..., b_idx]
    num = ia - ib
    den = ia + ib
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den != 0)
    return out


def roi_differences(roi: RoiStack) -> np.ndarray:
    """(H*W, 6) matrix of difference vectors, pixels in row-major order."""
    return normalized_differences(signatures_of_roi(roi)).reshape(-1, N_DIFFS)


def compose_rgb(roi: RoiStack) -> np.ndarray:
    """(H, W, 3) composite ``(l4 - l1, l4 - l2, l4 - l3)``, signed, unclipped."""
    sig = signatures_of_roi(roi)
    return sig[..., 3:4] - sig[..., :3]
