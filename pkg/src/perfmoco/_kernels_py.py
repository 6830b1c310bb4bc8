"""Pure-numpy registration kernels.

These are the reference implementations of the per-pixel inner loops used by
the demons registration driver.  A compiled twin lives in ``_kernels.pyx``;
``kernels.py`` picks whichever is available.  Both backends must produce
bit-compatible results, so the arithmetic here is written in the exact
operation order the compiled version uses.
"""

import numpy as np


def bilinear_warp(image, u_row, u_col):
    """Sample ``image`` at (r + u_row, c + u_col) with bilinear interpolation.

    Sample coordinates are clamped to the image bounds, so out-of-range
    displacements replicate the border pixels.

    Parameters
    ----------
    image : (n_r, n_c) ndarray
        Image to resample.
    u_row, u_col : (n_r, n_c) ndarray
        Per-pixel displacement in rows and columns.

    Returns
    -------
    (n_r, n_c) float64 ndarray
    """
    img = np.ascontiguousarray(image, dtype=np.float64)
    n_r, n_c = img.shape
    rows = np.clip(np.arange(n_r)[:, None] + u_row, 0, n_r - 1)
    cols = np.clip(np.arange(n_c)[None, :] + u_col, 0, n_c - 1)
    r0 = np.floor(rows).astype(np.intp)
    c0 = np.floor(cols).astype(np.intp)
    r1 = np.minimum(r0 + 1, n_r - 1)
    c1 = np.minimum(c0 + 1, n_c - 1)
    fr = rows - r0
    fc = cols - c0
    top = img[r0, c0] * (1.0 - fc) + img[r0, c1] * fc
    bot = img[r1, c0] * (1.0 - fc) + img[r1, c1] * fc
    return top * (1.0 - fr) + bot * fr


def demons_force(fixed, warped, alpha):
    """Symmetric demons force field driving ``warped`` toward ``fixed``.

    Each pixel combines a term driven by the fixed-image gradient and one
    driven by the warped-image gradient; each term divides the intensity
    difference by that gradient's squared magnitude plus ``alpha`` times the
    squared difference.  Terms whose denominator falls below 1e-9 are set to
    zero instead of amplifying noise.

    Returns
    -------
    (f_row, f_col) : pair of (n_r, n_c) float64 ndarrays
    """
    fixed = np.ascontiguousarray(fixed, dtype=np.float64)
    warped = np.ascontiguousarray(warped, dtype=np.float64)
    gf_r, gf_c = np.gradient(fixed)
    gw_r, gw_c = np.gradient(warped)
    diff = warped - fixed
    pull = alpha * (diff * diff)
    den_f = gf_r * gf_r + gf_c * gf_c + pull
    den_w = gw_r * gw_r + gw_c * gw_c + pull
    den_f = np.where(den_f < 1e-9, np.inf, den_f)
    den_w = np.where(den_w < 1e-9, np.inf, den_w)
    f_row = (diff * gf_r) / den_f + (diff * gw_r) / den_w
    f_col = (diff * gf_c) / den_f + (diff * gw_c) / den_w
    return f_row, f_col
