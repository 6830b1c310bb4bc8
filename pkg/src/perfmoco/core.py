"""Dense series containers, Fourier undersampling operators, and the two
proximal maps (singular-value thresholding, entrywise soft thresholding)
shared by every solver.

Conventions fixed here and relied on everywhere else:

* A dynamic series is stored as an ``[n1, n2, t]`` array; merging the two
  spatial axes gives the ``[n1*n2, t]`` Casorati matrix whose columns are
  frames.
* The 2-D Fourier transform is unitary (``norm="ortho"``), so norms in
  k-space and image space match.
* k-space arrays are kept in centered layout (DC component at
  ``[n1//2, n2//2]``); sampling masks keep full readout lines, i.e. whole
  columns of each frame, with a contiguous fully sampled band around the
  center column.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, DivergenceError

CENTER_LINES = 8  # fully sampled low-frequency band (shrinks if the keep budget is smaller)


@dataclass
class ImageSeries:
    """Complex- or real-valued dynamic image stack with acquisition metadata."""

    data: np.ndarray
    pixel_spacing: tuple = (2.0, 2.0)
    frame_interval: float = 1.0  # heartbeats per frame

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise DimensionError(f"series must be [n1, n2, t], got shape {self.data.shape}")
        n1, n2, t = self.data.shape
        if n1 < 2 or n2 < 2 or t < 2:
            raise DimensionError(f"series axes must all be >= 2, got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("series contains non-finite values")

    @property
    def shape(self):
        return self.data.shape

    @property
    def n_frames(self):
        return self.data.shape[2]

    def casorati(self):
        """View of the series as an [n1*n2, t] matrix (one frame per column)."""
        n1, n2, t = self.data.shape
        return self.data.reshape(n1 * n2, t)

    @classmethod
    def from_casorati(cls, matrix, spatial_shape, like=None):
        """Rebuild a series from its Casorati matrix."""
        n1, n2 = spatial_shape
        matrix = np.asarray(matrix)
        if matrix.shape[0] != n1 * n2:
            raise DimensionError(
                f"casorati rows {matrix.shape[0]} != n1*n2 = {n1 * n2}")
        data = matrix.reshape(n1, n2, matrix.shape[1])
        if like is not None:
            return cls(data, like.pixel_spacing, like.frame_interval)
        return cls(data)

    def magnitude(self):
        """Real magnitude series (identity for real input up to abs)."""
        return ImageSeries(np.abs(self.data), self.pixel_spacing, self.frame_interval)

    def copy(self):
        return ImageSeries(self.data.copy(), self.pixel_spacing, self.frame_interval)


@dataclass
class SamplingMask:
    """Binary k-space keep pattern realizing a target acceleration rate."""

    keep: np.ndarray
    rate: float

    def __post_init__(self):
        self.keep = np.asarray(self.keep)
        if self.keep.ndim != 3:
            raise DimensionError(f"mask must be [n1, n2, t], got {self.keep.shape}")
        if self.keep.dtype != np.uint8:
            self.keep = self.keep.astype(np.uint8)
        if not np.all((self.keep == 0) | (self.keep == 1)):
            raise ValueError("mask entries must be 0 or 1")
        kept = int(self.keep.sum())
        if kept == 0:
            raise ValueError("mask keeps no samples")
        achieved = self.keep.size / kept
        if abs(achieved - self.rate) > 0.1 * self.rate:
            raise ConfigError(
                f"achieved acceleration {achieved:.3f} not within 10% of target {self.rate}")

    @property
    def achieved_rate(self):
        return self.keep.size / int(self.keep.sum())


@dataclass
class KSpaceData:
    """Undersampled k-space samples (centered layout, zeros where not kept)."""

    samples: np.ndarray
    mask: SamplingMask

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.samples.shape != self.mask.keep.shape:
            raise DimensionError(
                f"samples shape {self.samples.shape} != mask shape {self.mask.keep.shape}")
        if np.any(self.samples[self.mask.keep == 0] != 0):
            raise ValueError("samples must be exactly zero at unsampled locations")

    @property
    def shape(self):
        return self.samples.shape


def forward_undersample(x: ImageSeries, mask: SamplingMask) -> KSpaceData:
    """Per-frame unitary 2-D FFT (centered) followed by masking."""
    if x.shape != mask.keep.shape:
        raise DimensionError(f"series shape {x.shape} != mask shape {mask.keep.shape}")
    spectrum = np.fft.fftshift(np.fft.fft2(x.data, axes=(0, 1), norm="ortho"), axes=(0, 1))
    spectrum = spectrum * mask.keep
    return KSpaceData(spectrum, mask)


def adjoint_undersample(d: KSpaceData) -> ImageSeries:
    """Inverse unitary 2-D FFT of the zero-filled samples (per frame)."""
    img = np.fft.ifft2(np.fft.ifftshift(d.samples, axes=(0, 1)), axes=(0, 1), norm="ortho")
    return ImageSeries(img)


def make_variable_density_mask(shape, rate, seed) -> SamplingMask:
    """Per-frame variable-density selection of readout lines (columns).

    Line j is drawn with probability proportional to
    ``(1 + |k_j| / k_max) ** -40``; a contiguous low-frequency band around
    the center column is always kept.  Lines are re-drawn independently for
    each frame from a generator seeded with ``seed``.
    """
    n1, n2, t = shape
    if rate <= 0:
        raise ConfigError(f"rate must be positive, got {rate}")
    if rate == 1:
        return SamplingMask(np.ones(shape, dtype=np.uint8), 1.0)
    n_keep = int(round(n2 / rate))
    if n_keep < 1 or n_keep > n2:
        raise ConfigError(f"rate {rate} infeasible for {n2} lines")
    # Keep a couple of randomly drawn lines even at high rates so aliasing
    # stays temporally incoherent; the band never exceeds the keep budget.
    n_center = min(CENTER_LINES, max(1, n_keep - 2))
    center_start = n2 // 2 - n_center // 2
    band = np.arange(center_start, center_start + n_center)
    others = np.setdiff1d(np.arange(n2), band)
    k = np.abs(others - n2 // 2)
    # Steep falloff keeps the random draws near the low-frequency band, which
    # turns residual aliasing into gentle ripples instead of sharp far-field
    # ghosts that destabilize frame-to-frame centroid tracking.
    weights = (1.0 + k / (n2 / 2.0)) ** -40
    weights = weights / weights.sum()

    rng = np.random.default_rng(seed)
    keep = np.zeros(shape, dtype=np.uint8)
    keep[:, band, :] = 1
    n_random = n_keep - n_center
    for f in range(t):
        if n_random > 0:
            chosen = rng.choice(others, size=n_random, replace=False, p=weights)
            keep[:, chosen, f] = 1
    return SamplingMask(keep, rate)


def svt(m, threshold):
    """Singular-value thresholding: soft-threshold the spectrum of ``m``."""
    out, _ = svt_with_nuclear_norm(m, threshold)
    return out


def svt_with_nuclear_norm(m, threshold):
    """As :func:`svt` but also returns the nuclear norm of the result.

    The nuclear norm comes for free from the SVD already computed, which the
    solvers use to log objective values without a second decomposition.
    """
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    try:
        u, sigma, vh = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise DivergenceError(f"SVD failed to converge: {exc}") from exc
    shrunk = np.maximum(sigma - threshold, 0.0)
    return (u * shrunk) @ vh, float(shrunk.sum())


def soft_threshold(m, threshold):
    """Entrywise shrinkage; complex entries shrink in magnitude, keeping phase."""
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    m = np.asarray(m)
    if np.iscomplexobj(m):
        mag = np.abs(m)
        scale = np.zeros_like(mag)
        np.divide(np.maximum(mag - threshold, 0.0), mag, out=scale, where=mag > 0)
        return m * scale
    return np.sign(m) * np.maximum(np.abs(m) - threshold, 0.0)
