"""Quantitative evaluation: normalized RMSE, six-sector myocardial
time-intensity curves, and residual-motion tracking via LV pool centroids.

The sector layout follows the standard mid-ventricular convention: six
60-degree wedges of an annulus centered on the LV, numbered clockwise
starting from the ray through the mid-septum.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np

from .core import ImageSeries
from .errors import ConfigError, DimensionError, TrackingError

N_SECTORS = 6


@dataclass
class SectorDefinition:
    """Annulus geometry for sector segmentation, in pixel coordinates."""

    lv_center: tuple
    septum_mid: tuple
    inner_radius: float
    outer_radius: float

    def __post_init__(self):
        if not 0 < self.inner_radius < self.outer_radius:
            raise ConfigError(
                f"need 0 < inner_radius < outer_radius, got "
                f"{self.inner_radius} and {self.outer_radius}")
        if tuple(self.lv_center) == tuple(self.septum_mid):
            raise ConfigError("septum_mid must differ from lv_center")


@dataclass
class TimeIntensityCurves:
    """Per-sector mean intensity over time: values [6, t]."""

    values: np.ndarray
    pixel_counts: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.pixel_counts = np.asarray(self.pixel_counts, dtype=np.int64)
        if self.values.ndim != 2 or self.values.shape[0] != N_SECTORS:
            raise DimensionError(
                f"curve values must be [6, t], got {self.values.shape}")
        if self.pixel_counts.shape != (N_SECTORS,):
            raise DimensionError("pixel_counts must have 6 entries")
        if not np.isfinite(self.values).all():
            raise DimensionError("curve values must be finite")

    @property
    def n_frames(self):
        return self.values.shape[1]


def _as_array(x):
    return x.data if isinstance(x, ImageSeries) else np.asarray(x)


def rmse(x, reference):
    """Root-mean-square error normalized by the reference peak magnitude."""
    a = _as_array(x)
    ref = _as_array(reference)
    if a.shape != ref.shape:
        raise DimensionError(
            f"shape mismatch: {a.shape} vs reference {ref.shape}")
    peak = float(np.abs(ref).max())
    if peak == 0.0:
        raise DimensionError("reference is identically zero")
    return float(np.sqrt(np.mean(np.abs(a - ref) ** 2)) / peak)


def segment_sectors(sectors: SectorDefinition, shape):
    """Label map [n1, n2] with sectors 1..6, 0 outside the annulus.

    Angles are measured clockwise (in displayed image orientation, rows
    increasing downward) from the lv_center -> septum_mid ray; the first
    60-degree wedge is sector 1.
    """
    n1, n2 = shape
    cr, cc = sectors.lv_center
    rr, cc_grid = np.mgrid[0:n1, 0:n2].astype(np.float64)
    dr = rr - cr
    dc = cc_grid - cc
    radius = np.hypot(dr, dc)
    annulus = (radius >= sectors.inner_radius) & (radius <= sectors.outer_radius)

    theta0 = np.arctan2(sectors.septum_mid[0] - cr, sectors.septum_mid[1] - cc)
    # with rows pointing down, increasing atan2(drow, dcol) is clockwise
    delta = np.mod(np.arctan2(dr, dc) - theta0, 2.0 * np.pi)
    labels = 1 + (delta / (np.pi / 3.0)).astype(np.int64)
    labels[labels == 7] = 1  # delta rounded up to exactly 2*pi
    labels = labels.astype(np.uint8)
    labels[~annulus] = 0
    return labels


def extract_curves(series: ImageSeries, sectors: SectorDefinition):
    """Mean intensity per sector per frame.  Complex input is reduced to its
    magnitude first.  Raises if any sector has no pixels."""
    data = series.data
    if np.iscomplexobj(data):
        data = np.abs(data)
    labels = segment_sectors(sectors, data.shape[:2])
    values = np.empty((N_SECTORS, data.shape[2]))
    counts = np.empty(N_SECTORS, dtype=np.int64)
    for s in range(1, N_SECTORS + 1):
        region = labels == s
        counts[s - 1] = int(region.sum())
        if counts[s - 1] == 0:
            raise DimensionError(
                f"sector {s} contains no pixels for shape {data.shape[:2]}")
        values[s - 1] = data[region, :].mean(axis=0)
    return TimeIntensityCurves(values, counts)


def _roi_mask(shape, roi):
    row, col, radius = roi
    if radius <= 0:
        raise ConfigError(f"ROI radius must be > 0, got {radius}")
    rr, cc = np.mgrid[0:shape[0], 0:shape[1]].astype(np.float64)
    return np.hypot(rr - row, cc - col) <= radius


def residual_motion(series: ImageSeries, trajectory, roi):
    """Residual in-plane motion of the LV pool, in pixels.

    Tracks the intensity-weighted centroid of bright pixels (>= 50% of the
    per-frame maximum) inside a fixed circular ROI, and reports the mean and
    maximum centroid deviation from the frame where the true trajectory is
    smallest.  ``roi`` is (row, col, radius).
    """
    trajectory = np.asarray(trajectory, dtype=np.float64)
    if trajectory.shape != (series.n_frames, 2):
        raise DimensionError(
            f"trajectory must be [{series.n_frames}, 2], got {trajectory.shape}")
    data = np.abs(series.data)
    mask = _roi_mask(data.shape[:2], roi)
    if not mask.any():
        raise TrackingError("ROI covers no pixels")
    rows, cols = np.nonzero(mask)

    centroids = np.empty((series.n_frames, 2))
    for j in range(series.n_frames):
        vals = data[rows, cols, j]
        peak = vals.max()
        if peak <= 0:
            raise TrackingError(f"frame {j}: ROI is identically zero")
        sel = vals >= 0.5 * peak
        weights = vals[sel]
        total = weights.sum()
        if total <= 0:
            raise TrackingError(f"frame {j}: no trackable pixels in ROI")
        centroids[j, 0] = (weights * rows[sel]).sum() / total
        centroids[j, 1] = (weights * cols[sel]).sum() / total

    ref = int(np.argmin(np.linalg.norm(trajectory, axis=1)))
    deviation = np.linalg.norm(centroids - centroids[ref], axis=1)
    return float(deviation.mean()), float(deviation.max())


def write_curves_csv(path, curves: TimeIntensityCurves):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame"] + [f"sector{s}" for s in range(1, 7)])
        for j in range(curves.n_frames):
            writer.writerow([j] + [repr(float(v)) for v in curves.values[:, j]])


def write_metrics_json(path, metrics):
    with open(path, "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
