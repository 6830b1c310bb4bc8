"""Synthetic free-breathing contrast-enhanced perfusion phantoms.

The scene is a soft-edged ellipse composition: a body oval, a right
ventricular pool, a left ventricular pool, and a myocardial annulus around
the LV pool.  Compartment intensities follow gamma-variate bolus curves
with staggered arrivals (RV first, then LV, then myocardium), breathing is
a rigid sinusoidal translation of the whole scene, and complex Gaussian
noise is added at a chosen linear SNR.  The generator returns both the
noisy series and a ground-truth bundle so every later stage has an oracle.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .core import ImageSeries, forward_undersample, make_variable_density_mask
from .errors import ConfigError, DimensionError
from .evaluation import SectorDefinition, segment_sectors
from .kernels import bilinear_warp

SUPPORTED_RATES = (1, 2, 4, 8, 12)


@dataclass
class Ellipse:
    """Axis-aligned ellipse: center (row, col) and semi-axes in pixels."""

    center: tuple
    semi_axes: tuple

    def mask(self, shape):
        rr, cc = np.mgrid[0:shape[0], 0:shape[1]].astype(np.float64)
        dr = (rr - self.center[0]) / self.semi_axes[0]
        dc = (cc - self.center[1]) / self.semi_axes[1]
        return dr * dr + dc * dc <= 1.0

    def contains(self, other):
        """True if ``other`` lies inside this ellipse.  Uses the bounding-box
        sufficient condition, conservative but exact enough for layout checks."""
        dr = abs(other.center[0] - self.center[0]) + other.semi_axes[0]
        dc = abs(other.center[1] - self.center[1]) + other.semi_axes[1]
        return dr <= self.semi_axes[0] and dc <= self.semi_axes[1]


@dataclass
class BolusCurve:
    """Gamma-variate enhancement: amp * (d/(k*theta))^k * exp(k - d/theta)
    for d = frame - arrival >= 0, zero before arrival; peaks at amp."""

    arrival: float
    amplitude: float
    k: float = 3.0
    theta: float = 1.5

    def __call__(self, frames):
        frames = np.asarray(frames, dtype=np.float64)
        d = frames - self.arrival
        out = np.zeros_like(d)
        pos = d > 0
        dp = d[pos]
        out[pos] = (self.amplitude * (dp / (self.k * self.theta)) ** self.k
                    * np.exp(self.k - dp / self.theta))
        return out


@dataclass
class Compartment:
    ellipse: Ellipse
    baseline: float
    bolus: BolusCurve = None

    def intensity(self, frames):
        values = np.full(np.shape(frames), self.baseline, dtype=np.float64)
        if self.bolus is not None:
            values = values + self.bolus(frames)
        return values


def _default_geometry(n1, n2, t):
    """Compartments scaled from the 64x64 reference layout."""
    s = min(n1, n2) / 64.0
    lv = (0.5 * n1, 0.625 * n2)
    # RV sits well clear of the LV tracking ROI so centroid tracking never
    # locks onto it during the first-pass bolus
    rv = (0.5 * n1, 0.22 * n2)
    return {
        "body": Compartment(
            Ellipse((0.5 * n1, 0.5 * n2), (0.42 * n1, 0.46 * n2)),
            baseline=0.2),
        "rv": Compartment(
            Ellipse(rv, (7.0 * s, 7.0 * s)), baseline=0.45,
            bolus=BolusCurve(arrival=3.0 * t / 32.0, amplitude=1.2, theta=1.2)),
        "myo": Compartment(
            Ellipse(lv, (12.0 * s, 12.0 * s)), baseline=0.35,
            bolus=BolusCurve(arrival=11.0 * t / 32.0, amplitude=0.5, theta=4.0)),
        "lv": Compartment(
            Ellipse(lv, (6.0 * s, 6.0 * s)), baseline=0.45,
            bolus=BolusCurve(arrival=7.0 * t / 32.0, amplitude=1.2, theta=1.5)),
    }


@dataclass
class PhantomSpec:
    shape: tuple = (224, 192, 32)
    pixel_mm: tuple = (2.0, 2.0)
    geometry: dict = None
    myo_inner_frac: float = 0.75  # annulus inner radius / outer radius
    respiration_amplitude: float = 3.0
    respiration_period: int = 5
    respiration_axis: int = 0
    snr: float = 30.0
    edge_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        n1, n2, t = self.shape
        if n1 < 8 or n2 < 8 or t < 4:
            raise ConfigError(f"phantom shape too small: {self.shape}")
        if self.geometry is None:
            self.geometry = _default_geometry(n1, n2, t)
        for name in ("body", "rv", "myo", "lv"):
            if name not in self.geometry:
                raise ConfigError(f"geometry is missing compartment '{name}'")
        if self.respiration_amplitude < 0:
            raise ConfigError("respiration amplitude must be >= 0")
        if not 3 <= self.respiration_period <= t // 2:
            raise ConfigError(
                f"respiration period must be in [3, {t // 2}], "
                f"got {self.respiration_period}")
        if self.respiration_axis not in (0, 1):
            raise ConfigError("respiration axis must be 0 (rows) or 1 (cols)")
        if self.snr <= 0:
            raise ConfigError(f"snr must be > 0, got {self.snr}")
        lv = self.geometry["lv"].ellipse
        myo = self.geometry["myo"].ellipse
        body = self.geometry["body"].ellipse
        inner = min(myo.semi_axes) * self.myo_inner_frac
        if max(lv.semi_axes) >= inner:
            raise ConfigError("LV pool must fit inside the myocardium annulus")
        if not body.contains(myo) or not body.contains(self.geometry["rv"].ellipse):
            raise ConfigError("heart compartments must fit inside the body")


def desk_spec(**overrides):
    """Small fast preset used by the test suite: 64x64x32."""
    return PhantomSpec(shape=(64, 64, 32), **overrides)


def paper_spec(**overrides):
    """Full-size preset: 224x192x32 at 2mm pixels."""
    return PhantomSpec(shape=(224, 192, 32), **overrides)


@dataclass
class PhantomTruth:
    """Ground truth for a generated phantom.

    ``clean`` is the motion-free noiseless series; ``moving_clean`` is the
    same scene under the breathing translation (still noiseless), the right
    reference for reconstruction fidelity.  ``trajectory`` holds the object
    displacement (d_row, d_col) of every frame in pixels.
    """

    clean: ImageSeries
    moving_clean: ImageSeries
    trajectory: np.ndarray
    compartment_curves: dict
    sector_curves: np.ndarray
    sector_definition: SectorDefinition
    lv_roi: tuple  # (row, col, radius) for centroid tracking

    def __post_init__(self):
        if self.trajectory.shape != (self.clean.n_frames, 2):
            raise DimensionError(
                f"trajectory must have shape ({self.clean.n_frames}, 2)")
        for curve in self.compartment_curves.values():
            if np.any(np.asarray(curve) < 0):
                raise DimensionError("compartment curves must be non-negative")


def _render_static(spec, frame_indices):
    """Motion-free scene for every frame: [n1, n2, t] float64."""
    n1, n2, t = spec.shape
    geo = spec.geometry
    masks = {name: comp.ellipse.mask((n1, n2)) for name, comp in geo.items()}
    inner = Ellipse(geo["myo"].ellipse.center,
                    tuple(a * spec.myo_inner_frac
                          for a in geo["myo"].ellipse.semi_axes))
    masks["myo"] = masks["myo"] & ~inner.mask((n1, n2))
    curves = {name: comp.intensity(frame_indices)
              for name, comp in geo.items()}
    scene = np.zeros((n1, n2, t))
    # paint order: body under heart structures, pools over the annulus
    for name in ("body", "rv", "myo", "lv"):
        scene[masks[name], :] = curves[name][None, :]
    if spec.edge_sigma > 0:
        scene = gaussian_filter(scene, (spec.edge_sigma, spec.edge_sigma, 0))
    return scene, masks, curves


def sector_definition_for(spec: PhantomSpec):
    """Six-sector geometry derived from the phantom layout: sectors ring the
    myocardium annulus, with the septum ray pointing at the RV."""
    geo = spec.geometry
    lv = np.asarray(geo["lv"].ellipse.center)
    rv = np.asarray(geo["rv"].ellipse.center)
    outer = float(min(geo["myo"].ellipse.semi_axes))
    inner = outer * spec.myo_inner_frac
    direction = rv - lv
    direction = direction / np.linalg.norm(direction)
    mid = lv + direction * 0.5 * (inner + outer)
    return SectorDefinition(lv_center=tuple(lv), septum_mid=tuple(mid),
                            inner_radius=inner, outer_radius=outer)


def generate_phantom(spec: PhantomSpec):
    """Render the phantom; returns (noisy complex series, PhantomTruth)."""
    n1, n2, t = spec.shape
    frames = np.arange(t)
    scene, _, curves = _render_static(spec, frames)

    offsets = spec.respiration_amplitude * np.sin(
        2.0 * np.pi * frames / spec.respiration_period)
    trajectory = np.zeros((t, 2))
    trajectory[:, spec.respiration_axis] = offsets

    moving = np.empty_like(scene)
    for j in range(t):
        # object shifted by d: sample the static scene at x - d
        u_row = np.full((n1, n2), -trajectory[j, 0])
        u_col = np.full((n1, n2), -trajectory[j, 1])
        moving[:, :, j] = bilinear_warp(scene[:, :, j], u_row, u_col)

    rng = np.random.default_rng(spec.seed)
    if math.isinf(spec.snr):
        noisy = moving.astype(np.complex128)
    else:
        sigma = float(np.abs(moving).mean()) / spec.snr
        noise = rng.normal(scale=sigma / math.sqrt(2.0), size=(n1, n2, t, 2))
        noisy = moving + noise[..., 0] + 1j * noise[..., 1]

    sector_def = sector_definition_for(spec)
    labels = segment_sectors(sector_def, (n1, n2))
    sector_curves = np.empty((6, t))
    for s in range(1, 7):
        region = labels == s
        if not region.any():
            raise ConfigError(f"sector {s} contains no pixels")
        sector_curves[s - 1] = scene[region, :].mean(axis=0)

    # ROI wide enough to hold the whole pool-plus-annulus complex at peak
    # displacement; clipping a concentric structure would bias the centroid
    lv_ellipse = spec.geometry["lv"].ellipse
    roi_radius = (min(spec.geometry["myo"].ellipse.semi_axes)
                  + spec.respiration_amplitude + 2.0)
    truth = PhantomTruth(
        clean=ImageSeries(scene, spec.pixel_mm),
        moving_clean=ImageSeries(moving, spec.pixel_mm),
        trajectory=trajectory,
        compartment_curves={k: v.copy() for k, v in curves.items()},
        sector_curves=sector_curves,
        sector_definition=sector_def,
        lv_roi=(lv_ellipse.center[0], lv_ellipse.center[1], roi_radius),
    )
    return ImageSeries(noisy.astype(np.complex128), spec.pixel_mm), truth


def undersample_phantom(series: ImageSeries, rate, seed):
    """Variable-density Cartesian undersampling at an accepted rate."""
    if rate not in SUPPORTED_RATES:
        raise ConfigError(
            f"unsupported acceleration rate {rate}, expected one of "
            f"{SUPPORTED_RATES}")
    mask = make_variable_density_mask(series.shape, rate, seed)
    return forward_undersample(series, mask)


def truth_to_dict(spec: PhantomSpec, truth: PhantomTruth):
    """JSON-ready summary: trajectory, curves, and geometry."""
    sd = truth.sector_definition
    return {
        "shape": list(spec.shape),
        "pixel_mm": list(spec.pixel_mm),
        "respiration": {
            "amplitude_px": spec.respiration_amplitude,
            "period_frames": spec.respiration_period,
            "axis": spec.respiration_axis,
        },
        "snr": spec.snr,
        "seed": spec.seed,
        "trajectory": [list(map(float, row)) for row in truth.trajectory],
        "compartment_curves": {
            name: list(map(float, curve))
            for name, curve in sorted(truth.compartment_curves.items())
        },
        "sector_curves": [list(map(float, row)) for row in truth.sector_curves],
        "sectors": {
            "lv_center": list(map(float, sd.lv_center)),
            "septum_mid": list(map(float, sd.septum_mid)),
            "inner_radius": float(sd.inner_radius),
            "outer_radius": float(sd.outer_radius),
        },
        "lv_roi": list(map(float, truth.lv_roi)),
    }
