"""Stage 2: split the sparse component into a periodic part (breathing) and
an aperiodic residual (contrast passage).

The workhorse is the orthogonal projection onto p-periodic sequences: each
residue class modulo p is replaced by its mean.  Periods are selected
greedily, best first, scoring candidates by projection energy per unit
period, and the selection is shared across all pixels: breathing is
spatially coherent, so one period vote is taken on spatially aggregated
energy rather than per pixel.

Each pixel's temporal mean is excluded from the search.  A constant lies in
every p-periodic subspace, so any static offset left in the sparse
component (for example singular-value shrinkage residue) would otherwise
dominate the vote while carrying no motion information; the mean stays in
the aperiodic remainder.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import ImageSeries
from .errors import ConfigError, DimensionError


def project_periodic(row, p):
    """Orthogonally project sequences onto the p-periodic subspace.

    Every entry is replaced by the mean of its residue class modulo p, taken
    over the class's actual members (classes differ in size by one when p
    does not divide the length).  Operates on the last axis, so a stack of
    rows is projected in one call.

    Parameters
    ----------
    row : (..., t) array_like
        Real-valued sequences.
    p : int
        Candidate period, 1 <= p <= t.

    Returns
    -------
    (..., t) float64 ndarray
    """
    row = np.asarray(row, dtype=np.float64)
    t = row.shape[-1]
    if not 1 <= p <= t:
        raise DimensionError(f"period must be in [1, {t}], got {p}")
    out = np.empty_like(row)
    for r in range(p):
        out[..., r::p] = row[..., r::p].mean(axis=-1, keepdims=True)
    return out


@dataclass
class PeriodicProjector:
    """Projection onto p-periodic sequences of a fixed length, as an operator."""

    period: int
    length: int

    def __post_init__(self):
        if not 1 <= self.period <= self.length:
            raise DimensionError(
                f"period must be in [1, {self.length}], got {self.period}")

    def __call__(self, row):
        row = np.asarray(row, dtype=np.float64)
        if row.shape[-1] != self.length:
            raise DimensionError(
                f"expected length {self.length}, got {row.shape[-1]}")
        return project_periodic(row, self.period)


@dataclass
class PeriodicSplit:
    """Additive split S = P + Q with the selected periods.

    ``periods`` lists (period, projection energy) in selection order; on
    spatially coherent input the energies come out non-increasing.
    """

    p: ImageSeries
    q: ImageSeries
    periods: list = field(default_factory=list)

    def __post_init__(self):
        if self.p.shape != self.q.shape:
            raise DimensionError(
                f"P shape {self.p.shape} != Q shape {self.q.shape}")
        t = self.p.n_frames
        for period, _ in self.periods:
            if not 2 <= period <= t // 2:
                raise DimensionError(
                    f"selected period {period} outside [2, {t // 2}]")

    def combined(self):
        """Reassemble the input sparse component P + Q."""
        return ImageSeries(self.p.data + self.q.data,
                           self.p.pixel_spacing, self.p.frame_interval)


def _check_split_params(m, min_energy_frac):
    if m < 1:
        raise ConfigError(f"m must be >= 1, got {m}")
    if not 0.0 <= min_energy_frac < 1.0:
        raise ConfigError(
            f"min_energy_frac must be in [0, 1), got {min_energy_frac}")


def m_best_split(s_row, m, min_energy_frac):
    """Greedy m-best periodicity transform of a single sequence.

    The sequence mean is set aside first (it is trivially periodic and ends
    up in the residual).  Then, up to ``m`` times: over candidate periods p
    in [2, t//2], pick the one maximizing ||projection||^2 / p on the
    current residual; stop early if the winner's projection energy falls
    below ``min_energy_frac`` times the mean-free input energy; otherwise
    subtract the projection and record (p, energy).

    Returns
    -------
    (periodic, residual, periods)
        ``periodic + residual`` equals the input exactly; ``periods`` is the
        list of (period, energy) in selection order.
    """
    _check_split_params(m, min_energy_frac)
    row = np.asarray(s_row, dtype=np.float64)
    periodic, periods = _greedy_periodic(row[None, :], m, min_energy_frac)
    periodic = periodic[0]
    return periodic, row - periodic, periods


def _greedy_periodic(rows, m, min_energy_frac):
    """Shared m-best loop over a stack of rows with one aggregated vote.

    Returns (periodic part of ``rows``, list of (period, energy)).  The
    per-row means are removed before the search and do not contribute to
    the periodic part.
    """
    means = rows.mean(axis=-1, keepdims=True)
    residual = rows - means
    total = float((residual * residual).sum())
    periodic = np.zeros_like(rows)
    periods = []
    if total == 0.0:
        return periodic, periods
    for _ in range(m):
        choice = _best_period(residual)
        if choice is None:
            break
        p, proj, energy = choice
        if energy < min_energy_frac * total:
            break
        residual = residual - proj
        periodic = periodic + proj
        periods.append((p, energy))
    return periodic, periods


def _best_period(residual):
    """Highest energy-per-period candidate on the last axis, or None if the
    sequence is too short to hold any candidate (t < 4)."""
    t = residual.shape[-1]
    best = None
    for p in range(2, t // 2 + 1):
        proj = project_periodic(residual, p)
        energy = float((proj * proj).sum())
        if best is None or energy / p > best[0]:
            best = (energy / p, p, proj, energy)
    if best is None:
        return None
    _, p, proj, energy = best
    return p, proj, energy


def split_sparse_component(s: ImageSeries, m=3, min_energy_frac=0.05):
    """Split a sparse-component series into periodic P and aperiodic Q.

    Periods are chosen once for the whole series by scoring candidates on
    energy aggregated over all pixels, then every pixel's time course is
    projected onto the chosen periods.  Per-pixel temporal means never enter
    the periodic part; they remain in Q.

    Parameters
    ----------
    s : ImageSeries
        Real-valued sparse component (magnitude).
    m : int
        Maximum number of periods to extract.
    min_energy_frac : float
        Stop once the best candidate's aggregated energy drops below this
        fraction of the input's aggregated mean-free energy.
    """
    _check_split_params(m, min_energy_frac)
    if np.iscomplexobj(s.data):
        raise DimensionError("sparse component must be real-valued; "
                             "take the magnitude first")
    if s.n_frames < 4:
        raise DimensionError(
            f"need at least 4 frames to search periods, got {s.n_frames}")
    rows = np.asarray(s.casorati(), dtype=np.float64)
    periodic, periods = _greedy_periodic(rows, m, min_energy_frac)
    spatial = s.shape[:2]
    p_series = ImageSeries.from_casorati(periodic, spatial, like=s)
    q_series = ImageSeries.from_casorati(rows - periodic, spatial, like=s)
    return PeriodicSplit(p=p_series, q=q_series, periods=periods)
