"""Container types, undersampling operators, and proximal primitives."""

import numpy as np
import pytest

from perfmoco.core import (ImageSeries, KSpaceData, SamplingMask,
                           adjoint_undersample, forward_undersample,
                           make_variable_density_mask, soft_threshold, svt,
                           svt_with_nuclear_norm)
from perfmoco.errors import ConfigError, DimensionError


def random_series(seed, shape=(6, 5, 4), complex_valued=True):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=shape)
    if complex_valued:
        data = data + 1j * rng.normal(size=shape)
    return ImageSeries(data)


def test_image_series_requires_three_axes():
    with pytest.raises(DimensionError):
        ImageSeries(np.zeros((4, 4)))
    with pytest.raises(DimensionError):
        ImageSeries(np.zeros((4, 4, 1)))
    with pytest.raises(ValueError):
        ImageSeries(np.full((4, 4, 4), np.nan))


def test_casorati_roundtrip():
    x = random_series(0)
    mat = x.casorati()
    assert mat.shape == (30, 4)
    # column j is frame j flattened row-major
    for j in range(x.n_frames):
        assert np.array_equal(mat[:, j], x.data[:, :, j].ravel())
    back = ImageSeries.from_casorati(mat, (6, 5), like=x)
    assert np.array_equal(back.data, x.data)
    assert back.pixel_spacing == x.pixel_spacing
    with pytest.raises(DimensionError):
        ImageSeries.from_casorati(mat, (7, 5))


def test_copy_is_independent():
    x = random_series(1)
    y = x.copy()
    y.data[0, 0, 0] = 99.0
    assert x.data[0, 0, 0] != 99.0
    assert np.all(x.magnitude().data >= 0)


def test_sampling_mask_validation():
    keep = np.zeros((4, 8, 3), dtype=np.uint8)
    keep[:, ::2, :] = 1
    mask = SamplingMask(keep, 2.0)
    assert mask.achieved_rate == 2.0
    with pytest.raises(ValueError):
        SamplingMask(keep * 2, 2.0)
    with pytest.raises(ConfigError):
        SamplingMask(keep, 7.0)  # achieved 2, nowhere near 7


def test_kspace_data_validation():
    keep = np.zeros((4, 8, 3), dtype=np.uint8)
    keep[:, ::2, :] = 1
    mask = SamplingMask(keep, 2.0)
    samples = (keep * (1.0 + 1.0j)).astype(np.complex128)
    KSpaceData(samples, mask)  # zeros off-mask: fine
    bad = samples.copy()
    bad[0, 1, 0] = 1.0  # unsampled location
    with pytest.raises(ValueError):
        KSpaceData(bad, mask)
    with pytest.raises(DimensionError):
        KSpaceData(samples[:, :, :2], mask)


def test_variable_density_mask_structure():
    shape = (32, 32, 6)
    mask = make_variable_density_mask(shape, 4, seed=0)
    keep = mask.keep
    assert keep.shape == shape and keep.dtype == np.uint8
    # selection is per readout line: constant along rows
    assert np.all(keep == keep[:1, :, :])
    # low-frequency band around the center column always sampled
    assert np.all(keep[:, 16, :] == 1)
    assert abs(mask.achieved_rate - 4) <= 0.4
    # per-frame redraw: frames are not all identical
    cols = keep[0]
    assert any(not np.array_equal(cols[:, 0], cols[:, f]) for f in range(1, 6))


def test_variable_density_mask_determinism_and_rate_one():
    shape = (16, 16, 4)
    a = make_variable_density_mask(shape, 2, seed=3)
    b = make_variable_density_mask(shape, 2, seed=3)
    c = make_variable_density_mask(shape, 2, seed=4)
    assert np.array_equal(a.keep, b.keep)
    assert not np.array_equal(a.keep, c.keep)
    full = make_variable_density_mask(shape, 1, seed=0)
    assert np.all(full.keep == 1)
    with pytest.raises(ConfigError):
        make_variable_density_mask(shape, 0, seed=0)


def test_fully_sampled_roundtrip():
    x = random_series(2, shape=(8, 8, 3))
    mask = SamplingMask(np.ones((8, 8, 3), dtype=np.uint8), 1.0)
    back = adjoint_undersample(forward_undersample(x, mask))
    err = np.linalg.norm(back.data - x.data) / np.linalg.norm(x.data)
    assert err <= 1e-12


def test_adjoint_inner_product_identity():
    # <E x, d> == <x, E^H d> for the masked Fourier operator
    rng = np.random.default_rng(5)
    shape = (8, 6, 4)
    x = ImageSeries(rng.normal(size=shape) + 1j * rng.normal(size=shape))
    keep = (rng.random(shape) < 0.5).astype(np.uint8)
    keep[:, 3, :] = 1  # keep at least one full line
    mask = SamplingMask(keep, shape[1] * shape[0] * shape[2] / keep.sum())
    d_arr = (rng.normal(size=shape) + 1j * rng.normal(size=shape)) * keep
    d = KSpaceData(d_arr, mask)
    ex = forward_undersample(x, mask)
    ehd = adjoint_undersample(d)
    lhs = np.vdot(ex.samples, d.samples)
    rhs = np.vdot(x.data, ehd.data)
    assert abs(lhs - rhs) / abs(lhs) <= 1e-10


def test_forward_adjoint_forward_projection():
    x = random_series(6, shape=(8, 8, 3))
    mask = make_variable_density_mask((8, 8, 3), 2, seed=1)
    once = forward_undersample(x, mask)
    twice = forward_undersample(adjoint_undersample(once), mask)
    assert np.allclose(once.samples, twice.samples, atol=1e-12 * np.abs(once.samples).max())


def test_svt_matches_direct_svd_shrinkage():
    rng = np.random.default_rng(7)
    m = rng.normal(size=(20, 6)) + 1j * rng.normal(size=(20, 6))
    thr = 1.5
    u, sing, vh = np.linalg.svd(m, full_matrices=False)
    expected = (u * np.maximum(sing - thr, 0.0)) @ vh
    out = svt(m, thr)
    assert np.allclose(out, expected, atol=1e-10)
    out2, nuc = svt_with_nuclear_norm(m, thr)
    assert np.allclose(out2, expected, atol=1e-10)
    assert np.isclose(nuc, np.maximum(sing - thr, 0.0).sum())
    # huge threshold annihilates the matrix
    assert np.allclose(svt(m, sing[0] + 1.0), 0.0)


def test_soft_threshold_formula():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(5, 7))
    thr = 0.4
    expected = np.sign(x) * np.maximum(np.abs(x) - thr, 0.0)
    assert np.allclose(soft_threshold(x, thr), expected, atol=1e-12)
    # complex input keeps the phase
    z = rng.normal(size=(5, 7)) + 1j * rng.normal(size=(5, 7))
    out = soft_threshold(z, thr)
    mag = np.maximum(np.abs(z) - thr, 0.0)
    assert np.allclose(np.abs(out), mag, atol=1e-12)
    nz = np.abs(z) > thr
    assert np.allclose(np.angle(out[nz]), np.angle(z[nz]), atol=1e-12)
    assert np.all(out[~nz] == 0)
