"""Demons registration: recovery oracles, series driver, error paths."""

import csv

import numpy as np
import pytest

import perfmoco.registration as reg
from perfmoco.core import ImageSeries
from perfmoco.errors import DimensionError, RegistrationError
from perfmoco.kernels import bilinear_warp
from perfmoco.registration import (DisplacementField, RegistrationConfig,
                                   _register_pair_traced, demons_force,
                                   fields_to_array, recombine, register_pair,
                                   register_series, register_series_traced,
                                   select_reference_frame,
                                   write_registration_csv)


def blob_image(n=64, center=(32.0, 30.0), widths=(9.0, 7.0), peak=2.0):
    rr, cc = np.mgrid[0:n, 0:n].astype(float)
    return peak * np.exp(-(((rr - center[0]) / widths[0]) ** 2
                           + ((cc - center[1]) / widths[1]) ** 2))


def shift_image(image, d_row, d_col):
    """Move the depicted object by (d_row, d_col): sample at x - d."""
    u_r = np.full(image.shape, -float(d_row))
    u_c = np.full(image.shape, -float(d_col))
    return bilinear_warp(image, u_r, u_c)


def test_config_validation():
    with pytest.raises(DimensionError):
        RegistrationConfig(alpha=0.0)
    with pytest.raises(DimensionError):
        RegistrationConfig(sigma_fluid=-1.0)
    with pytest.raises(DimensionError):
        RegistrationConfig(iters=0)
    with pytest.raises(DimensionError):
        RegistrationConfig(reference_strategy="center_frame")


def test_displacement_field_validation_and_apply():
    with pytest.raises(DimensionError):
        DisplacementField(np.zeros((4, 4)))
    with pytest.raises(DimensionError):
        DisplacementField(np.full((4, 4, 2), np.inf))
    with pytest.raises(DimensionError):
        DisplacementField(np.full((4, 4, 2), 9.0))  # beyond image extent
    img = blob_image(16, center=(8.0, 8.0), widths=(3.0, 3.0))
    u = np.zeros((16, 16, 2))
    u[:, :, 0] = 1.0
    out = DisplacementField(u).apply(img)
    assert np.allclose(out[:-1], img[1:], atol=1e-12)


def test_demons_force_wrapper_shape_and_zero():
    img = blob_image(32, center=(16.0, 16.0), widths=(5.0, 5.0))
    force = demons_force(img, img.copy())
    assert force.shape == (32, 32, 2)
    assert np.all(force == 0)
    with pytest.raises(DimensionError):
        demons_force(img, img[:16])


def test_register_pair_identical_images():
    img = blob_image()
    field, warped, trace = _register_pair_traced(img, img.copy(),
                                                 RegistrationConfig())
    assert np.all(field.u == 0)
    assert np.array_equal(warped, img)
    assert len(trace) == 1  # stops after the first (zero) update


def test_register_pair_recovers_translation():
    static = blob_image()
    moving = shift_image(static, 3.0, 0.0)
    cfg = RegistrationConfig()
    field, warped, trace = _register_pair_traced(static, moving, cfg)
    support = static > 0.1 * static.max()
    mean_u = field.u[support].mean(axis=0)
    assert abs(mean_u[0] - 3.0) <= 0.5
    assert abs(mean_u[1]) <= 0.5
    ssd0 = float(((moving - static) ** 2).sum())
    ssd1 = float(((warped - static) ** 2).sum())
    assert ssd1 <= 0.10 * ssd0
    # SSD is non-increasing over the last 10 iterations (1% jitter allowed)
    tail = trace[-10:]
    assert all(tail[i + 1] <= tail[i] * 1.01 for i in range(len(tail) - 1))


def test_register_pair_recovers_smooth_warp():
    n = 64
    static = blob_image(n)
    rr, cc = np.mgrid[0:n, 0:n].astype(float)
    u_true = 2.0 * np.sin(np.pi * rr / n) * np.sin(np.pi * cc / n)
    moving = bilinear_warp(static, -u_true, np.zeros((n, n)))
    field, warped = register_pair(static, moving, RegistrationConfig())
    ssd0 = float(((moving - static) ** 2).sum())
    ssd1 = float(((warped - static) ** 2).sum())
    assert ssd1 <= 0.10 * ssd0


def test_register_series_identity_and_reference_passthrough():
    img = blob_image(32, center=(16.0, 15.0), widths=(5.0, 4.0))
    series = ImageSeries(np.repeat(img[:, :, None], 4, axis=2))
    registered, fields = register_series(series, RegistrationConfig())
    assert np.array_equal(registered.data, series.data)
    assert all(np.all(f.u == 0) for f in fields)
    assert len(fields) == 4


def test_register_series_aligns_translations():
    static = blob_image(48, center=(24.0, 24.0), widths=(7.0, 6.0))
    offsets = [0.0, 2.0, -2.0, 1.0, -1.0, 0.0]
    frames = [shift_image(static, d, 0.0) for d in offsets]
    series = ImageSeries(np.stack(frames, axis=2))
    energy = np.array([d * d for d in offsets])
    cfg = RegistrationConfig()
    registered, fields, traces = register_series_traced(series, cfg,
                                                        motion_energy=energy)
    ref = select_reference_frame(series, cfg, motion_energy=energy)
    assert ref == 0
    assert np.array_equal(registered.data[:, :, ref], series.data[:, :, ref])
    assert np.all(fields[ref].u == 0)
    for j in range(series.n_frames):
        resid = registered.data[:, :, j] - static
        base = series.data[:, :, j] - static
        if offsets[j] != 0.0:
            assert (resid ** 2).sum() <= 0.10 * (base ** 2).sum()
    assert set(traces) == set(range(6))
    # no new intensity extrema beyond 1% of the dynamic range
    rng_in = series.data.max() - series.data.min()
    assert registered.data.max() <= series.data.max() + 0.01 * rng_in
    assert registered.data.min() >= series.data.min() - 0.01 * rng_in


def test_reference_frame_strategies():
    img = blob_image(24, center=(12.0, 12.0), widths=(4.0, 4.0))
    frames = [shift_image(img, d, 0.0) for d in (2.0, 0.0, -2.0)]
    series = ImageSeries(np.stack(frames, axis=2))
    cfg_first = RegistrationConfig(reference_strategy="first_frame")
    assert select_reference_frame(series, cfg_first) == 0
    cfg = RegistrationConfig()
    assert select_reference_frame(series, cfg, motion_energy=[4.0, 0.0, 4.0]) == 1
    # without energies: frame closest to the temporal median image; with the
    # symmetric offsets the unshifted frame wins
    assert select_reference_frame(series, cfg) == 1
    with pytest.raises(DimensionError):
        select_reference_frame(series, cfg, motion_energy=[1.0, 2.0, 3.0, 4.0])


def test_grouped_registration_shares_class_fields():
    static = blob_image(48, center=(24.0, 24.0), widths=(7.0, 6.0))
    t = 8
    offsets = [0.0 if j % 2 == 0 else 2.5 for j in range(t)]
    frames = [shift_image(static, d, 0.0) for d in offsets]
    series = ImageSeries(np.stack(frames, axis=2))
    energy = np.array([d * d for d in offsets])
    cfg = RegistrationConfig(group_period=2)
    registered, fields, traces = register_series_traced(series, cfg,
                                                        motion_energy=energy)
    # one field per residue class, copied to every member frame
    assert np.array_equal(fields[1].u, fields[3].u)
    assert np.array_equal(fields[0].u, fields[2].u)
    assert np.all(fields[0].u == 0)  # reference class
    for j in (1, 3, 5, 7):
        resid = registered.data[:, :, j] - static
        base = series.data[:, :, j] - static
        assert (resid ** 2).sum() <= 0.10 * (base ** 2).sum()


def test_register_series_input_validation():
    with pytest.raises(DimensionError):
        register_series(ImageSeries(np.zeros((8, 8, 4), dtype=complex)),
                        RegistrationConfig())


def test_divergence_guard_raises(monkeypatch):
    # force kernel replaced by a constant outward push: SSD must grow past
    # twice its initial value and trip the guard
    static = blob_image(32, center=(16.0, 16.0), widths=(4.0, 4.0))
    moving = shift_image(static, 2.0, 0.0)

    def runaway_force(fixed, warped, alpha):
        return np.full_like(fixed, -12.0), np.zeros_like(fixed)

    monkeypatch.setattr(reg, "_force_kernel", runaway_force)
    cfg = RegistrationConfig(iters=20, stop_delta=0.0)
    with pytest.raises(RegistrationError) as err:
        register_pair(static, moving, cfg)
    diag = err.value.diagnostics
    assert diag["iteration"] >= 1
    assert diag["ssd"] > 2.0 * diag["ssd_initial"]

    series = ImageSeries(np.stack([static, moving, moving], axis=2))
    with pytest.raises(RegistrationError) as err2:
        register_series(series, cfg, motion_energy=[0.0, 1.0, 1.0])
    assert "frame" in err2.value.diagnostics


def test_recombine():
    rng = np.random.default_rng(0)
    a = ImageSeries(rng.normal(size=(6, 6, 3)))
    b = ImageSeries(rng.normal(size=(6, 6, 3)))
    out = recombine(a, b)
    assert np.allclose(out.data, a.data + b.data, atol=1e-15)
    zero = ImageSeries(np.zeros((6, 6, 3)))
    assert np.array_equal(recombine(a, zero).data, a.data)
    assert np.array_equal(recombine(zero, b).data, b.data)
    with pytest.raises(DimensionError):
        recombine(a, ImageSeries(np.zeros((6, 5, 3))))


def test_fields_to_array_layout():
    fields = [DisplacementField(np.full((4, 5, 2), float(j))) for j in range(3)]
    arr = fields_to_array(fields)
    assert arr.shape == (4, 5, 2, 3)
    assert arr.dtype == np.float32
    assert np.all(arr[:, :, :, 2] == 2.0)


def test_write_registration_csv(tmp_path):
    traces = {0: [0.0], 1: [5.0, 2.5, 1.0]}
    path = tmp_path / "registration.csv"
    write_registration_csv(path, traces)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["frame", "iteration", "ssd"]
    assert len(rows) == 5
    assert rows[2] == ["1", "0", "5.0"]
    assert float(rows[4][2]) == 1.0
