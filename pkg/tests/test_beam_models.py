import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qfi3d.beam_models import (
    BeamFactory,
    BeamSpec,
    WindowTooSmallError,
    gaussian_moments,
    gaussian_one_minus_w2,
    gaussian_overlap,
    numeric_overlap,
    sample,
)
from qfi3d.field_grid import GridGeometry, inner, intensity_centroid, second_moment_width


def test_spec_validation():
    with pytest.raises(ValueError):
        BeamSpec.gaussian(-1e-4, 5e-7)
    with pytest.raises(ValueError):
        BeamSpec("gaussian", 1e-4, 5e-7, p=1)
    with pytest.raises(ValueError):
        BeamSpec("hermite", 1e-4, 5e-7)
    with pytest.raises(ValueError):
        BeamSpec.laguerre_gauss(1e-4, 5e-7, -1, 0)
    lg00 = BeamSpec.laguerre_gauss(1e-4, 5e-7, 0, 0)
    assert lg00.is_gaussian


def test_derived_scales(spec):
    assert spec.k == pytest.approx(2 * math.pi / 0.5e-6)
    assert spec.z_r == pytest.approx(math.pi * spec.w0**2 / spec.wavelength)
    assert spec.z_r == pytest.approx(spec.k * spec.w0**2 / 2)


def test_gaussian_sample_pointwise(spec, geometry, gauss):
    x, y = geometry.coords()
    expect = math.sqrt(2 / (math.pi * spec.w0**2)) * np.exp(-(x**2 + y**2) / spec.w0**2)
    assert np.abs(gauss.amplitudes - expect).max() < 1e-12 * expect.max()


def test_displaced_centroid(spec, geometry):
    xe = 0.37 * spec.w0
    xc, yc = intensity_centroid(sample(spec, (xe, 0.0, 0.0), geometry))
    assert abs(xc - xe) < geometry.dx / 2
    assert abs(yc) < geometry.dx / 2


def test_width_at_rayleigh_range(spec):
    geo = GridGeometry.square(256, 8 * spec.w0)
    f = sample(spec, (0.0, 0.0, spec.z_r), geo)
    assert second_moment_width(f) == pytest.approx(math.sqrt(2) * spec.w0, rel=1e-3)


def test_window_too_small_lists_extent(spec):
    geo = GridGeometry.square(64, 2 * spec.w0)
    with pytest.raises(WindowTooSmallError, match="must be at least"):
        sample(spec, (0.0, 0.0, 0.0), geo)


def test_lg_sample_is_normalized(spec, geometry):
    f = sample(BeamSpec.laguerre_gauss(spec.w0, spec.wavelength, 2, -1), (0, 0, 0.3 * spec.z_r), geometry)
    assert inner(f, f).real == pytest.approx(1.0, abs=1e-10)


def test_closed_form_moments(spec):
    m = gaussian_moments(spec)
    assert m.p == pytest.approx(1 / spec.w0)
    assert m.var_g == pytest.approx(1 / (spec.k**2 * spec.w0**4))
    assert 4 * m.var_g == pytest.approx(1 / spec.z_r**2)
    with pytest.raises(ValueError):
        gaussian_moments(BeamSpec.laguerre_gauss(spec.w0, spec.wavelength, 1, 0))


def test_overlap_at_origin(spec):
    ov = gaussian_overlap(spec, 0.0, 0.0)
    assert (ov.w, ov.phi, ov.dw_ds, ov.dw_dt) == (1.0, 0.0, 0.0, 0.0)


def test_overlap_at_two_rayleigh_ranges(spec):
    zr, k = spec.z_r, spec.k
    ov = gaussian_overlap(spec, 0.0, 2 * zr)
    assert ov.w == pytest.approx(1 / math.sqrt(2), rel=1e-14)
    assert ov.phi == pytest.approx(math.pi / 4 - 2 * k * zr, rel=1e-14)


def test_overlap_transverse(spec, geometry, gauss):
    ov = gaussian_overlap(spec, spec.w0, 0.0)
    assert ov.w == pytest.approx(math.exp(-0.5), rel=1e-14)
    grid_w = abs(inner(gauss, sample(spec, (spec.w0, 0.0, 0.0), geometry)))
    assert grid_w == pytest.approx(ov.w, abs=1e-6)


def test_overlap_rejects_lg(spec):
    with pytest.raises(ValueError, match="numeric_overlap"):
        gaussian_overlap(BeamSpec.laguerre_gauss(spec.w0, spec.wavelength, 0, 1), 0.0, 0.0)


def test_one_minus_w2_has_no_cancellation(spec):
    s = 1e-9 * spec.w0
    expect = 2 * spec.k * spec.z_r * s * s / (4 * spec.z_r**2)
    assert gaussian_one_minus_w2(spec, s, 0.0) == pytest.approx(expect, rel=1e-6)


@pytest.mark.parametrize("s_u,t_u", [(0.5, 0.3), (1.0, 0.0), (0.0, 1.0), (2.0, 1.5)])
def test_numeric_overlap_matches_closed_form(spec, s_u, t_u):
    s, t = s_u * spec.w0, t_u * spec.z_r
    fac = BeamFactory(spec, spec.geometry_for([(-s / 2, -t / 2), (s / 2, t / 2)]))
    a = gaussian_overlap(spec, s, t, gauge=spec.k)
    b = numeric_overlap(fac, s, t, 1e-4 * spec.w0, 1e-4 * spec.z_r, gauge=spec.k)
    assert b.w == pytest.approx(a.w, abs=1e-6)
    assert b.phi == pytest.approx(a.phi, abs=1e-6)
    assert b.reliable
    for name, scale in (("dw_ds", 1 / spec.w0), ("dw_dt", 1 / spec.z_r),
                        ("dphi_ds", 1 / spec.w0), ("dphi_dt", 1 / spec.z_r)):
        assert getattr(b, name) == pytest.approx(getattr(a, name), abs=1e-4 * scale)


def test_numeric_overlap_physical_gauge(spec):
    t = 0.4 * spec.z_r
    fac = BeamFactory(spec, spec.geometry_for([(0, -t / 2), (0, t / 2)]))
    a = gaussian_overlap(spec, 0.0, t)
    b = numeric_overlap(fac, 0.0, t, 1e-4 * spec.w0, 1e-4 * spec.z_r)
    assert b.phi == pytest.approx(a.phi, rel=1e-12)
    assert b.dphi_dt == pytest.approx(a.dphi_dt, rel=1e-10)


def test_numeric_overlap_at_origin(spec):
    fac = BeamFactory(spec, spec.default_geometry())
    ov = numeric_overlap(fac, 0.0, 0.0, 1e-4 * spec.w0, 1e-4 * spec.z_r)
    assert ov.w == pytest.approx(1.0, abs=1e-12)
    assert ov.phi == 0.0


def test_numeric_overlap_lg(spec):
    lg = BeamSpec.laguerre_gauss(spec.w0, spec.wavelength, 0, 1)
    s = 0.5 * spec.w0
    fac = BeamFactory(lg, lg.geometry_for([(-s / 2, 0), (s / 2, 0)]))
    ov = numeric_overlap(fac, s, 0.0, 1e-4 * spec.w0, 1e-4 * spec.z_r)
    u = s * s / (2 * spec.w0**2)
    assert ov.w == pytest.approx((1 - u) * math.exp(-u), abs=1e-6)


def test_numeric_overlap_flags_vanishing_w(spec):
    s = 12 * spec.w0
    fac = BeamFactory(spec, spec.geometry_for([(-s / 2, 0), (s / 2, 0)]))
    ov = numeric_overlap(fac, s, 0.0, 1e-4 * spec.w0, 1e-4 * spec.z_r, path_steps=4)
    assert ov.w < 1e-14
    assert not ov.reliable


def test_numeric_overlap_parity(spec):
    s, t = 0.6 * spec.w0, 0.3 * spec.z_r
    fac = BeamFactory(spec, spec.geometry_for([(-s / 2, -t / 2), (s / 2, t / 2)]))
    plus = numeric_overlap(fac, s, t, 1e-4 * spec.w0, 1e-4 * spec.z_r)
    minus = numeric_overlap(fac, -s, t, 1e-4 * spec.w0, 1e-4 * spec.z_r)
    assert plus.w == pytest.approx(minus.w, abs=1e-12)
    on_axis = numeric_overlap(fac, 0.0, t, 1e-4 * spec.w0, 1e-4 * spec.z_r)
    assert abs(on_axis.dw_ds) < 1e-8 / spec.w0


_S = st.floats(-3.0, 3.0)
_T = st.floats(-3.0, 3.0)


@settings(max_examples=60, deadline=None)
@given(s_u=_S, t_u=_T)
def test_analytic_partials_match_differences(s_u, t_u):
    spec = BeamSpec.gaussian(100e-6, 0.5e-6)
    s, t = s_u * spec.w0, t_u * spec.z_r
    hs, ht = 1e-5 * spec.w0, 1e-5 * spec.z_r
    g = spec.k  # remove the carrier so the phase varies on the z_r scale

    def ov(a, b):
        return gaussian_overlap(spec, a, b, gauge=g)

    o = ov(s, t)
    d = {
        "dw_ds": (ov(s + hs, t).w - ov(s - hs, t).w) / (2 * hs),
        "dw_dt": (ov(s, t + ht).w - ov(s, t - ht).w) / (2 * ht),
        "dphi_ds": (ov(s + hs, t).phi - ov(s - hs, t).phi) / (2 * hs),
        "dphi_dt": (ov(s, t + ht).phi - ov(s, t - ht).phi) / (2 * ht),
    }
    scale = {"dw_ds": 1 / spec.w0, "dw_dt": 1 / spec.z_r, "dphi_ds": 1 / spec.w0, "dphi_dt": 1 / spec.z_r}
    for name, fd in d.items():
        assert getattr(o, name) == pytest.approx(fd, rel=1e-8, abs=1e-8 * scale[name])


@settings(max_examples=40, deadline=None)
@given(s_u=_S, t_u=_T)
def test_overlap_magnitude_bounds_and_parity(s_u, t_u):
    spec = BeamSpec.gaussian(100e-6, 0.5e-6)
    a = gaussian_overlap(spec, s_u * spec.w0, t_u * spec.z_r)
    b = gaussian_overlap(spec, -s_u * spec.w0, t_u * spec.z_r)
    assert 0.0 <= a.w <= 1.0
    assert a.w == b.w
    if s_u == 0:
        assert a.dw_ds == 0.0
