import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qfi3d.beam_models import BeamSpec, sample
from qfi3d.field_grid import (
    FieldGrid,
    GeneratorMoments,
    GridGeometry,
    GridMismatchError,
    apply_G,
    apply_px,
    apply_py,
    displace,
    fit_geometry,
    inner,
    moments,
)


def test_geometry_rejects_odd_or_small_grids():
    with pytest.raises(ValueError):
        GridGeometry(15, 16, 1.0, 1.0)
    with pytest.raises(ValueError):
        GridGeometry(16, 17, 1.0, 1.0)
    with pytest.raises(ValueError):
        GridGeometry(16, 16, 0.0, 1.0)


def test_field_is_read_only(gauss):
    with pytest.raises(ValueError):
        gauss.amplitudes[0, 0] = 1.0


def test_normalized_construction(geometry, spec):
    rng = np.random.default_rng(1)
    a = rng.normal(size=(geometry.ny, geometry.nx)) + 1j * rng.normal(size=(geometry.ny, geometry.nx))
    f = FieldGrid.normalized(a, geometry.dx, geometry.dy, spec.k)
    assert abs(inner(f, f) - 1) < 1e-10
    with pytest.raises(ValueError):
        FieldGrid.normalized(np.zeros_like(a), geometry.dx, geometry.dy, spec.k)


def test_px_norm_of_gaussian(gauss, spec):
    d = apply_px(gauss)
    assert inner(d, d).real == pytest.approx(1 / spec.w0**2, rel=1e-10)


def test_zero_field_maps_to_zero(gauss):
    z = gauss * 0.0
    assert np.all(apply_px(z).amplitudes == 0)
    assert np.all(apply_G(z).amplitudes == 0)


def test_px_of_plane_wave(geometry, spec):
    # a grid frequency, so the periodic window holds it exactly
    q0 = 2 * math.pi * 5 / (geometry.nx * geometry.dx)
    x, _ = geometry.coords()
    f = FieldGrid(np.exp(1j * q0 * x), geometry.dx, geometry.dy, spec.k)
    out = apply_px(f)
    c = geometry.ny // 2, geometry.nx // 2
    assert out.amplitudes[c] == pytest.approx(q0 * f.amplitudes[c], rel=1e-10)


def test_mean_and_variance_of_G(gauss, spec):
    k, w0 = spec.k, spec.w0
    m = moments(gauss)
    assert inner(gauss, apply_G(gauss)).real == pytest.approx(k - 1 / (k * w0**2), rel=1e-14)
    assert m.G == pytest.approx(k - 1 / (k * w0**2), rel=1e-14)
    assert m.var_g == pytest.approx(1 / (k**2 * w0**4), rel=1e-8)


def test_gaussian_moments_values(gauss, spec):
    k, w0 = spec.k, spec.w0
    m = moments(gauss)
    assert m.p == pytest.approx(1e4, rel=1e-10)
    assert m.p_y == pytest.approx(1 / w0, rel=1e-10)
    assert m.g == pytest.approx(math.sqrt(k * k + 2 / (k * k * w0**4) - 2 / w0**2), rel=1e-14)


def test_lg_transverse_moment(spec, geometry):
    lg = sample(BeamSpec.laguerre_gauss(spec.w0, spec.wavelength, 1, 0), (0, 0, 0), geometry)
    assert moments(lg).p ** 2 == pytest.approx(3 / spec.w0**2, rel=1e-8)


def test_inner_of_displaced_gaussians(gauss, spec, geometry):
    xe = 0.7 * spec.w0
    b = sample(spec, (xe, 0.0, 0.0), geometry)
    assert inner(gauss, b) == pytest.approx(math.exp(-xe**2 / (2 * spec.w0**2)), abs=1e-8)


def test_symmetric_field_has_zero_mean_momentum(gauss):
    assert abs(inner(gauss, apply_px(gauss))) < 1e-10
    assert abs(inner(gauss, apply_py(gauss))) < 1e-10


def test_mismatched_grids_raise(gauss, spec):
    other = sample(spec, (0, 0, 0), GridGeometry.square(128, 6 * spec.w0))
    with pytest.raises(GridMismatchError):
        inner(gauss, other)


def test_moments_validate_variance():
    with pytest.raises(ValueError):
        GeneratorMoments(1.0, 1.0, 1.0, 1.0, -1e-9)
    GeneratorMoments(1.0, 1.0, 1.0, 1.0, -1e-13)


def test_displace_matches_analytic_sample(gauss, spec, geometry):
    pos = (0.4 * spec.w0, -0.3 * spec.w0, 0.6 * spec.z_r)
    moved = displace(gauss, *pos)
    direct = sample(spec, pos, geometry)
    assert abs(abs(inner(moved, direct)) - 1) < 1e-12
    assert abs(inner(moved, direct) - 1) < 1e-9


def test_refinement_convergence(spec):
    coarse = GridGeometry.square(128, 4 * spec.w0)
    a = moments(sample(spec, (0, 0, 0), coarse))
    b = moments(sample(spec, (0, 0, 0), coarse.refined()))
    for f in ("p", "p_y", "var_g"):
        assert getattr(a, f) == pytest.approx(getattr(b, f), rel=1e-6)


def test_fit_geometry_holds_every_centre():
    g = fit_geometry([0.0, 3.0], [1.0, 2.0], dx=0.1, margin=5)
    assert g.half_width_x >= 13.0
    assert g.nx % 16 == 0


_coef = st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False)


def _random_fields(seed, geometry, k):
    rng = np.random.default_rng(seed)
    x, y = geometry.coords()
    env = np.exp(-(x**2 + y**2) / (2e-4) ** 2)
    out = []
    for _ in range(2):
        a = (rng.normal(size=x.shape) + 1j * rng.normal(size=x.shape)) * env
        out.append(FieldGrid.normalized(a, geometry.dx, geometry.dy, k))
    return out


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**16), alpha=_coef, beta=_coef)
def test_generators_are_linear(seed, alpha, beta):
    spec = BeamSpec.gaussian(100e-6, 0.5e-6)
    geo = GridGeometry.square(64, 6 * spec.w0)
    a, b = _random_fields(seed, geo, spec.k)
    for op in (apply_px, lambda f: apply_G(f, offset=spec.k)):
        lhs = op(a * alpha + b * beta).amplitudes
        rhs = (op(a) * alpha + op(b) * beta).amplitudes
        scale = max(np.abs(lhs).max(), 1e-300)
        assert np.abs(lhs - rhs).max() <= 1e-12 * scale * (1 + abs(alpha) + abs(beta))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**16))
def test_generators_are_hermitian(seed):
    spec = BeamSpec.gaussian(100e-6, 0.5e-6)
    geo = GridGeometry.square(64, 6 * spec.w0)
    a, b = _random_fields(seed, geo, spec.k)
    for op in (apply_px, apply_G):
        oa, ob = op(a), op(b)
        lhs = inner(a, ob)
        rhs = inner(b, oa).conjugate()
        assert abs(lhs - rhs) <= 1e-10 * max(oa.norm(), ob.norm())
