import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qfi3d.beam_models import BeamSpec, gaussian_moments, sample
from qfi3d.field_grid import GeneratorMoments, GridGeometry, moments
from qfi3d.single_emitter import (
    cfi_direct_gaussian,
    cfi_direct_numeric,
    gamma_localisation,
    lg_ratio_table,
    localisation_matrices,
    qfim_localisation,
)


def _expected(spec):
    return 4 * np.diag([1 / spec.w0**2, 1 / spec.w0**2, 1 / (4 * spec.z_r**2)])


def test_gaussian_qfim_closed_form(spec):
    q = qfim_localisation(gaussian_moments(spec), spec)
    assert q.labels == ("x_e", "y_e", "z_e")
    np.testing.assert_allclose(q.entries, _expected(spec), rtol=1e-10, atol=0)


def test_gaussian_qfim_from_grid(gauss, spec):
    q = qfim_localisation(moments(gauss), spec)
    np.testing.assert_allclose(np.diag(q.entries), np.diag(_expected(spec)), rtol=1e-8)


@pytest.mark.parametrize("p,l", [(1, 0), (0, 2), (1, -2), (2, 1)])
def test_lg_transverse_entries(spec, geometry, p, l):  # noqa: E741
    lg = BeamSpec.laguerre_gauss(spec.w0, spec.wavelength, p, l)
    q = qfim_localisation(moments(sample(lg, (0, 0, 0), geometry)), lg)
    expect = (2 * p + abs(l) + 1) * 4 / spec.w0**2
    assert q["x_e", "x_e"] == pytest.approx(expect, rel=1e-8)
    assert q["y_e", "y_e"] == pytest.approx(expect, rel=1e-8)


def test_degenerate_moments_give_singular_qfim():
    q = qfim_localisation(GeneratorMoments(0.0, 1.0, 2.0, 1.0, 3.0))
    assert np.all(q.entries[0] == 0) and np.all(q.entries[:, 0] == 0)
    assert np.linalg.matrix_rank(q.entries) == 2


def test_gamma_vanishes_for_gaussian(gauss, spec):
    g = gamma_localisation(gauss)
    assert g.kind == "gamma"
    assert np.abs(g.entries).max() < 1e-10 / spec.w0**2
    assert np.all(np.diag(g.entries) == 0)


def test_gamma_vanishes_for_lg(spec, geometry):
    lg = sample(BeamSpec.laguerre_gauss(spec.w0, spec.wavelength, 1, 1), (0, 0, 0), geometry)
    g = gamma_localisation(lg)
    assert np.abs(g.entries).max() < 1e-10 / spec.w0**2


def test_localisation_matrices_match_moments(gauss, spec):
    q, _ = localisation_matrices(gauss, spec)
    np.testing.assert_allclose(q.dimensionless(), qfim_localisation(gaussian_moments(spec), spec).dimensionless(),
                               atol=1e-9)


def test_cfi_closed_form_special_planes(spec):
    q = qfim_localisation(gaussian_moments(spec), spec)
    f0 = cfi_direct_gaussian(spec, 0.0)
    assert f0["x_e", "x_e"] == pytest.approx(4 / spec.w0**2)
    assert f0["x_e", "x_e"] == pytest.approx(q["x_e", "x_e"])
    assert f0["z_e", "z_e"] == 0.0
    fr = cfi_direct_gaussian(spec, spec.z_r)
    assert fr["z_e", "z_e"] == pytest.approx(1 / spec.z_r**2)
    assert fr["z_e", "z_e"] == pytest.approx(q["z_e", "z_e"])
    with pytest.raises(ValueError):
        cfi_direct_gaussian(BeamSpec.laguerre_gauss(spec.w0, spec.wavelength, 0, 1), 0.0)


@pytest.mark.parametrize("z_u", [0.0, 1.0, -2.0, 3.0])
def test_cfi_numeric_matches_closed_form(spec, z_u):
    z = z_u * spec.z_r
    num = cfi_direct_numeric(spec, (0.0, 0.0, 0.0), z=z)
    ref = cfi_direct_gaussian(spec, z)
    np.testing.assert_allclose(np.diag(num.dimensionless()), np.diag(ref.dimensionless()), rtol=1e-4, atol=1e-10)
    # off-diagonals are computed, and small for a symmetric PSF
    off = num.dimensionless() - np.diag(np.diag(num.dimensionless()))
    assert np.abs(off).max() < 1e-8


def test_cfi_numeric_convergence_flag(spec):
    num = cfi_direct_numeric(spec, (0.0, 0.0, 0.0), z=spec.z_r, check_convergence=True)
    assert num.meta["converged"] is True


def test_cfi_numeric_needs_steps_for_bare_factory(spec):
    with pytest.raises(ValueError, match="steps"):
        cfi_direct_numeric(lambda x, y, z: None, (0.0, 0.0, 0.0))


@pytest.mark.parametrize("z_u", [-2.5, -0.7, 0.0, 0.4, 1.0, 2.2])
def test_qfim_dominates_cfim(spec, z_u):
    q = qfim_localisation(gaussian_moments(spec), spec).dimensionless()
    f = cfi_direct_numeric(spec, (0.0, 0.0, 0.0), z=z_u * spec.z_r).dimensionless()
    ev = np.linalg.eigvalsh(q - f)
    assert ev.min() >= -1e-8 * np.abs(q).max()


def test_cfi_argmax_positions(spec):
    zs = np.linspace(-3, 3, 301) * spec.z_r
    step = zs[1] - zs[0]
    fxx = [cfi_direct_gaussian(spec, z)["x_e", "x_e"] for z in zs]
    fzz = [cfi_direct_gaussian(spec, z)["z_e", "z_e"] for z in zs]
    assert abs(zs[int(np.argmax(fxx))]) <= step
    assert abs(abs(zs[int(np.argmax(fzz))]) - spec.z_r) <= step


def test_lg_table_cells():
    t = lg_ratio_table(3, 3)
    assert t.shape == (4, 4)
    assert t[0, 0] == pytest.approx(1, abs=1e-6)
    assert t[3, 3] == pytest.approx(10, abs=1e-6)
    assert t[1, 2] == pytest.approx(6, abs=1e-6)  # p=2, |l|=1
    expect = np.add.outer(np.arange(4) + 1, 2 * np.arange(4))
    np.testing.assert_allclose(t, expect, atol=1e-6)


def test_lg_table_rejects_negative_indices():
    with pytest.raises(ValueError):
        lg_ratio_table(-1, 2)


@settings(max_examples=12, deadline=None)
@given(
    xe=st.floats(-2.0, 2.0),
    ye=st.floats(-2.0, 2.0),
    ze=st.floats(-1.5, 1.5),
)
def test_qfim_independent_of_position(xe, ye, ze):
    spec = BeamSpec.gaussian(100e-6, 0.5e-6)
    geo = GridGeometry.square(256, 10 * spec.w0)
    ref = qfim_localisation(moments(sample(spec, (0, 0, 0), geo)), spec).entries
    moved = sample(spec, (xe * spec.w0, ye * spec.w0, ze * spec.z_r), geo)
    q = qfim_localisation(moments(moved), spec).entries
    np.testing.assert_allclose(np.diag(q), np.diag(ref), rtol=1e-8)
