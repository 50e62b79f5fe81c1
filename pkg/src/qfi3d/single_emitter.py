"""Fisher information for the 3D position of a single emitter."""

from __future__ import annotations

import numpy as np

from .beam_models import BeamFactory, BeamSpec, PsfFactory, sample
from .field_grid import (
    FieldGrid,
    GeneratorMoments,
    GridGeometry,
    apply_G,
    apply_px,
    apply_py,
    moments,
)
from .fisher import FisherMatrix
from .oracle import pure_state_qfim

LABELS = ("x_e", "y_e", "z_e")
INTENSITY_FLOOR = 1e-15


def _scales(spec: BeamSpec | None):
    return None if spec is None else (spec.w0, spec.w0, spec.z_r)


def qfim_localisation(m: GeneratorMoments, spec: BeamSpec | None = None) -> FisherMatrix:
    """``4 diag(p_x^2, p_y^2, g^2 - G^2)``, valid for PSFs symmetric under
    ``x -> -x`` and ``y -> -y``."""
    if m.var_g < -1e-12:
        raise ValueError(f"invalid moments: g^2 - G^2 = {m.var_g:g}")
    q = 4 * np.diag([m.p**2, m.p_y**2, max(m.var_g, 0.0)])
    return FisherMatrix(LABELS, q, "qfim", _scales(spec))


def localisation_matrices(psf: FieldGrid, spec: BeamSpec | None = None):
    """Q and Gamma of a pure displaced state from its generator images.

    Uses the mean-removed z generator; the shift drops out of both matrices.
    """
    G = moments(psf).G
    derivs = [apply_px(psf) * -1j, apply_py(psf) * -1j, apply_G(psf, offset=G) * -1j]
    t = pure_state_qfim(psf, derivs)
    sc = _scales(spec)
    return (
        FisherMatrix(LABELS, 0.5 * (t.real + t.real.T), "qfim", sc),
        FisherMatrix(LABELS, 0.5 * (t.imag - t.imag.T), "gamma", sc),
    )


def gamma_localisation(psf: FieldGrid) -> FisherMatrix:
    return localisation_matrices(psf)[1]


def cfi_direct_gaussian(spec: BeamSpec, z: float) -> FisherMatrix:
    """Classical Fisher information of intensity detection with the emitter
    a distance ``z`` from the waist."""
    if not spec.is_gaussian:
        raise ValueError("closed-form CFI needs a Gaussian beam")
    zr2 = spec.z_r**2
    fxx = 4 * zr2 / (spec.w0**2 * (z * z + zr2))
    fzz = 4 * z * z / (z * z + zr2) ** 2
    return FisherMatrix(LABELS, np.diag([fxx, fxx, fzz]), "cfim", _scales(spec))


def detector_factory(spec: BeamSpec, xe: float, ye: float, ze: float, n: int = 256,
                     half_width: float = 6.0) -> BeamFactory:
    """Fixed-node grid whose window follows the beam width at ``ze``.

    Intensity needs no Fourier resolution of the curvature phase, so the
    node count does not have to grow with the window.
    """
    hw = half_width * spec.width(ze) + max(abs(xe), abs(ye))
    return BeamFactory(spec, GridGeometry.square(n, hw))


def _intensity(factory: PsfFactory, pos) -> np.ndarray:
    return np.abs(factory(*pos).amplitudes) ** 2


def _cfi(factory: PsfFactory, pos, steps) -> np.ndarray:
    base = _intensity(factory, pos)
    grads = []
    for i, h in enumerate(steps):
        up, dn = list(pos), list(pos)
        up[i] += h
        dn[i] -= h
        grads.append((_intensity(factory, up) - _intensity(factory, dn)) / (2 * h))
    mask = base >= INTENSITY_FLOOR * base.max()
    f0 = factory(*pos)
    dA = f0.dx * f0.dy
    inv = np.where(mask, 1.0 / np.where(mask, base, 1.0), 0.0)
    n = len(steps)
    out = np.empty((n, n))
    for a in range(n):
        for b in range(a, n):
            out[a, b] = out[b, a] = float(np.sum(grads[a] * grads[b] * inv) * dA)
    return out


def cfi_direct_numeric(
    spec_or_factory: BeamSpec | PsfFactory,
    params: tuple[float, float, float],
    z: float = 0.0,
    steps: tuple[float, float, float] | None = None,
    check_convergence: bool = False,
) -> FisherMatrix:
    """Direct-detection CFIm by grid quadrature of ``(dI)^2 / I``.

    The state is evaluated at ``z_e + z`` (detector plane offset ``z``).
    Nodes with intensity below ``1e-15`` of the peak are left out.
    ``meta["converged"]`` is ``False`` when a grid refinement moves the
    result by more than ``1e-3`` relative.
    """
    xe, ye, ze = params
    zeff = ze + z
    if isinstance(spec_or_factory, BeamSpec):
        spec = spec_or_factory
        factory = detector_factory(spec, xe, ye, zeff)
        if steps is None:
            steps = (1e-4 * spec.w0, 1e-4 * spec.w0, 1e-4 * spec.z_r)
    else:
        spec = None
        factory = spec_or_factory
        if steps is None:
            raise ValueError("finite-difference steps are required with a bare PSF factory")
    pos = (xe, ye, zeff)
    f = _cfi(factory, pos, steps)
    meta = {"converged": None}
    if check_convergence and hasattr(factory, "refined"):
        f2 = _cfi(factory.refined(), pos, steps)
        meta["converged"] = bool(np.abs(f2 - f).max() <= 1e-3 * np.abs(f2).max())
    return FisherMatrix(LABELS, f, "cfim", _scales(spec), meta)


def lg_ratio_table(
    p_max: int,
    l_max: int,
    w0: float = 100e-6,
    wavelength: float = 0.5e-6,
    geometry: GridGeometry | None = None,
) -> np.ndarray:
    """Transverse QFI of LG(p, l) over that of the Gaussian, from grid
    moments. Rows are ``|l| = 0..l_max``, columns ``p = 0..p_max``."""
    if p_max < 0 or l_max < 0:
        raise ValueError("indices must be non-negative")
    g = BeamSpec.gaussian(w0, wavelength)
    geometry = geometry or g.default_geometry()
    ref = moments(sample(g, (0.0, 0.0, 0.0), geometry)).p ** 2
    out = np.empty((l_max + 1, p_max + 1))
    for la in range(l_max + 1):
        for p in range(p_max + 1):
            spec = BeamSpec.laguerre_gauss(w0, wavelength, p, la)
            out[la, p] = moments(sample(spec, (0.0, 0.0, 0.0), geometry)).p ** 2 / ref
    return out
