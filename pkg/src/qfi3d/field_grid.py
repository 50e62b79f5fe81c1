"""Wavefunctions sampled on a uniform transverse grid.

Derivatives are spectral: the field is treated as one period of a periodic
function, so windows must be wide enough that the amplitude has decayed to
round-off at the edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class GridGeometry:
    nx: int
    ny: int
    dx: float
    dy: float

    def __post_init__(self):
        for n in (self.nx, self.ny):
            if n < 16 or n % 2:
                raise ValueError(f"node counts must be even and >= 16, got {n}")
        if not (self.dx > 0 and self.dy > 0):
            raise ValueError("grid spacing must be positive")

    @classmethod
    def square(cls, n: int, half_width: float) -> GridGeometry:
        return cls(n, n, 2 * half_width / n, 2 * half_width / n)

    @property
    def half_width_x(self) -> float:
        return 0.5 * self.nx * self.dx

    @property
    def half_width_y(self) -> float:
        return 0.5 * self.ny * self.dy

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates as 2D arrays indexed ``[iy, ix]``; origin at node n/2."""
        x = (np.arange(self.nx) - self.nx // 2) * self.dx
        y = (np.arange(self.ny) - self.ny // 2) * self.dy
        return np.meshgrid(x, y, indexing="xy")

    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        kx = 2 * np.pi * np.fft.fftfreq(self.nx, d=self.dx)
        ky = 2 * np.pi * np.fft.fftfreq(self.ny, d=self.dy)
        return np.meshgrid(kx, ky, indexing="xy")

    def refined(self) -> GridGeometry:
        """Same window, twice the nodes per axis."""
        return GridGeometry(2 * self.nx, 2 * self.ny, self.dx / 2, self.dy / 2)


def fit_geometry(
    centres_x: list[float] | tuple[float, ...],
    widths: list[float] | tuple[float, ...],
    dx: float,
    margin: float = 5.0,
    min_half_width: float = 0.0,
) -> GridGeometry:
    """Square grid of spacing ``dx`` whose window holds every centre plus
    ``margin`` times the matching beam width."""
    half = max(min_half_width, max(abs(c) + margin * w for c, w in zip(centres_x, widths)))
    n = int(math.ceil(2 * half / dx / 16.0)) * 16
    return GridGeometry(n, n, dx, dx)


@dataclass(frozen=True, eq=False)
class FieldGrid:
    """Complex amplitudes ``amplitudes[iy, ix]`` on a uniform grid, wavenumber ``k``."""

    amplitudes: np.ndarray
    dx: float
    dy: float
    k: float

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.ndim != 2:
            raise ValueError("amplitudes must be a 2D array")
        GridGeometry(a.shape[1], a.shape[0], self.dx, self.dy)
        if not self.k > 0:
            raise ValueError("wavenumber must be positive")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def normalized(cls, amplitudes, dx: float, dy: float, k: float) -> FieldGrid:
        a = np.asarray(amplitudes, dtype=complex)
        nrm = math.sqrt(float(np.vdot(a, a).real) * dx * dy)
        if nrm == 0:
            raise ValueError("cannot normalize a zero field")
        return cls(a / nrm, dx, dy, k)

    @property
    def nx(self) -> int:
        return self.amplitudes.shape[1]

    @property
    def ny(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def geometry(self) -> GridGeometry:
        return GridGeometry(self.nx, self.ny, self.dx, self.dy)

    def norm(self) -> float:
        return math.sqrt(inner(self, self).real)

    def with_amplitudes(self, amplitudes) -> FieldGrid:
        return FieldGrid(amplitudes, self.dx, self.dy, self.k)

    def __add__(self, other: FieldGrid) -> FieldGrid:
        _check_same_grid(self, other)
        return self.with_amplitudes(self.amplitudes + other.amplitudes)

    def __sub__(self, other: FieldGrid) -> FieldGrid:
        _check_same_grid(self, other)
        return self.with_amplitudes(self.amplitudes - other.amplitudes)

    def __mul__(self, c: complex) -> FieldGrid:
        return self.with_amplitudes(c * self.amplitudes)

    __rmul__ = __mul__


def _check_same_grid(a: FieldGrid, b: FieldGrid) -> None:
    if a.amplitudes.shape != b.amplitudes.shape or not (
        math.isclose(a.dx, b.dx, rel_tol=1e-12)
        and math.isclose(a.dy, b.dy, rel_tol=1e-12)
        and math.isclose(a.k, b.k, rel_tol=1e-12)
    ):
        raise GridMismatchError(
            f"grid mismatch: {a.amplitudes.shape}/{a.dx:g}/{a.dy:g} vs "
            f"{b.amplitudes.shape}/{b.dx:g}/{b.dy:g}"
        )


def inner(a: FieldGrid, b: FieldGrid) -> complex:
    """Discrete L2 inner product, antilinear in ``a``."""
    _check_same_grid(a, b)
    return complex(np.vdot(a.amplitudes, b.amplitudes)) * a.dx * a.dy


def _spectral(field: FieldGrid, multiplier: np.ndarray) -> FieldGrid:
    spec = np.fft.fft2(field.amplitudes)
    return field.with_amplitudes(np.fft.ifft2(multiplier * spec))


def apply_px(field: FieldGrid) -> FieldGrid:
    """``-i d/dx`` applied spectrally."""
    kx, _ = field.geometry.wavenumbers()
    return _spectral(field, kx)


def apply_py(field: FieldGrid) -> FieldGrid:
    _, ky = field.geometry.wavenumbers()
    return _spectral(field, ky)


def apply_G(field: FieldGrid, offset: float = 0.0) -> FieldGrid:
    """z-displacement generator ``(1/2k) laplacian + k``, minus ``offset``.

    ``offset`` is subtracted inside the Fourier multiplier, so ``offset=k``
    (or the mean of G) avoids losing digits to the large constant ``k``.
    """
    kx, ky = field.geometry.wavenumbers()
    k = field.k
    return _spectral(field, (k - offset) - (kx**2 + ky**2) / (2 * k))


def displace(field: FieldGrid, x: float, y: float, z: float, carrier: bool = True) -> FieldGrid:
    """``exp(-i G z - i px x - i py y)`` applied exactly in Fourier space.

    ``carrier=False`` drops the global phase ``exp(-i k z)``.
    """
    kx, ky = field.geometry.wavenumbers()
    k = field.k
    phase = -kx * x - ky * y + (kx**2 + ky**2) / (2 * k) * z
    out = _spectral(field, np.exp(1j * phase))
    if carrier:
        # scalar factor: keeps the large k z out of the per-node phases
        out = out * complex(math.cos(k * z), -math.sin(k * z))
    return out


@dataclass(frozen=True)
class GeneratorMoments:
    """RMS/mean values of the displacement generators in a state.

    ``var_g`` is ``g**2 - G**2``, kept separately because forming it from
    ``g`` and ``G`` (both close to ``k``) would cancel most digits.
    """

    p: float
    p_y: float
    g: float
    G: float
    var_g: float

    def __post_init__(self):
        if self.p < 0 or self.p_y < 0 or self.g < 0:
            raise ValueError("RMS moments must be non-negative")
        if self.var_g < -1e-12:
            raise ValueError(f"negative generator variance {self.var_g:g}")


def moments(field: FieldGrid) -> GeneratorMoments:
    n2 = inner(field, field).real
    px = apply_px(field)
    py = apply_py(field)
    # reduced generator laplacian/2k; its mean is G - k
    gr = apply_G(field, offset=field.k)
    mean_r = inner(field, gr).real / n2
    centred = gr - mean_r * field
    var = inner(centred, centred).real / n2
    G = field.k + mean_r
    return GeneratorMoments(
        p=math.sqrt(inner(px, px).real / n2),
        p_y=math.sqrt(inner(py, py).real / n2),
        g=math.sqrt(G * G + var),
        G=G,
        var_g=var,
    )


def intensity_centroid(field: FieldGrid) -> tuple[float, float]:
    x, y = field.geometry.coords()
    inten = np.abs(field.amplitudes) ** 2
    tot = inten.sum()
    return float((x * inten).sum() / tot), float((y * inten).sum() / tot)


def second_moment_width(field: FieldGrid) -> float:
    """Beam radius ``2*sqrt(<(x-xc)^2>)`` of the intensity along x.

    Equals the 1/e^2 intensity radius for a Gaussian profile.
    """
    x, _ = field.geometry.coords()
    inten = np.abs(field.amplitudes) ** 2
    tot = inten.sum()
    xc = (x * inten).sum() / tot
    return float(2 * math.sqrt(((x - xc) ** 2 * inten).sum() / tot))
