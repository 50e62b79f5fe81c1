"""Gaussian and Laguerre-Gauss point-spread functions and their overlaps."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import eval_genlaguerre

from .field_grid import (
    FieldGrid,
    GeneratorMoments,
    GridGeometry,
    fit_geometry,
    inner,
)

GAUSSIAN = "gaussian"
LAGUERRE_GAUSS = "lg"

# (x_e, y_e, z_e) -> displaced state, carrier phase exp(-i k z_e) included
PsfFactory = Callable[[float, float, float], FieldGrid]


class WindowTooSmallError(ValueError):
    pass


@dataclass(frozen=True)
class BeamSpec:
    family: str
    w0: float
    wavelength: float
    p: int = 0
    l: int = 0  # noqa: E741

    def __post_init__(self):
        if self.family not in (GAUSSIAN, LAGUERRE_GAUSS):
            raise ValueError(f"unknown beam family {self.family!r}")
        if not (self.w0 > 0 and self.wavelength > 0):
            raise ValueError("w0 and wavelength must be positive")
        if self.p < 0:
            raise ValueError("radial index p must be >= 0")
        if self.family == GAUSSIAN and (self.p, self.l) != (0, 0):
            raise ValueError("a Gaussian beam has (p, l) = (0, 0)")

    @classmethod
    def gaussian(cls, w0: float, wavelength: float) -> BeamSpec:
        return cls(GAUSSIAN, w0, wavelength)

    @classmethod
    def laguerre_gauss(cls, w0: float, wavelength: float, p: int, l: int) -> BeamSpec:  # noqa: E741
        return cls(LAGUERRE_GAUSS, w0, wavelength, p, l)

    @property
    def is_gaussian(self) -> bool:
        return (self.p, self.l) == (0, 0)

    @property
    def k(self) -> float:
        return 2 * math.pi / self.wavelength

    @property
    def z_r(self) -> float:
        return math.pi * self.w0**2 / self.wavelength

    @property
    def mode_order(self) -> int:
        return 2 * self.p + abs(self.l)

    def width(self, z: float) -> float:
        return self.w0 * math.sqrt(1 + (z / self.z_r) ** 2)

    def default_geometry(self, n: int = 256, half_width: float = 6.0) -> GridGeometry:
        return GridGeometry.square(n, half_width * self.w0)

    def geometry_for(self, positions, n_ref: int = 256, half_width_ref: float = 6.0) -> GridGeometry:
        """Grid with the default spacing whose window holds every ``(x, z)`` in
        ``positions`` with room for the beam tails."""
        dx = 2 * half_width_ref * self.w0 / n_ref
        margin = 4.0 + math.sqrt(self.mode_order + 1)
        return fit_geometry(
            [x for x, _ in positions],
            [self.width(z) for _, z in positions],
            dx,
            margin=margin,
            min_half_width=half_width_ref * self.w0,
        )


def sample(
    spec: BeamSpec,
    displacement: tuple[float, float, float],
    geometry: GridGeometry,
    carrier: bool = True,
) -> FieldGrid:
    """Displaced beam ``exp(-iG z_e - i px x_e - i py y_e)|psi>`` on the grid."""
    xe, ye, ze = displacement
    w = spec.width(ze)
    need_x, need_y = abs(xe) + 3 * w, abs(ye) + 3 * w
    if need_x > geometry.half_width_x or need_y > geometry.half_width_y:
        raise WindowTooSmallError(
            f"window half-widths ({geometry.half_width_x:g}, {geometry.half_width_y:g}) m "
            f"must be at least ({need_x:g}, {need_y:g}) m"
        )
    k, zr = spec.k, spec.z_r
    x, y = geometry.coords()
    x = x - xe
    y = y - ye
    r2 = x * x + y * y
    u = 2 * r2 / w**2
    gouy = (spec.mode_order + 1) * math.atan2(ze, zr)
    # k r^2 / 2R written so that z_e = 0 needs no special case
    curv = k * r2 * ze / (2 * (ze * ze + zr * zr))
    phase = gouy - curv
    if spec.is_gaussian:
        amp = math.sqrt(2 / math.pi) / w * np.exp(-r2 / w**2)
    else:
        la = abs(spec.l)
        norm = math.sqrt(2 * math.factorial(spec.p) / (math.pi * math.factorial(spec.p + la))) / w
        amp = norm * u ** (la / 2) * eval_genlaguerre(spec.p, la, u) * np.exp(-r2 / w**2)
        if spec.l:
            amp = amp * np.exp(1j * spec.l * np.arctan2(y, x))
    field = amp * np.exp(1j * phase)
    if carrier:
        # k z_e is ~1e6 rad: folded into the phase array it would leave ~1e-10
        # rad of node-to-node rounding noise, so apply it as one scalar
        field = field * complex(math.cos(k * ze), -math.sin(k * ze))
    return FieldGrid.normalized(field, geometry.dx, geometry.dy, k)


@dataclass(frozen=True)
class BeamFactory:
    """PSF factory for an analytic beam on a fixed grid."""

    spec: BeamSpec
    geometry: GridGeometry

    def __call__(self, x: float, y: float, z: float) -> FieldGrid:
        return sample(self.spec, (x, y, z), self.geometry)

    def refined(self) -> BeamFactory:
        return BeamFactory(self.spec, self.geometry.refined())


def gaussian_moments(spec: BeamSpec) -> GeneratorMoments:
    """Closed-form generator moments of the Gaussian beam."""
    if not spec.is_gaussian:
        raise ValueError("closed-form moments exist only for the Gaussian beam")
    k, w0 = spec.k, spec.w0
    var = 1 / (k * k * w0**4)
    G = k - 1 / (k * w0 * w0)
    return GeneratorMoments(p=1 / w0, p_y=1 / w0, g=math.sqrt(G * G + var), G=G, var_g=var)


@dataclass(frozen=True)
class OverlapData:
    """``w exp(i phi) = <Psi_1|Psi_2>`` and its partials in ``s`` and ``t``.

    ``gauge`` is the constant removed from G before forming the phase:
    ``phi`` and ``dphi_dt`` refer to ``G - gauge``. ``gauge=0`` gives the
    physical phase; ``gauge=k`` removes the carrier ``-k t`` term.
    """

    w: float
    phi: float
    dw_ds: float
    dw_dt: float
    dphi_ds: float
    dphi_dt: float
    gauge: float = 0.0
    reliable: bool = True


def _gaussian_log_w(k: float, zr: float, s: float, t: float) -> float:
    d = t * t + 4 * zr * zr
    return -0.5 * math.log1p((t / (2 * zr)) ** 2) - k * zr * s * s / d


def gaussian_overlap(spec: BeamSpec, s: float, t: float, gauge: float = 0.0) -> OverlapData:
    if not spec.is_gaussian:
        raise ValueError("gaussian_overlap needs a Gaussian beam; use numeric_overlap")
    k, zr = spec.k, spec.z_r
    d = t * t + 4 * zr * zr
    w = math.exp(_gaussian_log_w(k, zr, s, t))
    dlogw_ds = -2 * k * zr * s / d
    dlogw_dt = -t / d + 2 * k * zr * s * s * t / (d * d)
    phi = math.atan(t / (2 * zr)) + (gauge - k) * t - k * t * s * s / (2 * d)
    dphi_ds = -k * t * s / d
    dphi_dt = 2 * zr / d + (gauge - k) - 0.5 * k * s * s * (4 * zr * zr - t * t) / (d * d)
    return OverlapData(w, phi, w * dlogw_ds, w * dlogw_dt, dphi_ds, dphi_dt, gauge)


def gaussian_one_minus_w2(spec: BeamSpec, s: float, t: float) -> float:
    """``1 - w**2`` without cancellation near coincidence."""
    return -math.expm1(2 * _gaussian_log_w(spec.k, spec.z_r, s, t))


def _reduced_overlap(factory: PsfFactory, x0: float, z0: float, s: float, t: float) -> complex:
    a = factory(x0 - s / 2, 0.0, z0 - t / 2)
    b = factory(x0 + s / 2, 0.0, z0 + t / 2)
    # strip the carrier phase exp(-i k t) so the phase varies on the z_r scale
    return inner(a, b) * complex(math.cos(a.k * t), math.sin(a.k * t))


def numeric_overlap(
    factory: PsfFactory,
    s: float,
    t: float,
    step_s: float,
    step_t: float,
    gauge: float = 0.0,
    x0: float = 0.0,
    z0: float = 0.0,
    path_steps: int = 32,
) -> OverlapData:
    """Overlap data from grid inner products, partials by central differences.

    The reported phase is unwrapped along the straight path from the origin.
    """
    k = factory(0.0, 0.0, 0.0).k

    def ov(si, ti):
        return _reduced_overlap(factory, x0, z0, si, ti)

    o = ov(s, t)
    w = abs(o)
    if s == 0 and t == 0:
        phi_red = 0.0
    else:
        path = [ov(s * f, t * f) for f in np.linspace(0, 1, path_steps + 1)[1:]]
        phi_red = float(np.unwrap(np.angle([1.0 + 0j] + path))[-1])
    osp, osm = ov(s + step_s, t), ov(s - step_s, t)
    otp, otm = ov(s, t + step_t), ov(s, t - step_t)
    dw_ds = (abs(osp) - abs(osm)) / (2 * step_s)
    dw_dt = (abs(otp) - abs(otm)) / (2 * step_t)
    dphi_ds = np.angle(osp * np.conj(osm)) / (2 * step_s)
    dphi_dt = np.angle(otp * np.conj(otm)) / (2 * step_t)
    shift = gauge - k
    return OverlapData(
        w=w,
        phi=phi_red + shift * t,
        dw_ds=dw_ds,
        dw_dt=dw_dt,
        dphi_ds=float(dphi_ds),
        dphi_dt=float(dphi_dt) + shift,
        gauge=gauge,
        reliable=w >= 1e-14,
    )
