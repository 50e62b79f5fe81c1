"""Quantum Fisher information for two incoherent emitters of unequal brightness.

Two independent routes give the 5x5 QFIm ``Q`` and weak-commutativity
matrix ``Gamma`` over ``(x0, s, z0, t, q)``:

* ``build_subspace`` / ``solve_slds`` / ``qfim_gamma_subspace`` expand the
  state in the six-vector non-orthogonal basis, whiten it and solve the SLD
  equation there (works for any symmetric PSF on a grid);
* ``closed_form_gaussian`` evaluates the analytic entries for the Gaussian
  beam from the overlap ``w exp(i phi)`` and the generator moments.

The z generator is used with its mean removed. ``rho`` does not see the
global phase ``exp(-i G z_j)`` picks up from a constant shift of ``G``, so
Q and Gamma are unchanged, but the basis vector built from the raw
generator would be parallel to ``Psi_1`` up to about ``1e-13``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .beam_models import (
    BeamFactory,
    BeamSpec,
    PsfFactory,
    gaussian_moments,
    gaussian_one_minus_w2,
    gaussian_overlap,
    numeric_overlap,
)
from .field_grid import FieldGrid, GeneratorMoments, apply_G, apply_px, moments
from .fisher import FisherMatrix

LABELS = ("x0", "s", "z0", "t", "q")
POSITION_LABELS = ("x1", "x2", "z1", "z2", "q")

# rows: new SLDs (x0, s, z0, t, q) in terms of (x1, x2, z1, z2, q)
REPARAM = np.array(
    [
        [1.0, 1.0, 0.0, 0.0, 0.0],
        [-0.5, 0.5, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 1.0, 0.0],
        [0.0, 0.0, -0.5, 0.5, 0.0],
        [0.0, 0.0, 0.0, 0.0, 1.0],
    ]
)

GRAM_COND_MAX = 1e12
EIG_CUT = 1e-12


class CoincidentStatesError(ValueError):
    pass


@dataclass(frozen=True)
class TwoEmitterParams:
    x0: float
    s: float
    z0: float
    t: float
    q: float

    def __post_init__(self):
        if not 0 < self.q < 1:
            raise ValueError(f"relative intensity q must lie in (0, 1), got {self.q}")

    @classmethod
    def from_positions(cls, x1: float, x2: float, z1: float, z2: float, q: float):
        return cls((x1 + x2) / 2, x2 - x1, (z1 + z2) / 2, z2 - z1, q)

    def positions(self) -> tuple[float, float, float, float]:
        """``(x1, x2, z1, z2)``."""
        return (
            self.x0 - self.s / 2,
            self.x0 + self.s / 2,
            self.z0 - self.t / 2,
            self.z0 + self.t / 2,
        )

    def as_array(self) -> np.ndarray:
        return np.array([self.x0, self.s, self.z0, self.t, self.q])


def scales_for(spec: BeamSpec) -> tuple[float, ...]:
    return (spec.w0, spec.w0, spec.z_r, spec.z_r, 1.0)


def factory_for(spec: BeamSpec, params: TwoEmitterParams, n_ref: int = 256) -> BeamFactory:
    x1, x2, z1, z2 = params.positions()
    return BeamFactory(spec, spec.geometry_for([(x1, z1), (x2, z2)], n_ref=n_ref))


@dataclass(frozen=True, eq=False)
class SubspaceState:
    """Two-emitter state in the six-vector basis.

    An operator ``X = sum_ij |Psi_i> C_ij <Psi_j|`` is represented in the
    basis by ``C @ gram`` (how it acts on basis vectors) and in the
    orthonormal frame by ``W^H C W`` with ``gram = W W^H``.
    """

    gram: np.ndarray
    rho_matrix: np.ndarray
    xi_matrices: dict
    whitener: np.ndarray
    rank: int
    method: str
    coefficients: dict = field(repr=False)
    moments: GeneratorMoments | None = None
    params: TwoEmitterParams | None = None

    def frame(self, name: str) -> np.ndarray:
        """Orthonormal-frame matrix of ``rho`` or of a derivative ``d rho``."""
        c = self.coefficients[name]
        return self.whitener.conj().T @ c @ self.whitener


def _coefficients(q: float, p: float, sigma: float) -> dict:
    def pair(i, j, c):
        m = np.zeros((6, 6))
        m[i, j] = m[j, i] = c
        return m

    return {
        "rho": np.diag([q, 1 - q, 0, 0, 0, 0]).astype(float),
        "x1": pair(2, 0, q * p),
        "x2": pair(4, 1, (1 - q) * p),
        "z1": pair(3, 0, q * sigma),
        "z2": pair(5, 1, (1 - q) * sigma),
        "q": np.diag([1.0, -1.0, 0, 0, 0, 0]),
    }


def whiten(gram: np.ndarray) -> tuple[np.ndarray, str]:
    """Factor ``gram = W W^H``; Cholesky when well conditioned, else a
    truncated eigendecomposition (``W`` then has fewer columns)."""
    ev, vecs = np.linalg.eigh(gram)
    top = ev.max()
    if ev.min() > 0 and top / ev.min() < GRAM_COND_MAX:
        try:
            return np.linalg.cholesky(gram), "cholesky"
        except np.linalg.LinAlgError:
            pass
    keep = ev > EIG_CUT * top
    return vecs[:, keep] * np.sqrt(ev[keep]), "eigen"


def build_subspace(
    factory: PsfFactory,
    params: TwoEmitterParams,
    psf_moments: GeneratorMoments | None = None,
) -> SubspaceState:
    x1, x2, z1, z2 = params.positions()
    q = params.q
    psi1 = factory(x1, 0.0, z1)
    psi2 = factory(x2, 0.0, z2)
    m = psf_moments or moments(psi1)
    p, sigma = m.p, math.sqrt(m.var_g)
    if p <= 0 or sigma <= 0:
        raise ValueError("PSF has vanishing generator spread")

    def d_x(psi: FieldGrid) -> FieldGrid:
        return apply_px(psi) * (-1j / p)

    def d_z(psi: FieldGrid) -> FieldGrid:
        return apply_G(psi, offset=m.G) * (-1j / sigma)

    basis = [psi1, psi2, d_x(psi1), d_z(psi1), d_x(psi2), d_z(psi2)]
    v = np.stack([b.amplitudes.ravel() for b in basis])
    gram = (v.conj() @ v.T) * psi1.dx * psi1.dy
    gram = 0.5 * (gram + gram.conj().T)
    coeffs = _coefficients(q, p, sigma)
    w, method = whiten(gram)
    rank = w.shape[1]
    if rank < 2:
        raise CoincidentStatesError("basis collapsed below rank 2")
    return SubspaceState(
        gram=gram,
        rho_matrix=coeffs["rho"] @ gram,
        xi_matrices={name: coeffs[name] @ gram for name in POSITION_LABELS},
        whitener=w,
        rank=rank,
        method=method,
        coefficients=coeffs,
        moments=m,
        params=params,
    )


def sld(rho: np.ndarray, drho: np.ndarray, cut: float = 1e-12) -> np.ndarray:
    """Solve ``drho = (rho L + L rho) / 2`` for Hermitian ``rho``.

    Components on pairs of eigenvectors with ``lam_i + lam_j <= cut`` are set
    to zero.
    """
    lam, u = np.linalg.eigh(rho)
    d = u.conj().T @ drho @ u
    den = lam[:, None] + lam[None, :]
    lmat = np.where(den > cut, 2 * d / np.where(den > cut, den, 1.0), 0.0)
    return u @ lmat @ u.conj().T


def solve_slds(state: SubspaceState) -> dict:
    """SLDs for ``(x1, x2, z1, z2, q)`` in the orthonormal frame."""
    rho = state.frame("rho")
    rho = 0.5 * (rho + rho.conj().T)
    out = {}
    for name in POSITION_LABELS:
        d = state.frame(name)
        out[name] = sld(rho, 0.5 * (d + d.conj().T))
    return out


def reparametrize_slds(slds: dict) -> dict:
    old = [slds[n] for n in POSITION_LABELS]
    return {
        new: sum(REPARAM[i, j] * old[j] for j in range(5) if REPARAM[i, j])
        for i, new in enumerate(LABELS)
    }


def _trace_matrix(rho: np.ndarray, ops: list[np.ndarray]) -> np.ndarray:
    n = len(ops)
    out = np.empty((n, n), dtype=complex)
    for a in range(n):
        ra = rho @ ops[a]
        for b in range(n):
            out[a, b] = np.trace(ra @ ops[b])
    return out


def qfim_gamma_subspace(
    state: SubspaceState, slds: dict, scales: tuple[float, ...] | None = None
) -> tuple[FisherMatrix, FisherMatrix]:
    """``Q + i Gamma = Tr[rho L_mu L_nu]`` for the labels of ``slds``."""
    labels = LABELS if "x0" in slds else POSITION_LABELS
    rho = state.frame("rho")
    tr = _trace_matrix(0.5 * (rho + rho.conj().T), [slds[n] for n in labels])
    q_mat = 0.5 * (tr.real + tr.real.T)
    g_mat = 0.5 * (tr.imag - tr.imag.T)
    meta = {"method": "subspace", "basis": state.method, "rank": state.rank}
    return (
        FisherMatrix(labels, q_mat, "qfim", scales, dict(meta)),
        FisherMatrix(labels, g_mat, "gamma", scales, dict(meta)),
    )


def subspace_qfim(
    spec_or_factory: BeamSpec | PsfFactory,
    params: TwoEmitterParams,
    positions: bool = False,
) -> tuple[FisherMatrix, FisherMatrix]:
    """Subspace route end to end; ``positions=True`` reports over
    ``(x1, x2, z1, z2, q)`` instead of ``(x0, s, z0, t, q)``."""
    if isinstance(spec_or_factory, BeamSpec):
        factory = factory_for(spec_or_factory, params)
        scales = scales_for(spec_or_factory)
    else:
        factory = spec_or_factory
        scales = None
    state = build_subspace(factory, params)
    slds = solve_slds(state)
    if not positions:
        slds = reparametrize_slds(slds)
    return qfim_gamma_subspace(state, slds, scales)


def _limit_matrices(p2: float, var: float, q: float) -> tuple[np.ndarray, np.ndarray]:
    qm = np.zeros((5, 5))
    qm[0, 0], qm[1, 1] = 4 * p2, p2
    qm[0, 1] = qm[1, 0] = 2 * p2 * (1 - 2 * q)
    qm[2, 2], qm[3, 3] = 4 * var, var
    qm[2, 3] = qm[3, 2] = 2 * var * (1 - 2 * q)
    return qm, np.zeros((5, 5))


def closed_form_matrices(
    m: GeneratorMoments,
    w: float,
    one_minus_w2: float,
    dw_ds: float,
    dw_dt: float,
    dphi_ds: float,
    drift: float,
    q: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic Q and Gamma from overlap data.

    ``drift`` is ``G + dphi/dt`` (gauge invariant). Entries are arranged so
    nothing of size ``k`` is ever subtracted. The signs of Q[z0, t] and of
    Gamma[x0, s], Gamma[x0, t], Gamma[z0, t] follow the pure-state limit
    ``q -> 1`` and the x <-> z exchange symmetry, and are confirmed by the
    subspace and finite-difference routes.
    """
    p2, var = m.p**2, m.var_g
    c = q * (1 - q)
    a, b = drift, dphi_ds
    om = one_minus_w2
    ww = w * w
    qm = np.zeros((5, 5))
    qm[0, 0] = 4 * p2 - 16 * c * (dw_ds**2 + b * b * ww / om)
    qm[0, 1] = 2 * p2 * (1 - 2 * q)
    qm[0, 2] = -16 * c * (dw_ds * dw_dt + b * a * ww / om)
    qm[0, 4] = 4 * w * dw_ds
    qm[1, 1] = p2
    qm[2, 2] = 4 * var - 16 * c * (dw_dt**2 + a * a * ww / om)
    qm[2, 3] = 2 * var * (1 - 2 * q)
    qm[2, 4] = 4 * w * dw_dt
    qm[3, 3] = var
    qm[4, 4] = om / c
    qm = np.triu(qm) + np.triu(qm, 1).T

    gm = np.zeros((5, 5))
    gm[0, 1] = 8 * c * dw_ds * b * w * ww / om
    gm[0, 2] = 16 * c * (2 * q - 1) * w * (dw_ds * a - b * dw_dt)
    gm[0, 3] = 8 * c * w * b * dw_dt / om - 8 * c * w * dw_ds * a
    gm[0, 4] = 4 * b * (2 * q - 1) * ww
    gm[1, 2] = -8 * c * w * dw_ds * a / om + 8 * c * w * b * dw_dt
    gm[1, 4] = -2 * b * ww
    gm[2, 3] = 8 * c * dw_dt * a * w * ww / om
    gm[2, 4] = 4 * a * (2 * q - 1) * ww
    gm[3, 4] = -2 * a * ww
    gm = gm - gm.T
    return qm, gm


def _gaussian_g_minus_k(spec: BeamSpec) -> float:
    # exact, where G - k in floating point keeps only ~9 digits
    return -1.0 / (spec.k * spec.w0**2)


def closed_form_gaussian(
    spec: BeamSpec, params: TwoEmitterParams
) -> tuple[FisherMatrix, FisherMatrix]:
    """Closed-form Q and Gamma for two Gaussian emitters.

    At coincidence (``1 - w < 1e-12``) the ``s, t -> 0`` limit matrices are
    returned and ``meta["limit"]`` is set.
    """
    m = gaussian_moments(spec)
    q = params.q
    k = spec.k
    ov = gaussian_overlap(spec, params.s, params.t, gauge=k)
    om = gaussian_one_minus_w2(spec, params.s, params.t)
    limit = 1 - ov.w < 1e-12
    if limit:
        qm, gm = _limit_matrices(m.p**2, m.var_g, q)
    else:
        drift = _gaussian_g_minus_k(spec) + ov.dphi_dt
        qm, gm = closed_form_matrices(
            m, ov.w, om, ov.dw_ds, ov.dw_dt, ov.dphi_ds, drift, q
        )
    meta = {"method": "closed-form", "limit": limit}
    sc = scales_for(spec)
    return (
        FisherMatrix(LABELS, qm, "qfim", sc, dict(meta)),
        FisherMatrix(LABELS, gm, "gamma", sc, dict(meta)),
    )


def limit_matrices(
    m: GeneratorMoments, q: float, scales: tuple[float, ...] | None = None
) -> tuple[FisherMatrix, FisherMatrix]:
    """The ``s, t -> 0`` limits of Q and Gamma for a PSF with moments ``m``.

    The ``q`` row and column vanish: the brightness ratio of two coincident
    emitters cannot be estimated.
    """
    qm, gm = _limit_matrices(m.p**2, m.var_g, q)
    return (
        FisherMatrix(LABELS, qm, "qfim", scales, {"limit": True}),
        FisherMatrix(LABELS, gm, "gamma", scales, {"limit": True}),
    )


def limit_gaussian(spec: BeamSpec, q: float) -> tuple[FisherMatrix, FisherMatrix]:
    return limit_matrices(gaussian_moments(spec), q, scales_for(spec))


@dataclass(frozen=True)
class CompatibilityReport:
    r_value: float
    trace_q_inv: float
    gap_upper: float
    condition_holds: bool | None
    gamma_zero: bool
    rank: int

    def to_dict(self) -> dict:
        return {
            "r_value": self.r_value,
            "trace_q_inv": self.trace_q_inv,
            "gap_upper": self.gap_upper,
            "condition_holds": self.condition_holds,
            "gamma_zero": self.gamma_zero,
            "rank": self.rank,
        }


def compatibility(
    qf: FisherMatrix, gf: FisherMatrix, cut: float = 1e-12, zero_tol: float = 1e-9
) -> CompatibilityReport:
    """Compatibility indicator ``R = ||i Gamma Q^-1||_inf`` and the bracket
    ``0 <= HCRB - Tr(Q^-1) <= Tr(Q^-1) R``.

    Works on the dimensionless matrices and inverts Q on the eigenspace above
    ``cut`` times its largest eigenvalue.
    """
    if qf.labels != gf.labels:
        raise ValueError("Q and Gamma must share labels")
    qd = qf.dimensionless()
    gd = gf.dimensionless() if gf.scales is not None else gf.entries * 1.0
    if qf.scales is not None and gf.scales is None:
        d = np.asarray(qf.scales)
        gd = gf.entries * np.outer(d, d)
    ev, u = np.linalg.eigh(qd)
    top = ev.max()
    if top <= 0:
        raise ValueError("Q is zero; compatibility undefined")
    keep = ev > cut * top
    ur = u[:, keep] / np.sqrt(ev[keep])
    # i Q^-1/2 Gamma Q^-1/2 is Hermitian and similar to i Gamma Q^-1 on the kept space
    h = 1j * (ur.T @ gd @ ur)
    r_value = float(np.abs(np.linalg.eigvalsh(0.5 * (h + h.conj().T))).max())
    qinv = (u[:, keep] / ev[keep]) @ u[:, keep].T
    d = np.ones(len(qf.labels)) if qf.scales is None else np.asarray(qf.scales)
    trace = float(np.sum(np.diag(qinv) * d * d))
    gscale = np.abs(gd).max()
    qscale = np.abs(qd).max()
    cond = None
    zlab = [lb for lb in ("z0", "t", "q") if lb in gf.labels]
    if len(zlab) >= 2:
        idx = [gf.labels.index(lb) for lb in zlab]
        cond = bool(np.abs(gd[np.ix_(idx, idx)]).max() <= zero_tol * qscale)
    return CompatibilityReport(
        r_value=r_value,
        trace_q_inv=trace,
        gap_upper=trace * r_value,
        condition_holds=cond,
        gamma_zero=bool(gscale <= zero_tol * qscale),
        rank=int(keep.sum()),
    )


def condition_check(
    spec_or_factory: BeamSpec | PsfFactory,
    params: TwoEmitterParams,
    step_s: float | None = None,
    step_t: float | None = None,
) -> tuple[bool, float]:
    """Residual of ``G + dphi/dt = 0`` and whether it holds to ``1e-8 G``.

    A ``BeamSpec`` (Gaussian) uses the analytic overlap; a PSF factory uses
    grid overlaps with central differences.
    """
    if isinstance(spec_or_factory, BeamSpec):
        spec = spec_or_factory
        G = gaussian_moments(spec).G
        ov = gaussian_overlap(spec, params.s, params.t, gauge=spec.k)
        residual = _gaussian_g_minus_k(spec) + ov.dphi_dt
    else:
        factory = spec_or_factory
        psi = factory(0.0, 0.0, 0.0)
        m = moments(psi)
        G = m.G
        sc_s = step_s or 1e-4 / m.p
        sc_t = step_t or 1e-4 / (2 * math.sqrt(m.var_g))
        ov = numeric_overlap(factory, params.s, params.t, sc_s, sc_t, gauge=psi.k, x0=params.x0, z0=params.z0)
        residual = (m.G - psi.k) + ov.dphi_dt
    return abs(residual) < 1e-8 * G, residual


def jacobian() -> np.ndarray:
    """``d(x1, x2, z1, z2, q) / d(x0, s, z0, t, q)``."""
    return np.array(
        [
            [1.0, -0.5, 0.0, 0.0, 0.0],
            [1.0, 0.5, 0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, -0.5, 0.0],
            [0.0, 0.0, 1.0, 0.5, 0.0],
            [0.0, 0.0, 0.0, 0.0, 1.0],
        ]
    )
