"""Report builders behind the command-line interface.

Each ``cmd_*`` function takes a validated ``RunConfig`` and returns a
``Report``: either a table (``columns`` + ``rows``) or a nested mapping
(``data``). Serialization lives here too, so the numbers written by the CLI
and the numbers checked by the tests come from the same code.

Coordinates in data files are SI (metres, and inverse square metres for
Fisher information). Sweep ranges in a ``RunConfig`` are given in beam
units: ``w0`` for transverse quantities, ``z_r`` for longitudinal ones.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .beam_models import BeamSpec, gaussian_moments, sample
from .field_grid import GridGeometry, moments
from .fisher import FisherMatrix
from .oracle import oracle_qfim
from .single_emitter import (
    cfi_direct_gaussian,
    cfi_direct_numeric,
    detector_factory,
    lg_ratio_table,
    localisation_matrices,
    qfim_localisation,
)
from .two_emitter import (
    LABELS,
    TwoEmitterParams,
    closed_form_gaussian,
    compatibility,
    condition_check,
    factory_for,
    limit_matrices,
    scales_for,
    subspace_qfim,
)

SCHEMA_VERSION = 1
METHODS = ("closed-form", "subspace", "oracle")
FORMATS = ("csv", "json")
THREADS_ENV = "QFI3D_THREADS"
SIG_DIGITS = 12


class ConfigError(ValueError):
    """Invalid run configuration (maps to the usage exit code)."""


class NumericalFailure(RuntimeError):
    """A computation could not produce a trustworthy number."""


@dataclass(frozen=True)
class Sweep:
    start: float
    stop: float
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise ConfigError(f"step count must be >= 1, got {self.count}")
        if not (math.isfinite(self.start) and math.isfinite(self.stop)):
            raise ConfigError("sweep bounds must be finite")
        if self.stop < self.start:
            raise ConfigError(f"empty range [{self.start}, {self.stop}]")
        if self.count > 1 and self.stop == self.start:
            raise ConfigError("a range with several steps needs stop > start")

    def values(self) -> np.ndarray:
        if self.count == 1:
            return np.array([self.start])
        return np.linspace(self.start, self.stop, self.count)

    @property
    def step(self) -> float:
        return 0.0 if self.count == 1 else (self.stop - self.start) / (self.count - 1)


@dataclass(frozen=True)
class RunConfig:
    beam: BeamSpec
    n: int = 256
    half_width: float = 6.0  # units of w0
    method: str = "closed-form"
    sweep: dict = field(default_factory=dict)
    output: str | None = None
    fmt: str = "csv"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {', '.join(METHODS)}")
        if self.fmt not in FORMATS:
            raise ConfigError(f"format must be csv or json, got {self.fmt!r}")
        if self.n < 16 or self.n % 2:
            raise ConfigError(f"grid size must be even and >= 16, got {self.n}")
        if not self.half_width > 0:
            raise ConfigError("window half-width must be positive")
        for name, sw in self.sweep.items():
            if not isinstance(sw, Sweep):
                raise ConfigError(f"sweep {name!r} is not a Sweep")

    def geometry(self) -> GridGeometry:
        return GridGeometry.square(self.n, self.half_width * self.beam.w0)

    def needs_gaussian(self, what: str) -> None:
        if not self.beam.is_gaussian:
            raise ConfigError(f"{what} needs a Gaussian beam (got LG p={self.beam.p}, l={self.beam.l})")


@dataclass
class Report:
    name: str
    columns: list[str] | None = None
    rows: list[list] | None = None
    data: dict | None = None
    ok: bool = True
    summary: dict = field(default_factory=dict)

    @property
    def schema(self) -> str:
        return f"qfi3d.{self.name}/{SCHEMA_VERSION}"


# ---------------------------------------------------------------- helpers


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def parallel_map(fn: Callable, items: Sequence, workers: int | None = None) -> list:
    """``[fn(x) for x in items]``, computed on a thread pool, results in input order."""
    workers = thread_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def fmt_number(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), f".{SIG_DIGITS}g")
    return str(x)


def _round(obj):
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return float(format(v, f".{SIG_DIGITS}g")) if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return _round(obj.tolist())
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    return obj


def _flatten(prefix: str, obj, out: list) -> None:
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(obj, (list, tuple, np.ndarray)):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}[{i}]", v, out)
    else:
        out.append([prefix, obj])


def to_csv(report: Report) -> str:
    buf = io.StringIO()
    buf.write(f"# schema={report.schema}\n")
    wr = csv.writer(buf, lineterminator="\n")
    if report.columns is not None:
        wr.writerow(report.columns)
        for row in report.rows:
            wr.writerow([fmt_number(v) for v in row])
    else:
        flat: list = []
        _flatten("", report.data, flat)
        wr.writerow(["key", "value"])
        for key, v in flat:
            wr.writerow([key, fmt_number(v) if v is not None else ""])
    return buf.getvalue()


def to_json(report: Report) -> str:
    doc = {"schema": report.schema}
    if report.columns is not None:
        doc["columns"] = list(report.columns)
        doc["rows"] = _round(report.rows)
    else:
        doc.update(_round(report.data))
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def render(report: Report, fmt: str) -> str:
    return to_csv(report) if fmt == "csv" else to_json(report)


def beam_dict(spec: BeamSpec) -> dict:
    return {
        "family": spec.family,
        "w0": spec.w0,
        "wavelength": spec.wavelength,
        "p": spec.p,
        "l": spec.l,
        "z_r": spec.z_r,
    }


def _matrix(f: FisherMatrix) -> list:
    return f.entries.tolist()


def _finite(*arrays) -> bool:
    return all(np.all(np.isfinite(np.asarray(a, dtype=float))) for a in arrays)


def _psf_moments(cfg: RunConfig):
    if cfg.beam.is_gaussian:
        return gaussian_moments(cfg.beam)
    return moments(sample(cfg.beam, (0.0, 0.0, 0.0), cfg.geometry()))


# ---------------------------------------------------------------- commands


def cmd_single_qfim(cfg: RunConfig) -> Report:
    """3x3 localisation QFIm plus the weak-commutativity check.

    ``closed-form`` uses the analytic Gaussian moments, ``subspace`` the grid
    moments of the sampled PSF, ``oracle`` finite differences of the state.
    Gamma always comes from the sampled PSF.
    """
    spec = cfg.beam
    psf = sample(spec, (0.0, 0.0, 0.0), cfg.geometry())
    q_grid, gamma = localisation_matrices(psf, spec)
    if cfg.method == "closed-form":
        cfg.needs_gaussian("closed-form single-emitter QFIm")
        qf = qfim_localisation(gaussian_moments(spec), spec)
    elif cfg.method == "subspace":
        qf = qfim_localisation(moments(psf), spec)
    else:
        qf, _ = oracle_qfim(spec, (0.0, 0.0, 0.0))
    gd = np.abs(gamma.dimensionless()).max()
    qd = np.abs(qf.dimensionless()).max()
    data = {
        "command": "single-qfim",
        "method": cfg.method,
        "beam": beam_dict(spec),
        "labels": list(qf.labels),
        "qfim": _matrix(qf),
        "qfim_xx": qf["x_e", "x_e"],
        "qfim_yy": qf["y_e", "y_e"],
        "qfim_zz": qf["z_e", "z_e"],
        "transverse_ratio_to_gaussian": qf["x_e", "x_e"] * spec.w0**2 / 4,
        "gamma_max_abs_dimensionless": gd,
        "gamma_zero": bool(gd <= 1e-9 * qd),
        "grid_vs_reported_max_rel": float(
            np.abs(q_grid.dimensionless() - qf.dimensionless()).max() / qd
        ),
    }
    ok = _finite(qf.entries, gamma.entries) and qf.is_psd()
    return Report("single-qfim", data=data, ok=ok)


CFI_COLUMNS = ["z", "F_xx", "F_yy", "F_zz", "QFI_xx", "QFI_zz"]
CFI_NUMERIC_COLUMNS = ["F_xx_numeric", "F_yy_numeric", "F_zz_numeric"]


def cmd_cfi_sweep(cfg: RunConfig, numeric: bool = True) -> Report:
    """Direct-detection CFI against detector position ``z``.

    ``F_*`` are closed form for the Gaussian beam and the grid values
    otherwise; the ``*_numeric`` columns are always grid quadrature.
    """
    spec = cfg.beam
    zs = cfg.sweep.get("z", Sweep(-3.0, 3.0, 301)).values() * spec.z_r
    m = _psf_moments(cfg)
    qfi = qfim_localisation(m, spec)
    gaussian = spec.is_gaussian
    if not gaussian:
        numeric = True

    def row(z: float) -> list:
        out = [float(z)]
        num = None
        if numeric:
            fac = detector_factory(spec, 0.0, 0.0, z, n=cfg.n, half_width=cfg.half_width)
            num = cfi_direct_numeric(fac, (0.0, 0.0, 0.0), z=z, steps=_cfi_steps(spec))
        f = cfi_direct_gaussian(spec, z) if gaussian else num
        out += [f["x_e", "x_e"], f["y_e", "y_e"], f["z_e", "z_e"]]
        out += [qfi["x_e", "x_e"], qfi["z_e", "z_e"]]
        if numeric:
            out += [num["x_e", "x_e"], num["y_e", "y_e"], num["z_e", "z_e"]]
        return out

    rows = parallel_map(row, list(zs))
    cols = CFI_COLUMNS + (CFI_NUMERIC_COLUMNS if numeric else [])
    arr = np.array(rows, dtype=float)
    ok = _finite(arr)
    # F <= QFI at every z (tiny slack for grid quadrature)
    bound = bool(np.all(arr[:, 1] <= arr[:, 4] * (1 + 1e-6)) and np.all(arr[:, 3] <= arr[:, 5] * (1 + 1e-6)))
    summary = {
        "z_argmax_F_xx": float(arr[np.argmax(arr[:, 1]), 0]),
        "z_argmax_F_zz": float(arr[np.argmax(arr[:, 3]), 0]),
        "cfi_below_qfi": bound,
    }
    return Report("cfi-sweep", columns=cols, rows=rows, ok=ok, summary=summary)


def _cfi_steps(spec: BeamSpec) -> tuple[float, float, float]:
    return (1e-4 * spec.w0, 1e-4 * spec.w0, 1e-4 * spec.z_r)


def cmd_lg_table(cfg: RunConfig, p_max: int = 3, l_max: int = 3) -> Report:
    """Transverse QFI of LG(p, l) over the Gaussian value; rows ``|l|``, columns ``p``."""
    table = lg_ratio_table(p_max, l_max, cfg.beam.w0, cfg.beam.wavelength, cfg.geometry())
    cols = ["abs_l"] + [f"p={p}" for p in range(p_max + 1)]
    rows = [[la] + [float(v) for v in table[la]] for la in range(l_max + 1)]
    expected = np.add.outer(np.arange(l_max + 1) + 1, 2 * np.arange(p_max + 1))
    summary = {"max_abs_dev_from_2p_plus_l_plus_1": float(np.abs(table - expected).max())}
    return Report("lg-table", columns=cols, rows=rows, ok=_finite(table), summary=summary)


def two_emitter_matrices(
    spec: BeamSpec, params: TwoEmitterParams, method: str
) -> tuple[FisherMatrix, FisherMatrix]:
    if method == "closed-form":
        if not spec.is_gaussian:
            raise ConfigError("closed-form two-emitter matrices need a Gaussian beam")
        return closed_form_gaussian(spec, params)
    if params.s == 0 and params.t == 0:
        raise NumericalFailure(
            "coincident emitters: the grid routes see a single pure state; "
            "use the closed-form method for the s, t -> 0 limit"
        )
    if method == "subspace":
        return subspace_qfim(spec, params)
    return oracle_qfim(spec, params)


def params_from_units(spec: BeamSpec, x0: float, s: float, z0: float, t: float, q: float):
    """``TwoEmitterParams`` from beam units (``w0`` for x0, s; ``z_r`` for z0, t)."""
    try:
        return TwoEmitterParams(x0 * spec.w0, s * spec.w0, z0 * spec.z_r, t * spec.z_r, q)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_two_qfim(cfg: RunConfig, x0=0.0, s=1.0, z0=0.0, t=1.0, q=0.5) -> Report:
    """Q, Gamma and the compatibility indicator for two emitters."""
    spec = cfg.beam
    params = params_from_units(spec, x0, s, z0, t, q)
    qf, gf = two_emitter_matrices(spec, params, cfg.method)
    comp = compatibility(qf, gf)
    if spec.is_gaussian:
        holds, residual = condition_check(spec, params)
    else:
        holds, residual = condition_check(factory_for(spec, params), params)
    data = {
        "command": "two-qfim",
        "method": cfg.method,
        "beam": beam_dict(spec),
        "params": {"x0": params.x0, "s": params.s, "z0": params.z0, "t": params.t, "q": q},
        "labels": list(qf.labels),
        "qfim": _matrix(qf),
        "gamma": _matrix(gf),
        "r_value": comp.r_value,
        "trace_q_inv": comp.trace_q_inv,
        "gap_upper": comp.gap_upper,
        "gamma_zero": comp.gamma_zero,
        "longitudinal_gamma_zero": comp.condition_holds,
        "drift_condition_holds": holds,
        "drift_residual": residual,
        "q_rank": comp.rank,
        "limit": bool(qf.meta.get("limit", False)),
    }
    ok = _finite(qf.entries, gf.entries) and qf.is_psd() and 0 <= comp.r_value <= 1 + 1e-9
    return Report("two-qfim", data=data, ok=ok)


def r_value_at(spec: BeamSpec, params: TwoEmitterParams, method: str, fix_q: bool) -> tuple[float, bool]:
    """``(R, Q is PSD)`` at one map cell; ``fix_q`` drops ``q`` from the estimated set."""
    qf, gf = two_emitter_matrices(spec, params, method)
    if fix_q:
        keep = LABELS[:4]
        qf, gf = qf.submatrix(keep), gf.submatrix(keep)
    return compatibility(qf, gf).r_value, qf.is_psd()


def cmd_r_map(cfg: RunConfig, q: float = 0.5, fix_q: bool = False) -> Report:
    """Compatibility indicator over an ``(s, t)`` grid; ``s`` outer, ``t`` inner."""
    spec = cfg.beam
    ss = cfg.sweep.get("s", Sweep(0.0, 2.0, 50)).values()
    ts = cfg.sweep.get("t", Sweep(0.0, 2.0, 50)).values()
    cells = [(s, t) for s in ss for t in ts]

    def cell(st):
        s, t = st
        params = params_from_units(spec, 0.0, s, 0.0, t, q)
        r, psd = r_value_at(spec, params, cfg.method, fix_q)
        return [params.s, params.t, r], psd

    results = parallel_map(cell, cells)
    rows = [r for r, _ in results]
    rv = np.array([r[2] for r in rows])
    all_psd = all(p for _, p in results)
    in_range = bool(np.all((rv >= 0) & (rv <= 1 + 1e-9)))
    summary = {
        "q": q,
        "fix_q": fix_q,
        "r_min": float(rv.min()),
        "r_max": float(rv.max()),
        "all_psd": all_psd,
        "r_in_unit_interval": in_range,
    }
    ok = _finite(rv) and all_psd and in_range
    return Report("r-map", columns=["s", "t", "r_value"], rows=rows, ok=ok, summary=summary)


def _entry_deviation(a: np.ndarray, b: np.ndarray, ref_norm: float, floor: float = 1e-8) -> float:
    """Largest ``|a - b| / |b|`` over entries with ``|b| > floor * ref_norm``."""
    mask = np.abs(b) > floor * ref_norm
    if not mask.any():
        return 0.0
    return float((np.abs(a - b)[mask] / np.abs(b)[mask]).max())


def cmd_limit_check(cfg: RunConfig, q: float = 0.5, eps: float = 1e-5, rtol: float = 1e-2) -> Report:
    """Q and Gamma at ``s = eps w0``, ``t = eps z_r`` against the coincident limits."""
    spec = cfg.beam
    params = params_from_units(spec, 0.0, eps, 0.0, eps, q)
    qf, gf = two_emitter_matrices(spec, params, cfg.method)
    lq, _ = limit_matrices(_psf_moments(cfg), q, scales_for(spec))
    qd, ld = qf.dimensionless(), lq.dimensionless()
    norm = np.abs(ld).max()
    rel = _entry_deviation(qd, ld, norm)
    zero_mask = np.abs(ld) <= 1e-8 * norm
    zero_dev = float(np.abs(qd[zero_mask]).max() / norm) if zero_mask.any() else 0.0
    gamma_norm = float(np.abs(gf.dimensionless()).max() / norm)
    passed = rel <= rtol and zero_dev <= rtol and gamma_norm < 1e-3
    data = {
        "command": "limit-check",
        "method": cfg.method,
        "beam": beam_dict(spec),
        "eps": eps,
        "q": q,
        "labels": list(LABELS),
        "qfim": _matrix(qf),
        "limit_qfim": _matrix(lq),
        "max_rel_dev_nonzero": rel,
        "max_dev_zero_entries": zero_dev,
        "gamma_norm_relative": gamma_norm,
        "passed": passed,
    }
    return Report("limit-check", data=data, ok=passed and _finite(qf.entries, gf.entries))


DEFAULT_S = (0.0, 0.2, 0.5, 1.0, 3.0)
DEFAULT_T = (0.0, 0.1, 0.5, 1.0, 2.0)
DEFAULT_Q = (0.1, 0.3, 0.5)


def validation_lattice(
    s_values: Iterable[float] = DEFAULT_S,
    t_values: Iterable[float] = DEFAULT_T,
    q_values: Iterable[float] = DEFAULT_Q,
) -> list[tuple[float, float, float]]:
    """``(s, t, q)`` points in beam units, the coincident point left out."""
    return [
        (s, t, q)
        for q in q_values
        for s in s_values
        for t in t_values
        if not (s == 0 and t == 0)
    ]


def compare_routes(spec: BeamSpec, params: TwoEmitterParams, methods: Sequence[str]) -> dict:
    """Entrywise relative deviations of every route from the first one."""
    mats = {m: two_emitter_matrices(spec, params, m) for m in methods}
    ref_q, ref_g = mats[methods[0]]
    norm = np.abs(ref_q.dimensionless()).max()
    out = {}
    for m in methods[1:]:
        qf, gf = mats[m]
        out[m] = max(
            _entry_deviation(qf.dimensionless(), ref_q.dimensionless(), norm),
            _entry_deviation(gf.dimensionless(), ref_g.dimensionless(), norm),
        )
    return out


def cmd_validate(
    cfg: RunConfig,
    lattice: Sequence[tuple[float, float, float]] | None = None,
    rtol: float = 1e-4,
) -> Report:
    """Agreement of the closed-form, subspace and oracle routes on a lattice."""
    spec = cfg.beam
    lattice = validation_lattice() if lattice is None else list(lattice)
    methods = ["subspace", "oracle"]
    if spec.is_gaussian:
        methods = ["closed-form"] + methods

    def point(stq):
        s, t, q = stq
        params = params_from_units(spec, 0.0, s, 0.0, t, q)
        dev = compare_routes(spec, params, methods)
        return [s, t, q] + [dev[m] for m in methods[1:]]

    rows = parallel_map(point, lattice)
    cols = ["s_w0", "t_zr", "q"] + [f"dev_{m}" for m in methods[1:]]
    worst = max((max(r[3:]) for r in rows), default=0.0)
    summary = {"reference": methods[0], "max_rel_dev": worst, "rtol": rtol, "points": len(rows)}
    ok = worst <= rtol and _finite(np.array([r[3:] for r in rows]))
    return Report("validate", columns=cols, rows=rows, ok=ok, summary=summary)


__all__ = [
    "ConfigError",
    "NumericalFailure",
    "Report",
    "RunConfig",
    "Sweep",
    "cmd_cfi_sweep",
    "cmd_limit_check",
    "cmd_lg_table",
    "cmd_r_map",
    "cmd_single_qfim",
    "cmd_two_qfim",
    "cmd_validate",
    "compare_routes",
    "render",
    "thread_count",
    "validation_lattice",
]
