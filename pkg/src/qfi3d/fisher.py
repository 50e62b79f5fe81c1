"""Fisher-type matrices shared by the single- and two-emitter modules."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

KINDS = ("qfim", "cfim", "gamma")


@dataclass(frozen=True)
class FisherMatrix:
    """A labelled real matrix of Fisher information (or the weak-commutativity
    matrix, ``kind="gamma"``).

    ``scales`` holds a characteristic length (or 1 for dimensionless
    parameters) per label. ``D Q D`` with ``D = diag(scales)`` is the
    dimensionless form used for thresholds and eigenvalue cuts.
    """

    labels: tuple[str, ...]
    entries: np.ndarray
    kind: str = "qfim"
    scales: tuple[float, ...] | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=float)
        n = len(self.labels)
        if m.shape != (n, n):
            raise ValueError(f"entries shape {m.shape} does not match {n} labels")
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.scales is not None and len(self.scales) != n:
            raise ValueError("one scale per label required")
        scale = max(np.abs(m).max(), np.finfo(float).tiny)
        if self.kind == "gamma":
            if np.abs(m + m.T).max() > 1e-12 * scale:
                raise ValueError("gamma matrix must be antisymmetric")
            m = 0.5 * (m - m.T)
        else:
            if np.abs(m - m.T).max() > 1e-12 * scale:
                raise ValueError(f"{self.kind} matrix must be symmetric")
            m = 0.5 * (m + m.T)
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    def __getitem__(self, key: tuple[str, str]) -> float:
        a, b = key
        return float(self.entries[self.labels.index(a), self.labels.index(b)])

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def dimensionless(self) -> np.ndarray:
        if self.scales is None:
            return np.array(self.entries)
        d = np.asarray(self.scales, dtype=float)
        return self.entries * np.outer(d, d)

    def is_psd(self, rtol: float = 1e-10) -> bool:
        ev = np.linalg.eigvalsh(self.dimensionless())
        return bool(ev.min() >= -rtol * max(ev.max(), 0.0))

    def submatrix(self, labels: Sequence[str]) -> FisherMatrix:
        idx = [self.labels.index(lb) for lb in labels]
        scales = None if self.scales is None else tuple(self.scales[i] for i in idx)
        return FisherMatrix(
            tuple(labels), self.entries[np.ix_(idx, idx)], self.kind, scales, dict(self.meta)
        )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "labels": list(self.labels),
            "entries": self.entries.tolist(),
        }
