"""Odd superlinear nonlinearities f, their primitives F and derivatives f'.

Two kinds are supported: the pure power ``f(t) = |t|^(p-1) t`` and a
user table of samples ``(t, f(t))`` for ``t >= 0`` extended to negative
arguments by oddness.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import InvalidNonlinearity

logger = logging.getLogger(__name__)


class Nonlinearity:
    """Base class; subclasses provide ``f``, ``F`` and ``df`` on arrays.

    Attributes
    ----------
    kind : str
        ``"pure_power"`` or ``"table"``.
    p : float
        Growth exponent, ``|f(t)| <= C(1 + |t|^p)``.
    mu : float
        Superquadratic exponent, ``0 < mu F(t) <= f(t) t``.
    """

    kind = "abstract"
    p: float
    mu: float

    def f(self, t):
        raise NotImplementedError

    def F(self, t):
        raise NotImplementedError

    def df(self, t):
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError


class PurePower(Nonlinearity):
    """``f(t) = |t|^(p-1) t`` with ``F = |t|^(p+1)/(p+1)`` and ``mu = p+1``."""

    kind = "pure_power"

    def __init__(self, p: float):
        p = float(p)
        if not np.isfinite(p) or p <= 1.0:
            raise InvalidNonlinearity(f"exponent p must exceed 1, got {p}")
        self.p = p
        self.mu = p + 1.0

    def f(self, t):
        t = np.asarray(t, dtype=float)
        return np.abs(t) ** (self.p - 1.0) * t

    def F(self, t):
        t = np.asarray(t, dtype=float)
        return np.abs(t) ** (self.p + 1.0) / (self.p + 1.0)

    def df(self, t):
        t = np.asarray(t, dtype=float)
        return self.p * np.abs(t) ** (self.p - 1.0)

    def to_config(self) -> dict:
        return {"kind": self.kind, "p": self.p}

    def __repr__(self):
        return f"PurePower(p={self.p})"


class TableNonlinearity(Nonlinearity):
    """Nonlinearity interpolated from samples of ``f`` on ``t >= 0``.

    The samples are joined by a cubic spline; ``F`` is its exact
    antiderivative and ``f'`` its derivative.  Beyond the last sample the
    table is continued by the power law matching the last two samples.

    Parameters
    ----------
    t, values : array_like
        Increasing abscissae starting at 0 and the values ``f(t)``.
    p : float, optional
        Growth exponent; estimated from the tail of the table when omitted.
    path : str, optional
        Source file, kept for provenance only.
    """

    kind = "table"

    def __init__(self, t, values, p: float | None = None, path: str | None = None):
        t = np.asarray(t, dtype=float)
        values = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.shape != values.shape or t.size < 4:
            raise InvalidNonlinearity("table needs at least 4 (t, f) rows")
        if t[0] != 0.0 or values[0] != 0.0:
            raise InvalidNonlinearity("table must start at t = 0 with f(0) = 0")
        if np.any(np.diff(t) <= 0):
            raise InvalidNonlinearity("table abscissae must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise InvalidNonlinearity("table values must be finite")
        self.path = path
        self._t = t
        self._spline = CubicSpline(t, values)
        self._prim = self._spline.antiderivative()
        self._dspline = self._spline.derivative()
        self._t_max = t[-1]
        self._f_max = values[-1]
        self._F_max = float(self._prim(t[-1]))
        self._q = float(np.log(values[-1] / values[-2]) / np.log(t[-1] / t[-2]))
        self.p = float(p) if p is not None else self._q
        if self.p <= 1.0:
            raise InvalidNonlinearity(f"table growth exponent {self.p:.4g} must exceed 1")
        # infimum over the nodes and the hypothesis sample grid
        grid = np.union1d(t[1:], default_samples()[default_samples() > 0])
        ratio = self.f(grid) * grid / self.F(grid)
        self.mu = float(np.min(ratio))

    @classmethod
    def from_csv(cls, path, p: float | None = None) -> "TableNonlinearity":
        """Read a two-column CSV of ``(t, f(t))`` rows; ``#`` lines are skipped."""
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.reader(fh):
                if not rec or rec[0].lstrip().startswith("#"):
                    continue
                try:
                    rows.append((float(rec[0]), float(rec[1])))
                except (ValueError, IndexError):
                    # header row
                    continue
        arr = np.array(rows, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 4:
            raise InvalidNonlinearity(f"could not read a table from {path}")
        return cls(arr[:, 0], arr[:, 1], p=p, path=str(path))

    def _split(self, t):
        t = np.asarray(t, dtype=float)
        a = np.abs(t)
        inside = a <= self._t_max
        return t, a, inside

    def f(self, t):
        t, a, inside = self._split(t)
        out = np.where(inside, self._spline(np.minimum(a, self._t_max)),
                       self._f_max * (np.maximum(a, self._t_max) / self._t_max) ** self._q)
        return np.sign(t) * out

    def F(self, t):
        _, a, inside = self._split(t)
        s = np.maximum(a, self._t_max) / self._t_max
        tail = self._F_max + self._f_max * self._t_max / (self._q + 1.0) * (s ** (self._q + 1.0) - 1.0)
        return np.where(inside, self._prim(np.minimum(a, self._t_max)), tail)

    def df(self, t):
        _, a, inside = self._split(t)
        s = np.maximum(a, self._t_max) / self._t_max
        tail = self._q * self._f_max / self._t_max * s ** (self._q - 1.0)
        return np.where(inside, self._dspline(np.minimum(a, self._t_max)), tail)

    def to_config(self) -> dict:
        return {"kind": self.kind, "path": self.path, "p": self.p}

    def __repr__(self):
        return f"TableNonlinearity(path={self.path!r}, p={self.p:.4g}, mu={self.mu:.4g})"


def from_config(section: dict, base_dir: str | Path | None = None) -> Nonlinearity:
    """Build a nonlinearity from its JSON config section."""
    kind = section.get("kind")
    if kind == "pure_power":
        return PurePower(section["p"])
    if kind == "table":
        path = Path(section["path"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return TableNonlinearity.from_csv(path, p=section.get("p"))
    raise InvalidNonlinearity(f"unknown nonlinearity kind {kind!r}")


def default_samples() -> np.ndarray:
    """Log-spaced magnitudes in [1e-6, 1e3] reflected to negative values."""
    pos = np.logspace(-6, 3, 181)
    return np.concatenate([-pos[::-1], pos])


@dataclass
class HypothesisReport:
    """Outcome of the sampled hypothesis checks.

    ``checks`` maps a hypothesis label to pass/fail, ``details`` holds the
    measured worst-case quantity for each label.
    """

    checks: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def validate_hypotheses(nl: Nonlinearity, N: int, samples=None) -> HypothesisReport:
    """Check growth, superquadraticity, convexity-type and symmetry hypotheses.

    Parameters
    ----------
    nl : Nonlinearity
    N : int
        Spatial dimension; the growth exponent must satisfy ``1 < p < 1 + 4/N``.
    samples : array_like, optional
        Sample points; zero is dropped.  Defaults to :func:`default_samples`.

    Raises
    ------
    InvalidNonlinearity
        If ``mu <= 2``, ``p <= 1`` or ``p >= 1 + 4/N``.
    """
    if N < 1:
        raise InvalidNonlinearity(f"dimension must be >= 1, got {N}")
    if nl.p <= 1.0:
        raise InvalidNonlinearity(f"p = {nl.p} must exceed 1")
    if nl.p >= 1.0 + 4.0 / N:
        raise InvalidNonlinearity(f"p = {nl.p} must be below 1 + 4/N = {1 + 4 / N}")
    if nl.mu <= 2.0:
        raise InvalidNonlinearity(f"mu = {nl.mu} must exceed 2")

    t = default_samples() if samples is None else np.asarray(samples, dtype=float)
    t = t[t != 0.0]
    f, F, df = nl.f(t), nl.F(t), nl.df(t)
    ft = f * t
    rep = HypothesisReport()
    # roundoff allowance on the equality boundaries
    rel = 1e-12

    growth = np.abs(f) / (1.0 + np.abs(t) ** nl.p)
    rep.details["f2_growth_constant"] = float(growth.max())
    rep.checks["f2"] = bool(np.isfinite(growth.max()))

    lower = nl.mu * F
    rep.details["f3_min_F"] = float(F.min())
    rep.details["f3_max_excess"] = float(np.max((lower - ft) / np.abs(ft)))
    rep.checks["f3"] = bool(np.all(F > 0) and np.all(lower <= ft * (1 + rel)))

    rep.details["f4_min_gap"] = float(np.min((df * t * t - ft) / np.abs(ft)))
    rep.checks["f4"] = bool(np.all(ft < df * t * t))

    odd = np.abs(nl.f(-t) + f) / np.maximum(np.abs(f), np.finfo(float).tiny)
    rep.details["f5_odd_defect"] = float(odd.max())
    rep.checks["f5"] = bool(odd.max() <= rel)

    # (1/s) f(s t) t strictly increasing in s
    s = np.linspace(0.1, 3.0, 30)
    q = nl.f(np.outer(s, t)) * t / s[:, None]
    inc = np.diff(q, axis=0)
    rep.details["scaling_min_increment"] = float(inc.min())
    rep.checks["scaling_monotone"] = bool(np.all(inc > 0))

    # f'(t) against centred differences away from the origin
    away = np.abs(t) >= 1e-2
    h = 1e-5
    fd = (nl.f(t[away] + h) - nl.f(t[away] - h)) / (2 * h)
    err = np.abs(fd - df[away]) / np.abs(df[away])
    rep.details["f1_derivative_error"] = float(err.max())
    rep.checks["f1"] = bool(err.max() < 1e-6)
    return rep


def small_t_threshold(nl: Nonlinearity, eps: float) -> float:
    """Largest sampled ``t > 0`` below which ``|f(t)/t| < eps`` holds on the samples."""
    t = np.logspace(-12, 3, 400)
    ok = np.abs(nl.f(t) / t) < eps
    if not ok[0]:
        return 0.0
    bad = np.flatnonzero(~ok)
    return float(t[bad[0] - 1] if bad.size else t[-1])
