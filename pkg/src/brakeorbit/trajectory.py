"""Layered functions ``v(r, y)`` sampled on a cylinder grid.

A trajectory is a stack of radial slices ``v[j] = v(., y_j)`` on a uniform
``y`` grid.  The action

    phi(v) = int 1/2 ||d_y v||_2^2 + (V(v(., y)) - b) dy

is discretised variationally: the kinetic part is summed over the edges
``(y_j, y_{j+1})`` with the difference quotient centred on each edge, the
potential part uses the trapezoidal rule on the nodes.  The gradient of
that sum is the usual three-point stencil, which is what the residual and
the minimiser use.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintViolated, GridMismatch, InvalidField
from .nonlinearity import Nonlinearity
from .potential import potential_values
from .radial import RadialField, RadialGrid

logger = logging.getLogger(__name__)


class CylinderGrid:
    """Product of a radial grid and a uniform ``y`` grid with ``n_y`` nodes."""

    def __init__(self, radial: RadialGrid, y_min: float, y_max: float, n_y: int):
        if n_y < 3:
            raise ValueError("n_y must be at least 3")
        if not y_max > y_min:
            raise ValueError("need y_max > y_min")
        self.radial = radial
        self.y_min = float(y_min)
        self.y_max = float(y_max)
        self.n_y = int(n_y)
        self.dy = (self.y_max - self.y_min) / (self.n_y - 1)
        self.y = self.y_min + self.dy * np.arange(self.n_y)
        self.y[-1] = self.y_max

    @classmethod
    def from_spacing(cls, radial: RadialGrid, y_min: float, y_max: float, dy: float) -> "CylinderGrid":
        """Grid on ``[y_min, y_max]`` with spacing as close to ``dy`` as fits."""
        n = max(int(round((y_max - y_min) / dy)), 2) + 1
        return cls(radial, y_min, y_max, n)

    def y_weights(self) -> np.ndarray:
        w = np.full(self.n_y, self.dy)
        w[0] = w[-1] = 0.5 * self.dy
        return w

    def index_of(self, y: float) -> int:
        """Node index of an ordinate that must sit on the grid."""
        x = (y - self.y_min) / self.dy
        j = int(round(x))
        if abs(x - j) > 1e-6 or not 0 <= j < self.n_y:
            raise ValueError(f"y={y} is not a grid node")
        return j

    def __eq__(self, other):
        return (isinstance(other, CylinderGrid) and self.radial == other.radial
                and self.n_y == other.n_y and self.y_min == other.y_min and self.y_max == other.y_max)

    def __repr__(self):
        return (f"CylinderGrid({self.radial!r}, y=[{self.y_min:.6g}, {self.y_max:.6g}], "
                f"n_y={self.n_y})")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Values ``v[j, i] = v(r_i, y_j)`` on a :class:`CylinderGrid`."""

    grid: CylinderGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        shape = (self.grid.n_y, self.grid.radial.n_r)
        if vals.shape != shape:
            raise InvalidField(f"expected shape {shape}, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise InvalidField("trajectory contains non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def slice(self, j: int) -> RadialField:
        return RadialField(self.grid.radial, self.values[j])

    def reversed(self) -> "Trajectory":
        g = self.grid
        return Trajectory(CylinderGrid(g.radial, -g.y_max, -g.y_min, g.n_y), self.values[::-1])

    def in_cone(self) -> bool:
        v = self.values
        return bool(np.all(v[:, -1] >= 0) and np.all(v[:, :-1] >= v[:, 1:]))


@dataclass
class EnergyProfile:
    """Per-slice kinetic energy, potential and ``E = kinetic - V``."""

    y: np.ndarray
    kinetic: np.ndarray
    potential: np.ndarray
    E: np.ndarray


@dataclass
class Residual:
    field: Trajectory
    l2: float


def _window_indices(grid: CylinderGrid, window):
    if window is None:
        return 0, grid.n_y - 1
    ja, jb = grid.index_of(window[0]), grid.index_of(window[1])
    if jb <= ja:
        raise ValueError("window must have positive length")
    return ja, jb


def phi_terms(grid: CylinderGrid, v, b: float, nl: Nonlinearity, ja: int = 0, jb: int | None = None):
    """Kinetic and potential parts of the action on nodes ``ja..jb`` (arrays)."""
    if jb is None:
        jb = grid.n_y - 1
    rg = grid.radial
    seg = v[ja:jb + 1]
    d = np.diff(seg, axis=0)
    # exactly rounded sums, so that reversing y gives the same action bit for bit
    kinetic = 0.5 * math.fsum(rg.integrate(d * d)) / grid.dy
    pot = potential_values(rg, seg, nl) - b
    tw = np.full(seg.shape[0], grid.dy)
    tw[0] = tw[-1] = 0.5 * grid.dy
    return kinetic, math.fsum(pot * tw)


def phi(v: Trajectory, b: float, nl: Nonlinearity, window=None, tol_constraint: float = 1e-9) -> float:
    """Action of ``v`` at level ``b`` over the whole grid or a node-aligned window.

    Without a window the trajectory stands for a path on the whole line,
    continued by its end slices, and every slice must satisfy
    ``V >= b - tol_constraint``.

    Raises
    ------
    ConstraintViolated
        On a whole-line evaluation with a slice below the level.
    """
    g = v.grid
    ja, jb = _window_indices(g, window)
    if window is None:
        pot = potential_values(g.radial, v.values, nl)
        low = float(pot.min())
        if low < b - tol_constraint:
            raise ConstraintViolated(f"slice with V={low:.6g} below level {b:.6g}")
    k, p = phi_terms(g, v.values, b, nl, ja, jb)
    return k + p


def y_derivative(v, dy: float):
    """Centred differences in ``y`` with one-sided differences at the ends."""
    return np.gradient(np.asarray(v), dy, axis=0, edge_order=1)


def energy_profile(v: Trajectory, nl: Nonlinearity) -> EnergyProfile:
    """``E(y) = 1/2 ||d_y v||_2^2 - V(v(., y))`` slice by slice."""
    g = v.grid
    dv = y_derivative(v.values, g.dy)
    kin = 0.5 * g.radial.integrate(dv * dv)
    pot = potential_values(g.radial, v.values, nl)
    return EnergyProfile(g.y.copy(), kin, pot, kin - pot)


def residual_values(grid: CylinderGrid, v, nl: Nonlinearity, periodic: bool = False):
    """Stencil residual ``-(d_yy v + Lap v) + v - f(v)``.

    Returns the residual on the interior slices, or on all slices but the
    last when ``periodic`` (the last slice then repeats the first).
    """
    rg = grid.radial
    if periodic:
        core = v[:-1]
        up, down = np.roll(core, -1, axis=0), np.roll(core, 1, axis=0)
    else:
        core, up, down = v[1:-1], v[2:], v[:-2]
    dyy = (up - 2.0 * core + down) / grid.dy ** 2
    return -dyy - rg.laplacian_values(core) + core - nl.f(core)


def pde_residual(v: Trajectory, nl: Nonlinearity, periodic: bool = False) -> Residual:
    """Residual field and its cylinder-weighted ``L^2`` norm over interior slices.

    With ``periodic=True`` the first and last slices are taken to be the
    same point of a periodic orbit, and the stencil wraps around.
    End slices that carry no residual are zero in the returned field.
    """
    g = v.grid
    r = residual_values(g, v.values, nl, periodic)
    out = np.zeros_like(v.values)
    if periodic:
        out[:-1] = r
        out[-1] = r[0]
    else:
        out[1:-1] = r
    l2 = float(np.sqrt(g.dy * np.sum(g.radial.integrate(r * r))))
    return Residual(Trajectory(g, out), l2)


def slice_continuity_check(v: Trajectory) -> float:
    """Worst violation of ``||v(y2) - v(y1)||^2 <= ||d_y v||^2_{(y1,y2)} |y2 - y1|``.

    The kinetic integral uses the same edge differences as :func:`phi`, for
    which the discrete inequality is exact Cauchy-Schwarz.
    """
    g = v.grid
    rg = g.radial
    vals = v.values
    gram = (vals * rg.quad_weights) @ vals.T
    dg = np.diag(gram)
    dist2 = dg[:, None] + dg[None, :] - 2.0 * gram
    d = np.diff(vals, axis=0)
    edge = rg.integrate(d * d) / g.dy
    cum = np.concatenate([[0.0], np.cumsum(edge)])
    kin = np.abs(cum[:, None] - cum[None, :])
    span = np.abs(g.y[:, None] - g.y[None, :])
    return float(np.max(dist2 - kin * span))


def write_trajectory_csv(v: Trajectory, path) -> None:
    """Matrix CSV: first row the radii, first column the ``y`` values."""
    g = v.grid
    top = np.concatenate([[np.nan], g.radial.nodes])
    body = np.column_stack([g.y, v.values])
    with open(path, "w") as fh:
        fh.write(f"# N={g.radial.N} r_max={g.radial.r_max!r} n_r={g.radial.n_r} "
                 f"y_min={g.y_min!r} y_max={g.y_max!r} n_y={g.n_y}\n")
        np.savetxt(fh, np.vstack([top, body]), delimiter=",", fmt="%.17g")


def read_trajectory_csv(path) -> Trajectory:
    """Inverse of :func:`write_trajectory_csv`."""
    with open(path) as fh:
        first = fh.readline()
    meta = dict(tok.split("=") for tok in first.lstrip("#").split())
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    rg = RadialGrid(int(meta["N"]), float(meta["r_max"]), int(meta["n_r"]))
    g = CylinderGrid(rg, float(meta["y_min"]), float(meta["y_max"]), int(meta["n_y"]))
    if not np.allclose(data[0, 1:], rg.nodes, rtol=1e-12, atol=1e-12):
        raise GridMismatch(f"radii in {path} do not match the declared grid")
    return Trajectory(g, data[1:, 1:])


def write_energy_csv(e: EnergyProfile, path) -> None:
    data = np.column_stack([e.y, e.kinetic, e.potential, e.E])
    np.savetxt(path, data, delimiter=",", header="y,kinetic,potential,E", comments="", fmt="%.17g")


def read_energy_csv(path) -> EnergyProfile:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return EnergyProfile(data[:, 0], data[:, 1], data[:, 2], data[:, 3])
