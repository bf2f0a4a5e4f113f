"""Assembly of the full solution from a core segment, and its verification.

For ``b > 0`` the core on ``[sigma_bar, tau_bar]`` is shifted to ``[0, T]``
and reflected evenly about ``y = T``, giving one period ``[0, 2T]`` whose
end slices coincide.  For ``b = 0`` the half trajectory ending at the Plus
turning slice is reflected about that slice, giving the homoclinic on a
symmetric window ``[-Y, Y]``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CoreNotConverged
from .minimizer import CoreSegment
from .nonlinearity import Nonlinearity
from .potential import Side, _classify_values, ground_state, potential_values
from .radial import RadialGrid
from .trajectory import (CylinderGrid, Trajectory, energy_profile, pde_residual, phi_terms,
                         read_trajectory_csv, write_energy_csv, write_trajectory_csv)

logger = logging.getLogger(__name__)


@dataclass
class BrakeOrbitSolution:
    """Assembled solution over one period (``b > 0``) or a symmetric window (``b = 0``).

    ``T_b`` is the half period, ``inf`` for the homoclinic.  ``n_half``
    is the index of the Plus turning slice (``y = T_b``, or ``y = 0`` for
    the homoclinic).
    """

    v: Trajectory
    T_b: float
    b: float
    n_half: int
    E_target: float = field(init=False)
    provenance: dict = field(default_factory=dict)
    core_residual: float | None = None

    def __post_init__(self):
        self.E_target = -self.b

    @property
    def periodic(self) -> bool:
        return self.b > 0


def provenance_hash(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def assemble(core: CoreSegment, b: float, nl: Nonlinearity | None = None,
             provenance: dict | None = None) -> BrakeOrbitSolution:
    """Reflect (and, for ``b > 0``, periodically close) a converged core.

    With ``nl`` given, the residual of the core is stored for comparison
    with the assembled one.

    Raises
    ------
    CoreNotConverged
        If ``core.converged`` is false.
    """
    if not core.converged:
        raise CoreNotConverged("core segment did not converge")
    g = core.v.grid
    vals = core.v.values
    M = vals.shape[0] - 1
    full = np.concatenate([vals, vals[-2::-1]], axis=0)
    prov = dict(provenance or {})
    core_res = pde_residual(core.v, nl).l2 if nl is not None else None
    if b > 0:
        if not math.isfinite(core.sigma_bar):
            raise CoreNotConverged("finite sigma_bar required for b > 0")
        T = core.tau_bar - core.sigma_bar
        grid = CylinderGrid(g.radial, 0.0, 2.0 * T, 2 * M + 1)
        sol = BrakeOrbitSolution(Trajectory(grid, full), T, b, M, provenance=prov)
    else:
        Y = M * g.dy
        grid = CylinderGrid(g.radial, -Y, Y, 2 * M + 1)
        sol = BrakeOrbitSolution(Trajectory(grid, full), math.inf, b, M, provenance=prov)
    sol.core_residual = core_res
    return sol


def half_trajectory(sol: BrakeOrbitSolution) -> Trajectory:
    """Slices ``0..n_half`` of the assembled solution."""
    g = sol.v.grid
    n = sol.n_half + 1
    return Trajectory(CylinderGrid(g.radial, g.y_min, g.y[sol.n_half], n), sol.v.values[:n])


def mountain_pass_crosscheck(sol: BrakeOrbitSolution, nl: Nonlinearity, radial: RadialGrid | None = None):
    """Compare the homoclinic action with the ground-state level one dimension up.

    Returns a dict with ``m0`` (action of the half trajectory), ``phi_full``,
    ``c_next`` (ground-state level in dimension ``N + 1``) and
    ``ratio = c_next / (2 m0)``.  The radial grid used for ``c_next``
    defaults to the solution's radial grid in dimension ``N + 1``.
    """
    if sol.b != 0:
        raise ValueError("the cross-check applies to the b = 0 solution")
    g = sol.v.grid
    half = half_trajectory(sol)
    k, p = phi_terms(half.grid, half.values, 0.0, nl)
    m0 = k + p
    kf, pf = phi_terms(g, sol.v.values, 0.0, nl)
    rg = g.radial
    if radial is None:
        radial = RadialGrid(rg.N + 1, rg.r_max, rg.n_r)
    gs = ground_state(nl, radial)
    out = {"m0": m0, "phi_full": kf + pf, "c_next": gs.c, "ratio": gs.c / (2.0 * m0)}
    # diagnostic only: distance to the (x, y)-radial ground state
    rho = np.hypot(rg.nodes[None, :], g.y[:, None])
    ref = np.interp(rho, radial.nodes, gs.w0.values, right=0.0)
    out["radial_sup_distance"] = float(np.max(np.abs(sol.v.values - ref)))
    return out


# -- verdict --------------------------------------------------------------------

def _check(name, value, threshold, passed, note=""):
    d = {"name": name, "value": float(value) if value is not None else None,
         "threshold": threshold, "passed": bool(passed)}
    if note:
        d["note"] = note
    return d


def _interior_radii(rg: RadialGrid, v) -> np.ndarray:
    """Radial nodes outside the Dirichlet boundary ring.

    The ring is where the profile has decayed below ``1e-12`` of its peak,
    past which roundoff decides the signs.
    """
    peak = np.max(np.abs(v))
    live = np.max(np.abs(v), axis=0) > 1e-12 * peak
    live[-1] = False
    return live


def verify(sol: BrakeOrbitSolution, nl: Nonlinearity, c: float) -> dict:
    """Evaluate every qualitative property of the assembled solution.

    Returns a JSON-ready report with one entry per check (measured value,
    threshold, pass flag) and an overall ``passed`` flag.
    """
    g = sol.v.grid
    rg = g.radial
    v = sol.v.values
    b = sol.b
    scale = max(1.0, c)
    checks = []
    n = v.shape[0]
    M = sol.n_half

    ep = energy_profile(sol.v, nl)
    if sol.periodic:
        # centred differences across the period seam
        dv = (np.roll(v, -1, axis=0) - np.roll(v, 1, axis=0))[:-1] / (2 * g.dy)
        kin = 0.5 * rg.integrate(dv * dv)
        E = kin - ep.potential[:-1]
        dev = np.abs(E + b)
    else:
        dev = np.abs(ep.E[1:-1] + b)
    checks.append(_check("energy_constant", dev.max(), 1e-3 * scale, dev.max() < 1e-3 * scale))

    res = pde_residual(sol.v, nl, periodic=sol.periodic).l2
    checks.append(_check("pde_residual", res, 1e-3, res < 1e-3))
    if sol.core_residual is not None:
        checks.append(_check("residual_vs_core", res, 2 * sol.core_residual,
                             res < 2 * sol.core_residual))

    live = _interior_radii(rg, v)
    vmin = float(v[:, live].min())
    checks.append(_check("positivity", vmin, 0.0, vmin > 0))

    dr = np.diff(v, axis=1)
    checks.append(_check("radial_monotone", dr.max(), 0.0, dr.max() <= 0))
    strict = dr[:, live[:-1] & live[1:]] < 0
    frac = float(strict.mean()) if strict.size else 0.0
    checks.append(_check("radial_strict_fraction", frac, None, True,
                         note="share of interior nodes with d_r v < 0"))

    if sol.periodic:
        dy = np.diff(v[:M + 1], axis=0)[:, live]
        checks.append(_check("y_monotone_half_period", dy.min(), 0.0, dy.min() > 0))
        refl = max(float(np.max(np.abs(v[M + 1:] - v[M - 1::-1]))),
                   float(np.max(np.abs(v - v[::-1]))))
        checks.append(_check("symmetry", refl, 1e-12, refl <= 1e-12))
        stitch = float(np.max(np.abs(v[0] - v[-1])))
        checks.append(_check("period_stitch", stitch, 1e-12, stitch <= 1e-12))
        d0 = (v[1] - v[-2]) / (2 * g.dy)
        dT = (v[M + 1] - v[M - 1]) / (2 * g.dy)
        stat = max(math.sqrt(rg.integrate(d0 * d0)), math.sqrt(rg.integrate(dT * dT)))
        checks.append(_check("endpoint_stationarity", stat, 1e-8, stat < 1e-8))
        s0 = _classify_values(rg, v[0], b, nl)
        sT = _classify_values(rg, v[M], b, nl)
        checks.append(_check("turning_sides", None, None, s0 is Side.MINUS and sT is Side.PLUS,
                             note=f"v(0): {s0.value}, v(T): {sT.value}"))
        checks.append(_check("half_period", sol.T_b, None, sol.T_b > 0))
    else:
        dy = np.diff(v[:M + 1], axis=0)[:, live]
        checks.append(_check("y_monotone_half_line", dy.min(), 0.0, dy.min() > 0))
        refl = float(np.max(np.abs(v - v[::-1])))
        checks.append(_check("symmetry", refl, 1e-12, refl <= 1e-12))
        far = [math.sqrt(rg.integrate(v[j] ** 2)) for j in (0, n - 1)]
        checks.append(_check("far_field_norm", max(far), 1e-4, max(far) < 1e-4))
        farV = float(np.max(potential_values(rg, v[[0, -1]], nl)))
        checks.append(_check("far_field_potential", farV, 1e-6, farV < 1e-6))
        sT = _classify_values(rg, v[M], b, nl)
        checks.append(_check("turning_side", None, None, sT is Side.PLUS, note=sT.value))

    # one-sided limit of d_y v at a turning slice, extrapolated linearly
    # from the centred derivatives one and two steps inside
    def limit(j, s):
        d1 = (v[j + 2 * s] - v[j]) / (2 * g.dy)
        d2 = (v[j + 3 * s] - v[j + s]) / (2 * g.dy)
        return math.sqrt(rg.integrate((2 * d1 - d2) ** 2))

    kd = max(limit(0, 1), limit(M, -1)) if sol.periodic else limit(M, -1)
    checks.append(_check("turning_kinetic", kd, 1e-2 * math.sqrt(c), kd < 1e-2 * math.sqrt(c),
                         note="|d_y v| at the turning slices, one-sided limit"))
    lo, hi = (2, M - 2) if sol.periodic else (max(1, M // 4), M - 2)
    if hi > lo:
        seg = ep.E[lo:hi + 1]
        flat = float(np.max(np.abs(seg - np.median(seg))))
        checks.append(_check("energy_flatness", flat, 1e-3 * scale, flat < 1e-3 * scale))

    passed = all(ch["passed"] for ch in checks)
    return {"b": b, "T_b": sol.T_b if math.isfinite(sol.T_b) else None, "E_target": -b,
            "passed": passed, "n_passed": sum(ch["passed"] for ch in checks),
            "n_checks": len(checks), "checks": checks}


# -- bundle I/O ----------------------------------------------------------------

def write_solution(sol: BrakeOrbitSolution, directory, nl: Nonlinearity, verdict: dict | None = None):
    """Write trajectory, energy profile, metadata and verdict into ``directory``.

    Files go to a temporary name first and are renamed into place.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    _atomic(d / "trajectory.csv", lambda p: write_trajectory_csv(sol.v, p))
    _atomic(d / "energy.csv", lambda p: write_energy_csv(energy_profile(sol.v, nl), p))
    meta = {"b": sol.b, "T_b": sol.T_b if math.isfinite(sol.T_b) else None,
            "n_half": sol.n_half, "E_target": sol.E_target, "core_residual": sol.core_residual,
            "provenance": sol.provenance}
    _atomic(d / "solution.json", lambda p: Path(p).write_text(json.dumps(meta, indent=2, sort_keys=True)))
    if verdict is not None:
        _atomic(d / "verdict.json", lambda p: Path(p).write_text(json.dumps(verdict, indent=2)))


def read_solution(directory) -> BrakeOrbitSolution:
    d = Path(directory)
    meta = json.loads((d / "solution.json").read_text())
    v = read_trajectory_csv(d / "trajectory.csv")
    T = meta["T_b"] if meta["T_b"] is not None else math.inf
    sol = BrakeOrbitSolution(v, T, meta["b"], meta["n_half"], provenance=meta.get("provenance", {}))
    sol.core_residual = meta.get("core_residual")
    return sol


def _atomic(path: Path, writer):
    tmp = path.with_name(path.name + ".tmp")
    writer(tmp)
    tmp.replace(path)
