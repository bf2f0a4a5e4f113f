"""Constrained minimisation of the action and extraction of the core segment.

The descent works on a finite window of slices whose two end slices sit
on the level set ``{V = b}``: the left one on the Minus side (or pinned
at zero when ``b = 0``), the right one on the Plus side.  Every trial
point is projected back onto the admissible set: each slice is
rearranged into the monotone cone and any slice that fell below the
level is pushed back onto it along its own ray.  Steps follow the
``H^1`` gradient and are accepted by Armijo backtracking.

Once the descent has located the turning slices, the stationarity
conditions on the core segment are solved by Newton's method.  For
``b > 0`` the half period is an extra unknown fixed by ``V = b`` at the
Minus end; for ``b = 0`` the half trajectory runs from the Plus turning
slice out to a far field where it is clamped to zero.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import (ConstraintProjectionFailed, NoCrossing, NotAboveLevel, NotConverged,
                     NoTransition)
from .nonlinearity import Nonlinearity
from .potential import (PotentialConstants, Side, _classify_values, _Ray, _ray_scan_values,
                        gradient_values, potential_values)
from .radial import RadialField, RadialGrid, rearrange_values
from .sobolev import DIRICHLET, NEUMANN, Preconditioner, YOperator
from .trajectory import (CylinderGrid, Trajectory, phi_terms, read_trajectory_csv,
                         write_trajectory_csv)

logger = logging.getLogger(__name__)


class BoundaryMode(enum.Enum):
    CLAMPED_MINUS = "ClampedMinus"
    FREE_DECAY = "FreeDecay"


@dataclass
class MinimizeConfig:
    """Settings of one minimisation at level ``b``.

    Attributes
    ----------
    b : float
        Level, ``0 <= b < c``.
    seed : RadialField
        Profile whose clipped ray gives the initial trajectory.
    dy : float
        Target ``y`` spacing.
    y_window : (float, float), optional
        Initial window; by default the ray transition plus ``margin`` on
        each side (``far_field`` on the left when ``b = 0``).
    max_iters : int
        Descent iteration budget.
    descent_tol : float
        ``H^1`` projected-gradient size at which the descent hands over to
        the Newton stage.
    tol_grad : float
        Stationarity tolerance on the final core.
    """

    b: float
    seed: RadialField
    dy: float = 0.025
    y_window: tuple | None = None
    margin: float = 1.0
    far_field: float = 16.0
    max_iters: int = 300
    descent_tol: float = 1e-3
    armijo: float = 1e-4
    step_init: float = 1.0
    tol_grad: float = 1e-5
    tol_constraint: float = 1e-9
    boundary_mode: BoundaryMode | None = None
    max_window: float = 200.0
    newton_tol: float = 1e-9
    newton_max_iter: int = 30
    far_field_tol: float = 1e-4
    checkpoint_dir: str | None = None
    checkpoint_every: int = 50

    def mode(self) -> BoundaryMode:
        if self.boundary_mode is not None:
            return self.boundary_mode
        return BoundaryMode.FREE_DECAY if self.b == 0 else BoundaryMode.CLAMPED_MINUS


@dataclass
class CoreSegment:
    """Minimising trajectory between the turning ordinates.

    For ``b = 0`` ``sigma_bar`` is ``-inf`` and ``v`` covers the truncated
    half line ``[tau_bar - Y, tau_bar]``.
    """

    v: Trajectory
    sigma_bar: float
    tau_bar: float
    m_b: float
    iterations: int
    converged: bool
    b: float = 0.0
    grad_norm: float = float("nan")
    phi_history: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


@dataclass
class TailSegment:
    """Explicit tail path and its action."""

    v: Trajectory | None
    cost: float
    s0: float


# -- helpers on single profiles ---------------------------------------------

def _rescale_to_level(grid, u, b, nl, side: Side):
    ray = _Ray(grid, u, nl)
    try:
        t_u = ray.peak()
        if ray.value(t_u) < b:
            raise NotAboveLevel("ray peaks below the level")
        if side is Side.MINUS:
            s = 0.0 if b <= 0 else ray.crossing_below(t_u, b)
        else:
            s = ray.crossing_above(t_u, b)
    except (NotAboveLevel, ValueError) as exc:
        raise ConstraintProjectionFailed(str(exc)) from exc
    return s * u


def initial_trajectory(u_seed: RadialField, b: float, k: PotentialConstants | None,
                       grid: CylinderGrid, nl: Nonlinearity, centre: float | None = None) -> Trajectory:
    """Clipped ray ``alpha u -> y u -> omega u``.

    The transition is centred at ``centre``, by default the middle of the
    grid window.
    """
    rep = ray_scan_checked(u_seed, b, nl)
    if centre is None:
        centre = 0.5 * (grid.y_min + grid.y_max)
    t = np.clip(grid.y - centre + 0.5 * (rep.alpha + rep.omega), rep.alpha, rep.omega)
    return Trajectory(grid, t[:, None] * u_seed.values[None, :])


def ray_scan_checked(u: RadialField, b: float, nl: Nonlinearity):
    return _ray_scan_values(u.grid, u.values, b, nl)


def _segment(radial: RadialGrid, scales, u0, dy):
    n = len(scales)
    grid = CylinderGrid(radial, 0.0, (n - 1) * dy, n)
    return Trajectory(grid, np.asarray(scales)[:, None] * u0[None, :])


def tail_plus(u0: RadialField, b: float, nl: Nonlinearity, dy: float = 0.01) -> TailSegment:
    """Path ``(1 + y^2/2) u0`` from ``u0`` to the Plus crossing ``s0 u0``.

    Raises
    ------
    NoCrossing
        If no scale ``s0 >= 1`` with ``V(s0 u0) = b`` is found.
    """
    grid = u0.grid
    ray = _Ray(grid, u0.values, nl)
    v0 = ray.value(1.0)
    if abs(v0 - b) <= 1e-12 * max(1.0, abs(b)):
        return TailSegment(None, 0.0, 1.0)
    try:
        t_u = ray.peak()
        if t_u >= 1.0 or v0 < b:
            raise NoCrossing("u0 is not on the Plus side above the level")
        s0 = ray.crossing_above(1.0, b)
    except (NotAboveLevel, ValueError) as exc:
        raise NoCrossing(str(exc)) from exc
    y_end = math.sqrt(2.0 * (s0 - 1.0))
    n = max(int(math.ceil(y_end / dy)), 2) + 1
    y = np.linspace(0.0, y_end, n)
    seg = _segment(grid, 1.0 + 0.5 * y * y, u0.values, y[1] - y[0])
    kin, pot = phi_terms(seg.grid, seg.values, b, nl)
    return TailSegment(seg, kin + pot, s0)


def tail_minus(u0: RadialField, b: float, nl: Nonlinearity, dy: float = 0.01) -> TailSegment:
    """Path from the Minus-side profile ``u0`` down to the level (or to 0 for ``b = 0``).

    For ``b > 0`` the path is ``(1 - y^2/2) u0`` down to the crossing scale
    ``s0 < 1``; for ``b = 0`` it is the straight homotopy ``(1 - y) u0``
    on ``[0, 1]``.  The segment is returned in the direction leaving ``u0``.
    """
    grid = u0.grid
    if b == 0:
        if not np.any(u0.values):
            return TailSegment(None, 0.0, 0.0)
        n = max(int(math.ceil(1.0 / dy)), 2) + 1
        y = np.linspace(0.0, 1.0, n)
        seg = _segment(grid, 1.0 - y, u0.values, y[1] - y[0])
        kin, pot = phi_terms(seg.grid, seg.values, 0.0, nl)
        return TailSegment(seg, kin + pot, 0.0)
    ray = _Ray(grid, u0.values, nl)
    v0 = ray.value(1.0)
    if abs(v0 - b) <= 1e-12 * max(1.0, b):
        return TailSegment(None, 0.0, 1.0)
    try:
        t_u = ray.peak()
        if t_u <= 1.0 or v0 < b:
            raise NoCrossing("u0 is not on the Minus side above the level")
        s0 = ray.crossing_below(1.0, b)
    except (NotAboveLevel, ValueError) as exc:
        raise NoCrossing(str(exc)) from exc
    y_end = math.sqrt(2.0 * (1.0 - s0))
    n = max(int(math.ceil(y_end / dy)), 2) + 1
    y = np.linspace(0.0, y_end, n)
    seg = _segment(grid, 1.0 - 0.5 * y * y, u0.values, y[1] - y[0])
    kin, pot = phi_terms(seg.grid, seg.values, b, nl)
    return TailSegment(seg, kin + pot, s0)


# -- projection --------------------------------------------------------------

class _Projector:
    """Cone and level-set projection of a stack of slices."""

    def __init__(self, radial, b, nl, mode: BoundaryMode):
        self.radial, self.b, self.nl, self.mode = radial, b, nl, mode
        self.count = {"rearranged": 0, "rescaled": 0}

    def __call__(self, v):
        rg, b, nl = self.radial, self.b, self.nl
        v = v.copy()
        if self.mode is BoundaryMode.FREE_DECAY:
            v[0] = 0.0
        bad = np.flatnonzero(np.any(v[:, :-1] < v[:, 1:], axis=1) | (v[:, -1] < 0))
        for j in bad:
            v[j] = rearrange_values(rg, v[j])
        self.count["rearranged"] += bad.size
        pot = potential_values(rg, v, nl)
        n = v.shape[0]
        if self.mode is BoundaryMode.CLAMPED_MINUS:
            v[0] = _rescale_to_level(rg, v[0], b, nl, Side.MINUS)
        v[-1] = _rescale_to_level(rg, v[-1], b, nl, Side.PLUS)
        low = np.flatnonzero(pot[1:n - 1] < b) + 1
        for j in low:
            side = _classify_values(rg, v[j], b, nl, tol_level=np.inf)
            v[j] = _rescale_to_level(rg, v[j], b, nl, side)
        self.count["rescaled"] += low.size
        return v


# -- descent -----------------------------------------------------------------

class _Descent:
    """Projected ``H^1`` gradient descent.

    In clamped mode the slices form the core between the two turning
    slices, both free on the level set, and the spacing is not a variable:
    for fixed slice values ``phi = K/dy + dy P`` is minimised by
    ``dy = sqrt(K/P)``, leaving ``2 sqrt(K P)`` as the objective.  In
    free-decay mode the spacing is fixed and the first slice is held at 0.
    """

    def __init__(self, values, dy, b, nl, radial, mode, cfg):
        self.v = np.array(values, dtype=float)
        self.dy = float(dy)
        self.b, self.nl, self.radial, self.mode, self.cfg = b, nl, radial, mode, cfg
        self.clamped = mode is BoundaryMode.CLAMPED_MINUS
        self.project = _Projector(radial, b, nl, mode)
        n = self.v.shape[0]
        self.free = slice(0, n) if self.clamped else slice(1, n)
        if self.clamped:
            self.dy = self.optimal_dy(self.v)
        self._build(self.dy)

    def _build(self, dy):
        n = self.v.shape[0]
        if self.clamped:
            self.yop = YOperator(n, dy, NEUMANN, NEUMANN)
        else:
            self.yop = YOperator(n - 1, dy, DIRICHLET, NEUMANN)
        self.prec = Preconditioner(self.radial, self.yop)
        self._prec_dy = dy

    def _parts(self, v):
        d = np.diff(v, axis=0)
        kin = 0.5 * float(np.sum(self.radial.integrate(d * d)))
        pot = potential_values(self.radial, v, self.nl) - self.b
        return kin, float(pot.sum() - 0.5 * (pot[0] + pot[-1]))

    def optimal_dy(self, v):
        kin, pot = self._parts(v)
        if pot <= 0 or kin <= 0:
            raise ConstraintProjectionFailed("core has no excess potential or no motion")
        return math.sqrt(kin / pot)

    def action(self, v):
        kin, pot = self._parts(v)
        if self.clamped:
            return 2.0 * math.sqrt(max(kin * pot, 0.0))
        return kin / self.dy + self.dy * pot

    def gradient(self, v):
        u = v[self.free]
        return self.yop.apply(u) + gradient_values(self.radial, u, self.nl)

    def inner(self, g, d):
        return float(self.yop.mass @ self.radial.integrate(g * d))

    def direction(self, v, g, step):
        """``H^1`` gradient restricted to the tangent space of the active level constraints.

        End slices are always active.  An interior slice is active when a
        step of the last accepted length would take it below the level; it
        is released again if its multiplier comes out negative.
        """
        rg, b = self.radial, self.b
        d0 = self.prec.solve(g)
        u = v[self.free]
        n = gradient_values(rg, u, self.nl)
        nn = rg.integrate(n * n)
        nd = rg.integrate(n * d0)
        pot = potential_values(rg, u, self.nl)
        ends = np.zeros(u.shape[0], dtype=bool)
        ends[-1] = True
        if self.clamped:
            ends[0] = True
        tol = 1e-10 * max(1.0, b)
        act = pot - step * nd < b + tol
        if b <= 0:
            # near 0 the potential is bounded below by a multiple of the norm,
            # so only Plus-side slices can cross the zero level
            act &= rg.integrate(n * u) < 0
        act = (act | ends) & (nn > 0)
        for _ in range(10):
            idx = np.flatnonzero(act)
            if idx.size == 0:
                return d0
            mu = np.linalg.solve(self.prec.gram(idx, n[idx]), nd[idx])
            drop = (mu < 0) & ~ends[idx]
            if not np.any(drop):
                break
            act[idx[drop]] = False
        load = np.zeros_like(u)
        load[idx] = mu[:, None] * n[idx]
        return d0 - self.prec.solve(load)

    def run(self, max_iters, history):
        cfg = self.cfg
        v = self.v
        f0 = self.action(v)
        step = cfg.step_init
        pg = np.inf
        it = 0
        for it in range(1, max_iters + 1):
            if self.clamped:
                self.dy = self.optimal_dy(v)
                self.yop = YOperator(v.shape[0], self.dy, NEUMANN, NEUMANN)
                if abs(self.dy / self._prec_dy - 1.0) > 0.1:
                    self._build(self.dy)
            g = self.gradient(v)
            d = self.direction(v, g, step)
            accepted = False
            for _ in range(40):
                trial = v.copy()
                trial[self.free] -= step * d
                try:
                    trial = self.project(trial)
                    f1 = self.action(trial)
                except ConstraintProjectionFailed:
                    f1 = np.inf
                dec = self.inner(g, v[self.free] - trial[self.free])
                if f1 <= f0 - cfg.armijo * dec and f1 <= f0 + 1e-12:
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                logger.info("descent: line search stalled at iteration %d", it)
                break
            moved = trial[self.free] - v[self.free]
            pg = math.sqrt(max(self.inner(moved, moved), 0.0)) / step
            v, f0 = trial, f1
            history.append(f0)
            logger.debug("descent %d: phi=%.12g pg=%.3e step=%.2e", it, f0, pg, step)
            step = min(2.0 * step, cfg.step_init)
            if pg < cfg.descent_tol:
                break
        self.v = v
        if self.clamped:
            self.dy = self.optimal_dy(v)
        return it, pg


# -- turning ordinates -------------------------------------------------------

def _minus_distance(grid, u, b, nl):
    """Ray surrogate of dist(u, V_-^b): ``(1 - alpha)_+ ||u||_2``, or ``||u||_2``."""
    l2 = math.sqrt(max(float(grid.integrate(u * u)), 0.0))
    if not np.any(u):
        return 0.0
    try:
        rep = _ray_scan_values(grid, u, b, nl)
    except NotAboveLevel:
        return l2
    return max(1.0 - rep.alpha, 0.0) * l2 if b > 0 else l2


def _detect_indices(values, b, r0, nl, radial, tol_level, skip_first=False):
    pot = potential_values(radial, values, nl)
    low = pot <= b + tol_level
    sig = None
    start = 1 if skip_first else 0
    for j in range(values.shape[0] - 1, start - 1, -1):
        if not low[j]:
            continue
        # at level 0 the Minus component is the zero field alone
        if b <= 0 and np.any(values[j]):
            continue
        if _classify_values(radial, values[j], b, nl, tol_level) is not Side.MINUS:
            continue
        if _minus_distance(radial, values[j], b, nl) <= r0:
            sig = j
            break
    first = start if sig is None else sig + 1
    tau = None
    for j in range(first, values.shape[0]):
        if low[j] and _classify_values(radial, values[j], b, nl, tol_level) is Side.PLUS:
            tau = j
            break
    if tau is None:
        raise NoTransition("no slice reaches the level on the Plus side")
    return sig, tau


def detect_sigma_tau(v: Trajectory, b: float, k: PotentialConstants | None, nl: Nonlinearity,
                     tol_level: float | None = None, free_decay: bool | None = None):
    """Discrete turning ordinates ``(sigma_bar, tau_bar)``.

    ``sigma_bar`` is the last ordinate whose slice lies on the level set
    within ``r0`` of the Minus component, ``tau_bar`` the first later one
    on the Plus side.  ``sigma_bar = -inf`` when no slice qualifies; a
    trajectory in free-decay mode (``b = 0``, first slice clamped at zero)
    does not count its clamped slice.
    """
    g = v.grid
    if tol_level is None:
        tol_level = 1e-10 * max(1.0, b)
    r0 = k.r0 if k is not None else np.inf
    if free_decay is None:
        free_decay = b == 0 and not np.any(v.values[0])
    sig, tau = _detect_indices(v.values, b, r0, nl, g.radial, tol_level, skip_first=free_decay)
    sigma = -math.inf if sig is None else float(g.y[sig])
    return sigma, float(g.y[tau])


# -- Newton stage -------------------------------------------------------------

def _gmres(matvec, prec, rhs, rtol):
    n = rhs.size
    A = LinearOperator((n, n), matvec=matvec, dtype=float)
    M = LinearOperator((n, n), matvec=prec, dtype=float)
    x, info = gmres(A, rhs, M=M, rtol=rtol, atol=0.0, restart=80, maxiter=20)
    return x, info


class _CoreNewton:
    """Newton iteration for the stationarity system of the core segment."""

    def __init__(self, radial, nl, b, mode):
        self.radial, self.nl, self.b, self.mode = radial, nl, b, mode

    def _ops(self, n, dy):
        right = NEUMANN if self.mode is BoundaryMode.CLAMPED_MINUS else DIRICHLET
        yop = YOperator(n, dy, NEUMANN, right)
        return yop, Preconditioner(self.radial, yop)

    def residual(self, v, yop):
        return yop.apply(v) + gradient_values(self.radial, v, self.nl)

    def norm(self, r, yop):
        return math.sqrt(max(float(yop.mass @ self.radial.integrate(r * r)), 0.0))

    def solve(self, v, T, dy, tol, max_iter):
        rg, nl = self.radial, self.nl
        n, n_r = v.shape
        periodic = self.mode is BoundaryMode.CLAMPED_MINUS
        w = rg.quad_weights
        history = []
        for it in range(max_iter + 1):
            if periodic:
                dy = T / (n - 1)
            yop, prec = self._ops(n, dy)
            F = self.residual(v, yop)
            nF = self.norm(F, yop)
            C = float(potential_values(rg, v[0], nl)) - self.b if periodic else 0.0
            history.append((nF, abs(C)))
            logger.debug("newton %d: |F|=%.3e |C|=%.3e T=%s", it, nF, abs(C), T)
            if nF < tol and abs(C) < 1e-12 * max(1.0, self.b):
                return v, T, dy, nF, history, True
            if it == max_iter:
                break
            dfv = nl.df(v)

            def matvec(x, yop=yop, dfv=dfv):
                x = x.reshape(n, n_r)
                return (yop.apply(x) - rg.laplacian_values(x) + x - dfv * x).ravel()

            def pmat(x, prec=prec):
                return prec.solve(x.reshape(n, n_r)).ravel()

            rtol = max(1e-12, min(1e-4, 1e-2 * nF))
            x1, _ = _gmres(matvec, pmat, -F.ravel(), rtol)
            x1 = x1.reshape(n, n_r)
            dT = 0.0
            if periodic:
                FT = -(2.0 / T) * yop.apply(v)
                x2, _ = _gmres(matvec, pmat, -FT.ravel(), max(rtol, 1e-10))
                x2 = x2.reshape(n, n_r)
                cv = w * gradient_values(rg, v[0], nl)
                denom = float(cv @ x2[0])
                dT = -(C + float(cv @ x1[0])) / denom
                dv = x1 + dT * x2
            else:
                dv = x1
            merit = nF ** 2 + C ** 2
            lam = 1.0
            while lam > 1e-4:
                vt = v + lam * dv
                Tt = T + lam * dT if periodic else T
                if periodic and Tt <= 0:
                    lam *= 0.5
                    continue
                dyt = Tt / (n - 1) if periodic else dy
                yt = YOperator(n, dyt, NEUMANN, yop.right)
                Ft = self.residual(vt, yt)
                Ct = float(potential_values(rg, vt[0], nl)) - self.b if periodic else 0.0
                if self.norm(Ft, yt) ** 2 + Ct ** 2 < merit:
                    break
                lam *= 0.5
            else:
                break
            v, T = vt, Tt
        return v, T, dy, history[-1][0], history, False


# -- driver -------------------------------------------------------------------

def _free_decay_window(rep, cfg):
    if cfg.y_window is not None:
        return cfg.y_window
    # the Plus end is free on the level set, so the window stops there
    return (-cfg.far_field - (rep.omega - rep.alpha), 0.0)


def _ray_core(seed: RadialField, rep, dy):
    """Slices ``t u`` for ``t`` from ``alpha`` to ``omega``, at most ``dy`` apart."""
    m = max(int(math.ceil((rep.omega - rep.alpha) / dy)), 8)
    t = np.linspace(rep.alpha, rep.omega, m + 1)
    return t[:, None] * seed.values[None, :]


def _far_field_growth(values, radial, far_tol):
    """True when the far end of a free-decay window has not decayed yet."""
    return math.sqrt(float(radial.integrate(values[1] ** 2))) > far_tol


def _checkpoint(cfg, values, y0, dy, radial, iteration, phi_val, proj):
    if not cfg.checkpoint_dir:
        return
    d = Path(cfg.checkpoint_dir)
    d.mkdir(parents=True, exist_ok=True)
    n = values.shape[0]
    traj = Trajectory(CylinderGrid(radial, y0, y0 + (n - 1) * dy, n), values)
    tmp = d / "checkpoint.csv.tmp"
    write_trajectory_csv(traj, tmp)
    tmp.replace(d / "checkpoint.csv")
    meta = {"iteration": iteration, "phi": phi_val, "b": cfg.b, "dy": dy,
            "mode": cfg.mode().value, "rearranged": proj.count["rearranged"],
            "rescaled": proj.count["rescaled"]}
    tmp = d / "checkpoint.json.tmp"
    tmp.write_text(json.dumps(meta, indent=2))
    tmp.replace(d / "checkpoint.json")


def load_checkpoint(directory):
    """Trajectory and sidecar metadata of a saved checkpoint, or ``None``."""
    d = Path(directory)
    if not (d / "checkpoint.csv").exists() or not (d / "checkpoint.json").exists():
        return None
    return read_trajectory_csv(d / "checkpoint.csv"), json.loads((d / "checkpoint.json").read_text())


def _polish_clamped(newton, values, T, cfg):
    """Newton on the core, resampling to keep the spacing near ``cfg.dy``."""
    v = values
    for _ in range(4):
        v, T, dyc, res, hist, ok = newton.solve(v, T, T / (v.shape[0] - 1), cfg.newton_tol,
                                                cfg.newton_max_iter)
        m = max(int(round(T / cfg.dy)), 3)
        if not ok or m == v.shape[0] - 1:
            break
        s_old = np.linspace(0.0, 1.0, v.shape[0])
        v = CubicSpline(s_old, v, axis=0, bc_type="clamped")(np.linspace(0.0, 1.0, m + 1))
    return v, T, res, hist, ok


def minimize(config: MinimizeConfig, k: PotentialConstants | None, nl: Nonlinearity,
             resume: bool = False) -> CoreSegment:
    """Minimise the action at level ``config.b`` and return the core segment.

    The descent stage brings the iterate close to a minimiser; the Newton
    stage then solves the stationarity conditions of the core to
    ``newton_tol``.

    Raises
    ------
    NotConverged
        When the final core is not stationary to ``tol_grad``; the best
        core is attached as ``exc.result``.
    """
    t_start = time.perf_counter()
    cfg = config
    b, radial = float(cfg.b), cfg.seed.grid
    mode = cfg.mode()
    clamped = mode is BoundaryMode.CLAMPED_MINUS
    tol_level = 1e-10 * max(1.0, b)
    rep = ray_scan_checked(cfg.seed, b, nl)
    if clamped:
        values, y0, dy = _ray_core(cfg.seed, rep, cfg.dy), 0.0, cfg.dy
    else:
        ya, yb = _free_decay_window(rep, cfg)
        if yb - ya < 4 * cfg.dy:
            raise ValueError("window shorter than four steps")
        grid = CylinderGrid.from_spacing(radial, ya, yb, cfg.dy)
        centre = grid.y_max - 0.5 * (rep.omega - rep.alpha)
        values = np.array(initial_trajectory(cfg.seed, b, k, grid, nl, centre).values)
        values[0] = 0.0
        y0, dy = grid.y_min, grid.dy
    if resume and cfg.checkpoint_dir:
        saved = load_checkpoint(cfg.checkpoint_dir)
        if saved is not None and saved[1].get("mode") == mode.value:
            traj, meta = saved
            values, y0, dy = np.array(traj.values), traj.grid.y_min, traj.grid.dy
            logger.info("resuming from checkpoint at iteration %s", meta.get("iteration"))

    history: list = []
    total = 0
    pg = np.inf
    counts = {"rearranged": 0, "rescaled": 0}
    for _round in range(50):
        budget = cfg.max_iters - total
        if budget <= 0:
            break
        desc = _Descent(values, dy, b, nl, radial, mode, cfg)
        chunk = min(budget, cfg.checkpoint_every)
        its, pg = desc.run(chunk, history)
        total += its
        values, dy = desc.v, desc.dy
        for key in counts:
            counts[key] += desc.project.count[key]
        _checkpoint(cfg, values, y0, dy, radial, total, history[-1] if history else None,
                    desc.project)
        if not clamped:
            grow = _far_field_growth(values, radial, cfg.far_field_tol)
            if grow and (values.shape[0] - 1) * dy < cfg.max_window:
                pad = max(int(round(2.0 / dy)), 4)
                values = np.vstack([np.zeros((pad, values.shape[1])), values])
                y0 -= pad * dy
                logger.info("far field grown to %d slices", values.shape[0])
                continue
        if pg < cfg.descent_tol or its < chunk:
            break

    newton = _CoreNewton(radial, nl, b, mode)
    r0 = k.r0 if k is not None else np.inf
    if clamped:
        T = (values.shape[0] - 1) * dy
        v_core, T, res, nh, ok = _polish_clamped(newton, values, T, cfg)
        m = v_core.shape[0] - 1
        dyc = T / m
        # locate the turning slices on the core continued by its rest slices
        pad = max(int(math.ceil(cfg.margin / dyc)), 2)
        padded = np.vstack([np.repeat(v_core[:1], pad, axis=0), v_core,
                            np.repeat(v_core[-1:], pad, axis=0)])
        sig, tau = _detect_indices(padded, b, r0, nl, radial, tol_level)
        if sig is None:
            raise NoTransition("no Minus-side turning slice found")
        centre = 0.5 * sum(cfg.y_window) if cfg.y_window is not None else 0.0
        y_pad0 = centre - 0.5 * T - pad * dyc
        sigma_bar, tau_bar = y_pad0 + sig * dyc, y_pad0 + tau * dyc
        v_core = padded[sig:tau + 1]
        if v_core.shape[0] < 4:
            raise NoTransition("core segment shorter than four slices")
        cg = CylinderGrid(radial, sigma_bar, tau_bar, v_core.shape[0])
        window = [sigma_bar, tau_bar]
    else:
        n = values.shape[0]
        wgrid = CylinderGrid(radial, y0, y0 + (n - 1) * dy, n)
        _, tau = _detect_indices(values, b, r0, nl, radial, tol_level, skip_first=True)
        # half line from the Plus turning slice outwards, reversed
        half = values[1:tau + 1][::-1]
        v_rev, _, _, res, nh, ok = newton.solve(half, None, dy, cfg.newton_tol, cfg.newton_max_iter)
        v_core = v_rev[::-1]
        tau_bar = float(wgrid.y[tau])
        sigma_bar = -math.inf
        cg = CylinderGrid(radial, tau_bar - (v_core.shape[0] - 1) * dy, tau_bar, v_core.shape[0])
        window = [wgrid.y_min, wgrid.y_max]
    if np.any(v_core[:, :-1] < v_core[:, 1:]):
        logger.warning("core slices left the monotone cone after the Newton stage")
    traj = Trajectory(cg, v_core)
    kin, pot = phi_terms(cg, v_core, b, nl)
    m_b = kin + pot
    converged = bool(ok and res < cfg.tol_grad)
    seg = CoreSegment(
        v=traj, sigma_bar=sigma_bar, tau_bar=tau_bar, m_b=m_b, iterations=total,
        converged=converged, b=b, grad_norm=res, phi_history=history,
        diagnostics={"descent_pg": pg, "newton_history": nh, "window": window,
                     "descent_phi": history[-1] if history else None,
                     "rearranged": counts["rearranged"], "rescaled": counts["rescaled"],
                     "seconds": time.perf_counter() - t_start})
    logger.info("b=%.6g: m_b=%.10g sigma=%.6g tau=%.6g residual=%.2e (%d descent its)",
                b, m_b, sigma_bar, tau_bar, res, total)
    if not converged:
        raise NotConverged(f"core residual {res:.3e} above tolerance {cfg.tol_grad:.1e}", seg)
    return seg
