"""The energy V on radial profiles, its derivatives, ray geometry and constants.

``V(u) = 1/2 ||u||_{H^1}^2 - int F(u)`` is evaluated with the grid
quadrature.  Along a ray ``t -> V(t u)`` the energy rises to a single
peak at ``t_u`` and then falls; the two crossings of a level ``b`` are
``alpha`` (Minus side, towards 0) and ``omega`` (Plus side).
"""

from __future__ import annotations

import enum
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solve_banded
from scipy.optimize import brentq

from .errors import DictionaryTooSmall, GridMismatch, InvalidField, NotAboveLevel, ShootingFailed
from .nonlinearity import Nonlinearity, PurePower
from .radial import RadialField, RadialGrid

logger = logging.getLogger(__name__)

_XTOL = 1e-15
_RTOL = 4 * np.finfo(float).eps


# -- array kernels (rows are independent profiles) ---------------------------

def potential_values(grid: RadialGrid, u, nl: Nonlinearity):
    """``V`` of each profile along the last axis."""
    u = np.asarray(u, dtype=float)
    return 0.5 * (grid.integrate(u * u) + grid.grad_sq_values(u)) - grid.integrate(nl.F(u))


def gradient_values(grid: RadialGrid, u, nl: Nonlinearity):
    """``L^2`` representative ``-Lap u + u - f(u)`` of ``V'(u)``."""
    u = np.asarray(u, dtype=float)
    return -grid.laplacian_values(u) + u - nl.f(u)


def _check(u: RadialField):
    if not np.all(np.isfinite(u.values)):
        raise InvalidField("field contains non-finite values")


def evaluate_V(u: RadialField, nl: Nonlinearity) -> float:
    """Energy ``V(u) = 1/2 ||u||^2 - int F(u)``."""
    _check(u)
    return float(potential_values(u.grid, u.values, nl))


def grad_V(u: RadialField, nl: Nonlinearity) -> RadialField:
    """``g`` with ``V'(u) h = <g, h>_2`` for every ``h`` on the grid."""
    _check(u)
    return RadialField(u.grid, gradient_values(u.grid, u.values, nl))


def dirichlet_form(u: RadialField, h: RadialField, nl: Nonlinearity) -> float:
    """Second variation ``V''(u)[h, h]``."""
    if u.grid != h.grid:
        raise GridMismatch(f"{u.grid!r} != {h.grid!r}")
    g = u.grid
    hv = h.values
    return float(g.grad_sq_values(hv) + g.integrate(hv * hv * (1.0 - nl.df(u.values))))


# -- rays --------------------------------------------------------------------

@dataclass(frozen=True)
class RayReport:
    """Peak scale and level crossings of ``t -> V(t u)``."""

    t_u: float
    alpha: float
    omega: float
    v_at_tu: float


class _Ray:
    """Cached one-dimensional restriction ``t -> V(t u)``."""

    def __init__(self, grid: RadialGrid, u, nl: Nonlinearity):
        self.grid, self.u, self.nl = grid, np.asarray(u, dtype=float), nl
        self.quad = float(grid.integrate(self.u ** 2) + grid.grad_sq_values(self.u))
        # pure powers reduce the ray to two moments
        self._moment = None
        if isinstance(nl, PurePower):
            self._moment = float(grid.integrate(np.abs(self.u) ** nl.mu))

    def value(self, t):
        if self._moment is not None:
            p = self.nl.p
            return 0.5 * t * t * self.quad - abs(t) ** (p + 1) * self._moment / (p + 1)
        return 0.5 * t * t * self.quad - float(self.grid.integrate(self.nl.F(t * self.u)))

    def slope(self, t):
        if self._moment is not None:
            return t * self.quad - abs(t) ** self.nl.p * self._moment
        return t * self.quad - float(self.grid.integrate(self.nl.f(t * self.u) * self.u))

    def peak(self):
        lo, hi = 1.0, 1.0
        for _ in range(200):
            if self.slope(lo) > 0:
                break
            lo *= 0.5
        else:
            raise NotAboveLevel("ray derivative never positive")
        hi = max(hi, lo)
        for _ in range(200):
            if self.slope(hi) < 0:
                break
            hi *= 2.0
        else:
            raise NotAboveLevel("ray never turns down")
        if lo == hi:
            lo = hi / 2.0
            while self.slope(lo) <= 0:
                lo *= 0.5
        return brentq(self.slope, lo, hi, xtol=_XTOL * hi, rtol=_RTOL)

    def crossing_below(self, t_u, level):
        """Largest ``t < t_u`` with ``V(t u) = level`` (``level > 0``)."""
        g = lambda t: self.value(t) - level  # noqa: E731
        return brentq(g, 0.0, t_u, xtol=_XTOL * t_u, rtol=_RTOL)

    def crossing_above(self, t_u, level):
        g = lambda t: self.value(t) - level  # noqa: E731
        hi = 2.0 * t_u
        for _ in range(200):
            if g(hi) < 0:
                break
            hi *= 2.0
        else:
            raise NotAboveLevel("ray does not descend below the level")
        return brentq(g, t_u, hi, xtol=_XTOL * hi, rtol=_RTOL)


def ray_scan(u: RadialField, b: float, nl: Nonlinearity) -> RayReport:
    """Locate the peak ``t_u`` and the crossings ``alpha < t_u < omega`` of level ``b``.

    Raises
    ------
    NotAboveLevel
        If ``V(t_u u) < b``.
    """
    _check(u)
    if not np.any(u.values):
        raise InvalidField("ray scan of the zero field")
    return _ray_scan_values(u.grid, u.values, b, nl)


def _ray_scan_values(grid, u, b, nl) -> RayReport:
    ray = _Ray(grid, u, nl)
    t_u = ray.peak()
    top = ray.value(t_u)
    if top < b:
        raise NotAboveLevel(f"ray peaks at {top:.6g} below level {b:.6g}")
    alpha = 0.0 if b <= 0 else ray.crossing_below(t_u, b)
    omega = ray.crossing_above(t_u, b)
    return RayReport(t_u, alpha, omega, top)


class Side(enum.Enum):
    MINUS = "Minus"
    PLUS = "Plus"
    ABOVE = "AboveLevel"


def classify(u: RadialField, b: float, nl: Nonlinearity, tol_level: float | None = None) -> Side:
    """Locate ``u`` relative to the sublevel set ``{V <= b}``.

    Parameters
    ----------
    tol_level : float, optional
        Slack on ``V(u) <= b``; defaults to ``1e-10 max(1, b)`` so that
        ray-rescaled slices sitting on the level classify as inside.
    """
    return _classify_values(u.grid, u.values, b, nl, tol_level)


def _classify_values(grid, u, b, nl, tol_level=None) -> Side:
    if tol_level is None:
        tol_level = 1e-10 * max(1.0, b)
    if not np.any(u):
        return Side.MINUS
    if potential_values(grid, u, nl) > b + tol_level:
        return Side.ABOVE
    h1 = float(grid.integrate(u * u) + grid.grad_sq_values(u))
    d = float(grid.integrate(gradient_values(grid, u, nl) * u))
    tol_tie = 1e-10 * max(1.0, h1)
    if d > tol_tie:
        return Side.MINUS
    if d < -tol_tie:
        return Side.PLUS
    t_u = _Ray(grid, u, nl).peak()
    return Side.MINUS if t_u > 1.0 else Side.PLUS


# -- ground state ------------------------------------------------------------

@dataclass
class GroundState:
    """Positive radial critical point ``w0`` and the level ``c = V(w0)``."""

    w0: RadialField
    c: float
    amplitude: float
    residual: float
    newton_iterations: int


def _shoot(a, N, nl, r_end, rtol):
    """Integrate the radial ODE from amplitude ``a``; +1 overshoot, -1 undershoot."""
    k = float(a - nl.f(a))
    if k >= 0:
        return -1, None
    r0 = 1e-6
    y0 = [a + k * r0 * r0 / (2 * N), k * r0 / N]

    def rhs(r, y):
        return [y[1], -(N - 1) / r * y[1] + y[0] - float(nl.f(y[0]))]

    def cross(r, y):
        return y[0]

    def turn(r, y):
        return y[1]

    cross.terminal, cross.direction = True, -1
    turn.terminal, turn.direction = True, 1
    sol = solve_ivp(rhs, (r0, r_end), y0, method="DOP853", rtol=rtol, atol=1e-14,
                    events=(cross, turn), dense_output=True)
    if sol.t_events[0].size:
        return 1, sol
    if sol.t_events[1].size:
        return -1, sol
    # ran out of radius without deciding: decide by the sign of the final slope
    return (1 if sol.y[1, -1] < 0 and sol.y[0, -1] < 0 else -1), sol


def _newton_polish(grid, u, nl, tol=1e-11, max_iter=50):
    w = grid.quad_weights

    def resid(v):
        return gradient_values(grid, v, nl)

    def rnorm(r):
        return float(np.sqrt(grid.integrate(r * r)))

    r = resid(u)
    nr = rnorm(r)
    it = 0
    base = grid.banded_stiffness()
    for it in range(1, max_iter + 1):
        if nr < tol:
            break
        ab = np.zeros((3, grid.n_r))
        ab[0, 1:] = base[0, 1:]
        ab[1] = base[1] + w * (1.0 - nl.df(u))
        ab[2, :-1] = base[0, 1:]
        step = solve_banded((1, 1), ab, -w * r)
        lam = 1.0
        while lam > 1e-6:
            trial = u + lam * step
            rt = resid(trial)
            nt = rnorm(rt)
            if nt < nr:
                break
            lam *= 0.5
        else:
            break
        u, r, nr = trial, rt, nt
    return u, nr, it


def ground_state(nl: Nonlinearity, grid: RadialGrid, amp_range=(1e-3, 1e3),
                 rtol: float = 1e-11) -> GroundState:
    """Positive radial ground state by shooting on ``w(0)`` and Newton polish.

    Parameters
    ----------
    nl : Nonlinearity
    grid : RadialGrid
        Target grid; its dimension ``N`` is the dimension of the problem.
    amp_range : (float, float)
        Amplitudes scanned to bracket the shooting parameter.

    Raises
    ------
    ShootingFailed
        If no overshoot/undershoot bracket exists in ``amp_range`` or the
        Newton polish does not reach a residual below ``1e-6``.
    """
    N = grid.N
    r_end = max(3.0 * grid.r_max, 60.0)
    amps = np.geomspace(amp_range[0], amp_range[1], 121)
    lo = hi = None
    prev = None
    for a in amps:
        s, _ = _shoot(a, N, nl, r_end, 1e-8)
        if s > 0 and prev is not None:
            lo, hi = prev, a
            break
        prev = a if s < 0 else None
    if lo is None:
        raise ShootingFailed(f"no shooting bracket in amplitude range {amp_range}")
    sol_lo = sol_hi = None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        s, sol = _shoot(mid, N, nl, r_end, rtol)
        if s > 0:
            hi, sol_hi = mid, sol
        else:
            lo, sol_lo = mid, sol
        if hi - lo <= 4e-15 * hi:
            break
    if sol_lo is None:
        _, sol_lo = _shoot(lo, N, nl, r_end, rtol)
    if sol_hi is None:
        _, sol_hi = _shoot(hi, N, nl, r_end, rtol)

    # trust the shot only where the two bracketing trajectories agree
    r = grid.nodes
    r_stop = min(sol_lo.t[-1], sol_hi.t[-1])
    rr = np.linspace(1e-6, r_stop, 4000)
    wl, wh = sol_lo.sol(rr)[0], sol_hi.sol(rr)[0]
    bad = np.flatnonzero(np.abs(wl - wh) > 1e-6 * np.abs(wl))
    r_cut = rr[bad[0] - 1] if bad.size and bad[0] > 0 else r_stop
    r_cut = min(r_cut, grid.r_max)
    inside = r <= r_cut
    prof = np.empty_like(r)
    prof[inside] = 0.5 * (sol_lo.sol(np.maximum(r[inside], 1e-6))[0]
                          + sol_hi.sol(np.maximum(r[inside], 1e-6))[0])
    w_cut = 0.5 * (sol_lo.sol(r_cut)[0] + sol_hi.sol(r_cut)[0])
    prof[~inside] = w_cut * np.exp(-(r[~inside] - r_cut)) * (r_cut / r[~inside]) ** ((N - 1) / 2)

    u, res, its = _newton_polish(grid, prof, nl)
    if res >= 1e-6 or not np.all(u > 0):
        raise ShootingFailed(f"Newton polish stalled at residual {res:.3e}")
    field_ = RadialField(grid, u)
    c = evaluate_V(field_, nl)
    logger.info("ground state N=%d: w(0)=%.12g c=%.12g residual=%.2e", N, u[0], c, res)
    return GroundState(field_, c, 0.5 * (lo + hi), res, its)


# -- constants ---------------------------------------------------------------

@dataclass(frozen=True)
class DictionaryBudget:
    """Sampling budget for the constant estimates."""

    n_profiles: int = 64
    n_scales: int = 128
    seed: int = 0
    floor: int = 8


@dataclass
class PotentialConstants:
    """Constants attached to one level ``b``; all infima are dictionary estimates."""

    b: float
    c: float
    rho: float
    delta0: float
    r0: float
    beta: float
    lambda0: float
    nu_plus: float
    nu_minus: float | None
    beta_plus: float
    beta_minus: float | None
    C_plus: float
    C_minus: float | None
    theta: float
    kappa: float
    seed: int = 0
    dictionary: dict = field(default_factory=dict)
    quality: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PotentialConstants":
        return cls(**json.loads(text))


def build_dictionary(w0: RadialField, budget: DictionaryBudget) -> tuple[np.ndarray, dict]:
    """Dilated ground states and Gaussians of seeded random widths (rows)."""
    rng = np.random.default_rng(budget.seed)
    grid = w0.grid
    r = grid.nodes
    n_gs = budget.n_profiles // 2
    n_ga = budget.n_profiles - n_gs
    dil = np.sort(np.exp(rng.uniform(np.log(0.5), np.log(2.0), n_gs)))
    wid = np.sort(np.exp(rng.uniform(np.log(0.5), np.log(4.0), n_ga)))
    rows = [np.interp(r / lam, r, w0.values, right=0.0) for lam in dil]
    rows += [np.exp(-(r / s) ** 2) for s in wid]
    meta = {"ground_state_dilations": dil.tolist(), "gaussian_widths": wid.tolist(),
            "n_profiles": budget.n_profiles, "n_scales": budget.n_scales, "seed": budget.seed}
    return np.array(rows), meta


def _bisect_threshold(ok, x_max, iters=200):
    """Largest ``x`` in ``(0, x_max]`` with ``ok(x)`` for a predicate true near 0."""
    if ok(x_max):
        return x_max
    lo, hi = 0.0, x_max
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _level_threshold(ok, b, x_max):
    """``b + x`` for the bisected ``x``, nudged down until ``ok`` holds for
    the difference as recovered from the stored level."""
    x = _bisect_threshold(ok, x_max)
    level = b + x
    while level > b and not ok(level - b):
        level = np.nextafter(level, -np.inf)
    return float(level)


def estimate_constants(b: float, c: float, w0: RadialField, nl: Nonlinearity,
                       budget: DictionaryBudget = DictionaryBudget()) -> PotentialConstants:
    """Estimate the constant bundle at level ``b`` over a profile dictionary.

    Raises
    ------
    DictionaryTooSmall
        If fewer than ``budget.floor`` profiles admit the needed ray crossings.
    """
    if not 0.0 <= b < c:
        raise ValueError(f"need 0 <= b < c, got b={b}, c={c}")
    grid = w0.grid
    N = grid.N
    profiles, meta = build_dictionary(w0, budget)
    mid = 0.5 * (b + c)
    beta = b + 0.25 * (c - b)
    mu, p = nl.mu, nl.p

    rays, keep = [], []
    for i, u in enumerate(profiles):
        ray = _Ray(grid, u, nl)
        try:
            t_u = ray.peak()
        except NotAboveLevel:
            continue
        if ray.value(t_u) < mid:
            continue
        rays.append((ray, t_u))
        keep.append(i)
    if len(keep) < budget.floor:
        raise DictionaryTooSmall(f"only {len(keep)} admissible profiles (floor {budget.floor})")
    U = profiles[keep]
    n = len(keep)
    scales = budget.n_scales

    # distance between the two components at level (b+c)/2
    a_mid = np.array([ray.crossing_below(t, mid) for ray, t in rays])
    o_mid = np.array([ray.crossing_above(t, mid) for ray, t in rays])
    G = (U * grid.quad_weights) @ U.T
    gd = np.diag(G)
    best = np.inf
    for s1 in np.linspace(0.0, 1.0, scales):
        x = s1 * a_mid[:, None]
        # optimal Plus-side scale >= omega for each pair, in closed form
        s2 = np.maximum(1.0, x * G / (o_mid[None, :] * gd[None, :]))
        y = s2 * o_mid[None, :]
        d2 = x * x * gd[:, None] - 2 * x * y * G + y * y * gd[None, :]
        best = min(best, float(d2.min()))
    delta0 = float(np.sqrt(max(best, 0.0)))

    # nu_plus on the Plus side of level beta
    qp = []
    for (ray, t), u in zip(rays, U):
        om = ray.crossing_above(t, beta)
        su = np.geomspace(1.0, 3.0, scales)[:, None] * (om * u)[None, :]
        d = grid.integrate(gradient_values(grid, su, nl) * su)
        qp.append(np.min(-d / np.maximum(1.0, grid.integrate(su * su))))
    nu_plus = float(min(qp))

    nu_minus = None
    if b > 0:
        qm = []
        for (ray, t), u in zip(rays, U):
            a_b = ray.crossing_below(t, b)
            a_m = ray.crossing_below(t, mid)
            svec = np.linspace(a_b, a_m, scales + 1)[1:]
            su = svec[:, None] * u[None, :]
            qm.append(np.min(grid.integrate(gradient_values(grid, su, nl) * su)))
        nu_minus = float(min(qm))

    r0 = delta0 / 5.0
    lambda0 = math.sqrt((c - b) / 2.0) * r0 / 4.0
    C_plus = math.sqrt(2.0 / nu_plus) * (1.0 / (3.0 * nu_plus) + 1.0)

    def ok_plus(x):
        return (x / nu_plus < 0.5 and max(1.0, C_plus) * x ** 0.25 < 0.25
                and C_plus * x ** 1.5 <= lambda0)

    beta_plus = _level_threshold(ok_plus, b, beta - b)

    C_minus = beta_minus = None
    if b > 0:
        # norm bound on the Minus side from mu V - V'(u)u >= (mu-2)/2 ||u||^2
        m_bound = 2.0 * mu * beta / (mu - 2.0)
        C_minus = 2.0 / math.sqrt(nu_minus) * (2.0 * m_bound / (3.0 * nu_minus) + 1.0)

        def ok_minus(x):
            return max(1.0, C_minus) * x ** 0.25 < 0.25 and C_minus * x ** 1.5 <= lambda0

        beta_minus = _level_threshold(ok_minus, b, beta - b)

    # small-norm radius where V(u) >= ||u||^2 / 4 holds on the samples
    radii = np.geomspace(1e-3, 1.0, scales)
    worst = np.inf
    for u in U:
        h1 = float(grid.integrate(u * u) + grid.grad_sq_values(u))
        su = (radii / math.sqrt(h1))[:, None] * u[None, :]
        ok = potential_values(grid, su, nl) >= 0.25 * radii ** 2
        if not ok.all():
            worst = min(worst, radii[np.argmin(ok)])
    R = radii[-1] if not np.isfinite(worst) else radii[max(np.searchsorted(radii, worst) - 1, 0)]
    rho = 0.5 * float(R)

    theta = 1.0 - 0.5 * N * (p - 1.0) / (p + 1.0)
    l2 = np.sqrt(grid.integrate(U * U))
    gr = np.sqrt(grid.grad_sq_values(U))
    lq = grid.integrate(np.abs(U) ** (p + 1.0)) ** (1.0 / (p + 1.0))
    kappa = float(np.max(lq / (l2 ** theta * gr ** (1.0 - theta))))

    quality = {"delta0": "upper estimate over dictionary", "nu_plus": "upper estimate over dictionary",
               "nu_minus": "upper estimate over dictionary" if b > 0 else "undefined for b=0",
               "kappa": "lower estimate over dictionary", "rho": "sampled"}
    meta["admissible"] = n
    return PotentialConstants(
        b=float(b), c=float(c), rho=rho, delta0=delta0, r0=r0, beta=beta, lambda0=lambda0,
        nu_plus=nu_plus, nu_minus=nu_minus, beta_plus=beta_plus, beta_minus=beta_minus,
        C_plus=C_plus, C_minus=C_minus, theta=theta, kappa=kappa, seed=budget.seed,
        dictionary=meta, quality=quality)


def m_b_lower_bound(k: PotentialConstants) -> float:
    """``sqrt(c - b) * delta0``; a soft diagnostic since ``delta0`` is estimated."""
    if k.delta0 == 0.0:
        warnings.warn("delta0 estimate is zero; lower bound is degenerate", RuntimeWarning)
    return math.sqrt(max(k.c - k.b, 0.0)) * k.delta0
