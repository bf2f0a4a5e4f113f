import math

import numpy as np
import pytest

from brakeorbit.errors import NotAboveLevel, NotConverged, NoCrossing, NoTransition
from brakeorbit.minimizer import (BoundaryMode, MinimizeConfig, detect_sigma_tau,
                                  initial_trajectory, load_checkpoint, minimize, tail_minus,
                                  tail_plus)
from brakeorbit.potential import (Side, classify, estimate_constants, evaluate_V,
                                  m_b_lower_bound, ray_scan)
from brakeorbit.radial import RadialField, norms
from brakeorbit.trajectory import CylinderGrid, Trajectory, phi


@pytest.fixture(scope="module")
def k_half(cubic, gs1):
    return estimate_constants(0.5 * gs1.c, gs1.c, gs1.w0, cubic)


def test_config_mode(gs1):
    assert MinimizeConfig(b=0.0, seed=gs1.w0).mode() is BoundaryMode.FREE_DECAY
    assert MinimizeConfig(b=0.1, seed=gs1.w0).mode() is BoundaryMode.CLAMPED_MINUS


@pytest.mark.parametrize("frac", [0.0, 0.25, 0.5, 0.9])
def test_initial_trajectory(cubic, small_gs, frac):
    u = small_gs.w0
    b = frac * small_gs.c
    grid = CylinderGrid(u.grid, -3.0, 3.0, 121)
    v = initial_trajectory(u, b, None, grid, cubic)
    V = np.array([evaluate_V(v.slice(j), cubic) for j in range(grid.n_y)])
    assert V.min() >= b - 1e-10
    assert v.in_cone()
    rep = ray_scan(u, b, cubic)
    bound = (0.5 * norms(u).l2_sq + rep.v_at_tu - b) * (rep.omega - rep.alpha)
    inner = (rep.alpha + 0.5 * (grid.y_min + grid.y_max) - 0.5 * (rep.alpha + rep.omega),
             rep.omega + 0.5 * (grid.y_min + grid.y_max) - 0.5 * (rep.alpha + rep.omega))
    # outside the transition the slices sit on the level: no action there
    assert phi(v, b, cubic) <= bound + 1e-6
    assert inner[0] > grid.y_min and inner[1] < grid.y_max
    assert classify(v.slice(0), b, cubic) is Side.MINUS
    assert classify(v.slice(-1), b, cubic) is Side.PLUS


def test_initial_trajectory_rejects_low_peak(cubic, small_gs):
    grid = CylinderGrid(small_gs.w0.grid, -3.0, 3.0, 61)
    with pytest.raises(NotAboveLevel):
        initial_trajectory(small_gs.w0, 2.0 * small_gs.c, None, grid, cubic)


def test_tail_plus(cubic, gs1, k_half):
    b = k_half.b
    u0 = gs1.w0.scaled(1.2)
    tp = tail_plus(u0, b, cubic)
    assert abs(evaluate_V(u0.scaled(tp.s0), cubic) - b) < 1e-10
    assert tp.cost <= k_half.C_plus * (evaluate_V(u0, cubic) - b) ** 1.5 + 1e-6
    dist = [math.sqrt(norms(RadialField(u0.grid, row - u0.values)).l2_sq) for row in tp.v.values]
    assert max(dist) == pytest.approx((tp.s0 - 1) * math.sqrt(norms(u0).l2_sq), abs=1e-10)


def test_tail_plus_degenerate(cubic, gs1):
    b = 0.5 * gs1.c
    u0 = gs1.w0.scaled(ray_scan(gs1.w0, b, cubic).omega)
    tp = tail_plus(u0, b, cubic)
    assert tp.v is None and tp.cost == 0.0 and tp.s0 == 1.0


def test_tail_plus_wrong_side(cubic, gs1):
    with pytest.raises(NoCrossing):
        tail_plus(gs1.w0.scaled(0.8), 0.5 * gs1.c, cubic)


def test_tail_minus_positive_level(cubic, gs1, k_half):
    b = k_half.b
    u0 = gs1.w0.scaled(0.8)
    tm = tail_minus(u0, b, cubic)
    end = tm.v.slice(-1)
    assert classify(end, b, cubic) is Side.MINUS
    assert abs(evaluate_V(end, cubic) - b) < 1e-10
    assert tm.cost <= k_half.C_minus * (evaluate_V(u0, cubic) - b) ** 1.5 + 1e-6


def test_tail_minus_zero_level(cubic, gs1):
    u0 = gs1.w0.scaled(0.5)
    tm = tail_minus(u0, 0.0, cubic)
    V0 = evaluate_V(u0, cubic)
    assert tm.cost <= 0.5 * norms(u0).l2_sq + V0 + 1e-9
    assert norms(u0).l2_sq <= 4 * V0
    assert tm.cost <= 3 * V0
    assert not np.any(tm.v.values[-1])
    z = tail_minus(u0.scaled(0.0), 0.0, cubic)
    assert z.v is None and z.cost == 0.0


def test_detect_on_initial_ray(cubic, small_gs):
    u = small_gs.w0
    b = 0.5 * small_gs.c
    grid = CylinderGrid(u.grid, -3.0, 3.0, 241)
    v = initial_trajectory(u, b, None, grid, cubic)
    rep = ray_scan(u, b, cubic)
    shift = -0.5 * (rep.alpha + rep.omega)
    sigma, tau = detect_sigma_tau(v, b, None, cubic)
    assert sigma < tau
    assert abs(sigma - (rep.alpha + shift)) <= grid.dy
    assert abs(tau - (rep.omega + shift)) <= grid.dy


def test_detect_without_plus_side(cubic, small_gs):
    u = small_gs.w0.scaled(0.2)
    grid = CylinderGrid(u.grid, 0.0, 1.0, 11)
    v = Trajectory(grid, np.repeat(u.values[None, :], 11, axis=0))
    with pytest.raises(NoTransition):
        detect_sigma_tau(v, evaluate_V(u, cubic), None, cubic)


def test_core_at_half_level(cubic, gs1, half_level_core, k_half):
    core = half_level_core
    b = core.b
    assert core.converged
    assert core.grad_norm < 1e-5
    assert core.sigma_bar < core.tau_bar
    assert classify(core.v.slice(0), b, cubic) is Side.MINUS
    assert classify(core.v.slice(-1), b, cubic) is Side.PLUS
    V = np.array([evaluate_V(core.v.slice(j), cubic) for j in range(core.v.grid.n_y)])
    assert V[1:-1].min() > b - 1e-9
    assert core.v.in_cone()
    assert core.m_b >= 0
    # soft diagnostic: the lower bound uses an estimated distance
    print(f"m_b = {core.m_b:.6f}, sqrt(c-b) delta0 = {m_b_lower_bound(k_half):.6f}")


def test_descent_is_monotone(half_level_core):
    h = np.asarray(half_level_core.phi_history)
    assert h.size > 1
    assert np.all(np.diff(h) <= 1e-12)


def test_newton_budget_exhausted(cubic, gs1):
    cfg = MinimizeConfig(b=0.5 * gs1.c, seed=gs1.w0, max_iters=2, newton_max_iter=0)
    with pytest.raises(NotConverged) as info:
        minimize(cfg, None, cubic)
    assert info.value.result is not None
    assert not info.value.result.converged


def test_checkpoint_and_resume(tmp_path, cubic, gs1, half_level_core):
    cfg = MinimizeConfig(b=0.5 * gs1.c, seed=gs1.w0, checkpoint_dir=str(tmp_path))
    core = minimize(cfg, None, cubic)
    traj, meta = load_checkpoint(tmp_path)
    assert meta["mode"] == "ClampedMinus"
    assert meta["iteration"] == core.iterations
    assert traj.values.shape[1] == gs1.w0.grid.n_r
    again = minimize(cfg, None, cubic, resume=True)
    assert again.m_b == pytest.approx(core.m_b, rel=1e-9)
    assert core.m_b == half_level_core.m_b


def test_refined_spacing_does_not_raise_action(cubic, gs1, half_level_core):
    fine = minimize(MinimizeConfig(b=0.5 * gs1.c, seed=gs1.w0, dy=0.0125), None, cubic)
    assert fine.m_b <= half_level_core.m_b + 1e-3 * gs1.c


@pytest.mark.slow
def test_free_decay_core(cubic, homoclinic_core):
    core = homoclinic_core
    assert core.converged
    assert core.sigma_bar == -math.inf
    assert np.all(np.diff(core.phi_history) <= 1e-12)
    assert math.sqrt(core.v.grid.radial.integrate(core.v.values[0] ** 2)) < 1e-4
    assert classify(core.v.slice(-1), 0.0, cubic) is Side.PLUS
    sigma, tau = detect_sigma_tau(core.v, 0.0, None, cubic, free_decay=True)
    assert sigma == -math.inf and tau == pytest.approx(core.tau_bar)
