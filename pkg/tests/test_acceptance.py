"""Acceptance suite: one test per criterion at its stated tolerance.

Each test records a one-line verdict that the terminal summary prints as
``criterion N PASS|FAIL ...``. Runs use the default SolverConfig unless the
criterion itself asks for a refinement study.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import BALL_VOLUME, record_criterion
from sphvp.diagnostics import conservation_report, kinetic_energy, potential_energy
from sphvp.field import RadialFieldTable, cf_constant, cumulative_mass, field_value, uniform_radius_grid
from sphvp.flow import FlowSpec, integrate, integrate_full, leapfrog_step_jacobian, volume_ratio
from sphvp.phase_space import indicator_ball, lift, sample_ensemble
from sphvp.solver import SolverConfig, continue_solution, delta0, picard_slab, transport
from sphvp.steady_states import virial_residual
from sphvp.verify import ORBIT_M, ORBIT_R, circular_orbit_period, orbit_spec

DEFAULT = SolverConfig()
# simultaneous 2x coarsening of every resolution knob
HALF = replace(DEFAULT, resolution=tuple(n // 2 for n in DEFAULT.resolution),
               radius_nodes=DEFAULT.radius_nodes // 2, steps_per_slab=DEFAULT.steps_per_slab // 2)


def ball_first_slab(ball, config=DEFAULT):
    d0 = delta0(ball.P0, cf_constant(ball, resolution=config.resolution))
    return picard_slab(ball, 0.0, 0.5 * d0, config=config)


def contraction_ok(slab):
    kappa = slab.contraction_ratios()[1:]
    kmax = float(np.max(kappa)) if kappa.size else 0.0
    return kmax < 0.8 and slab.iterations <= 15 and slab.history[-1] <= slab.tol, kmax


# --- 1 ------------------------------------------------------------------------

def test_criterion_01_circular_orbit():
    t0 = time.perf_counter()
    period = circular_orbit_period()
    L = math.sqrt(ORBIT_M * ORBIT_R)
    x = np.array([[ORBIT_R, 0.0, 0.0]])
    v = np.array([[0.0, L / ORBIT_R, 0.0]])
    errs = {}
    for n in (128, 256, 512):
        X, _ = integrate_full(x, v, period, 0.0, orbit_spec(n))
        errs[n] = float(np.linalg.norm(X - x)) / ORBIT_R
    # the reduced system returns too; its circular orbit is an equilibrium of (r, w)
    r, w, _ = integrate((ORBIT_R, 0.0, L), period, 0.0, orbit_spec(256))
    reduced = abs(r - ORBIT_R) / ORBIT_R
    ratios = (errs[128] / errs[256], errs[256] / errs[512])
    elapsed = time.perf_counter() - t0
    ok = errs[256] <= 1e-6 and reduced <= 1e-6 and all(12.0 <= q <= 20.0 for q in ratios) and elapsed < 1.0
    detail = (f"3-d error {errs[256]:.2e} at period/256, halving ratios {ratios[0]:.1f} and {ratios[1]:.1f}, "
              f"reduced error {reduced:.1e}, {elapsed:.2f} s")
    assert record_criterion(1, "circular orbit", ok, detail), detail


# --- 2 ------------------------------------------------------------------------

def test_criterion_02_measure_preservation(ball):
    t0 = time.perf_counter()
    slab = ball_first_slab(ball)
    spec = FlowSpec(slab.field, ball.kinematics, ball.sign, step=slab.step, r_floor=slab.r_floor)
    rng = np.random.default_rng(2)
    # 100 random points of the support: r in (0.1, 1), |v| < 1
    r = rng.uniform(0.1, 1.0, 100)
    p = rng.uniform(0.0, 1.0, 100) ** (1 / 3)
    cos = rng.uniform(-1.0, 1.0, 100)
    x, v = lift(r, p * cos, r * p * np.sqrt(1.0 - cos**2))
    det = volume_ratio(np.hstack([x, v]), slab.t1, slab.t0, spec)
    det_err = float(np.max(np.abs(det - 1.0)))
    leap = FlowSpec(slab.field, ball.kinematics, ball.sign, step=slab.step, method="leapfrog")
    area_err = 0.0
    for ri, wi, Li in zip(r[:50], (p * cos)[:50], (r * p * np.sqrt(1.0 - cos**2))[:50]):
        J = leapfrog_step_jacobian((ri, wi, Li), slab.t0, slab.step, leap)
        area_err = max(area_err, abs(np.linalg.det(J) - 1.0))
    elapsed = time.perf_counter() - t0
    ok = det_err <= 1e-3 and area_err <= 1e-12 and elapsed < 10.0
    detail = f"max |det DZ - 1| = {det_err:.2e} (100 points), leapfrog area {area_err:.1e}, {elapsed:.1f} s"
    assert record_criterion(2, "measure preservation", ok, detail), detail


# --- 3, 4 ---------------------------------------------------------------------

def test_criterion_03_a_priori_bound(ball):
    t0 = time.perf_counter()
    slab = ball_first_slab(ball)
    Q = slab.q_of_t(ball.P0)
    margin = float(np.min(Q - slab.p_of_t))
    elapsed = time.perf_counter() - t0
    ok = bool(np.all(slab.p_of_t < Q)) and elapsed < 60.0
    detail = f"P(t) < Q(t) at all {Q.size} nodes, min Q - P = {margin:.3e}, {elapsed:.1f} s"
    assert record_criterion(3, "a-priori bound", ok, detail), detail


def test_criterion_04_picard_contraction(ball):
    t0 = time.perf_counter()
    slab = ball_first_slab(ball)
    ok, kmax = contraction_ok(slab)
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 120.0
    hist = ", ".join(f"{d:.2e}" for d in slab.history)
    detail = f"{slab.iterations} iterations to tol {slab.tol:.0e}, max ratio from n=2 {kmax:.2e} [{hist}]"
    assert record_criterion(4, "Picard contraction", ok, detail), detail


# --- 5, 6 ---------------------------------------------------------------------

def polytrope_run(state, config):
    t0 = time.perf_counter()
    sol = continue_solution(state.datum, 5.0 * state.dynamical_time, config)
    rows = len(sol.slabs) + 1
    # characteristic reconstruction at five report times; energies at every slab boundary
    rep = conservation_report(sol, stride=1, phis=("s2",), recon_stride=max(1, rows // 4))
    grid = sol.slabs[0].field.radius_grid
    m0 = sol.slabs[0].field.mass[0]
    stat = max(float(np.max(np.abs(np.interp(grid, s.field.radius_grid, row) - m0)))
               for s in sol.slabs for row in s.field.mass) / state.M_star
    return sol, rep, stat, time.perf_counter() - t0


@pytest.fixture(scope="module")
def polytrope_runs(polytrope):
    return {"default": polytrope_run(polytrope, DEFAULT), "half": polytrope_run(polytrope, HALF)}


def test_criterion_05_conservation(polytrope_runs):
    sol, rep, _, elapsed = polytrope_runs["default"]
    _, half, _, elapsed_half = polytrope_runs["half"]
    e, c = rep.energy_drift, rep.casimir_drift("s2")
    e2, c2 = half.energy_drift, half.casimir_drift("s2")
    exact = rep.casimir_drift("s2", "exact")
    ok = e <= 1e-3 and c <= 1e-2 and e < e2 and c < c2 and exact == 0.0 and elapsed + elapsed_half < 600.0
    detail = (f"energy drift {e:.2e} (half resolution {e2:.2e}), C[s^2] drift {c:.2e} (half {c2:.2e}), "
              f"exact Casimir change {exact:.0e}, {len(sol.slabs)} slabs, {elapsed + elapsed_half:.0f} s")
    assert record_criterion(5, "conservation", ok, detail), detail


def test_criterion_06_stationarity(polytrope_runs):
    _, _, stat, _ = polytrope_runs["default"]
    _, _, stat2, _ = polytrope_runs["half"]
    ok = stat <= 2e-2 and stat < stat2
    detail = f"max |m(t) - m(0)|/M* = {stat:.4f} over 5 t_dyn (half resolution {stat2:.4f})"
    assert record_criterion(6, "stationarity", ok, detail), detail


# --- 7 ------------------------------------------------------------------------

def test_criterion_07_field_and_energy_oracles(polytrope):
    t0 = time.perf_counter()
    ens = sample_ensemble(indicator_ball(value=1.0 / BALL_VOLUME), DEFAULT.resolution)
    grid = uniform_radius_grid(2.2, DEFAULT.radius_nodes)
    m = cumulative_mass(ens.r, ens.weight, grid)
    G = field_value(RadialFieldTable.static(grid, m, 0.0, 1.0), 0.0, [0.5, 1.0, 2.0])
    g_err = float(np.max(np.abs(G - [0.5, 1.0, 0.25])))
    epot = potential_energy(m, grid)
    res, _, _ = virial_residual(sample_ensemble(polytrope.datum, DEFAULT.resolution), polytrope)
    elapsed = time.perf_counter() - t0
    ok = g_err <= 1e-2 and abs(epot + 0.6) <= 1e-2 and abs(res) <= 1e-2 and elapsed < 10.0
    detail = (f"G(0.5, 1, 2) = {G[0]:.4f}, {G[1]:.4f}, {G[2]:.4f}; E_pot = {epot:.4f}; "
              f"2 E_kin + E_pot = {res:.1e}; {elapsed:.1f} s")
    assert record_criterion(7, "field and energy oracles", ok, detail), detail


# --- 8 ------------------------------------------------------------------------

def test_criterion_08_numerical_uniqueness(ball):
    t0 = time.perf_counter()
    slab = ball_first_slab(ball)
    n = DEFAULT.steps_per_slab
    worst = 0.0
    for k in (n // 4, n // 2):
        mid = transport(slab, slab.time_grid[k])
        again = picard_slab(mid, mid.t, slab.t1 - mid.t, cf=slab.cf, p_star=float(slab.p_of_t[k]),
                            config=replace(DEFAULT, steps_per_slab=n - k), radius_grid=slab.field.radius_grid,
                            tol=slab.tol)
        assert np.allclose(again.time_grid, slab.time_grid[k:], rtol=0, atol=1e-15)
        worst = max(worst, float(np.max(np.abs(again.field.G - slab.field.G[k:]))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 10 * slab.tol and elapsed < 120.0
    detail = f"sup |G_restart - G| = {worst:.2e} (limit {10 * slab.tol:.0e}), {elapsed:.1f} s"
    assert record_criterion(8, "numerical uniqueness", ok, detail), detail


# --- 9 ------------------------------------------------------------------------

def test_criterion_09_relativistic_kinematics():
    t0 = time.perf_counter()
    hot = indicator_ball(P=5.0, kinematics="rel")
    sol = continue_solution(hot, 5 * delta0(hot.P0, cf_constant(hot, resolution=DEFAULT.resolution)), DEFAULT)
    vmax = max(float(np.max(s.speed_of_t)) for s in sol.slabs)
    assert vmax < 1.0
    cold = indicator_ball(P=1e-3, kinematics="rel")
    ens = sample_ensemble(cold, DEFAULT.resolution)
    ekin = kinetic_energy(ens, "rel")
    quad_rel = abs(ekin / ens.mass - 1.0)
    decl_rel = abs(ekin / cold.mass - 1.0)
    elapsed = time.perf_counter() - t0
    # rest energy dominates: |E/M - 1| <= P^2/2; the ensemble mass carries the first-order indicator quadrature
    ok = vmax < 1.0 and quad_rel <= 0.5 * cold.P0**2 and decl_rel <= 2e-2 and elapsed < 60.0
    detail = (f"max |dx/ds| = {vmax:.6f} over {len(sol.slabs)} slabs; cold E_kin/M - 1 = {quad_rel:.1e} "
              f"(vs declared mass {decl_rel:.1e}); {elapsed:.1f} s")
    assert record_criterion(9, "relativistic kinematics", ok, detail), detail


# --- 10 -----------------------------------------------------------------------

def test_criterion_10_continuation(ball):
    t0 = time.perf_counter()
    d0 = delta0(ball.P0, cf_constant(ball, resolution=DEFAULT.resolution))
    sol = continue_solution(ball, 5.0 * d0, DEFAULT)
    bad = []
    p = ball.P0
    for i, s in enumerate(sol.slabs):
        ok_c, _ = contraction_ok(s)
        if not (np.all(s.p_of_t <= s.q_of_t(p)) and ok_c):
            bad.append(i)
        p = max(p, float(np.max(s.p_of_t)))
    elapsed = time.perf_counter() - t0
    ok = (sol.stopped is None and math.isfinite(sol.P_star) and len(sol.slabs) >= 5 and not bad
          and sol.t_end == pytest.approx(5.0 * d0) and elapsed < 900.0)
    detail = (f"{len(sol.slabs)} slabs to 5 delta0, P* = {sol.P_star:.4f}, slabs violating 3-4: {bad or 'none'}, "
              f"{elapsed:.0f} s")
    assert record_criterion(10, "continuation", ok, detail), detail
