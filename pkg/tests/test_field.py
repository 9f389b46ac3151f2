import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sphvp.field import (RadialFieldTable, cf_constant, cumulative_mass, density, field_sup_bound, field_value,
                         lipschitz_constant, potential, rho_sup_bound, uniform_radius_grid)
from sphvp.flow import FlowSpec, rhs
from sphvp.phase_space import indicator_ball, sample_ensemble, vacuum
from sphvp.solver import PicardNonConvergence, SolverConfig, picard_slab

BALL_VOLUME = (4.0 * math.pi / 3.0) ** 2


@pytest.fixture(scope="module")
def unit_ball():
    """Uniform ball of radius 1 and mass 1 (rho = 3/(4 pi)) as an ensemble."""
    return sample_ensemble(indicator_ball(value=1.0 / BALL_VOLUME), 48)


@pytest.fixture(scope="module")
def ball_table(unit_ball):
    grid = uniform_radius_grid(1.5, 512)
    m = cumulative_mass(unit_ball.r, unit_ball.weight, grid)
    return RadialFieldTable.static(grid, m, 0.0, 1.0)


def test_step_deposit_counts_with_ties():
    m = cumulative_mass([0.5, 1.5], [1.0, 2.0], [1.0, 2.0], scheme="step")
    assert list(m) == [1.0, 3.0]
    assert list(cumulative_mass([1.0], [1.0], [1.0], scheme="step")) == [1.0]


def test_cic_deposit_uniform_ball(unit_ball):
    grid = uniform_radius_grid(2.0, 401)
    m = cumulative_mass(unit_ball.r, unit_ball.weight, grid)
    assert np.interp(1.0, grid, m) == pytest.approx(1.0, abs=1e-2)
    assert np.interp(0.5, grid, m) == pytest.approx(0.125, abs=1e-2)


def test_empty_deposit():
    grid = uniform_radius_grid(1.0, 11)
    assert np.all(cumulative_mass([], [], grid) == 0.0)
    assert np.all(cumulative_mass([], [], grid, scheme="step") == 0.0)


def test_negative_weights_rejected():
    with pytest.raises(ValueError):
        cumulative_mass([0.5], [-1.0], uniform_radius_grid(1.0, 3))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 3), st.floats(0, 2)), min_size=1, max_size=30))
def test_cic_mass_row_invariants(samples):
    r = np.array([s[0] for s in samples])
    w = np.array([s[1] for s in samples])
    grid = uniform_radius_grid(2.0, 33)
    m = cumulative_mass(r, w, grid)
    assert m[0] == 0.0
    assert np.all(np.diff(m) >= -1e-12)
    assert m[-1] == pytest.approx(w.sum(), rel=1e-12, abs=1e-12)


def test_cic_is_unbiased_ramp():
    # one unit sample at r = 0.55 on a grid of spacing 0.1: m ramps over [0.5, 0.6]
    grid = uniform_radius_grid(1.0, 11)
    m = cumulative_mass([0.55], [1.0], grid)
    assert m[5] == pytest.approx(0.0, abs=1e-12) and m[6] == pytest.approx(1.0)
    m = cumulative_mass([0.5], [1.0], grid)
    assert m[5] == pytest.approx(0.5)


def test_field_value_analytic_ball():
    grid = uniform_radius_grid(1.0, 1001)
    table = RadialFieldTable.static(grid, np.minimum(grid, 1.0) ** 3, 0.0, 1.0)
    assert field_value(table, 0.5, 1.0) == pytest.approx(1.0, rel=1e-12)
    assert field_value(table, 0.5, 2.0) == pytest.approx(0.25, rel=1e-12)
    assert field_value(table, 0.5, 0.5) == pytest.approx(0.5, rel=1e-12)
    assert field_value(table, 0.5, 0.0) == 0.0


def test_field_value_from_ensemble(ball_table):
    G = field_value(ball_table, 0.0, [0.5, 1.0, 2.0])
    assert G == pytest.approx([0.5, 1.0, 0.25], abs=1e-2)


def test_field_value_outside_slab(ball_table):
    with pytest.raises(ValueError):
        field_value(ball_table, 1.5, 0.5)
    with pytest.raises(ValueError):
        field_value(ball_table, 0.5, -0.1)


def test_exterior_decay_exact(ball_table):
    M = ball_table.total_mass
    for r in (1.5, 2.0, 7.3, 100.0):
        assert field_value(ball_table, 0.2, r) * r * r == pytest.approx(M, rel=1e-14)


def test_table_mass_shape_checked():
    with pytest.raises(ValueError):
        RadialFieldTable(np.array([0.0, 1.0]), np.array([0.0, 1.0]), np.zeros((3, 2)), 0.0)
    with pytest.raises(ValueError):
        RadialFieldTable(np.array([0.0]), np.array([0.5, 1.0]), np.zeros((1, 2)), 0.0)


def test_field_sup_bound_examples():
    assert field_sup_bound(1.0, 3.0 / (4.0 * math.pi)) == pytest.approx(3.0 * 1.5 ** (2.0 / 3.0), rel=1e-12)
    assert field_sup_bound(1.0, 3.0 / (4.0 * math.pi)) == pytest.approx(3.931, abs=1e-3)
    assert field_sup_bound(0.0, 1.0) == 0.0
    assert field_sup_bound(8.0, 0.3) == pytest.approx(2.0 * field_sup_bound(1.0, 0.3), rel=1e-12)


def test_field_sup_bound_holds_for_ball(ball_table):
    rho_inf = rho_sup_bound(1.0 / BALL_VOLUME, 1.0)
    assert rho_inf == pytest.approx(3.0 / (4.0 * math.pi))
    bound = field_sup_bound(ball_table.total_mass, rho_inf)
    assert float(np.max(ball_table.G)) <= bound


def test_cf_constant_examples():
    assert cf_constant(indicator_ball()) == pytest.approx(68.98, abs=5e-3)
    assert cf_constant(BALL_VOLUME, 1.0) == pytest.approx(68.975, abs=1e-3)
    assert cf_constant(vacuum()) == 0.0
    assert cf_constant(indicator_ball().scaled(8.0)) == pytest.approx(8.0 * cf_constant(indicator_ball()), rel=1e-12)


def test_lipschitz_constant_examples():
    assert lipschitz_constant(0.0) == 0.0
    assert lipschitz_constant(3.0 / (4.0 * math.pi)) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        lipschitz_constant(-1.0)


def test_measured_lipschitz_quotient(unit_ball):
    # radius cells as wide as the sample spacing 1/48; finer cells resolve the
    # staircase of the sampled radii and steepen G locally
    grid = uniform_radius_grid(1.5, 73)
    table = RadialFieldTable.static(grid, cumulative_mass(unit_ball.r, unit_ball.weight, grid), 0.0, 1.0)
    r = np.linspace(1e-3, 2.0, 4001)
    G = field_value(table, 0.0, r)
    slope = float(np.max(np.abs(np.diff(G)) / np.diff(r)))
    # exact field is r inside, 1/r^2 outside: steepest slope 2 just outside r = 1
    assert slope == pytest.approx(2.0, abs=0.1)
    # deposit tolerance 10%
    assert slope <= lipschitz_constant(rho_sup_bound(1.0 / BALL_VOLUME, 1.0)) * 1.1


def test_repulsive_sign_only_flips_field_term(ball_table):
    att = FlowSpec(ball_table, sign="attractive")
    rep = FlowSpec(ball_table, sign="repulsive")
    c = (0.7, 0.3, 0.4)
    da, ra = rhs(c, 0.1, att)
    dr_, rr = rhs(c, 0.1, rep)
    cent = c[2] ** 2 / c[0] ** 3
    assert da == dr_
    assert ra - cent == pytest.approx(-(rr - cent), rel=1e-14)


def test_repulsive_tables_identical_for_same_transport():
    cfg = SolverConfig(resolution=8, steps_per_slab=8, max_iter=1)
    hist = {}
    for sign in ("attractive", "repulsive"):
        with pytest.raises(PicardNonConvergence) as exc:
            picard_slab(indicator_ball(sign=sign), 0.0, 0.005, config=cfg, tol=1e-300)
        hist[sign] = exc.value.history
    assert hist["attractive"] == hist["repulsive"]


def test_density_and_potential_diagnostics():
    grid = uniform_radius_grid(2.0, 401)
    m = np.minimum(grid, 1.0) ** 3
    rho = density(m, grid)
    assert rho[:150] == pytest.approx(3.0 / (4.0 * math.pi), rel=1e-9)
    U = potential(m, grid)
    # U = -M/r outside, -(3 - r^2)/2 inside
    assert U[-1] == pytest.approx(-0.5, rel=1e-9)
    assert U[100] == pytest.approx(-(3 - 0.25) / 2, abs=1e-3)


def test_point_mass_table():
    t = RadialFieldTable.point_mass(2.0, np.array([0.0, 1.0]))
    assert field_value(t, 0.5, 3.0) == pytest.approx(2.0 / 9.0, rel=1e-14)
