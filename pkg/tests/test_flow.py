import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sphvp.field import RadialFieldTable, uniform_radius_grid
from sphvp.flow import (FlowSpec, flow_inverse_residual, integrate, integrate_full, leapfrog_step_jacobian,
                        random_rotation, rhs, volume_ratio)
from sphvp.phase_space import lift, reduce
from sphvp.verify import circular_orbit_period, orbit_spec

PERIOD = circular_orbit_period()
CIRCULAR = (2.0, 0.0, math.sqrt(2.0))
ECCENTRIC = (2.0, 0.3, 1.1)


def free_spec(kinematics="nonrel", T=10.0, step=1e-2, method="rk4"):
    return FlowSpec(RadialFieldTable.zero(np.array([0.0, T]), uniform_radius_grid(1.0, 2)), kinematics,
                    step=step, method=method)


def smooth_spec(step=1e-3, kinematics="nonrel", method="rk4", T=1.0):
    """A smooth, time-dependent field: m(t, r) = (1 + t/2) r^3/(1 + r^3)."""
    t = np.linspace(0.0, T, 65)
    r = uniform_radius_grid(4.0, 801)
    m = (1.0 + 0.5 * t[:, None]) * r[None, :] ** 3 / (1.0 + r[None, :] ** 3)
    return FlowSpec(RadialFieldTable(t, r, m, float(m[-1, -1])), kinematics, step=step, method=method)


def test_rhs_examples():
    assert rhs((1.0, 2.0, 0.0), 0.0, free_spec()) == pytest.approx((2.0, 0.0))
    dr, dw = rhs(CIRCULAR, 0.0, orbit_spec(256))
    assert dr == 0.0 and dw == pytest.approx(0.0, abs=1e-15)
    spec = free_spec("rel")
    assert rhs((0.7, 0.0, 0.0), 0.0, spec)[0] == 0.0
    for w in (0.1, 3.0, 1e6):
        assert abs(rhs((0.7, w, 0.0), 0.0, spec)[0]) < 1.0


def test_rhs_at_centre():
    assert rhs((0.0, 2.0, 0.0), 0.0, free_spec()) == pytest.approx((2.0, 0.0))
    assert rhs((0.0, 1.0, 0.0), 0.0, free_spec("rel"))[0] == pytest.approx(1.0 / math.sqrt(2.0))
    with pytest.raises(ValueError):
        rhs((0.0, 1.0, 0.5), 0.0, free_spec())


def test_free_streaming():
    assert integrate((1.0, 1.0, 0.0), 2.0, 0.0, free_spec()) == pytest.approx((3.0, 1.0, 0.0), rel=1e-13)


def test_free_streaming_relativistic():
    r, w, L = integrate((0.0, 1.0, 0.0), math.sqrt(2.0), 0.0, free_spec("rel"))
    assert r == pytest.approx(1.0, rel=1e-12) and w == 1.0


def test_radial_orbit_through_centre_reflects():
    # free streaming inward along a diameter comes out on the other side
    r, w, _ = integrate((1.0, -1.0, 0.0), 3.0, 0.0, free_spec(step=0.013))
    assert r == pytest.approx(2.0, rel=1e-12) and w == pytest.approx(1.0)


def test_circular_orbit_returns():
    r, w, L = integrate(CIRCULAR, PERIOD, 0.0, orbit_spec(256))
    assert (r, w) == pytest.approx((2.0, 0.0), abs=1e-12)


def test_times_outside_slab_rejected():
    with pytest.raises(ValueError):
        integrate(CIRCULAR, 2 * PERIOD, 0.0, orbit_spec(256))
    with pytest.raises(ValueError):
        flow_inverse_residual(CIRCULAR, -1.0, 0.0, orbit_spec(256))


def test_flow_spec_validation():
    with pytest.raises(ValueError):
        free_spec(step=0.0)
    with pytest.raises(ValueError):
        free_spec(method="euler")


def test_inverse_residual_free_streaming():
    assert flow_inverse_residual((1.0, 0.4, 0.3), 5.0, 0.0, free_spec()) < 1e-13


def test_inverse_residual_circular_half_period():
    h = PERIOD / 256
    res = flow_inverse_residual(CIRCULAR, 0.5 * PERIOD, 0.0, orbit_spec(256))
    assert res <= h**4


def test_inverse_residual_order():
    res = [flow_inverse_residual(ECCENTRIC, 0.5 * PERIOD, 0.0, orbit_spec(n)) for n in (64, 128, 256)]
    ratios = [res[0] / res[1], res[1] / res[2]]
    # fourth order at least; the forward/backward composition cancels some error terms
    assert min(ratios) >= 14.0
    assert res[2] <= 1e-6


def test_forward_error_rk4_order():
    ref = integrate(ECCENTRIC, 0.5 * PERIOD, 0.0, orbit_spec(4096))
    errs = []
    for n in (128, 256):
        r, w, _ = integrate(ECCENTRIC, 0.5 * PERIOD, 0.0, orbit_spec(n))
        errs.append(math.hypot(r - ref[0], w - ref[1]))
    assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.15)


def test_angular_momentum_bitwise_constant():
    spec = smooth_spec()
    L = np.array([0.3, 0.0, 1.7, 1e-3])
    _, _, Lout = integrate((np.full(4, 1.0), np.full(4, 0.2), L), 0.9, 0.1, spec)
    assert np.array_equal(Lout, L)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 0.9))
def test_group_property(tau):
    spec = smooth_spec(step=1e-3)
    c = (1.2, -0.3, 0.8)
    direct = integrate(c, 1.0, 0.0, spec)
    mid = integrate(c, tau, 0.0, spec)
    two = integrate(mid, 1.0, tau, spec)
    assert two[:2] == pytest.approx(direct[:2], abs=1e-9)


def test_relativistic_speed_bound_along_trajectory():
    spec = smooth_spec(kinematics="rel", step=1e-2)
    rng = np.random.default_rng(0)
    c = (rng.uniform(0.1, 2, 50), rng.uniform(-50, 50, 50), rng.uniform(0, 5, 50))
    for t in np.linspace(0.0, 1.0, 11):
        r, w, L = integrate(c, t, 0.0, spec)
        p2 = w**2 + (L / r) ** 2
        assert np.all(np.abs(w) / np.sqrt(1 + p2) < 1.0)
        assert np.all(np.sqrt(p2 / (1 + p2)) < 1.0)


@pytest.mark.parametrize("kinematics", ["nonrel", "rel"])
def test_full_3d_cross_check(kinematics):
    spec = smooth_spec(step=1e-3, kinematics=kinematics)
    rng = np.random.default_rng(1)
    c = (rng.uniform(0.3, 2.0, 20), rng.uniform(-1, 1, 20), rng.uniform(0.1, 1.5, 20))
    red = integrate(c, 1.0, 0.0, spec)
    x, v = lift(*c)
    X, V = integrate_full(x, v, 1.0, 0.0, spec)
    back = reduce(X, V)
    for a, b in zip(red, back):
        assert np.allclose(a, b, atol=1e-8)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31))
def test_rotation_equivariance(seed):
    rng = np.random.default_rng(seed)
    spec = smooth_spec(step=2e-3)
    A = random_rotation(rng)
    x = rng.uniform(-1, 1, (5, 3))
    v = rng.uniform(-1, 1, (5, 3))
    X, V = integrate_full(x, v, 0.7, 0.0, spec)
    XA, VA = integrate_full(x @ A.T, v @ A.T, 0.7, 0.0, spec)
    assert np.allclose(XA, X @ A.T, atol=1e-11) and np.allclose(VA, V @ A.T, atol=1e-11)


def test_volume_ratio_free_streaming():
    z = np.array([[1.0, 0.2, -0.3, 0.5, 0.1, 0.0], [0.1, 0.9, 0.4, -1.0, 0.3, 0.2]])
    assert volume_ratio(z, 3.0, 0.0, free_spec()) == pytest.approx(1.0, abs=1e-9)


def test_volume_ratio_circular_neighbourhood():
    x, v = lift(*CIRCULAR)
    rng = np.random.default_rng(2)
    z = np.hstack([x, v])[None, :] + 1e-2 * rng.standard_normal((5, 6))
    det = volume_ratio(z, PERIOD, 0.0, orbit_spec(256))
    assert np.all(np.abs(det - 1.0) <= 1e-3)


def test_volume_ratio_rejects_degenerate_cloud():
    with pytest.raises(ValueError):
        volume_ratio(np.zeros((1, 6)) + 1.0, 1.0, 0.0, free_spec(), eps=0.0)
    with pytest.raises(ValueError):
        volume_ratio(np.ones((1, 5)), 1.0, 0.0, free_spec())


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(-2, 2), st.floats(0.0, 2.0), st.floats(1e-3, 0.1))
def test_leapfrog_area_preserving(r, w, L, h):
    spec = smooth_spec(method="leapfrog")
    J = leapfrog_step_jacobian((r, w, L), 0.2, h, spec)
    assert abs(np.linalg.det(J) - 1.0) <= 1e-12


def test_leapfrog_jacobian_matches_finite_difference():
    spec = smooth_spec(method="leapfrog", step=0.05)
    # keep r off the radius nodes, where the interpolated slope jumps
    c = (1.1037, 0.3, 0.7)
    J = leapfrog_step_jacobian(c, 0.2, 0.05, spec)
    eps = 1e-6
    num = np.zeros((2, 2))
    for k in range(2):
        cp, cm = list(c), list(c)
        cp[k] += eps
        cm[k] -= eps
        a = integrate(tuple(cp), 0.25, 0.2, spec)
        b = integrate(tuple(cm), 0.25, 0.2, spec)
        num[:, k] = [(a[0] - b[0]) / (2 * eps), (a[1] - b[1]) / (2 * eps)]
    assert np.allclose(J, num, atol=1e-6)


def test_leapfrog_jacobian_nonrel_only():
    with pytest.raises(ValueError):
        leapfrog_step_jacobian((1.0, 0.0, 0.5), 0.0, 0.01, smooth_spec(kinematics="rel", method="leapfrog"))


def test_random_rotation_is_proper():
    A = random_rotation(np.random.default_rng(5))
    assert np.allclose(A @ A.T, np.eye(3)) and np.linalg.det(A) == pytest.approx(1.0)
