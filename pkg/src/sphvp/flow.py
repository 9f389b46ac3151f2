"""Characteristic flow Z(s, t, z) of a tabulated radial field.

The reduced flow evolves (r, w) with L carried as a constant. The full
six-dimensional flow exists for cross-checks (reduction, rotation
equivariance, Jacobian determinants).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .field import RadialFieldTable
from .phase_space import NONREL, REL, SIGNS

log = logging.getLogger(__name__)

METHODS = {"rk4": K.RK4, "leapfrog": K.LEAPFROG}


@dataclass(frozen=True)
class FlowSpec:
    field: RadialFieldTable
    kinematics: str = NONREL
    sign: str = "attractive"
    step: float = 1e-3
    method: str = "rk4"
    r_floor: float = 1e-9

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.kinematics not in (NONREL, REL):
            raise ValueError(f"unknown kinematics {self.kinematics!r}")

    @property
    def rel(self) -> bool:
        return self.kinematics == REL

    @property
    def sigma(self) -> float:
        return SIGNS[self.sign]

    def check_times(self, *times):
        for t in times:
            if not self.field.contains_time(t):
                raise ValueError(f"time {t} outside the field table's slab [{self.field.t0}, {self.field.t1}]")

    def n_steps(self, s: float, t: float) -> int:
        return max(1, int(math.ceil(abs(s - t) / self.step - 1e-9)))


def _as_arrays(*cols):
    out = [np.atleast_1d(np.asarray(c, dtype=float)).ravel() for c in cols]
    shape = np.broadcast(*out).shape
    return [np.ascontiguousarray(np.broadcast_to(c, shape)) for c in out]


def rhs(c, t: float, spec: FlowSpec):
    """(dr/ds, dw/ds) of the reduced characteristic system at c = (r, w, L)."""
    r, w, L = (float(x) for x in c)
    if r < 0:
        raise ValueError("r must be non-negative")
    if r == 0 and L > 0:
        raise ValueError("r = 0 with L > 0 is not a phase point")
    return K.rhs(*spec.field.kernel_args(), spec.sigma, spec.rel, float(t), r, w, L)


def integrate(c, s: float, t: float, spec: FlowSpec):
    """Z(s, t, c): the reduced state at time s of the characteristic through c at t.

    ``c`` is ``(r, w, L)`` with scalars or equal-length arrays.
    """
    spec.check_times(s, t)
    r, w, L = _as_arrays(*c)
    if np.any((r == 0) & (L > 0)):
        raise ValueError("r = 0 with L > 0 is not a phase point")
    if s == t:
        out = (r.copy(), w.copy(), L)
    else:
        n = spec.n_steps(s, t)
        h = (s - t) / n
        rn, wn, hits = K.integrate_points(
            r, w, L, *spec.field.kernel_args(), spec.sigma, spec.rel,
            METHODS[spec.method], float(t), n, h, spec.r_floor,
        )
        if hits:
            log.info("r_floor guard triggered %d times", hits)
        out = (rn, wn, L)
    if np.ndim(c[0]) == 0:
        return tuple(float(a[0]) for a in out)
    return out


def flow_inverse_residual(c, s: float, t: float, spec: FlowSpec):
    """|Z(t, s, Z(s, t, c)) - c| in the (r, w) plane."""
    fwd = integrate(c, s, t, spec)
    back = integrate(fwd, t, s, spec)
    r0, w0, _ = _as_arrays(*c)
    r1, w1, _ = _as_arrays(*back)
    res = np.hypot(r1 - r0, w1 - w0)
    return float(res[0]) if np.ndim(c[0]) == 0 else res


def integrate_full(x, v, s: float, t: float, spec: FlowSpec):
    """RK4 on the unreduced system, F(t, x) = G(t, |x|) x/|x|."""
    spec.check_times(s, t)
    x = np.ascontiguousarray(np.atleast_2d(x), dtype=float)
    v = np.ascontiguousarray(np.atleast_2d(v), dtype=float)
    if s == t:
        return x.copy(), v.copy()
    n = spec.n_steps(s, t)
    h = (s - t) / n
    return K.integrate_points_3d(x, v, *spec.field.kernel_args(), spec.sigma, spec.rel, float(t), n, h)


def volume_ratio(z, s: float, t: float, spec: FlowSpec, eps: float = 1e-5) -> np.ndarray:
    """|det dZ(s,t,.)/dz| at each phase point z (rows of shape (6,)).

    The determinant is the volume of the parallelepiped spanned by the images
    of the edges of a box of side 2*eps around z, by central differences.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if z.shape[1] != 6:
        raise ValueError("phase points need six components")
    if not eps > 0:
        raise ValueError("degenerate cloud: eps must be positive")
    n = z.shape[0]
    cloud = np.repeat(z[:, None, :], 12, axis=1)
    for d in range(6):
        cloud[:, 2 * d, d] += eps
        cloud[:, 2 * d + 1, d] -= eps
    flat = cloud.reshape(-1, 6)
    X, V = integrate_full(flat[:, :3], flat[:, 3:], s, t, spec)
    img = np.concatenate([X, V], axis=1).reshape(n, 12, 6)
    jac = (img[:, 0::2, :] - img[:, 1::2, :]) / (2.0 * eps)
    return np.abs(np.linalg.det(jac))


def leapfrog_step_jacobian(c, t: float, h: float, spec: FlowSpec) -> np.ndarray:
    """Exact Jacobian of one kick-drift-kick map in (r, w), as a 2x2 matrix.

    Assembled from the derivatives of each sub-map; its determinant is the
    per-step phase-area ratio. Non-relativistic kinematics only, where the
    splitting is symplectic.
    """
    if spec.rel:
        raise ValueError("leapfrog area ratio is defined for non-relativistic kinematics")
    r, w, L = (float(x) for x in c)
    args = spec.field.kernel_args()
    sig = spec.sigma

    def da_dr(tt, rr):
        cent = -3.0 * L * L / rr**4 if L > 0 else 0.0
        return cent - sig * K.field_slope(*args, tt, abs(rr))

    wh = w + 0.5 * h * K.accel(*args, sig, False, t, r, w, L)
    kick1 = np.array([[1.0, 0.0], [0.5 * h * da_dr(t, r), 1.0]])
    rn = r + h * wh
    drift = np.array([[1.0, h], [0.0, 1.0]])
    kick2 = np.array([[1.0, 0.0], [0.5 * h * da_dr(t + h, rn), 1.0]])
    return kick2 @ drift @ kick1


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random element of SO(3)."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
