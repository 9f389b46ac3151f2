"""Isotropic polytropes f = (E0 - E)_+^k and measure-preserving rearrangements.

The radial Poisson equation is shot outward in the variable
``y = E0 - U`` (non-relativistic) or ``y = E0 - 1 - U`` (relativistic, so
that ``y`` is the kinetic energy available at the edge of the support in both
cases). Writing ``m`` for the enclosed mass, the system is

    y' = -m / r**2,     m' = 4 pi r**2 g_k(y),

started from ``y(0) = central_value`` and stopped where ``y`` reaches zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq
from scipy.special import gammaln

from .diagnostics import kinetic_energy, potential_energy
from .phase_space import NONREL, REL, InitialDatum, momentum_modulus, write_table

K_MAX = 3.5
MODES = ("radial-kick", "phase-shear")


class ShootingError(RuntimeError):
    """The shooting solution did not reach y = 0 inside the radius cap."""


def polytrope_constant(k: float) -> float:
    """c_k with 4 pi int (y - v^2/2)_+^k v^2 dv = c_k y^(k + 3/2)."""
    return (2.0 * math.pi) ** 1.5 * math.exp(gammaln(k + 1.0) - gammaln(k + 2.5))


def _phi(k: float, e):
    e = np.asarray(e, dtype=float)
    if k == 0:
        return np.where(e > 0, 1.0, 0.0)
    return np.where(e > 0, np.abs(e) ** k, 0.0)


def rel_density_integral(y: float, k: float) -> float:
    """4 pi int_0^inf (y + 1 - sqrt(1 + p^2))_+^k p^2 dp by adaptive quadrature."""
    if y <= 0:
        return 0.0
    pmax = math.sqrt((y + 1.0) ** 2 - 1.0)
    val, _ = quad(lambda p: (y + 1.0 - math.sqrt(1.0 + p * p)) ** k * p * p, 0.0, pmax,
                  epsabs=0.0, epsrel=1e-12, limit=200)
    return 4.0 * math.pi * val


@dataclass(frozen=True)
class PolytropeSpec:
    """Parameters of a polytrope.

    Give either ``central_value`` (y at the centre) or the cut-off energy
    ``E0``; the other one follows from the shooting.
    """

    k: float = 1.0
    central_value: Optional[float] = 1.0
    kinematics: str = NONREL
    E0: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.k < K_MAX:
            raise ValueError(f"k must lie in [0, {K_MAX}) for bounded, compactly supported data")
        if self.kinematics not in (NONREL, REL):
            raise ValueError(f"unknown kinematics {self.kinematics!r}")
        if self.central_value is None and self.E0 is None:
            raise ValueError("give central_value or E0")
        if self.central_value is not None and self.E0 is not None:
            raise ValueError("give only one of central_value and E0")
        if self.central_value is not None and not self.central_value > 0:
            raise ValueError("central_value must be positive")
        if self.E0 is not None:
            top = 0.0 if self.kinematics == NONREL else 1.0
            if not self.E0 < top:
                raise ValueError(f"E0 must be below {top}")


@dataclass(frozen=True)
class SteadyState:
    spec: PolytropeSpec
    central_value: float
    E0: float
    R_star: float
    M_star: float
    r_table: np.ndarray
    y_table: np.ndarray
    m_table: np.ndarray
    datum: InitialDatum = field(repr=False)
    density_fn: object = field(repr=False, compare=False)

    @property
    def kinematics(self) -> str:
        return self.spec.kinematics

    @property
    def dynamical_time(self) -> float:
        return dynamical_time(self)

    def potential(self, r):
        """U(r), continuous, with U -> 0 at infinity."""
        r = np.asarray(r, dtype=float)
        shift = 0.0 if self.kinematics == NONREL else 1.0
        inner = self.E0 - shift - np.interp(r, self.r_table, self.y_table)
        outer = -self.M_star / np.maximum(r, self.R_star)
        return np.where(r < self.R_star, inner, outer)

    @property
    def U_table(self):
        return self.r_table, self.potential(self.r_table)

    def density(self, r):
        r = np.asarray(r, dtype=float)
        y = np.where(r < self.R_star, np.interp(r, self.r_table, self.y_table), 0.0)
        return self.density_fn(np.maximum(y, 0.0))

    def enclosed_mass(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r < self.R_star, np.interp(r, self.r_table, self.m_table), self.M_star)

    def potential_energy(self) -> float:
        """Closed form -3/(5 - n) M^2/R, n = k + 3/2 (non-relativistic)."""
        n = self.spec.k + 1.5
        return -3.0 / (5.0 - n) * self.M_star**2 / self.R_star


def _density_function(k: float, kinematics: str, y_max: float):
    if kinematics == NONREL:
        ck = polytrope_constant(k)
        return lambda y: ck * np.maximum(y, 0.0) ** (k + 1.5)
    # tabulate g(y)/y^(k+3/2), which is smooth down to y = 0
    ys = np.linspace(0.0, y_max, 257)[1:]
    vals = np.array([rel_density_integral(y, k) for y in ys]) / ys ** (k + 1.5)
    spline = CubicSpline(np.concatenate([[0.0], ys]), np.concatenate([[polytrope_constant(k)], vals]))

    def g(y):
        y = np.clip(np.asarray(y, dtype=float), 0.0, y_max)
        return spline(y) * y ** (k + 1.5)

    return g


def _shoot(k: float, yc: float, g, rtol: float, r_cap: float):
    gc = float(g(yc))
    a = 4.0 * math.pi / 3.0 * gc
    # series start: y = yc - a r^2/2, m = a r^3
    r0 = 1e-4 * math.sqrt(yc / max(a, 1e-300))
    y0 = yc - 0.5 * a * r0**2
    m0 = a * r0**3

    def rhs(r, s):
        y, m = s
        return [-m / r**2, 4.0 * math.pi * r * r * float(g(max(y, 0.0)))]

    def edge(r, s):
        return s[0]

    edge.terminal = True
    edge.direction = -1
    sol = solve_ivp(rhs, (r0, r_cap), [y0, m0], method="DOP853", events=edge,
                    rtol=rtol, atol=1e-14 * max(1.0, yc), dense_output=True)
    if sol.status != 1 or not len(sol.t_events[0]):
        raise ShootingError(f"y stayed positive up to the radius cap r = {r_cap:g} (k={k}, central value {yc})")
    R = float(sol.t_events[0][0])
    M = float(sol.y_events[0][0][1])
    return sol, r0, R, M


def build_polytrope(spec: PolytropeSpec, rtol: float = 1e-11, table_nodes: int = 4097,
                    r_cap: Optional[float] = None) -> SteadyState:
    """Shoot the radial Poisson equation and wrap f = (E0 - E)_+^k as a datum."""
    if spec.central_value is None:
        return _build_for_cutoff(spec, rtol, table_nodes, r_cap)
    k, yc, kin = spec.k, float(spec.central_value), spec.kinematics
    g = _density_function(k, kin, yc)
    if r_cap is None:
        r_cap = 1e4 / math.sqrt(max(float(g(yc)), 1e-300) / yc)
    sol, r0, R, M = _shoot(k, yc, g, rtol, r_cap)
    r_tab = np.linspace(0.0, R, table_nodes)
    inner = r_tab > r0
    y_tab = np.empty_like(r_tab)
    m_tab = np.empty_like(r_tab)
    dense = sol.sol(r_tab[inner])
    y_tab[inner], m_tab[inner] = dense[0], dense[1]
    a = 4.0 * math.pi / 3.0 * float(g(yc))
    y_tab[~inner] = yc - 0.5 * a * r_tab[~inner] ** 2
    m_tab[~inner] = a * r_tab[~inner] ** 3
    y_tab[-1] = 0.0
    y_tab = np.maximum(y_tab, 0.0)

    if kin == NONREL:
        E0 = -M / R
        P0 = math.sqrt(2.0 * yc)
    else:
        E0 = 1.0 - M / R
        P0 = math.sqrt((yc + 1.0) ** 2 - 1.0)

    def ev(r, w, L, _r=r_tab, _y=y_tab):
        r = np.asarray(r, dtype=float)
        y = np.where(r < R, np.interp(r, _r, _y), 0.0)
        p = momentum_modulus(r, w, L)
        kin_e = 0.5 * p * p if kin == NONREL else np.sqrt(1.0 + p * p) - 1.0
        return _phi(k, y - kin_e)

    sup = 1.0 if k == 0 else yc**k
    name = f"polytrope(k={k:g},y0={yc:g}{',rel' if kin == REL else ''})"
    datum = InitialDatum(ev, R, P0, sup_norm=sup, mass=M, kinematics=kin, name=name,
                         meta={"k": k, "central_value": yc, "E0": E0, "R_star": R, "M_star": M})
    return SteadyState(spec, yc, E0, R, M, r_tab, y_tab, m_tab, datum, g)


def _build_for_cutoff(spec: PolytropeSpec, rtol, table_nodes, r_cap) -> SteadyState:
    target = spec.E0

    def state(yc):
        return build_polytrope(PolytropeSpec(spec.k, yc, spec.kinematics), rtol, table_nodes, r_cap)

    def miss(yc):
        return state(yc).E0 - target

    # E0 - shift = -M/R decreases from 0 as the central value grows
    lo, hi = 1e-6, 1.0
    while miss(hi) > 0:
        hi *= 4.0
        if hi > 1e6:
            raise ShootingError(f"no central value reaches E0 = {target}")
    while miss(lo) < 0:
        lo *= 0.25
        if lo < 1e-16:
            raise ShootingError(f"no central value reaches E0 = {target}")
    yc = brentq(miss, lo, hi, xtol=1e-14, rtol=1e-13)
    return state(yc)


def dynamical_time(state: SteadyState) -> float:
    """sqrt(R^3 / M): the free-fall scale of the steady state (G = 1)."""
    return math.sqrt(state.R_star**3 / state.M_star)


def virial_residual(ensemble, state: SteadyState, radius_nodes: int = 2048) -> tuple:
    """(2 E_kin + E_pot, E_kin, E_pot) with E_kin from the ensemble and E_pot from the shooting."""
    ekin = kinetic_energy(ensemble, NONREL)
    r = np.linspace(0.0, state.R_star, radius_nodes)
    epot = potential_energy(state.enclosed_mass(r), r)
    return 2.0 * ekin + epot, ekin, epot


def perturb(state_or_datum, mode: str, eps: float) -> InitialDatum:
    """Compose the datum with a measure-preserving map of phase space.

    ``radial-kick`` moves mass from (x, v) to (x, v + eps x): in reduced
    coordinates w -> w + eps r with r and L fixed.

    ``phase-shear`` moves (x, v) to (x + eps u(v), v), with u the coordinate
    velocity: free streaming for a time eps. Both maps have unit Jacobian and
    commute with rotations, so every L^p norm and Casimir is unchanged.
    """
    datum = state_or_datum.datum if isinstance(state_or_datum, SteadyState) else state_or_datum
    if mode not in MODES:
        raise ValueError(f"unknown perturbation mode {mode!r}; choose from {MODES}")
    if not abs(eps) <= 0.5:
        raise ValueError("perturbation amplitude must satisfy |eps| <= 0.5")
    if eps == 0:
        return datum
    rel = datum.relativistic

    if mode == "radial-kick":
        def new(r, w, L):
            r = np.asarray(r, dtype=float)
            return datum(r, np.asarray(w, dtype=float) - eps * r, L)

        R0, P0 = datum.R0, datum.P0 + abs(eps) * datum.R0
    else:
        def new(r, w, L):
            r = np.asarray(r, dtype=float)
            w = np.asarray(w, dtype=float)
            L = np.asarray(L, dtype=float)
            p2 = momentum_modulus(r, w, L) ** 2
            scale = 1.0 / np.sqrt(1.0 + p2) if rel else 1.0
            # back to x' = x - eps u(v); |u|^2 = scale^2 p^2 and x.u = r w scale
            r2 = np.maximum(r * r - 2.0 * eps * scale * r * w + (eps * scale) ** 2 * p2, 0.0)
            rp = np.sqrt(r2)
            safe = np.where(rp > 0, rp, 1.0)
            wp = np.where(rp > 0, (r * w - eps * scale * p2) / safe, np.sqrt(p2))
            return datum(rp, wp, L)

        speed = datum.P0 / math.sqrt(1.0 + datum.P0**2) if rel else datum.P0
        R0, P0 = datum.R0 + abs(eps) * speed, datum.P0

    return InitialDatum(new, R0, P0, sup_norm=datum.sup_norm, mass=datum.mass,
                        kinematics=datum.kinematics, sign=datum.sign,
                        name=f"{mode}({eps:g})*{datum.name}", meta=dict(datum.meta, perturbation=mode, eps=eps))


def write_steady_state(path, state: SteadyState, resolution) -> None:
    """Serialize the datum to the radial table format, with the shooting constants."""
    extra = {"polytrope_k": repr(state.spec.k), "central_value": repr(state.central_value),
             "E0": repr(state.E0), "R_star": repr(state.R_star), "M_star": repr(state.M_star)}
    write_table(path, state.datum, resolution, extra=extra)
