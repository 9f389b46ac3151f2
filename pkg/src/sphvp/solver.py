"""Picard iteration on the radial field over slabs of guaranteed length.

On a slab [t0, t0 + delta] the iteration starts from F_0 = 0, transports the
ensemble under F_n, deposits the cumulative mass to get F_{n+1}, and stops
once the sup distance of successive fields drops below ``tol``. Slabs are
chained by :func:`continue_solution` with the restart length
``delta0* = 1/(P* C)``, where C depends only on the norms of the datum.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import _kernels as K
from .field import DEPOSITS, RadialFieldTable, cf_constant, uniform_radius_grid
from .flow import METHODS
from .phase_space import SIGNS, Ensemble, InitialDatum, datum_norms, sample_ensemble

log = logging.getLogger(__name__)


class SlabPreconditionError(ValueError):
    pass


class PicardNonConvergence(RuntimeError):
    def __init__(self, history, tol):
        self.history = list(history)
        self.tol = tol
        super().__init__(
            f"Picard iteration did not reach tol={tol:.3g} in {len(history)} iterations; "
            f"distances: {', '.join(f'{d:.3e}' for d in history)}"
        )


class BlowUpGuard(RuntimeError):
    """The continuation criterion fired: P* or the restart length left the guard band."""

    def __init__(self, message, solution):
        self.solution = solution
        super().__init__(message)


@dataclass(frozen=True)
class SolverConfig:
    resolution: tuple = (96, 32, 64)
    radius_nodes: int = 512
    steps_per_slab: int = 16
    method: str = "rk4"
    deposit: str = "cic"
    slab_safety: float = 0.5
    tol: Optional[float] = None
    max_iter: int = 50
    warm_start: bool = False
    guard_p_factor: float = 1e3
    guard_delta_factor: float = 1e-6
    max_slab: float = math.inf
    radius_margin: float = 0.1
    r_floor_factor: float = 1e-9
    gravity: bool = True

    def __post_init__(self):
        if not 0 < self.slab_safety < 1:
            raise ValueError("slab_safety must lie in (0, 1)")
        if self.steps_per_slab < 1 or self.radius_nodes < 2 or self.max_iter < 1:
            raise ValueError("steps_per_slab, radius_nodes and max_iter must be positive")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.deposit not in DEPOSITS:
            raise ValueError(f"unknown deposit {self.deposit!r}")


def delta0(P: float, cf: float, max_slab: float = math.inf) -> float:
    """Guaranteed slab length (P C)^-1, capped at ``max_slab``; vacuum gives the cap."""
    if P < 0 or cf < 0:
        raise ValueError("P and C must be non-negative")
    if P == 0 or cf == 0:
        return max_slab
    return min(1.0 / (P * cf), max_slab)


def q_bound(t: float, P: float, cf: float) -> float:
    """Q(t) = P / (1 - P C t), the maximal solution of Q = P + C int Q**2."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if P * cf * t >= 1.0:
        raise ValueError(f"t={t} is not below delta0={delta0(P, cf)}")
    return P / (1.0 - P * cf * t)


def default_tol(mass: float, R0: float) -> float:
    scale = mass / R0**2 if R0 > 0 else 0.0
    return 1e-6 * max(1.0, scale)


def field_distance(a: RadialFieldTable, b: RadialFieldTable) -> float:
    """sup over the time x radius grid of |G_a - G_b|."""
    if not (np.array_equal(a.time_grid, b.time_grid) and np.array_equal(a.radius_grid, b.radius_grid)):
        raise ValueError("field tables live on different grids")
    if a.G.size == 0:
        return 0.0
    return float(np.max(np.abs(a.G - b.G)))


@dataclass(frozen=True)
class SlabSolution:
    t0: float
    t1: float
    field: RadialFieldTable
    ensemble_at_t0: Ensemble
    ensemble_at_t1: Ensemble
    iterations: int
    history: np.ndarray
    p_of_t: np.ndarray
    r_of_t: np.ndarray
    speed_of_t: np.ndarray
    p_ref: float
    cf: float
    tol: float
    kinematics: str
    sign: str
    method: str
    r_floor: float = 0.0
    guard_hits: int = 0

    @property
    def time_grid(self) -> np.ndarray:
        return self.field.time_grid

    @property
    def step(self) -> float:
        return self.field.dt

    def q_of_t(self, p_start: Optional[float] = None) -> np.ndarray:
        """Q(t - t0) on the time grid, from ``p_start`` (default: the slab's P reference)."""
        p = self.p_ref if p_start is None else p_start
        return np.array([q_bound(t - self.t0, p, self.cf) for t in self.time_grid])

    def contraction_ratios(self) -> np.ndarray:
        h = np.asarray(self.history)
        with np.errstate(divide="ignore", invalid="ignore"):
            return h[1:] / h[:-1]


def _flow_args(slab: SlabSolution):
    return (*slab.field.kernel_args(), SIGNS[slab.sign], slab.kinematics == "rel", METHODS[slab.method])


def picard_slab(
    state: Union[Ensemble, InitialDatum],
    t0: float,
    delta: float,
    *,
    cf: Optional[float] = None,
    p_star: Optional[float] = None,
    kinematics: str = "nonrel",
    sign: str = "attractive",
    config: SolverConfig = SolverConfig(),
    radius_grid: Optional[np.ndarray] = None,
    support_radius: Optional[float] = None,
    tol: Optional[float] = None,
    seed_field: Optional[RadialFieldTable] = None,
    length_scale: Optional[float] = None,
) -> SlabSolution:
    """Converged field and transported ensemble on [t0, t0 + delta].

    ``state`` is either the ensemble at ``t0`` (then ``cf`` and ``p_star``
    are required) or an initial datum, which is sampled at
    ``config.resolution`` and supplies C, P and the physics flags.
    """
    if isinstance(state, InitialDatum):
        datum = state
        norms = datum_norms(datum, config.resolution)
        cf = cf_constant(norms["mass"], norms["sup_norm"]) if cf is None else cf
        p_star = datum.P0 if p_star is None else p_star
        support_radius = datum.R0 if support_radius is None else support_radius
        length_scale = datum.R0 if length_scale is None else length_scale
        kinematics, sign = datum.kinematics, datum.sign
        if tol is None and config.tol is None:
            tol = default_tol(norms["mass"], datum.R0)
        state = _at_time(sample_ensemble(datum, config.resolution), t0)
    if cf is None or p_star is None:
        raise ValueError("cf and p_star are required when starting from an ensemble")
    if not delta > 0:
        raise SlabPreconditionError("slab length must be positive")
    d0 = delta0(p_star, cf)
    if delta > config.slab_safety * d0 * (1.0 + 1e-12):
        raise SlabPreconditionError(
            f"slab length {delta:.6g} exceeds slab_safety*delta0* = {config.slab_safety * d0:.6g}"
        )
    mass = state.mass
    if support_radius is None:
        support_radius = float(np.max(state.r)) if len(state) else 0.0
    if length_scale is None:
        length_scale = support_radius if support_radius > 0 else 1.0
    if tol is None:
        tol = config.tol if config.tol is not None else default_tol(mass, length_scale)

    nsteps = config.steps_per_slab
    h = delta / nsteps
    time_grid = t0 + h * np.arange(nsteps + 1)
    time_grid[-1] = t0 + delta
    if radius_grid is None:
        radius_grid = uniform_radius_grid(
            required_radius(support_radius, delta, p_star, cf, config.radius_margin, length_scale),
            config.radius_nodes,
        )
    radius_grid = np.asarray(radius_grid, dtype=float)
    dr = radius_grid[-1] / (radius_grid.size - 1)

    current = RadialFieldTable.zero(time_grid, radius_grid)
    if seed_field is not None:
        row = np.interp(radius_grid, seed_field.radius_grid, seed_field.mass[-1], right=seed_field.total_mass)
        current = RadialFieldTable(time_grid, radius_grid, np.tile(row, (nsteps + 1, 1)), mass)

    sigma = SIGNS[sign]
    rel = kinematics == "rel"
    method = METHODS[config.method]
    scheme = DEPOSITS[config.deposit]
    r_floor = config.r_floor_factor * length_scale
    history = []
    for n in range(1, config.max_iter + 1):
        m, pmax, rmax, vmax, r_end, w_end, hits = K.sweep(
            state.r, state.w, state.L, state.weight,
            *current.kernel_args(), sigma, rel, method,
            nsteps, h, r_floor, dr, radius_grid.size, scheme,
        )
        if not config.gravity:
            m[:] = 0.0
        new = RadialFieldTable(time_grid, radius_grid, m, mass if config.gravity else 0.0)
        d = field_distance(new, current)
        history.append(d)
        log.debug("slab t0=%.6g iter %d distance %.3e", t0, n, d)
        if d <= tol:
            break
        current = new
    else:
        raise PicardNonConvergence(history, tol)
    if hits:
        log.info("slab t0=%.6g: r_floor guard triggered %d times", t0, hits)
    return SlabSolution(
        t0=float(t0), t1=float(time_grid[-1]), field=new,
        ensemble_at_t0=state, ensemble_at_t1=state.moved(r_end, w_end, time_grid[-1]),
        iterations=n, history=np.array(history), p_of_t=pmax, r_of_t=rmax, speed_of_t=vmax,
        p_ref=float(p_star), cf=float(cf), tol=float(tol), kinematics=kinematics, sign=sign,
        method=config.method, r_floor=r_floor, guard_hits=int(hits),
    )


def _at_time(ens: Ensemble, t: float) -> Ensemble:
    return ens.moved(ens.r, ens.w, t)


def required_radius(R: float, delta: float, P: float, cf: float, margin: float, scale: float = 1.0) -> float:
    """(1 + margin) (R + delta Q(delta)): contains the spatial support on the slab."""
    Q = q_bound(delta, P, cf) if cf > 0 else P
    r = (1.0 + margin) * (R + delta * Q)
    return r if r > 0 else max(scale, 1.0)


@dataclass
class GlobalSolution:
    datum: InitialDatum
    slabs: list
    cf: float
    delta0: float
    norms: dict
    tol: float
    config: SolverConfig
    stopped: Optional[str] = None
    meta: dict = field(default_factory=dict)

    @property
    def t_end(self) -> float:
        return self.slabs[-1].t1 if self.slabs else 0.0

    @property
    def P_star(self) -> float:
        p = self.datum.P0
        for s in self.slabs:
            p = max(p, float(np.max(s.p_of_t)))
        return p

    def boundary_times(self) -> np.ndarray:
        if not self.slabs:
            return np.array([0.0])
        return np.array([s.t0 for s in self.slabs] + [self.slabs[-1].t1])

    def states(self) -> list:
        """Ensembles at every slab boundary, first to last."""
        if not self.slabs:
            return []
        return [s.ensemble_at_t0 for s in self.slabs] + [self.slabs[-1].ensemble_at_t1]

    def slab_index(self, t: float) -> int:
        for i, s in enumerate(self.slabs):
            if s.field.contains_time(t) and (t <= s.t1 or i == len(self.slabs) - 1):
                return i
        raise ValueError(f"t={t} outside the solution range [0, {self.t_end}]")

    def p_trace(self):
        """Concatenated (t, P(t)) over all slab nodes."""
        ts = [s.time_grid for s in self.slabs]
        ps = [s.p_of_t for s in self.slabs]
        return np.concatenate(ts), np.concatenate(ps)

    def pull_back(self, r, w, L, t: float, to: float = 0.0):
        """Z(to, t, .) for reduced points, crossing slab boundaries backwards."""
        r = np.ascontiguousarray(r, dtype=float)
        w = np.ascontiguousarray(w, dtype=float)
        L = np.ascontiguousarray(L, dtype=float)
        if to > t:
            raise ValueError("pull_back integrates backwards in time")
        cur = t
        i = self.slab_index(t)
        while cur > to + 1e-14 * max(1.0, abs(to)):
            slab = self.slabs[i]
            target = max(slab.t0, to)
            if cur > target:
                n = max(1, int(math.ceil((cur - target) / slab.step - 1e-9)))
                r, w, _ = K.integrate_points(r, w, L, *_flow_args(slab), cur, n, -(cur - target) / n, slab.r_floor)
            cur = target
            i -= 1
        return r, w


def continue_solution(datum: InitialDatum, T_target: float, config: SolverConfig = SolverConfig()) -> GlobalSolution:
    """Chain converged slabs from t = 0 up to ``T_target``.

    Each restart uses delta0* = (P* C)^-1 with the running momentum bound P*
    and the datum's constant C; weights are never modified. Raises
    :class:`BlowUpGuard` (with the partial solution) when P* exceeds
    ``guard_p_factor * P0`` or delta0* drops below ``guard_delta_factor * delta0``.
    """
    if not T_target > 0:
        raise ValueError("T_target must be positive")
    norms = datum_norms(datum, config.resolution)
    cf = cf_constant(norms["mass"], norms["sup_norm"])
    d0 = delta0(datum.P0, cf)
    tol = config.tol if config.tol is not None else default_tol(norms["mass"], datum.R0)
    sol = GlobalSolution(datum, [], cf, d0, norms, tol, config)
    ens = sample_ensemble(datum, config.resolution)
    t = 0.0
    p_star = datum.P0
    radius_grid = None
    seed = None
    while t < T_target * (1.0 - 1e-12):
        d0s = delta0(p_star, cf, config.max_slab)
        if p_star > config.guard_p_factor * datum.P0 or d0s < config.guard_delta_factor * d0:
            sol.stopped = f"blow-up guard at t={t:.6g}: P*={p_star:.6g}, delta0*={d0s:.3e}"
            raise BlowUpGuard(sol.stopped, sol)
        delta = min(config.slab_safety * d0s, T_target - t, config.max_slab)
        if sol.slabs:
            R = float(np.max(ens.r)) + sol.slabs[-1].field.dr if len(ens) else datum.R0
        else:
            R = datum.R0
        need = required_radius(R, delta, p_star, cf, config.radius_margin, datum.R0)
        if radius_grid is None or radius_grid[-1] < need:
            radius_grid = uniform_radius_grid(need, config.radius_nodes)
        slab = picard_slab(
            ens, t, delta, cf=cf, p_star=p_star, kinematics=datum.kinematics, sign=datum.sign,
            config=config, radius_grid=radius_grid, tol=tol, seed_field=seed, length_scale=datum.R0,
        )
        sol.slabs.append(slab)
        log.info("slab %d [%.6g, %.6g]: %d iterations, P*=%.6g", len(sol.slabs) - 1, slab.t0, slab.t1,
                 slab.iterations, p_star)
        p_star = max(p_star, float(np.max(slab.p_of_t)))
        ens = slab.ensemble_at_t1
        t = slab.t1
        if config.warm_start:
            seed = slab.field
    return sol


def momentum_support(solution: Union[SlabSolution, GlobalSolution], t: float) -> float:
    """max over samples of |v| at time t."""
    if isinstance(solution, GlobalSolution):
        if not solution.slabs:
            raise ValueError("empty solution")
        slab = solution.slabs[solution.slab_index(t)]
    else:
        slab = solution
        if not slab.field.contains_time(t):
            raise ValueError(f"t={t} outside slab [{slab.t0}, {slab.t1}]")
    tg = slab.time_grid
    k = int(np.argmin(np.abs(tg - t)))
    if abs(tg[k] - t) <= 1e-12 * max(1.0, abs(t)):
        return float(slab.p_of_t[k])
    ens = slab.ensemble_at_t0
    if len(ens) == 0:
        return 0.0
    n = max(1, int(math.ceil((t - slab.t0) / slab.step - 1e-9)))
    r, w, _ = K.integrate_points(ens.r, ens.w, ens.L, *_flow_args(slab), slab.t0, n, (t - slab.t0) / n, slab.r_floor)
    return float(np.max(np.sqrt(w**2 + np.where(ens.L > 0, (ens.L / np.where(r > 0, r, 1.0)) ** 2, 0.0))))


def transport(slab: SlabSolution, t: float) -> Ensemble:
    """The slab's ensemble flowed from t0 to t under the converged field."""
    if not slab.field.contains_time(t):
        raise ValueError(f"t={t} outside slab [{slab.t0}, {slab.t1}]")
    ens = slab.ensemble_at_t0
    if t == slab.t0 or len(ens) == 0:
        return ens.moved(ens.r, ens.w, t)
    n = max(1, int(round((t - slab.t0) / slab.step)))
    r, w, _ = K.integrate_points(ens.r, ens.w, ens.L, *_flow_args(slab), slab.t0, n, (t - slab.t0) / n, slab.r_floor)
    return ens.moved(r, w, t)
