"""Property battery behind ``sphvp verify``."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .diagnostics import casimir_exact, kinetic_energy, phi_from_name, potential_energy
from .field import RadialFieldTable
from .flow import FlowSpec, flow_inverse_residual, integrate, leapfrog_step_jacobian, volume_ratio
from .phase_space import NONREL, lift, sample_ensemble
from .solver import continue_solution, delta0, picard_slab

ORBIT_M, ORBIT_R = 1.0, 2.0


@dataclass
class Result:
    name: str
    passed: bool
    detail: str


def circular_orbit_period(M: float = ORBIT_M, r: float = ORBIT_R) -> float:
    return 2.0 * math.pi * math.sqrt(r**3 / M)


def orbit_spec(steps_per_period: int, method: str = "rk4", periods: float = 1.0) -> FlowSpec:
    period = circular_orbit_period()
    table = RadialFieldTable.point_mass(ORBIT_M, np.array([0.0, periods * period]))
    return FlowSpec(table, step=period / steps_per_period, method=method)


def check_flow_inverse(steps_per_period: int, tol: float = 1e-6) -> Result:
    period = circular_orbit_period()
    spec = orbit_spec(steps_per_period)
    c = (ORBIT_R, 0.0, math.sqrt(ORBIT_M * ORBIT_R))
    back = integrate(c, period, 0.0, spec)
    ret = math.hypot(back[0] - c[0], back[1] - c[1]) / ORBIT_R
    # an eccentric orbit makes the inverse residual sensitive to the step
    c2 = (ORBIT_R, 0.3, 0.8 * c[2])
    res = flow_inverse_residual(c2, 0.5 * period, 0.0, spec) / ORBIT_R
    ok = ret <= tol and res <= tol
    return Result("flow-inverse", ok, f"period return {ret:.2e}, inverse residual {res:.2e} (limit {tol:g})")


def _points_in_support(datum, n: int, rng) -> np.ndarray:
    ens = sample_ensemble(datum, 12)
    idx = rng.choice(len(ens), size=n, replace=len(ens) < n)
    r = ens.r[idx] * rng.uniform(0.9, 1.0, n)
    x, v = lift(r, ens.w[idx], ens.L[idx])
    return np.hstack([x, v])


def run_battery(cfg) -> list:
    from .cli import build_datum

    rng = np.random.default_rng(cfg.seed)
    datum, _ = build_datum(cfg)
    scfg = cfg.solver_config()
    out = [check_flow_inverse(cfg.orbit_steps)]

    if datum.mass == 0 or datum.R0 == 0:
        out.append(Result("vacuum", True, "trivial datum; field-dependent properties skipped"))
        return out

    slab = picard_slab(datum, 0.0, 0.5 * delta0(datum.P0, _cf(datum, scfg)), config=scfg)
    spec = FlowSpec(slab.field, datum.kinematics, datum.sign, step=slab.step, method="rk4",
                    r_floor=slab.r_floor)

    z = _points_in_support(datum, 20, rng)
    det = volume_ratio(z, slab.t1, slab.t0, spec)
    err = float(np.max(np.abs(det - 1.0)))
    out.append(Result("volume-ratio", err <= 1e-3, f"max |det - 1| = {err:.2e} over {len(z)} points"))

    if datum.kinematics == NONREL:
        worst = 0.0
        for row in z[:10]:
            r = float(np.linalg.norm(row[:3]))
            w = float(row[:3] @ row[3:]) / r
            L = float(np.linalg.norm(np.cross(row[:3], row[3:])))
            J = leapfrog_step_jacobian((r, w, L), slab.t0, slab.step, spec)
            worst = max(worst, abs(np.linalg.det(J) - 1.0))
        out.append(Result("leapfrog-area", worst <= 1e-12, f"max |det - 1| = {worst:.2e}"))

    Q = slab.q_of_t()
    margin = float(np.min(Q - slab.p_of_t))
    out.append(Result("q-bound", bool(np.all(slab.p_of_t <= Q)), f"min Q - P = {margin:.3e}"))

    kappa = slab.contraction_ratios()[1:]
    kmax = float(np.max(kappa)) if kappa.size else 0.0
    ok = kmax < 0.8 and slab.iterations <= 15
    out.append(Result("contraction", ok, f"{slab.iterations} iterations, max ratio from iteration 2: {kmax:.2e}"))

    if datum.relativistic:
        vmax = float(np.max(slab.speed_of_t))
        out.append(Result("speed-bound", vmax < 1.0, f"max |dr/ds| = {vmax:.6f}"))

    sol = continue_solution(datum, 3 * slab.t1, replace(scfg))
    states = sol.states()
    phi = phi_from_name("s2")
    c0 = casimir_exact(states[0], phi)
    cdrift = max(abs(casimir_exact(e, phi) - c0) for e in states)
    energies = []
    sgn = 1.0 if datum.sign == "attractive" else -1.0
    for i, e in enumerate(states):
        s = sol.slabs[min(i, len(sol.slabs) - 1)]
        row = s.field.mass[0 if i < len(sol.slabs) else -1]
        energies.append(kinetic_energy(e, datum.kinematics) + sgn * potential_energy(row, s.field.radius_grid))
    energies = np.array(energies)
    edrift = float(np.max(np.abs(energies / energies[0] - 1.0)))
    ok = edrift <= 1e-3 and cdrift == 0.0
    out.append(Result("conservation", ok, f"energy drift {edrift:.2e} over {len(sol.slabs)} slabs, "
                                          f"exact Casimir change {cdrift:.1e}"))
    return out


def _cf(datum, scfg):
    from .field import cf_constant

    return cf_constant(datum, resolution=scfg.resolution)
