"""Conserved quantities: mass, energies, Casimirs and the energy-exchange balance.

Everything here reads solver output (ensembles, field tables) but never
calls into the Picard loop, so the checks stay independent of it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .phase_space import NONREL, REL, Ensemble, Grid, momentum_modulus


# --- energies ----------------------------------------------------------------

def kinetic_energy(ensemble: Ensemble, kinematics: str = NONREL) -> float:
    """sum weight |v|^2/2, or sum weight sqrt(1 + |v|^2) (rest energy included)."""
    if len(ensemble) == 0:
        return 0.0
    p2 = momentum_modulus(ensemble.r, ensemble.w, ensemble.L) ** 2
    if kinematics == REL:
        return float(np.sum(ensemble.weight * np.sqrt(1.0 + p2)))
    if kinematics != NONREL:
        raise ValueError(f"unknown kinematics {kinematics!r}")
    return float(np.sum(ensemble.weight * 0.5 * p2))


def potential_energy(mass_row, radius_grid) -> float:
    """-1/2 int (m/r)^2 dr: trapezoid on the grid plus the exterior tail -M^2/(2 r_max)."""
    m = np.asarray(mass_row, dtype=float)
    r = np.asarray(radius_grid, dtype=float)
    if m.size == 0 or m[-1] == 0.0:
        return 0.0
    g = np.zeros_like(m)
    pos = r > 0
    g[pos] = (m[pos] / r[pos]) ** 2
    return float(-0.5 * np.trapezoid(g, r) - m[-1] ** 2 / (2.0 * r[-1]))


def shell_potential_energy(radii, weights) -> float:
    """Exact potential energy of thin shells: pairs interact through 1/max(r_i, r_j).

    Each shell also carries its self energy -m_i^2/(2 r_i).
    """
    r = np.asarray(radii, dtype=float)
    m = np.asarray(weights, dtype=float)
    if r.size == 0:
        return 0.0
    if np.any(r <= 0):
        raise ValueError("shells need r > 0")
    order = np.argsort(r, kind="stable")
    r, m = r[order], m[order]
    inner = np.concatenate([[0.0], np.cumsum(m)[:-1]])
    return float(-np.sum(m * (inner + 0.5 * m) / r))


def pairwise_potential_energy(points, masses) -> float:
    """-sum_{i<j} m_i m_j / |x_i - x_j| over point masses in 3-space (O(N^2))."""
    x = np.asarray(points, dtype=float)
    m = np.asarray(masses, dtype=float)
    total = 0.0
    for i in range(len(m) - 1):
        d = np.linalg.norm(x[i + 1:] - x[i], axis=1)
        total -= m[i] * float(np.sum(m[i + 1:] / d))
    return total


def energy_exchange(ensemble: Ensemble, G, kinematics: str = NONREL, sign: float = 1.0):
    """The two rates whose sum is dE_total/dt.

    ``kin`` is sum weight * (u . F), with u the coordinate velocity and
    F = -sign G(r) x/r. ``pot`` is the time derivative of the pairwise shell
    potential energy, sum_i m_i u_i (m_<(r_i) + m_=(r_i)/2)/r_i**2 with m_= the
    mass at exactly r_i, evaluated as a sorted prefix sum instead of the
    O(N^2) double loop. They cancel up to the difference between ``G`` and
    the shells' own field.
    """
    if len(ensemble) == 0:
        return 0.0, 0.0
    r, w, L, m = ensemble.r, ensemble.w, ensemble.L, ensemble.weight
    u = w
    if kinematics == REL:
        u = w / np.sqrt(1.0 + momentum_modulus(r, w, L) ** 2)
    G = np.asarray(G, dtype=float)
    kin = float(np.sum(m * u * (-sign * G)))
    order = np.argsort(r, kind="stable")
    rs, ms, us = r[order], m[order], u[order]
    csum = np.concatenate([[0.0], np.cumsum(ms)])
    lo = np.searchsorted(rs, rs, side="left")
    hi = np.searchsorted(rs, rs, side="right")
    # shells at equal radius: each pair moves the shared radius at the mean speed
    inner = csum[lo] + 0.5 * (csum[hi] - csum[lo])
    pos = rs > 0
    pot = float(sign * np.sum(ms[pos] * us[pos] * inner[pos] / rs[pos] ** 2))
    return kin, pot


# --- Casimirs ----------------------------------------------------------------

def _slogs(s):
    s = np.asarray(s, dtype=float)
    return np.where(s > 0, s * np.log(np.where(s > 0, s, 1.0)), 0.0)


PHI_PRESETS: dict = {
    "s": lambda s: np.asarray(s, dtype=float),
    "s2": lambda s: np.asarray(s, dtype=float) ** 2,
    "slogs": _slogs,
}


def phi_from_name(name: str) -> Callable:
    """Preset by name; ``indicator:<theta>`` gives 1[s > theta]."""
    if name in PHI_PRESETS:
        return PHI_PRESETS[name]
    if name.startswith("indicator:"):
        theta = float(name.split(":", 1)[1])
        if theta < 0:
            raise ValueError("indicator threshold must be >= 0")
        return lambda s: (np.asarray(s, dtype=float) > theta).astype(float)
    raise ValueError(f"unknown Casimir preset {name!r}; use s, s2, slogs or indicator:<theta>")


def _check_phi(phi: Callable) -> None:
    if float(np.asarray(phi(np.zeros(1)))[0]) != 0.0:
        raise ValueError("Casimir functions need Phi(0) = 0")


def casimir_exact(ensemble: Ensemble, phi: Callable) -> float:
    """sum over initial cells of volume * Phi(f0); the same at every time."""
    _check_phi(phi)
    if len(ensemble) == 0:
        return 0.0
    return float(np.sum(ensemble.volume * phi(ensemble.fvalue)))


def reconstruct_characteristics(solution, datum, t: float, grid: Grid):
    """f(t, z) = f0(Z(0, t, z)) at the centres of ``grid``; returns (values, volumes)."""
    r, w, L, vol = grid.mesh()
    if t == 0:
        return datum(r, w, L), vol
    r0, w0 = solution.pull_back(r, w, L, t, 0.0)
    return datum(r0, w0, L), vol


def reconstruct_histogram(ensemble: Ensemble, grid: Grid):
    """Bin weights onto ``grid`` and divide by the reduced cell volume; returns (values, volumes)."""
    r, w, L, vol = grid.mesh(admissible_only=False)
    nr, nw, nL = grid.shape
    dr, dw, dL = grid.steps
    i = np.clip(np.floor(ensemble.r / dr).astype(int), 0, nr - 1)
    j = np.clip(np.floor((ensemble.w + grid.P) / dw).astype(int), 0, nw - 1)
    k = np.clip(np.floor(ensemble.L / dL).astype(int), 0, nL - 1)
    binned = np.zeros(grid.shape)
    np.add.at(binned, (i, j, k), ensemble.weight)
    binned = binned.ravel()
    keep = vol > 0
    out = np.zeros_like(binned)
    out[keep] = binned[keep] / vol[keep]
    return out, vol


def casimir_reconstructed(values, volumes, phi: Callable) -> float:
    _check_phi(phi)
    return float(np.sum(volumes * phi(values)))


# --- report ------------------------------------------------------------------

@dataclass
class ConservationReport:
    times: np.ndarray
    columns: dict
    phi_names: list
    reconstruction: str = "characteristics"
    flags: list = field(default_factory=list)

    BASE = ("mass", "L1", "Linf", "E_kin", "E_pot", "E_total", "P", "R_max")

    def header(self) -> list:
        cols = ["t", *self.BASE]
        for name in self.phi_names:
            cols += [f"C_exact[{name}]", f"C_recon[{name}]"]
        return cols

    def rows(self):
        keys = self.header()[1:]
        for i, t in enumerate(self.times):
            yield [float(t)] + [float(self.columns[k][i]) for k in keys]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(self.header())
            for row in self.rows():
                wr.writerow([repr(x) for x in row])

    def drift(self, key: str) -> float:
        """max_t |c(t)/c(0) - 1|; absolute when c(0) = 0."""
        c = np.asarray(self.columns[key], dtype=float)
        c = c[np.isfinite(c)]
        if c.size == 0:
            return 0.0
        if c[0] == 0:
            return float(np.max(np.abs(c)))
        return float(np.max(np.abs(c / c[0] - 1.0)))

    @property
    def energy_drift(self) -> float:
        return self.drift("E_total")

    def casimir_drift(self, name: str, kind: str = "recon") -> float:
        return self.drift(f"C_{kind}[{name}]")

    def summary(self) -> dict:
        out = {"E_total": self.energy_drift}
        for name in self.phi_names:
            out[f"C_recon[{name}]"] = self.casimir_drift(name)
            out[f"C_exact[{name}]"] = self.casimir_drift(name, "exact")
        return out


def _row_times(solution, stride: int):
    n = len(solution.slabs)
    idx = list(range(0, n + 1, max(1, int(stride))))
    if idx[-1] != n:
        idx.append(n)
    return idx


def conservation_report(
    solution,
    stride: int = 1,
    phis: Sequence[str] = ("s", "s2"),
    reconstruction: str = "characteristics",
    recon_resolution=None,
    recon_stride: Optional[int] = None,
) -> ConservationReport:
    """Diagnostics at every ``stride``-th slab boundary of a global solution.

    E_pot comes from the converged field table at each boundary time. The
    reconstructed columns (L1, Linf, C_recon) use one fixed grid covering
    the support at all report times; they are evaluated every
    ``recon_stride``-th row (default: every row) and left as NaN elsewhere.
    """
    if reconstruction not in ("characteristics", "histogram"):
        raise ValueError(f"unknown reconstruction {reconstruction!r}")
    names = list(phis)
    funcs = [phi_from_name(p) for p in names]
    for f in funcs:
        _check_phi(f)
    datum = solution.datum
    kin = datum.kinematics
    idx = _row_times(solution, stride) if solution.slabs else [0]
    states = solution.states() if solution.slabs else []

    def state_at(i):
        return states[i] if states else Ensemble.empty()

    def mass_row_at(i):
        if not solution.slabs:
            return None, None
        slab = solution.slabs[i] if i < len(solution.slabs) else solution.slabs[-1]
        k = 0 if i < len(solution.slabs) else -1
        return slab.field.mass[k], slab.field.radius_grid

    def p_at(i):
        if not solution.slabs:
            return 0.0
        if i < len(solution.slabs):
            return float(solution.slabs[i].p_of_t[0])
        return float(solution.slabs[-1].p_of_t[-1])

    # fixed reconstruction box covering every report time
    R_box, P_box = datum.R0, datum.P0
    for i in idx:
        e = state_at(i)
        if len(e):
            R_box = max(R_box, float(np.max(e.r)))
            P_box = max(P_box, float(np.max(e.momentum())))
    res = recon_resolution if recon_resolution is not None else solution.config.resolution
    res = (int(res),) * 3 if np.isscalar(res) else tuple(int(n) for n in res)
    grid = Grid(R_box * 1.0001, P_box * 1.0001, res)
    rstride = max(1, int(recon_stride)) if recon_stride else 1

    cols = {k: [] for k in ConservationReport.BASE}
    for name in names:
        cols[f"C_exact[{name}]"] = []
        cols[f"C_recon[{name}]"] = []
    times = []
    for n, i in enumerate(idx):
        ens = state_at(i)
        t = ens.t if solution.slabs else 0.0
        times.append(t)
        cols["mass"].append(ens.mass)
        ekin = kinetic_energy(ens, kin)
        m_row, r_grid = mass_row_at(i)
        epot = 0.0 if m_row is None else potential_energy(m_row, r_grid)
        if datum.sign == "repulsive":
            epot = -epot
        cols["E_kin"].append(ekin)
        cols["E_pot"].append(epot)
        cols["E_total"].append(ekin + epot)
        cols["P"].append(p_at(i))
        cols["R_max"].append(float(np.max(ens.r)) if len(ens) else 0.0)
        do_recon = len(ens) > 0 and (n % rstride == 0 or n == len(idx) - 1)
        if do_recon:
            if reconstruction == "characteristics":
                vals, vol = reconstruct_characteristics(solution, datum, t, grid)
            else:
                vals, vol = reconstruct_histogram(ens, grid)
            cols["L1"].append(float(np.sum(vol * vals)))
            cols["Linf"].append(float(np.max(vals)) if vals.size else 0.0)
        else:
            vals = vol = None
            cols["L1"].append(0.0 if len(ens) == 0 else math.nan)
            cols["Linf"].append(0.0 if len(ens) == 0 else math.nan)
        for name, f in zip(names, funcs):
            cols[f"C_exact[{name}]"].append(casimir_exact(ens, f))
            if vals is not None:
                cols[f"C_recon[{name}]"].append(casimir_reconstructed(vals, vol, f))
            else:
                cols[f"C_recon[{name}]"].append(0.0 if len(ens) == 0 else math.nan)
    report = ConservationReport(np.array(times), {k: np.array(v) for k, v in cols.items()}, names, reconstruction)
    for name in names:
        if name == "slogs" or name.startswith("indicator:"):
            report.flags.append(f"{name}: Phi is not Lipschitz; reconstruction error is not bounded")
    return report
