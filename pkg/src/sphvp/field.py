"""Radial field tables built from the cumulative-mass identity G = m(r)/r**2."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K

DEPOSITS = {"cic": K.DEPOSIT_CIC, "step": K.DEPOSIT_STEP}


def uniform_radius_grid(r_max: float, nodes: int) -> np.ndarray:
    if nodes < 2:
        raise ValueError("radius grid needs at least two nodes")
    if not r_max > 0:
        raise ValueError("radius grid needs r_max > 0")
    return np.linspace(0.0, r_max, nodes)


def field_from_mass(mass: np.ndarray, radius_grid: np.ndarray) -> np.ndarray:
    G = np.zeros_like(mass, dtype=float)
    G[..., 1:] = mass[..., 1:] / radius_grid[1:] ** 2
    return G


@dataclass(frozen=True)
class RadialFieldTable:
    """Cumulative mass m(t_i, r_j) on a slab, with G = m/r**2 and G(t, 0) = 0.

    Both grids are uniform; the radius grid starts at 0.
    """

    time_grid: np.ndarray
    radius_grid: np.ndarray
    mass: np.ndarray
    total_mass: float

    def __post_init__(self):
        t = np.ascontiguousarray(self.time_grid, dtype=float)
        r = np.ascontiguousarray(self.radius_grid, dtype=float)
        m = np.ascontiguousarray(self.mass, dtype=float)
        if m.shape != (t.size, r.size):
            raise ValueError(f"mass table shape {m.shape} does not match grids ({t.size}, {r.size})")
        if r[0] != 0.0 or r.size < 2:
            raise ValueError("radius grid must start at 0 and have two nodes or more")
        G = field_from_mass(m, r)
        for a in (t, r, m, G):
            a.setflags(write=False)
        object.__setattr__(self, "time_grid", t)
        object.__setattr__(self, "radius_grid", r)
        object.__setattr__(self, "mass", m)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "total_mass", float(self.total_mass))

    @property
    def t0(self) -> float:
        return float(self.time_grid[0])

    @property
    def t1(self) -> float:
        return float(self.time_grid[-1])

    @property
    def dt(self) -> float:
        n = self.time_grid.size
        return (self.t1 - self.t0) / (n - 1) if n > 1 else 1.0

    @property
    def dr(self) -> float:
        return float(self.radius_grid[-1] / (self.radius_grid.size - 1))

    @property
    def r_max(self) -> float:
        return float(self.radius_grid[-1])

    def kernel_args(self):
        """(G, t0, ht, dr, M) in the order the compiled kernels expect."""
        return self.G, self.t0, self.dt, self.dr, self.total_mass

    def contains_time(self, t: float, slack: float = 1e-9) -> bool:
        eps = slack * max(1.0, abs(self.t1 - self.t0))
        return self.t0 - eps <= t <= self.t1 + eps

    def row(self, t: float) -> np.ndarray:
        """Mass row at time t, linear in time between nodes."""
        if not self.contains_time(t):
            raise ValueError(f"t={t} outside table [{self.t0}, {self.t1}]")
        if self.time_grid.size == 1:
            return self.mass[0].copy()
        y = (t - self.t0) / self.dt
        k = min(max(int(math.floor(y)), 0), self.time_grid.size - 2)
        b = min(max(y - k, 0.0), 1.0)
        return (1.0 - b) * self.mass[k] + b * self.mass[k + 1]

    @classmethod
    def zero(cls, time_grid, radius_grid) -> "RadialFieldTable":
        return cls(time_grid, radius_grid, np.zeros((len(time_grid), len(radius_grid))), 0.0)

    @classmethod
    def point_mass(cls, M: float, time_grid, r_max: float = 1e-3, nodes: int = 2) -> "RadialFieldTable":
        """Field of a point mass: G = M/r**2 exactly for r >= r_max."""
        r = uniform_radius_grid(r_max, nodes)
        m = np.where(r > 0, M * (r / r_max) ** 3, 0.0)
        return cls(time_grid, r, np.tile(m, (len(time_grid), 1)), M)

    @classmethod
    def static(cls, radius_grid, mass_row, t0: float, t1: float) -> "RadialFieldTable":
        mass_row = np.asarray(mass_row, dtype=float)
        return cls(np.array([t0, t1]), radius_grid, np.vstack([mass_row, mass_row]), mass_row[-1])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "r", "m", "G"])
            for i, t in enumerate(self.time_grid):
                for j, r in enumerate(self.radius_grid):
                    wr.writerow([repr(float(t)), repr(float(r)), repr(float(self.mass[i, j])), repr(float(self.G[i, j]))])


def cumulative_mass(radii, weights, radius_grid, scheme: str = "cic") -> np.ndarray:
    """Cumulative mass on the nodes of a uniform radius grid.

    ``cic`` spreads every sample over a cloud of one cell width centred on it,
    which makes m piecewise linear and G Lipschitz. ``step`` counts
    ``{r_i <= r_j}`` exactly (ties included); the grid may then start anywhere.
    """
    radii = np.ascontiguousarray(radii, dtype=float)
    weights = np.ascontiguousarray(weights, dtype=float)
    radius_grid = np.asarray(radius_grid, dtype=float)
    if np.any(weights < 0):
        raise ValueError("weights must be non-negative")
    if scheme == "step":
        order = np.argsort(radii, kind="stable")
        cum = np.concatenate([[0.0], np.cumsum(weights[order])])
        return cum[np.searchsorted(radii[order], radius_grid, side="right")]
    if scheme != "cic":
        raise ValueError(f"unknown deposit scheme {scheme!r}")
    if radius_grid[0] != 0.0:
        raise ValueError("cic deposit needs a radius grid starting at 0")
    out = np.zeros(radius_grid.size)
    dr = radius_grid[-1] / (radius_grid.size - 1)
    K.deposit_row(radii, weights, dr, radius_grid.size, K.DEPOSIT_CIC, out)
    return out


def field_value(table: RadialFieldTable, t, r):
    """G(t, r): bilinear inside the grid, M/r**2 beyond it, 0 at the centre."""
    if not table.contains_time(t):
        raise ValueError(f"t={t} outside tabulated slab [{table.t0}, {table.t1}]")
    args = table.kernel_args()
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be non-negative")
    out = np.array([K.field_at(*args, float(t), float(x)) for x in r.ravel()]).reshape(r.shape)
    return float(out) if out.ndim == 0 else out


def field_sup_bound(mass: float, sup: float) -> float:
    """Upper bound 3 (2 pi)^(2/3) |rho|_1^(1/3) |rho|_inf^(2/3) on |F|."""
    if mass < 0 or sup < 0:
        raise ValueError("norms must be non-negative")
    return 3.0 * (2.0 * math.pi) ** (2.0 / 3.0) * mass ** (1.0 / 3.0) * sup ** (2.0 / 3.0)


def cf_constant(l1, linf: float | None = None, resolution=32) -> float:
    """C = 4 3^(1/3) pi^(4/3) |f|_1^(1/3) |f|_inf^(2/3), so that |F_{n+1}(t)| <= C P_n(t)**2.

    Accepts the two norms, or an :class:`InitialDatum` whose undeclared norms
    are then computed at ``resolution``.
    """
    if linf is None:
        from .phase_space import datum_norms

        norms = datum_norms(l1, resolution)
        l1, linf = norms["mass"], norms["sup_norm"]
    return 4.0 * 3.0 ** (1.0 / 3.0) * math.pi ** (4.0 / 3.0) * l1 ** (1.0 / 3.0) * linf ** (2.0 / 3.0)


def lipschitz_constant(rho_sup: float) -> float:
    if rho_sup < 0:
        raise ValueError("rho_sup must be non-negative")
    return 20.0 * math.pi / 3.0 * rho_sup


def rho_sup_bound(f_sup: float, p: float) -> float:
    """A-priori density bound (4 pi/3) |f|_inf P**3."""
    return 4.0 * math.pi / 3.0 * f_sup * p**3


def density(mass_row, radius_grid) -> np.ndarray:
    """Diagnostic density from finite differences of m, at cell midpoints."""
    dm = np.diff(mass_row)
    r0, r1 = radius_grid[:-1], radius_grid[1:]
    return dm / (4.0 * math.pi / 3.0 * (r1**3 - r0**3))


def potential(mass_row, radius_grid) -> np.ndarray:
    """U(r) = -m(r)/r - 4 pi int_r^inf rho s ds on the nodes (diagnostic only)."""
    rho = density(mass_row, radius_grid)
    mid = 0.5 * (radius_grid[:-1] + radius_grid[1:])
    shell = 4.0 * math.pi * rho * mid * np.diff(radius_grid)
    outer = np.concatenate([np.cumsum(shell[::-1])[::-1], [0.0]])
    U = np.empty_like(radius_grid)
    U[1:] = -mass_row[1:] / radius_grid[1:] - outer[1:]
    U[0] = -outer[0]
    return U
