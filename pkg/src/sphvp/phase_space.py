"""Phase-space coordinates, initial data and midpoint quadrature.

Reduced coordinates are ``(r, w, L)`` with ``r = |x|``, ``w = x.v/r`` and
``L = |x cross v|``. For a spherically symmetric density the reduction is exact,
and the phase-space volume element becomes ``8*pi**2 * L dr dw dL``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

NONREL = "nonrel"
REL = "rel"
KINEMATICS = (NONREL, REL)

ATTRACTIVE = "attractive"
REPULSIVE = "repulsive"
SIGNS = {ATTRACTIVE: 1.0, REPULSIVE: -1.0}

VOLUME_FACTOR = 8.0 * math.pi**2

Evaluator = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
Resolution = Union[int, Sequence[int]]


def reduce(x, v):
    """Map full coordinates ``(x, v)`` (shape ``(..., 3)``) to ``(r, w, L)``.

    At ``r = 0`` the radial component is defined as ``w = |v|``.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    xv = np.sum(x * v, axis=-1)
    L = np.linalg.norm(np.cross(x, v), axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(r > 0, xv / np.where(r > 0, r, 1.0), np.linalg.norm(v, axis=-1))
    if np.ndim(r) == 0:
        return float(r), float(w), float(L)
    return r, w, L


def lift(r, w, L):
    """Canonical representative ``x = (r, 0, 0)``, ``v = (w, L/r, 0)``."""
    r = np.asarray(r, dtype=float)
    w = np.asarray(w, dtype=float)
    L = np.asarray(L, dtype=float)
    if np.any((r == 0) & (L > 0)):
        raise ValueError("no phase point has r = 0 and L > 0")
    if np.any(r < 0) or np.any(L < 0):
        raise ValueError("reduced coordinates need r >= 0 and L >= 0")
    zero = np.zeros(np.broadcast(r, w, L).shape)
    with np.errstate(invalid="ignore", divide="ignore"):
        vt = np.where(r > 0, L / np.where(r > 0, r, 1.0), 0.0)
    x = np.stack([r + zero, zero, zero], axis=-1)
    v = np.stack([w + zero, vt + zero, zero], axis=-1)
    return x, v


def momentum_modulus(r, w, L):
    """|v| from reduced coordinates; samples with L = 0 may sit at r = 0."""
    r = np.asarray(r, dtype=float)
    L = np.asarray(L, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        q = np.where(L > 0, L / np.where(r > 0, r, np.inf), 0.0)
    return np.sqrt(np.asarray(w, dtype=float) ** 2 + q**2)


@dataclass(frozen=True)
class InitialDatum:
    """Bounded, compactly supported, spherically symmetric phase-space density.

    ``sup_norm`` and ``mass`` may be left as ``None``; they are then computed
    by quadrature (see :func:`datum_norms`).
    """

    evaluator: Evaluator
    R0: float
    P0: float
    sup_norm: Optional[float] = None
    mass: Optional[float] = None
    kinematics: str = NONREL
    sign: str = ATTRACTIVE
    name: str = "custom"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kinematics not in KINEMATICS:
            raise ValueError(f"unknown kinematics {self.kinematics!r}")
        if self.sign not in SIGNS:
            raise ValueError(f"unknown sign {self.sign!r}")
        if self.R0 < 0 or self.P0 < 0:
            raise ValueError("support radii must be non-negative")

    def __call__(self, r, w, L):
        r = np.asarray(r, dtype=float)
        w = np.asarray(w, dtype=float)
        L = np.asarray(L, dtype=float)
        vals = np.asarray(self.evaluator(r, w, L), dtype=float)
        outside = (r > self.R0) | (momentum_modulus(r, w, L) > self.P0)
        return np.where(outside, 0.0, vals)

    @property
    def relativistic(self) -> bool:
        return self.kinematics == REL

    @property
    def sign_factor(self) -> float:
        return SIGNS[self.sign]

    def scaled(self, c: float) -> "InitialDatum":
        ev = self.evaluator
        return replace(
            self,
            evaluator=lambda r, w, L: c * ev(r, w, L),
            sup_norm=None if self.sup_norm is None else c * self.sup_norm,
            mass=None if self.mass is None else c * self.mass,
            name=f"{c:g}*{self.name}",
        )

    def with_physics(self, kinematics=None, sign=None) -> "InitialDatum":
        return replace(self, kinematics=kinematics or self.kinematics, sign=sign or self.sign)


def indicator_ball(R: float = 1.0, P: float = 1.0, value: float = 1.0, **kw) -> InitialDatum:
    """``value`` times the indicator of ``{|x| <= R} x {|v| <= P}``."""
    mass = value * (4.0 * math.pi / 3.0) ** 2 * R**3 * P**3

    def ev(r, w, L):
        return np.where((r <= R) & (momentum_modulus(r, w, L) <= P), value, 0.0)

    return InitialDatum(ev, R, P, sup_norm=value, mass=mass, name="indicator-ball", **kw)


def vacuum(R: float = 1.0, P: float = 1.0, **kw) -> InitialDatum:
    return InitialDatum(lambda r, w, L: np.zeros(np.broadcast(r, w, L).shape), R, P,
                        sup_norm=0.0, mass=0.0, name="vacuum", **kw)


def _as_resolution(resolution: Resolution) -> tuple[int, int, int]:
    if np.isscalar(resolution):
        res = (int(resolution),) * 3
    else:
        res = tuple(int(n) for n in resolution)
    if len(res) != 3 or min(res) < 1:
        raise ValueError(f"resolution needs three counts >= 1, got {resolution!r}")
    return res


@dataclass(frozen=True)
class Grid:
    """Uniform midpoint grid on ``[0, R] x [-P, P] x [0, R*P]``."""

    R: float
    P: float
    shape: tuple[int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "shape", _as_resolution(self.shape))

    @property
    def steps(self):
        nr, nw, nL = self.shape
        return self.R / nr, 2.0 * self.P / nw, self.R * self.P / nL

    def centers(self):
        nr, nw, nL = self.shape
        dr, dw, dL = self.steps
        r = (np.arange(nr) + 0.5) * dr
        w = -self.P + (np.arange(nw) + 0.5) * dw
        L = (np.arange(nL) + 0.5) * dL
        return r, w, L

    def mesh(self, admissible_only: bool = True):
        """Flattened cell centres and reduced cell volumes.

        With ``admissible_only`` cells whose centre has ``|v| > P`` are
        dropped; they cannot carry support of a datum bounded by ``P``.
        """
        r, w, L = self.centers()
        dr, dw, dL = self.steps
        R, W, Lm = (a.ravel() for a in np.meshgrid(r, w, L, indexing="ij"))
        vol = VOLUME_FACTOR * Lm * dr * dw * dL
        if admissible_only:
            keep = momentum_modulus(R, W, Lm) <= self.P * (1.0 + 1e-12)
            R, W, Lm, vol = R[keep], W[keep], Lm[keep], vol[keep]
        return R, W, Lm, vol


@dataclass(frozen=True)
class Ensemble:
    """Quadrature samples of a datum, carried along the flow.

    ``L``, ``weight``, ``fvalue`` and ``volume`` never change in time; only
    ``r`` and ``w`` are transported.
    """

    r: np.ndarray
    w: np.ndarray
    L: np.ndarray
    weight: np.ndarray
    fvalue: np.ndarray
    volume: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        for name in ("r", "w", "L", "weight", "fvalue", "volume"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return self.r.size

    @property
    def mass(self) -> float:
        return float(np.sum(self.weight))

    def moved(self, r, w, t) -> "Ensemble":
        return replace(self, r=r, w=w, t=float(t))

    def momentum(self) -> np.ndarray:
        return momentum_modulus(self.r, self.w, self.L)

    @classmethod
    def empty(cls, t: float = 0.0) -> "Ensemble":
        z = np.zeros(0)
        return cls(z, z, z, z, z, z, t)


def sample_ensemble(datum: InitialDatum, resolution: Resolution) -> Ensemble:
    """Midpoint quadrature of ``datum`` on its support box.

    First-order accurate for discontinuous data. Zero-weight cells are dropped,
    so a vacuum datum gives an empty ensemble.
    """
    grid = Grid(datum.R0, datum.P0, _as_resolution(resolution))
    if datum.R0 == 0 or datum.P0 == 0:
        return Ensemble.empty()
    r, w, L, vol = grid.mesh()
    f = datum(r, w, L)
    if np.any(f < 0):
        raise ValueError("datum takes negative values")
    keep = f > 0
    return Ensemble(r[keep], w[keep], L[keep], f[keep] * vol[keep], f[keep], vol[keep])


def lp_norm(datum: InitialDatum, p: float, resolution: Resolution) -> float:
    if p < 1:
        raise ValueError("p must be >= 1")
    if math.isinf(p) and datum.sup_norm is not None:
        return float(datum.sup_norm)
    ens = sample_ensemble(datum, resolution)
    if len(ens) == 0:
        return 0.0
    if math.isinf(p):
        return float(np.max(ens.fvalue))
    return float(np.sum(ens.volume * ens.fvalue**p) ** (1.0 / p))


def datum_norms(datum: InitialDatum, resolution: Resolution) -> dict:
    """``sup_norm`` and ``mass`` with the route each value came from."""
    out = {}
    ens = None
    for key, declared in (("sup_norm", datum.sup_norm), ("mass", datum.mass)):
        if declared is not None:
            out[key] = float(declared)
            out[key + "_source"] = "declared"
            continue
        if ens is None:
            ens = sample_ensemble(datum, resolution)
        if key == "mass":
            out[key] = ens.mass
        else:
            out[key] = float(np.max(ens.fvalue)) if len(ens) else 0.0
        out[key + "_source"] = f"quadrature{_as_resolution(resolution)}"
    return out


# --- radial table files -----------------------------------------------------
#
#   # sphvp-table v1
#   # R0 = <float>
#   # P0 = <float>
#   # shape = <nr> <nw> <nL>
#   # kinematics = nonrel|rel
#   # sign = attractive|repulsive
#   # sup_norm = <float>        (optional)
#   # mass = <float>            (optional)
#   # r w L f
#   <one row per cell centre of Grid(R0, P0, shape), only rows with f > 0>
#
# The datum is piecewise constant on the cells of that grid.

TABLE_MAGIC = "# sphvp-table v1"


def write_table(path, datum: InitialDatum, resolution: Resolution, extra: Optional[dict] = None) -> None:
    """Write ``datum`` sampled at cell centres; ``extra`` adds header keys."""
    grid = Grid(datum.R0, datum.P0, _as_resolution(resolution))
    r, w, L, _ = grid.mesh()
    f = datum(r, w, L)
    keep = f > 0
    lines = [
        TABLE_MAGIC,
        f"# R0 = {datum.R0!r}",
        f"# P0 = {datum.P0!r}",
        "# shape = " + " ".join(str(n) for n in grid.shape),
        f"# kinematics = {datum.kinematics}",
        f"# sign = {datum.sign}",
    ]
    if datum.sup_norm is not None:
        lines.append(f"# sup_norm = {datum.sup_norm!r}")
    if datum.mass is not None:
        lines.append(f"# mass = {datum.mass!r}")
    for k, v in (extra or {}).items():
        lines.append(f"# {k} = {v}")
    lines.append("# r w L f")
    body = [f"{a:.17g} {b:.17g} {c:.17g} {d:.17g}" for a, b, c, d in zip(r[keep], w[keep], L[keep], f[keep])]
    Path(path).write_text("\n".join(lines + body) + "\n")


def read_table(path) -> InitialDatum:
    header = {}
    rows = []
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
        if first != TABLE_MAGIC:
            raise ValueError(f"{path}: not a sphvp table (missing {TABLE_MAGIC!r})")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "=" in line:
                    k, v = line[1:].split("=", 1)
                    header[k.strip()] = v.strip()
                continue
            rows.append([float(s) for s in line.split()])
    try:
        R0 = float(header["R0"])
        P0 = float(header["P0"])
        shape = tuple(int(s) for s in header["shape"].split())
    except KeyError as exc:
        raise ValueError(f"{path}: header key {exc.args[0]} missing") from None
    data = np.array(rows, dtype=float).reshape(-1, 4)
    grid = Grid(R0, P0, shape)
    cells = np.zeros(shape)
    dr, dw, dL = grid.steps
    if len(data):
        idx = _cell_index(grid, data[:, 0], data[:, 1], data[:, 2])
        cells[idx] = data[:, 3]

    def ev(r, w, L):
        i, j, k = _cell_index(grid, r, w, L, clip=True)
        return cells[i, j, k]

    return InitialDatum(
        ev, R0, P0,
        sup_norm=float(header["sup_norm"]) if "sup_norm" in header else None,
        mass=float(header["mass"]) if "mass" in header else None,
        kinematics=header.get("kinematics", NONREL),
        sign=header.get("sign", ATTRACTIVE),
        name=f"table:{Path(path).name}",
        meta={k: v for k, v in header.items() if k not in _TABLE_KEYS},
    )


_TABLE_KEYS = {"R0", "P0", "shape", "kinematics", "sign", "sup_norm", "mass"}


def _cell_index(grid: Grid, r, w, L, clip=False):
    dr, dw, dL = grid.steps
    nr, nw, nL = grid.shape
    i = np.floor(np.asarray(r) / dr).astype(int)
    j = np.floor((np.asarray(w) + grid.P) / dw).astype(int)
    k = np.floor(np.asarray(L) / dL).astype(int)
    if clip:
        i = np.clip(i, 0, nr - 1)
        j = np.clip(j, 0, nw - 1)
        k = np.clip(k, 0, nL - 1)
    return i, j, k
