"""Command line driver: sphvp {simulate, steady-state, perturb, verify, diagnose}.

Run configs are INI files with a single ``[run]`` section; unknown keys are
rejected. Command line flags override config values. Exit codes: 0 success,
1 failed verification property, 2 invalid config, 3 Picard non-convergence,
4 blow-up guard.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import re
import sys
import time
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .diagnostics import (casimir_exact, casimir_reconstructed, conservation_report, kinetic_energy, phi_from_name,
                          potential_energy, reconstruct_histogram)
from .field import cf_constant, cumulative_mass, uniform_radius_grid
from .phase_space import (ATTRACTIVE, KINEMATICS, NONREL, SIGNS, Ensemble, Grid, datum_norms, indicator_ball,
                          read_table, vacuum, write_table)
from .solver import (BlowUpGuard, PicardNonConvergence, SlabPreconditionError, SolverConfig, continue_solution,
                     delta0, transport)
from .steady_states import MODES, PolytropeSpec, ShootingError, build_polytrope, perturb, write_steady_state

log = logging.getLogger("sphvp")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_PICARD, EXIT_GUARD = 0, 1, 2, 3, 4


class ConfigError(ValueError):
    pass


# --- run config ----------------------------------------------------------------

@dataclass
class RunConfig:
    """Resolved run configuration; every field is a config key of the ``[run]`` section."""

    T: str = ""
    datum: str = "indicator-ball"
    R: float = 1.0
    P: float = 1.0
    value: float = 1.0
    k: float = 1.0
    central_value: Optional[float] = None
    E0: Optional[float] = None
    table: str = ""
    perturb: str = ""
    kinematics: str = NONREL
    sign: str = ATTRACTIVE
    resolution: tuple = SolverConfig.resolution
    radius_nodes: int = SolverConfig.radius_nodes
    steps_per_slab: int = SolverConfig.steps_per_slab
    method: str = SolverConfig.method
    deposit: str = SolverConfig.deposit
    slab_safety: float = SolverConfig.slab_safety
    tol: Optional[float] = None
    max_iter: int = SolverConfig.max_iter
    warm_start: bool = False
    guard_p_factor: float = SolverConfig.guard_p_factor
    guard_delta_factor: float = SolverConfig.guard_delta_factor
    max_slab: float = SolverConfig.max_slab
    stride: int = 1
    phis: tuple = ("s", "s2")
    reconstruction: str = "characteristics"
    recon_resolution: Optional[tuple] = None
    recon_stride: int = 1
    field_tables: bool = False
    snapshots: bool = False
    trajectories: int = 0
    orbit_steps: int = 256
    output: str = "sphvp-out"
    seed: int = 0
    workers: int = 1

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            resolution=self.resolution, radius_nodes=self.radius_nodes, steps_per_slab=self.steps_per_slab,
            method=self.method, deposit=self.deposit, slab_safety=self.slab_safety, tol=self.tol,
            max_iter=self.max_iter, warm_start=self.warm_start, guard_p_factor=self.guard_p_factor,
            guard_delta_factor=self.guard_delta_factor, max_slab=self.max_slab,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
            elif isinstance(v, float) and math.isinf(v):
                d[k] = "inf"
        return d


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_resolution(s) -> tuple:
    if isinstance(s, (tuple, list)):
        parts = [int(x) for x in s]
    else:
        parts = [int(x) for x in str(s).replace(",", " ").split()]
    if len(parts) == 1:
        parts = parts * 3
    if len(parts) != 3 or min(parts) < 1:
        raise ValueError("resolution needs one or three integers >= 1")
    return tuple(parts)


def _parse_optional_float(s):
    if s is None or str(s).strip().lower() in ("", "none", "auto"):
        return None
    return float(s)


_PARSERS = {
    "T": str, "datum": str, "table": str, "perturb": str, "kinematics": str, "sign": str, "method": str,
    "deposit": str, "reconstruction": str, "output": str,
    "R": float, "P": float, "value": float, "k": float, "slab_safety": float, "guard_p_factor": float,
    "guard_delta_factor": float, "max_slab": float,
    "central_value": _parse_optional_float, "E0": _parse_optional_float, "tol": _parse_optional_float,
    "radius_nodes": int, "steps_per_slab": int, "max_iter": int, "stride": int, "recon_stride": int,
    "trajectories": int, "orbit_steps": int, "seed": int, "workers": int,
    "resolution": _parse_resolution,
    "recon_resolution": lambda s: None if str(s).strip().lower() in ("", "none") else _parse_resolution(s),
    "warm_start": _parse_bool, "field_tables": _parse_bool, "snapshots": _parse_bool,
    "phis": lambda s: tuple(p.strip() for p in str(s).replace(",", " ").split() if p.strip()),
}
assert set(_PARSERS) == {f.name for f in fields(RunConfig)}


def _apply(cfg: RunConfig, key: str, raw) -> RunConfig:
    if key not in _PARSERS:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        value = _PARSERS[key](raw) if isinstance(raw, str) else raw
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value for {key!r}: {raw!r} ({exc})") from None
    return replace(cfg, **{key: value})


def load_config(path=None, overrides: Optional[dict] = None, require_T: bool = True) -> RunConfig:
    """Read ``path`` (INI, section ``[run]``), apply ``overrides`` and validate."""
    cfg = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            read = parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not read:
            raise ConfigError(f"cannot read config file {path}")
        extra = [s for s in parser.sections() if s != "run"]
        if extra:
            raise ConfigError(f"unknown config section(s) {extra}; only [run] is allowed")
        if parser.has_section("run"):
            for key, raw in parser.items("run"):
                cfg = _apply(cfg, key, raw)
    for key, raw in (overrides or {}).items():
        if raw is not None:
            cfg = _apply(cfg, key, raw)
    validate(cfg, require_T)
    return cfg


def validate(cfg: RunConfig, require_T: bool = True) -> None:
    if require_T and not cfg.T:
        raise ConfigError("missing required key 'T' (T_target)")
    if cfg.kinematics not in KINEMATICS:
        raise ConfigError(f"invalid value for 'kinematics': {cfg.kinematics!r}")
    if cfg.sign not in SIGNS:
        raise ConfigError(f"invalid value for 'sign': {cfg.sign!r}")
    if not 0 < cfg.slab_safety < 1:
        raise ConfigError("'slab_safety' must lie in (0, 1)")
    for key in ("radius_nodes", "steps_per_slab", "max_iter", "stride", "recon_stride", "orbit_steps", "workers"):
        if getattr(cfg, key) < 1:
            raise ConfigError(f"'{key}' must be >= 1")
    if cfg.radius_nodes < 2:
        raise ConfigError("'radius_nodes' must be >= 2")
    if cfg.workers != 1:
        raise ConfigError("'workers': only 1 is supported (the kernels run single-threaded)")
    if cfg.method not in ("rk4", "leapfrog"):
        raise ConfigError(f"invalid value for 'method': {cfg.method!r}")
    if cfg.deposit not in ("cic", "step"):
        raise ConfigError(f"invalid value for 'deposit': {cfg.deposit!r}")
    if cfg.reconstruction not in ("characteristics", "histogram"):
        raise ConfigError(f"invalid value for 'reconstruction': {cfg.reconstruction!r}")
    if cfg.tol is not None and not cfg.tol > 0:
        raise ConfigError("'tol' must be positive")
    for p in cfg.phis:
        try:
            phi_from_name(p)
        except ValueError as exc:
            raise ConfigError(f"invalid value for 'phis': {exc}") from None
    if cfg.perturb:
        _parse_perturb(cfg.perturb)
    _parse_datum_name(cfg.datum)


_DATUM_RE = re.compile(r"^\s*([a-z\-]+)\s*(?:\((.*)\))?\s*$")


def _parse_datum_name(text: str):
    m = _DATUM_RE.match(text)
    if not m or m.group(1) not in ("indicator-ball", "vacuum", "polytrope", "table"):
        raise ConfigError(f"invalid value for 'datum': {text!r} (indicator-ball, vacuum, polytrope(k,E0), table)")
    args, kwargs = [], {}
    if m.group(2):
        for part in m.group(2).split(","):
            part = part.strip()
            if not part:
                continue
            if "=" in part:
                a, b = part.split("=", 1)
                kwargs[a.strip()] = b.strip()
            else:
                args.append(part)
    return m.group(1), args, kwargs


def _parse_perturb(text: str):
    mode, _, eps = text.partition(":")
    mode = mode.strip()
    if mode not in MODES:
        raise ConfigError(f"invalid value for 'perturb': mode must be one of {MODES}")
    try:
        eps = float(eps)
    except ValueError:
        raise ConfigError(f"invalid value for 'perturb': {text!r} (expected mode:eps)") from None
    if abs(eps) > 0.5:
        raise ConfigError("invalid value for 'perturb': |eps| must be <= 0.5")
    return mode, eps


def build_datum(cfg: RunConfig):
    """The InitialDatum of a config, and the steady state when there is one."""
    name, args, kwargs = _parse_datum_name(cfg.datum)
    state = None
    try:
        if name == "indicator-ball":
            datum = indicator_ball(float(kwargs.get("R", cfg.R)), float(kwargs.get("P", cfg.P)),
                                   float(kwargs.get("value", cfg.value)), kinematics=cfg.kinematics, sign=cfg.sign)
        elif name == "vacuum":
            datum = vacuum(cfg.R, cfg.P, kinematics=cfg.kinematics, sign=cfg.sign)
        elif name == "table":
            path = kwargs.get("path", args[0] if args else cfg.table)
            if not path:
                raise ConfigError("datum 'table' needs the key 'table' (path of the table file)")
            datum = read_table(path).with_physics(cfg.kinematics, cfg.sign)
        else:
            k = float(args[0]) if args else float(kwargs.get("k", cfg.k))
            E0 = _parse_optional_float(args[1]) if len(args) > 1 else _parse_optional_float(kwargs.get("E0", cfg.E0))
            yc = _parse_optional_float(kwargs.get("central_value", cfg.central_value))
            if E0 is None and yc is None:
                yc = 1.0
            state = build_polytrope(PolytropeSpec(k, yc, cfg.kinematics, E0))
            datum = state.datum.with_physics(sign=cfg.sign)
    except (ValueError, IndexError, OSError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid datum {cfg.datum!r}: {exc}") from None
    if cfg.perturb:
        mode, eps = _parse_perturb(cfg.perturb)
        datum = perturb(datum, mode, eps)
    return datum, state


def resolve_T(text: str, d0: float, state=None) -> float:
    """Parse ``T``: plain time, ``<x>d0`` (units of delta0) or ``<x>tdyn``."""
    s = text.strip()
    try:
        if s.endswith("d0"):
            T = float(s[:-2]) * d0
        elif s.endswith("tdyn"):
            if state is None:
                raise ConfigError("'T' in units of tdyn needs a steady-state datum")
            T = float(s[:-4]) * state.dynamical_time
        else:
            T = float(s)
    except ValueError:
        raise ConfigError(f"invalid value for 'T': {text!r}") from None
    if not T > 0 or not math.isfinite(T):
        raise ConfigError("'T' must be positive and finite")
    return T


# --- outputs -------------------------------------------------------------------

def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in rows:
            wr.writerow([x if isinstance(x, (int, str)) else repr(float(x)) for x in row])


def write_snapshot(path, ens: Ensemble) -> None:
    _write_csv(path, ["r", "w", "L", "weight", "fvalue", "volume"],
               zip(ens.r, ens.w, ens.L, ens.weight, ens.fvalue, ens.volume))


def read_snapshot(path, t: float) -> Ensemble:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        return Ensemble.empty(t)
    return Ensemble(*(data[:, i] for i in range(6)), t=t)


def _dump_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _metadata(cfg, datum, norms, cf, d0, T, state) -> dict:
    meta = {
        "version": __version__,
        "config": cfg.to_dict(),
        "datum": datum.name,
        "kinematics": datum.kinematics,
        "sign": datum.sign,
        "R0": datum.R0,
        "P0": datum.P0,
        "mass": norms["mass"],
        "mass_source": norms["mass_source"],
        "sup_norm": norms["sup_norm"],
        "sup_norm_source": norms["sup_norm_source"],
        "C_f": cf,
        "delta0": d0 if math.isfinite(d0) else "inf",
        "T_target": T,
    }
    if state is not None:
        meta["steady_state"] = {"k": state.spec.k, "central_value": state.central_value, "E0": state.E0,
                                "R_star": state.R_star, "M_star": state.M_star,
                                "dynamical_time": state.dynamical_time}
    return meta


def _write_solution_outputs(out: Path, cfg: RunConfig, sol, meta: dict) -> None:
    rows = []
    for i, s in enumerate(sol.slabs):
        for n, d in enumerate(s.history, start=1):
            rows.append([i, n, d])
    _write_csv(out / "convergence.csv", ["slab", "iter", "distance"], rows)
    _write_csv(out / "slabs.csv", ["slab", "t0", "t1", "iterations", "P_ref", "P_max", "guard_hits"],
               [[i, s.t0, s.t1, s.iterations, s.p_ref, float(np.max(s.p_of_t)), s.guard_hits]
                for i, s in enumerate(sol.slabs)])
    if sol.slabs:
        t, p = sol.p_trace()
        _write_csv(out / "p_trace.csv", ["t", "P"], zip(t, p))
    if cfg.field_tables:
        (out / "fields").mkdir(exist_ok=True)
        for i, s in enumerate(sol.slabs):
            s.field.to_csv(out / "fields" / f"slab_{i:05d}.csv")
    if cfg.snapshots:
        (out / "snapshots").mkdir(exist_ok=True)
        index = []
        for i, ens in enumerate(sol.states()):
            name = f"snap_{i:05d}.csv"
            write_snapshot(out / "snapshots" / name, ens)
            index.append([i, ens.t, name])
        _write_csv(out / "snapshots" / "index.csv", ["index", "t", "file"], index)
    if cfg.trajectories > 0 and sol.slabs:
        _write_trajectories(out / "trajectories.csv", sol, cfg.trajectories)
    meta = dict(meta)
    meta.update({"slabs": len(sol.slabs), "t_end": sol.t_end, "P_star": sol.P_star, "stopped": sol.stopped,
                 "iterations": [s.iterations for s in sol.slabs]})
    _dump_json(out / "metadata.json", meta)


def _write_trajectories(path, sol, count: int) -> None:
    """(t, r, w, L) of the first ``count`` samples at every slab node."""
    rows = []
    for s in sol.slabs:
        for t in s.time_grid[:-1]:
            e = transport(s, float(t))
            for j in range(min(count, len(e))):
                rows.append([j, float(t), e.r[j], e.w[j], e.L[j]])
    last = sol.slabs[-1].ensemble_at_t1
    for j in range(min(count, len(last))):
        rows.append([j, last.t, last.r[j], last.w[j], last.L[j]])
    _write_csv(path, ["sample", "t", "r", "w", "L"], rows)


# --- subcommands ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    datum, state = build_datum(cfg)
    scfg = cfg.solver_config()
    norms = datum_norms(datum, scfg.resolution)
    cf = cf_constant(norms["mass"], norms["sup_norm"])
    d0 = delta0(datum.P0, cf)
    T = resolve_T(cfg.T, d0, state)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    meta = _metadata(cfg, datum, norms, cf, d0, T, state)
    t_start = time.perf_counter()
    try:
        sol = continue_solution(datum, T, scfg)
    except BlowUpGuard as exc:
        _write_solution_outputs(out, cfg, exc.solution, meta)
        print(f"blow-up guard: {exc}", file=sys.stderr)
        t, p = exc.solution.p_trace() if exc.solution.slabs else (np.zeros(0), np.zeros(0))
        for a, b in list(zip(t, p))[-10:]:
            print(f"  t={a:.6g}  P={b:.6g}", file=sys.stderr)
        return EXIT_GUARD
    except PicardNonConvergence as exc:
        meta["error"] = str(exc)
        _dump_json(out / "metadata.json", meta)
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_PICARD
    log.info("solved in %.1f s", time.perf_counter() - t_start)
    rep = conservation_report(sol, cfg.stride, cfg.phis, cfg.reconstruction, cfg.recon_resolution, cfg.recon_stride)
    rep.to_csv(out / "conservation.csv")
    meta["drift"] = rep.summary()
    meta["flags"] = rep.flags
    _write_solution_outputs(out, cfg, sol, meta)
    print(f"{len(sol.slabs)} slabs to t={sol.t_end:.6g}, P*={sol.P_star:.6g}, "
          f"energy drift {rep.energy_drift:.3e}; outputs in {out}")
    return EXIT_OK


def cmd_steady_state(args) -> int:
    spec = PolytropeSpec(args.k, None if args.E0 is not None else args.central_value, args.kinematics, args.E0)
    state = build_polytrope(spec)
    res = _parse_resolution(args.resolution)
    write_steady_state(args.out, state, res)
    print(f"k={spec.k:g} central value={state.central_value:.10g} E0={state.E0:.10g} "
          f"R={state.R_star:.10g} M={state.M_star:.10g} t_dyn={state.dynamical_time:.10g} -> {args.out}")
    return EXIT_OK


def cmd_perturb(args) -> int:
    if args.table:
        datum = read_table(args.table)
    else:
        state = build_polytrope(PolytropeSpec(args.k, args.central_value, args.kinematics))
        datum = state.datum
    if abs(args.eps) > 0.5:
        raise ConfigError("--eps must satisfy |eps| <= 0.5")
    new = perturb(datum, args.mode, args.eps)
    write_table(args.out, new, _parse_resolution(args.resolution),
                extra={"perturbation": args.mode, "eps": repr(args.eps)})
    print(f"{new.name} -> {args.out}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    """Recompute a conservation report from saved snapshots (histogram reconstruction)."""
    run = Path(args.run_dir)
    try:
        meta = json.loads((run / "metadata.json").read_text())
        with open(run / "snapshots" / "index.csv", newline="") as fh:
            index = list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigError(f"{run}: missing run outputs ({exc}); simulate with snapshots = true") from None
    kin, sign = meta["kinematics"], meta["sign"]
    phis = args.phis.replace(",", " ").split() if args.phis else meta["config"]["phis"]
    funcs = [phi_from_name(p) for p in phis]
    nodes = int(meta["config"]["radius_nodes"])
    res = _parse_resolution(args.resolution) if args.resolution else tuple(meta["config"]["resolution"])
    snaps = [read_snapshot(run / "snapshots" / row["file"], float(row["t"])) for row in index]
    r_max = max([float(np.max(e.r)) for e in snaps if len(e)] + [meta["R0"]]) * 1.1
    p_max = max([float(np.max(e.momentum())) for e in snaps if len(e)] + [meta["P0"]]) * 1.0001
    grid = uniform_radius_grid(r_max, nodes)
    box = Grid(r_max / 1.1 * 1.0001, p_max, res)
    header = ["t", "mass", "E_kin", "E_pot", "E_total"] + [f"C_exact[{p}]" for p in phis] + \
        [f"C_hist[{p}]" for p in phis]
    rows = []
    for e in snaps:
        m = cumulative_mass(e.r, e.weight, grid)
        epot = potential_energy(m, grid) * (1.0 if sign == "attractive" else -1.0)
        ekin = kinetic_energy(e, kin)
        vals, vol = reconstruct_histogram(e, box)
        rows.append([e.t, e.mass, ekin, epot, ekin + epot] + [casimir_exact(e, f) for f in funcs]
                    + [casimir_reconstructed(vals, vol, f) for f in funcs])
    out = Path(args.out) if args.out else run / "diagnose.csv"
    _write_csv(out, header, rows)
    print(f"{len(rows)} rows -> {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_battery

    cfg = load_config(args.config, _overrides(args), require_T=False)
    results = run_battery(cfg)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  {r.detail}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print("failed: " + ", ".join(failed), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


# --- argument parsing ----------------------------------------------------------

_OVERRIDE_FLAGS = ("T", "datum", "kinematics", "sign", "output", "resolution", "steps_per_slab", "radius_nodes",
                   "orbit_steps", "seed")


def _overrides(args) -> dict:
    return {k: getattr(args, k, None) for k in _OVERRIDE_FLAGS}


def _add_run_flags(p, with_T=True):
    p.add_argument("--config", help="INI file with a [run] section")
    if with_T:
        p.add_argument("--T", help="final time: number, <x>d0 or <x>tdyn")
    p.add_argument("--datum", help="indicator-ball, vacuum, polytrope(k,E0) or table(path)")
    p.add_argument("--kinematics", choices=KINEMATICS)
    p.add_argument("--sign", choices=tuple(SIGNS))
    p.add_argument("--resolution", help="cells per axis: n or nr,nw,nL")
    p.add_argument("--steps-per-slab", dest="steps_per_slab")
    p.add_argument("--radius-nodes", dest="radius_nodes")
    p.add_argument("--out", dest="output", help="output directory")
    p.add_argument("--seed")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sphvp", description="Spherically symmetric Vlasov-Poisson by Picard slabs.")
    ap.add_argument("--version", action="version", version=f"sphvp {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="chain Picard slabs to T and write reports")
    _add_run_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("steady-state", help="build a polytrope and write it as a table")
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--central-value", dest="central_value", type=float, default=1.0)
    p.add_argument("--E0", type=float)
    p.add_argument("--kinematics", choices=KINEMATICS, default=NONREL)
    p.add_argument("--resolution", default="32")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_steady_state)

    p = sub.add_parser("perturb", help="rearrange a steady state by a measure-preserving map")
    p.add_argument("--table", help="datum table to perturb (default: build a polytrope)")
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--central-value", dest="central_value", type=float, default=1.0)
    p.add_argument("--kinematics", choices=KINEMATICS, default=NONREL)
    p.add_argument("--mode", choices=MODES, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--resolution", default="32")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("verify", help="run the property battery and print a pass/fail table")
    _add_run_flags(p, with_T=False)
    p.add_argument("--orbit-steps", dest="orbit_steps", help="RK4 steps per circular-orbit period")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("diagnose", help="recompute diagnostics from saved snapshots")
    p.add_argument("run_dir")
    p.add_argument("--phis")
    p.add_argument("--resolution")
    p.add_argument("--out")
    p.set_defaults(func=cmd_diagnose)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SlabPreconditionError, ShootingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
