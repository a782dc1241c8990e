"""Command line front end: config parsing, run orchestration, report emission.

Subcommands
-----------
run          one simulation; emits ledger.csv and per-snapshot field CSVs
sweep-eps    regularization-rate study; emits rate_eps.csv
sweep-l-zero kinetic-rate study toward L = 0; emits rate_l_zero.csv
sweep-l-inf  kinetic-rate study toward L = inf; emits rate_l_inf.csv
diagnostics  kernel constants, assumption margins, spectrum; no time stepping

The config is one TOML file with sections [grid], [kernels], [potential],
[time], [initial], [sweep], [diagnostics].  Every key has a default (the
schema below is the documentation); unknown sections or keys are hard errors,
as are keys that do not apply to the selected potential family or initial
kind.  Every output directory gets a manifest.json echoing the fully resolved
configuration, so any CSV can be traced back to the exact inputs.

Exit codes: 0 success, 2 config error, 3 assumption violation, 4 solver
failure; failures print a single "category: message" line to stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - python < 3.11
    import tomli as tomllib

from . import __version__
from .errors import AssumptionViolation, ConfigError, SolverFailure
from .harness import epsilon_sweep, kinetic_sweep_infinity, kinetic_sweep_zero
from .kernels import KernelSpec, build_kernel_ops, hs_diagnostics
from .potentials import check_assumptions, linear_toy, logarithmic
from .geometry import StripGrid
from .stepper import RunResult, SimConfig, System, make_initial, run

__all__ = ["main"]

_EXIT_OK = 0
_EXIT_CONFIG = 2
_EXIT_ASSUMPTION = 3
_EXIT_SOLVER = 4

# schema: section -> key -> default; a None default means "optional, kind-specific"
_SCHEMA: dict[str, dict[str, object]] = {
    "grid": {"nx": 32, "ny": 17, "lx": 1.0, "ly": 1.0},
    "kernels": {
        "bulk_family": "gaussian",
        "bulk_width": 0.15,
        "bulk_amplitude": 2.0,
        "surf_family": "gaussian",
        "surf_width": 0.15,
        "surf_amplitude": 1.5,
        "couple_rings": True,
    },
    "potential": {
        "family": "logarithmic",
        "theta": 0.5,
        "theta0": 0.75,
        "slope": 1.0,
        "pi_slope": 0.5,
        "surf_same": True,
        "surf_theta": 0.5,
        "surf_theta0": 0.75,
    },
    "time": {
        "dt": 1e-3,
        "t_end": 0.2,
        "eps": 0.01,
        "l_value": 1.0,
        "scheme": "convex-split",
        "newton_tol": 1e-10,
        "newton_max": 50,
        "max_halvings": 10,
        "snapshot_stride": 1,
    },
    "initial": {
        "kind": "perturbed",
        "m": 0.0,
        "amplitude": 0.5,
        "seed": 1234,
        "position": 0.5,
        "width": 0.15,
    },
    "sweep": {
        "eps_list": [1e-1, 3e-2, 1e-2, 3e-3, 1e-3],
        "eps_ref": 0.0,  # 0 means auto: min(eps_list)/16
        "l_list_zero": [1.0, 0.3, 0.1, 0.03, 0.01],
        "l_list_infinity": [10.0, 30.0, 100.0, 300.0, 1000.0],
        "l_floor": 10.0,
    },
    "diagnostics": {"hs_tail": 200},
}

_KIND_KEYS = {
    "uniform": {"m"},
    "perturbed": {"m", "amplitude", "seed"},
    "tanh-interface": {"position", "width"},
}


def _load_config(path: str) -> tuple[dict, dict]:
    """Returns (resolved config with defaults, raw key presence per section)."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(path)
    try:
        with open(p, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    resolved: dict[str, dict] = {}
    present: dict[str, set] = {}
    for section in raw:
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
    for section, defaults in _SCHEMA.items():
        given = raw.get(section, {})
        if not isinstance(given, dict):
            raise ConfigError(f"section [{section}] must be a table")
        for key in given:
            if key not in defaults:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")
        merged = {}
        for key, default in defaults.items():
            merged[key] = _coerce(section, key, given.get(key, default), default)
        resolved[section] = merged
        present[section] = set(given)
    return resolved, present


def _coerce(section: str, key: str, value, default):
    """Cast a raw TOML value to the schema type, strictly."""
    if key == "l_value":
        return _parse_l(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"[{section}].{key} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"[{section}].{key} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"[{section}].{key} must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"[{section}].{key} must be a string")
        return value
    if isinstance(default, list):
        if not isinstance(value, list) or not value:
            raise ConfigError(f"[{section}].{key} must be a nonempty array of numbers")
        out = []
        for v in value:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"[{section}].{key} must contain numbers only")
            out.append(float(v))
        return out
    raise ConfigError(f"unsupported schema entry [{section}].{key}")  # pragma: no cover


def _parse_l(value) -> float:
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity"):
            return math.inf
        raise ConfigError("[time].l_value string form must be 'inf'")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("[time].l_value must be a number or 'inf'")
    return float(value)


def _build_potentials(cfg: dict, present: set):
    p = cfg["potential"]
    family = p["family"]
    if family == "logarithmic":
        illegal = {"slope", "pi_slope"} & present
        if illegal:
            raise ConfigError(f"keys {sorted(illegal)} apply only to the linear-toy family")
        bulk = logarithmic(p["theta"], p["theta0"])
        surf = bulk if p["surf_same"] else logarithmic(p["surf_theta"], p["surf_theta0"])
    elif family == "linear-toy":
        illegal = {"theta", "theta0", "surf_theta", "surf_theta0"} & present
        if illegal:
            raise ConfigError(f"keys {sorted(illegal)} apply only to the logarithmic family")
        if not p["surf_same"]:
            raise ConfigError("linear-toy supports surf_same = true only")
        bulk = surf = linear_toy(p["slope"], p["pi_slope"])
    else:
        raise ConfigError(f"unknown potential family {family!r}")
    if p["surf_same"] and {"surf_theta", "surf_theta0"} & present:
        raise ConfigError("surf_theta/surf_theta0 require surf_same = false")
    return bulk, surf


def _build_system(cfg: dict, present: dict) -> System:
    g = cfg["grid"]
    grid = StripGrid(nx=g["nx"], ny=g["ny"], lx=g["lx"], ly=g["ly"])
    k = cfg["kernels"]
    ops = build_kernel_ops(
        grid,
        KernelSpec(k["bulk_family"], k["bulk_width"], k["bulk_amplitude"]),
        KernelSpec(k["surf_family"], k["surf_width"], k["surf_amplitude"]),
        couple_rings=k["couple_rings"],
    )
    pot_bulk, pot_surf = _build_potentials(cfg, present["potential"])
    return System(grid=grid, ops=ops, pot_bulk=pot_bulk, pot_surf=pot_surf)


def _build_sim_config(cfg: dict) -> SimConfig:
    t = cfg["time"]
    return SimConfig(
        dt=t["dt"],
        t_end=t["t_end"],
        eps=t["eps"],
        l_value=t["l_value"],
        scheme=t["scheme"],
        newton_tol=t["newton_tol"],
        newton_max=t["newton_max"],
        max_halvings=t["max_halvings"],
        snapshot_stride=t["snapshot_stride"],
    )


def _build_initial(system: System, cfg: dict, present: dict, seed_override: int | None):
    ini = dict(cfg["initial"])
    kind = ini.pop("kind")
    if kind not in _KIND_KEYS:
        raise ConfigError(f"unknown initial kind {kind!r}")
    stray = (present["initial"] - {"kind"}) - _KIND_KEYS[kind]
    if stray:
        raise ConfigError(f"keys {sorted(stray)} do not apply to initial kind '{kind}'")
    params = {key: ini[key] for key in _KIND_KEYS[kind]}
    if seed_override is not None and kind == "perturbed":
        params["seed"] = seed_override
        cfg["initial"]["seed"] = seed_override
    return make_initial(system.grid, kind, **params)


# -- output writers -------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    return obj


def _write_manifest(out: Path, args, cfg: dict, timings: dict) -> None:
    manifest = {
        "tool": "nlch",
        "version": __version__,
        "command": args.command,
        "config_path": str(Path(args.config).resolve()),
        "out_dir": str(out.resolve()),
        "jobs": args.jobs,
        "seed": cfg["initial"]["seed"],
        "resolved_config": _jsonable(cfg),
        "timings_s": timings,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_field_csv(path: Path, header: str, cols, t: float) -> None:
    lines = [header]
    for row in zip(*cols):
        lines.append(",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in row))
    lines.append(f"# t = {t:.17g}")
    path.write_text("\n".join(lines) + "\n")


def _write_snapshots(out: Path, system: System, result: RunResult) -> None:
    snapdir = out / "snapshots"
    snapdir.mkdir(parents=True, exist_ok=True)
    g = system.grid
    xs = np.repeat(g.x, g.ny)
    ys = np.tile(g.y, g.nx)
    xs_s = np.tile(g.x, 2)
    rings = np.repeat([0, 1], g.nx)
    for idx, snap in enumerate(result.trajectory):
        for tag, pair in (("phi", snap.phi), ("mu", snap.mu)):
            _write_field_csv(
                snapdir / f"{tag}_bulk_{idx:06d}.csv",
                "x,y,value",
                (xs, ys, pair.bulk.values.ravel()),
                snap.t,
            )
            _write_field_csv(
                snapdir / f"{tag}_surf_{idx:06d}.csv",
                "x,ring,value",
                (xs_s, [int(r) for r in rings], pair.surf.values.ravel()),
                snap.t,
            )


# -- subcommands ----------------------------------------------------------------


def _cmd_run(args, cfg: dict, present: dict, out: Path) -> None:
    system = _build_system(cfg, present)
    sim = _build_sim_config(cfg)
    initial = _build_initial(system, cfg, present, args.seed)
    t0 = time.perf_counter()
    result = run(sim, system, initial)
    timings = {"integrate": time.perf_counter() - t0}
    result.ledger.write_csv(out / "ledger.csv")
    _write_snapshots(out, system, result)
    _write_manifest(out, args, cfg, timings)


def _cmd_sweep(args, cfg: dict, present: dict, out: Path) -> None:
    system = _build_system(cfg, present)
    sim = _build_sim_config(cfg)
    initial = _build_initial(system, cfg, present, args.seed)
    sw = cfg["sweep"]
    meta = {"seed": cfg["initial"]["seed"], "initial_kind": cfg["initial"]["kind"]}
    t0 = time.perf_counter()
    if args.command == "sweep-eps":
        eps_ref = sw["eps_ref"] if sw["eps_ref"] > 0.0 else min(sw["eps_list"]) / 16.0
        study = epsilon_sweep(
            system, sim, initial, sw["eps_list"], eps_ref, jobs=args.jobs, meta=meta
        )
        name = "rate_eps.csv"
    elif args.command == "sweep-l-zero":
        study = kinetic_sweep_zero(
            system, sim, initial, sw["l_list_zero"], jobs=args.jobs, meta=meta
        )
        name = "rate_l_zero.csv"
    else:
        study = kinetic_sweep_infinity(
            system,
            sim,
            initial,
            sw["l_list_infinity"],
            l_floor=sw["l_floor"],
            jobs=args.jobs,
            meta=meta,
        )
        name = "rate_l_inf.csv"
    timings = {"sweep": time.perf_counter() - t0}
    study.write_csv(out / name)
    _write_manifest(out, args, cfg, timings)


def _cmd_diagnostics(args, cfg: dict, present: dict, out: Path) -> None:
    t0 = time.perf_counter()
    system = _build_system(cfg, present)
    report = check_assumptions(system.pot_bulk, system.pot_surf, system.ops)
    hs = hs_diagnostics(system.ops, cfg["diagnostics"]["hs_tail"])
    lines = [
        f"eps_star = {system.eps_star:.17g}",
        f"a_bulk_min = {system.ops.a_bulk_min:.17g}",
        f"a_bulk_max = {system.ops.a_bulk_max:.17g}",
        f"a_surf_min = {system.ops.a_surf_min:.17g}",
        f"a_surf_max = {system.ops.a_surf_max:.17g}",
        f"grad_bulk_sup = {system.ops.grad_bulk_sup:.17g}",
        f"grad_surf_sup = {system.ops.grad_surf_sup:.17g}",
        f"j_l1_mass = {system.ops.spec_j.full_mass(2):.17g}",
        f"k_l1_mass = {system.ops.spec_k.full_mass(1):.17g}",
        f"hs_frobenius = {hs.frobenius:.17g}",
        f"hs_tail_norm = {hs.tail_norm:.17g} (index {hs.n_tail})",
        "",
        report.summary(),
    ]
    (out / "diagnostics.txt").write_text("\n".join(lines) + "\n")
    with open(out / "hs_spectrum.csv", "w") as fh:
        fh.write("index,value\n")
        for i, sv in enumerate(hs.singular_values):
            fh.write(f"{i},{sv:.17g}\n")
    _write_manifest(out, args, cfg, {"diagnostics": time.perf_counter() - t0})


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="nlch",
        description="Bulk-surface nonlocal phase-field solver and verification harness.",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("run", "integrate one configuration; emit ledger and snapshots"),
        ("sweep-eps", "regularization convergence study"),
        ("sweep-l-zero", "kinetic-rate study toward L = 0"),
        ("sweep-l-inf", "kinetic-rate study toward L = inf"),
        ("diagnostics", "kernel constants, assumption margins, spectrum"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="TOML configuration file")
        p.add_argument("--out", default=None, help="output directory (default: <command>-out)")
        p.add_argument("--jobs", type=int, default=1, help="concurrent sweep members")
        p.add_argument("--seed", type=int, default=None, help="override [initial].seed")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.jobs < 1:
        print("config-invalid: --jobs must be >= 1", file=sys.stderr)
        return _EXIT_CONFIG
    try:
        cfg, present = _load_config(args.config)
        out = Path(args.out) if args.out else Path(f"{args.command}-out")
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "run":
            _cmd_run(args, cfg, present, out)
        elif args.command in ("sweep-eps", "sweep-l-zero", "sweep-l-inf"):
            _cmd_sweep(args, cfg, present, out)
        else:
            _cmd_diagnostics(args, cfg, present, out)
    except FileNotFoundError as exc:
        print(f"config-not-found: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except (ConfigError, ValueError) as exc:
        print(f"config-invalid: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except AssumptionViolation as exc:
        print(f"assumption-violation: {exc}", file=sys.stderr)
        return _EXIT_ASSUMPTION
    except SolverFailure as exc:
        print(f"solver-failure: {exc}", file=sys.stderr)
        return _EXIT_SOLVER
    return _EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
