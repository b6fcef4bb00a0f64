"""Command-line entry point: ``shellscat <command> [--config file] [overrides]``.

Every command takes an optional JSON config (validated against ``CONFIG_SCHEMA``)
and flag overrides, writes its artifacts atomically into the output directory
and finishes with ``manifest.json`` listing each artifact with its sha256, the
normalized config and every value that was filled in by default.

Exit codes: 0 success, 2 configuration or precondition error, 3 regime error,
4 numerical divergence, 5 file IO error.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import math
import os
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .errors import DivergenceError, FieldIOError, ParameterError, RegimeError, ShellScatError
from .lp_decomp import DEFAULT_BASIS, LPBasis

log = logging.getLogger(__name__)

OUTPUT_ENV = "SHELLSCAT_OUTPUT_DIR"
COMMANDS = ("grid-info", "norm", "direct-solve", "data-gen", "invert", "bench")
SPACES = ("ah", "ah_dual", "y", "y_star", "z", "z_star", "x_star", "x_upper", "bourgain", "ytm")
_LAMBDA_SPACES = {"y", "y_star", "z", "z_star", "x_star", "x_upper"}

_POS = {"type": "number", "exclusiveMinimum": 0}
_VEC = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 3}

_POTENTIAL = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "V0": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["bump", "field"]},
                "amplitude": {"type": "number"},
                "radius": _POS,
                "center": _VEC,
                "path": {"type": "string"},
                "support_radius": _POS,
            },
            "additionalProperties": False,
        },
        "shell": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["sphere", "file"]},
                "radius": _POS,
                "center": _VEC,
                "n": {"type": "integer", "minimum": 1},
                "alpha": {"type": "number"},
                "path": {"type": "string"},
            },
            "additionalProperties": False,
        },
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["command"],
    "additionalProperties": False,
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "grid": {
            "type": "object",
            "required": ["d", "L", "N"],
            "additionalProperties": False,
            "properties": {"d": {"type": "integer"}, "L": {"type": "number"}, "N": {"type": "integer"}},
        },
        "output_dir": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "basis": {"enum": ["smooth", "c2poly"]},
        "threads": {"type": "integer", "minimum": 1},
        "grid_info": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"lambda": _POS},
        },
        "norm": {
            "type": "object",
            "required": ["space", "field"],
            "additionalProperties": False,
            "properties": {
                "space": {"enum": list(SPACES)},
                "field": {"type": "string"},
                "lambda": _POS,
                "tau": _POS,
                "M": _POS,
                "s": {"type": "number"},
                "p": _POS,
            },
        },
        "scattering": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lambda": _POS,
                "lambdas": {"type": "array", "items": _POS, "minItems": 1},
                "R0": _POS,
                "boundary_order": {"type": "integer", "minimum": 1},
                "potential": {"oneOf": [{"type": "string"}, _POTENTIAL]},
                "backend": {"enum": ["pv_sphere", "absorption", "green3d"]},
                "sign": {"enum": [1, -1]},
                "width": _POS,
                "tol": _POS,
                "max_iter": {"type": "integer", "minimum": 1},
            },
        },
        "invert": {
            "type": "object",
            "required": ["potentials", "lambda", "taus"],
            "additionalProperties": False,
            "properties": {
                "potentials": {
                    "type": "array",
                    "minItems": 2,
                    "maxItems": 2,
                    "items": {"oneOf": [{"type": "string"}, _POTENTIAL]},
                },
                "lambda": _POS,
                "taus": {"type": "array", "items": _POS, "minItems": 1},
                "kappas": {"type": "array", "items": _VEC, "minItems": 1},
                "kappa_grid": {
                    "type": "object",
                    "required": ["max", "n"],
                    "additionalProperties": False,
                    "properties": {"max": _POS, "n": {"type": "integer", "minimum": 1}},
                },
                "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                "tau_window": {"type": "integer", "minimum": 1},
                "width": _POS,
                "tol": _POS,
            },
        },
        "bench": {
            "type": "object",
            "required": ["inequality", "params"],
            "additionalProperties": False,
            "properties": {
                "inequality": {"type": "string"},
                "params": {"type": "array", "minItems": 1},
                "family": {"enum": ["gaussian", "bandlimited", "annulus", "shell"]},
                "samples": {"type": "integer", "minimum": 1},
                "p": _POS,
                "radius": _POS,
                "backend": {"enum": ["pv_sphere", "absorption", "green3d"]},
                "surface_order": {"type": "integer", "minimum": 1},
                "chi": {"enum": ["calibrated", "gaussian"]},
                "amplitude": {"type": "number"},
                "max_width": _POS,
            },
        },
    },
}

_DEFAULTS = {
    "grid": {"d": 3, "L": 4.0, "N": 64},
    "seed": 0,
    "basis": DEFAULT_BASIS.kind.value,
    "threads": 1,
    "scattering": {
        "R0": 1.0,
        "boundary_order": 2,
        "backend": "absorption",
        "sign": 1,
        "tol": 1e-12,
        "max_iter": 30,
    },
    "invert": {"seeds": [0, 1, 2], "tol": 1e-12, "tau_window": 1},
    "bench": {"samples": 50},
}

_SECTION = {
    "grid-info": "grid_info",
    "norm": "norm",
    "direct-solve": "scattering",
    "data-gen": "scattering",
    "invert": "invert",
    "bench": "bench",
}


class ConfigError(ParameterError):
    """Aggregated configuration problems; ``errors`` lists every one."""

    def __init__(self, errors: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(errors))
        self.errors = list(errors)


@dataclass
class RunConfig:
    command: str
    grid: dict
    output_dir: Path
    seed: int
    basis: str
    threads: int
    params: dict
    defaults_applied: list[str] = field(default_factory=list)
    source: str | None = None

    def snapshot(self) -> dict:
        return {
            "command": self.command,
            "grid": dict(self.grid),
            "output_dir": str(self.output_dir),
            "seed": self.seed,
            "basis": self.basis,
            "threads": self.threads,
            _SECTION[self.command]: copy.deepcopy(self.params),
        }


# ---------------------------------------------------------------- validation


def _fill(doc: dict, defaults: dict, prefix: str, applied: list[str]) -> None:
    for key, value in defaults.items():
        path = f"{prefix}{key}"
        if key not in doc:
            doc[key] = copy.deepcopy(value)
            applied.append(path)
        elif isinstance(value, dict) and isinstance(doc[key], dict):
            _fill(doc[key], value, path + ".", applied)


def _schema_errors(doc: dict) -> list[str]:
    validator = jsonschema.Draft7Validator(CONFIG_SCHEMA)
    out = []
    for err in sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path)):
        where = ".".join(str(p) for p in err.absolute_path) or "<root>"
        out.append(f"{where}: {err.message}")
    return out


def _resolve_path(value: str, base: Path | None) -> Path:
    p = Path(value)
    return p if p.is_absolute() or base is None else base / p


def _check_file(value, where: str, base: Path | None, errors: list[str]) -> None:
    if isinstance(value, str) and not _resolve_path(value, base).exists():
        errors.append(f"{where}: file {value} does not exist")


def _check_potential(pot, where: str, base: Path | None, errors: list[str]) -> None:
    if isinstance(pot, str):
        _check_file(pot, where, base, errors)
        return
    v0 = pot.get("V0")
    if v0 is not None:
        if v0["kind"] == "bump":
            for key in ("amplitude", "radius"):
                if key not in v0:
                    errors.append(f"{where}.V0.{key}: required for a bump potential")
        else:
            if "path" not in v0:
                errors.append(f"{where}.V0.path: required for a field potential")
            else:
                _check_file(v0["path"], f"{where}.V0.path", base, errors)
            if "support_radius" not in v0:
                errors.append(f"{where}.V0.support_radius: required for a field potential")
    shell = pot.get("shell")
    if shell is not None:
        if shell["kind"] == "sphere":
            for key in ("radius", "n", "alpha"):
                if key not in shell:
                    errors.append(f"{where}.shell.{key}: required for a sphere shell")
        elif "path" not in shell:
            errors.append(f"{where}.shell.path: required for a surface file")
        else:
            _check_file(shell["path"], f"{where}.shell.path", base, errors)


def _semantic_errors(doc: dict, base: Path | None) -> list[str]:
    from .spectral_core import make_grid

    errors = []
    command = doc["command"]
    g = doc["grid"]
    try:
        make_grid(g["d"], g["L"], g["N"])
    except ParameterError as exc:
        errors.append(f"grid: {exc}")
    section = doc.get(_SECTION[command], {})
    if command == "norm":
        space = section.get("space")
        _check_file(section.get("field"), "norm.field", base, errors)
        if space in _LAMBDA_SPACES and "lambda" not in section:
            errors.append(f"norm.lambda: required for space {space}")
        if space in ("bourgain", "ytm"):
            for key in ("tau", "s") + (("M",) if space == "ytm" else ()):
                if key not in section:
                    errors.append(f"norm.{key}: required for space {space}")
    elif command in ("direct-solve", "data-gen"):
        if command == "direct-solve" and "lambda" not in section:
            errors.append("scattering.lambda: required for direct-solve")
        if command == "data-gen" and "lambdas" not in section:
            errors.append("scattering.lambdas: required for data-gen")
        R0 = section.get("R0", 1.0)
        if isinstance(g.get("L"), (int, float)) and R0 > g["L"] / 4.0:
            errors.append(f"scattering.R0: margin violation, R0 = {R0} exceeds L/4 = {g['L'] / 4.0}")
        if R0 < 1.0:
            errors.append(f"scattering.R0: must be at least 1, got {R0}")
        if "potential" in section:
            _check_potential(section["potential"], "scattering.potential", base, errors)
    elif command == "invert":
        for i, pot in enumerate(section.get("potentials", [])):
            _check_potential(pot, f"invert.potentials.{i}", base, errors)
        if ("kappas" in section) == ("kappa_grid" in section):
            errors.append("invert: give exactly one of kappas or kappa_grid")
        if g.get("d") != 3:
            errors.append("grid.d: the CGO construction needs d = 3")
    elif command == "bench":
        from .estimate_bench import Inequality

        try:
            Inequality(section.get("inequality"))
        except ValueError:
            errors.append(f"bench.inequality: unknown inequality {section.get('inequality')!r}")
    return errors


def validate_config(source, overrides: dict | None = None) -> RunConfig:
    """Load, merge overrides, fill defaults and validate; all problems are reported together.

    ``source`` is a path to a JSON file, an already-parsed dict, or None.
    """
    base = None
    if source is None:
        doc = {}
    elif isinstance(source, dict):
        doc = copy.deepcopy(source)
    else:
        path = Path(source)
        base = path.parent
        try:
            doc = json.loads(path.read_text())
        except OSError as exc:
            raise FieldIOError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: not valid JSON ({exc})"]) from exc
    if not isinstance(doc, dict):
        raise ConfigError(["<root>: config must be a JSON object"])
    for key, value in (overrides or {}).items():
        target = doc
        parts = key.split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
        target[parts[-1]] = value

    applied: list[str] = []
    command = doc.get("command")
    if command in _SECTION:
        doc.setdefault(_SECTION[command], {})
    defaults = {k: v for k, v in _DEFAULTS.items() if not isinstance(v, dict) or k == "grid"}
    if command in _SECTION and _SECTION[command] in _DEFAULTS:
        defaults[_SECTION[command]] = _DEFAULTS[_SECTION[command]]
    if "output_dir" not in doc:
        doc["output_dir"] = os.environ.get(OUTPUT_ENV, "shellscat_out")
        applied.append("output_dir")
    _fill(doc, defaults, "", applied)

    errors = _schema_errors(doc)
    if not errors:
        errors = _semantic_errors(doc, base)
    if errors:
        raise ConfigError(errors)
    section = doc.get(_SECTION[command], {})
    return RunConfig(
        command=command,
        grid=doc["grid"],
        output_dir=Path(doc["output_dir"]),
        seed=int(doc["seed"]),
        basis=doc["basis"],
        threads=int(doc["threads"]),
        params=section,
        defaults_applied=sorted(applied),
        source=None if base is None else str(source),
    )


# ---------------------------------------------------------------- artifacts


class _Artifacts:
    def __init__(self, out: Path):
        self.out = out
        self.paths: list[Path] = []

    def text(self, name: str, text: str) -> Path:
        from .spectral_core import atomic_write_text

        path = self.out / name
        atomic_write_text(path, text)
        self.paths.append(path)
        return path

    def json(self, name: str, doc) -> Path:
        return self.text(name, json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")

    def manifest(self, config: RunConfig, status: int) -> Path:
        from .spectral_core import atomic_write_text

        entries = []
        for p in sorted(set(self.paths)):
            payload = p.read_bytes()
            entries.append({"path": p.name, "sha256": hashlib.sha256(payload).hexdigest(), "bytes": len(payload)})
        doc = {
            "version": __version__,
            "command": config.command,
            "exit_status": status,
            "config": config.snapshot(),
            "defaults_applied": config.defaults_applied,
            "config_source": config.source,
            "artifacts": entries,
        }
        path = self.out / "manifest.json"
        atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path


def _json_default(obj):
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _num(x) -> str:
    return repr(float(x))


# ---------------------------------------------------------------- builders


def _grid(config: RunConfig):
    from .spectral_core import make_grid

    return make_grid(config.grid["d"], config.grid["L"], config.grid["N"])


def load_potential(spec, grid, base: Path | None = None):
    """Build (V0, shell) from an inline dict or a JSON file path."""
    from .potentials import DeltaShell, bump_potential, grid_potential, read_surface, sphere_quadrature
    from .spectral_core import read_field

    if isinstance(spec, str):
        path = _resolve_path(spec, base)
        try:
            spec = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise FieldIOError(f"cannot read potential {path}: {exc}") from exc
        base = path.parent
        errors = list(jsonschema.Draft7Validator(_POTENTIAL).iter_errors(spec))
        if errors:
            raise ConfigError([f"{path}: {e.message}" for e in errors])
    V0 = shell = None
    v0 = spec.get("V0")
    if v0 is not None:
        if v0["kind"] == "bump":
            V0 = bump_potential(grid, v0["amplitude"], v0["radius"], v0.get("center"))
        else:
            f = read_field(_resolve_path(v0["path"], base))
            if f.grid != grid:
                raise ParameterError("V0 field grid differs from the configured grid")
            V0 = grid_potential(grid, f.values(), v0["support_radius"])
    sh = spec.get("shell")
    if sh is not None:
        if sh["kind"] == "sphere":
            surface = sphere_quadrature(sh["radius"], sh.get("center"), sh["n"], grid.d)
            shell = DeltaShell(surface, sh["alpha"])
        else:
            shell = read_surface(_resolve_path(sh["path"], base))
    return V0, shell


# ---------------------------------------------------------------- commands


def _cmd_grid_info(config: RunConfig, art: _Artifacts) -> dict:
    from .lp_decomp import block_range

    g = _grid(config)
    info = dict(g.to_dict(), dx=g.dx, dk=g.dk, nyquist=g.nyquist, max_frequency=g.max_frequency,
                cell_volume=g.cell_volume, basis=config.basis)
    lam = config.params.get("lambda")
    if lam is not None:
        k_lam, crit, high = block_range(g, lam)
        info.update(**{"lambda": lam, "k_lambda": k_lam, "critical_blocks": list(crit), "high_blocks": high})
    art.json("grid_info.json", info)
    return info


def _cmd_norm(config: RunConfig, art: _Artifacts) -> dict:
    from . import funcspaces as fs
    from .spectral_core import read_field

    p = config.params
    f = read_field(_resolve_path(p["field"], Path(config.source).parent if config.source else None))
    basis = LPBasis(config.basis)
    space, lam = p["space"], p.get("lambda")
    if space == "ah":
        rep = fs.ah_norm(f)
    elif space == "ah_dual":
        rep = fs.ah_dual_norm(f)
    elif space == "y":
        rep = fs.y_norm(f, lam, basis)
    elif space == "y_star":
        rep = fs.y_star_norm(f, lam, basis)
    elif space == "z":
        rep = fs.z_norm(f, lam, p.get("p"), basis)
    elif space == "z_star":
        rep = fs.z_star_norm(f, lam, p.get("p"), basis)
    elif space == "x_star":
        rep = fs.x_star_norm(f, lam, basis)
    elif space == "x_upper":
        rep = fs.x_norm_upper(f, lam, basis)
    elif space == "bourgain":
        rep = fs.bourgain_norm(f, p["tau"], p["s"])
    else:
        rep = fs.ytm_norm(f, p["tau"], p["M"], p["s"])
    doc = rep.to_dict()
    art.json("norm_report.json", doc)
    return doc


def _scattering_problem(config: RunConfig, lam: float):
    from .resolvent import Backend
    from .scattering import ScatteringProblem, boundary_points

    p = config.params
    g = _grid(config)
    V0 = shell = None
    if "potential" in p:
        V0, shell = load_potential(p["potential"], g, Path(config.source).parent if config.source else None)
    pts = boundary_points(p["R0"], p["boundary_order"], g.d)
    return ScatteringProblem(g, lam, pts, pts, p["R0"], V0=V0, shell=shell, sign=p["sign"],
                             backend=Backend(p["backend"]), width=p.get("width"), tol=p["tol"],
                             max_iter=p["max_iter"], seed=config.seed)


def _data_csv(data) -> str:
    lines = ["receiver,source,re,im"]
    for i in range(data.matrix.shape[0]):
        for j in range(data.matrix.shape[1]):
            z = data.matrix[i, j]
            lines.append(f"{i},{j},{_num(z.real)},{_num(z.imag)}")
    return "\n".join(lines) + "\n"


def _solve_one(config: RunConfig, lam: float) -> tuple[str, dict]:
    from .scattering import solve_scattering

    problem = _scattering_problem(config, lam)
    _, data = solve_scattering(problem)
    diag = {
        "lambda": lam,
        "sign": data.sign,
        "receivers": data.receivers,
        "sources": data.sources,
        "metadata": data.metadata,
    }
    return _data_csv(data), diag


def _cmd_direct_solve(config: RunConfig, art: _Artifacts) -> dict:
    csv_text, diag = _solve_one(config, config.params["lambda"])
    art.text("data.csv", csv_text)
    art.json("diagnostics.json", diag)
    return diag


def _cmd_data_gen(config: RunConfig, art: _Artifacts) -> dict:
    summary = []
    for i, lam in enumerate(config.params["lambdas"]):
        csv_text, diag = _solve_one(config, lam)
        art.text(f"data_{i:03d}.csv", csv_text)
        art.json(f"diagnostics_{i:03d}.json", diag)
        summary.append({"index": i, "lambda": lam})
    art.json("data_gen.json", {"runs": summary})
    return {"runs": summary}


def _kappa_list(p: dict) -> np.ndarray:
    if "kappas" in p:
        return np.asarray(p["kappas"], dtype=float)
    axis = np.linspace(-p["kappa_grid"]["max"], p["kappa_grid"]["max"], p["kappa_grid"]["n"]) / math.sqrt(3)
    return np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)


def _cmd_invert(config: RunConfig, art: _Artifacts) -> dict:
    from .cgo_inverse import CGOPotential, reconstruct_fourier

    p = config.params
    g = _grid(config)
    base = Path(config.source).parent if config.source else None
    pots = [CGOPotential(g, *load_potential(spec, g, base), width=p.get("width")) for spec in p["potentials"]]
    rows = reconstruct_fourier(pots[0], pots[1], _kappa_list(p), p["taus"], p["lambda"],
                               seeds=tuple(p["seeds"]), tol=p["tol"], tau_window=p["tau_window"])
    lines = ["kappa_x,kappa_y,kappa_z,tau,direct_re,direct_im,estimate_re,estimate_im,"
             "remainder_re,remainder_im,remainder_std,remainder_avg,status"]
    for r in rows:
        def parts(z):
            return ("nan", "nan") if z is None else (_num(complex(z).real), _num(complex(z).imag))
        std = "nan" if r["remainder_std"] is None else _num(r["remainder_std"])
        avg = "nan" if r["remainder_avg"] is None else _num(r["remainder_avg"])
        lines.append(",".join([*(_num(k) for k in r["kappa"]), _num(r["tau"]), *parts(r["direct"]),
                               *parts(r["estimate"]), *parts(r["remainder"]), std, avg, r["status"]]))
    art.text("invert.csv", "\n".join(lines) + "\n")
    return {"cells": len(rows), "absent": sum(r["status"] != "ok" for r in rows)}


def _cmd_bench(config: RunConfig, art: _Artifacts) -> dict:
    from .estimate_bench import BenchSpec, bench, rows_to_csv, sweep_report

    p = dict(config.params)
    g = config.grid
    spec = BenchSpec(p.pop("inequality"), tuple(p.pop("params")), d=g["d"], L=g["L"], N=g["N"],
                     seed=config.seed, **p)
    result = bench(spec)
    art.text("bench.csv", rows_to_csv(result.rows))
    summary = sweep_report(result)
    art.json("summary.json", summary)
    return summary


_HANDLERS = {
    "grid-info": _cmd_grid_info,
    "norm": _cmd_norm,
    "direct-solve": _cmd_direct_solve,
    "data-gen": _cmd_data_gen,
    "invert": _cmd_invert,
    "bench": _cmd_bench,
}


def run(config: RunConfig) -> int:
    """Execute one validated run; returns the exit status."""
    if config.threads > 1:
        log.info("--threads %d accepted; cells run sequentially in index order", config.threads)
    art = _Artifacts(config.output_dir)
    status = 0
    try:
        result = _HANDLERS[config.command](config, art)
    except ShellScatError as exc:
        status = exc.exit_code
        art.json("error.json", {"error": type(exc).__name__, "message": str(exc), "exit_code": status})
        art.manifest(config, status)
        raise
    art.manifest(config, status)
    print(json.dumps(result, indent=2, sort_keys=True, default=_json_default))
    return status


# ---------------------------------------------------------------- argument parsing


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _params(text: str) -> list:
    """Comma list of values; 'a:b' items become (tau, M) pairs."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if item:
            out.append([float(v) for v in item.split(":")] if ":" in item else float(item))
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shellscat", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=version_string())
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", help="JSON config file")
        cmd.add_argument("--out", dest="output_dir", help=f"output directory (default ${OUTPUT_ENV} or ./shellscat_out)")
        cmd.add_argument("--seed", type=int)
        cmd.add_argument("--threads", type=int)
        cmd.add_argument("--basis", choices=["smooth", "c2poly"])
        cmd.add_argument("--d", type=int)
        cmd.add_argument("--L", type=float)
        cmd.add_argument("--N", type=int)
        cmd.add_argument("-v", "--verbose", action="store_true")
        if name == "grid-info":
            cmd.add_argument("--lambda", dest="lam", type=float)
        elif name == "norm":
            cmd.add_argument("--space", choices=SPACES)
            cmd.add_argument("--field")
            cmd.add_argument("--lambda", dest="lam", type=float)
            cmd.add_argument("--tau", type=float)
            cmd.add_argument("--M", type=float)
            cmd.add_argument("--s", type=float)
        elif name in ("direct-solve", "data-gen"):
            if name == "direct-solve":
                cmd.add_argument("--lambda", dest="lam", type=float)
            else:
                cmd.add_argument("--lambdas", type=_floats)
            cmd.add_argument("--R0", type=float)
            cmd.add_argument("--potential", help="potential JSON file")
            cmd.add_argument("--backend", choices=["pv_sphere", "absorption", "green3d"])
        elif name == "invert":
            cmd.add_argument("--potentials", nargs=2)
            cmd.add_argument("--lambda", dest="lam", type=float)
            cmd.add_argument("--taus", type=_floats)
            cmd.add_argument("--kappa-grid", dest="kappa_grid", help="MAX:N, an N^3 grid with |kappa| <= MAX")
            cmd.add_argument("--tau-window", dest="tau_window", type=int,
                             help="samples per [tau, 2 tau) window for the averaged remainder")
        else:
            cmd.add_argument("--ineq")
            cmd.add_argument("--grid", dest="param_grid", type=_params, help="comma list; tau:M pairs for carleman")
            cmd.add_argument("--samples", type=int)
            cmd.add_argument("--family", choices=["gaussian", "bandlimited", "annulus", "shell"])
    return parser


def version_string() -> str:
    return (f"shellscat {__version__} (python {platform.python_version()}, numpy {np.__version__}; "
            f"default LP basis: {DEFAULT_BASIS.kind.value})")


def _overrides(args: argparse.Namespace) -> dict:
    section = _SECTION[args.command]
    out: dict = {"command": args.command}
    for key in ("output_dir", "seed", "threads", "basis"):
        if getattr(args, key, None) is not None:
            out[key] = getattr(args, key)
    for key in ("d", "L", "N"):
        if getattr(args, key, None) is not None:
            out[f"grid.{key}"] = getattr(args, key)
    mapping = {
        "lam": "lambda", "space": "space", "field": "field", "tau": "tau", "M": "M", "s": "s",
        "lambdas": "lambdas", "R0": "R0", "potential": "potential", "backend": "backend",
        "potentials": "potentials", "taus": "taus", "ineq": "inequality", "param_grid": "params",
        "samples": "samples", "family": "family", "tau_window": "tau_window",
    }
    for attr, key in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            out[f"{section}.{key}"] = value
    if getattr(args, "kappa_grid", None):
        try:
            kmax, n = args.kappa_grid.split(":")
            out[f"{section}.kappa_grid"] = {"max": float(kmax), "n": int(n)}
        except ValueError:
            raise ConfigError([f"--kappa-grid: expected MAX:N, got {args.kappa_grid!r}"])
    return out


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = validate_config(args.config, _overrides(args))
        return run(config)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except (ParameterError, RegimeError, DivergenceError, FieldIOError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"IO error: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
