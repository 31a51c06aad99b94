"""Command-line pipeline: solve -> build -> bend -> verify, plus rigidity and mesh export.

Exit codes: 0 all gates pass, 2 input error, 3 geometric degeneracy,
4 classification or integrability failure (including failed gates).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .bending import (
    BENDING_RESIDUALS, ClassificationError, FrameDegeneracyError, NonIntegrableError, ProbeSizeError,
    SingularChartError, bendability_flag, bending_space_dimension, pointwise_constraint_kernel,
    ruled_bending, synthesize, triviality_test, verify_bending,
)
from .examples import REGISTRY, build_example
from .grid_calculus import NonClosedFormError, ScalarField, VecField, make_grid
from .hypersurface import (
    HYPERSURFACE_RESIDUALS, DegenerateEnvelopeError, HypersurfaceSample, InconsistentGeometryError,
    NowhereRegularError, RankError, UnclassifiableError, classification_residuals, classify,
    envelope_crosscheck, gate, gauss_parametrize, gauss_residuals, pair_from_phi, rank_profile, to_orthonormal,
)
from .io import read_bundle, write_bundle, write_obj
from .pde_solvers import (
    NotAnImmersionError, OriginCrossingError, PhiFamily, ResonanceError, build_phi_family, pde_residual,
)

log = logging.getLogger("infbend")

EXIT_OK, EXIT_INPUT, EXIT_DEGENERATE, EXIT_FAIL = 0, 2, 3, 4
REPORT_RESIDUALS = HYPERSURFACE_RESIDUALS + BENDING_RESIDUALS

# fixed table of expression ids usable for M and for seeds; each maps (u, v) meshes to values
EXPRESSIONS = {
    "zero": lambda u, v: 0 * u,
    "one": lambda u, v: 0 * u + 1.0,
    "quarter": lambda u, v: 0 * u + 0.25,
    "u": lambda u, v: u,
    "v": lambda u, v: v,
    "uv": lambda u, v: u * v,
    "u2_plus_v2": lambda u, v: u**2 + v**2,
    "u2_minus_v2": lambda u, v: u**2 - v**2,
    "cos_u": lambda u, v: np.cos(u),
    "sin_u": lambda u, v: np.sin(u),
    "cos_v": lambda u, v: np.cos(v),
    "sin_v": lambda u, v: np.sin(v),
    "sin_u_plus_v": lambda u, v: np.sin(u + v),
    "cos_u_minus_v": lambda u, v: np.cos(u - v),
}

SEED_PRESETS = {
    "clifford": ("real", ["u2_plus_v2", "cos_u", "sin_u", "cos_v", "sin_v"]),
    "harmonic": ("complex", ["uv", "one", "u", "v", "u2_minus_v2"]),
    "sine": ("complex", ["one", "sin_u", "cos_u", "sin_v", "cos_v"]),
}


class InputError(ValueError):
    pass


@dataclass
class PipelineConfig:
    kind: str = "real"
    u_range: tuple = (-0.5, 0.5)
    v_range: tuple = (-0.5, 0.5)
    n_grid: int = 33
    n: int = 3
    M: object = 0.0
    seeds: object = "clifford"
    fiber_range: tuple = (-0.5, 0.5)
    fiber_count: int = 9
    gate_scale: float = 1.0
    base: tuple = (0, 0, 0)
    example: str | None = None
    family: str | None = None
    hypersurface: str | None = None
    bending: str | None = None
    theta0: float = 1.0
    t_values: tuple = (0.1, 0.5, 1.0)
    out: str = "out"
    rotation_seed: int | None = None
    raw: dict = field(default_factory=dict)


def _pair(x, name) -> tuple:
    try:
        a, b = (float(t) for t in x)
    except (TypeError, ValueError):
        raise InputError(f"{name} must be a pair of numbers, got {x!r}") from None
    if not a < b:
        raise InputError(f"{name} must be increasing, got {x!r}")
    return (a, b)


def load_config(path: str | None, overrides: dict) -> PipelineConfig:
    raw: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise InputError(f"config file not found: {p}")
        try:
            raw = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as exc:
            raise InputError(f"cannot parse config {p}: {exc}") from None
        if not isinstance(raw, dict):
            raise InputError(f"config {p} must be a mapping")
        base_dir = p.parent
    else:
        base_dir = Path(".")
    raw = {**raw, **{k: v for k, v in overrides.items() if v is not None}}
    cfg = PipelineConfig(raw=raw)
    grid = raw.get("grid", {}) or {}
    cfg.u_range = _pair(grid.get("u", cfg.u_range), "grid.u")
    cfg.v_range = _pair(grid.get("v", cfg.v_range), "grid.v")
    cfg.n_grid = int(grid.get("n", cfg.n_grid))
    fib = raw.get("fiber", {}) or {}
    cfg.fiber_range = _pair(fib.get("range", cfg.fiber_range), "fiber.range")
    cfg.fiber_count = int(fib.get("count", cfg.fiber_count))
    if "grid_override" in raw:
        cfg.n_grid, cfg.fiber_count = raw["grid_override"]
    if cfg.n_grid < 5 or cfg.fiber_count < 5:
        raise InputError("grids need at least 5 nodes per direction")
    for key in ("kind", "M", "seeds", "example", "theta0", "out", "rotation_seed"):
        if key in raw:
            setattr(cfg, key, raw[key])
    cfg.n = int(raw.get("n", cfg.n))
    if cfg.kind not in ("real", "complex"):
        raise InputError(f"kind must be 'real' or 'complex', got {cfg.kind!r}")
    gates = raw.get("gates", {}) or {}
    cfg.gate_scale = float(raw.get("gate_scale", gates.get("scale", cfg.gate_scale)))
    if cfg.gate_scale <= 0:
        raise InputError("gate overrides must be positive")
    cfg.base = tuple(int(b) for b in raw.get("base", cfg.base))
    if "t" in raw:
        cfg.t_values = tuple(float(t) for t in raw["t"])
    for key in ("family", "hypersurface", "bending"):
        if raw.get(key) is not None:
            setattr(cfg, key, str(base_dir / raw[key]) if path is not None and key not in overrides
                    else str(raw[key]))
    if cfg.example is not None and cfg.example not in REGISTRY:
        raise InputError(f"unknown example {cfg.example!r}; choose from {sorted(REGISTRY)}")
    cfg.raw["_base_dir"] = str(base_dir)
    return cfg


def config_hash(cfg: PipelineConfig) -> str:
    # the output location does not change any result, so it is left out of the hash
    doc = {k: v for k, v in cfg.raw.items() if not k.startswith("_") and k != "out"}
    return hashlib.sha256(json.dumps(doc, sort_keys=True, default=str).encode()).hexdigest()[:16]


# -- family ---------------------------------------------------------------------------------

def _expression(name: str):
    try:
        return EXPRESSIONS[name]
    except KeyError:
        raise InputError(f"unknown expression {name!r}; choose from {sorted(EXPRESSIONS)}") from None


def _field_file(path: str, base_dir: str, grid) -> np.ndarray:
    p = Path(path)
    if not p.is_absolute():
        p = Path(base_dir) / p
    if not p.is_file():
        raise InputError(f"referenced file not found: {p}")
    fields, _ = read_bundle(p)
    if len(fields) != 1:
        raise InputError(f"{p} must hold exactly one field")
    f = next(iter(fields.values()))
    vals = np.asarray(f.values if hasattr(f, "values") else f[1], float)
    if vals.shape != grid.shape:
        raise InputError(f"{p} has shape {vals.shape}, expected {grid.shape}")
    return vals


def _potential(cfg: PipelineConfig, grid) -> ScalarField:
    U, V = grid.mesh()
    spec = cfg.M
    base_dir = cfg.raw["_base_dir"]
    if isinstance(spec, (int, float)):
        return ScalarField(grid, np.full(grid.shape, float(spec)))
    if isinstance(spec, dict) and len(spec) == 1:
        (key, val), = spec.items()
        if key == "constant":
            return ScalarField(grid, np.full(grid.shape, float(val)))
        if key == "expression":
            return ScalarField(grid, np.broadcast_to(_expression(val)(U, V), grid.shape).copy())
        if key == "file":
            return ScalarField(grid, _field_file(val, base_dir, grid))
    raise InputError(f"M must be a number or one of {{constant, expression, file}}, got {spec!r}")


def _seeds(cfg: PipelineConfig, grid) -> list:
    spec = cfg.seeds
    if isinstance(spec, str):
        if spec not in SEED_PRESETS:
            raise InputError(f"unknown seed preset {spec!r}; choose from {sorted(SEED_PRESETS)}")
        kind, spec = SEED_PRESETS[spec]
        if kind != cfg.kind:
            raise InputError(f"seed preset is for kind {kind!r} but config kind is {cfg.kind!r}")
    if not isinstance(spec, list) or len(spec) != cfg.n + 2:
        raise InputError(f"seeds must list n+2 = {cfg.n + 2} entries")
    U, V = grid.mesh()
    out = []
    for entry in spec:
        if isinstance(entry, str):
            vals = np.broadcast_to(_expression(entry)(U, V), grid.shape).copy()
        elif isinstance(entry, dict) and "file" in entry:
            vals = _field_file(entry["file"], cfg.raw["_base_dir"], grid)
        else:
            raise InputError(f"seed entries are expression ids or {{file: path}}, got {entry!r}")
        out.append((vals[:, 0], vals[0, :]) if cfg.kind == "real" else vals)
    return out


def family_gate(fam: PhiFamily, gate_scale: float) -> float:
    return gate_scale * gate(fam.grid.h, float(np.max(np.abs(fam.stacked()))))


def run_solve(cfg: PipelineConfig) -> tuple[dict, PhiFamily]:
    grid = make_grid(cfg.u_range, cfg.v_range, cfg.n_grid, cfg.n_grid)
    M = _potential(cfg, grid)
    fam = build_phi_family(M, cfg.kind, _seeds(cfg, grid), n=cfg.n)
    st = fam.stacked()
    pde = max(pde_residual(st[..., c], M, cfg.kind).sup() for c in range(st.shape[-1]))
    tol = family_gate(fam, cfg.gate_scale)
    norm2 = np.sum(fam.phi.values**2, -1)
    flag = bendability_flag(fam)
    log.info("PDE residual %.3e (gate %.3e)", pde, tol)
    report = {"verdict": "bendable" if flag["bendable"] else "not-bendable",
              "residuals": {"pde": {"value": pde, "gate": tol, "pass": bool(pde <= tol)},
                            "bendability": {"value": flag["residual"], "gate": flag["gate"],
                                            "pass": bool(flag["bendable"])}},
              "details": {"norm2_min": float(norm2.min()), "norm2_max": float(norm2.max()),
                          "kind": cfg.kind, "n": cfg.n}}
    report["passed"] = report["residuals"]["pde"]["pass"]
    return report, fam


def save_family(path: Path, fam: PhiFamily) -> None:
    write_bundle(path, {"phi0": fam.phi0, "phi": fam.phi, "M": fam.M}, {"kind": fam.kind})


def load_family(path: str) -> PhiFamily:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"family file not found: {p}")
    fields, meta = read_bundle(p)
    try:
        return PhiFamily(fields["phi0"], fields["phi"], meta["kind"], fields["M"])
    except KeyError as exc:
        raise InputError(f"{p} is not a family file (missing {exc})") from None


# -- hypersurface ---------------------------------------------------------------------------

def _rotation(cfg: PipelineConfig):
    if cfg.rotation_seed is None:
        return None
    from .examples import random_rotation
    return random_rotation(4, int(cfg.rotation_seed))


def source_of(cfg: PipelineConfig) -> dict:
    if cfg.example is not None:
        return {"example": cfg.example, "n": cfg.n_grid, "ns": cfg.fiber_count,
                "rotation_seed": cfg.rotation_seed}
    fam_path = cfg.family or str(Path(cfg.out) / "family.json")
    return {"family": str(Path(fam_path).resolve()), "s_range": list(cfg.fiber_range), "ns": cfg.fiber_count}


def realize(source: dict) -> tuple[HypersurfaceSample, PhiFamily | None]:
    """Deterministically rebuild a hypersurface from its recorded source."""
    if "example" in source:
        cfg = PipelineConfig(rotation_seed=source.get("rotation_seed"))
        ex = build_example(source["example"], source["n"], source["ns"], _rotation(cfg))
        return ex.hyp, ex.family
    fam = load_family(source["family"])
    pair = pair_from_phi(fam)
    return gauss_parametrize(pair, tuple(source["s_range"]), int(source["ns"])), fam


def export_meshes(hyp: HypersurfaceSample, out: Path) -> list[str]:
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for k in range(hyp.chart.shape[2]):
        name = f"slice_{k:03d}.obj"
        write_obj(out / name, hyp.psi[:, :, k], hyp.regular_mask[:, :, k])
        names.append(name)
    return names


def run_build(cfg: PipelineConfig) -> tuple[dict, HypersurfaceSample, dict]:
    source = source_of(cfg)
    hyp, fam = realize(source)
    if not hyp.regular_mask.all():
        log.warning("%d singular nodes: meshes are emitted for regular nodes only",
                    int(np.sum(~hyp.regular_mask)))
    table = gauss_residuals(hyp, cfg.gate_scale)
    details = {"regular_fraction": float(np.mean(hyp.regular_mask)),
               "rank_histogram": rank_profile(hyp)["histogram"]}
    if fam is not None:
        env = envelope_crosscheck(hyp, fam)
        log.info("envelope cross-check %.3e over %d nodes", env["max_distance"], env["nodes"])
        table["envelope"] = {"value": env["max_distance"], "gate": 1e-6, "pass": env["max_distance"] <= 1e-6}
    report = {"verdict": "built", "residuals": table, "details": details,
              "passed": all(r["pass"] is not False for r in table.values())}
    return report, hyp, source


def save_hypersurface(path: Path, hyp: HypersurfaceSample, source: dict) -> None:
    chart = hyp.chart
    fields = {"psi": VecField(chart, hyp.psi), "N": VecField(chart, hyp.N),
              "regular": ScalarField(chart, hyp.regular_mask.astype(float)),
              "A": (chart, hyp.A_chart)}
    if hyp.nullity_dir is not None:
        fields["nullity"] = VecField(chart, hyp.nullity_dir)
    write_bundle(path, fields, {"source": source})


def load_hypersurface(path: str) -> tuple[HypersurfaceSample, PhiFamily | None, dict]:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"hypersurface file not found: {p}")
    fields, meta = read_bundle(p)
    if "source" not in meta or "psi" not in fields:
        raise InputError(f"{p} is not a hypersurface file")
    hyp, fam = realize(meta["source"])
    if not np.allclose(hyp.psi, fields["psi"].values, rtol=0, atol=1e-12):
        raise InputError(f"{p} does not match its recorded source; rebuild it")
    return hyp, fam, meta["source"]


# -- bending ---------------------------------------------------------------------------

def _complete(table: dict) -> dict:
    """Report every declared residual exactly once (null when not applicable)."""
    out = {name: table.get(name, {"value": None, "gate": None, "pass": None}) for name in REPORT_RESIDUALS}
    extra = set(table) - set(REPORT_RESIDUALS)
    for name in sorted(extra):
        out[name] = table[name]
    if not set(REPORT_RESIDUALS) <= set(out):
        raise AssertionError("report is missing declared residuals")
    return out


def rigidity_report(hyp: HypersurfaceSample, samples: int = 100, seed: int = 0) -> dict:
    rk = rank_profile(hyp)
    details = {"rank_histogram": rk["histogram"]}
    if hyp.nullity_dir is None:
        rng = np.random.default_rng(seed)
        Ao = to_orthonormal(hyp.A_chart, hyp.safe_metric).reshape(-1, 3, 3)
        picks = rng.choice(Ao.shape[0], size=min(samples, Ao.shape[0]), replace=False)
        smin = []
        for p in sorted(picks):
            smin.append(float(np.min(pointwise_constraint_kernel(Ao[p]).singular_values)))
        details["pointwise_sigma_min"] = float(min(smin))
        details["pointwise_samples"] = len(smin)
    dim = bending_space_dimension(hyp)
    details.update({"nullity": int(dim["nullity"]), "gap_ratio": float(dim["gap_ratio"]),
                    "per_node_dim": int(dim["per_node_dim"])})
    return details


def run_bend(cfg: PipelineConfig, hyp: HypersurfaceSample) -> tuple[dict, dict | None]:
    table = gauss_residuals(hyp, cfg.gate_scale)
    if hyp.nullity_dir is None:
        details = rigidity_report(hyp)
        rigid = details["nullity"] == 0
        report = {"verdict": "rank-3", "residuals": _complete(table), "details": details,
                  "bending_space": "{0}" if rigid else f"dimension {details['nullity']}", "passed": rigid}
        return report, None
    cls = classify(hyp)
    table.update(classification_residuals(hyp, cls, cfg.gate_scale))
    details = {}
    if cls.verdict in ("surface-like", "mixed"):
        report = {"verdict": cls.verdict, "residuals": _complete(table), "details": details, "passed": False}
        return report, None
    if cls.verdict == "ruled":
        rb = ruled_bending(hyp, cls, cfg.theta0, cfg.base, (0.1, 1.0), cfg.gate_scale)
        for t, v in rb.codazzi.items():
            table[f"codazzi-A(t={t:g})"] = {"value": v, "gate": rb.gate, "pass": v <= rb.gate}
        fields = {"theta": ScalarField(hyp.chart, rb.theta_ruled), "B": (hyp.chart, rb.B)}
        details["theta_range"] = [float(rb.theta_ruled.min()), float(rb.theta_ruled.max())]
    else:
        bt = synthesize(hyp, cls, cfg.base, cfg.gate_scale, check=False)
        for k, v in bt.residuals.items():
            table[k] = {"value": float(v), "gate": float(bt.gates[k]), "pass": bool(v <= bt.gates[k])}
        # construction residuals that measure algebraic identities use the same gate
        ver = verify_bending(hyp, bt.Tcal, 0.5, bt.B_chart, bt.Ycal, bt.L_cols, cfg.gate_scale)
        for k, v in ver.items():
            if k != "passed":
                table[k] = v
        triv = triviality_test(hyp, bt.Tcal)
        details["is_trivial"] = bool(triv.is_trivial)
        details["triviality_residual"] = triv.residual
        fields = {"T": VecField(hyp.chart, bt.Tcal), "Y": VecField(hyp.chart, bt.Ycal),
                  "B": (hyp.chart, bt.B_chart), "L": (hyp.chart, bt.L_cols)}
    table = _complete(table)
    passed = all(r["pass"] is not False for r in table.values())
    return {"verdict": cls.verdict, "residuals": table, "details": details, "passed": passed}, fields


def run_verify(cfg: PipelineConfig, hyp: HypersurfaceSample, fields: dict) -> dict:
    if "T" not in fields:
        raise InputError("bending file carries no variation field T")
    T = fields["T"].values
    B = fields["B"][1] if "B" in fields else None
    Y = fields["Y"].values if "Y" in fields else None
    L = fields["L"][1] if "L" in fields else None
    per_t = {}
    for t in cfg.t_values:
        per_t[f"{t:g}"] = verify_bending(hyp, T, t, B, Y, L, cfg.gate_scale)
    table = {}
    for t, rep in per_t.items():
        for k, v in rep.items():
            if k != "passed":
                table[f"{k}(t={t})"] = v
    return {"verdict": "verified", "residuals": table,
            "passed": all(rep["passed"] for rep in per_t.values())}


# -- driver ----------------------------------------------------------------------------

def _emit(out: Path, name: str, report: dict, cfg: PipelineConfig, grid_shape, command: str,
          elapsed: float, timing: bool) -> None:
    report = {"command": command, **report,
              "provenance": {"config_hash": config_hash(cfg), "grid": list(grid_shape),
                             "tool_version": __version__}}
    if timing:
        report["timing"] = {"seconds": round(elapsed, 3)}
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(json.dumps(report, sort_keys=True, indent=1, default=_jsonable) + "\n")
    for k, v in report.get("residuals", {}).items():
        if v["pass"] is False:
            log.warning("gate failed: %s = %.3e > %.3e", k, v["value"], v["gate"])


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialise {type(x).__name__}")


def _hyp_for(cfg: PipelineConfig, out: Path):
    if cfg.hypersurface is not None:
        return load_hypersurface(cfg.hypersurface)
    if cfg.example is not None:
        source = source_of(cfg)
        hyp, fam = realize(source)
        return hyp, fam, source
    default = out / "hypersurface.json"
    if default.is_file():
        return load_hypersurface(str(default))
    raise InputError("no hypersurface: give --hypersurface, an example, or run build first")


def execute(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    overrides = {"out": args.out, "gate_scale": args.gate_scale, "example": args.example,
                 "family": getattr(args, "family", None), "hypersurface": getattr(args, "hypersurface", None),
                 "bending": getattr(args, "bending", None)}
    if args.grid is not None:
        overrides["grid_override"] = parse_grid(args.grid)
    if getattr(args, "t", None):
        overrides["t"] = args.t
    cfg = load_config(args.config, overrides)
    out = Path(cfg.out)
    cmd = args.command
    emit = lambda name, rep, shape: _emit(out, name, rep, cfg, shape, cmd,  # noqa: E731
                                          time.perf_counter() - t0, args.timing)
    if cmd == "solve":
        report, fam = run_solve(cfg)
        out.mkdir(parents=True, exist_ok=True)
        save_family(out / "family.json", fam)
        emit("solve-report.json", report, fam.grid.shape)
    elif cmd == "build":
        report, hyp, source = run_build(cfg)
        out.mkdir(parents=True, exist_ok=True)
        save_hypersurface(out / "hypersurface.json", hyp, source)
        report["details"]["meshes"] = export_meshes(hyp, out / "mesh")
        emit("build-report.json", report, hyp.chart.shape)
    elif cmd == "export-mesh":
        hyp, _, _ = _hyp_for(cfg, out)
        names = export_meshes(hyp, out / "mesh")
        report = {"verdict": "exported", "residuals": {}, "details": {"meshes": names}, "passed": True}
        emit("export-report.json", report, hyp.chart.shape)
    elif cmd == "bend":
        hyp, _, source = _hyp_for(cfg, out)
        report, fields = run_bend(cfg, hyp)
        out.mkdir(parents=True, exist_ok=True)
        if fields is not None:
            write_bundle(out / "bending.json", fields, {"source": source})
        emit("bend-report.json", report, hyp.chart.shape)
        if report["verdict"] in ("surface-like", "mixed"):
            log.error("verdict %s: outside the bendable classes", report["verdict"])
            return EXIT_FAIL
    elif cmd == "verify":
        path = Path(cfg.bending or out / "bending.json")
        if not path.is_file():
            raise InputError(f"bending file not found: {path}")
        fields, meta = read_bundle(path)
        hyp, _ = realize(meta["source"])
        report = run_verify(cfg, hyp, fields)
        emit("verify-report.json", report, hyp.chart.shape)
    elif cmd == "rigidity":
        hyp, _, _ = _hyp_for(cfg, out)
        details = rigidity_report(hyp)
        report = {"verdict": "rigid" if details["nullity"] == 0 else "flexible",
                  "residuals": {}, "details": details, "passed": True}
        emit("rigidity-report.json", report, hyp.chart.shape)
    else:  # pragma: no cover - argparse restricts choices
        raise InputError(f"unknown command {cmd!r}")
    return EXIT_OK if report["passed"] else EXIT_FAIL


def parse_grid(text: str) -> tuple[int, int]:
    """``N`` or ``NxS``: nodes per surface direction and along the fibre."""
    parts = str(text).lower().split("x")
    try:
        nums = [int(p) for p in parts]
    except ValueError:
        raise InputError(f"--grid expects N or NxS, got {text!r}") from None
    if len(nums) == 1:
        return nums[0], 9
    if len(nums) == 2:
        return nums[0], nums[1]
    raise InputError(f"--grid expects N or NxS, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="infbend", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"solve": "solve the characteristic PDE for a family", "build": "build the hypersurface and meshes",
             "bend": "classify and synthesize the bending", "verify": "re-verify a bending at several t",
             "rigidity": "numerical dimension of the bending space", "export-mesh": "write OBJ slices"}
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="YAML or JSON pipeline config")
        p.add_argument("--out", help="output directory (default: config 'out' or ./out)")
        p.add_argument("--grid", help="N or NxS: surface nodes per direction and fibre nodes")
        p.add_argument("--gate-scale", type=float, help="multiplier applied to every gate")
        p.add_argument("--example", help=f"built-in example: {', '.join(sorted(REGISTRY))}")
        p.add_argument("--timing", action="store_true", help="include wall time in the report")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "build":
            p.add_argument("--family", help="family file written by solve")
        if name in ("bend", "rigidity", "export-mesh"):
            p.add_argument("--hypersurface", help="hypersurface file written by build")
        if name == "verify":
            p.add_argument("--bending", help="bending file written by bend")
            p.add_argument("--t", type=float, nargs="+", help="variation parameters to check")
    return parser


DEGENERATE = (NowhereRegularError, NotAnImmersionError, OriginCrossingError, DegenerateEnvelopeError,
              FrameDegeneracyError, InconsistentGeometryError, RankError, ResonanceError, SingularChartError)
FAILURES = (UnclassifiableError, ClassificationError, NonIntegrableError, NonClosedFormError)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return execute(args)
    except (InputError, ProbeSizeError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except DEGENERATE as exc:
        log.error("degenerate geometry: %s", exc)
        return EXIT_DEGENERATE
    except FAILURES as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
