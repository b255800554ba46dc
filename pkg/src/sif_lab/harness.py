"""Experiment driver: manufactured recovery studies, penalty sweeps, reporting.

Configs are INI files with sections [domain], [mesh], [material], [data],
[solver], [output]; data fields are analytic expressions in x, y, r, theta.
Reports are plain dicts (JSON) or row tables (CSV) with a versioned schema.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .expr import parse as parse_expr
from .extraction import (ProblemData, extract_sifs_penalized,
                         extract_sifs_stokes, regular_part)
from .fem import P2Space, apply_dirichlet, assemble, diff_norms, solve
from .geometry import BoundaryData, CornerPolygon, TriMesh, generate_lshape_mesh, lshape_polygon
from .modes import make_mode
from .spectral import MaterialParams, lame_exponents, stokes_exponents

log = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "RunConfig",
    "SweepRecord",
    "SCHEMA",
    "SWEEP_COLUMNS",
    "load_config",
    "build_domain",
    "build_data",
    "manufactured_fields",
    "run_manufactured",
    "run_eps_sweep",
    "emit",
]

SCHEMA = "sif-lab/1"

SWEEP_COLUMNS = [
    "eps", "lambda1", "lambda2", "gamma1", "gamma2", "c1", "c2",
    "c1_ref", "c2_ref", "dc1", "dc2", "w_diff_h1", "sigma_diff_l2",
    "wall_time",
]


class ConfigError(Exception):
    """Missing/invalid section, key, or expression in a run config."""


@dataclass(frozen=True)
class SweepRecord:
    """One penalty value of an eps-sweep against the fixed Stokes reference."""

    eps: float
    lambda1: float
    lambda2: float
    gamma1: float
    gamma2: float
    c1: float
    c2: float
    c1_ref: float
    c2_ref: float
    dc1: float
    dc2: float
    w_diff_h1: float
    sigma_diff_l2: float
    wall_time: float


@dataclass
class RunConfig:
    """Parsed and validated run configuration."""

    domain: dict
    mesh: dict
    material: dict
    data: dict
    solver: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)


def _floats(text: str) -> list[float]:
    return [float(tok) for tok in text.replace(",", " ").split()]


def load_config(source: str) -> RunConfig:
    """Read an INI config from a path or from literal text."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",),
                                   comment_prefixes=("#",))
    if "\n" in source or "=" in source:
        cp.read_string(source)
    else:
        if not cp.read(source):
            raise ConfigError(f"config file not found: {source}")
    for section in ("domain", "mesh", "material", "data"):
        if section not in cp:
            raise ConfigError(f"missing [{section}] section")

    def sec(name):
        return {k: v.strip().strip('"') for k, v in cp[name].items()} if name in cp else {}

    cfg = RunConfig(domain=sec("domain"), mesh=sec("mesh"),
                    material=sec("material"), data=sec("data"),
                    solver=sec("solver"), output=sec("output"))
    # Validate every expression-valued key up front.
    for key, val in cfg.data.items():
        if key in ("case",):
            continue
        try:
            parse_expr(val)
        except Exception as exc:
            raise ConfigError(f"[data] {key} = {val!r}: {exc}") from exc
    if "mu" not in cfg.material:
        raise ConfigError("[material] must define mu")
    return cfg


def build_domain(cfg: RunConfig) -> tuple[CornerPolygon, TriMesh]:
    kind = cfg.domain.get("kind", "lshape")
    if kind != "lshape":
        raise ConfigError(f"unsupported domain kind {kind!r}")
    size = float(cfg.domain.get("size", "1.0"))
    polygon = lshape_polygon(size)
    h = float(cfg.mesh.get("h", "0.1"))
    ratio = float(cfg.mesh.get("grading_ratio", "0.5"))
    levels = int(cfg.mesh.get("levels", "6"))
    mesh = generate_lshape_mesh(polygon, h, grading_ratio=ratio, levels=levels)
    return polygon, mesh


def _vector_callable(ex_x, ex_y, frame):
    def func(x, y):
        shape = np.shape(np.asarray(x, dtype=float))
        vx = np.broadcast_to(np.asarray(ex_x.evaluate(x, y, frame), dtype=float), shape)
        vy = np.broadcast_to(np.asarray(ex_y.evaluate(x, y, frame), dtype=float), shape)
        return np.stack([vx, vy], axis=-1)
    return func


def _scalar_callable(ex, frame):
    def func(x, y):
        shape = np.shape(np.asarray(x, dtype=float))
        return np.broadcast_to(np.asarray(ex.evaluate(x, y, frame), dtype=float), shape)
    return func


def build_data(cfg: RunConfig, polygon: CornerPolygon):
    """(f, BoundaryData, zeta) callables from the [data] expressions.

    Boundary traces: per-edge keys g<j>_x/g<j>_y override the global g_x/g_y;
    edges with neither get zero data.
    """
    frame = polygon.frame
    d = cfg.data
    f = None
    if "f_x" in d or "f_y" in d:
        f = _vector_callable(parse_expr(d.get("f_x", "0")),
                             parse_expr(d.get("f_y", "0")), frame)
    zero = _vector_callable(parse_expr("0"), parse_expr("0"), frame)
    traces = {}
    for edge in polygon.edges:
        kx, ky = f"g{edge.tag}_x", f"g{edge.tag}_y"
        if kx in d or ky in d:
            traces[edge.tag] = _vector_callable(parse_expr(d.get(kx, "0")),
                                                parse_expr(d.get(ky, "0")), frame)
        elif "g_x" in d or "g_y" in d:
            traces[edge.tag] = _vector_callable(parse_expr(d.get("g_x", "0")),
                                                parse_expr(d.get("g_y", "0")), frame)
        else:
            traces[edge.tag] = zero
    zeta = _scalar_callable(parse_expr(d["zeta"]), frame) if "zeta" in d else None
    return f, BoundaryData(traces=traces, zeta=zeta), zeta


# ---------------------------------------------------------------------------
# manufactured cases
# ---------------------------------------------------------------------------

def manufactured_fields(case: str, material: MaterialParams, polygon: CornerPolygon):
    """Built-in manufactured problems with known coefficients.

    All cases share the divergence-free polynomial w = (2x^2y, -2xy^2), which
    vanishes at the corner together with its trace on both corner edges.

      penalized : u = w + 0.7 Phi1 - 0.3 Phi2,  f = -mu lap(w)
      stokes    : u = w + 1.0 Phi1 + 0.4 Phi2,  p adds x^3 - y^3, zeta = 0
      smooth    : u = w (no singular content),  c_true = (0, 0)

    Returns (f, traces, c_true, family).
    """
    frame = polygon.frame
    mu = material.mu

    def w_poly(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.stack([2.0 * x * x * y, -2.0 * x * y * y], axis=-1)

    if case == "penalized":
        c_true = (0.7, -0.3)
        table = lame_exponents(frame.omega, material.C)
        phis = [make_mode("lame", "primal", i, frame, material, table) for i in (1, 2)]

        def f(x, y):
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            return np.stack([-4.0 * mu * y, 4.0 * mu * x], axis=-1)
    elif case == "stokes":
        c_true = (1.0, 0.4)
        table = stokes_exponents(frame.omega)
        phis = [make_mode("stokes", "primal", i, frame, material, table) for i in (1, 2)]

        def f(x, y):
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            return np.stack([-4.0 * mu * y + 3.0 * x * x,
                             4.0 * mu * x - 3.0 * y * y], axis=-1)
    elif case == "smooth":
        c_true = (0.0, 0.0)
        phis = []

        def f(x, y):
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            return np.stack([-4.0 * mu * y, 4.0 * mu * x], axis=-1)
    else:
        raise ConfigError(f"unknown manufactured case {case!r}")

    def u_exact(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = w_poly(x, y)
        if phis:
            r = np.hypot(x, y)
            mask = r > 1e-14
            sing = sum(c * phi.eval_xy(x[mask], y[mask])
                       for c, phi in zip(c_true, phis))
            out[mask] += sing
        return out

    traces = {edge.tag: u_exact for edge in polygon.edges}
    family = "stokes" if case == "stokes" else "penalized"
    return f, traces, c_true, family


def run_manufactured(cfg: RunConfig) -> dict:
    """Solve-free extraction of built-in manufactured data across mesh levels."""
    case = cfg.data.get("case", "penalized")
    mu = float(cfg.material["mu"])
    eps = float(cfg.material.get("eps", "1e-3"))
    if case == "stokes":
        material = MaterialParams(mu, 0.0)
    else:
        if eps <= 0.0:
            raise ConfigError("penalized manufactured case needs eps > 0")
        material = MaterialParams(mu, eps)

    size = float(cfg.domain.get("size", "1.0"))
    polygon = lshape_polygon(size)
    hs = _floats(cfg.mesh.get("h_levels", cfg.mesh.get("h", "0.1")))
    ratio = float(cfg.mesh.get("grading_ratio", "0.5"))
    levels = int(cfg.mesh.get("levels", "6"))

    f, traces, c_true, family = manufactured_fields(case, material, polygon)
    g = BoundaryData(traces=traces, zeta=None)

    rows = []
    for h in hs:
        t0 = time.perf_counter()
        mesh = generate_lshape_mesh(polygon, h, grading_ratio=ratio, levels=levels)
        data = ProblemData(polygon=polygon, mesh=mesh, material=material, g=g, f=f)
        rep = (extract_sifs_stokes(data) if family == "stokes"
               else extract_sifs_penalized(data))
        err1 = abs(rep.c1 - c_true[0])
        err2 = abs(rep.c2 - c_true[1]) if rep.c2 is not None else None
        rows.append({"h": h, "c1": rep.c1, "c2": rep.c2,
                     "err1": err1, "err2": err2,
                     "wall_time": time.perf_counter() - t0})
        log.info("manufactured %s h=%g: c=(%.6g, %s) err=(%.3e, %s)",
                 case, h, rep.c1, rep.c2, err1, err2)
    rates = []
    for prev, cur in zip(rows, rows[1:]):
        denom = math.log(prev["h"] / cur["h"])
        r1 = math.log(prev["err1"] / cur["err1"]) / denom if cur["err1"] > 0 else None
        r2 = None
        if cur["err2"] and prev["err2"]:
            r2 = math.log(prev["err2"] / cur["err2"]) / denom
        rates.append({"h": cur["h"], "rate1": r1, "rate2": r2})
    return {"schema": SCHEMA, "kind": "manufactured", "case": case,
            "family": family, "mu": mu,
            "eps": material.eps if family == "penalized" else None,
            "c_true": list(c_true), "rows": rows, "rates": rates}


# ---------------------------------------------------------------------------
# eps sweep
# ---------------------------------------------------------------------------

def run_eps_sweep(cfg: RunConfig) -> dict:
    """Penalized-to-Stokes comparison over a decreasing eps grid, fixed mesh.

    The Stokes reference (coefficients, regular part) is computed once with
    the same mesh and quadrature settings; per-eps rows report coefficient
    and regular-part differences plus their fitted log-log slopes.  At desk
    meshes the discretization floor limits how far the differences can fall;
    the grid should stop around eps = 1e-5.
    """
    mu = float(cfg.material["mu"])
    if "eps_grid" not in cfg.material:
        raise ConfigError("[material] eps_grid required for a sweep")
    eps_grid = _floats(cfg.material["eps_grid"])
    if len(eps_grid) < 4:
        raise ConfigError("eps_grid needs at least 4 points")
    if any(b >= a for a, b in zip(eps_grid, eps_grid[1:])):
        raise ConfigError("eps_grid must be strictly decreasing")

    polygon, mesh = build_domain(cfg)
    frame = polygon.frame
    f, g, zeta = build_data(cfg, polygon)
    space = P2Space(mesh)

    # Stokes reference: extraction, solve, regular part.
    smat = MaterialParams(mu, 0.0)
    sdata = ProblemData(polygon=polygon, mesh=mesh, material=smat, g=g,
                        f=f, zeta=zeta)
    sref = extract_sifs_stokes(sdata)
    ssys = apply_dirichlet(assemble(mesh, smat, f=f, zeta=zeta, space=space),
                           g.traces)
    us = solve(ssys)
    stable = stokes_exponents(frame.omega)
    smodes = [make_mode("stokes", "primal", i, frame, smat, stable)
              for i in range(1, (2 if sref.c2 is not None else 1) + 1)]
    ws, _ = regular_part(us, sref, smodes)

    records = []
    for eps in eps_grid:
        t0 = time.perf_counter()
        mat = MaterialParams(mu, eps)
        data = ProblemData(polygon=polygon, mesh=mesh, material=mat, g=g, f=f)
        rep = extract_sifs_penalized(data)
        table = lame_exponents(frame.omega, mat.C)
        modes = [make_mode("lame", "primal", i, frame, mat, table) for i in (1, 2)]
        sysk = apply_dirichlet(assemble(mesh, mat, f=f, space=space), g.traces)
        ue = solve(sysk)
        we, _ = regular_part(ue, rep, modes)
        dn = diff_norms(we, ws)
        records.append(SweepRecord(
            eps=eps,
            lambda1=table.exponents[0], lambda2=table.exponents[1],
            gamma1=rep.gamma1, gamma2=rep.gamma2,
            c1=rep.c1, c2=rep.c2,
            c1_ref=sref.c1, c2_ref=sref.c2 if sref.c2 is not None else math.nan,
            dc1=abs(rep.c1 - sref.c1 / mu),
            dc2=abs(rep.c2 - sref.c2 / mu) if sref.c2 is not None else math.nan,
            w_diff_h1=dn["h1"], sigma_diff_l2=dn["l2_pressure"],
            wall_time=time.perf_counter() - t0))
        log.info("sweep eps=%g: dc=(%.3e, %.3e) |w|=%.3e |sigma|=%.3e",
                 eps, records[-1].dc1, records[-1].dc2,
                 records[-1].w_diff_h1, records[-1].sigma_diff_l2)

    def fit_slope(vals):
        xs = np.log([r.eps for r in records])
        ys = np.log(vals)
        return float(np.polyfit(xs, ys, 1)[0])

    slopes = {
        "dc1": fit_slope([r.dc1 for r in records]),
        "dc2": fit_slope([r.dc2 for r in records]) if sref.c2 is not None else None,
        "w_diff_h1": fit_slope([r.w_diff_h1 for r in records]),
        "sigma_diff_l2": fit_slope([r.sigma_diff_l2 for r in records]),
    }
    return {"schema": SCHEMA, "kind": "eps_sweep", "mu": mu,
            "mesh_id": f"{mesh.n_nodes}n-{len(mesh.tris)}t-h{mesh.h:g}",
            "records": records, "slopes": slopes}


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, SweepRecord):
        return asdict(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def emit(report, format: str = "json", path: str | None = None) -> str:
    """Serialize a report and write it to path (or stdout); returns the text.

    CSV is available for row tables (reports carrying "records" or "rows");
    everything serializes to JSON under the versioned schema.
    """
    if format == "json":
        text = json.dumps(_jsonable(report), indent=2) + "\n"
    elif format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        rows = report.get("records") if isinstance(report, dict) else report
        if rows is None and isinstance(report, dict):
            rows = report.get("rows")
        if rows is None:
            raise ValueError("CSV output needs a row table")
        rows = list(rows)
        if rows and isinstance(rows[0], SweepRecord):
            writer.writerow(SWEEP_COLUMNS)
            for r in rows:
                writer.writerow([getattr(r, c) for c in SWEEP_COLUMNS])
        else:
            cols = list(rows[0].keys()) if rows else SWEEP_COLUMNS
            writer.writerow(cols)
            for r in rows:
                writer.writerow([r[c] for c in cols])
        text = buf.getvalue()
    else:
        raise ValueError(f"unknown format {format!r}")
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text
