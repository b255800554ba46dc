"""Command-line interface: sif-lab <subcommand> [flags].

Subcommands cover the analytic layers (eigen, mode, gamma, identity-check),
the discrete layers (solve, extract) and the experiment drivers (sweep,
manufactured).  Tabular output is CSV on stdout unless --out is given.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys

import numpy as np

from .angular import check_ij_identity, gamma_lame, gamma_stokes
from .extraction import (ProblemData, extract_sifs_penalized,
                         extract_sifs_stokes)
from .fem import apply_dirichlet, assemble, norms, solve
from .harness import (ConfigError, build_data, build_domain, emit,
                      load_config, run_eps_sweep, run_manufactured)
from .modes import CornerFrame, make_mode
from .spectral import MaterialParams, lame_exponents, stokes_exponents

log = logging.getLogger(__name__)


def _write(text: str, path: str | None):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _csv_rows(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(header)
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def _eps_values(args) -> list[float]:
    if getattr(args, "eps_grid", None):
        lo, hi, n = args.eps_grid.split(",")
        return [float(e) for e in np.geomspace(float(lo), float(hi), int(n))]
    return [args.eps]


def cmd_eigen(args) -> int:
    material = MaterialParams(args.mu, args.eps)
    if args.family == "lame":
        table = lame_exponents(args.omega, material.C)
    else:
        table = stokes_exponents(args.omega)
    row = [table.family, table.omega, table.C,
           *table.exponents, table.mode_count, *table.residuals]
    _write(_csv_rows(
        ["family", "omega", "C", "e1", "e2", "e3", "modes", "res1", "res2", "res3"],
        [row]), args.out)
    return 0


def cmd_mode(args) -> int:
    material = MaterialParams(args.mu, args.eps)
    frame = CornerFrame(0.0, args.omega)
    table = (lame_exponents(args.omega, material.C) if args.family == "lame"
             else stokes_exponents(args.omega))
    mode = make_mode(args.family, args.kind, args.index, frame, material, table)
    r, theta = (float(t) for t in args.at.split(","))
    v = mode.eval(r, theta)
    G = mode.eval_grad(r, theta)
    extra = (mode.eval_div_scaled(r, theta) if args.family == "lame"
             else mode.eval_pressure(r, theta))
    header = ["family", "kind", "index", "a", "r", "theta",
              "vx", "vy", "g11", "g12", "g21", "g22",
              "div_scaled" if args.family == "lame" else "pressure"]
    row = [mode.family, mode.kind, mode.index, mode.a, r, theta,
           v[0], v[1], G[0, 0], G[0, 1], G[1, 0], G[1, 1], float(extra)]
    _write(_csv_rows(header, [row]), args.out)
    return 0


def cmd_gamma(args) -> int:
    frame = CornerFrame(0.0, args.omega)
    rows = []
    if args.family == "stokes":
        g = gamma_stokes(args.index, frame)
        rows.append(["stokes", args.index, "", g.gamma, g.order, g.quad_error])
    else:
        for eps in _eps_values(args):
            g = gamma_lame(args.index, MaterialParams(args.mu, eps), frame)
            rows.append(["lame", args.index, eps, g.gamma, g.order, g.quad_error])
    _write(_csv_rows(["family", "index", "eps", "gamma", "order", "quad_error"],
                     rows), args.out)
    return 0


def cmd_identity_check(args) -> int:
    frame = CornerFrame(0.0, args.omega)
    rows = []
    for eps in _eps_values(args):
        rep = check_ij_identity(args.index, MaterialParams(args.mu, eps), frame)
        rows.append([rep["index"], rep["eps"], rep["max_deviation"],
                     rep["scale"], rep["sup_kappa"]])
    _write(_csv_rows(["index", "eps", "max_deviation", "scale", "sup_kappa"],
                     rows), args.out)
    return 0


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    polygon, mesh = build_domain(cfg)
    mu = float(cfg.material["mu"])
    material = MaterialParams(mu, args.eps)
    f, g, zeta = build_data(cfg, polygon)
    system = assemble(mesh, material, f=f, zeta=zeta)
    system = apply_dirichlet(system, g.traces)
    field = solve(system)
    nm = norms(field)
    for k, v in nm.items():
        print(f"{k} = {v:.12e}")
    print(f"solver_residual = {field.residual:.3e}")
    coords = field.space.dof_coords
    Np = mesh.n_nodes
    rows = []
    for i in range(field.space.n_scalar):
        p = field.p[i] if i < Np else ""
        rows.append([coords[i, 0], coords[i, 1], field.ux[i], field.uy[i], p])
    out = args.out or cfg.output.get("path")
    _write(_csv_rows(["x", "y", "ux", "uy", "p"], rows), out)
    return 0


def cmd_extract(args) -> int:
    cfg = load_config(args.config)
    polygon, mesh = build_domain(cfg)
    mu = float(cfg.material["mu"])
    f, g, zeta = build_data(cfg, polygon)
    if args.family == "penalized":
        material = MaterialParams(mu, args.eps)
        data = ProblemData(polygon=polygon, mesh=mesh, material=material,
                           g=g, f=f)
        rep = extract_sifs_penalized(data)
    else:
        material = MaterialParams(mu, 0.0)
        data = ProblemData(polygon=polygon, mesh=mesh, material=material,
                           g=g, f=f, zeta=zeta)
        rep = extract_sifs_stokes(data)
    payload = {"schema": "sif-lab/1", "family": rep.family, "eps": rep.eps,
               "gamma1": rep.gamma1, "gamma2": rep.gamma2,
               "C1": rep.C1, "C2": rep.C2, "Cstar": rep.Cstar,
               "c1": rep.c1, "c2": rep.c2, "terms": rep.terms,
               "mesh_id": rep.mesh_id}
    _write(json.dumps(payload, indent=2) + "\n", args.out)
    line = _csv_rows(
        ["family", "eps", "gamma1", "gamma2", "C1", "C2", "Cstar", "c1", "c2"],
        [[rep.family, rep.eps, rep.gamma1, rep.gamma2, rep.C1, rep.C2,
          rep.Cstar, rep.c1, rep.c2]])
    sys.stdout.write(line)
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    report = run_eps_sweep(cfg)
    emit(report, format=args.format or cfg.output.get("format", "csv"),
         path=args.out or cfg.output.get("path"))
    return 0


def cmd_manufactured(args) -> int:
    cfg = load_config(args.config)
    report = run_manufactured(cfg)
    emit(report, format=args.format or cfg.output.get("format", "json"),
         path=args.out or cfg.output.get("path"))
    return 0


def _add_common(p, config=False):
    p.add_argument("--out", default=None, help="output path (default stdout)")
    if config:
        p.add_argument("--config", required=True, help="INI config file")
        p.add_argument("--format", choices=("csv", "json"), default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sif-lab",
                                 description="Corner singularity toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eigen", help="corner exponents of one family")
    p.add_argument("--family", choices=("lame", "stokes"), required=True)
    p.add_argument("--omega", type=float, required=True, help="opening angle (rad)")
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=0.0)
    _add_common(p)
    p.set_defaults(func=cmd_eigen)

    p = sub.add_parser("mode", help="evaluate one singular/dual mode")
    p.add_argument("--family", choices=("lame", "stokes"), required=True)
    p.add_argument("--kind", choices=("primal", "dual"), default="primal")
    p.add_argument("--index", type=int, default=1)
    p.add_argument("--omega", type=float, required=True)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--at", required=True, metavar="r,theta")
    _add_common(p)
    p.set_defaults(func=cmd_mode)

    p = sub.add_parser("gamma", help="angular normalizer")
    p.add_argument("--family", choices=("lame", "stokes"), required=True)
    p.add_argument("--index", type=int, default=1)
    p.add_argument("--omega", type=float, required=True)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--eps-grid", default=None, metavar="lo,hi,n")
    _add_common(p)
    p.set_defaults(func=cmd_gamma)

    p = sub.add_parser("identity-check",
                       help="raw vs closed-form angular integrand")
    p.add_argument("--index", type=int, default=1)
    p.add_argument("--omega", type=float, required=True)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--eps-grid", default=None, metavar="lo,hi,n")
    _add_common(p)
    p.set_defaults(func=cmd_identity_check)

    p = sub.add_parser("solve", help="mixed FEM solve from a config")
    p.add_argument("--eps", type=float, required=True,
                   help="penalty parameter (0 for the Stokes limit)")
    _add_common(p, config=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("extract", help="coefficient extraction from a config")
    p.add_argument("--family", choices=("penalized", "stokes"), required=True)
    p.add_argument("--eps", type=float, default=1e-3)
    _add_common(p, config=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("sweep", help="eps sweep against the Stokes reference")
    _add_common(p, config=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("manufactured", help="manufactured recovery study")
    _add_common(p, config=True)
    p.set_defaults(func=cmd_manufactured)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
