"""Command line driver: ``perfhomog mesh|cell|sweep|probe --config FILE --out DIR``.

Exit codes: 0 success, 2 invalid configuration or geometry, 3 solver failure,
4 a measured property missed its threshold.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import cell_problem as cp
from . import pipeline as pl
from . import probe as pb
from . import report
from .config import RunConfig, load_config
from .errors import (
    ConfigError,
    EllipticityError,
    GeometryError,
    GridTooCoarse,
    LookupFailure,
    NonConvergence,
    ParameterError,
    PerfHomogError,
    QuadratureError,
    RankDeficiency,
    SingularPencil,
    SymmetryError,
)
from .geometry import DomainSpec, mesh_perforated_domain, mesh_unit_cell, write_mesh

log = logging.getLogger("perfhomog")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_ACCEPTANCE = 0, 2, 3, 4


def _write(path: Path, text: str) -> None:
    path.write_text(text)
    log.info("wrote %s", path)


def cmd_mesh(cfg: RunConfig, out: Path) -> int:
    cell_mesh = mesh_unit_cell(cfg.cell, cfg.cell_h)
    write_mesh(cell_mesh, out / "cell_mesh.txt")
    if cfg.has_sweep:
        for k, eps in enumerate(cfg.epsilons):
            mesh = mesh_perforated_domain(cfg.domain, cfg.cell, eps, cfg.h_over_eps * eps)
            write_mesh(mesh, out / f"domain_mesh_{k}.txt")
    return EXIT_OK


def cmd_cell(cfg: RunConfig, out: Path) -> int:
    cell_mesh = mesh_unit_cell(cfg.cell, cfg.cell_h)
    A = cfg.tensor
    chi, that = cp.homogenize(cell_mesh, A, cfg.cell_tol)
    chi.write_csv(out / "correctors.csv")
    that.to_csv(out / "effective_tensor.csv")
    write_mesh(cell_mesh, out / "cell_mesh.txt")
    lines = [f"cell mesh vertices: {cell_mesh.n_vertices}", f"cell mesh h: {cfg.cell_h:.17g}"]
    status = EXIT_OK
    try:
        rep = cp.verify_effective(that, atol=max(1e-8, 10 * cfg.cell_tol), reference=A)
        lines += [f"kappa1_hat: {rep.kappa1:.17g}", f"kappa2_hat: {rep.kappa2:.17g}",
                  f"symmetry_defect: {rep.symmetry_defect:.3e}",
                  f"kappa1_hat <= kappa1: {rep.softer_than}", "status: ok"]
    except (SymmetryError, EllipticityError) as exc:
        lines += [f"status: failed ({exc})"]
        status = EXIT_ACCEPTANCE
    _write(out / "verification.txt", "\n".join(lines) + "\n")
    return status


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    scfg = pl.SweepConfig(cell=cfg.cell, A=cfg.tensor, epsilons=cfg.epsilons, h_over_eps=cfg.h_over_eps,
                          M=cfg.M, domain=cfg.domain, tol=cfg.tol, cell_tol=cfg.cell_tol,
                          grid_ratio=cfg.grid_ratio)
    rec = pl.convergence_sweep(scfg, progress=lambda r: log.info("eps=%g error=%.6g", r.eps, r.h1_error))
    rec.to_csv(out / "sweep.csv")
    report.sweep_svg(rec, out / "sweep.svg")
    summary = [f"status: {rec.status}", f"slope: {rec.slope:.6g}", f"intercept: {rec.intercept:.6g}",
               f"strictly_decreasing: {rec.strictly_decreasing()}", f"threshold: {cfg.slope_threshold:g}"]
    _write(out / "sweep_summary.txt", "\n".join(summary) + "\n")
    if rec.status == "undefined":
        log.warning("single epsilon: slope undefined")
        return EXIT_OK
    if rec.status == "degenerate":
        log.warning("errors at the solver floor: slope fit degenerate")
        return EXIT_OK
    return EXIT_OK if rec.slope >= cfg.slope_threshold else EXIT_ACCEPTANCE


def cmd_probe(cfg: RunConfig, out: Path) -> int:
    p = cfg.probe
    A = cfg.tensor
    M = cfg.M
    domain = DomainSpec.ball(p.x0, p.R)
    reports, cacc_rows = [], []
    for eps in p.epsilons:
        mesh = mesh_perforated_domain(domain, cfg.cell, eps, p.h_over_eps * eps)
        u = pl.solve_eps_problem(mesh, A, eps, lambda x: np.asarray(x) @ M.T, cfg.tol)
        rep = pb.lipschitz_ratio(u, p.x0, p.R, eps, mesh, theta=p.theta)
        reports.append(rep)
        r_c = p.cacc_radius if p.cacc_radius else p.R / 8
        for c in p.centers:
            res = pb.caccioppoli_check(u, c, r_c, mesh)
            cacc_rows.append((eps, c[0], c[1], r_c, res.lhs, res.rhs, res.ratio))
        log.info("eps=%g sup ratio=%.6g", eps, rep.sup_ratio)
    report.write_probe_csv(reports, out / "probe.csv")
    with open(out / "caccioppoli.csv", "w") as fh:
        fh.write("epsilon,cx,cy,r,lhs,rhs,ratio\n")
        for row in cacc_rows:
            fh.write(",".join(report._g(v) for v in row) + "\n")
    report.probe_svg(reports, out / "probe.svg")
    sups = [r.sup_ratio for r in reports]
    drift = max(abs(b / a - 1.0) for a, b in zip(sups, sups[1:])) if len(sups) > 1 else 0.0
    _write(out / "probe_summary.txt",
           "\n".join([f"sup_ratios: {' '.join(f'{s:.6g}' for s in sups)}", f"drift: {drift:.6g}",
                      f"threshold: {p.drift_threshold:g}"]) + "\n")
    return EXIT_OK if drift <= p.drift_threshold else EXIT_ACCEPTANCE


COMMANDS = {"mesh": cmd_mesh, "cell": cmd_cell, "sweep": cmd_sweep, "probe": cmd_probe}
_CONFIG_ERRORS = (ConfigError, ParameterError, GeometryError, GridTooCoarse)
_SOLVER_ERRORS = (NonConvergence, SingularPencil, QuadratureError, LookupFailure, RankDeficiency)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="perfhomog", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="TOML run configuration")
    ap.add_argument("--out", required=True, help="output directory (created if missing)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.command == "sweep" and not cfg.has_sweep:
            raise ConfigError("missing required section [sweep]", line=1, path=args.config)
        if args.command == "probe" and not cfg.has_probe:
            raise ConfigError("missing required section [probe]", line=1, path=args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _SOLVER_ERRORS as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (SymmetryError, EllipticityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PerfHomogError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
