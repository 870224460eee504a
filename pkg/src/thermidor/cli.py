"""Command-line entry point.

    thermidor run <config>
    thermidor converge-space <config>
    thermidor converge-time <config>
    thermidor mms-check <config>

Output goes to ``[output] dir`` of the config unless the environment
variable ``THERMIDOR_OUT`` is set. Exit codes: 0 success, 2 configuration
error, 3 solver failure, 4 quadrature accuracy failure (including a failed
mms-check), 1 anything else raised by the package.
"""

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from .errors import AccuracyError, ConfigError, ThermidorError
from .io import parse_config, write_eoc_csv, write_fields_vtk
from .mesh import build_structured_mesh
from .scheme import Discretization, run_simulation
from .verification import (DecoupledCase, coupled_mms_case, convergence_study,
                           exact_decoupled_case, mms_residuals)

MMS_TOLERANCE = 1e-8


def _out_dir(cfg):
    d = Path(os.environ.get("THERMIDOR_OUT") or cfg.out_dir)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ThermidorError(f"cannot create output directory {str(d)!r}: {exc.strerror}")
    return d


def _study_case(cfg):
    p = cfg.params
    if cfg.initial.preset == "mms":
        return coupled_mms_case(p)
    if cfg.initial.preset == "decoupled":
        if p.has_soret or p.has_dufour or np.any(p.B) or np.any(p.beta_kernel):
            raise ConfigError(
                "the decoupled study needs S = F = B = 0 and beta = 0; "
                "use preset = mms for the coupled system")
        return exact_decoupled_case(K=p.K, D=p.D, n_species=p.n_species, A=p.A)
    raise ConfigError("convergence studies need preset = decoupled or mms")


def cmd_run(cfg, out):
    mesh = build_structured_mesh(cfg.nx, cfg.ny, cfg.domain)
    disc = Discretization(cfg.params, mesh)
    sources = None
    if cfg.initial.preset == "mms":
        sources = coupled_mms_case(cfg.params).sources(disc)
    state, reports = run_simulation(disc, cfg.initial_data(), cfg.tau, cfg.t_end,
                                    sources=sources, tol=cfg.tol)
    write_fields_vtk(mesh, state, out / "fields_final.vtk")
    with open(out / "steps.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        names = sorted(reports[0].min_values) if reports else []
        w.writerow(["t"] + [f"min_{n}" for n in names] + ["iterations"])
        for r in reports:
            w.writerow([f"{r.t:.17e}"] + [f"{r.min_values[n]:.17e}" for n in names]
                       + [sum(r.iterations.values())])
    undershoot = min((r.min_undershoot for r in reports), default=0.0)
    print(f"run: {len(reports)} steps to t = {state.t:.6g} on {mesh.n_triangles} "
          f"triangles; largest undershoot {undershoot:.3e}")
    print(f"wrote {out / 'fields_final.vtk'} and {out / 'steps.csv'}")
    return 0


def _study(cfg, out, kind, name):
    case = _study_case(cfg)
    if kind == "space" and not isinstance(case, DecoupledCase):
        kind = "coupled"
    path = out / name
    try:
        table = convergence_study(kind, case, cfg.study,
                                  progress=lambda t: print(
                                      f"  level {len(t.rows)}: h = {t.rows[-1].h:.4e}, "
                                      f"tau = {t.rows[-1].tau:.4e}", flush=True))
    except ThermidorError as exc:
        partial = getattr(exc, "partial_table", None)
        if partial is not None and partial.rows:
            write_eoc_csv(partial, path)
            print(f"partial table written to {path}", file=sys.stderr)
        raise
    write_eoc_csv(table, path)
    print(table.format())
    print(f"wrote {path}")
    return 0


def cmd_converge_space(cfg, out):
    return _study(cfg, out, "space", "eoc_space.csv")


def cmd_converge_time(cfg, out):
    return _study(cfg, out, "time", "eoc_time.csv")


def cmd_mms_check(cfg, out):
    case = coupled_mms_case(cfg.params)
    rng = np.random.default_rng(cfg.seed)
    pts = rng.random((cfg.samples, 2))
    d = cfg.domain
    pts = np.column_stack([d.x0 + (d.x1 - d.x0) * pts[:, 0], d.y0 + (d.y1 - d.y0) * pts[:, 1]])
    times = rng.random(cfg.samples) * max(cfg.t_end, 1.0)
    worst = np.zeros(3)
    for x, t in zip(pts, times):
        r_theta, r_u, r_v = mms_residuals(case, x[None, :], t)
        worst = np.maximum(worst, [np.abs(r_theta).max(), np.abs(r_u).max(),
                                   np.abs(r_v).max()])
    with open(out / "mms_check.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["equation", "max_abs_residual"])
        for name, val in zip(("theta", "u", "v"), worst):
            w.writerow([name, f"{val:.17e}"])
    for name, val in zip(("theta", "u", "v"), worst):
        print(f"mms-check {name:>5s}: max residual {val:.3e} over {cfg.samples} samples")
    if worst.max() > MMS_TOLERANCE:
        raise AccuracyError(f"MMS residual {worst.max():.3e} exceeds {MMS_TOLERANCE:.0e}",
                            float(worst.max()))
    print("mms-check passed")
    return 0


COMMANDS = {
    "run": cmd_run,
    "converge-space": cmd_converge_space,
    "converge-time": cmd_converge_time,
    "mms-check": cmd_mms_check,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="thermidor",
        description="Mollified thermo-diffusion with colloid coagulation and deposition.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "run": "simulate to t_end and write final fields (VTK) and step log",
        "converge-space": "spatial EOC study (tau proportional to h^2)",
        "converge-time": "temporal EOC study on a fixed fine mesh",
        "mms-check": "residual balance of the manufactured solution",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("config", help="INI configuration file")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        cfg = parse_config(args.config)
        out = _out_dir(cfg)
        return COMMANDS[args.command](cfg, out)
    except ThermidorError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
