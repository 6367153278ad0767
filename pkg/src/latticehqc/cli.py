"""Command line interface: ``latticehqc <subcommand> [options]``."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .cell import chi_closed_form, homogenize_finite_range, solve_cell_finite_range
from .errors import LatticeError
from .experiments import (EXPERIMENTS, apply_overrides, build_model_1d, default_config,
                          fit_slope, load_config, read_csv, run_experiment, write_csv)
from .hqc import choose_sampling, reconstruct, solve_hqc, uniform_mesh
from .lattice2d import case2_bonds, checkerboard_bonds, homogenize_2d, solve_cell_2d
from .model import solve_full


def _floats(text):
    return tuple(float(x) for x in text.replace(",", " ").split())


def _ints(text):
    return tuple(int(x) for x in text.replace(",", " ").split())


def _common(p):
    p.add_argument("--config", help="INI file with an [experiment] section")
    p.add_argument("--n", type=_ints, help="lattice size(s), comma separated")
    p.add_argument("--mesh-list", type=_ints, help="numbers of macro elements (1D) or nodes per side (2D)")
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--load-mode", choices=("exact", "sampled"))
    p.add_argument("--out", help="output directory")


def _config(args, exp_id):
    cfg = load_config(args.config, exp_id) if args.config else default_config(exp_id)
    kw = dict(n_list=args.n, k_list=args.mesh_list, seed=args.seed, tol=args.tol,
              load_mode=args.load_mode, out=args.out)
    if kw["n_list"] is not None and kw["k_list"] is None:
        # keep only default meshes that fit the requested lattice
        kw["k_list"] = tuple(k for k in cfg.k_list if all(n % k == 0 and n // k >= cfg.p
                                                          for n in kw["n_list"]))
    return apply_overrides(cfg, **kw)


def _model_from(args):
    cfg = _config(args, args.experiment)
    N = cfg.n_list[0]
    return cfg, build_model_1d(cfg.potential, cfg.values, N, cfg.R, cfg.amplitude, cfg.p)


def cmd_solve_full(args):
    cfg, model = _model_from(args)
    u, info = solve_full(model, newton_tol=cfg.tol, return_info=True)
    X = model.grid.sites
    path = write_csv(os.path.join(cfg.out, "solution_full.csv"),
                     [{"i": i + 1, "X_i": float(X[i]), "u_full": float(u.values[i])}
                      for i in range(model.N)])
    print(f"N={model.N} newton iterations {info.iterations} residual {info.residual:.3e}")
    print(f"wrote {path}")


def cmd_solve_hqc(args):
    cfg, model = _model_from(args)
    K = cfg.k_list[0] if args.mesh_list else max(k for k in cfg.k_list if model.N // k >= cfg.p)
    mesh = uniform_mesh(model.N, K)
    sol = solve_hqc(model, mesh, choose_sampling(mesh, model.p), tol=cfg.tol,
                    load_mode=cfg.load_mode)
    uc = reconstruct(sol).values
    u = solve_full(model, newton_tol=cfg.tol).values
    strain = np.repeat(sol.strain, mesh.sizes)
    X = model.grid.sites
    rows = [{"i": i + 1, "X_i": float(X[i]), "u_H": float(sol.values[i]), "u_Hc": float(uc[i]),
             "u_full": float(u[i]), "strain": float(strain[i])} for i in range(model.N)]
    path = write_csv(os.path.join(cfg.out, f"solution_hqc_K{K}.csv"), rows)
    print(f"N={model.N} K={K} macro iterations {sol.iterations} residual {sol.residual:.3e}")
    print(f"wrote {path}")


def cmd_cell(args):
    psi = np.array(_floats(args.values))
    if args.R > 1:
        psi_r = psi.reshape(args.R, -1)
        chi = solve_cell_finite_range(psi_r)
    else:
        psi_r = psi[None, :]
        chi = chi_closed_form(psi) if args.closed_form else solve_cell_finite_range(psi_r)
    print("chi:", " ".join(f"{c:.15g}" for c in chi))
    print(f"psi0: {homogenize_finite_range(psi_r, chi):.15g}")
    if args.out:
        rows = [{"i": 1, "j": j + 1, "value": float(c)} for j, c in enumerate(chi)]
        print(f"wrote {write_csv(os.path.join(args.out, 'chi.csv'), rows)}")


def cmd_homogenize(args):
    if args.case2d:
        bonds = checkerboard_bonds(*args.k) if args.case2d == 1 else case2_bonds()
        cell = solve_cell_2d(bonds, args.convention)
        tensor = homogenize_2d(bonds, cell, args.convention)
        for a in range(2):
            for b in range(2):
                print(f"psi0_{a + 1}{b + 1} = {tensor.psi0[a, b]:.15g} * I")
        if args.out:
            rows = [{"i": a + 1, "j": b + 1, "value": float(tensor.psi0[a, b])}
                    for a in range(2) for b in range(2)]
            print(f"wrote {write_csv(os.path.join(args.out, 'psi0_2d.csv'), rows)}")
        return
    psi = np.array(_floats(args.values)).reshape(args.R, -1)
    chi = solve_cell_finite_range(psi)
    print(f"psi0: {homogenize_finite_range(psi, chi):.15g}")


def cmd_exp(args):
    cfg = _config(args, args.name)
    report = run_experiment(cfg, save=True)
    print(report.summary())
    print(f"results in {cfg.out}")


def cmd_report(args):
    path = os.path.join(args.dir, "errors.csv")
    rows = read_csv(path)
    if not rows:
        print(f"{path}: no rows")
        return
    if "C8" in rows[0]:
        for r in rows:
            print(f"{r['variant']:<10s} p={r['p']:<3d} C8={r['C8']:.4f}")
        return
    columns = [c for c in rows[0] if c.startswith(("l2_", "h1_"))]
    for N in sorted({r["N"] for r in rows}):
        sub = [r for r in rows if r["N"] == N]
        H = np.array([r["H"] for r in sub])
        for c in columns:
            try:
                s = fit_slope(H, np.array([r[c] for r in sub]))
            except ValueError as exc:
                print(f"N={N:<6d} {c:<12s} no fit ({exc})")
                continue
            print(f"N={N:<6d} {c:<12s} slope {s.slope:7.4f}  plateau {s.plateau_level:.4e} "
                  f"({len(s.plateau)} pts)")


def build_parser():
    parser = argparse.ArgumentParser(prog="latticehqc",
                                     description="Lattice statics and homogenized QC experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn, helptext in (("solve-full", cmd_solve_full, "full lattice solve of a 1D chain"),
                               ("solve-hqc", cmd_solve_hqc, "HQC solve of a 1D chain")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--experiment", default="linear1d", choices=("linear1d", "nonlinear1d"),
                       help="which chain to build (defaults of that experiment)")
        _common(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("cell", help="1D cell problem for one fast period")
    p.add_argument("values", help="bond moduli, R*p numbers, range-major")
    p.add_argument("--R", type=int, default=1)
    p.add_argument("--closed-form", action="store_true", help="use the closed form (R=1)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_cell)

    p = sub.add_parser("homogenize", help="homogenized modulus or 2D tensors")
    p.add_argument("values", nargs="?", default="", help="bond moduli, R*p numbers")
    p.add_argument("--R", type=int, default=1)
    p.add_argument("--case2d", type=int, choices=(1, 2))
    p.add_argument("--k", type=float, nargs=3, default=(1.0, 2.0, 0.25), metavar=("K1", "K2", "K3"))
    p.add_argument("--convention", choices=("bond", "model"), default="bond")
    p.add_argument("--out")
    p.set_defaults(func=cmd_homogenize)

    p = sub.add_parser("exp", help="run an experiment sweep")
    p.add_argument("name", choices=EXPERIMENTS)
    _common(p)
    p.set_defaults(func=cmd_exp)

    p = sub.add_parser("report", help="refit slopes from a results directory")
    p.add_argument("dir")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (LatticeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
