"""Experiment drivers: full solves, HQC sweeps, error tables and slope fits."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from ..cell import homogenize_finite_range, solve_cell_finite_range
from ..errors import LatticeError
from ..grid import h1, lq
from ..hqc import choose_sampling, modeling_error, naive_qc, reconstruct, solve_hqc, uniform_mesh
from ..lattice2d import (Grid2D, LatticeModel2D, TriangleMesh2D, case2_bonds, checkerboard_bonds,
                         force_case2d, h1_2d, hqc2d_solve, l2_2d, reconstruct_2d, solve_full_2d)
from ..model import AtomisticModel, Harmonic, LennardJones, linearize, solve_full
from .analysis import SlopeFit, av, fit_slope
from .config import ExperimentConfig
from .io import write_csv, write_text

__all__ = [
    "ErrorReport",
    "build_model_1d",
    "sin_force",
    "run_linear_1d",
    "run_nonlinear_1d",
    "run_p_study",
    "run_2d",
    "run_experiment",
]


@dataclass
class ErrorReport:
    """Error table of a sweep plus fitted slopes keyed by ``(N, column)``."""

    experiment: str
    rows: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def column(self, name, N=None):
        rows = [r for r in self.rows if N is None or r["N"] == N]
        return np.array([r["H"] for r in rows]), np.array([r[name] for r in rows])

    def fit(self, name, N):
        H, e = self.column(name, N)
        res = fit_slope(H, e)
        self.slopes[(N, name)] = res
        return res

    def summary(self):
        lines = [f"experiment {self.experiment}"]
        for k, v in sorted(self.meta.items()):
            lines.append(f"  {k}: {v}")
        for (N, name), s in sorted(self.slopes.items()):
            lines.append(
                f"  N={N:<6d} {name:<12s} slope {s.slope:7.4f}  window {s.window:2d}  "
                f"rms {s.residual:.2e}  plateau {s.plateau_level:.4e} ({len(s.plateau)} pts)"
            )
        return "\n".join(lines)

    def save(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        paths = [write_csv(os.path.join(out_dir, "errors.csv"), self.rows)]
        slope_rows = [
            {"N": N, "quantity": name, "slope": s.slope, "intercept": s.intercept,
             "rms": s.residual, "window": s.window, "plateau_points": len(s.plateau),
             "plateau_level": s.plateau_level}
            for (N, name), s in sorted(self.slopes.items())
        ]
        if slope_rows:
            paths.append(write_csv(os.path.join(out_dir, "slopes.csv"), slope_rows))
        paths.append(write_text(os.path.join(out_dir, "summary.txt"), self.summary()))
        return paths


# -- 1D -------------------------------------------------------------------


def storage_classes(values):
    """Reorder per-``(i mod p)`` values to 0-based storage classes ``(i - 1) mod p``."""
    values = np.asarray(values, dtype=float)
    return np.roll(values, -1)


def sin_force(N, amplitude=1.0):
    X = np.arange(1, N + 1) / N
    f = amplitude * np.sin(1.0 + 2.0 * np.pi * X)
    return f - f.mean()


def build_model_1d(potential, values, N, R=3, amplitude=1.0, p=None):
    """Chain with one parameter per residue class; ``values`` keyed by ``i mod p``."""
    cols = storage_classes(values)
    p = len(cols) if p is None else p
    if potential == "harmonic":
        pots = [Harmonic(cols * 3.0 ** (1 - r), float(r)) for r in range(1, R + 1)]
    elif potential == "lj":
        pots = [LennardJones(cols) for _ in range(R)]
    else:
        raise ValueError(f"unknown potential {potential!r}")
    return AtomisticModel(N, pots, sin_force(N, amplitude), p=p)


def _fast_moduli(model):
    """Linear bond moduli about the reference state, one fast period, shape (R, p)."""
    lin = linearize(model)
    return lin.psi_r[:, : model.p]


def _emod(model, mesh, sampling):
    """Modeling error for a periodic linear chain.

    The material does not depend on the slow variable, so the pointwise and the
    collocated homogenized moduli are built from the same fast rows: each
    collocation atom sees the period starting at its own residue class.
    """
    psi_r = _fast_moduli(model)
    chi = solve_cell_finite_range(psi_r)
    psi0 = homogenize_finite_range(psi_r, chi)
    coll = np.array([s.coll - 1 for s in sampling])
    rows = np.stack([np.roll(psi_r, -(c % model.p), axis=1) for c in coll])
    psi0_coll = homogenize_finite_range(rows, solve_cell_finite_range(rows))
    return modeling_error(np.full(model.N, psi0), psi0_coll, model.f, mesh)


def sweep_1d(model, ks, load_mode="exact", tol=1e-10, with_emod=False, naive=True):
    """HQC (and naive QC) errors against the full solution for every mesh in ``ks``."""
    u, info = solve_full(model, newton_tol=tol, return_info=True)
    u = u.values
    eps = model.epsilon
    u_av = av(u)
    rows = []
    for K in ks:
        if model.N // K < model.p:
            continue
        mesh = uniform_mesh(model.N, K)
        sampling = choose_sampling(mesh, model.p)
        sol = solve_hqc(model, mesh, sampling, tol=tol, load_mode=load_mode)
        uc = reconstruct(sol).values
        uH = sol.values
        row = {
            "N": model.N, "K": K, "H": 1.0 / K,
            "l2_uH": lq(uH - u), "h1_uH": h1(uH - u, eps),
            "l2_uc": lq(uc - u), "h1_uc": h1(uc - u, eps),
            "newton_hqc": sol.iterations,
        }
        if naive:
            q = naive_qc(model, mesh, sampling, tol=tol, load_mode=load_mode).values
            row.update({
                "l2_qc_u": lq(q - u), "h1_qc_u": h1(q - u, eps), "linf_qc_u": lq(q - u, np.inf),
                "l2_qc_av": lq(q - u_av), "h1_qc_av": h1(q - u_av, eps),
                "linf_qc_av": lq(q - u_av, np.inf),
            })
        if with_emod:
            e = _emod(model, mesh, sampling)
            row.update({"emod_l2": e.l2, "emod_h1": e.h1,
                        "emod_linf": float(np.max(np.abs(e.e_mod.values)))})
        rows.append(row)
    return rows, info


def _run_1d(cfg: ExperimentConfig, with_emod):
    report = ErrorReport(cfg.id, meta={"potential": cfg.potential, "values": cfg.values,
                                       "R": cfg.R, "p": cfg.p, "amplitude": cfg.amplitude,
                                       "load_mode": cfg.load_mode})
    for N in cfg.n_list:
        model = build_model_1d(cfg.potential, cfg.values, N, cfg.R, cfg.amplitude, cfg.p)
        rows, info = sweep_1d(model, cfg.k_for(N), cfg.load_mode, cfg.tol, with_emod)
        report.rows.extend(rows)
        report.meta[f"newton_full_N{N}"] = info.iterations
        for name in ("l2_uH", "h1_uc", "l2_uc"):
            try:
                report.fit(name, N)
            except ValueError:
                pass
    return report


def run_linear_1d(cfg: ExperimentConfig) -> ErrorReport:
    return _run_1d(cfg, with_emod=True)


def run_nonlinear_1d(cfg: ExperimentConfig) -> ErrorReport:
    return _run_1d(cfg, with_emod=False)


def draw_values(variant, p, seed):
    """Per-residue-class parameters for the p-study, reproducible per (seed, variant, p)."""
    rng = np.random.default_rng([seed, 0 if variant == "linear" else 1, p])
    if variant == "linear":
        return rng.uniform(1.0, 2.0, size=p)
    return rng.uniform(1.0, 1.1, size=p)


def run_p_study(cfg: ExperimentConfig) -> ErrorReport:
    """``C8 = max_H |u^{H,c} - u|_{H1} / H`` for random materials of several periods."""
    report = ErrorReport("pstudy", meta={"seed": cfg.seed, "N": cfg.n_list[0]})
    N = cfg.n_list[0]
    for variant in cfg.variants:
        potential, amplitude = ("harmonic", 1.0) if variant == "linear" else ("lj", 50.0)
        for p in cfg.p_list:
            values = draw_values(variant, p, cfg.seed)
            model = build_model_1d(potential, values, N, cfg.R, amplitude, p)
            status = "ok"
            try:
                rows, _ = sweep_1d(model, cfg.k_for(N), cfg.load_mode, cfg.tol, naive=False)
                c8 = max(r["h1_uc"] / r["H"] for r in rows)
            except LatticeError as exc:
                # e.g. no equilibrium: the load exceeds the tensile strength of the draw
                c8, status = float("nan"), f"{type(exc).__name__}: {exc}"
            report.rows.append({"variant": variant, "p": p, "N": N, "C8": c8, "status": status,
                                "values": " ".join(f"{v:.6f}" for v in values)})
    return report


def c8_spread(report: ErrorReport, variant):
    """``max C8 / min C8`` over the periods of one variant; NaN if any run failed."""
    c8 = np.array([r["C8"] for r in report.rows if r["variant"] == variant], dtype=float)
    if c8.size == 0 or np.any(~np.isfinite(c8)):
        return float("nan")
    return float(c8.max() / c8.min())


# -- 2D -------------------------------------------------------------------


def run_2d(cfg: ExperimentConfig, case=None) -> ErrorReport:
    case = case if case is not None else int(cfg.id[-1])
    bonds = checkerboard_bonds(1.0, 2.0, 0.25) if case == 1 else case2_bonds()
    report = ErrorReport(cfg.id, meta={"case": case, "load_mode": cfg.load_mode})
    for N in cfg.n_list:
        grid = Grid2D(N, N)
        model = LatticeModel2D(grid, bonds)
        f = force_case2d(grid, cfg.amplitude)
        u, its = solve_full_2d(model, f, tol=min(cfg.tol, 1e-12), return_info=True)
        u = u.values
        report.meta[f"cg_iterations_N{N}"] = its
        for t in cfg.k_for(N):
            if N // t < max(bonds.p):
                continue
            mesh = TriangleMesh2D(N, t)
            sol = hqc2d_solve(model, f, mesh, load_mode=cfg.load_mode)
            uH = sol.values
            uc = reconstruct_2d(sol).values
            report.rows.append({
                "N": N, "t": t, "H": 1.0 / t,
                "l2_uH": l2_2d(uH - u), "h1_uH": h1_2d(uH - u, grid.epsilon),
                "l2_uc": l2_2d(uc - u), "h1_uc": h1_2d(uc - u, grid.epsilon),
            })
        for name in ("l2_uH", "h1_uc"):
            try:
                report.fit(name, N)
            except ValueError:
                pass
    return report


def run_experiment(cfg: ExperimentConfig, save=True) -> ErrorReport:
    if cfg.id == "linear1d":
        report = run_linear_1d(cfg)
    elif cfg.id == "nonlinear1d":
        report = run_nonlinear_1d(cfg)
    elif cfg.id == "pstudy":
        report = run_p_study(cfg)
        for variant in cfg.variants:
            report.meta[f"C8_spread_{variant}"] = c8_spread(report, variant)
    else:
        report = run_2d(cfg)
    report.meta["seed"] = cfg.seed
    if save:
        report.save(cfg.out)
    return report
