"""Command line driver: experiment orchestration and report emission.

Each subcommand runs one property suite on the configured metric and
grid, writes CSV/JSON artifacts plus rendered figures into the output
directory, and prints one pass/fail line per check.  Exit codes: 0 all
checks pass, 1 at least one check fails, 2 invalid configuration,
3 numerical failure (trapped ray, solver divergence, bad flux).
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys

import numpy as np

from . import fixtures, plots
from .config import TOLERANCES, ConfigError, ExperimentConfig, load_config
from .geometry import OutOfDomain, TrappedRay, check_simplicity, make_metric
from .grid import DiskGrid
from .reconstruct import (
    reconstruct_from_data,
    construct_first_integral,
    transport_leakage,
    verify_first_integral,
)
from .reporting import CheckResult, write_check_report, write_csv, write_fan_csv, write_json, write_tensor_csv
from .smfield import (
    HarmonicComponent,
    apply_X,
    apply_Xpm,
    apply_eta,
    fiber_degree_energy,
    fiber_fourier,
    field_from_function,
    harmonic_project,
    inner_product_SM,
    norm_SM,
    santalo_check,
)
from .tensors import (
    IncompatibleFlux,
    SolverDivergence,
    boundary_flux,
    boundary_phi,
    ell_m,
    inner_product_M,
    norm_M,
    solenoidal_decompose,
    solenoidal_extension_m1,
    sym_derivative,
    tensor_from_functions,
    weak_divergence_residual,
)
from .transform import (
    adjoint_Im_star,
    backproject_Istar,
    forward_I,
    forward_Im,
    inner_product_mu,
    norm_mu,
)

TWO_PI_SQ = 2.0 * math.pi * math.pi


def _setup(cfg: ExperimentConfig):
    grid = DiskGrid(cfg.nx, cfg.ntheta)
    metric = make_metric(cfg.metric)
    return grid, metric


def _euclid():
    return make_metric(kind="euclidean")


def _fan_kwargs(cfg: ExperimentConfig) -> dict:
    return {
        "nbeta": cfg.nbeta,
        "nalpha": cfg.nalpha,
        "step": cfg.ray_step,
        "workers": cfg.workers,
    }


# ---------------------------------------------------------------------------
# subcommands


def cmd_simplicity(cfg: ExperimentConfig, args) -> tuple[list, dict]:
    _, metric = _setup(cfg)
    rep = check_simplicity(metric, nbeta=cfg.nbeta, nalpha=cfg.nalpha)
    checks = [
        CheckResult.flag("non_trapping", rep.non_trapping),
        CheckResult.flag("no_conjugate_points", rep.no_conjugate_points),
        CheckResult.flag("convex_boundary", rep.convex_boundary),
    ]
    extra = {
        "min_jacobi": rep.min_jacobi,
        "max_exit_time": rep.max_tau,
        "witnesses": rep.witnesses,
        "metric": repr(metric),
    }
    plots.save_rays(
        os.path.join(cfg.out_dir, "simplicity_rays.png"), metric, title="traced rays"
    )
    return checks, extra


def cmd_santalo(cfg: ExperimentConfig, args) -> tuple[list, dict]:
    grid, metric = _setup(cfg)
    fan = _fan_kwargs(cfg)

    met_e = _euclid()
    ones = field_from_function(grid, met_e, lambda x, y, th: np.ones_like(x + th))
    flat = santalo_check(met_e, ones, cfg.nbeta, cfg.nalpha, cfg.ray_step)
    tol = TOLERANCES["santalo_euclid"]
    checks = [
        CheckResult.leq(
            "euclid_ones_gap", flat["rel_err"], tol, lhs=flat["lhs"], rhs=flat["rhs"]
        ),
        CheckResult.leq(
            "euclid_ones_vs_closed_form",
            abs(flat["lhs"] - TWO_PI_SQ) / TWO_PI_SQ,
            tol,
            target=TWO_PI_SQ,
        ),
    ]

    f = fixtures.random_smooth_sm(grid, metric, cfg.seed)
    got = santalo_check(metric, f, cfg.nbeta, cfg.nalpha, cfg.ray_step)
    tol_m = TOLERANCES["santalo_bump" if cfg.metric.kind == "bump" else "santalo_euclid"]
    checks.append(
        CheckResult.leq(
            "metric_random_gap", got["rel_err"], tol_m, lhs=got["lhs"], rhs=got["rhs"]
        )
    )

    phi = forward_I(metric, f, **fan)
    write_fan_csv(os.path.join(cfg.out_dir, "santalo_fan.csv"), phi)
    plots.save_fan(
        os.path.join(cfg.out_dir, "santalo_fan.png"), phi, title="ray integrals"
    )
    return checks, {"euclid": flat, "metric": got}


def cmd_adjoint_check(cfg: ExperimentConfig, args) -> tuple[list, dict]:
    grid, metric = _setup(cfg)
    fan = _fan_kwargs(cfg)
    tol = TOLERANCES["adjointness"]

    errs = []
    for k in range(5):
        f = fixtures.random_smooth_sm(grid, metric, cfg.seed + 17 * k)
        phi = fixtures.random_fan(metric, cfg.nbeta, cfg.nalpha, cfg.seed + 17 * k + 5)
        lhs = inner_product_mu(forward_I(metric, f, **fan), phi)
        pb = backproject_Istar(metric, phi, grid, step=cfg.ray_step, workers=cfg.workers)
        rhs = inner_product_SM(metric, f, pb)
        errs.append(abs(lhs - rhs) / (norm_SM(metric, f) * norm_mu(phi)))
    checks = [CheckResult.leq("pairing_gap_worst_of_5", max(errs), tol)]

    for m in (1, 2):
        u = fixtures.random_smooth_tensor(grid, metric, m, cfg.seed + 29 * m)
        phi = fixtures.random_fan(metric, cfg.nbeta, cfg.nalpha, cfg.seed + 31 * m)
        lhs = inner_product_M(
            adjoint_Im_star(metric, phi, m, grid, step=cfg.ray_step, workers=cfg.workers),
            u,
        )
        rhs = inner_product_mu(phi, forward_Im(metric, u, **fan))
        checks.append(
            CheckResult.leq(
                f"moment_duality_m{m}", abs(lhs - rhs) / (norm_M(u) * norm_mu(phi)), tol
            )
        )

    write_csv(
        os.path.join(cfg.out_dir, "adjoint_pairs.csv"),
        ["pair", "gap"],
        [(k, e) for k, e in enumerate(errs)],
    )
    return checks, {"pair_gaps": errs}


def cmd_kernel_check(cfg: ExperimentConfig, args) -> tuple[list, dict]:
    grid, metric = _setup(cfg)
    fan = _fan_kwargs(cfg)
    tol = TOLERANCES["kernel"]
    checks = []
    worst = (0.0, None)
    for m in (1, 2):
        for i, p in enumerate(fixtures.kernel_potentials(grid, metric, m)):
            dp = sym_derivative(p)
            phi = forward_Im(metric, dp, **fan)
            sup = float(np.abs(phi.values).max())
            scale = float(np.abs(dp.comps[grid.mask]).max())
            ratio = sup / scale
            checks.append(CheckResult.leq(f"potential_image_m{m}_f{i}", ratio, tol))
            if ratio > worst[0]:
                worst = (ratio, phi)
    if worst[1] is not None:
        write_fan_csv(os.path.join(cfg.out_dir, "kernel_worst_fan.csv"), worst[1])
        plots.save_fan(
            os.path.join(cfg.out_dir, "kernel_worst_fan.png"),
            worst[1],
            title="largest potential image",
        )
    return checks, {}


def cmd_decompose(cfg: ExperimentConfig, args) -> tuple[list, dict]:
    grid, metric = _setup(cfg)
    checks = []
    extra = {}
    for rank in (1, 2):
        v, p_true = fixtures.decompose_case(grid, metric, rank)
        res = solenoidal_decompose(v, tol=cfg.cg_tol, max_iter=cfg.max_iter)
        dp_hat = p_true.copy()
        dp_hat.comps = res.p.comps - p_true.comps
        checks.append(
            CheckResult.leq(
                f"potential_error_rank{rank}",
                norm_M(dp_hat) / norm_M(p_true),
                TOLERANCES["decomposition_p"],
            )
        )
        checks.append(
            CheckResult.leq(
                f"divergence_rank{rank}",
                res.residuals["div_norm"],
                TOLERANCES["decomposition_div"],
            )
        )
        again = solenoidal_decompose(res.v_s, tol=cfg.cg_tol, max_iter=cfg.max_iter)
        checks.append(
            CheckResult.leq(
                f"idempotence_rank{rank}",
                norm_M(again.p) / norm_M(res.v_s),
                TOLERANCES["idempotence"],
            )
        )
        extra[f"rank{rank}"] = res.residuals
        write_tensor_csv(
            os.path.join(cfg.out_dir, f"decompose_solenoidal_rank{rank}.csv"),
            res.v_s,
            grid,
        )
        write_tensor_csv(
            os.path.join(cfg.out_dir, f"decompose_potential_rank{rank}.csv"),
            res.p,
            grid,
        )
        plots.save_tensor(
            os.path.join(cfg.out_dir, f"decompose_solenoidal_rank{rank}.png"),
            res.v_s,
            grid,
            title=f"solenoidal part, rank {rank}",
        )
    return checks, extra


def cmd_extend_m1(cfg: ExperimentConfig, args) -> tuple[list, dict]:
    grid, metric = _setup(cfg)
    met_e = _euclid()
    checks = []

    # constant field: the annulus potential separates into A r + B / r
    u01 = tensor_from_functions(
        grid, met_e, 1, [lambda x, y: 0.0 * x, lambda x, y: 1.0 + 0.0 * x]
    )
    ext = solenoidal_extension_m1(u01)
    R = ext.outer_radius
    A = 1.0 / (1.0 - R * R)
    B = R * R * A
    w_exact = (A * ext.r[:, None] + B / ext.r[:, None]) * np.sin(ext.phi)[None, :]
    w_exact -= w_exact.mean()
    checks.append(
        CheckResult.leq(
            "annulus_closed_form",
            float(np.abs(ext.w - w_exact).max() / np.abs(w_exact).max()),
            TOLERANCES["extension_annulus"],
        )
    )
    checks.append(
        CheckResult.leq(
            "weak_divergence_constant",
            weak_divergence_residual(ext),
            TOLERANCES["extension_weak_div"],
        )
    )

    # tangential field: no flux, so the outside potential is trivial
    rot = fixtures.rotation_field(grid, met_e)
    ext_rot = solenoidal_extension_m1(rot)
    checks.append(
        CheckResult.leq("tangential_trivial_potential", float(np.abs(ext_rot.w).max()), 1e-6)
    )

    u3 = fixtures.extension_compat_field(grid, metric)
    ext3 = solenoidal_extension_m1(u3)
    checks.append(
        CheckResult.leq(
            "weak_divergence_smooth",
            weak_divergence_residual(ext3),
            TOLERANCES["extension_weak_div"],
        )
    )

    write_csv(
        os.path.join(cfg.out_dir, "extension_flux.csv"),
        ["phi", "flux"],
        zip(boundary_phi(ext3.flux.size), ext3.flux),
    )
    rr, pp = np.meshgrid(ext3.r, ext3.phi, indexing="ij")
    write_csv(
        os.path.join(cfg.out_dir, "extension_potential.csv"),
        ["r", "phi", "w"],
        zip(rr.ravel(), pp.ravel(), ext3.w.ravel()),
    )
    plots.save_annulus(
        os.path.join(cfg.out_dir, "extension_potential.png"),
        ext3,
        title="rim extension potential",
    )
    return checks, {"outer_radius": R, "flux_mean_removed": ext3.flux_removed_mean}


def cmd_harmonics(cfg: ExperimentConfig, args) -> tuple[list, dict]:
    grid, metric = _setup(cfg)
    met_e = _euclid()
    checks = []

    # flat closed form: raising half of the horizontal split on x1 e^{i theta}
    fe = field_from_function(grid, met_e, lambda x, y, th: x * np.exp(1j * th))
    ep = apply_eta(met_e, fe, +1)
    tgt = 0.5 * np.exp(2j * grid.theta)[None, None, :]
    err = float(np.abs(ep.values - tgt)[grid.interior4].max())
    checks.append(CheckResult.leq("flat_raising_closed_form", err, TOLERANCES["gk_eta_plus"]))

    # degree purity of the shifts on a compactly supported degree-2 field
    bump2 = field_from_function(
        grid,
        metric,
        lambda x, y, th: np.exp(-(x * x + y * y) / 0.18)
        * (1.0 - x * x - y * y) ** 2
        * np.exp(2j * th),
    )
    for sgn, lab in ((+1, "raise"), (-1, "lower")):
        e = apply_eta(metric, bump2, sgn)
        en = fiber_degree_energy(e)
        tot = float(en.sum())
        leak = (tot - float(en[2 + sgn])) / tot
        checks.append(CheckResult.leq(f"shift_purity_{lab}", leak, TOLERANCES["gk_shift"]))

    # the lowering derivative annihilates fiber-constant fields exactly
    c0 = HarmonicComponent(
        0,
        field_from_function(
            grid, metric, lambda x, y, th: np.exp(-(x * x + y * y)) + 0.0 * th
        ),
    )
    zm = apply_Xpm(metric, c0, -1)
    checks.append(
        CheckResult.leq(
            "lowering_kills_averages",
            float(np.abs(zm.field.values).max()),
            TOLERANCES["gk_lower_kills_avg"],
        )
    )

    # raising/lowering adjointness on compact degree-1 / degree-2 fields
    def w(x, y):
        return np.exp(-(x * x + y * y) / 0.15) * (1.0 - x * x - y * y) ** 3

    a1 = HarmonicComponent(
        1, field_from_function(grid, metric, lambda x, y, th: w(x, y) * np.exp(1j * th))
    )
    b2 = field_from_function(
        grid, metric, lambda x, y, th: (x + 0.3) * w(x, y) * np.exp(2j * th)
    )
    xpa = apply_Xpm(metric, a1, +1)
    xmb = apply_Xpm(metric, HarmonicComponent(2, b2), -1)
    lhs = inner_product_SM(metric, xpa.field, b2)
    rhs = inner_product_SM(metric, a1.field, xmb.field)
    rel = abs(lhs + rhs) / (norm_SM(metric, a1.field) * norm_SM(metric, b2))
    checks.append(CheckResult.leq("raise_lower_adjoint", rel, TOLERANCES["gk_adjoint"]))

    # transport of solenoidal lifts stays in high fiber degrees
    checks.append(
        CheckResult.leq(
            "transport_leakage_m1",
            transport_leakage(metric, fixtures.zsquare_pair(grid, metric), 1),
            TOLERANCES["leakage"],
        )
    )
    checks.append(
        CheckResult.leq(
            "transport_leakage_m2",
            transport_leakage(metric, fixtures.tracefree_harmonic(grid, metric), 2),
            TOLERANCES["leakage"],
        )
    )

    # fiber average of the transported lift of d(1 - r^2) is exactly -2
    dp0 = tensor_from_functions(
        grid, met_e, 1, [lambda x, y: -2.0 * x, lambda x, y: -2.0 * y]
    )
    xf = apply_X(met_e, ell_m(dp0))
    c0v = fiber_fourier(xf, kmax=1)[0]
    avg_err = float(np.abs(c0v[grid.interior4].real + 2.0).max())
    checks.append(
        CheckResult.leq("transport_average_value", avg_err, TOLERANCES["transport_average"])
    )

    en_rows = []
    for sgn, lab in ((+1, "raise"), (-1, "lower")):
        en = fiber_degree_energy(apply_eta(metric, bump2, sgn))
        for k, val in enumerate(en):
            en_rows.append((lab, k, float(val)))
    write_csv(
        os.path.join(cfg.out_dir, "harmonics_degree_energy.csv"),
        ["operator", "degree", "energy"],
        en_rows,
    )
    plots.save_degree_energy(
        os.path.join(cfg.out_dir, "harmonics_degree_energy.png"),
        {lab: fiber_degree_energy(apply_eta(metric, bump2, sgn)) for sgn, lab in ((+1, "raise"), (-1, "lower"))},
        title="fiber degree energy after shifts",
    )
    return checks, {}


def cmd_reconstruct(cfg: ExperimentConfig, args) -> tuple[list, dict]:
    grid, metric = _setup(cfg)
    fan = _fan_kwargs(cfg)
    m = args.m

    v = fixtures.random_smooth_tensor(grid, metric, m, cfg.seed)
    if m == 0:
        truth = v
    else:
        truth = solenoidal_decompose(v, tol=cfg.cg_tol, max_iter=cfg.max_iter, use_direct=True).v_s
    # data comes from the full field; its potential part must wash out
    data = forward_Im(metric, v, **fan)
    rep = reconstruct_from_data(
        metric,
        data,
        m,
        grid,
        tol=cfg.normal_tol,
        max_iter=cfg.normal_max_iter,
        step=cfg.ray_step,
        workers=cfg.workers,
    )
    diff = truth.copy()
    diff.comps = rep.solution.comps - truth.comps
    err = norm_M(diff) / norm_M(truth)
    checks = [CheckResult.leq(f"roundtrip_error_m{m}", err, TOLERANCES["roundtrip"])]

    # images of potentials carry no information; the output should be tiny
    if m >= 1:
        p = fixtures.kernel_potentials(grid, metric, m)[0]
        dp = sym_derivative(p)
        ghost = reconstruct_from_data(
            metric,
            forward_Im(metric, dp, **fan),
            m,
            grid,
            tol=cfg.normal_tol,
            max_iter=cfg.normal_max_iter,
            step=cfg.ray_step,
            workers=cfg.workers,
        )
        checks.append(
            CheckResult.leq(
                f"potential_invisibility_m{m}",
                norm_M(ghost.solution) / norm_M(dp),
                TOLERANCES["roundtrip_potential"],
            )
        )

    write_csv(
        os.path.join(cfg.out_dir, f"reconstruct_residuals_m{m}.csv"),
        ["iteration", "relative_residual"],
        [(i + 1, r) for i, r in enumerate(rep.residual_history)],
    )
    write_tensor_csv(
        os.path.join(cfg.out_dir, f"reconstruct_solution_m{m}.csv"), rep.solution, grid
    )
    write_fan_csv(os.path.join(cfg.out_dir, f"reconstruct_data_m{m}.csv"), data)
    plots.save_convergence(
        os.path.join(cfg.out_dir, f"reconstruct_convergence_m{m}.png"),
        rep.residual_history,
        title=f"normal equations, degree {m}",
    )
    plots.save_tensor(
        os.path.join(cfg.out_dir, f"reconstruct_solution_m{m}.png"),
        rep.solution,
        grid,
        title=f"recovered field, degree {m}",
    )
    extra = {
        "iterations": rep.iterations,
        "final_residual": rep.final_residual,
        "stagnated": rep.stagnated,
        "roundtrip_error": err,
    }
    return checks, extra


def cmd_first_integral(cfg: ExperimentConfig, args) -> tuple[list, dict]:
    grid, metric = _setup(cfg)
    m = args.m

    if m == 0:
        target = fixtures.gauss_scalar(grid, metric)
    elif m == 1:
        base = fixtures.rotation_envelope(grid, metric)
        target = solenoidal_decompose(
            base, tol=cfg.cg_tol, max_iter=cfg.max_iter, use_direct=True
        ).v_s
    else:
        base = fixtures.random_smooth_tensor(grid, metric, 2, cfg.seed)
        target = solenoidal_decompose(
            base, tol=cfg.cg_tol, max_iter=cfg.max_iter, use_direct=True
        ).v_s

    rep = construct_first_integral(
        metric,
        target,
        m,
        tol=cfg.normal_tol,
        max_iter=cfg.normal_max_iter,
        nbeta=cfg.nbeta,
        nalpha=cfg.nalpha,
        step=cfg.ray_step,
        workers=cfg.workers,
    )
    f = rep.solution
    checks = [
        CheckResult.leq(
            f"moment_error_m{m}", rep.moment_error, TOLERANCES["first_integral_moment"]
        ),
        CheckResult.leq(
            f"invariance_m{m}", rep.invariance_norm, TOLERANCES["first_integral_invariance"]
        ),
    ]

    en = fiber_degree_energy(f)
    tot = float(en.sum())
    if m >= 1 and tot > 0.0:
        tail = float(en[m + 2 :].sum()) / tot
        checks.append(
            CheckResult(
                f"higher_degree_tail_m{m}",
                tail,
                1e-6,
                tail > 1e-6,
                {"note": "tail energy must be present, so larger is better"},
            )
        )

    write_csv(
        os.path.join(cfg.out_dir, f"first_integral_degrees_m{m}.csv"),
        ["degree", "energy"],
        [(k, float(e)) for k, e in enumerate(en)],
    )
    write_csv(
        os.path.join(cfg.out_dir, f"first_integral_residuals_m{m}.csv"),
        ["iteration", "relative_residual"],
        [(i + 1, r) for i, r in enumerate(rep.residual_history)],
    )
    plots.save_convergence(
        os.path.join(cfg.out_dir, f"first_integral_convergence_m{m}.png"),
        rep.residual_history,
        title=f"first integral, degree {m}",
    )
    extra = dict(verify_first_integral(metric, f, target, m))
    extra.update(
        {"iterations": rep.iterations, "stagnated": rep.stagnated}
    )
    return checks, extra


def cmd_emit_fixture(cfg: ExperimentConfig, args) -> int:
    grid, metric = _setup(cfg)
    try:
        fld, prov = fixtures.build(args.name, grid, metric, cfg.seed)
    except KeyError as e:
        print(f"config error: {e.args[0]}", file=sys.stderr)
        return 2
    stem = args.name.strip().lower()
    csv_path = os.path.join(cfg.out_dir, f"fixture_{stem}.csv")
    write_tensor_csv(csv_path, fld, grid)
    manifest = {
        "provenance": prov,
        "rank": fld.rank,
        "files": [os.path.basename(csv_path)],
        "config": cfg.to_dict(),
    }
    if fld.rank >= 1:
        flux = boundary_flux(fld, 256)
        flux_path = os.path.join(cfg.out_dir, f"fixture_{stem}_flux.csv")
        cols = (
            zip(boundary_phi(256), flux)
            if fld.rank == 1
            else zip(boundary_phi(256), flux[:, 0], flux[:, 1])
        )
        header = ["phi", "flux"] if fld.rank == 1 else ["phi", "flux1", "flux2"]
        write_csv(flux_path, header, cols)
        manifest["files"].append(os.path.basename(flux_path))
    write_json(os.path.join(cfg.out_dir, f"fixture_{stem}.json"), manifest)
    plots.save_tensor(
        os.path.join(cfg.out_dir, f"fixture_{stem}.png"), fld, grid, title=args.name
    )
    print(f"wrote fixture {args.name} to {cfg.out_dir}")
    return 0


_HANDLERS = {
    "simplicity": cmd_simplicity,
    "santalo": cmd_santalo,
    "adjoint-check": cmd_adjoint_check,
    "kernel-check": cmd_kernel_check,
    "decompose": cmd_decompose,
    "extend-m1": cmd_extend_m1,
    "harmonics": cmd_harmonics,
    "reconstruct": cmd_reconstruct,
    "first-integral": cmd_first_integral,
}


# ---------------------------------------------------------------------------
# argument plumbing


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to a JSON experiment file")
    common.add_argument("--out", help="output directory for artifacts")
    common.add_argument("--seed", type=int, help="seed for randomized fixtures")
    common.add_argument("--workers", type=int, help="worker count for ray marching")
    common.add_argument(
        "--refine",
        type=int,
        default=0,
        metavar="K",
        help="multiply every grid size by 2^K for convergence studies",
    )

    p = argparse.ArgumentParser(
        prog="diskray",
        description="numerical laboratory for ray transforms on conformal disk metrics",
    )
    sub = p.add_subparsers(dest="cmd")
    for name in _HANDLERS:
        sp = sub.add_parser(name, parents=[common])
        if name in ("reconstruct", "first-integral"):
            sp.add_argument(
                "--m", type=int, default=1, choices=(0, 1, 2), help="tensor degree"
            )
    ef = sub.add_parser("emit-fixture", parents=[common])
    ef.add_argument("name", help="fixture name: " + ", ".join(fixtures.REGISTRY))
    return p


def _resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    updates = {}
    if args.out is not None:
        updates["out_dir"] = args.out
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.workers is not None:
        updates["workers"] = args.workers
    if updates:
        cfg = dataclasses.replace(cfg, **updates)
    cfg.validate()
    if args.refine:
        if args.refine < 0:
            raise ConfigError("refine level must be nonnegative")
        cfg = cfg.refine(args.refine)
    return cfg


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.cmd is None:
        parser.print_help()
        return 2
    try:
        cfg = _resolve_config(args)
        os.makedirs(cfg.out_dir, exist_ok=True)
        if args.cmd == "emit-fixture":
            return cmd_emit_fixture(cfg, args)
        checks, extra = _HANDLERS[args.cmd](cfg, args)
        report_name = args.cmd.replace("-", "_")
        ok = write_check_report(cfg.out_dir, report_name, checks, cfg, extra)
        for c in checks:
            print(c.line())
        print(f"{'PASS' if ok else 'FAIL'} {args.cmd} ({len(checks)} checks)")
        return 0 if ok else 1
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (TrappedRay, SolverDivergence, IncompatibleFlux, OutOfDomain) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
