"""Command-line driver.

Subcommands: run, energy, gradient-check, green, dbar-check, existence.
Exit codes: 0 success, 1 math guard tripped or check failed, 2 usage.
"""
from __future__ import annotations

import argparse
import datetime
import math
import sys
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from . import io as pio
from .dbar import l1_norm_pair_nodal, remark_test_field
from .flow import FlowState, RunStatus, assemble_velocity, run
from .geometry import _dot, compute_geometry, energy_identities, willmore_energy
from .grid import FlatModulus, Grid
from .willmore import willmore_gradient


def _load_state(path: str) -> FlowState:
    head = Path(path).open("rb").read(4)
    if head == pio.SNAPSHOT_MAGIC:
        return pio.read_snapshot(path)
    config = pio.parse_config(Path(path).read_text())
    return pio.initial_state_from(config)


def _cmd_run(args) -> int:
    config_text = Path(args.config).read_text()
    config = pio.parse_config(config_text)
    flow_cfg = pio.flow_config_from(config)
    state = pio.initial_state_from(config)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    started = datetime.datetime.now(datetime.timezone.utc)
    result = run(flow_cfg, state)
    finished = datetime.datetime.now(datetime.timezone.utc)

    artifacts: dict[str, str] = {}
    records_path = outdir / "records.csv"
    pio.write_records_csv(result.records, records_path)
    artifacts["records"] = str(records_path)
    snap_path = outdir / "final.pwfl"
    pio.write_snapshot(result.final, snap_path)
    artifacts["snapshot_final"] = str(snap_path)
    surface_fmt = config.get("output", {}).get("surface_format", "")
    if surface_fmt in ("obj", "csv_grid"):
        ext = "obj" if surface_fmt == "obj" else "csv"
        surf_path = outdir / f"surface.{ext}"
        pio.export_surface(
            result.final,
            surf_path,
            surface_fmt,
            project=result.final.immersion.m != 3,
        )
        artifacts["surface"] = str(surf_path)
    pio.write_manifest(
        outdir / "manifest.txt",
        config_text,
        result.status.value,
        started,
        finished,
        artifacts,
        message=result.message,
    )
    print(f"status: {result.status.value}")
    if result.records:
        first, last = result.records[0], result.records[-1]
        print(f"t: {first.t:.6g} -> {last.t:.6g}")
        print(f"W: {first.W:.12g} -> {last.W:.12g}")
        print(f"final defect: {last.defect_sup:.3e}  b: {last.b:.9g}")
    return 0 if result.status is RunStatus.COMPLETED else 1


def _cmd_energy(args) -> int:
    state = _load_state(args.input)
    bundle = compute_geometry(state.immersion)
    ids = energy_identities(bundle)
    W = willmore_energy(bundle)
    print(f"W                  = {W:.12g}")
    print(f"sff_energy         = {ids['sff_energy']:.12g}")
    print(f"gauss_bonnet       = {ids['gauss_bonnet_defect']:.3e}")
    print(f"4W - 2*gauss_bonnet= {4 * W - 2 * ids['gauss_bonnet_defect']:.12g}")
    print(f"defect_sup         = {bundle.defect_sup:.3e}")
    print(f"tau                = {state.modulus.tau}")
    return 0


def _cmd_gradient_check(args) -> int:
    state = _load_state(args.input)
    bundle = compute_geometry(state.immersion)
    gw = willmore_gradient(bundle)
    grid = state.grid
    rng = np.random.default_rng(args.seed)
    N, m = grid.N, state.immersion.m
    worst = 0.0
    print("trial  pairing           fd_extrapolated    rel_err")
    for trial in range(args.trials):
        coef = np.zeros((N, N, m), dtype=np.complex128)
        for comp in range(m):
            block = rng.standard_normal((9, 9)) + 1j * rng.standard_normal((9, 9))
            for i, k1 in enumerate(range(-4, 5)):
                for j, k2 in enumerate(range(-4, 5)):
                    coef[k1, k2, comp] = block[i, j]
        psi = np.real(np.fft.ifft2(coef, axes=(0, 1)) * N * N)
        psi = bundle.project_normal(psi)
        psi /= np.abs(psi).max()
        pair = float(grid.integrate_chart(_dot(gw.delta_w, psi) * bundle.dvol_factor))

        def fd(eps: float) -> float:
            wp = willmore_energy(
                compute_geometry(
                    type(state.immersion)(grid, state.phi + eps * psi)
                )
            )
            wm = willmore_energy(
                compute_geometry(
                    type(state.immersion)(grid, state.phi - eps * psi)
                )
            )
            return (wp - wm) / (2.0 * eps)

        c1, c2 = fd(args.eps), fd(args.eps / 2.0)
        extrap = (4.0 * c2 - c1) / 3.0
        rel = abs(extrap - pair) / max(abs(extrap), 1e-300)
        worst = max(worst, rel)
        print(f"{trial:5d}  {pair:+.10e}  {extrap:+.10e}  {rel:.3e}")
    print(f"worst relative error: {worst:.3e} (tolerance {args.tol:g})")
    return 0 if worst <= args.tol else 1


def _cmd_green(args) -> int:
    ok = True
    print("b          l1_grad    l1_grad*l  l1_g       l1_g*l^2   cyl_check  sharp      dev")
    for b in args.b:
        mod = FlatModulus(0.0, b)
        rep = diag.green_l1_report(mod, N=args.N)
        l_star = mod.l_star
        L = math.pi * b
        sharp = 1.0 / (2.0 * diag.cylinder_systole(L))
        dev = abs(rep["averaged_cyl_check"] - sharp) / sharp
        ok = ok and dev < 0.01
        print(
            f"{b:<10.5g} {rep['l1_grad']:<10.5g} {rep['l1_grad'] * l_star:<10.5g} "
            f"{rep['l1_g']:<10.5g} {rep['l1_g'] * l_star**2:<10.5g} "
            f"{rep['averaged_cyl_check']:<10.6g} {sharp:<10.6g} {dev:.2e}"
        )
    print("sharp-constant check (1%):", "pass" if ok else "FAIL")
    return 0 if ok else 1


def _cmd_dbar_check(args) -> int:
    print("b          l1_u           closed_form    rel_dev    l1_dbar_u")
    ok = True
    ratios = []
    bs = list(args.b)
    for b in bs:
        grid = Grid(args.N, FlatModulus(0.0, b))
        U, du = remark_test_field(grid)
        out = l1_norm_pair_nodal(grid, U.u, du, grid.modulus)
        target = 2.0**-1.5 * b**1.5
        dev = abs(out["l1_u"] - target) / target
        ok = ok and dev < 0.01
        ratios.append(out["l1_u"] / out["l1_dbar_u"])
        print(
            f"{b:<10.5g} {out['l1_u']:<14.10g} {target:<14.10g} {dev:<10.2e} "
            f"{out['l1_dbar_u']:.10g}"
        )
    if len(bs) >= 2:
        slope = float(np.polyfit(np.log(bs), np.log(ratios), 1)[0])
        print(f"L1-ratio scaling exponent: {slope:.4f} (target 1.5 +- 0.05)")
        ok = ok and abs(slope - 1.5) <= 0.05
    print("dbar closed-form check:", "pass" if ok else "FAIL")
    return 0 if ok else 1


def _cmd_existence(args) -> int:
    state = _load_state(args.input)
    try:
        rep = diag.existence_time_report(
            state, beta=args.beta, lambda_hat=getattr(args, "lambda"), c_hat=args.c_hat
        )
    except diag.NoAdmissibleR as exc:
        print(f"no admissible radius: {exc}")
        return 1
    print("heuristic report (rate constants are user inputs, not certified):")
    print(f"R       = {rep['R']:.6g}")
    print(f"T_pred  = {rep['T_pred']:.6g}   (= lambda_hat * R^4)")
    print(f"l_lower = {rep['l_lower']:.6g}  (root of l*exp(c_hat*l^30) = l_star)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="pwflow",
        description="Pseudospectral parametric Willmore flow on flat tori.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="integrate a configured flow")
    pr.add_argument("config", help="config file (key = value with sections)")
    pr.add_argument("--out", default="out", help="output directory")
    pr.set_defaults(func=_cmd_run)

    pe = sub.add_parser("energy", help="one-shot energy and identity report")
    pe.add_argument("input", help="config file or .pwfl snapshot")
    pe.set_defaults(func=_cmd_energy)

    pg = sub.add_parser("gradient-check", help="variational pairing test")
    pg.add_argument("input", help="config file or .pwfl snapshot")
    pg.add_argument("--trials", type=int, default=5)
    pg.add_argument("--eps", type=float, default=1e-4)
    pg.add_argument("--tol", type=float, default=1e-3)
    pg.add_argument("--seed", type=int, default=12)
    pg.set_defaults(func=_cmd_gradient_check)

    pgr = sub.add_parser("green", help="Green-function L1 norms and sharp check")
    pgr.add_argument("b", type=float, nargs="+", help="rectangular aspect(s)")
    pgr.add_argument("--N", type=int, default=256)
    pgr.set_defaults(func=_cmd_green)

    pd = sub.add_parser("dbar-check", help="dbar inversion closed-form values")
    pd.add_argument(
        "b", type=float, nargs="*", default=[4.0, 9.0, 16.0], help="aspect(s)"
    )
    pd.add_argument("--N", type=int, default=512)
    pd.set_defaults(func=_cmd_dbar_check)

    px = sub.add_parser("existence", help="heuristic existence-time report")
    px.add_argument("input", help="config file or .pwfl snapshot")
    px.add_argument("--beta", type=float, default=0.9 * 8.0 * math.pi / 3.0)
    px.add_argument("--lambda", type=float, default=1.0)
    px.add_argument("--c-hat", type=float, default=1.0, dest="c_hat")
    px.set_defaults(func=_cmd_existence)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (pio.BadParameters, pio.NonConformalInput, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
