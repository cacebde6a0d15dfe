"""Command-line front end for the BRW photon-pair toolkit.

Every command writes CSV files (with ``#`` comment lines echoing the full
configuration) into ``--out-dir`` and prints a short summary to stdout.

Exit codes: 0 success, 2 usage error, 3 configuration/parse error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from . import modes as M
from . import phasematch as P
from . import spdc as S
from .materials import MaterialFileError, WavelengthRangeError, default_materials_path, load_materials
from .stack import PRESETS, LayerStack, load_stack

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3, 4
DEFAULT_PAIR = ("brw-paper", "conventional-paper")


class UsageError(Exception):
    pass


class ConfigError(Exception):
    pass


def fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.12g}"
    return str(v)


# ------------------------------------------------------------ config helpers

def make_grid(start, stop, step, explicit=None) -> np.ndarray:
    if explicit is not None:
        try:
            vals = [float(t) for t in explicit.replace(",", " ").split()]
        except ValueError as exc:
            raise UsageError(f"bad grid {explicit!r}: {exc}") from exc
        g = np.asarray(vals)
    else:
        if not step > 0:
            raise UsageError("grid step must be > 0")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        g = np.round(start + step * np.arange(max(n, 0)), 10)
    if g.size == 0:
        raise UsageError("empty wavelength grid")
    if g.size > 1 and np.any(np.diff(g) <= 0):
        raise UsageError("grid must be strictly increasing")
    return g


def _materials(args):
    path = Path(args.materials) if args.materials else default_materials_path()
    try:
        return path, load_materials(path)
    except FileNotFoundError as exc:
        raise ConfigError(str(exc)) from exc


def _stacks(args, materials, default):
    names = [args.stack] if args.stack else list(default)
    out = []
    for name in names:
        try:
            out.append(load_stack(name, materials))
        except FileNotFoundError as exc:
            raise ConfigError(str(exc)) from exc
    return out


def _stack_ref(stack: LayerStack) -> str:
    return stack.name


def write_csv(path: Path, header: str, rows, echo: dict):
    lines = [f"# {k} = {fmt(v)}" for k, v in echo.items()]
    lines.append(header)
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")
    return path


def _echo(args, command, mats_path, **extra):
    e = {"command": command, "materials": str(mats_path)}
    e.update(extra)
    return e


def _out(args) -> Path:
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _spdc_config(stack, args, **kw):
    return S.SpdcConfig(stack, length_mm=args.length_mm, pump_power=args.power,
                        lambda_p=args.lambda_p, lambda_s=args.lambda_s, period_um=args.period, **kw)


def _check_spdc_args(args):
    if not args.length_mm > 0:
        raise UsageError("--length-mm must be > 0")
    if not args.power > 0:
        raise UsageError("--power must be > 0")
    if args.period is not None and not args.period > 0:
        raise UsageError("--period must be > 0")


# ------------------------------------------------------------ commands

def cmd_modes(args) -> int:
    mats_path, mats = _materials(args)
    stack = _stacks(args, mats, ("brw-paper",))[0]
    pol = args.pol.upper() if args.pol else stack.polarization
    lam = args.wavelength
    tir = M.find_tir_modes(stack, lam, pol)
    rows = [(lam, m.polarization, m.kind, m.parity, m.n_eff, m.beta, m.leakage_residual) for m in tir]
    brw = None
    if P.is_bragg_stack(stack):
        try:
            brw = M.find_brw_mode(stack, lam, pol, args.parity)
            rows.append((lam, brw.polarization, brw.kind, brw.parity, brw.n_eff, brw.beta, brw.leakage_residual))
        except M.ModeNotFoundError as exc:
            print(f"note: {exc}")
    out = _out(args)
    echo = _echo(args, "modes", mats_path, stack=_stack_ref(stack), wavelength_nm=lam, pol=pol,
                 brw_parity=args.parity)
    path = write_csv(out / f"modes_{stack.name}_{lam:g}nm.csv",
                     "lambda_nm,pol,kind,parity,n_eff,beta_rad_per_um,leakage_residual", rows, echo)
    if args.profiles:
        for k, m in enumerate(tir + ([brw] if brw else [])):
            prof = m.profile
            write_csv(out / f"profile_{stack.name}_{lam:g}nm_{m.kind}_{m.parity}_{k}.csv", "x_nm,E",
                      zip(prof.x.tolist(), prof.E.tolist()), dict(echo, kind=m.kind, n_eff=m.n_eff))
    print(f"{stack.name} at {lam:g} nm ({pol}): {len(tir)} TIR mode(s)"
          + (f", BRW n_eff = {brw.n_eff:.8f}" if brw else "") + f" -> {path}")
    for r in rows:
        print(f"  {r[2]:3s} {r[3]:4s} n_eff = {r[4]:.10f}  beta = {r[5]:.8f} rad/um  leak = {r[6]:.2e}")
    return EXIT_OK


def cmd_fig2(args) -> int:
    mats_path, mats = _materials(args)
    grid = make_grid(args.lp_start, args.lp_stop, args.lp_step, args.grid)
    if grid.size < 2:
        raise UsageError("the mismatch sweep needs at least two grid points")
    out = _out(args)
    for stack in _stacks(args, mats, ("brw-paper",)):
        curve = P.pump_idler_mismatch_curve(stack, grid, args.lambda_s)
        echo = _echo(args, "fig2", mats_path, stack=_stack_ref(stack), lambda_s_nm=args.lambda_s,
                     lp_start=float(grid[0]), lp_stop=float(grid[-1]), lp_points=int(grid.size))
        path = write_csv(out / f"fig2_{stack.name}.csv", "lambda_p_nm,beta_diff_rad_per_um,dbeta_dlambda",
                         zip(curve.lambda_p.tolist(), curve.beta_diff.tolist(), curve.derivative.tolist()), echo)
        zc = curve.minimum
        where = f"{zc:.4f} nm" if zc is not None else "none in window"
        print(f"{stack.name}: d(beta_p - beta_i)/d(lambda_p) zero crossing: {where} -> {path}")
    return EXIT_OK


def _sweep_summary(spectrum: S.SpdcSpectrum) -> str:
    width = f"{spectrum.fwhm:.4f} nm" if spectrum.fwhm is not None else f"undefined ({spectrum.fwhm_status})"
    return f"peak {spectrum.peak:.4e} W/nm/um at {spectrum.peak_at:.3f} nm, FWHM {width}"


def _run_sweep(args, command, variable, default_pair):
    _check_spdc_args(args)
    mats_path, mats = _materials(args)
    if variable == "lambda_p":
        grid = make_grid(args.lp_start, args.lp_stop, args.lp_step, args.grid)
        header = "lambda_p_nm,dPs_dlambda_W_per_nm_per_um"
    else:
        grid = make_grid(args.ls_start, args.ls_stop, args.ls_step, args.grid)
        header = "lambda_s_nm,dPs_dlambda_W_per_nm_per_um"
    out = _out(args)
    widths = {}
    for stack in _stacks(args, mats, default_pair):
        cfg = _spdc_config(stack, args)
        spectrum = S.pump_sweep(cfg, grid) if variable == "lambda_p" else S.signal_sweep(cfg, grid)
        echo = _echo(args, command, mats_path, stack=_stack_ref(stack), length_mm=args.length_mm,
                     pump_power_mW_per_um=args.power, lambda_p_nm=args.lambda_p, lambda_s_nm=args.lambda_s,
                     qpm_period_um=spectrum.period_um, grid_start=float(grid[0]), grid_stop=float(grid[-1]),
                     grid_points=int(grid.size), fwhm_nm=spectrum.fwhm if spectrum.fwhm is not None else spectrum.fwhm_status,
                     peak_W_per_nm_per_um=spectrum.peak, peak_at_nm=spectrum.peak_at, gaps=len(spectrum.gaps))
        path = write_csv(out / f"{command}_{stack.name}.csv", header,
                         zip(spectrum.grid.tolist(), spectrum.density.tolist()), echo)
        print(f"{stack.name}: {_sweep_summary(spectrum)} -> {path}")
        for lam, why in spectrum.gaps:
            print(f"  gap at {lam:g} nm: {why}")
        widths[stack.name] = spectrum.fwhm
    vals = list(widths.values())
    if len(vals) == 2 and all(v for v in vals):
        print(f"FWHM ratio {list(widths)[0]} / {list(widths)[1]} = {vals[0] / vals[1]:.2f}")
    return EXIT_OK


def cmd_fig3(args) -> int:
    return _run_sweep(args, "fig3", "lambda_p", DEFAULT_PAIR)


def cmd_fig5(args) -> int:
    return _run_sweep(args, "fig5", "lambda_s", DEFAULT_PAIR)


def cmd_fig4(args) -> int:
    mats_path, mats = _materials(args)
    grid = make_grid(args.lp_start, args.lp_stop, args.lp_step, args.grid)
    out = _out(args)
    for stack in _stacks(args, mats, ("brw-paper",)):
        period = args.period or P.qpm_period(stack, args.lambda_p, args.lambda_s).period
        tc = P.tuning_curve(stack, period, grid, seed=args.lambda_s)
        echo = _echo(args, "fig4", mats_path, stack=_stack_ref(stack), qpm_period_um=period,
                     lambda_p_nm=args.lambda_p, lambda_s_nm=args.lambda_s, gaps=len(tc.gaps))
        path = write_csv(out / f"fig4_{stack.name}.csv", "lambda_p_nm,lambda_s_nm,lambda_i_nm",
                         zip(tc.lambda_p.tolist(), tc.lambda_s.tolist(), tc.lambda_i.tolist()), echo)
        ok = np.isfinite(tc.lambda_s)
        exc = float(np.ptp(tc.lambda_s[ok])) if ok.any() else math.nan
        print(f"{stack.name}: Lambda = {period:.5f} um, signal excursion {exc:.4f} nm over "
              f"{grid[0]:g}-{grid[-1]:g} nm, {len(tc.gaps)} gap(s) -> {path}")
        for lam, why in tc.gaps:
            print(f"  gap at {lam:g} nm: {why}")
    return EXIT_OK


def cmd_design(args) -> int:
    lo, hi = args.d_c_range
    if not hi > lo > 0:
        raise UsageError(f"--d-c-range must satisfy 0 < lo < hi, got {lo:g} {hi:g}")
    mats_path, mats = _materials(args)
    template = _stacks(args, mats, ("brw-paper",))[0]
    rep = P.design_brw(template, args.lambda_p, args.lambda_s, (lo, hi), scan_step=args.scan_step)
    out = _out(args)
    echo = _echo(args, "design", mats_path, template=_stack_ref(template), lambda_p_nm=args.lambda_p,
                 lambda_s_nm=args.lambda_s, d_c_lo=lo, d_c_hi=hi, d_c_nm=rep.d_c, d1_nm=rep.d1, d2_nm=rep.d2,
                 qpm_period_um=rep.period, minimum_nm=rep.minimum if rep.minimum is not None else "none")
    write_csv(out / "design_trace.csv", "iteration,n_eff_idler,d1_nm,d2_nm", rep.trace, echo)
    write_csv(out / "design_scan.csv", "d_c_nm,dbeta_dlambda", rep.scan, echo)
    s = rep.stack
    doc = {
        "name": "designed",
        "core": {"material": s.core.material.name, "thickness_nm": float(rep.d_c)},
        "bilayer": [{"material": l.material.name, "thickness_nm": float(l.thickness)} for l in s.bilayer],
        "n_bilayers": s.n_bilayers,
        "exterior": s.exterior.name,
        "qpm_period_um": float(rep.period),
        "polarization": s.polarization,
    }
    stack_path = out / "designed_stack.yaml"
    stack_path.write_text(yaml.safe_dump(doc, sort_keys=False))
    print(f"d_c = {rep.d_c:.3f} nm, d1 = {rep.d1:.3f} nm, d2 = {rep.d2:.3f} nm, Lambda = {rep.period:.5f} um")
    print("n_eff (pump, signal, idler) = " + ", ".join(f"{n:.8f}" for n in rep.n_eff))
    print(f"minimum of beta_p - beta_i at {rep.minimum:.4f} nm" if rep.minimum is not None
          else "no minimum in the check window")
    print("quarter-wave iterations:")
    for it, n, d1, d2 in rep.trace:
        print(f"  {it:2d}  n_eff = {n:.10f}  d1 = {d1:.4f}  d2 = {d2:.4f}")
    print(f"stack written to {stack_path}")
    return EXIT_OK


def cmd_flux(args) -> int:
    _check_spdc_args(args)
    if not args.window > 0:
        raise UsageError("--window must be > 0")
    if not args.step > 0:
        raise UsageError("--step must be > 0")
    mats_path, mats = _materials(args)
    c, w = args.center, args.window
    n = max(int(math.ceil(w / args.step - 1e-9)), 1)
    grid = np.round(np.linspace(c - 0.5 * w, c + 0.5 * w, n + 1), 10)
    out = _out(args)
    rows = []
    for stack in _stacks(args, mats, DEFAULT_PAIR):
        spectrum = S.signal_sweep(_spdc_config(stack, args), grid)
        flux = S.pair_flux(spectrum, w, c)
        rows.append((stack.name, w, c, flux, spectrum.peak))
        print(f"{stack.name}: {flux:.4e} pairs/s per um ({w:g} nm window at {c:g} nm, "
              f"peak {spectrum.peak:.4e} W/nm/um)")
    echo = _echo(args, "flux", mats_path, length_mm=args.length_mm, pump_power_mW_per_um=args.power,
                 lambda_p_nm=args.lambda_p, window_nm=w, center_nm=c, step_nm=args.step)
    path = write_csv(out / "flux.csv", "stack,window_nm,center_nm,pair_flux_per_s_per_um,peak_W_per_nm_per_um",
                     rows, echo)
    print(f"-> {path}")
    return EXIT_OK


# ------------------------------------------------------------ parser

def _add_spdc(p):
    p.add_argument("--length-mm", type=float, default=15.0, help="interaction length (mm)")
    p.add_argument("--power", type=float, default=1.0, help="pump power per unit width (mW/um)")
    p.add_argument("--lambda-p", type=float, default=800.0, help="pump wavelength / pivot (nm)")
    p.add_argument("--lambda-s", type=float, default=1550.0, help="signal wavelength / pivot (nm)")
    p.add_argument("--period", type=float, default=None,
                   help="QPM period (um); default: re-derived at the pivot wavelengths")


def _add_grid(p, prefix, start, stop, step, what):
    p.add_argument(f"--{prefix}-start", type=float, default=start, help=f"{what} grid start (nm)")
    p.add_argument(f"--{prefix}-stop", type=float, default=stop, help=f"{what} grid stop (nm)")
    p.add_argument(f"--{prefix}-step", type=float, default=step, help=f"{what} grid step (nm)")
    p.add_argument("--grid", default=None, help="explicit comma-separated grid (nm), overrides start/stop/step")


def _add_globals(p, suppress=False):
    # accepted before or after the subcommand; SUPPRESS keeps the sub-level
    # copies from overwriting a value given at the top level
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--materials", default=d(None),
                   help="material parameter file (default: $BRWSPDC_MATERIALS or the shipped file)")
    p.add_argument("--stack", default=d(None), help=f"stack preset ({', '.join(PRESETS)}) or stack file")
    p.add_argument("--out-dir", default=d("."), help="directory for CSV output")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="brwspdc", description=__doc__.split("\n\n")[0])
    _add_globals(ap)
    common = argparse.ArgumentParser(add_help=False)
    _add_globals(common, suppress=True)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    p = add("modes", help="list TIR modes and the BRW mode at one wavelength")
    p.add_argument("--lambda", dest="wavelength", type=float, default=800.0, help="wavelength (nm)")
    p.add_argument("--pol", type=str.lower, choices=("te", "tm"), default=None)
    p.add_argument("--parity", choices=("even", "odd"), default="even", help="BRW mode parity")
    p.add_argument("--profiles", action="store_true", help="also write x_nm,E profile CSVs")
    p.set_defaults(func=cmd_modes)

    p = add("fig2", help="beta_p - beta_i versus pump wavelength")
    _add_grid(p, "lp", 790.0, 810.0, 0.5, "pump")
    p.add_argument("--lambda-s", type=float, default=1550.0)
    p.set_defaults(func=cmd_fig2)

    p = add("fig3", help="signal spectral density versus pump wavelength")
    _add_grid(p, "lp", 788.0, 812.0, 0.1, "pump")
    _add_spdc(p)
    p.set_defaults(func=cmd_fig3)

    p = add("fig4", help="phase-matched signal and idler versus pump wavelength")
    _add_grid(p, "lp", 793.0, 806.0, 0.5, "pump")
    p.add_argument("--lambda-p", type=float, default=800.0)
    p.add_argument("--lambda-s", type=float, default=1550.0)
    p.add_argument("--period", type=float, default=None, help="QPM period (um); default: derived at the pivot")
    p.set_defaults(func=cmd_fig4)

    p = add("fig5", help="signal spectral density versus signal wavelength")
    _add_grid(p, "ls", 1530.0, 1570.0, 0.05, "signal")
    _add_spdc(p)
    p.set_defaults(func=cmd_fig5)

    p = add("design", help="self-consistent core and quarter-wave cladding design")
    p.add_argument("--lambda-p", type=float, default=800.0)
    p.add_argument("--lambda-s", type=float, default=1550.0)
    p.add_argument("--d-c-range", type=float, nargs=2, default=(450.0, 700.0), metavar=("LO", "HI"))
    p.add_argument("--scan-step", type=float, default=10.0, help="coarse core-thickness step (nm)")
    p.set_defaults(func=cmd_design)

    p = add("flux", help="pair flux in a signal detection window")
    _add_spdc(p)
    p.add_argument("--window", type=float, default=1.0, help="detection window (nm)")
    p.add_argument("--center", type=float, default=1550.0, help="window centre (nm)")
    p.add_argument("--step", type=float, default=0.01, help="integration grid step (nm)")
    p.set_defaults(func=cmd_flux)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"brwspdc {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, MaterialFileError, yaml.YAMLError) as exc:
        print(f"brwspdc {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (M.ModeError, P.PhaseMatchError, WavelengthRangeError, ValueError) as exc:
        print(f"brwspdc {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
