"""Dispersion curves, quasi-phase matching, tuning curves and BRW design searches.

Wavelengths are in nm, propagation constants in rad/um and QPM periods in um.
A three-wave interaction is described by one :class:`ModeFamily` per wave;
the default is TIR pump and signal with a BRW idler on Bragg stacks (a TIR
idler on uniform-cladding stacks), all sharing the stack's polarization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .materials import MaterialModel, refractive_index
from .modes import (ModeError, ModeNotFoundError, ModeSolution, brw_candidates, find_brw_mode,
                    find_tir_modes, tir_window)
from .stack import LayerStack, check_pol

DERIV_STEP = 0.1  # nm
TRACK_HALFWIDTH = 0.02  # n_eff window around the previous point when tracking
LS_WINDOW = (1400.0, 1700.0)
LS_WINDOW_MAX = (1300.0, 1900.0)
LS_WINDOW_GROW = 50.0


class PhaseMatchError(RuntimeError):
    pass


class LostModeError(PhaseMatchError):
    def __init__(self, msg, last_good=None):
        super().__init__(msg)
        self.last_good = last_good


class DesignSearchError(PhaseMatchError):
    pass


@dataclass(frozen=True)
class ModeFamily:
    kind: str = "TIR"
    parity: str = "even"
    pol: Optional[str] = None  # None: use the stack's polarization

    def polarization(self, stack: LayerStack) -> str:
        return check_pol(self.pol or stack.polarization)


@dataclass(frozen=True)
class Interaction:
    pump: ModeFamily = ModeFamily()
    signal: ModeFamily = ModeFamily()
    idler: ModeFamily = ModeFamily()


def is_bragg_stack(stack: LayerStack) -> bool:
    a, b = stack.bilayer
    return a.material != b.material


def default_interaction(stack: LayerStack) -> Interaction:
    idler = ModeFamily("BRW") if is_bragg_stack(stack) else ModeFamily("TIR")
    return Interaction(ModeFamily("TIR"), ModeFamily("TIR"), idler)


def solve_family(stack: LayerStack, family: ModeFamily, wavelength_nm: float,
                 guess: Optional[float] = None, halfwidth: float = TRACK_HALFWIDTH) -> ModeSolution:
    """Solve one mode family; with ``guess`` pick the solution nearest to it."""
    pol = family.polarization(stack)
    lam = float(wavelength_nm)
    if family.kind == "TIR":
        window = None
        if guess is not None:
            lo, hi = tir_window(stack, lam, pol)
            window = (max(lo, guess - halfwidth), min(hi, guess + halfwidth))
        modes = [m for m in find_tir_modes(stack, lam, pol, window=window) if m.parity == family.parity]
        if not modes:
            where = f" near n_eff={guess:.6f}" if guess is not None else ""
            raise ModeNotFoundError(f"no {family.parity} TIR mode{where} at {lam:g} nm")
        if guess is None:
            return modes[0]
        return min(modes, key=lambda m: abs(m.n_eff - guess))
    if family.kind == "BRW":
        if guess is None:
            return find_brw_mode(stack, lam, pol, family.parity)
        n = stack.indices(lam)
        hi = min(n.values())
        window = (max(guess - halfwidth, 1.0), min(guess + halfwidth, hi))
        roots = brw_candidates(stack, lam, pol, family.parity, window) if window[1] > window[0] else []
        if not roots:
            raise ModeNotFoundError(f"{family.parity} BRW mode lost near n_eff={guess:.6f} at {lam:g} nm")
        best = min(roots, key=lambda r: abs(r - guess))
        return find_brw_mode(stack, lam, pol, family.parity, window=(best - 1e-6, best + 1e-6))
    raise ValueError(f"unknown mode kind {family.kind!r}")


def beta_of(n_eff: float, wavelength_nm: float) -> float:
    return 2 * math.pi * n_eff / (wavelength_nm * 1e-3)


# ------------------------------------------------------------ energy conservation

def idler_wavelength(lambda_p: float, lambda_s: float) -> float:
    """Idler wavelength from 1/lp = 1/ls + 1/li (nm)."""
    if not (lambda_s > lambda_p > 0):
        raise ValueError(f"need lambda_s > lambda_p > 0, got lambda_p={lambda_p}, lambda_s={lambda_s}")
    return lambda_p * lambda_s / (lambda_s - lambda_p)


def signal_wavelength(lambda_p: float, lambda_i: float) -> float:
    return idler_wavelength(lambda_p, lambda_i)


def energy_mismatch(lambda_p: float, lambda_s: float, lambda_i: float) -> float:
    """1/lp - 1/ls - 1/li in 1/nm."""
    return 1.0 / lambda_p - 1.0 / lambda_s - 1.0 / lambda_i


# ------------------------------------------------------------ dispersion curves

@dataclass(frozen=True)
class DispersionCurve:
    family: ModeFamily
    stack_name: str
    wavelength: np.ndarray  # nm
    beta: np.ndarray  # rad/um
    n_eff: np.ndarray


def build_dispersion(stack: LayerStack, family: ModeFamily, wavelengths: Sequence[float]) -> DispersionCurve:
    """Sample one mode family over a wavelength grid, tracking n_eff point to point."""
    lams = np.asarray(wavelengths, dtype=float)
    if lams.ndim != 1 or lams.size == 0:
        raise ValueError("wavelength grid must be a non-empty 1-D sequence")
    n_eff = np.empty_like(lams)
    guess = None
    for k, lam in enumerate(lams):
        try:
            n_eff[k] = solve_family(stack, family, lam, guess).n_eff
        except ModeError as exc:
            last = float(lams[k - 1]) if k else None
            raise LostModeError(f"{family.kind} mode family lost at {lam:g} nm "
                                f"(last good {last} nm): {exc}", last) from exc
        guess = n_eff[k]
    beta = 2 * math.pi * n_eff / (lams * 1e-3)
    return DispersionCurve(family, stack.name, lams, beta, n_eff)


# ------------------------------------------------------------ QPM

@dataclass(frozen=True)
class QpmSolution:
    lambda_p: float
    lambda_s: float
    lambda_i: float
    period: float  # um
    delta_beta: float  # rad/um
    n_eff: tuple[float, float, float]  # pump, signal, idler
    beta: tuple[float, float, float]


def three_wave_modes(stack: LayerStack, lambda_p: float, lambda_s: float,
                     interaction: Optional[Interaction] = None, guesses=(None, None, None)):
    inter = interaction or default_interaction(stack)
    li = idler_wavelength(lambda_p, lambda_s)
    out = []
    for fam, lam, g, label in zip((inter.pump, inter.signal, inter.idler), (lambda_p, lambda_s, li), guesses,
                                  ("pump", "signal", "idler")):
        try:
            out.append(solve_family(stack, fam, lam, g))
        except ModeError as exc:
            raise type(exc)(f"{label} at {lam:.4f} nm: {exc}") from exc
    return tuple(out)


def qpm_period(stack: LayerStack, lambda_p: float, lambda_s: float,
               interaction: Optional[Interaction] = None) -> QpmSolution:
    """First-order QPM period that phase matches (lambda_p -> lambda_s + lambda_i)."""
    li = idler_wavelength(lambda_p, lambda_s)
    mp, ms, mi = three_wave_modes(stack, lambda_p, lambda_s, interaction)
    diff = mp.beta - ms.beta - mi.beta
    if not diff > 0:
        raise PhaseMatchError(f"beta_p - beta_s - beta_i = {diff:.6g} rad/um <= 0: no first-order QPM")
    period = 2 * math.pi / diff
    dbeta = mp.beta - ms.beta - mi.beta - 2 * math.pi / period
    return QpmSolution(float(lambda_p), float(lambda_s), li, period, dbeta,
                       (mp.n_eff, ms.n_eff, mi.n_eff), (mp.beta, ms.beta, mi.beta))


def delta_beta(stack: LayerStack, lambda_p: float, lambda_s: float, period_um: float,
               interaction: Optional[Interaction] = None) -> float:
    mp, ms, mi = three_wave_modes(stack, lambda_p, lambda_s, interaction)
    return mp.beta - ms.beta - mi.beta - 2 * math.pi / period_um


# ------------------------------------------------------------ pump/idler mismatch

def _uniform_step(grid: np.ndarray) -> float:
    if grid.size < 2:
        raise ValueError("grid needs at least two points")
    steps = np.diff(grid)
    if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * max(1.0, abs(steps[0])):
        raise ValueError("grid must be uniform and strictly increasing")
    return float(steps[0])


def _sign_crossings(x, y):
    out = []
    for k in range(len(y) - 1):
        if y[k] == 0:
            out.append(float(x[k]))
        elif y[k] * y[k + 1] < 0:
            out.append(float(x[k] - y[k] * (x[k + 1] - x[k]) / (y[k + 1] - y[k])))
    if len(y) and y[-1] == 0:
        out.append(float(x[-1]))
    return out


@dataclass(frozen=True)
class MismatchCurve:
    lambda_p: np.ndarray  # nm
    beta_diff: np.ndarray  # beta_p - beta_i, rad/um
    derivative: np.ndarray  # rad/um per nm
    lambda_s: float
    zero_crossings: list = field(default_factory=list)

    @property
    def minimum(self) -> Optional[float]:
        """Zero crossing of the derivative nearest the centre of the grid."""
        if not self.zero_crossings:
            return None
        mid = 0.5 * (self.lambda_p[0] + self.lambda_p[-1])
        return min(self.zero_crossings, key=lambda z: abs(z - mid))


def pump_idler_mismatch_curve(stack: LayerStack, lambda_p_grid: Sequence[float], lambda_s: float,
                              interaction: Optional[Interaction] = None) -> MismatchCurve:
    """(beta_p - beta_i) versus pump wavelength at fixed signal wavelength.

    The derivative uses central differences with the grid step; the grid is
    padded by one step on each side so every point has a central difference.
    """
    grid = np.asarray(lambda_p_grid, dtype=float)
    h = _uniform_step(grid)
    inter = interaction or default_interaction(stack)
    ext = np.concatenate(([grid[0] - h], grid, [grid[-1] + h]))
    try:
        bp = build_dispersion(stack, inter.pump, ext).beta
    except PhaseMatchError as exc:
        raise PhaseMatchError(f"pump sweep failed: {exc}") from exc
    lis = np.array([idler_wavelength(p, lambda_s) for p in ext])
    try:
        bi = build_dispersion(stack, inter.idler, lis).beta
    except LostModeError as exc:
        raise LostModeError(f"idler lost while sweeping lambda_p (idler {exc})", exc.last_good) from exc
    f = bp - bi
    deriv = (f[2:] - f[:-2]) / (2 * h)
    return MismatchCurve(grid, f[1:-1], deriv, float(lambda_s), _sign_crossings(grid, deriv))


def mismatch_slope(stack: LayerStack, lambda_p: float, lambda_s: float, h: float = DERIV_STEP,
                   interaction: Optional[Interaction] = None) -> float:
    """d(beta_p - beta_i)/d(lambda_p) at one pump wavelength (central difference)."""
    c = pump_idler_mismatch_curve(stack, [lambda_p - h, lambda_p, lambda_p + h], lambda_s, interaction)
    return float(c.derivative[1])


# ------------------------------------------------------------ tuning curve

@dataclass(frozen=True)
class TuningCurve:
    lambda_p: np.ndarray
    lambda_s: np.ndarray  # nan where no root was found
    lambda_i: np.ndarray
    delta_beta: np.ndarray
    period: float
    gaps: list = field(default_factory=list)  # (lambda_p, reason)


class _DeltaBeta:
    """Delta-beta versus signal wavelength at fixed pump, with family tracking."""

    def __init__(self, stack, lambda_p, period, inter):
        self.stack, self.lp, self.inter = stack, float(lambda_p), inter
        self.K = 2 * math.pi / period
        self.bp = solve_family(stack, inter.pump, lambda_p).beta
        self.guess_s = self.guess_i = None

    def __call__(self, ls: float) -> float:
        li = idler_wavelength(self.lp, ls)
        try:
            ms = solve_family(self.stack, self.inter.signal, ls, self.guess_s)
            mi = solve_family(self.stack, self.inter.idler, li, self.guess_i)
        except ModeError:
            ms = solve_family(self.stack, self.inter.signal, ls)
            mi = solve_family(self.stack, self.inter.idler, li)
        self.guess_s, self.guess_i = ms.n_eff, mi.n_eff
        return self.bp - ms.beta - mi.beta - self.K

    def safe(self, ls: float) -> float:
        try:
            return self(ls)
        except (ModeError, ValueError):
            return math.nan


def _bracket_near(fn, seed, window, step):
    """Find a sign change of fn closest to ``seed`` within ``window``."""
    lo_w, hi_w = window
    seed = min(max(seed, lo_w), hi_w)
    f_seed = fn(seed)
    left, right = seed, seed
    f_left = f_right = f_seed
    while left > lo_w or right < hi_w:
        if right < hi_w:
            nr = min(right + step, hi_w)
            fr = fn(nr)
            if math.isfinite(fr) and math.isfinite(f_right) and fr * f_right <= 0:
                return right, nr
            right, f_right = nr, fr
        if left > lo_w:
            nl = max(left - step, lo_w)
            fl = fn(nl)
            if math.isfinite(fl) and math.isfinite(f_left) and fl * f_left <= 0:
                return nl, left
            left, f_left = nl, fl
    return None


def phase_matched_signal(stack: LayerStack, lambda_p: float, period_um: float,
                         interaction: Optional[Interaction] = None, seed: Optional[float] = None,
                         window=LS_WINDOW, tol: float = 1e-8, step: float = 2.0) -> tuple[float, float]:
    """Signal wavelength with Delta-beta = 0 at ``lambda_p``; returns (lambda_s, delta_beta)."""
    inter = interaction or default_interaction(stack)
    db = _DeltaBeta(stack, lambda_p, period_um, inter)
    lo, hi = window
    seed = 0.5 * (lo + hi) if seed is None else seed
    while True:
        br = _bracket_near(db.safe, seed, (lo, hi), step)
        if br is not None:
            break
        if lo <= LS_WINDOW_MAX[0] and hi >= LS_WINDOW_MAX[1]:
            raise PhaseMatchError(f"no phase-matched signal for lambda_p={lambda_p:g} nm in "
                                  f"[{lo:g}, {hi:g}] nm")
        lo, hi = max(lo - LS_WINDOW_GROW, LS_WINDOW_MAX[0]), min(hi + LS_WINDOW_GROW, LS_WINDOW_MAX[1])
    ls = brentq(db, br[0], br[1], xtol=1e-10, rtol=4 * np.finfo(float).eps, maxiter=200)
    resid = db(ls)
    if abs(resid) >= tol:
        raise PhaseMatchError(f"|delta beta| = {abs(resid):.3g} rad/um above tolerance at lambda_p={lambda_p:g}")
    return ls, resid


def tuning_curve(stack: LayerStack, period_um: float, lambda_p_grid: Sequence[float],
                 interaction: Optional[Interaction] = None, window=LS_WINDOW, tol: float = 1e-8,
                 seed: Optional[float] = None) -> TuningCurve:
    """Phase-matched (lambda_s, lambda_i) for every pump wavelength of the grid."""
    if not period_um > 0:
        raise ValueError("QPM period must be positive")
    grid = np.asarray(lambda_p_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty pump grid")
    ls_out = np.full(grid.shape, np.nan)
    li_out = np.full(grid.shape, np.nan)
    db_out = np.full(grid.shape, np.nan)
    gaps = []
    for k, lp in enumerate(grid):
        try:
            ls, db = phase_matched_signal(stack, lp, period_um, interaction, seed, window, tol,
                                          step=0.5 if seed is not None else 2.0)
        except (PhaseMatchError, ModeError) as exc:
            gaps.append((float(lp), str(exc)))
            continue
        ls_out[k], li_out[k], db_out[k] = ls, idler_wavelength(lp, ls), db
        seed = ls
    return TuningCurve(grid, ls_out, li_out, db_out, float(period_um), gaps)


# ------------------------------------------------------------ design

def quarter_wave_design(lambda_i: float, n_eff_target: float,
                        materials: tuple[MaterialModel, MaterialModel]) -> tuple[float, float]:
    """Cladding thicknesses with k0 d_j sqrt(n_j^2 - n_eff^2) = pi/2 (nm)."""
    out = []
    for mat in materials:
        n = refractive_index(mat, lambda_i)
        if not n > n_eff_target:
            raise ValueError(f"n_eff target {n_eff_target:.6f} >= index {n:.6f} of {mat.name}: "
                             "no quarter-wave thickness")
        out.append(lambda_i / (4 * math.sqrt(n * n - n_eff_target * n_eff_target)))
    return out[0], out[1]


@dataclass(frozen=True)
class QuarterWaveResult:
    stack: LayerStack
    n_eff: float
    d1: float
    d2: float
    trace: list  # (iteration, n_eff, d1, d2)


def quarter_wave_fixed_point(stack: LayerStack, lambda_i: float, family: ModeFamily = ModeFamily("BRW"),
                             tol: float = 1e-8, max_iter: int = 20) -> QuarterWaveResult:
    """Alternate BRW solve and quarter-wave thickness update until n_eff settles.

    The map n -> n_eff(stack designed for n) contracts only slowly (ratio
    near 0.9), so after the first plain step the update is a secant step on
    the residual n_eff(n) - n.  Converged when successive n differ by < tol.
    """
    mats = (stack.bilayer[0].material, stack.bilayer[1].material)
    trace = []

    def resolve(n):
        d1, d2 = quarter_wave_design(lambda_i, n, mats)
        s = stack.replace(d1=d1, d2=d2)
        try:
            return solve_family(s, family, lambda_i, n, halfwidth=0.05).n_eff, d1, d2
        except ModeError:
            return solve_family(s, family, lambda_i).n_eff, d1, d2

    n_cur = solve_family(stack, family, lambda_i).n_eff
    prev = None  # (n, residual)
    for it in range(1, max_iter + 1):
        g, d1, d2 = resolve(n_cur)
        r = g - n_cur
        trace.append((it, g, d1, d2))
        if prev is not None and r != prev[1]:
            n_next = n_cur - r * (n_cur - prev[0]) / (r - prev[1])
        else:
            n_next = g
        if abs(n_next - n_cur) < tol:
            d1, d2 = quarter_wave_design(lambda_i, n_next, mats)
            return QuarterWaveResult(stack.replace(d1=d1, d2=d2), n_next, d1, d2, trace)
        prev, n_cur = (n_cur, r), n_next
    raise DesignSearchError(f"quarter-wave iteration did not converge in {max_iter} steps; trace {trace}")


@dataclass(frozen=True)
class CoreSearchResult:
    d_c: float
    stack: LayerStack
    slope_at_ends: tuple[float, float]
    samples: list  # (d_c, slope) coarse scan


def core_thickness_search(template: LayerStack, lambda_p: float, lambda_s: float,
                          d_c_range: tuple[float, float], scan_step: float = 10.0,
                          h: float = DERIV_STEP, xtol: float = 0.01,
                          interaction: Optional[Interaction] = None,
                          quarter_wave: bool = False) -> CoreSearchResult:
    """Core thickness at which d(beta_p - beta_i)/d(lambda_p) vanishes at ``lambda_p``.

    The derivative is sampled on a coarse d_c grid (points where a mode is
    missing are skipped), the sign change nearest the template core is then
    refined with Brent's method.  With ``quarter_wave=True`` the cladding is
    re-designed as a quarter-wave stack at the idler wavelength for every
    trial core, so the returned stack is self-consistent.
    """
    lo, hi = map(float, d_c_range)
    if not hi > lo > 0:
        raise ValueError(f"d_c range must satisfy 0 < lo < hi, got {d_c_range}")
    inter = interaction or default_interaction(template)
    li = idler_wavelength(lambda_p, lambda_s)

    def candidate(dc):
        st = template.replace(d_c=dc)
        if quarter_wave:
            st = quarter_wave_fixed_point(st, li, inter.idler).stack
        return st

    def slope(dc):
        try:
            return mismatch_slope(candidate(dc), lambda_p, lambda_s, h, inter)
        except (ModeError, PhaseMatchError, ValueError):
            return math.nan

    n = max(int(math.ceil((hi - lo) / scan_step)), 1)
    dcs = np.linspace(lo, hi, n + 1)
    vals = np.array([slope(d) for d in dcs])
    samples = list(zip(dcs.tolist(), vals.tolist()))
    brackets = [(dcs[k], dcs[k + 1], vals[k], vals[k + 1]) for k in range(n)
                if np.isfinite(vals[k]) and np.isfinite(vals[k + 1]) and vals[k] * vals[k + 1] <= 0]
    ends = (float(vals[0]), float(vals[-1]))
    if not brackets:
        raise DesignSearchError(
            f"derivative does not change sign for d_c in [{lo:g}, {hi:g}] nm "
            f"(slope at ends: {ends[0]:+.4g}, {ends[1]:+.4g} rad/um/nm)")
    ref = template.core.thickness
    a, b, fa, fb = min(brackets, key=lambda br: abs(0.5 * (br[0] + br[1]) - ref))
    if fa == 0 or fb == 0:
        d_c = a if fa == 0 else b
    else:
        d_c = brentq(slope, a, b, xtol=xtol)
    return CoreSearchResult(float(d_c), candidate(d_c), ends, samples)


@dataclass(frozen=True)
class DesignReport:
    stack: LayerStack
    d_c: float
    d1: float
    d2: float
    period: float
    n_eff: tuple[float, float, float]  # pump, signal, idler
    minimum: Optional[float]
    trace: list = field(default_factory=list)  # quarter-wave iterations (it, n_eff, d1, d2)
    scan: list = field(default_factory=list)  # core search samples (d_c, slope)


def design_brw(template: LayerStack, lambda_p: float = 800.0, lambda_s: float = 1550.0,
               d_c_range: tuple[float, float] = (450.0, 700.0), scan_step: float = 10.0,
               interaction: Optional[Interaction] = None) -> DesignReport:
    """Self-consistent BRW design: core thickness with a quarter-wave cladding.

    For each trial core the cladding pair is iterated to the quarter-wave
    fixed point at the idler wavelength; the core thickness that puts the
    minimum of (beta_p - beta_i) at ``lambda_p`` is then located, and the
    QPM period is computed for the final structure.
    """
    inter = interaction or default_interaction(template)
    li = idler_wavelength(lambda_p, lambda_s)
    cs = core_thickness_search(template, lambda_p, lambda_s, d_c_range, scan_step=scan_step,
                               interaction=inter, quarter_wave=True)
    qw = quarter_wave_fixed_point(cs.stack, li, inter.idler)
    q = qpm_period(qw.stack, lambda_p, lambda_s, inter)
    stack = qw.stack.replace(qpm_period=q.period)
    grid = lambda_p + DERIV_STEP * np.arange(-5, 6)
    curve = pump_idler_mismatch_curve(stack, grid, lambda_s, inter)
    return DesignReport(stack, stack.core.thickness, qw.d1, qw.d2, q.period, q.n_eff, curve.minimum,
                        qw.trace, cs.samples)
