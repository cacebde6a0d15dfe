"""Signal spectral power density of SPDC, pump/signal sweeps and pair flux.

The spectral density follows the planar (per unit transverse width) result

    dPs/dls = 16 pi^3 hbar d_eff^2 l^2 c P_p / (eps0 n_s n_p n_i ls^4 li)
              * I_ov^2 * sinc^2(dbeta l / 2),

with dbeta = beta_p - beta_s - beta_i - 2 pi / Lambda and the overlap
I_ov = int E_p E_s E_i dx of unit-normalised fields.  Everything is
evaluated in SI (P_p in W/m, I_ov in m^-1/2) and the result, W per metre of
signal wavelength for a pump of P_p per unit width, is returned in W/nm.
The chi(2) grating only exists in the core, so by default the overlap is
taken over the core.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .constants import CONSTANTS
from .materials import d_eff
from .modes import FieldProfile, ModeError, ModeSolution
from .phasematch import (Interaction, PhaseMatchError, default_interaction, idler_wavelength, qpm_period,
                         solve_family)
from .stack import LayerStack

NORM_TOL = 1e-6
X_HALF = 1.3915573782515103  # sinc^2(x) = 1/2
QUAD_REFINE = 4  # analytic overlaps are sampled at (profile spacing) / QUAD_REFINE


class PreconditionError(ValueError):
    """Raised when an input violates a documented precondition."""


@dataclass(frozen=True)
class SpdcConfig:
    stack: LayerStack
    length_mm: float = 15.0
    pump_power: float = 1.0  # mW per um of width
    lambda_p: float = 800.0  # nm, pivot of signal sweeps
    lambda_s: float = 1550.0  # nm, pivot of pump sweeps
    period_um: Optional[float] = None  # explicit QPM period; overrides everything else
    rederive_period: bool = True  # sweeps: phase match exactly at the pivot
    detection_window: Optional[float] = None  # nm, flux window for signal sweeps
    interaction: Optional[Interaction] = None
    overlap_region: str = "core"  # "core" or "all"

    def __post_init__(self):
        if not self.length_mm > 0:
            raise ValueError("interaction length must be > 0")
        if not self.pump_power > 0:
            raise ValueError("pump power must be > 0")
        if self.period_um is not None and not self.period_um > 0:
            raise ValueError("QPM period must be > 0")
        if self.detection_window is not None and not self.detection_window > 0:
            raise ValueError("detection window must be > 0")
        if self.overlap_region not in ("core", "all"):
            raise ValueError("overlap_region must be 'core' or 'all'")

    @property
    def inter(self) -> Interaction:
        return self.interaction or default_interaction(self.stack)


@dataclass(frozen=True)
class SpdcSpectrum:
    variable: str  # "lambda_p" or "lambda_s"
    grid: np.ndarray  # nm
    density: np.ndarray  # W/nm per um of width; nan at gaps
    fixed_wavelength: float  # the wavelength held constant, nm
    period_um: float
    length_mm: float
    pump_power: float
    peak: float
    peak_at: float
    fwhm: Optional[float]
    fwhm_status: str  # "ok", "unbounded" or "gap"
    gaps: list = field(default_factory=list)  # (wavelength, reason)
    pair_flux: Optional[float] = None  # pairs/s per um of width
    detection_window: Optional[float] = None

    def value_at(self, wavelength: float) -> float:
        return float(np.interp(wavelength, self.grid, self.density))


# ------------------------------------------------------------ overlap

def _trapz(y, x) -> float:
    return float(np.trapezoid(y, x))


def overlap_integral(p: FieldProfile, s: FieldProfile, i: FieldProfile, domain=None) -> float:
    """Triple overlap int E_p E_s E_i dx of normalised profiles, in nm^-1/2.

    Profiles are resampled by linear interpolation (zero outside their own
    span) onto a common grid covering the union of their domains, at the
    finest of the three spacings.  ``domain=(a, b)`` restricts the integral.
    """
    for name, prof in (("pump", p), ("signal", s), ("idler", i)):
        nrm = prof.norm2()
        if abs(nrm - 1.0) > NORM_TOL:
            raise PreconditionError(f"{name} profile is not normalised (int |E|^2 dx = {nrm:.8g})")
    lo = min(pr.x[0] for pr in (p, s, i))
    hi = max(pr.x[-1] for pr in (p, s, i))
    if domain is not None:
        lo, hi = max(lo, float(domain[0])), min(hi, float(domain[1]))
        if not hi > lo:
            return 0.0
    dx = min(pr.dx for pr in (p, s, i))
    n = max(int(math.ceil((hi - lo) / dx - 1e-9)), 1)
    x = np.linspace(lo, hi, n + 1)
    prod = np.ones_like(x)
    for pr in (p, s, i):
        prod *= np.interp(x, pr.x, pr.E, left=0.0, right=0.0)
    return _trapz(prod, x)


def _breakpoints(modes, x_end):
    pts = {0.0, float(x_end)}
    for m in modes:
        for seg in m.segments:
            for x in (seg.x0, seg.x1):
                if 0.0 < x < x_end:
                    pts.add(float(x))
    return sorted(pts)


def piecewise_overlap(modes: Sequence[ModeSolution], x_end: Optional[float] = None,
                      dx: Optional[float] = None) -> float:
    """Triple overlap over [-x_end, x_end] from the analytic mode fields (nm^-1/2).

    The integral is split at every layer interface and each piece uses the
    one-sided limits from inside it, so TM field jumps do not degrade the
    trapezoid rule.  Parity halves the work: an odd product integrates to 0.
    ``x_end`` defaults to the widest stored profile and ``dx`` to the profile
    spacing divided by ``QUAD_REFINE``.
    """
    if sum(m.parity == "odd" for m in modes) % 2:
        return 0.0
    x_end = max(m.x_max for m in modes) if x_end is None else float(x_end)
    dx = dx or min(m.dx for m in modes) / QUAD_REFINE
    total = 0.0
    pts = _breakpoints(modes, x_end)
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(int(math.ceil((b - a) / dx - 1e-9)), 1)
        x = np.linspace(a, b, n + 1)
        prod = np.ones_like(x)
        for m in modes:
            E = m.fields(x, "right")[0]
            E[-1] = m.fields(x[-1:], "left")[0][0]
            prod *= E
        total += _trapz(prod, x)
    return 2.0 * total


def core_overlap(stack: LayerStack, modes: Sequence[ModeSolution], dx: Optional[float] = None) -> float:
    """Triple overlap over the core only (nm^-1/2); see :func:`piecewise_overlap`."""
    return piecewise_overlap(modes, 0.5 * stack.core.thickness, dx)


def full_overlap(modes: Sequence[ModeSolution], dx: Optional[float] = None) -> float:
    """Triple overlap over the whole sampled structure (nm^-1/2)."""
    return piecewise_overlap(modes, None, dx)


# ------------------------------------------------------------ spectral density

def sinc(x):
    """sin(x)/x with sinc(0) = 1."""
    return np.sinc(np.asarray(x, dtype=float) / math.pi)


def density_prefactor(d_eff_pm_per_V: float, length_mm: float, pump_power: float,
                      n_eff: tuple[float, float, float], lambda_p: float, lambda_s: float,
                      overlap_nm: float) -> float:
    """Spectral density at dbeta = 0, in W/nm (per um of width).

    ``n_eff`` is (pump, signal, idler); ``overlap_nm`` is I_ov in nm^-1/2.
    """
    K = CONSTANTS
    li = idler_wavelength(lambda_p, lambda_s) * 1e-9
    ls = lambda_s * 1e-9
    d = d_eff_pm_per_V * 1e-12
    l = length_mm * 1e-3
    P = pump_power * 1e-3 / 1e-6  # mW/um -> W/m
    iov = overlap_nm * math.sqrt(1e9)  # nm^-1/2 -> m^-1/2
    n_p, n_s, n_i = n_eff
    per_m = 16 * math.pi ** 3 * K.hbar * d * d * l * l * K.c * P / (K.epsilon0 * n_s * n_p * n_i * ls ** 4 * li)
    return per_m * iov * iov * 1e-9


def _period(config: SpdcConfig, pivot: Optional[tuple[float, float]] = None) -> float:
    if config.period_um is not None:
        return float(config.period_um)
    if pivot is not None and config.rederive_period:
        return qpm_period(config.stack, pivot[0], pivot[1], config.inter).period
    if config.stack.qpm_period is None:
        raise PhaseMatchError(f"stack {config.stack.name!r} has no QPM period; set one in the config")
    return float(config.stack.qpm_period)


def _overlap(config: SpdcConfig, modes) -> float:
    if config.overlap_region == "core":
        return core_overlap(config.stack, modes)
    return full_overlap(modes)


@dataclass(frozen=True)
class SpdcPoint:
    lambda_p: float
    lambda_s: float
    lambda_i: float
    density: float  # W/nm per um
    delta_beta: float  # rad/um
    overlap: float  # nm^-1/2
    n_eff: tuple[float, float, float]


def _evaluate(config: SpdcConfig, period: float, modes) -> SpdcPoint:
    mp, ms, mi = modes
    core = config.stack.core.material
    iov = _overlap(config, modes)
    db = mp.beta - ms.beta - mi.beta - 2 * math.pi / period
    n = (mp.n_eff, ms.n_eff, mi.n_eff)
    pre = density_prefactor(d_eff(core), config.length_mm, config.pump_power, n,
                            mp.wavelength, ms.wavelength, iov)
    x = db * config.length_mm * 1e3 / 2  # rad/um * um
    return SpdcPoint(mp.wavelength, ms.wavelength, mi.wavelength, pre * float(sinc(x)) ** 2, db, iov, n)


def spectral_point(config: SpdcConfig, lambda_p: float, lambda_s: float,
                   period_um: Optional[float] = None) -> SpdcPoint:
    inter = config.inter
    li = idler_wavelength(lambda_p, lambda_s)
    period = period_um if period_um is not None else _period(config)
    modes = []
    for fam, lam, label in ((inter.pump, lambda_p, "pump"), (inter.signal, lambda_s, "signal"),
                            (inter.idler, li, "idler")):
        try:
            modes.append(solve_family(config.stack, fam, lam))
        except ModeError as exc:
            raise type(exc)(f"{label} at {lam:.4f} nm: {exc}") from exc
    return _evaluate(config, period, modes)


def spectral_density(config: SpdcConfig, lambda_p: float, lambda_s: float,
                     period_um: Optional[float] = None) -> float:
    """dPs/dls at one (lambda_p, lambda_s), W/nm per um of width.

    The QPM period is ``period_um``, else ``config.period_um``, else the
    stack's own period.
    """
    return spectral_point(config, lambda_p, lambda_s, period_um).density


# ------------------------------------------------------------ sweeps

def _check_grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise ValueError("sweep grid must be a non-empty 1-D sequence")
    if g.size > 1 and np.any(np.diff(g) <= 0):
        raise ValueError("sweep grid must be strictly increasing")
    return g


def _crossing(grid, y, k_peak, half, direction):
    """Half-max crossing walking away from the peak; returns (x or None, status)."""
    k = k_peak
    while True:
        j = k + direction
        if j < 0 or j >= y.size:
            return None, "unbounded"
        if not math.isfinite(y[j]):
            return None, "gap"
        if y[j] < half:
            x0, x1, y0, y1 = grid[k], grid[j], y[k], y[j]
            return float(x0 + (half - y0) * (x1 - x0) / (y1 - y0)), "ok"
        k = j


def fwhm(grid, values) -> tuple[Optional[float], str, float, float]:
    """Full width at half maximum by linear interpolation of the crossings.

    Returns (fwhm or None, status, peak, peak location).  ``status`` is
    "unbounded" when a side never drops below half maximum inside the grid
    and "gap" when a missing sample interrupts the half-max region.
    """
    g = np.asarray(grid, dtype=float)
    y = np.asarray(values, dtype=float)
    finite = np.isfinite(y)
    if not finite.any():
        return None, "gap", math.nan, math.nan
    k = int(np.nanargmax(np.where(finite, y, -np.inf)))
    peak = float(y[k])
    if not peak > 0:
        return None, "unbounded", peak, float(g[k])
    half = 0.5 * peak
    left, sl = _crossing(g, y, k, half, -1)
    right, sr = _crossing(g, y, k, half, +1)
    status = "gap" if "gap" in (sl, sr) else ("unbounded" if "unbounded" in (sl, sr) else "ok")
    width = right - left if status == "ok" else None
    return width, status, peak, float(g[k])


def _sweep(config: SpdcConfig, grid, variable: str) -> SpdcSpectrum:
    g = _check_grid(grid)
    inter = config.inter
    stack = config.stack
    lp0, ls0 = config.lambda_p, config.lambda_s
    period = _period(config, (lp0, ls0))
    fixed = ls0 if variable == "lambda_p" else lp0
    fixed_fam = inter.signal if variable == "lambda_p" else inter.pump
    fixed_mode = solve_family(stack, fixed_fam, fixed)
    swept_fam = inter.pump if variable == "lambda_p" else inter.signal
    dens = np.full(g.shape, np.nan)
    gaps = []
    guess_sw = guess_i = None
    for k, lam in enumerate(g):
        lp, ls = (lam, fixed) if variable == "lambda_p" else (fixed, lam)
        try:
            li = idler_wavelength(lp, ls)
            try:
                msw = solve_family(stack, swept_fam, lam, guess_sw)
                mi = solve_family(stack, inter.idler, li, guess_i)
            except ModeError:
                msw = solve_family(stack, swept_fam, lam)
                mi = solve_family(stack, inter.idler, li)
        except (ModeError, ValueError) as exc:
            gaps.append((float(lam), str(exc)))
            guess_sw = guess_i = None
            continue
        guess_sw, guess_i = msw.n_eff, mi.n_eff
        modes = (msw, fixed_mode, mi) if variable == "lambda_p" else (fixed_mode, msw, mi)
        dens[k] = _evaluate(config, period, modes).density
    width, status, peak, peak_at = fwhm(g, dens)
    spectrum = SpdcSpectrum(variable, g, dens, float(fixed), period, config.length_mm, config.pump_power,
                        peak, peak_at, width, status, gaps)
    if variable == "lambda_s" and config.detection_window is not None:
        spectrum = replace(spectrum, pair_flux=pair_flux(spectrum, config.detection_window, ls0),
                       detection_window=config.detection_window)
    return spectrum


def pump_sweep(config: SpdcConfig, lambda_p_grid: Sequence[float]) -> SpdcSpectrum:
    """Spectral density versus pump wavelength at fixed ``config.lambda_s``.

    Unless ``config.period_um`` is given, the QPM period is re-derived so the
    pivot (``config.lambda_p``, ``config.lambda_s``) is exactly phase matched.
    Points where a mode cannot be solved are recorded in ``gaps``.
    """
    return _sweep(config, lambda_p_grid, "lambda_p")


def signal_sweep(config: SpdcConfig, lambda_s_grid: Sequence[float]) -> SpdcSpectrum:
    """Spectral density versus signal wavelength at fixed ``config.lambda_p``."""
    return _sweep(config, lambda_s_grid, "lambda_s")


# ------------------------------------------------------------ flux

def pair_flux(spectrum: SpdcSpectrum, window: float, center: Optional[float] = None) -> float:
    """Pairs/s (per um of width) detected in a signal window.

    Integrates the spectral density over ``[center - window/2, center + window/2]``
    by the trapezoid rule (end values interpolated) and divides by the
    photon energy h c / center.  ``center`` defaults to the peak location.
    """
    if spectrum.variable != "lambda_s":
        raise ValueError("pair flux needs a spectrum over the signal wavelength")
    if not window > 0:
        raise ValueError("detection window must be > 0")
    c = spectrum.peak_at if center is None else float(center)
    a, b = c - 0.5 * window, c + 0.5 * window
    g, y = spectrum.grid, spectrum.density
    if a < g[0] - 1e-9 or b > g[-1] + 1e-9:
        raise ValueError(f"detection window [{a:g}, {b:g}] nm is outside the sweep grid "
                         f"[{g[0]:g}, {g[-1]:g}] nm")
    inner = (g > a) & (g < b)
    x = np.concatenate(([a], g[inner], [b]))
    v = np.concatenate(([np.interp(a, g, y)], y[inner], [np.interp(b, g, y)]))
    if not np.all(np.isfinite(v)):
        raise ValueError("detection window overlaps a gap in the spectrum")
    power = _trapz(v, x)  # W
    photon = CONSTANTS.h * CONSTANTS.c / (c * 1e-9)
    return power / photon
