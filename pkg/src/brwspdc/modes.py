"""TIR and Bragg (BRW) mode solvers for symmetric planar layer stacks.

Both solvers scan a real dispersion function on a uniform n_eff grid and
refine every bracketed sign change with Brent's method.  The symmetric stack
is handled one parity at a time, starting from the core centre with
``(psi, u) = (1, 0)`` (even) or ``(0, 1)`` (odd).

* TIR modes: the core solution is matched at the core edge against the
  solution that decays into the semi-infinite exterior, carried inward
  through all cladding layers (inward propagation of a decaying field is
  numerically stable).
* BRW modes: the core solution at the core edge must be the decaying Bloch
  eigenvector of one cladding period (semi-infinite periodic cladding).

Stored profiles hold the physical transverse electric field: E_y for TE and
E_x ~ H_y / n^2 for TM, normalised to unit L2 norm on the stored grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .stack import (LayerStack, bilayer_entries, bloch_eigen, check_pol, layer_entries)

SCAN_STEP = 1e-4
XTOL = 1e-13
DEFAULT_DX = 1.0  # nm
TAIL_MAX = 2000.0  # nm
TAIL_REL = 1e-6
N_EFF_FLOOR = 1.0


class ModeError(RuntimeError):
    pass


class ModeNotFoundError(ModeError):
    pass


class NumericFailureError(ModeError):
    def __init__(self, msg, bracket=None):
        super().__init__(msg if bracket is None else f"{msg} (bracket {bracket})")
        self.bracket = bracket


@dataclass(frozen=True)
class FieldProfile:
    x: np.ndarray  # nm, uniform, symmetric about the core centre
    E: np.ndarray
    dx: float

    def norm2(self) -> float:
        return float(np.trapezoid(self.E * self.E, self.x))


@dataclass(frozen=True)
class _Segment:
    x0: float
    x1: float  # may be inf for the exterior tail
    eps: float
    w: float
    psi: float
    u: float


@dataclass(frozen=True)
class ModeSolution:
    wavelength: float  # nm
    polarization: str
    kind: str  # "TIR" | "BRW"
    parity: str  # "even" | "odd"
    n_eff: float
    leakage_residual: float
    bloch_factor: Optional[float] = None
    segments: tuple = field(default=(), repr=False)
    x_max: float = field(default=0.0, repr=False)
    dx: float = field(default=DEFAULT_DX, repr=False)

    @property
    def beta(self) -> float:
        """Propagation constant in rad/um."""
        return 2 * math.pi * self.n_eff / (self.wavelength * 1e-3)

    @cached_property
    def _normalized(self):
        K = int(math.ceil(self.x_max / self.dx - 1e-9))
        x = self.dx * np.arange(-K, K + 1, dtype=float)
        # At a TM interface E jumps.  The sample there is the signed RMS of the
        # two one-sided limits, so the trapezoid sum of E^2 equals the
        # piecewise (jump-aware) trapezoid rule and stays second order in dx.
        er, el = self._raw(x, "right")[0], self._raw(x, "left")[0]
        E = np.where(er == el, er, np.sign(er + el) * np.sqrt(0.5 * (er * er + el * el)))
        nrm, sign = _norm_and_sign(FieldProfile(x, E, self.dx), self.parity)
        scale = sign / nrm
        return FieldProfile(x, E * scale, self.dx), scale

    @property
    def profile(self) -> FieldProfile:
        return self._normalized[0]

    def fields(self, x, side: str = "right"):
        """Analytic (E, psi, u) at positions ``x`` (nm), normalised like the profile.

        ``u = psi' / (k0 w)`` is the quantity continuous across interfaces.
        ``side`` picks the one-sided limit at an interface.
        """
        scale = self._normalized[1]
        E, psi, u = self._raw(x, side)
        return E * scale, psi * scale, u * scale

    def _raw(self, x, side):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        k0 = 2 * math.pi / self.wavelength
        ax = np.abs(x)
        psi = np.zeros_like(ax)
        u = np.zeros_like(ax)
        eps = np.ones_like(ax)
        # mirrored points see the opposite one-sided limit
        right = (x >= 0) if side == "right" else (x > 0)
        amax = ax.max() if ax.size else 0.0
        for i, seg in enumerate(self.segments):
            if seg.x0 > amax:
                break
            lo_in = (ax >= seg.x0) & (ax < seg.x1)
            hi_in = (ax > seg.x0) & (ax <= seg.x1)
            if side == "right":
                inside = np.where(right, lo_in, hi_in)
            else:
                inside = np.where(right, hi_in, lo_in)
            if i == 0:
                inside |= ax == 0
            if not inside.any():
                continue
            p, uu = _segment_eval(seg, ax[inside], self.n_eff, k0)
            psi[inside], u[inside], eps[inside] = p, uu, seg.eps
        sign = np.where(x >= 0, 1.0, -1.0)
        if self.parity == "odd":
            psi = psi * sign
        else:
            u = u * sign
        E = psi if self.polarization == "TE" else psi / eps
        return E, psi, u


def _segment_eval(seg: _Segment, ax, n_eff, k0):
    t = ax - seg.x0
    if math.isinf(seg.x1):
        p = math.sqrt(max(n_eff * n_eff - seg.eps, 0.0))
        decay = np.exp(-k0 * p * t)
        return seg.psi * decay, seg.u * decay
    a, b, c, d = layer_entries(seg.eps, n_eff, k0 * t, seg.w)
    return a * seg.psi + b * seg.u, c * seg.psi + d * seg.u


# ------------------------------------------------------------ dispersion fns

def _weights(eps, pol):
    return 1.0 if pol == "TE" else eps


def _layer_eps(stack: LayerStack, lam: float):
    n = stack.indices(lam)
    return {k: v * v for k, v in n.items()}


def _core_edge_state(stack, lam, n_eff, pol, parity):
    e = _layer_eps(stack, lam)["core"]
    k0 = 2 * math.pi / lam
    a, b, c, d = layer_entries(e, n_eff, k0 * 0.5 * stack.core.thickness, _weights(e, pol))
    if parity == "even":
        return a, c
    return b, d


def _exterior_inward(stack, lam, n_eff, pol, n_bilayers=None):
    """Decaying exterior solution carried to the core edge (normalised)."""
    eps = _layer_eps(stack, lam)
    k0 = 2 * math.pi / lam
    n_eff = np.asarray(n_eff, dtype=float)
    p = np.sqrt(np.maximum(n_eff * n_eff - eps["exterior"], 0.0))
    psi = np.ones_like(n_eff)
    u = -p / _weights(eps["exterior"], pol)
    layers = [(eps["n1"], stack.bilayer[0].thickness), (eps["n2"], stack.bilayer[1].thickness)]
    nb = stack.n_bilayers if n_bilayers is None else n_bilayers
    for e, d in (layers * nb)[::-1]:
        a, b, c, dd = layer_entries(e, n_eff, k0 * d, _weights(e, pol))
        psi, u = dd * psi - b * u, -c * psi + a * u
        s = np.hypot(psi, u)
        psi, u = psi / s, u / s
    return psi, u


def tir_dispersion(stack: LayerStack, lam: float, n_eff, pol: str = "TM", parity: str = "even",
                   n_bilayers=None):
    """Normalised core-edge mismatch; zero at a TIR mode."""
    pi_, ui = _core_edge_state(stack, lam, n_eff, pol, parity)
    po, uo = _exterior_inward(stack, lam, n_eff, pol, n_bilayers)
    return (pi_ * uo - ui * po) / np.hypot(pi_, ui)


def _bilayer(stack, lam, n_eff, pol):
    eps = _layer_eps(stack, lam)
    return bilayer_entries(eps["n1"], eps["n2"], stack.bilayer[0].thickness,
                           stack.bilayer[1].thickness, lam, n_eff, pol)


def brw_dispersion(stack: LayerStack, lam: float, n_eff, pol: str = "TM", parity: str = "even"):
    """Zero when the core-edge field is a Bloch eigenvector of one period."""
    psi, u = _core_edge_state(stack, lam, n_eff, pol, parity)
    s = np.hypot(psi, u)
    psi, u = psi / s, u / s
    a, b, c, d = _bilayer(stack, lam, n_eff, pol)
    return (c * psi * psi + (d - a) * psi * u - b * u * u) / np.sqrt(a * a + b * b + c * c + d * d)


def cladding_half_trace(stack: LayerStack, lam: float, n_eff, pol: str = "TM"):
    a, _, _, d = _bilayer(stack, lam, n_eff, pol)
    return 0.5 * (a + d)


# ------------------------------------------------------------ scanning

def _scan_grid(lo, hi, step):
    n = max(int(math.ceil((hi - lo) / step)), 1) + 1
    span = hi - lo
    return lo + span * np.linspace(1e-9, 1 - 1e-9, n)


def _refine_roots(fn, grid, values):
    """Brent-refine every sign change of ``values`` sampled on ``grid``."""
    roots = []
    sgn = np.sign(values)
    idx = np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]
    for i in idx:
        lo, hi = float(grid[i]), float(grid[i + 1])
        try:
            r = brentq(lambda v: float(fn(np.array(v))), lo, hi, xtol=XTOL, rtol=4 * np.finfo(float).eps,
                       maxiter=200)
        except (RuntimeError, ValueError) as exc:
            raise NumericFailureError("n_eff refinement did not converge", (lo, hi)) from exc
        roots.append(r)
    for i in np.nonzero(sgn == 0)[0]:
        roots.append(float(grid[i]))
    return sorted(roots, reverse=True)


def cladding_band_top(stack: LayerStack, lam: float, pol: str = "TM", lower: Optional[float] = None,
                      step: float = SCAN_STEP) -> Optional[float]:
    """Highest n_eff at which the periodic cladding carries a propagating Bloch wave.

    Searches down to ``lower`` (default: the exterior index); returns None if
    the cladding is in a stop band over that whole range.
    """
    n = stack.indices(lam)
    top = max(n["n1"], n["n2"])
    lower = n["exterior"] if lower is None else lower
    if top <= lower:
        return None
    grid = _scan_grid(lower, top, step)
    h = cladding_half_trace(stack, lam, grid, pol)
    allowed = np.nonzero(np.abs(h) <= 1.0)[0]
    if allowed.size == 0:
        return None
    i = allowed[-1]
    if i == grid.size - 1:
        return top
    target = math.copysign(1.0, h[i + 1])
    return brentq(lambda v: float(cladding_half_trace(stack, lam, np.array(v), pol)) - target,
                  grid[i], grid[i + 1], xtol=XTOL)


def tir_window(stack: LayerStack, lam: float, pol: str = "TM") -> tuple[float, float]:
    """Admissible (lo, hi) effective-index window for core-guided TIR modes."""
    n = stack.indices(lam)
    lo = n["exterior"]
    top = cladding_band_top(stack, lam, pol, lower=lo)
    if top is not None:
        lo = max(lo, top)
    return lo, n["core"]


# ------------------------------------------------------------ profiles

def _tail_length(amp, peak, k0p, tail_factor):
    if k0p <= 0:
        return TAIL_MAX * tail_factor
    need = math.log(max(abs(amp), 1e-300) / (TAIL_REL * peak)) / k0p if abs(amp) > TAIL_REL * peak else 0.0
    return min(max(need, 0.0), TAIL_MAX) * tail_factor


def _finish(kind, stack, lam, pol, parity, n_eff, segments, x_max, dx, residual, bloch=None):
    return ModeSolution(float(lam), pol, kind, parity, float(n_eff), float(residual), bloch,
                        tuple(segments), float(x_max), float(dx))


def _norm_and_sign(profile: FieldProfile, parity: Optional[str] = None):
    nrm = math.sqrt(profile.norm2())
    if nrm == 0 or not math.isfinite(nrm):
        raise ValueError("cannot normalise an identically zero field")
    c = int(np.argmin(np.abs(profile.x)))
    E = profile.E
    if parity is None:
        parity = "even" if abs(E[c]) > 1e-6 * np.max(np.abs(E)) else "odd"
    if parity == "even":
        sign = -1.0 if E[c] < 0 else 1.0
    else:
        j = min(c + 1, E.size - 1)
        sign = -1.0 if E[j] - E[c] < 0 else 1.0
    return nrm, sign


def normalize_profile(profile: FieldProfile, parity: Optional[str] = None) -> FieldProfile:
    """Unit-L2-norm copy (trapezoid on the stored grid) with the sign convention
    E(centre) >= 0 for even fields and positive central slope for odd ones."""
    nrm, sign = _norm_and_sign(profile, parity)
    return FieldProfile(profile.x.copy(), profile.E * (sign / nrm), profile.dx)


def _tir_segments(stack, lam, n_eff, pol, parity):
    eps = _layer_eps(stack, lam)
    k0 = 2 * math.pi / lam
    xc = 0.5 * stack.core.thickness
    a, b, c, d = (float(v) for v in layer_entries(eps["core"], n_eff, k0 * xc, _weights(eps["core"], pol)))
    v0 = (1.0, 0.0) if parity == "even" else (0.0, 1.0)
    vin = (a * v0[0] + b * v0[1], c * v0[0] + d * v0[1])
    # inward from the exterior boundary, keeping per-interface states
    p = math.sqrt(max(n_eff * n_eff - eps["exterior"], 0.0))
    psi, u, logs = 1.0, -p / _weights(eps["exterior"], pol), 0.0
    layers = [(eps["n1"], stack.bilayer[0].thickness), (eps["n2"], stack.bilayer[1].thickness)] * stack.n_bilayers
    states = [(psi, u, logs)]
    for e, dd in layers[::-1]:
        aa, bb, cc, d4 = (float(v) for v in layer_entries(e, n_eff, k0 * dd, _weights(e, pol)))
        psi, u = d4 * psi - bb * u, -cc * psi + aa * u
        s = math.hypot(psi, u)
        psi, u, logs = psi / s, u / s, logs + math.log(s)
        states.append((psi, u, logs))
    states = states[::-1]  # states[k] at the k-th interface counted from the core edge
    pe, ue, le = states[0]
    match = (vin[0] * pe + vin[1] * ue) / (pe * pe + ue * ue)
    residual = abs(vin[0] * ue - vin[1] * pe) / math.hypot(*vin)
    segs = [_Segment(0.0, xc, eps["core"], _weights(eps["core"], pol), v0[0], v0[1])]
    x = xc
    for k, (e, dd) in enumerate(layers):
        ps, us, ls = states[k]
        f = match * math.exp(ls - le)
        segs.append(_Segment(x, x + dd, e, _weights(e, pol), f * ps, f * us))
        x += dd
    ps, us, ls = states[-1]
    f = match * math.exp(ls - le)
    segs.append(_Segment(x, math.inf, eps["exterior"], _weights(eps["exterior"], pol), f * ps, f * us))
    return segs, residual, p


def _leakage_tir(stack, lam, n_eff, pol, segs):
    """Angle between the finite-stack exterior solution and the decaying Bloch
    eigenvector at the core edge: zero when the cladding fully isolates the core."""
    a, b, c, d = (float(v) for v in _bilayer(stack, lam, n_eff, pol))
    mu, _ = bloch_eigen(0.5 * (a + d))
    if abs(mu.imag) > 0:
        return 1.0
    mu = mu.real
    ev = (b, mu - a) if abs(b) + abs(mu - a) > abs(mu - d) + abs(c) else (mu - d, c)
    s = segs[1]
    return abs(s.psi * ev[1] - s.u * ev[0]) / (math.hypot(s.psi, s.u) * math.hypot(*ev))


def _tir_mode(stack, lam, n_eff, pol, parity, dx, tail_factor):
    segs, _, p = _tir_segments(stack, lam, n_eff, pol, parity)
    k0 = 2 * math.pi / lam
    peak = max(abs(s.psi) for s in segs[:-1]) or 1.0
    tail = _tail_length(segs[-1].psi, peak, k0 * p, tail_factor)
    leak = _leakage_tir(stack, lam, n_eff, pol, segs)
    return _finish("TIR", stack, lam, pol, parity, n_eff, segs, stack.half_width + tail, dx, leak)


def find_tir_modes(stack: LayerStack, wavelength_nm: float, pol: Optional[str] = None,
                   step: float = SCAN_STEP, dx: float = DEFAULT_DX, tail_factor: float = 1.0,
                   window: Optional[tuple[float, float]] = None) -> list[ModeSolution]:
    """All core-guided TIR modes, highest n_eff (fundamental) first.

    The admissible window runs from the larger of the exterior index and the
    top of the cladding's highest Bloch band up to the core index; for a
    uniform cladding this is the usual (n_clad, n_core).  An empty list means
    no guided mode.
    """
    pol = check_pol(pol or stack.polarization)
    lam = float(wavelength_nm)
    lo, hi = window if window is not None else tir_window(stack, lam, pol)
    if hi <= lo:
        return []
    grid = _scan_grid(lo, hi, step)
    found = []
    for parity in ("even", "odd"):
        fn = lambda n, par=parity: tir_dispersion(stack, lam, n, pol, par)
        for r in _refine_roots(fn, grid, fn(grid)):
            found.append(_tir_mode(stack, lam, r, pol, parity, dx, tail_factor))
    return sorted(found, key=lambda m: -m.n_eff)


def brw_window(stack: LayerStack, lam: float, floor: float = N_EFF_FLOOR) -> tuple[float, float]:
    n = stack.indices(lam)
    return floor, min(n.values())


def stop_bands(stack: LayerStack, lam: float, pol: str = "TM", window=None, step: float = SCAN_STEP):
    """Sampled (lo, hi) n_eff intervals where the cladding is in a stop band."""
    lo, hi = window or brw_window(stack, lam)
    grid = _scan_grid(lo, hi, step)
    stop = np.abs(cladding_half_trace(stack, lam, grid, pol)) > 1
    bands, start = [], None
    for g, s in zip(grid, stop):
        if s and start is None:
            start = g
        if not s and start is not None:
            bands.append((float(start), float(g)))
            start = None
    if start is not None:
        bands.append((float(start), float(grid[-1])))
    return bands


def brw_candidates(stack: LayerStack, lam: float, pol: str, parity: str, window=None,
                   step: float = SCAN_STEP) -> list[float]:
    """Stop-band Bloch-matched roots (decaying branch only), descending."""
    lo, hi = window or brw_window(stack, lam)
    if hi <= lo:
        return []
    grid = _scan_grid(lo, hi, step)
    fn = lambda n: brw_dispersion(stack, lam, n, pol, parity)
    out = []
    for r in _refine_roots(fn, grid, fn(grid)):
        a, b, c, d = (float(v) for v in _bilayer(stack, lam, r, pol))
        h = 0.5 * (a + d)
        if abs(h) <= 1:
            continue
        mu_dec, mu_grow = (m.real for m in bloch_eigen(h))
        psi, u = (float(v) for v in _core_edge_state(stack, lam, r, pol, parity))
        bv = (a * psi + b * u, c * psi + d * u)
        r_dec = math.hypot(bv[0] - mu_dec * psi, bv[1] - mu_dec * u)
        r_grow = math.hypot(bv[0] - mu_grow * psi, bv[1] - mu_grow * u)
        if r_dec < r_grow:
            out.append(r)
    return out


def _brw_segments(stack, lam, n_eff, pol, parity, extra_periods):
    eps = _layer_eps(stack, lam)
    k0 = 2 * math.pi / lam
    xc = 0.5 * stack.core.thickness
    a, b, c, d = (float(v) for v in layer_entries(eps["core"], n_eff, k0 * xc, _weights(eps["core"], pol)))
    v0 = (1.0, 0.0) if parity == "even" else (0.0, 1.0)
    psi, u = a * v0[0] + b * v0[1], c * v0[0] + d * v0[1]
    ba, bb, bc, bd = (float(v) for v in _bilayer(stack, lam, n_eff, pol))
    mu = bloch_eigen(0.5 * (ba + bd))[0].real
    segs = [_Segment(0.0, xc, eps["core"], _weights(eps["core"], pol), v0[0], v0[1])]
    x = xc
    e1, e2 = eps["n1"], eps["n2"]
    d1, d2 = stack.bilayer[0].thickness, stack.bilayer[1].thickness
    a1, b1, c1, dd1 = (float(v) for v in layer_entries(e1, n_eff, k0 * d1, _weights(e1, pol)))
    for k in range(stack.n_bilayers + extra_periods):
        f = mu ** k
        p0, u0 = f * psi, f * u
        segs.append(_Segment(x, x + d1, e1, _weights(e1, pol), p0, u0))
        p1, u1 = a1 * p0 + b1 * u0, c1 * p0 + dd1 * u0
        segs.append(_Segment(x + d1, x + d1 + d2, e2, _weights(e2, pol), p1, u1))
        x += d1 + d2
    return segs, mu


def find_brw_mode(stack: LayerStack, wavelength_nm: float, pol: Optional[str] = None,
                  parity: str = "even", step: float = SCAN_STEP, dx: float = DEFAULT_DX,
                  tail_factor: float = 1.0, window: Optional[tuple[float, float]] = None) -> ModeSolution:
    """Highest-index Bragg-guided mode of the given parity.

    The mode lies below every material index and inside a cladding stop band;
    the cladding field is the decaying Bloch wave of the semi-infinite
    periodic cladding, sampled over the stack plus a tail window.
    """
    pol = check_pol(pol or stack.polarization)
    if parity not in ("even", "odd"):
        raise ValueError("parity must be 'even' or 'odd'")
    lam = float(wavelength_nm)
    win = window or brw_window(stack, lam)
    roots = brw_candidates(stack, lam, pol, parity, win, step)
    if not roots:
        raise ModeNotFoundError(
            f"no {parity} BRW mode at {lam:g} nm in n_eff window ({win[0]:.4f}, {win[1]:.4f}); "
            f"stop bands scanned: {[(round(a, 4), round(b, 4)) for a, b in stop_bands(stack, lam, pol, win, step)]}")
    n_eff = roots[0]
    segs, mu = _brw_segments(stack, lam, n_eff, pol, parity, 0)
    peak = max(abs(s.psi) for s in segs) or 1.0
    # extend the periodic cladding until the Bloch envelope is negligible or TAIL_MAX
    amp = abs(segs[-2].psi) if len(segs) > 1 else 1.0
    extra = 0
    period = stack.period
    while extra * period < TAIL_MAX * tail_factor and amp * abs(mu) ** extra > TAIL_REL * peak:
        extra += 1
    segs, mu = _brw_segments(stack, lam, n_eff, pol, parity, extra)
    x_max = stack.half_width + extra * period
    leak = abs(mu) ** stack.n_bilayers
    return _finish("BRW", stack, lam, pol, parity, n_eff, segs, x_max, dx, leak, bloch=mu)


def fundamental_tir(stack: LayerStack, wavelength_nm: float, pol: Optional[str] = None, **kw) -> ModeSolution:
    modes = [m for m in find_tir_modes(stack, wavelength_nm, pol, **kw) if m.parity == "even"]
    if not modes:
        raise ModeNotFoundError(f"no guided TIR mode at {wavelength_nm:g} nm")
    return modes[0]


def solve_mode(stack: LayerStack, wavelength_nm: float, kind: str, pol: Optional[str] = None,
               parity: str = "even", **kw) -> ModeSolution:
    if kind == "TIR":
        modes = [m for m in find_tir_modes(stack, wavelength_nm, pol, **kw) if m.parity == parity]
        if not modes:
            raise ModeNotFoundError(f"no {parity} TIR mode at {wavelength_nm:g} nm")
        return modes[0]
    if kind == "BRW":
        return find_brw_mode(stack, wavelength_nm, pol, parity, **kw)
    raise ValueError(f"kind must be TIR or BRW, got {kind!r}")
