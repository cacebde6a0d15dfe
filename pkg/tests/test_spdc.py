import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from brwspdc import phasematch as P, spdc as S
from brwspdc.constants import CONSTANTS
from brwspdc.materials import d_eff
from brwspdc.modes import FieldProfile, fundamental_tir

from conftest import grid


def uniform(w, dx=0.5, pad=100.0):
    x = np.arange(-w / 2 - pad, w / 2 + pad + 1e-9, dx)
    E = np.where(np.abs(x) <= w / 2, 1 / math.sqrt(w), 0.0)
    # make the edges exact for the trapezoid rule
    return FieldProfile(x, E / math.sqrt(np.trapezoid(E * E, x)), dx)


def x_half_bisection():
    f = lambda x: (math.sin(x) / x) ** 2 - 0.5
    lo, hi = 1.0, 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_x_half_constant():
    assert S.X_HALF == pytest.approx(x_half_bisection(), abs=1e-12)


@pytest.mark.parametrize("w", [100.0, 400.0, 1000.0])
def test_uniform_overlap(w):
    p = uniform(w)
    assert S.overlap_integral(p, p, p) == pytest.approx(1 / math.sqrt(w), rel=5e-3)


def test_uniform_overlap_exact_on_aligned_grid():
    x = np.linspace(-200.0, 200.0, 401)
    E = np.full_like(x, 1 / math.sqrt(400.0))
    p = FieldProfile(x, E, 1.0)
    assert S.overlap_integral(p, p, p) == pytest.approx(1 / 20.0, rel=1e-12)


def test_parity_gives_zero():
    x = np.arange(-2000.0, 2000.01, 1.0)
    g = np.exp(-(x / 300) ** 2)
    even = FieldProfile(x, g / math.sqrt(np.trapezoid(g * g, x)), 1.0)
    o = x * g
    odd = FieldProfile(x, o / math.sqrt(np.trapezoid(o * o, x)), 1.0)
    assert abs(S.overlap_integral(even, even, odd)) < 1e-12


def test_unnormalised_profile_rejected():
    x = np.arange(-100.0, 100.01, 1.0)
    p = FieldProfile(x, np.ones_like(x), 1.0)
    with pytest.raises(S.PreconditionError):
        S.overlap_integral(p, p, p)


@pytest.mark.parametrize("lam", [800.0, 1550.0])
def test_conventional_overlap_fine_grid(conv, lam):
    m = fundamental_tir(conv, lam)
    p = m.profile
    x = np.arange(p.x[0], p.x[-1] + 1e-9, 0.25 * p.dx)
    E = m.fields(x)[0]
    E = E / math.sqrt(np.trapezoid(E * E, x))
    assert S.overlap_integral(p, p, p) == pytest.approx(np.trapezoid(E ** 3, x), rel=1e-5)


def test_piecewise_parity_shortcut(conv):
    even = fundamental_tir(conv, 800.0)
    odd = [m for m in P.find_tir_modes(conv, 800.0) if m.parity == "odd"][0]
    assert S.full_overlap((even, even, odd)) == 0.0


def test_sinc():
    assert S.sinc(0.0) == 1.0
    assert S.sinc(math.pi) == pytest.approx(0.0, abs=1e-16)
    np.testing.assert_allclose(S.sinc([0.5, 2.0]), [math.sin(0.5) / 0.5, math.sin(2.0) / 2.0], rtol=1e-15)


@pytest.fixture(scope="module")
def phase_matched(brw):
    q = P.qpm_period(brw, 800.0, 1550.0)
    cfg = S.SpdcConfig(brw, period_um=q.period)
    return cfg, S.spectral_point(cfg, 800.0, 1550.0)


def test_density_at_phase_match_is_prefactor(phase_matched):
    cfg, pt = phase_matched
    assert abs(pt.delta_beta) < 1e-9
    pre = S.density_prefactor(d_eff(cfg.stack.core.material), 15.0, 1.0, pt.n_eff, 800.0, 1550.0, pt.overlap)
    assert pt.density == pytest.approx(pre, rel=1e-12)


def test_density_prefactor_by_hand():
    K = CONSTANTS
    li = 800.0 * 1550.0 / 750.0
    hand = (16 * math.pi ** 3 * K.hbar * (2e-12) ** 2 * (0.01) ** 2 * K.c * 1000.0
            / (K.epsilon0 * 2.0 * 2.1 * 2.2 * (1550e-9) ** 4 * (li * 1e-9)) * (0.03 ** 2 * 1e9) * 1e-9)
    assert S.density_prefactor(2.0, 10.0, 1.0, (2.1, 2.0, 2.2), 800.0, 1550.0, 0.03) == pytest.approx(hand,
                                                                                                     rel=1e-14)


@settings(max_examples=20, deadline=None)
@given(factor=st.floats(0.01, 100.0))
def test_pump_power_linearity(phase_matched, factor):
    cfg, pt = phase_matched
    scaled = S.spectral_density(replace(cfg, pump_power=factor), 800.0, 1550.0)
    assert scaled == pytest.approx(factor * pt.density, rel=1e-13)


def test_pump_power_linearity_detuned(brw, phase_matched):
    cfg, _ = phase_matched
    a = S.spectral_density(cfg, 803.0, 1551.0)
    assert S.spectral_density(replace(cfg, pump_power=10.0), 803.0, 1551.0) == pytest.approx(10 * a, rel=1e-13)


def test_length_squared_at_peak(phase_matched):
    cfg, pt = phase_matched
    for k in (0.5, 2.0, 3.0):
        v = S.spectral_density(replace(cfg, length_mm=15.0 * k), 800.0, 1550.0)
        assert v == pytest.approx(k * k * pt.density, rel=1e-9)


def test_config_validation(brw):
    for kw in ({"length_mm": 0}, {"pump_power": -1}, {"period_um": 0}, {"detection_window": 0},
               {"overlap_region": "cladding"}):
        with pytest.raises(ValueError):
            S.SpdcConfig(brw, **kw)


def test_missing_period(conv):
    with pytest.raises(P.PhaseMatchError, match="no QPM period"):
        S.spectral_density(S.SpdcConfig(conv), 800.0, 1550.0)


def test_fwhm_helper():
    g = np.linspace(-5, 5, 1001)
    y = np.exp(-g ** 2)
    w, status, peak, at = S.fwhm(g, y)
    assert status == "ok" and w == pytest.approx(2 * math.sqrt(math.log(2)), rel=1e-4)
    assert peak == 1.0 and at == 0.0
    assert S.fwhm(g[:400], y[:400])[1] == "unbounded"
    y2 = y.copy()
    y2[520] = np.nan
    assert S.fwhm(g, y2)[:2] == (None, "gap")


def test_sweep_grid_validation(brw):
    cfg = S.SpdcConfig(brw)
    with pytest.raises(ValueError):
        S.pump_sweep(cfg, [])
    with pytest.raises(ValueError):
        S.pump_sweep(cfg, [801.0, 800.0])


def test_spectra_nonnegative(sweeps):
    for spectrum in (sweeps.pump("brw"), sweeps.pump("conv"), sweeps.signal("brw"), sweeps.signal("conv")):
        d = spectrum.density[np.isfinite(spectrum.density)]
        assert d.size == spectrum.grid.size and np.all(d >= 0)


def test_pump_sweep_ranges(sweeps):
    b, c = sweeps.pump("brw"), sweeps.pump("conv", step=0.005, lo=799.0, hi=801.0)
    assert b.fwhm_status == c.fwhm_status == "ok"
    assert 8 <= b.fwhm <= 18 and 0.1 <= c.fwhm <= 0.5
    assert b.fwhm / c.fwhm >= 20


def test_signal_sweep_ranges(sweeps):
    assert 0.7 <= sweeps.signal("brw").fwhm <= 2.5
    assert 10 <= sweeps.signal("conv").fwhm <= 25


def test_conventional_signal_fwhm_sinc_oracle(conv, sweeps):
    cfg = S.SpdcConfig(conv)
    period = P.qpm_period(conv, 800.0, 1550.0).period
    h = P.DERIV_STEP
    slope = (P.delta_beta(conv, 800.0, 1550.0 + h, period) - P.delta_beta(conv, 800.0, 1550.0 - h, period)) / (2 * h)
    L_um = cfg.length_mm * 1e3
    oracle = 2 * (2 * x_half_bisection() / L_um) / abs(slope)
    assert sweeps.signal("conv").fwhm == pytest.approx(oracle, rel=0.10)


def test_step_halving_changes_fwhm_little(sweeps):
    pairs = [(sweeps.signal("brw", step=0.04), sweeps.signal("brw")),
             (sweeps.signal("conv", step=0.2), sweeps.signal("conv")),
             (sweeps.pump("conv", step=0.01, lo=799.0, hi=801.0), sweeps.pump("conv", step=0.005, lo=799.0, hi=801.0)),
             (sweeps.pump("brw", step=0.2), sweeps.pump("brw"))]
    for coarse, fine in pairs:
        assert abs(coarse.fwhm / fine.fwhm - 1) < 0.02


def test_peak_ordering(sweeps):
    assert sweeps.signal("conv").peak > sweeps.signal("brw").peak


def test_sweep_reports_gaps(brw):
    spectrum = S.signal_sweep(S.SpdcConfig(brw), [1550.0, 2700.0])
    assert math.isnan(spectrum.density[1]) and spectrum.gaps[0][0] == 2700.0
    assert math.isfinite(spectrum.density[0])


def _flat(height, lo=1545.0, hi=1555.0, step=0.1, variable="lambda_s"):
    g = grid(lo, hi, step)
    y = np.full(g.shape, height)
    return S.SpdcSpectrum(variable, g, y, 800.0, 2.77, 15.0, 1.0, height, 1550.0, None, "unbounded")


@pytest.mark.parametrize("window", [0.5, 1.0, 3.3])
def test_flat_spectrum_flux(window):
    h = 2.5e-11
    expect = h * window * 1550e-9 / (CONSTANTS.h * CONSTANTS.c)
    assert S.pair_flux(_flat(h), window, 1550.0) == pytest.approx(expect, rel=1e-12)


def test_flux_errors():
    spectrum = _flat(1.0)
    with pytest.raises(ValueError, match="outside"):
        S.pair_flux(spectrum, 20.0, 1550.0)
    with pytest.raises(ValueError):
        S.pair_flux(spectrum, 0.0, 1550.0)
    with pytest.raises(ValueError, match="signal"):
        S.pair_flux(_flat(1.0, variable="lambda_p"), 1.0, 1550.0)
    holed = replace(spectrum, density=np.where(np.isclose(spectrum.grid, 1550.2), np.nan, spectrum.density))
    with pytest.raises(ValueError, match="gap"):
        S.pair_flux(holed, 1.0, 1550.0)


def test_sweep_flux_matches_pair_flux(sweeps):
    spectrum = sweeps.signal("brw")
    assert spectrum.pair_flux == pytest.approx(S.pair_flux(spectrum, 1.0, 1550.0), rel=1e-15)


def test_overlap_region_all_differs(brw):
    q = P.qpm_period(brw, 800.0, 1550.0).period
    core = S.spectral_point(S.SpdcConfig(brw, period_um=q), 800.0, 1550.0)
    full = S.spectral_point(S.SpdcConfig(brw, period_um=q, overlap_region="all"), 800.0, 1550.0)
    assert core.overlap != full.overlap and core.n_eff == full.n_eff
