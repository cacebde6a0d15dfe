import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from brwspdc.materials import MaterialFileError, constant_index
from brwspdc.phasematch import quarter_wave_design
from brwspdc.stack import (Layer, LayerStack, bloch_analyze, bloch_eigen, layer_matrix, load_stack, stack_matrix,
                           stack_from_dict)

from conftest import slab


def layer(n, d):
    return Layer(constant_index(f"n{n}", n), d)


@settings(max_examples=200, deadline=None)
@given(n=st.floats(1.2, 3.5), n_eff=st.floats(1.0, 3.5), d=st.floats(0.0, 2000.0),
       lam=st.floats(700.0, 2500.0), pol=st.sampled_from(["TE", "TM"]))
def test_layer_matrix_unimodular(n, n_eff, d, lam, pol):
    phi = 2 * math.pi / lam * d * math.sqrt(abs(n * n - n_eff * n_eff))
    # rounding in det grows like eps*cosh(phi)^2 in evanescent layers
    assume(n_eff <= n or phi <= 4.0)
    m = layer_matrix(layer(n, d), lam, n_eff, pol)
    assert np.all(np.isreal(m.m))
    assert abs(m.det - 1) < 1e-12


def test_zero_thickness_is_identity():
    m = layer_matrix(layer(2.3, 0.0), 800.0, 2.1, "TM")
    np.testing.assert_array_equal(m.m, np.eye(2))


def test_zero_transverse_wavenumber_limit():
    lam, d, n = 800.0, 300.0, 2.2
    m = layer_matrix(layer(n, d), lam, n, "TE").m
    np.testing.assert_allclose(m, [[1, 2 * math.pi / lam * d], [0, 1]], rtol=0, atol=1e-15)
    near = layer_matrix(layer(n, d), lam, n - 1e-9, "TE").m
    np.testing.assert_allclose(near, m, atol=1e-6)


def test_oscillatory_matrix_explicit():
    lam, n, d, ne = 1000.0, 2.3, 250.0, 2.0
    q = math.sqrt(n * n - ne * ne)
    phi = 2 * math.pi / lam * d * q
    expect = [[math.cos(phi), math.sin(phi) / q], [-q * math.sin(phi), math.cos(phi)]]
    np.testing.assert_allclose(layer_matrix(layer(n, d), lam, ne, "TE").m, expect, rtol=1e-14)
    w = n * n
    expect_tm = [[math.cos(phi), w * math.sin(phi) / q], [-q / w * math.sin(phi), math.cos(phi)]]
    np.testing.assert_allclose(layer_matrix(layer(n, d), lam, ne, "TM").m, expect_tm, rtol=1e-14)


def test_te_equals_tm_without_contrast():
    m_te = stack_matrix(slab(1.0, 1.0, 400.0, "TE"), 900.0, 0.8, "TE", side="full")
    m_tm = stack_matrix(slab(1.0, 1.0, 400.0, "TM"), 900.0, 0.8, "TM", side="full")
    np.testing.assert_allclose(m_te.m, m_tm.m, rtol=1e-14)


def test_zero_bilayers_override_is_identity(brw):
    np.testing.assert_array_equal(stack_matrix(brw, 1653.0, 2.0, "TM", n_bilayers=0).m, np.eye(2))


def test_half_stack_is_ordered_product(brw):
    lam, ne = 1653.33, 2.02
    m = np.eye(2)
    for _ in range(brw.n_bilayers):
        for l in brw.bilayer:
            m = layer_matrix(l, lam, ne, "TM").m @ m
    np.testing.assert_allclose(stack_matrix(brw, lam, ne, "TM").m, m, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("lam,ne", [(1653.33, 2.02), (800.0, 2.35), (1550.0, 2.25)])
def test_stack_matrix_unimodular(brw, lam, ne):
    m = stack_matrix(brw, lam, ne, "TM", side="full")
    scale = max(1.0, float(np.max(np.abs(m.m))) ** 2)
    assert abs(m.det - 1) < 1e-12 * scale


def test_stack_matrix_unimodular_in_stop_band(brw):
    m = stack_matrix(brw, 1653.33, 2.02, "TM")
    assert abs(m.det - 1) < 1e-9


def test_bad_side(brw):
    with pytest.raises(ValueError):
        stack_matrix(brw, 1000.0, 2.0, "TM", side="both")


@settings(max_examples=100, deadline=None)
@given(lam=st.floats(800.0, 2400.0), n_eff=st.floats(1.5, 2.3))
def test_bloch_reciprocity(brw, lam, n_eff):
    b = bloch_analyze(brw, lam, n_eff, "TM")
    mu1, mu2 = b.eigenvalues
    assert abs(mu1 * mu2 - 1) < 1e-10
    assert abs(b.bloch_factor) <= 1 + 1e-12
    if b.in_stop_band:
        assert abs(b.bloch_factor) < 1
    else:
        assert abs(abs(mu1) - 1) < 1e-10


def test_bloch_eigen_ordering():
    mu1, mu2 = bloch_eigen(2.0)
    assert abs(mu1) < 1 < abs(mu2)
    mu1, mu2 = bloch_eigen(-3.0)
    assert mu1.real < 0 and abs(mu1) < 1


def test_quarter_wave_bilayer_in_stop_band():
    lam, ne, n1, n2 = 1600.0, 1.9, 2.2, 2.05
    l1, l2 = layer(n1, 1.0), layer(n2, 1.0)
    d1, d2 = quarter_wave_design(lam, ne, (l1.material, l2.material))
    b = bloch_analyze((Layer(l1.material, d1), Layer(l2.material, d2)), lam, ne, "TE")
    assert b.in_stop_band
    # both phases are pi/2, so the half trace is -(q1/q2 + q2/q1)/2
    r = math.sqrt((n1 ** 2 - ne ** 2) / (n2 ** 2 - ne ** 2))
    assert b.band_center_detuning == pytest.approx(-0.5 * (r + 1 / r), rel=1e-9)


def test_both_evanescent_is_stop_band():
    b = bloch_analyze((layer(1.5, 200.0), layer(1.6, 300.0)), 1000.0, 1.8, "TM")
    assert b.in_stop_band and abs(b.bloch_factor) < 1


def test_uniform_cladding_allowed_band():
    b = bloch_analyze((layer(2.0, 200.0), layer(2.0, 300.0)), 1000.0, 1.8, "TE")
    assert not b.in_stop_band
    assert abs(abs(b.bloch_factor) - 1) < 1e-12


def test_presets(brw, conv):
    assert brw.core.thickness == 582 and brw.n_bilayers == 12 and brw.qpm_period == 2.77
    assert [l.thickness for l in brw.bilayer] == [293, 517]
    assert brw.polarization == "TM" and conv.qpm_period is None
    assert conv.core.thickness == 700
    assert brw.half_width == pytest.approx(291 + 12 * 810)


def test_replace(brw):
    s = brw.replace(d_c=600, d2=500)
    assert s.core.thickness == 600 and s.bilayer[1].thickness == 500 and s.bilayer[0].thickness == 293
    assert brw.core.thickness == 582


def test_invalid_stacks():
    with pytest.raises(ValueError):
        LayerStack(layer(2.3, 500), (layer(2.2, 100), layer(2.0, 100)), 0, constant_index("e", 2.0))
    with pytest.raises(ValueError):
        Layer(constant_index("a", 2.0), -1.0)
    with pytest.raises(ValueError):
        LayerStack(layer(2.3, 500), (layer(2.2, 100), layer(2.0, 100)), 1, constant_index("e", 2.0),
                   polarization="XY")


def test_stack_file_errors(materials, tmp_path):
    with pytest.raises(FileNotFoundError):
        load_stack(tmp_path / "none.yaml", materials)
    bad = tmp_path / "bad.yaml"
    bad.write_text("core: {material: Unobtainium, thickness_nm: 500}\n"
                   "bilayer: [{material: GaN, thickness_nm: 1}, {material: GaN, thickness_nm: 1}]\n"
                   "n_bilayers: 1\nexterior: GaN\n")
    with pytest.raises(MaterialFileError, match="Unobtainium"):
        load_stack(bad, materials)
    bad.write_text("core: [oops\n")
    with pytest.raises(MaterialFileError):
        load_stack(bad, materials)
    with pytest.raises(MaterialFileError):
        stack_from_dict({"core": {"material": "GaN"}}, materials)
