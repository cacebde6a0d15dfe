import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from brwspdc.materials import (MATERIALS_ENV_VAR, MaterialFileError, MaterialModel, WavelengthRangeError,
                               constant_index, d_eff, default_materials_path, load_materials, refractive_index)

FIXTURE = Path(__file__).parent / "fixtures" / "material_indices.json"
ORDER = ["GaN", "AlGaN_x0.02", "AlGaN_x0.20", "AlGaN_x0.45"]


def test_shipped_file_has_the_four_alloys(materials):
    assert set(ORDER) <= set(materials)
    assert materials["GaN"].d33 == 16.5
    assert all(materials[n].d33 == 0 for n in ORDER[1:])
    assert [materials[n].al_fraction for n in ORDER] == [0.0, 0.02, 0.20, 0.45]


def test_fixture_indices_match(materials):
    table = json.loads(FIXTURE.read_text())
    for name, values in table.items():
        for lam, n in values.items():
            assert abs(refractive_index(materials[name], float(lam)) - n) < 1e-6, (name, lam)


def test_gan_index_at_1550(materials):
    assert refractive_index(materials["GaN"], 1550.0) == pytest.approx(2.3, abs=0.05)


def test_cladding_contrast_at_idler(materials):
    n1 = refractive_index(materials["AlGaN_x0.02"], 1653.0)
    n2 = refractive_index(materials["AlGaN_x0.45"], 1653.0)
    assert n1 ** 2 - n2 ** 2 == pytest.approx(1.35, abs=0.10)


@pytest.mark.parametrize("name", ORDER)
def test_real_above_one_and_normal_dispersion(materials, name):
    m = materials[name]
    lam = np.linspace(*m.valid_range, 20001)
    n = refractive_index(m, lam)
    assert np.all(np.isfinite(n)) and np.all(n > 1)
    assert np.all(np.diff(n) < 0)


def test_index_decreases_with_al_fraction(materials):
    lo = max(materials[n].valid_range[0] for n in ORDER)
    hi = min(materials[n].valid_range[1] for n in ORDER)
    lam = np.linspace(lo, hi, 5001)
    idx = [refractive_index(materials[n], lam) for n in ORDER]
    for a, b in zip(idx, idx[1:]):
        assert np.all(a > b)


@settings(max_examples=50, deadline=None)
@given(lam=st.floats(750, 2450), name=st.sampled_from(ORDER))
def test_plus_50nm_is_lower(materials, lam, name):
    m = materials[name]
    assert refractive_index(m, lam) > refractive_index(m, lam + 50)


@settings(max_examples=30, deadline=None)
@given(lam=st.floats(750, 2500), name=st.sampled_from(ORDER))
def test_pure_and_deterministic(materials, lam, name):
    m = materials[name]
    assert refractive_index(m, lam) == refractive_index(m, lam)


def test_array_and_scalar_agree(materials):
    m = materials["GaN"]
    lam = np.array([800.0, 1550.0, 1653.33])
    np.testing.assert_array_equal(refractive_index(m, lam), [refractive_index(m, x) for x in lam])


def test_out_of_range_error_names_model_and_range(materials):
    with pytest.raises(WavelengthRangeError, match=r"GaN.*|.*750"):
        refractive_index(materials["GaN"], 400.0)
    with pytest.raises(WavelengthRangeError) as info:
        refractive_index(materials["AlGaN_x0.45"], [800.0, 3000.0])
    msg = str(info.value)
    assert "AlGaN_x0.45" in msg and "750" in msg and "2500" in msg


def test_d_eff():
    assert d_eff(constant_index("x", 2.0, d33=16.5)) == pytest.approx(10.504, abs=5e-4)
    assert d_eff(constant_index("x", 2.0, d33=0.0)) == 0
    assert d_eff(constant_index("x", 2.0, d33=math.pi)) == pytest.approx(2.0, rel=1e-15)


def test_constant_index_model():
    m = constant_index("c", 2.0)
    assert refractive_index(m, 1000.0) == 2.0


def test_model_validation():
    with pytest.raises(ValueError):
        MaterialModel("x", 1.5, {"A": 4.0}, (500, 900))
    with pytest.raises(ValueError):
        MaterialModel("x", 0.0, {"A": 4.0}, (900, 500))
    with pytest.raises(ValueError):
        MaterialModel("x", 0.0, {"A": 4.0, "B1": 1.0}, (500, 900))
    with pytest.raises(ValueError):
        MaterialModel("x", 0.0, {"B1": 1.0, "C1": 0.2}, (500, 900))


def test_multiple_terms_sum():
    m = MaterialModel("x", 0.0, {"A": 1.0, "B1": 1.0, "C1": 0.1, "B2": 2.0, "C2": 0.2}, (500, 3000))
    lam = 1.0
    expect = 1.0 + lam ** 2 / (lam ** 2 - 0.01) + 2.0 * lam ** 2 / (lam ** 2 - 0.04)
    assert refractive_index(m, 1000.0) == pytest.approx(math.sqrt(expect), rel=1e-14)


def test_env_var_overrides_default(tmp_path, monkeypatch):
    f = tmp_path / "m.yaml"
    f.write_text("name: Foo\nal_fraction: 0.1\ndispersion_params: {A: 4.0}\nvalid_range_nm: [500, 900]\n")
    monkeypatch.setenv(MATERIALS_ENV_VAR, str(f))
    assert default_materials_path() == f
    assert list(load_materials()) == ["Foo"]


def test_bad_files(tmp_path):
    f = tmp_path / "bad.yaml"
    f.write_text("name: [unterminated\n")
    with pytest.raises(MaterialFileError):
        load_materials(f)
    f.write_text("name: Foo\nal_fraction: 0.1\n")
    with pytest.raises(MaterialFileError):
        load_materials(f)
    doc = "name: Foo\nal_fraction: 0.1\ndispersion_params: {A: 4.0}\nvalid_range_nm: [500, 900]\n"
    f.write_text(doc + "---\n" + doc)
    with pytest.raises(MaterialFileError, match="duplicate"):
        load_materials(f)
    with pytest.raises(FileNotFoundError):
        load_materials(tmp_path / "missing.yaml")
