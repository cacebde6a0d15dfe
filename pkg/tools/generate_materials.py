"""Generate the shipped material parameter file and its index fixture.

GaN and the AlGaN alloys use a single-oscillator Sellmeier law whose
coefficients vary smoothly with the Al fraction x,

    n^2(lam, x) = A(x) + B(x) lam^2 / (lam^2 - C(x)^2),   lam in um,
    A(x) = A0 + A1 x,   B(x) = B0 + B1 x,   C(x) = C0 + C1 x + C2 x^2.

The seven parameters were fitted once (see ``CALIBRATION``) so that the
GaN/Al0.02/Al0.45 Bragg waveguide with a 582 nm core, 293/517 nm cladding
pair and 12 bilayers reproduces its published design: zero slope of the
pump-idler mismatch at 800 nm, quarter-wave thicknesses at the 1653.33 nm
idler, a 2.77 um QPM period, n(GaN, 1550 nm) = 2.31, and pump and signal
acceptance widths of 12.4 nm and 1.3 nm for a 15 mm device.  The fit is an
effective description of the index seen by the field component along the
stack normal (the x-polarized, TM modes); it is not a bandgap model and is
only trusted over ``VALID_RANGE_NM``, where the alloys keep their index
ordering (GaN and Al0.02 cross near 713 nm).

Run from the repository root::

    python3 tools/generate_materials.py

It writes ``src/brwspdc/data/materials.yaml`` and
``tests/fixtures/material_indices.json``.  The fixture values are evaluated
straight from the composition law above, not through the package.
"""

import json
import math
from pathlib import Path

import yaml

CALIBRATION = dict(
    A0=2.382490802313069,
    A1=-6.231323517615221,
    B0=2.892430187705295,
    B1=3.148739305350036,
    C0=0.21733433526325613,
    C1=0.929001592061055,
    C2=-3.896095276066667,
)
ALLOYS = [("GaN", 0.0, 16.5), ("AlGaN_x0.02", 0.02, 0.0), ("AlGaN_x0.20", 0.20, 0.0), ("AlGaN_x0.45", 0.45, 0.0)]
VALID_RANGE_NM = (750.0, 2500.0)
FIXTURE_WAVELENGTHS = [750.0, 793.0, 800.0, 806.0, 1000.0, 1550.0, 1653.33, 1700.0, 2000.0, 2500.0]

ROOT = Path(__file__).resolve().parents[1]


def coefficients(x, p=CALIBRATION):
    # only C^2 enters the law, so the resonance is stored as |C|
    c = p["C0"] + p["C1"] * x + p["C2"] * x * x
    return p["A0"] + p["A1"] * x, p["B0"] + p["B1"] * x, abs(c)


def index(x, lam_nm):
    a, b, c = coefficients(x)
    lam = lam_nm / 1000.0
    return math.sqrt(a + b * lam * lam / (lam * lam - c * c))


def main():
    docs, fixture = [], {}
    for name, x, d33 in ALLOYS:
        a, b, c = coefficients(x)
        docs.append(dict(
            name=name,
            al_fraction=x,
            dispersion_params=dict(A=a, B1=b, C1=c),
            valid_range_nm=list(VALID_RANGE_NM),
            d33_pm_per_V=d33,
        ))
        fixture[name] = {f"{lam:g}": index(x, lam) for lam in FIXTURE_WAVELENGTHS}
    header = "# Generated by tools/generate_materials.py; edit that script, not this file.\n"
    out = ROOT / "src" / "brwspdc" / "data" / "materials.yaml"
    out.write_text(header + yaml.safe_dump_all(docs, sort_keys=False, explicit_start=True))
    fix = ROOT / "tests" / "fixtures" / "material_indices.json"
    fix.write_text(json.dumps(fixture, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out} and {fix}")


if __name__ == "__main__":
    main()
