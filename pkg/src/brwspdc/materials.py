"""Material dispersion models for GaN and AlGaN alloys.

Indices follow a Sellmeier-type law evaluated directly at each wavelength,

    n^2(lam) = A + sum_k B_k lam^2 / (lam^2 - C_k^2),   lam in micrometres,

with the coefficients read from a YAML parameter file (one document per
material).  Nothing about the alloys themselves is hard-coded here.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np
import yaml

MATERIALS_ENV_VAR = "BRWSPDC_MATERIALS"


class WavelengthRangeError(ValueError):
    """Raised when a wavelength lies outside a model's trusted range."""


class MaterialFileError(ValueError):
    """Raised when a material parameter file cannot be parsed."""


@dataclass(frozen=True)
class MaterialModel:
    name: str
    al_fraction: float
    dispersion_params: Mapping[str, float]
    valid_range: tuple[float, float]  # nm
    d33: float = 0.0  # pm/V
    _terms: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0.0 <= self.al_fraction <= 1.0:
            raise ValueError(f"{self.name}: al_fraction {self.al_fraction} outside [0, 1]")
        lo, hi = self.valid_range
        if not 0 < lo < hi:
            raise ValueError(f"{self.name}: bad valid_range {self.valid_range}")
        params = dict(self.dispersion_params)
        if "A" not in params:
            raise ValueError(f"{self.name}: dispersion_params needs an 'A' term")
        terms = []
        for key in params:
            m = re.fullmatch(r"B(\d+)", key)
            if m:
                ckey = f"C{m.group(1)}"
                if ckey not in params:
                    raise ValueError(f"{self.name}: {key} has no matching {ckey}")
                terms.append((float(params[key]), float(params[ckey]) ** 2))
        object.__setattr__(self, "dispersion_params", params)
        object.__setattr__(self, "valid_range", (float(lo), float(hi)))
        object.__setattr__(self, "_terms", tuple(terms))

    def index_squared(self, wavelength_nm):
        lam2 = (np.asarray(wavelength_nm, dtype=float) * 1e-3) ** 2
        eps = np.full_like(lam2, float(self.dispersion_params["A"]))
        for b, c2 in self._terms:
            eps = eps + b * lam2 / (lam2 - c2)
        return eps

    def __call__(self, wavelength_nm):
        return refractive_index(self, wavelength_nm)


def constant_index(name: str, n: float, valid_range=(200.0, 5000.0), d33: float = 0.0) -> MaterialModel:
    """Dispersionless stand-in material, mostly useful for tests."""
    return MaterialModel(name, 0.0, {"A": n * n}, valid_range, d33)


def refractive_index(model: MaterialModel, wavelength_nm):
    """Index of ``model`` at ``wavelength_nm`` (scalar or array, nm)."""
    lam = np.asarray(wavelength_nm, dtype=float)
    lo, hi = model.valid_range
    if np.any(lam < lo) or np.any(lam > hi) or not np.all(np.isfinite(lam)):
        bad = lam[(lam < lo) | (lam > hi) | ~np.isfinite(lam)] if lam.ndim else lam
        raise WavelengthRangeError(
            f"wavelength {np.ravel(bad)[0]:g} nm outside valid range "
            f"[{lo:g}, {hi:g}] nm of material {model.name!r}"
        )
    n = np.sqrt(model.index_squared(lam))
    return float(n) if n.ndim == 0 else n


def d_eff(model: MaterialModel) -> float:
    """First-order QPM effective coefficient (2/pi) d33, in pm/V."""
    return 2.0 / math.pi * model.d33


def default_materials_path() -> Path:
    env = os.environ.get(MATERIALS_ENV_VAR)
    if env:
        return Path(env)
    return Path(str(resources.files("brwspdc") / "data" / "materials.yaml"))


def _model_from_doc(doc: Mapping, source) -> MaterialModel:
    try:
        return MaterialModel(
            name=str(doc["name"]),
            al_fraction=float(doc["al_fraction"]),
            dispersion_params={k: float(v) for k, v in doc["dispersion_params"].items()},
            valid_range=tuple(float(v) for v in doc["valid_range_nm"]),
            d33=float(doc.get("d33_pm_per_V", 0.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MaterialFileError(f"{source}: bad material entry {doc!r}: {exc}") from exc


def load_materials(path=None) -> dict[str, MaterialModel]:
    """Read every material document in a YAML file, keyed by name."""
    path = Path(path) if path is not None else default_materials_path()
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"materials file not found: {path}") from exc
    try:
        docs = [d for d in yaml.safe_load_all(text) if d is not None]
    except yaml.YAMLError as exc:
        raise MaterialFileError(f"{path}: {exc}") from exc
    out = {}
    for doc in docs:
        model = _model_from_doc(doc, path)
        if model.name in out:
            raise MaterialFileError(f"{path}: duplicate material {model.name!r}")
        out[model.name] = model
    if not out:
        raise MaterialFileError(f"{path}: no materials defined")
    return out
