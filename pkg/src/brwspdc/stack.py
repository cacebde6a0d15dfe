"""Layered planar waveguide geometry, transfer matrices and Bloch analysis.

Matrix convention
-----------------
Fields are propagated in the basis ``v = (psi, psi' / (k0 * w))`` where
``psi`` is E_y for TE and H_y for TM, ``k0 = 2 pi / lambda`` and the weight
``w`` is 1 for TE and ``n^2`` for TM.  Both components are continuous across
every interface, so a stack matrix is simply the ordered product of layer
matrices.  For a layer of index ``n`` and thickness ``d`` at effective index
``n_eff`` (``q^2 = n^2 - n_eff^2``, ``phi = k0 d q``)::

    M = [[cos(phi),              w sin(phi) / q],
         [-(q^2 / w) sin(phi)/q, cos(phi)      ]]

``sin(phi)/q`` and ``cos(phi)`` are entire in ``q^2``; evanescent layers
(``q^2 < 0``) use the hyperbolic continuation and ``q^2 = 0`` gives
``[[1, w k0 d], [0, 1]]``.  All entries are real and ``det M = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import yaml

from .materials import MaterialFileError, MaterialModel, refractive_index

Polarization = Literal["TE", "TM"]
POLARIZATIONS = ("TE", "TM")
PRESETS = ("brw-paper", "conventional-paper")


def check_pol(pol: str) -> str:
    p = str(pol).upper()
    if p not in POLARIZATIONS:
        raise ValueError(f"polarization must be TE or TM, got {pol!r}")
    return p


@dataclass(frozen=True)
class Layer:
    material: MaterialModel
    thickness: float  # nm

    def __post_init__(self):
        if not (math.isfinite(self.thickness) and self.thickness >= 0):
            raise ValueError(f"layer thickness must be finite and positive, got {self.thickness}")

    def index(self, wavelength_nm):
        return refractive_index(self.material, wavelength_nm)


@dataclass(frozen=True)
class LayerStack:
    core: Layer
    bilayer: tuple[Layer, Layer]  # (layer next to the core, outer layer)
    n_bilayers: int
    exterior: MaterialModel
    qpm_period: Optional[float] = None  # um
    polarization: str = "TM"
    name: str = "custom"
    symmetric: bool = field(default=True, init=False)

    def __post_init__(self):
        if self.n_bilayers < 1:
            raise ValueError("n_bilayers must be >= 1")
        if self.qpm_period is not None and not self.qpm_period > 0:
            raise ValueError("qpm_period must be positive")
        if self.core.thickness <= 0 or any(l.thickness <= 0 for l in self.bilayer):
            raise ValueError("layer thicknesses must be > 0")
        object.__setattr__(self, "polarization", check_pol(self.polarization))
        object.__setattr__(self, "bilayer", tuple(self.bilayer))

    @property
    def materials(self) -> tuple[MaterialModel, ...]:
        return (self.core.material, self.bilayer[0].material, self.bilayer[1].material, self.exterior)

    @property
    def period(self) -> float:
        return self.bilayer[0].thickness + self.bilayer[1].thickness

    @property
    def half_width(self) -> float:
        """Distance from the core centre to the exterior boundary, nm."""
        return 0.5 * self.core.thickness + self.n_bilayers * self.period

    def indices(self, wavelength_nm: float) -> dict[str, float]:
        lam = float(wavelength_nm)
        return {
            "core": refractive_index(self.core.material, lam),
            "n1": refractive_index(self.bilayer[0].material, lam),
            "n2": refractive_index(self.bilayer[1].material, lam),
            "exterior": refractive_index(self.exterior, lam),
        }

    def replace(self, **changes) -> "LayerStack":
        """Copy with modified fields; ``d_c``, ``d1``, ``d2`` set thicknesses."""
        core, bl = self.core, list(self.bilayer)
        if "d_c" in changes:
            core = Layer(core.material, float(changes.pop("d_c")))
        if "d1" in changes:
            bl[0] = Layer(bl[0].material, float(changes.pop("d1")))
        if "d2" in changes:
            bl[1] = Layer(bl[1].material, float(changes.pop("d2")))
        kw = dict(core=core, bilayer=tuple(bl), n_bilayers=self.n_bilayers, exterior=self.exterior,
                  qpm_period=self.qpm_period, polarization=self.polarization, name=self.name)
        kw.update(changes)
        return LayerStack(**kw)


@dataclass(frozen=True)
class TransferMatrix:
    m: np.ndarray
    polarization: str
    wavelength: float
    n_eff: float

    @property
    def m11(self):
        return self.m[0, 0]

    @property
    def m12(self):
        return self.m[0, 1]

    @property
    def m21(self):
        return self.m[1, 0]

    @property
    def m22(self):
        return self.m[1, 1]

    @property
    def det(self) -> float:
        return float(self.m[0, 0] * self.m[1, 1] - self.m[0, 1] * self.m[1, 0])

    @property
    def trace(self) -> float:
        return float(self.m[0, 0] + self.m[1, 1])

    def __matmul__(self, other: "TransferMatrix") -> "TransferMatrix":
        return TransferMatrix(self.m @ other.m, self.polarization, self.wavelength, self.n_eff)


@dataclass(frozen=True)
class BlochAnalysis:
    wavelength: float
    n_eff: float
    bloch_factor: complex
    in_stop_band: bool
    band_center_detuning: float  # Re(trace)/2 of the bilayer matrix
    eigenvalues: tuple[complex, complex]


def _weight(n2, pol):
    return 1.0 if pol == "TE" else n2


def layer_entries(eps, n_eff, k0d, w):
    """Vectorised layer-matrix entries (a, b, c, d) over an array of n_eff."""
    n_eff = np.asarray(n_eff, dtype=float)
    q2 = eps - n_eff * n_eff
    aq = np.sqrt(np.abs(q2))
    phi = k0d * aq
    safe = np.where(aq > 0, aq, 1.0)
    osc = q2 > 0
    cos_ = np.where(osc, np.cos(phi), np.cosh(phi))
    sinc_ = np.where(aq > 0, np.where(osc, np.sin(phi), np.sinh(phi)) / safe, k0d)
    return cos_, w * sinc_, -(q2 / w) * sinc_, cos_


def layer_matrix(layer: Layer, wavelength_nm: float, n_eff: float, pol: str = "TM") -> TransferMatrix:
    """2x2 transfer matrix across one homogeneous layer (see module docstring)."""
    pol = check_pol(pol)
    n = layer.index(wavelength_nm)
    k0d = 2 * math.pi / wavelength_nm * layer.thickness
    a, b, c, d = (float(x) for x in layer_entries(n * n, n_eff, k0d, _weight(n * n, pol)))
    return TransferMatrix(np.array([[a, b], [c, d]]), pol, float(wavelength_nm), float(n_eff))


def _product(layers, wavelength_nm, n_eff, pol) -> TransferMatrix:
    m = np.eye(2)
    for layer in layers:
        m = layer_matrix(layer, wavelength_nm, n_eff, pol).m @ m
    return TransferMatrix(m, pol, float(wavelength_nm), float(n_eff))


def cladding_layers(stack: LayerStack, n_bilayers: Optional[int] = None) -> list[Layer]:
    """Cladding layers ordered from the core boundary outward."""
    n = stack.n_bilayers if n_bilayers is None else n_bilayers
    return list(stack.bilayer) * n


def stack_matrix(stack: LayerStack, wavelength_nm: float, n_eff: float, pol: str = "TM",
                 side: str = "half", n_bilayers: Optional[int] = None) -> TransferMatrix:
    """Ordered product of layer matrices.

    ``side="half"`` spans the cladding from the core boundary to the exterior;
    ``side="full"`` spans the whole structure from the left exterior boundary
    to the right one, core included.
    """
    pol = check_pol(pol)
    clad = cladding_layers(stack, n_bilayers)
    if side == "half":
        return _product(clad, wavelength_nm, n_eff, pol)
    if side == "full":
        return _product(clad[::-1] + [stack.core] + clad, wavelength_nm, n_eff, pol)
    raise ValueError(f"side must be 'half' or 'full', got {side!r}")


def bilayer_entries(eps1, eps2, d1, d2, wavelength_nm, n_eff, pol):
    """Vectorised entries of the one-period matrix M2 @ M1."""
    k0 = 2 * math.pi / wavelength_nm
    a1, b1, c1, d1_ = layer_entries(eps1, n_eff, k0 * d1, _weight(eps1, pol))
    a2, b2, c2, d2_ = layer_entries(eps2, n_eff, k0 * d2, _weight(eps2, pol))
    return (a2 * a1 + b2 * c1, a2 * b1 + b2 * d1_, c2 * a1 + d2_ * c1, c2 * b1 + d2_ * d1_)


def bloch_eigen(half_trace):
    """Bloch eigenvalues (decaying/unit-modulus first) for a lossless period."""
    h = complex(half_trace)
    root = np.sqrt(h * h - 1)
    mu1, mu2 = h + root, h - root
    if abs(mu1) > abs(mu2) or (abs(abs(mu1) - abs(mu2)) < 1e-15 and mu1.imag < mu2.imag):
        mu1, mu2 = mu2, mu1
    return mu1, mu2


def bloch_analyze(bilayer, wavelength_nm: float, n_eff: float, pol: str = "TM") -> BlochAnalysis:
    """Bloch eigenvalues of one cladding period at (wavelength, n_eff).

    ``bilayer`` is a pair of layers (or a LayerStack, whose bilayer is used).
    """
    if isinstance(bilayer, LayerStack):
        bilayer = bilayer.bilayer
    pol = check_pol(pol)
    m = _product(list(bilayer), wavelength_nm, n_eff, pol)
    h = 0.5 * m.trace
    mu1, mu2 = bloch_eigen(h)
    return BlochAnalysis(float(wavelength_nm), float(n_eff), mu1, abs(h) > 1.0, h, (mu1, mu2))


# ---------------------------------------------------------------- stack files

def _layer_from(doc, materials, source) -> Layer:
    name = doc["material"]
    if name not in materials:
        raise MaterialFileError(f"{source}: unknown material {name!r}")
    return Layer(materials[name], float(doc["thickness_nm"]))


def stack_from_dict(doc: dict, materials: dict, source="<stack>") -> LayerStack:
    try:
        core = _layer_from(doc["core"], materials, source)
        bl = tuple(_layer_from(d, materials, source) for d in doc["bilayer"])
        if len(bl) != 2:
            raise MaterialFileError(f"{source}: bilayer needs exactly two layers")
        ext = doc["exterior"]
        if ext not in materials:
            raise MaterialFileError(f"{source}: unknown material {ext!r}")
        qpm = doc.get("qpm_period_um")
        return LayerStack(core=core, bilayer=bl, n_bilayers=int(doc["n_bilayers"]),
                          exterior=materials[ext], qpm_period=None if qpm is None else float(qpm),
                          polarization=doc.get("polarization", "TM"), name=str(doc.get("name", source)))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, MaterialFileError):
            raise
        raise MaterialFileError(f"{source}: bad stack description: {exc}") from exc


def preset_path(name: str) -> Path:
    return Path(str(resources.files("brwspdc") / "data" / "stacks" / f"{name}.yaml"))


def load_stack(name_or_path, materials: dict) -> LayerStack:
    """Load a shipped preset by name or a stack file by path."""
    path = preset_path(name_or_path) if name_or_path in PRESETS else Path(name_or_path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"stack file not found: {path}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise MaterialFileError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise MaterialFileError(f"{path}: expected a mapping")
    return stack_from_dict(doc, materials, source=str(path))
