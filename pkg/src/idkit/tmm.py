"""Normal-incidence transfer-matrix solver for dispersive multilayer stacks.

Conventions, also stated in the ``motf`` problem card:

* complex index N = n - i*k with k >= 0 for passive media, matching the
  engineering time convention exp(+i*omega*t);
* phase thickness delta = 2*pi*N*d/lambda, characteristic matrix
  [[cos d, i sin d / N], [i N sin d, cos d]] per layer;
* layers are listed from the ambient side down to the substrate;
* reflectance R = |r|^2 with r = (n0*B - C)/(n0*B + C) where
  [B, C]^T = (M_1 ... M_L) [1, N_s]^T, transmittance
  T = 4*n0*Re(N_s)/|n0*B + C|^2, emissivity = 1 - R - T.

Thicknesses are nanometres, wavelengths micrometres throughout.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .problems import MATERIALS
from .space import DesignPoint, SpaceError

__all__ = [
    "ExtrapolationWarning",
    "TmmError",
    "MaterialTable",
    "LayerStack",
    "SpectrumResult",
    "default_grid",
    "load_material",
    "interp_nk",
    "layer_matrix",
    "stack_spectrum",
    "motf_forward",
    "SUBSTRATE_MATERIAL",
]

GRID_POINTS = 2001
GRID_MIN_UM = 0.3
GRID_MAX_UM = 20.0

SUBSTRATE_MATERIAL = "Ag"


class ExtrapolationWarning(UserWarning):
    """A wavelength fell outside a material table; the edge value was used."""


class TmmError(RuntimeError):
    """Numerical failure inside the solver (non-finite intermediate)."""


def default_grid() -> np.ndarray:
    """The fixed 2001-point uniform wavelength grid, 0.3 to 20 um, in um."""
    return np.linspace(GRID_MIN_UM, GRID_MAX_UM, GRID_POINTS)


@dataclass(frozen=True)
class MaterialTable:
    """Tabulated optical constants: strictly increasing wavelengths, k >= 0."""

    name: str
    wavelength_um: np.ndarray
    n: np.ndarray
    k: np.ndarray

    def __post_init__(self) -> None:
        wl = np.asarray(self.wavelength_um, dtype=float)
        n = np.asarray(self.n, dtype=float)
        k = np.asarray(self.k, dtype=float)
        if wl.ndim != 1 or wl.size < 2 or n.shape != wl.shape or k.shape != wl.shape:
            raise ValueError(f"{self.name}: need >= 2 aligned (wavelength, n, k) samples")
        if not np.all(np.diff(wl) > 0):
            raise ValueError(f"{self.name}: wavelengths must be strictly increasing")
        if np.any(k < 0):
            raise ValueError(f"{self.name}: k must be >= 0 (passive medium)")
        if not (np.all(np.isfinite(wl)) and np.all(np.isfinite(n)) and np.all(np.isfinite(k))):
            raise ValueError(f"{self.name}: non-finite table entry")
        object.__setattr__(self, "wavelength_um", wl)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "k", k)

    @classmethod
    def from_text(cls, path) -> "MaterialTable":
        name = os.path.splitext(os.path.basename(str(path)))[0]
        rows = []
        with open(path, "r", encoding="ascii") as fh:
            for raw in fh:
                line = raw.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    toks = line[1:].split()
                    if len(toks) >= 2 and toks[0] == "material":
                        name = toks[1]
                    continue
                lam, n, k = line.split()
                rows.append((float(lam), float(n), float(k)))
        arr = np.asarray(rows, dtype=float)
        return cls(name, arr[:, 0], arr[:, 1], arr[:, 2])

    def to_text(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(f"# material {self.name}\n")
            for lam, n, k in zip(self.wavelength_um, self.n, self.k):
                fh.write(f"{lam:.9e} {n:.9e} {k:.9e}\n")

    def interp(self, lam_um) -> np.ndarray:
        """Complex index N = n - i*k at lam_um; out-of-range values clamp and warn."""
        lam = np.asarray(lam_um, dtype=float)
        lo, hi = self.wavelength_um[0], self.wavelength_um[-1]
        if np.any(lam < lo) or np.any(lam > hi):
            warnings.warn(
                f"{self.name}: wavelength outside tabulated range [{lo}, {hi}] um, clamping",
                ExtrapolationWarning,
                stacklevel=2,
            )
            lam = np.clip(lam, lo, hi)
        n = np.interp(lam, self.wavelength_um, self.n)
        k = np.interp(lam, self.wavelength_um, self.k)
        return n - 1j * k


def interp_nk(table: MaterialTable, lam_um):
    """Functional alias for :meth:`MaterialTable.interp`."""
    return table.interp(lam_um)


def _data_dir() -> str:
    env = os.environ.get("IDKIT_DATA_DIR")
    if env:
        return env
    return os.path.join(os.path.dirname(os.path.abspath(__file__)), "data", "materials")


_TABLE_CACHE: dict[tuple[str, str], MaterialTable] = {}


def load_material(name: str) -> MaterialTable:
    """Load a bundled table by name (IDKIT_DATA_DIR overrides the bundled set)."""
    d = _data_dir()
    key = (d, name)
    if key not in _TABLE_CACHE:
        path = os.path.join(d, f"{name}.nk")
        if not os.path.exists(path):
            raise SpaceError(f"unknown material {name!r}: no table at {path}")
        _TABLE_CACHE[key] = MaterialTable.from_text(path)
    return _TABLE_CACHE[key]


LayerSpec = tuple[Union[MaterialTable, complex, float], float]


@dataclass(frozen=True)
class LayerStack:
    """Layers from ambient side to substrate; thicknesses in nm, >= 0.

    Each layer is (material, thickness_nm) where material is a MaterialTable
    or a constant (possibly complex, N = n - i*k) index.  The substrate is
    semi-infinite and given the same way.  Zero-thickness layers are inert.
    """

    layers: tuple[LayerSpec, ...]
    substrate: Union[MaterialTable, complex, float]
    ambient_index: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", tuple(self.layers))
        for i, (_, d) in enumerate(self.layers):
            if not (math.isfinite(d) and d >= 0):
                raise ValueError(f"layer {i}: thickness must be finite and >= 0, got {d}")
        if self.ambient_index <= 0:
            raise ValueError("ambient index must be positive")


@dataclass(frozen=True)
class SpectrumResult:
    wavelength_um: np.ndarray
    reflectance: np.ndarray
    transmittance: np.ndarray

    @property
    def emissivity(self) -> np.ndarray:
        return 1.0 - self.reflectance - self.transmittance


def _index_at(material, lam: np.ndarray) -> np.ndarray:
    if isinstance(material, MaterialTable):
        return material.interp(lam)
    return np.full(lam.shape, complex(material))


def layer_matrix(n_complex: complex, d_nm: float, lam_um: float) -> np.ndarray:
    """2x2 characteristic matrix of one layer at one wavelength."""
    delta = 2.0 * math.pi * n_complex * (d_nm * 1e-3) / lam_um
    c, s = np.cos(delta), np.sin(delta)
    return np.array([[c, 1j * s / n_complex], [1j * n_complex * s, c]])


def stack_spectrum(stack: LayerStack, grid: Sequence[float] | None = None) -> SpectrumResult:
    """Reflectance and transmittance of the stack over the wavelength grid.

    Vectorized over wavelengths: the matrix product is accumulated on the
    column vector [B, C] = (M_1 ... M_L) [1, N_s], bottom layer first.
    """
    lam = default_grid() if grid is None else np.asarray(grid, dtype=float)
    if lam.ndim != 1 or np.any(lam <= 0):
        raise ValueError("grid must be a 1-D array of positive wavelengths (um)")
    n_sub = _index_at(stack.substrate, lam)
    b = np.ones(lam.shape, dtype=complex)
    c = n_sub.copy()
    for rev_i, (mat, d_nm) in enumerate(reversed(stack.layers)):
        if d_nm == 0.0:
            continue
        idx = _index_at(mat, lam)
        delta = 2.0 * np.pi * idx * (d_nm * 1e-3) / lam
        cd, sd = np.cos(delta), np.sin(delta)
        b, c = cd * b + (1j * sd / idx) * c, (1j * idx * sd) * b + cd * c
        if not (np.all(np.isfinite(b.view(float))) and np.all(np.isfinite(c.view(float)))):
            layer = len(stack.layers) - 1 - rev_i
            bad = np.flatnonzero(~(np.isfinite(b) & np.isfinite(c)))[0]
            raise TmmError(
                f"non-finite field after layer {layer} at lambda = {lam[bad]:.6g} um"
            )
    n0 = stack.ambient_index
    denom = n0 * b + c
    r = (n0 * b - c) / denom
    reflectance = np.abs(r) ** 2
    transmittance = 4.0 * n0 * n_sub.real / np.abs(denom) ** 2
    if not (np.all(np.isfinite(reflectance)) and np.all(np.isfinite(transmittance))):
        bad = np.flatnonzero(~(np.isfinite(reflectance) & np.isfinite(transmittance)))[0]
        raise TmmError(f"non-finite spectrum at lambda = {lam[bad]:.6g} um")
    return SpectrumResult(lam, reflectance, transmittance)


# -- the 20-parameter film-stack problem ---------------------------------------

_NK_GRID_CACHE: dict[tuple[str, str], np.ndarray] = {}


def _grid_index(name: str) -> np.ndarray:
    """Material index interpolated onto the default grid, cached per data dir."""
    key = (_data_dir(), name)
    if key not in _NK_GRID_CACHE:
        _NK_GRID_CACHE[key] = load_material(name).interp(default_grid())
    return _NK_GRID_CACHE[key]


def motf_forward(point: DesignPoint) -> np.ndarray:
    """Emissivity spectrum (2001,) of a ten-layer stack point on Ag.

    The first ten values pick layer materials (air side first), the last ten
    are thicknesses in micrometres.  Pure function of the point and the
    bundled tables.
    """
    vals = point.values
    if len(vals) != 20:
        raise SpaceError(f"film-stack point needs 20 values, got {len(vals)}")
    lam = default_grid()
    n_sub = _grid_index(SUBSTRATE_MATERIAL)
    b = np.ones(lam.shape, dtype=complex)
    c = n_sub.copy()
    for li in range(9, -1, -1):
        mat = vals[li]
        if mat not in MATERIALS:
            raise SpaceError(f"unknown material {mat!r}")
        d_um = float(vals[10 + li])
        if d_um == 0.0:
            continue
        idx = _grid_index(mat)
        delta = 2.0 * np.pi * idx * d_um / lam
        cd, sd = np.cos(delta), np.sin(delta)
        b, c = cd * b + (1j * sd / idx) * c, (1j * idx * sd) * b + cd * c
    denom = b + c
    r = (b - c) / denom
    reflectance = np.abs(r) ** 2
    transmittance = 4.0 * n_sub.real / np.abs(denom) ** 2
    eps = 1.0 - reflectance - transmittance
    if not np.all(np.isfinite(eps)):
        bad = np.flatnonzero(~np.isfinite(eps))[0]
        raise TmmError(f"non-finite emissivity at lambda = {lam[bad]:.6g} um")
    return eps
