#!/usr/bin/env python3
"""Generate the bundled optical-constant tables in src/idkit/data/materials/.

Each material is modeled as a sum of Lorentz oscillators (plus a Drude term
for the metal) fitted by hand to the familiar qualitative features of the
real materials: visible-range refractive index, infrared phonon bands, and
metallic reflectivity.  The tables are synthetic approximations intended for
benchmarking, not measured data; do not use them for quantitative physics.

Dielectric model, wavenumber nu in 1/cm:

    eps(nu) = eps_inf + sum_j S_j nu_j^2 / (nu_j^2 - nu^2 - i g_j nu)     (Lorentz)
              - nu_p^2 / (nu^2 + i g nu)                                  (Drude)

The complex index is the upper-half-plane square root, so k >= 0 always.
Output format per file: comment header, then `lambda_um n k` rows with
wavelengths strictly increasing, 0.25 to 25 um, log-spaced.
"""

from __future__ import annotations

import argparse
import os

import numpy as np

N_POINTS = 1601
LAMBDA_MIN_UM = 0.25
LAMBDA_MAX_UM = 25.0

# (eps_inf, [(nu_j 1/cm, S_j, gamma_j 1/cm), ...], drude (nu_p, gamma) or None)
MODELS = {
    "ZnO": (3.85, [(413.0, 2.30, 25.0)], None),
    "AlN": (4.60, [(667.0, 3.90, 22.0)], None),
    "Al2O3": (3.10, [(385.0, 0.30, 18.0), (440.0, 2.60, 20.0), (570.0, 3.00, 22.0), (635.0, 0.35, 24.0)], None),
    "MgF2": (1.89, [(248.0, 1.20, 18.0), (410.0, 0.90, 22.0), (450.0, 0.35, 25.0)], None),
    "SiO2": (2.10, [(450.0, 0.70, 55.0), (800.0, 0.05, 60.0), (1075.0, 0.65, 70.0)], None),
    "TiO2": (6.00, [(183.0, 80.0, 55.0), (388.0, 3.40, 45.0), (500.0, 1.90, 45.0)], None),
    "SiC": (6.70, [(797.5, 3.19, 12.0)], None),
    "Ag": (3.70, [], (72700.0, 145.0)),
}


def epsilon(name: str, nu: np.ndarray) -> np.ndarray:
    eps_inf, lorentz, drude = MODELS[name]
    eps = np.full(nu.shape, eps_inf, dtype=complex)
    for nu_j, s_j, g_j in lorentz:
        eps += s_j * nu_j**2 / (nu_j**2 - nu**2 - 1j * g_j * nu)
    if drude is not None:
        nu_p, g = drude
        eps -= nu_p**2 / (nu**2 + 1j * g * nu)
    return eps


def nk_table(name: str) -> np.ndarray:
    lam = np.geomspace(LAMBDA_MIN_UM, LAMBDA_MAX_UM, N_POINTS)
    nu = 1.0e4 / lam
    eps = epsilon(name, nu)
    # principal sqrt keeps Im >= 0 when Im(eps) >= 0, i.e. passive media
    index = np.sqrt(eps)
    n = index.real
    k = np.maximum(index.imag, 0.0)
    return np.column_stack([lam, n, k])


def write_table(name: str, out_dir: str) -> str:
    rows = nk_table(name)
    path = os.path.join(out_dir, f"{name}.nk")
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# material {name}\n")
        fh.write("# synthetic Lorentz/Drude fit, benchmarking use only (see tools/make_material_tables.py)\n")
        fh.write("# columns: lambda_um n k\n")
        for lam, n, k in rows:
            fh.write(f"{lam:.9e} {n:.9e} {k:.9e}\n")
    return path


def main() -> None:
    here = os.path.dirname(os.path.abspath(__file__))
    default_out = os.path.join(here, "..", "src", "idkit", "data", "materials")
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default=os.path.normpath(default_out))
    args = ap.parse_args()
    os.makedirs(args.out_dir, exist_ok=True)
    for name in MODELS:
        print(write_table(name, args.out_dir))


if __name__ == "__main__":
    main()
