"""Regenerate the bundled environmental spectra.

Neither measured spectrum is published bin by bin, so both files are smooth
shape approximations scaled to the quoted integral fluxes:

* ``neutron_surface.txt``: thermal Maxwellian, 1/E epithermal plateau,
  evaporation peak near 1.4 MeV and a flat tail to 20 MeV, 0.018 n/cm2/s total.
* ``gamma_lab.txt``: exponential scattered continuum plus the strongest K-40,
  Th-232 and U-238 chain lines, 2.5 gamma/cm2/s total.

File format: first row is the lower edge of the first bin with zero flux; every
following row is (bin upper edge keV, flux per cm2 per s in that bin).
"""

from pathlib import Path

import numpy as np
from scipy import integrate

OUT = Path(__file__).resolve().parents[1] / "src" / "qubitrad" / "data" / "spectra"

GAMMA_LINES = {1460.8: 0.08, 2614.5: 0.03, 609.3: 0.05, 583.2: 0.03, 911.2: 0.03, 351.9: 0.04,
               295.2: 0.02, 238.6: 0.03, 1120.3: 0.015, 1764.5: 0.015, 969.0: 0.01}


def gamma_spectrum(total=2.5):
    edges = np.arange(40.0, 3000.0 + 1e-9, 10.0)
    lo, hi = edges[:-1], edges[1:]
    cont = np.exp(-lo / 450.0) - np.exp(-hi / 450.0)
    cont *= (1.0 - sum(GAMMA_LINES.values())) / cont.sum()
    for e, frac in GAMMA_LINES.items():
        cont[np.searchsorted(edges, e) - 1] += frac
    return edges, cont * total / cont.sum()


def neutron_spectrum(total=0.018):
    edges = np.logspace(-8, np.log10(2.0e4), 124)
    kt = 2.53e-5
    t_evap = 700.0

    def lethargy_density(e):
        therm = 0.25 * (e / kt) ** 2 * np.exp(-e / kt) / 2.0
        epi = 0.30 / np.log(1e2 / 1e-4) if 1e-4 <= e <= 1e2 else 0.0
        evap = 0.35 * (e / t_evap) ** 2 * np.exp(-e / t_evap) / 2.0
        tail = 0.10 / np.log(2.0) if 1e4 <= e <= 2e4 else 0.0
        return therm + epi + evap + tail

    flux = np.array([integrate.quad(lambda u: lethargy_density(np.exp(u)), np.log(a), np.log(b))[0]
                     for a, b in zip(edges[:-1], edges[1:])])
    return edges, flux * total / flux.sum()


def write(path, edges, flux, comment):
    rows = [f"# {comment}", "upper_edge_keV flux_per_cm2_s", f"{edges[0]:.6g} 0"]
    rows += [f"{e:.6g} {f:.6g}" for e, f in zip(edges[1:], flux)]
    path.write_text("\n".join(rows) + "\n")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    write(OUT / "gamma_lab.txt", *gamma_spectrum(),
          "environmental gamma spectrum shape, lines on continuum, 2.5 gamma/cm2/s")
    write(OUT / "neutron_surface.txt", *neutron_spectrum(),
          "above-ground neutron spectrum shape, 0.018 n/cm2/s")


if __name__ == "__main__":
    main()
