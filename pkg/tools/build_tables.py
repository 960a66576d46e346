"""Regenerate the bundled material, attenuation, stopping and neutron tables.

Elemental photon attenuation values are total mass attenuation coefficients
(coherent included) on the standard 10 keV - 10 MeV grid. The absorption
("photoelectric") fraction of each row is whatever is left after removing the
free-electron Klein-Nishina cross-section, so it lumps together
photoabsorption, coherent scattering and pair production.

Electron stopping powers use the Bethe collision formula without density
effect plus a Z*E/700 radiative correction; CSDA ranges are their integral.
Alpha ranges follow the Bragg-Kleeman scaling of the range in air.

Run from the repository root:

    python tools/build_tables.py
"""

from pathlib import Path

import numpy as np
from scipy import integrate

OUT = Path(__file__).resolve().parents[1] / "src" / "qubitrad" / "data"

N_A = 6.02214076e23
R_E = 2.8179403262e-13  # cm
ME = 510.99895  # keV

GRID = [10, 15, 20, 30, 40, 50, 60, 80, 100, 150, 200, 300, 400, 500, 600, 800,
        1000, 1250, 1500, 2000, 3000, 4000, 5000, 6000, 8000, 10000]

# Z, A, I (eV), mu/rho on GRID (cm2/g)
ELEMENTS = {
    "H": (1, 1.008, 19.2, [0.3854, 0.3764, 0.3695, 0.3570, 0.3458, 0.3355, 0.3260, 0.3091, 0.2944,
                           0.2651, 0.2429, 0.2112, 0.1893, 0.1729, 0.1599, 0.1405, 0.1263, 0.1129,
                           0.1027, 0.08769, 0.06921, 0.05806, 0.05049, 0.04498, 0.03746, 0.03254]),
    "C": (6, 12.011, 78.0, [2.373, 0.8071, 0.4420, 0.2562, 0.2076, 0.1871, 0.1753, 0.1610, 0.1514,
                            0.1347, 0.1229, 0.1066, 0.09546, 0.08715, 0.08058, 0.07076, 0.06361,
                            0.05690, 0.05179, 0.04442, 0.03562, 0.03047, 0.02708, 0.02469, 0.02154,
                            0.01959]),
    "O": (8, 15.999, 95.0, [5.952, 1.836, 0.8651, 0.3779, 0.2585, 0.2132, 0.1907, 0.1678, 0.1551,
                            0.1361, 0.1237, 0.1070, 0.09566, 0.08729, 0.08070, 0.07087, 0.06372,
                            0.05697, 0.05185, 0.04459, 0.03597, 0.03100, 0.02777, 0.02552, 0.02263,
                            0.02089]),
    "Al": (13, 26.982, 166.0, [26.21, 7.955, 3.441, 1.128, 0.5685, 0.3681, 0.2778, 0.2018, 0.1704,
                               0.1378, 0.1223, 0.1042, 0.09276, 0.08445, 0.07802, 0.06841, 0.06146,
                               0.05496, 0.05006, 0.04324, 0.03541, 0.03106, 0.02836, 0.02655,
                               0.02437, 0.02318]),
    "Si": (14, 28.086, 173.0, [33.89, 10.34, 4.464, 1.436, 0.7012, 0.4385, 0.3207, 0.2228, 0.1835,
                               0.1448, 0.1275, 0.1082, 0.09614, 0.08748, 0.08077, 0.07082, 0.06361,
                               0.05688, 0.05183, 0.04480, 0.03678, 0.03240, 0.02967, 0.02788,
                               0.02574, 0.02462]),
    "Fe": (26, 55.845, 286.0, [170.6, 57.08, 25.68, 8.176, 3.629, 1.958, 1.205, 0.5952, 0.3717,
                               0.1964, 0.1460, 0.1099, 0.09400, 0.08414, 0.07704, 0.06699, 0.05995,
                               0.05350, 0.04883, 0.04265, 0.03621, 0.03312, 0.03146, 0.03057,
                               0.02991, 0.02994]),
    "Ni": (28, 58.693, 311.0, [209.0, 70.81, 32.20, 10.34, 4.564, 2.443, 1.480, 0.7074, 0.4275,
                               0.2113, 0.1500, 0.1085, 0.09130, 0.08133, 0.07411, 0.06421, 0.05741,
                               0.05118, 0.04674, 0.04091, 0.03500, 0.03225, 0.03086, 0.03014,
                               0.02976, 0.03001]),
    "Cu": (29, 63.546, 322.0, [215.9, 74.05, 33.79, 10.92, 4.862, 2.613, 1.593, 0.7630, 0.4584,
                               0.2217, 0.1559, 0.1119, 0.09413, 0.08362, 0.07625, 0.06605, 0.05901,
                               0.05261, 0.04803, 0.04205, 0.03599, 0.03318, 0.03177, 0.03108,
                               0.03074, 0.03103]),
}

# lead carries its own grid because of the L and K absorption edges
PB_GRID = [10, 13.03, 13.04, 15, 15.19, 15.21, 15.85, 15.87, 20, 30, 40, 50, 60, 80, 88.0, 88.01,
           100, 150, 200, 300, 400, 500, 600, 800, 1000, 1250, 1500, 2000, 3000, 4000, 5000,
           6000, 8000, 10000]
PB = (82, 207.2, 823.0, [130.6, 67.01, 162.9, 111.6, 107.8, 148.5, 134.4, 154.3, 86.36, 30.32,
                         14.36, 8.041, 5.021, 2.419, 1.910, 7.683, 5.549, 2.014, 0.9985, 0.4031,
                         0.2323, 0.1614, 0.1248, 0.08870, 0.07102, 0.05876, 0.05222, 0.04606,
                         0.04234, 0.04197, 0.04272, 0.04391, 0.04675, 0.04972])

# minimum-ionizing muon mass stopping power, MeV cm2/g
MUON_MIN = {"H": 4.103, "C": 1.742, "O": 1.801, "Al": 1.615, "Si": 1.664, "Fe": 1.451,
            "Ni": 1.468, "Cu": 1.403, "Pb": 1.122}
# silicon muon curve, normalised so that 4 GeV gives 1.66 MeV cm2/g
MUON_E = [1.0e5, 3.0e5, 1.0e6, 4.0e6, 1.0e7, 1.0e8]
MUON_SHAPE = [2.02 / 1.66, 1.68 / 1.66, 1.64 / 1.66, 1.0, 1.69 / 1.66, 1.78 / 1.66]

# elastic neutron cross-sections (barn), coarse evaluated-data shapes
NEUTRON_E = [1, 10, 100, 300, 1000, 2000, 5000, 10000, 20000]
NEUTRON_SIGMA = {
    "H": [20.0, 19.5, 12.7, 8.0, 4.3, 2.9, 1.6, 0.95, 0.48],
    "C": [4.7, 4.7, 4.5, 3.8, 2.6, 1.7, 1.2, 0.8, 0.5],
    "O": [3.8, 3.8, 3.7, 3.4, 3.5, 1.8, 1.0, 1.0, 0.8],
    "Al": [1.5, 1.5, 3.0, 2.5, 2.0, 1.8, 1.2, 1.0, 0.9],
    "Si": [2.0, 2.0, 2.2, 3.0, 2.4, 2.0, 1.5, 1.0, 0.8],
    "Fe": [11.0, 9.0, 3.0, 2.8, 2.8, 2.6, 2.3, 1.3, 1.2],
    "Ni": [14.0, 12.0, 4.0, 3.3, 3.0, 2.7, 2.3, 1.4, 1.2],
    "Cu": [7.0, 7.5, 5.5, 4.3, 3.1, 2.7, 2.3, 1.7, 1.3],
    "Pb": [11.0, 11.0, 10.0, 8.0, 5.0, 5.0, 5.5, 2.8, 2.7],
}

# name: density, note, {element: mass fraction}, dominant nucleus mass number
MATERIALS = {
    "silicon": (2.33, "high-resistivity silicon substrate", {"Si": 1.0}, 28),
    "copper": (8.96, "OFHC copper; gold plating neglected", {"Cu": 1.0}, 63.5),
    "lead": (11.35, "low-activity lead", {"Pb": 1.0}, 207.2),
    "aluminium": (2.70, "thermal shields", {"Al": 1.0}, 27.0),
    "steel": (7.90, "stainless steel, Cr folded into Fe", {"Fe": 0.72, "Ni": 0.28}, 56.0),
    "cryoperm": (8.70, "high-permeability Ni-Fe alloy", {"Ni": 0.80, "Fe": 0.20}, 58.7),
    "fr4": (1.85, "glass-epoxy laminate, hydrogen-dominated scattering",
            {"Si": 0.19, "O": 0.42, "C": 0.35, "H": 0.04}, 1.0),
}


def klein_nishina(e_kev):
    k = np.asarray(e_kev, dtype=float) / ME
    l = np.log1p(2 * k)
    return 2 * np.pi * R_E**2 * ((1 + k) / k**2 * (2 * (1 + k) / (1 + 2 * k) - l / k)
                                 + l / (2 * k) - (1 + 3 * k) / (1 + 2 * k) ** 2)


def z_over_a(fracs):
    return sum(w * ELEMENTS_ALL[el][0] / ELEMENTS_ALL[el][1] for el, w in fracs.items())


ELEMENTS_ALL = dict(ELEMENTS, Pb=PB)


def attenuation_rows(fracs):
    if "Pb" in fracs:
        grid = np.array(PB_GRID, dtype=float)
        mu = np.array(PB[3])
    else:
        grid = np.array(GRID, dtype=float)
        mu = sum(w * np.array(ELEMENTS[el][3]) for el, w in fracs.items())
    inc = klein_nishina(grid) * N_A * z_over_a(fracs)
    photo = np.clip(1.0 - inc / mu, 0.0, 1.0)
    return grid, mu, photo


def mean_excitation(fracs):
    num = sum(w * ELEMENTS_ALL[el][0] / ELEMENTS_ALL[el][1] * np.log(ELEMENTS_ALL[el][2])
              for el, w in fracs.items())
    return np.exp(num / z_over_a(fracs))


def electron_stopping(fracs, t_kev):
    """Total mass stopping power in MeV cm2/g."""
    za = z_over_a(fracs)
    i_ratio = mean_excitation(fracs) * 1e-3 / ME
    tau = t_kev / ME
    beta2 = 1 - 1 / (1 + tau) ** 2
    f = 1 - beta2 + (tau**2 / 8 - (2 * tau + 1) * np.log(2)) / (tau + 1) ** 2
    col = 0.153536 * za / beta2 * (np.log(tau**2 * (tau + 2) / (2 * i_ratio**2)) + f)
    zeff = sum(w * ELEMENTS_ALL[el][0] for el, w in fracs.items())
    return col * (1 + (t_kev + ME) * 1e-3 * zeff / 700.0)


def electron_rows(fracs):
    grid = np.geomspace(10, 10000, 31)
    s = electron_stopping(fracs, grid)
    # below 10 keV assume R ~ E^1.7
    r0 = 10.0 / (1.7 * electron_stopping(fracs, np.array([10.0]))[0] * 1e3)
    ranges = [r0 + integrate.quad(lambda e: 1e-3 / electron_stopping(fracs, np.array([e]))[0],
                                  10.0, e_hi, limit=200)[0] for e_hi in grid]
    return grid, s, np.array(ranges)


def alpha_rows(fracs):
    grid = np.geomspace(100, 10000, 21)
    r_air = 0.318 * (grid * 1e-3) ** 1.5  # cm of air
    a_eff = 1.0 / sum(w / np.cbrt(ELEMENTS_ALL[el][1]) for el, w in fracs.items())
    return grid, 0.56e-3 * a_eff * r_air  # g/cm2


def neutron_rows(fracs, density):
    sig = sum(w / ELEMENTS_ALL[el][1] * np.array(NEUTRON_SIGMA[el]) for el, w in fracs.items())
    return np.array(NEUTRON_E, float), sig * 1e-24 * N_A * density


def fmt(x):
    return format(float(x), ".6g")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    lines = ["# bundled material list; vacuum is built in and not listed",
             "name density_g_cm3 note"]
    att = ["# mass attenuation (coherent included) and absorption fraction",
           "material energy_keV mu_rho_cm2_g photo_fraction"]
    mu = ["# muon mass stopping power", "material energy_keV dedx_MeV_cm2_g"]
    el = ["# electron total mass stopping power and CSDA range",
          "material energy_keV dedx_MeV_cm2_g csda_g_cm2"]
    al = ["# alpha CSDA range", "material energy_keV csda_g_cm2"]
    nt = ["# macroscopic elastic cross-section and dominant nucleus",
          "material mass_number energy_keV sigma_per_cm"]
    for name, (rho, note, fracs, a_dom) in MATERIALS.items():
        lines.append(f"{name} {fmt(rho)} {note.replace(' ', '_')}")
        for e, m, p in zip(*attenuation_rows(fracs)):
            att.append(f"{name} {fmt(e)} {fmt(m)} {fmt(p)}")
        mmin = sum(w * MUON_MIN[e] for e, w in fracs.items())
        for e, s in zip(MUON_E, MUON_SHAPE):
            mu.append(f"{name} {fmt(e)} {fmt(mmin / 1.664 * 1.66 * s)}")
        for e, s, r in zip(*electron_rows(fracs)):
            el.append(f"{name} {fmt(e)} {fmt(s)} {fmt(r)}")
        for e, r in zip(*alpha_rows(fracs)):
            al.append(f"{name} {fmt(e)} {fmt(r)}")
        for e, s in zip(*neutron_rows(fracs, rho)):
            nt.append(f"{name} {fmt(a_dom)} {fmt(e)} {fmt(s)}")
    for fname, rows in [("materials.txt", lines), ("attenuation.txt", att),
                        ("stopping_muon.txt", mu), ("stopping_electron.txt", el),
                        ("stopping_alpha.txt", al), ("neutron.txt", nt)]:
        (OUT / fname).write_text("\n".join(rows) + "\n")
        print("wrote", OUT / fname, len(rows) - 2, "rows")


if __name__ == "__main__":
    main()
