import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qubitrad import core_data, rng
from qubitrad.core_data import DataError


def test_bundled_library_complete(library):
    names = list(library.materials) + [core_data.VACUUM]
    assert library.check_complete(names) == []


def test_density_values(library):
    assert library.density("silicon") == 2.33
    assert library.density("lead") == 11.35
    assert library.density("vacuum") == 0.0


def test_attenuation_node_values(library):
    # table nodes are returned exactly
    assert library.attenuation_coefficient("silicon", 100.0) == pytest.approx(0.1835, rel=1e-12)
    assert library.attenuation_coefficient("silicon", 1000.0) == pytest.approx(0.06361, rel=1e-12)


def test_attenuation_loglog_midpoint(library):
    # log-log interpolation between 100 and 150 keV: geometric-mean oracle
    e = math.sqrt(100.0 * 150.0)
    want = math.sqrt(0.1835 * 0.1448)
    assert library.attenuation_coefficient("silicon", e) == pytest.approx(want, rel=1e-12)


def test_attenuation_out_of_range(library):
    with pytest.raises(ValueError):
        library.attenuation_coefficient("silicon", 5.0)


def test_unknown_material(library):
    with pytest.raises(KeyError, match="unknown material"):
        library.material("unobtainium")


def test_muon_dedx_node(library):
    t = library.muon["silicon"]
    # 1.66 MeV cm2/g at 4 GeV times 2.33 g/cm3
    assert t.dedx_per_cm(4.0e6) == pytest.approx(1000.0 * 1.66 * 2.33, rel=1e-12)


def test_malformed_table_reports_line(tmp_path):
    p = tmp_path / "materials.txt"
    p.write_text("name density\nsilicon 2.33\ncopper abc\n")
    with pytest.raises(DataError, match=r"materials.txt:3"):
        core_data.load_materials(p)


def test_negative_density_rejected(tmp_path):
    p = tmp_path / "materials.txt"
    p.write_text("name density\nsilicon -1\n")
    with pytest.raises(DataError, match="positive"):
        core_data.load_materials(p)


def test_non_monotone_grid_rejected(tmp_path):
    p = tmp_path / "att.txt"
    rows = [f"silicon {e} 1 0.5" for e in (10, 20, 15, 40, 50, 60, 70, 80, 90, 10000)]
    p.write_text("material energy mu pe\n" + "\n".join(rows) + "\n")
    with pytest.raises(DataError, match="non-monotone"):
        core_data.load_attenuation(p)


def test_short_attenuation_grid_rejected(tmp_path):
    p = tmp_path / "att.txt"
    p.write_text("material energy mu pe\nsilicon 10 1 0.5\nsilicon 10000 0.1 0.1\n")
    with pytest.raises(DataError, match="10 keV to 10 MeV"):
        core_data.load_attenuation(p)


def test_library_serialization_round_trip(library, tmp_path):
    (tmp_path / "materials.txt").write_text(core_data.serialize_materials(library.materials))
    (tmp_path / "attenuation.txt").write_text(core_data.serialize_attenuation(library.attenuation))
    for sp in ("muon", "electron", "alpha"):
        (tmp_path / f"stopping_{sp}.txt").write_text(core_data.serialize_stopping(getattr(library, sp), sp))
    (tmp_path / "neutron.txt").write_text(core_data.serialize_neutron(library.neutron))
    again = core_data.load_library(tmp_path)
    assert again.materials == library.materials
    for m, t in library.attenuation.items():
        assert np.array_equal(again.attenuation[m].mu_rho, t.mu_rho)
        assert np.array_equal(again.attenuation[m].photo_fraction, t.photo_fraction)
    for m, t in library.neutron.items():
        assert np.array_equal(again.neutron[m].sigma, t.sigma)


# ------------------------------------------------------------ radioassay

def test_pcb_activities_match_table():
    tab = core_data.load_radioassay(core_data.DATA_DIR / "radioassay.csv")
    th = tab.lookup("A", "Th-232 chain")
    assert (th.kind, th.value, th.sigma) == ("measured", 18000.0, 1000.0)
    u = tab.lookup("A", "U-238 chain")
    assert (u.value, u.sigma) == (11500.0, 400.0)
    assert tab.lookup("A", "U-235 chain").value == 710.0
    assert tab.lookup("A", "K-40").value == 12000.0
    cs = tab.lookup("A", "Cs-137")
    assert cs.is_limit and cs.upper90 == 30.0


def test_box_natural_chains_are_limits():
    tab = core_data.load_radioassay(core_data.DATA_DIR / "radioassay.csv")
    natural = ("Th-232 chain", "U-238 chain", "U-235 chain", "K-40", "Cs-137")
    assert all(tab.lookup("B", iso).is_limit for iso in natural)
    assert tab.lookup("B", "Th-232 chain").value == 1.5


@pytest.mark.parametrize("text, want", [
    ("18000 ± 1000", ("measured", 18000.0, 1000.0)),
    ("(46 ± 13)", ("measured", 46.0, 13.0)),
    ("5 +/- 1", ("measured", 5.0, 1.0)),
    ("<30", ("limit", 30.0, 0.0)),
    ("< 0.6", ("limit", 0.6, 0.0)),
])
def test_parse_activity(text, want):
    assert core_data.parse_activity(text) == want


def test_malformed_activity_reports_line(tmp_path):
    p = tmp_path / "ra.csv"
    p.write_text("component,isotope,activity\nA,K-40,12000 ± 1000\nA,Cs-137,about 3\n")
    with pytest.raises(DataError, match=r"ra.csv:3.*malformed numeric"):
        core_data.load_radioassay(p)


def test_unknown_isotope_and_component(tmp_path):
    p = tmp_path / "ra.csv"
    p.write_text("component,isotope,activity\nA,Xx-999,<1\n")
    with pytest.raises(DataError, match="unknown isotope"):
        core_data.load_radioassay(p)
    p.write_text("component,isotope,activity\nZ,K-40,<1\n")
    with pytest.raises(DataError, match="unknown component"):
        core_data.load_radioassay(p)


def test_radioassay_round_trip(tmp_path):
    tab = core_data.load_radioassay(core_data.DATA_DIR / "radioassay.csv")
    p = tmp_path / "ra.csv"
    p.write_text(tab.to_csv())
    assert core_data.load_radioassay(p) == tab


@given(st.floats(1e-3, 1e6), st.floats(0, 1e5))
def test_activity_render_parse(v, s):
    e = core_data.ActivityEntry("A", "K-40", "measured", v, s)
    kind, v2, s2 = core_data.parse_activity(e.render())
    assert (kind, v2, s2) == ("measured", v, s)


# ------------------------------------------------------------ components

def test_component_masses_match_description():
    comps = core_data.load_components(core_data.DATA_DIR / "components.csv")
    assert comps["A"].mass == 0.007
    assert comps["M"].mass == 0.017
    assert comps["A"].volume == "pcb"
    assert comps["E"].mass is None and comps["E"].estimate
    assert comps["B*"].assay == "B"


def test_duplicate_component_rejected(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("id,description,mass_kg,volume,assay,estimate\nA,PCB,1,pcb,A,no\nA,PCB,1,pcb,A,no\n")
    with pytest.raises(DataError, match="duplicate"):
        core_data.load_components(p)


# ---------------------------------------------------------- decay schemes

def test_chain_expansion(nuclides):
    ch = nuclides.get("Th-232 chain")
    assert ch.is_chain
    names = [s.name for s, _ in ch.members]
    assert names[0] == "Th-232" and "Tl-208" in names
    w = dict((s.name, w) for s, w in ch.members)
    assert w["Tl-208"] + w["Po-212"] == pytest.approx(1.0)


def test_bad_intensity_rejected():
    with pytest.raises(DataError, match="intensity"):
        core_data.parse_decay_scheme("kind energy intensity\ngamma 100 1.5\n", "X")
    with pytest.raises(DataError, match="sum to"):
        core_data.parse_decay_scheme("kind energy intensity\nbeta 100 0.7\nalpha 4000 0.7\n", "X")


def test_k40_emission_frequencies(nuclides):
    ch = nuclides.get("K-40")
    em = core_data.compile_emitter(ch)
    n = 200_000
    sp = np.empty(8, dtype=np.int64)
    en = np.empty(8)
    dirs = np.empty((8, 3))
    ng = nb = 0
    for ev in range(n):
        k = core_data.emit(*em, rng.make_stream(3, 1, ev), sp, en, dirs, 0)
        ng += int(np.sum(sp[:k] == 0))
        nb += int(np.sum(sp[:k] == 3))
    # binomial 5 sigma around the tabulated intensities
    for count, p in ((ng, 0.1066), (nb, 0.8928)):
        assert abs(count / n - p) < 5 * math.sqrt(p * (1 - p) / n)


def test_beta_energies_below_endpoint(nuclides):
    scheme = nuclides.get("K-40").members[0][0]
    s = rng.make_stream(11)
    for _ in range(2000):
        for p in core_data.decay_emissions(scheme, s):
            if p.species == "electron":
                assert 0 < p.energy <= 1311.1
            else:
                assert p.energy == 1460.8


def test_beta_spectrum_mean(nuclides):
    # allowed-shape mean by direct quadrature of p E (Q - T)^2
    q = 1311.1
    t = np.linspace(0, q, 200001)
    e = t + 511.0
    pdf = np.sqrt(e * e - 511.0 ** 2) * e * (q - t) ** 2
    want = np.trapezoid(t * pdf, t) / np.trapezoid(pdf, t)
    inv = core_data._beta_inverse_cdf(q)
    got = np.trapezoid(inv, np.linspace(0, 1, inv.size))
    assert got == pytest.approx(want, rel=2e-3)
