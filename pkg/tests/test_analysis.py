import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qubitrad.analysis import (DEFAULT_EDGES, POISSON90_ZERO, NormalizationSpec, RateResult, UndefinedTimeError,
                               build_rate_table, build_spectrum, combine_results, equivalent_time,
                               probability_in_window, rate_from_tally, sum_spectra, suppression_factor)
from qubitrad.core_data import ActivityEntry
from qubitrad.transport import Tally

TH_PCB = ActivityEntry("A", "Th-232 chain", "measured", 18000.0, 1000.0)
CS_LIMIT = ActivityEntry("A", "Cs-137", "limit", 30.0, 0.0)


def _flux_norm(n_gen, t_eq, sigma=0.0):
    # area 1 cm2 and flux n_gen / t_eq give exactly t_eq seconds
    return NormalizationSpec.from_flux(n_gen, 1.0, n_gen / t_eq, flux_sigma=sigma * n_gen / t_eq)


def test_t_eq_flux_example():
    assert equivalent_time(NormalizationSpec.from_flux(10 ** 7, 1e4, 2.5)) == pytest.approx(400.0, rel=1e-15)


def test_t_eq_activity_example():
    t = equivalent_time(NormalizationSpec.from_activity(10 ** 6, 0.007, TH_PCB))
    assert t == pytest.approx(1e6 / 0.126, rel=1e-12)
    assert t == pytest.approx(7.94e6, rel=1e-3)


def test_t_eq_zero_events():
    n = NormalizationSpec.from_flux(0, 10.0, 1.0)
    assert equivalent_time(n) == 0.0
    assert rate_from_tally(Tally.empty(0), n).undefined


def test_zero_flux_undefined():
    with pytest.raises(UndefinedTimeError):
        equivalent_time(NormalizationSpec.from_flux(10, 10.0, 0.0))


@pytest.mark.parametrize("kw", [dict(area=0.0, flux=1.0), dict(area=-1.0, flux=1.0)])
def test_invalid_normalization(kw):
    with pytest.raises(ValueError):
        NormalizationSpec.from_flux(10, **kw)


def test_zero_hits_upper_bound():
    r = rate_from_tally(Tally.from_deposits([], 1000), _flux_norm(1000, 1e4))
    assert r.rate == 0.0 and r.stat == 0.0
    assert r.upper90 == pytest.approx(math.log(10.0) / 1e4 * 1000.0, rel=1e-15)
    assert POISSON90_ZERO == pytest.approx(2.302585, rel=1e-6)
    assert r.render().startswith("0 (<")


def test_hundred_hits_example():
    r = rate_from_tally(Tally.from_deposits(np.full(100, 50.0), 10 ** 6), _flux_norm(10 ** 6, 1e4))
    assert r.rate == pytest.approx(10.0, rel=1e-12)
    assert r.stat == pytest.approx(1.0, rel=1e-12)


def test_flux_systematic_propagates_linearly():
    r = rate_from_tally(Tally.from_deposits(np.full(100, 50.0), 10 ** 6), _flux_norm(10 ** 6, 1e4, sigma=0.2))
    assert r.syst == pytest.approx(0.2 * r.rate, rel=1e-12)


def test_limit_gives_interval():
    n = NormalizationSpec.from_activity(10 ** 6, 0.007, CS_LIMIT)
    r = rate_from_tally(Tally.from_deposits(np.full(40, 300.0), 10 ** 6), n)
    assert r.rate is None and r.lo == 0.0
    assert r.hi == pytest.approx(40 / equivalent_time(n) * 1000.0, rel=1e-12)
    assert r.render().startswith("<")


def test_n_gen_mismatch():
    with pytest.raises(ValueError, match="does not match"):
        rate_from_tally(Tally.from_deposits([5.0], 10), _flux_norm(11, 1.0))


@given(st.integers(0, 10 ** 5), st.floats(1e-3, 1e3))
@settings(max_examples=100, deadline=None)
def test_rate_linear_in_flux(hits, k):
    t = Tally.from_deposits(np.full(hits, 20.0), 10 ** 6)
    a = rate_from_tally(t, NormalizationSpec.from_flux(10 ** 6, 50.0, 2.0))
    b = rate_from_tally(t, NormalizationSpec.from_flux(10 ** 6, 50.0, 2.0 * k))
    assert b.rate == pytest.approx(a.rate * k, rel=1e-12, abs=0.0)


def test_rate_linear_in_activity():
    t = Tally.from_deposits(np.full(77, 20.0), 10 ** 6)
    a = rate_from_tally(t, NormalizationSpec.from_activity(10 ** 6, 0.007, TH_PCB))
    b = rate_from_tally(t, NormalizationSpec.from_activity(
        10 ** 6, 0.007, ActivityEntry("A", "Th-232 chain", "measured", 3 * 18000.0, 1000.0)))
    assert b.rate == pytest.approx(3 * a.rate, rel=1e-14)


def test_normalization_invariance_over_seeds():
    g = np.random.default_rng(5)
    p = 0.01
    ra, rb = [], []
    for _ in range(200):
        for n, out in ((10 ** 5, ra), (2 * 10 ** 5, rb)):
            hits = g.binomial(n, p)
            out.append(rate_from_tally(Tally.from_deposits(np.full(hits, 5.0), n), _flux_norm(n, n / 10.0)).rate)
    ra, rb = np.array(ra), np.array(rb)
    assert abs(ra.mean() - rb.mean()) < 3 * math.sqrt(ra.var() / ra.size + rb.var() / rb.size)


# ---------------------------------------------------------- suppression

def test_suppression_examples():
    assert suppression_factor(5.0, 5.0)[0] == 1.0
    r, s = suppression_factor((18.0, 1.8), (0.18, 0.018))
    assert r == pytest.approx(100.0, rel=1e-12)
    assert s == pytest.approx(100.0 * math.sqrt(0.02), rel=1e-12)
    with pytest.raises(ZeroDivisionError):
        suppression_factor(1.0, 0.0)


def test_suppression_rejects_interval():
    with pytest.raises(ValueError, match="interval"):
        suppression_factor(RateResult("x", None, lo=0.0, hi=1.0), 1.0)


# --------------------------------------------------------------- tables

def test_table_order_and_rendering():
    rows = [RateResult("neutron", 0.15, 0.05), RateResult("gamma", 18.0, 4.0), RateResult("muon", 10.0, 0.6),
            RateResult("box", None, lo=0.001, hi=0.006)]
    t = build_rate_table(rows)
    assert [r.label for r in t.rows] == ["gamma", "muon", "neutron", "box"]
    text = t.to_text()
    assert "18 ± 4" in text and "[0.001 – 0.006]" in text
    csv = t.to_csv().splitlines()
    assert csv[0].startswith("source,kind,rate_mHz") and len(csv) == 5
    assert csv[4].split(",")[1] == "interval"


def test_empty_table_has_header():
    t = build_rate_table([])
    assert t.to_csv().strip().split(",")[0] == "source"
    assert t.to_text().startswith("Source")


def test_combine_measured_and_limits():
    m = RateResult("a", 2.0, 0.3, 0.4)
    lim = RateResult("b", None, lo=0.0, hi=0.5)
    c = combine_results("A", [m, RateResult("c", 1.0, 0.4, 0.3), lim])
    assert c.rate is None and c.lo == 3.0 and c.hi == 3.5
    c = combine_results("A", [m, RateResult("b", None, lo=0.0, hi=0.01)])
    assert c.rate == 2.0 and c.hi == 2.01


def test_probability_in_window():
    # 4 mHz over one second
    assert probability_in_window(4.0) == pytest.approx(1 - math.exp(-0.004), rel=1e-15)
    assert probability_in_window(4.0) == pytest.approx(0.004, rel=0.01)


# -------------------------------------------------------------- spectra

def test_single_bin_spectrum():
    t = Tally.from_deposits(np.full(300, 125.7), 10 ** 6)
    norm = _flux_norm(10 ** 6, 1e4)
    s = build_spectrum(t, norm)
    nz = np.flatnonzero(s.density)
    assert nz.tolist() == [12]
    assert s.edges[12] <= 125.7 < s.edges[13]
    assert s.integral() == pytest.approx(rate_from_tally(t, norm).rate, rel=1e-9)


@given(st.lists(st.floats(1.5, 4000.0), max_size=200), st.lists(st.floats(1.5, 4000.0), max_size=200))
@settings(max_examples=50, deadline=None)
def test_spectrum_linearity_and_total(a, b):
    norm = _flux_norm(10 ** 4, 100.0)
    ta, tb = Tally.from_deposits(a, 10 ** 4), Tally.from_deposits(b, 10 ** 4)
    merged = Tally(ta.edges, ta.counts + tb.counts, ta.n_hits + tb.n_hits, 10 ** 4)
    s = sum_spectra([build_spectrum(ta, norm), build_spectrum(tb, norm)])
    m = build_spectrum(merged, norm)
    assert np.allclose(s.density, m.density, rtol=1e-12, atol=0) and s.overflow == pytest.approx(m.overflow)
    assert np.all(m.density >= 0)
    assert m.integral() == pytest.approx(len(a + b) / 100.0 * 1000.0, rel=1e-9)


def test_spectrum_difference_and_incompatible():
    norm = _flux_norm(100, 10.0)
    a = build_spectrum(Tally.from_deposits([50.0, 60.0], 100), norm)
    b = build_spectrum(Tally.from_deposits([50.0], 100), norm)
    assert (a - b).integral() == pytest.approx(100.0, rel=1e-12)
    c = build_spectrum(Tally.from_deposits([50.0], 100), norm, binning=np.arange(0.0, 3001.0, 100.0))
    with pytest.raises(ValueError, match="incompatible"):
        a + c


def test_coarse_binning_keeps_total():
    t = Tally.from_deposits(np.linspace(2.0, 3500.0, 777), 1000)
    norm = _flux_norm(1000, 5.0)
    fine = build_spectrum(t, norm)
    coarse = build_spectrum(t, norm, binning=np.arange(0.0, 3001.0, 100.0))
    assert coarse.integral() == pytest.approx(fine.integral(), rel=1e-12)
    with pytest.raises(ValueError, match="incompatible"):
        build_spectrum(t, norm, binning=[0.0, 15.0, 30.0])


def test_tally_invariants():
    t = Tally.from_deposits([0.5, 2.0, 50.0, 5000.0], 10)
    assert t.n_hits == 3 == t.counts.sum()
    assert t.counts[-1] == 1 and len(t.counts) == len(DEFAULT_EDGES)
    with pytest.raises(ValueError):
        Tally.from_deposits([5.0, 6.0], 1)
