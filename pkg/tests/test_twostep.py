import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qubitrad.analysis import NormalizationSpec, equivalent_time, rate_from_tally
from qubitrad.geometry import SurfaceDef
from qubitrad.sources import EnergyHistogram, SurfaceFlux, sample_batch
from qubitrad.transport import CrossingRecord
from qubitrad.twostep import (CrossingBinning, CrossingDistributions, StarvationError, build_crossing_distributions,
                              compute_flux2, parse_distributions, replay_spec, run_replay, run_two_step)

from conftest import make_model, physics_for

S1 = SurfaceDef("S1", 20.0, 20.0)
S2 = SurfaceDef("S2", 8.0, 5.0)
# an empty world: the active speck sits far outside S1
EMPTY = "volume speck box 1 1 1 silicon world 1000 0 0 active\n"
# silicon block inside S2 used as a cheap second-pass target
BLOCK = "volume block box 10 10 10 silicon world 0 0 0 active\n"


def _dist(energies, thetas, n_gen=1000, flux1=2.0, surface=S2, edges=None):
    recs = [CrossingRecord(e, t) for e, t in zip(energies, thetas)]
    cfg = CrossingBinning(np.asarray(edges if edges is not None else np.arange(0.0, 1010.0, 10.0)))
    return build_crossing_distributions(recs, cfg, n_gen=n_gen, area1=S1.area, flux1=flux1, surface=surface)


@pytest.fixture(scope="module")
def transparent(library):
    model = make_model(EMPTY)
    phys = physics_for(model, library)
    spec = SurfaceFlux(S1, EnergyHistogram([100.0, 1000.0], [1.0]), 1.0)
    return run_two_step(model, phys, spec, S2, 200_000, 10, seed=3, label="pass-through")


def test_starvation_error():
    with pytest.raises(StarvationError, match="S2 starved; increase first-pass statistics"):
        _dist([], [])


def test_monoenergetic_single_bin():
    d = _dist([661.7] * 50, np.linspace(0.1, 3.0, 50))
    assert np.count_nonzero(d.energy_counts) == 1 and d.n_crossings == 50


def test_theta_histogram_matches_isotropic_field(transparent):
    from scipy import integrate, stats

    d = transparent.distributions
    al = 2 * math.pi * S2.radius * 2 * S2.half_height
    ac = math.pi * S2.radius ** 2
    pdf = lambda t: (al * 2 / math.pi * math.sin(t) ** 2 + 2 * ac * abs(math.cos(t)) * math.sin(t)) / (al + 2 * ac)
    edges = d.theta_edges[::10]
    counts = d.theta_counts.reshape(-1, 10).sum(axis=1)
    p = np.array([integrate.quad(pdf, a, b)[0] for a, b in zip(edges[:-1], edges[1:])])
    assert p.sum() == pytest.approx(1.0, rel=1e-9)
    assert stats.chisquare(counts, p * counts.sum()).pvalue > 1e-3


def test_transparent_flux_conserved(transparent):
    f = transparent.flux2
    assert abs(f.value - 1.0) < 3 * f.sigma


def test_forced_zero_crossings_zero_flux():
    z = np.zeros(3, dtype=np.int64)
    d = CrossingDistributions(np.array([0.0, 1, 2, 3]), z, np.array([0.0, 1, 2, 3]), z, np.zeros((3, 3), np.int64),
                              0, 100, 10.0, 1.0, 0.0, S2)
    assert compute_flux2(d).value == 0.0


def test_halving_area_doubles_flux2():
    d = _dist([100.0] * 40, [1.0] * 40, surface=SurfaceDef("A", 1.0, 1.0))
    half = dataclasses.replace(d, surface=SurfaceDef("B", 1.0, 0.25))
    assert half.area2 == pytest.approx(d.area2 / 2, rel=1e-15)
    assert compute_flux2(half).value == pytest.approx(2 * compute_flux2(d).value, rel=1e-14)


def test_flux2_formula():
    d = _dist([100.0] * 40, [1.0] * 40, n_gen=1000, flux1=2.0)
    t1 = 1000 / (S1.area * 2.0)
    assert compute_flux2(d).value == pytest.approx(40 / (S2.area * t1), rel=1e-14)
    assert compute_flux2(d).sigma == pytest.approx(math.sqrt(40) / (S2.area * t1), rel=1e-14)


@given(st.integers(1, 10 ** 9), st.floats(1e-2, 1e6), st.floats(1e-6, 1e3))
@settings(max_examples=300, deadline=None)
def test_t_eq_identity(n2, a2, flux2):
    t = equivalent_time(NormalizationSpec.from_flux(n2, a2, flux2))
    assert t == n2 / (a2 * flux2)
    assert t * a2 * flux2 == pytest.approx(n2, rel=4e-16)


def test_text_round_trip():
    d = _dist([15.0, 250.0, 250.0, 999.0], [0.1, 1.0, 2.0, 3.1], flux1=2.5)
    d = dataclasses.replace(d, flux1_sigma=0.5)
    e = parse_distributions(d.to_text())
    assert e.to_text() == d.to_text()
    assert np.array_equal(e.joint_counts, d.joint_counts) and e.surface == d.surface


def test_malformed_text():
    with pytest.raises(ValueError, match="malformed"):
        parse_distributions("n_gen 5\n")


def test_n2_zero_undefined(library):
    model = make_model(BLOCK)
    res = run_replay(_dist([100.0] * 5, [1.0] * 5), model, physics_for(model, library), 0, 1, "x")
    assert res.undefined and res.t_eq == 0.0 and res.tally.n_hits == 0
    assert rate_from_tally(res.tally, res.normalization).undefined


def test_flux_scaling_is_exact(library):
    model = make_model(BLOCK)
    phys = physics_for(model, library)
    g = np.random.default_rng(1)
    d = _dist(g.uniform(50, 1000, 500), g.uniform(0, math.pi, 500))
    a = run_replay(d, model, phys, 5000, 7, "k")
    b = run_replay(d.scaled_flux(3.0), model, phys, 5000, 7, "k")
    assert np.array_equal(a.tally.counts, b.tally.counts)
    assert b.flux2.value == pytest.approx(3 * a.flux2.value, rel=1e-14)
    ra = rate_from_tally(a.tally, a.normalization)
    rb = rate_from_tally(b.tally, b.normalization)
    assert rb.rate == pytest.approx(3 * ra.rate, rel=1e-14)


def test_doubling_n2_halves_variance(library):
    from scipy import stats

    model = make_model(BLOCK)
    phys = physics_for(model, library)
    g = np.random.default_rng(2)
    d = _dist(g.uniform(50, 1000, 500), g.uniform(0, math.pi, 500))
    rates = {}
    for n2 in (4000, 8000):
        rates[n2] = np.array([rate_from_tally((r := run_replay(d, model, phys, n2, s, "v")).tally,
                                              r.normalization).rate for s in range(20)])
    a, b = rates[4000], rates[8000]
    assert abs(a.mean() - b.mean()) < 3 * math.sqrt(a.var(ddof=1) / 20 + b.var(ddof=1) / 20)
    f = stats.f.ppf(0.999, 19, 19)
    assert 2 / f < a.var(ddof=1) / b.var(ddof=1) < 2 * f


def test_joint_mode_keeps_correlation():
    # energy bin k always comes with theta bin k: marginal resampling loses this, joint mode keeps it
    ee = np.linspace(0.0, 1000.0, 11)
    te = np.linspace(0.0, math.pi, 11)
    e = np.repeat(ee[:-1] + 50.0, 30)
    t = np.repeat(te[:-1] + math.pi / 20, 30)
    d = build_crossing_distributions([CrossingRecord(a, b) for a, b in zip(e, t)], CrossingBinning(ee, te),
                                     n_gen=100, area1=S1.area, flux1=1.0, surface=S2)
    for mode, want in (("joint", True), ("marginal", False)):
        b = sample_batch(replay_spec(d, mode=mode), 20_000, seed=4)
        th = np.arccos(np.clip(b.direction[:, 2], -1, 1))
        same = np.digitize(b.energy, ee) == np.digitize(th, te)
        assert (same.mean() == 1.0) == want
        if not want:
            assert abs(same.mean() - 0.1) < 0.01
